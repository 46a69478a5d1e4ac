import { ApiClient } from "./api.js";
import { apiBaseUrl } from "./config.js";
import { ChatWidget } from "./widget.js";

const root = document.getElementById("app");
if (root) {
  const widget = new ChatWidget(root, new ApiClient(apiBaseUrl()));
  void widget.init();
}

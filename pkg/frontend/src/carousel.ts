/** Recommendation slate rendering: a horizontal carousel of cards.
 *
 * Card content is exactly what the server sent (summary text, detail
 * fields); nothing is synthesized client-side.
 */

import type { ApiClient } from "./api.js";
import type { SlateWire } from "./types.js";
import type { VisibilityTracker } from "./visibility.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderSlate(
  slate: SlateWire,
  api: ApiClient,
  tracker?: VisibilityTracker,
): HTMLElement {
  const carousel = el("div", "crs-carousel");
  carousel.setAttribute("data-testid", "carousel");
  for (const card of slate.cards) {
    const cardEl = el("article", "crs-card");
    cardEl.setAttribute("data-card-id", card.event_id);
    cardEl.appendChild(el("p", "crs-card-summary", card.summary));

    const detailButton = el("button", "crs-card-detail-btn", "More details");
    detailButton.type = "button";
    const detailPane = el("div", "crs-card-detail");
    detailPane.hidden = true;
    detailButton.addEventListener("click", async () => {
      if (!detailPane.hidden) {
        detailPane.hidden = true;
        return;
      }
      if (!detailPane.hasChildNodes()) {
        try {
          const detail = await api.getEvent(card.event_id);
          detailPane.appendChild(el("h4", "crs-detail-title", detail.title));
          detailPane.appendChild(el("p", "crs-detail-line", `Starts: ${detail.start_time}`));
          if (detail.end_time) {
            detailPane.appendChild(el("p", "crs-detail-line", `Ends: ${detail.end_time}`));
          }
          detailPane.appendChild(el("p", "crs-detail-line", `Category: ${detail.category}`));
          if (detail.price !== undefined) {
            detailPane.appendChild(
              el("p", "crs-detail-line", `Price: ${detail.price} ${detail.currency ?? ""}`.trim()),
            );
          }
          if (detail.venue_name) {
            detailPane.appendChild(el("p", "crs-detail-line", `Venue: ${detail.venue_name}`));
          }
          if (detail.city_area) {
            detailPane.appendChild(el("p", "crs-detail-line", `Area: ${detail.city_area}`));
          }
          if (detail.description) {
            detailPane.appendChild(el("p", "crs-detail-desc", detail.description));
          }
          if (detail.source_url) {
            const link = el("a", "crs-detail-link", "Event page");
            link.setAttribute("href", detail.source_url);
            link.setAttribute("target", "_blank");
            link.setAttribute("rel", "noopener");
            detailPane.appendChild(link);
          }
        } catch {
          detailPane.appendChild(el("p", "crs-detail-error", "Details are unavailable right now."));
        }
      }
      detailPane.hidden = false;
    });

    cardEl.appendChild(detailButton);
    cardEl.appendChild(detailPane);
    carousel.appendChild(cardEl);
    tracker?.observe(cardEl, card.event_id);
  }
  return carousel;
}

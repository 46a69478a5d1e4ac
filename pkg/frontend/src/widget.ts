/** The chat widget: header with avatar and survey link, a top-left
 * time-window control, the message stream (case buttons appear inline
 * at session start, slates render as carousels), and the composer.
 * Input stays disabled while a turn is pending; a 409 from the server
 * shows a "still thinking" notice and re-enables input; a network
 * failure offers a retry.
 */

import { ApiError, type ApiClient } from "./api.js";
import { renderSlate } from "./carousel.js";
import { ChatStore, type ChatMessage } from "./state.js";
import { buildSurveyForm } from "./survey.js";
import type { CaseButton, TurnResponse, UserInputEventWire } from "./types.js";
import { VisibilityTracker } from "./visibility.js";

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

export interface WidgetOptions {
  language?: string;
  visibilityObserverFactory?: (
    callback: IntersectionObserverCallback,
    options: IntersectionObserverInit,
  ) => IntersectionObserver;
  visibilityDwellMs?: number;
}

export class ChatWidget {
  readonly store = new ChatStore();
  readonly tracker: VisibilityTracker;
  private readonly api: ApiClient;
  private readonly root: HTMLElement;
  private readonly options: WidgetOptions;
  private stream!: HTMLElement;
  private input!: HTMLInputElement;
  private sendButton!: HTMLButtonElement;
  private windowStart!: HTMLInputElement;
  private windowEnd!: HTMLInputElement;

  constructor(root: HTMLElement, api: ApiClient, options: WidgetOptions = {}) {
    this.root = root;
    this.api = api;
    this.options = options;
    this.tracker = new VisibilityTracker(
      (cardIds) => this.reportVisibility(cardIds),
      {
        dwellMs: options.visibilityDwellMs,
        observerFactory: options.visibilityObserverFactory,
      },
    );
  }

  async init(): Promise<void> {
    const session = await this.api.createSession(this.options.language ?? "en");
    this.store.startSession(session);
    this.renderShell();

    // anthropomorphic but honest: introduction plus the model disclosure
    this.appendAssistant({ role: "assistant", text: session.greeting });
    this.appendAssistant({ role: "notice", text: session.disclosure });
    this.renderCaseButtons(session.buttons);
  }

  private get sessionId(): string {
    const session = this.store.session;
    if (!session) throw new Error("widget not initialized");
    return session.session_id;
  }

  // -- rendering -------------------------------------------------------------

  private renderShell(): void {
    this.root.innerHTML = "";
    const widget = el("div", "crs-widget");

    const header = el("header", "crs-header");
    const windowControl = el("div", "crs-window-control"); // anchored top-left
    windowControl.setAttribute("data-testid", "window-control");
    this.windowStart = el("input");
    this.windowStart.type = "date";
    this.windowStart.setAttribute("data-testid", "window-start");
    this.windowEnd = el("input");
    this.windowEnd.type = "date";
    this.windowEnd.setAttribute("data-testid", "window-end");
    const windowApply = el("button", "crs-window-apply", "Set dates");
    windowApply.type = "button";
    windowApply.setAttribute("data-testid", "window-apply");
    windowApply.addEventListener("click", () => void this.applyWindow());
    windowControl.append(this.windowStart, this.windowEnd, windowApply);
    header.appendChild(windowControl);

    const identity = el("div", "crs-identity");
    const avatar = el("span", "crs-avatar", "☺");
    avatar.setAttribute("data-testid", "avatar");
    avatar.setAttribute("role", "img");
    avatar.setAttribute("aria-label", "assistant avatar");
    identity.appendChild(avatar);
    identity.appendChild(el("span", "crs-title", "Event Guide"));
    header.appendChild(identity);

    const surveyLink = el("a", "crs-survey-link", "Lottery");
    surveyLink.setAttribute("data-testid", "survey-link");
    surveyLink.setAttribute("href", "#survey");
    surveyLink.addEventListener("click", (event) => {
      event.preventDefault();
      this.openSurvey();
    });
    header.appendChild(surveyLink);
    widget.appendChild(header);

    this.stream = el("main", "crs-stream");
    this.stream.setAttribute("data-testid", "stream");
    widget.appendChild(this.stream);

    const composer = el("footer", "crs-composer");
    this.input = el("input", "crs-input");
    this.input.type = "text";
    this.input.placeholder = "Ask about events…";
    this.input.setAttribute("data-testid", "composer-input");
    this.sendButton = el("button", "crs-send", "Send");
    this.sendButton.type = "button";
    this.sendButton.setAttribute("data-testid", "composer-send");
    this.sendButton.addEventListener("click", () => void this.sendMessage());
    this.input.addEventListener("keydown", (event) => {
      if (event.key === "Enter") void this.sendMessage();
    });
    composer.append(this.input, this.sendButton);
    widget.appendChild(composer);

    this.root.appendChild(widget);
    this.store.subscribe(() => this.syncPendingState());
    this.syncPendingState();
  }

  private syncPendingState(): void {
    const pending = this.store.pendingTurn;
    this.input.disabled = pending;
    this.sendButton.disabled = pending;
  }

  private appendAssistant(message: ChatMessage): void {
    this.store.push(message);
    const bubble = el(
      "div",
      message.role === "notice" ? "crs-msg crs-msg-notice" : "crs-msg crs-msg-assistant",
    );
    bubble.appendChild(el("p", "crs-msg-text", message.text));
    if (message.slate && message.slate.cards.length > 0) {
      bubble.appendChild(renderSlate(message.slate, this.api, this.tracker));
    }
    this.stream.appendChild(bubble);
  }

  private appendUser(text: string): HTMLElement {
    this.store.push({ role: "user", text });
    const bubble = el("div", "crs-msg crs-msg-user");
    bubble.appendChild(el("p", "crs-msg-text", text));
    this.stream.appendChild(bubble);
    return bubble;
  }

  private renderCaseButtons(buttons: CaseButton[]): void {
    const row = el("div", "crs-case-buttons");
    row.setAttribute("data-testid", "case-buttons");
    for (const button of buttons) {
      const node = el("button", "crs-case-button", button.label);
      node.type = "button";
      node.setAttribute("data-choice", button.choice);
      node.addEventListener("click", () => void this.selectCase(button.choice));
      row.appendChild(node);
    }
    this.stream.appendChild(row);
  }

  // -- interactions ------------------------------------------------------------

  async sendMessage(text?: string): Promise<void> {
    const value = (text ?? this.input.value).trim();
    if (!value) return;
    if (!this.store.beginTurn()) return; // input is disabled while pending
    this.input.value = "";
    const userBubble = this.appendUser(value);
    await this.runTurn({ kind: "TextMessage", text: value }, userBubble, value);
  }

  async selectCase(choice: CaseButton["choice"]): Promise<void> {
    if (!this.store.beginTurn()) return;
    await this.runTurn({ kind: "CaseSelected", choice }, null, null);
  }

  private async runTurn(
    event: UserInputEventWire,
    userBubble: HTMLElement | null,
    retryText: string | null,
  ): Promise<void> {
    try {
      const result = await this.api.postTurn(this.sessionId, event);
      this.handleTurnResult(result);
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.appendAssistant({
          role: "notice",
          text: "Still thinking about your last message – one moment.",
        });
      } else if (retryText !== null && userBubble !== null) {
        this.offerRetry(userBubble, retryText);
      } else {
        this.appendAssistant({
          role: "notice",
          text: "Connection problem – please try again.",
        });
      }
    } finally {
      this.store.endTurn();
    }
  }

  private handleTurnResult(result: TurnResponse): void {
    this.store.setWindow(result.window);
    if (result.assistant_text) {
      this.appendAssistant({
        role: "assistant",
        text: result.assistant_text,
        slate: result.slate ?? undefined,
      });
    } else if (result.slate) {
      this.appendAssistant({ role: "assistant", text: "", slate: result.slate });
    }
  }

  private offerRetry(userBubble: HTMLElement, text: string): void {
    const retry = el("button", "crs-retry", "Retry");
    retry.type = "button";
    retry.setAttribute("data-testid", "retry");
    retry.addEventListener("click", () => {
      retry.remove();
      void this.sendMessage(text);
    });
    userBubble.appendChild(retry);
  }

  async applyWindow(): Promise<void> {
    const start = this.windowStart.value;
    const end = this.windowEnd.value;
    if (!start || !end) return;
    const window = {
      start: `${start}T00:00:00Z`,
      end: `${end}T23:59:59Z`,
    };
    const result = await this.api.setWindow(this.sessionId, window);
    this.store.setWindow(result.window);
    this.appendAssistant({
      role: "notice",
      text: `Showing events from ${start} to ${end}.`,
    });
  }

  private async reportVisibility(cardIds: string[]): Promise<void> {
    await this.api.reportVisibility(this.sessionId, cardIds);
  }

  openSurvey(): void {
    const host = el("div", "crs-survey-host");
    const { element } = buildSurveyForm(this.api, this.sessionId, () => {
      host.innerHTML = "";
      host.appendChild(el("p", "crs-survey-thanks", "Thanks for your feedback!"));
    });
    host.appendChild(element);
    this.stream.appendChild(host);
  }
}

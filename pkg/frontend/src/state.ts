/** Chat view state: message stream, pending-turn gate, window display. */

import type { SessionDescriptor, SlateWire, TimeWindowWire } from "./types.js";

export interface ChatMessage {
  role: "user" | "assistant" | "notice";
  text: string;
  slate?: SlateWire;
  failed?: boolean;
}

type Listener = () => void;

export class ChatStore {
  session: SessionDescriptor | null = null;
  messages: ChatMessage[] = [];
  pendingTurn = false;
  windowDisplay: TimeWindowWire | null = null;
  private listeners: Listener[] = [];

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  startSession(session: SessionDescriptor): void {
    this.session = session;
    this.windowDisplay = session.window;
    this.emit();
  }

  /** Gate for sending: at most one turn in flight. */
  beginTurn(): boolean {
    if (this.pendingTurn) return false;
    this.pendingTurn = true;
    this.emit();
    return true;
  }

  endTurn(): void {
    this.pendingTurn = false;
    this.emit();
  }

  push(message: ChatMessage): void {
    this.messages.push(message);
    this.emit();
  }

  setWindow(window: TimeWindowWire): void {
    this.windowDisplay = window;
    this.emit();
  }
}

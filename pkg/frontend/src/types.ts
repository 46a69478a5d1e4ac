/** Wire types for the /v1 HTTP API. */

export interface TimeWindowWire {
  start: string; // ISO 8601 UTC
  end: string;
}

export interface CaseButton {
  kind: "CaseSelected";
  choice: "SpecificSearch" | "GeneralRecommendation";
  label: string;
}

export interface SessionDescriptor {
  session_id: string;
  created_at: string;
  language: string;
  greeting: string;
  disclosure: string;
  buttons: CaseButton[];
  window: TimeWindowWire;
}

export interface SlateCardWire {
  event_id: string;
  summary: string;
  detail_link: string;
}

export interface SlateWire {
  derived_from: string;
  cards: SlateCardWire[];
}

export interface TurnMetricsWire {
  total_tokens: number;
  total_cost_usd: string;
  wall_latency_ms: number;
  prompt_count: number;
}

export interface TurnResponse {
  assistant_text: string;
  action_taken: string | null;
  outcome: string;
  slate: SlateWire | null;
  extracted_window: TimeWindowWire | null;
  metrics: TurnMetricsWire;
  window: TimeWindowWire;
  window_source: string;
}

export type UserInputEventWire =
  | { kind: "TextMessage"; text: string }
  | { kind: "CaseSelected"; choice: CaseButton["choice"] }
  | { kind: "WindowSet"; window: TimeWindowWire }
  | { kind: "CardVisibility"; card_ids: string[] };

export interface EventDetailWire {
  id: string;
  title: string;
  category: string;
  start_time: string;
  language: string;
  description?: string;
  end_time?: string;
  venue_name?: string;
  city_area?: string;
  price?: string;
  currency?: string;
  source_url?: string;
}

/** Ten-item survey document, mirroring the server's intake schema. */
export interface SurveySubmission {
  recommendation_accuracy: number;
  interface_adequacy: number;
  consistency: number;
  coherence: number;
  input_processing_performance: number;
  control: number;
  perceived_usefulness: number;
  confidence: number;
  overall_satisfaction: number;
  future_use: number;
  success: boolean;
  perceived_effort?: number;
  general_problems?: string;
  age?: number;
  gender?: string;
}

export const SURVEY_ITEM_FIELDS = [
  "recommendation_accuracy",
  "interface_adequacy",
  "consistency",
  "coherence",
  "input_processing_performance",
  "control",
  "perceived_usefulness",
  "confidence",
  "overall_satisfaction",
  "future_use",
] as const;

export type SurveyItemField = (typeof SURVEY_ITEM_FIELDS)[number];

/** Statement shown for each survey item, keyed by intake field name. */
export const SURVEY_STATEMENTS: Record<SurveyItemField, string> = {
  recommendation_accuracy:
    "The events/activities recommended to me matched my formulated intentions.",
  interface_adequacy: "I found the chatbot intuitive to use.",
  consistency: "The chatbot was consistent in its statements (no contradictions).",
  coherence:
    "The chatbot was coherent in its statements (logically coherent & understandable).",
  input_processing_performance:
    "I have the feeling the chatbot interpreted my request correctly.",
  control: "I felt in control of modifying my taste using the chatbot.",
  perceived_usefulness:
    "The chatbot is useful for finding events/activities that match my interests.",
  confidence: "I am confident I could use the chatbot to find events/activities.",
  overall_satisfaction: "Overall, I am satisfied with the performance of the chatbot.",
  future_use: "I will use the system again in the future.",
};

// Session state: an append-only transcript plus the current knob values.
// All transitions are pure functions so they are trivially testable.

import type { ChatResponse, CompareCard, TranscriptEntry } from "./types.js";

export interface SessionState {
  transcript: TranscriptEntry[];
  modelId: string;
  sentiment: number; // always in [0, 1], slider step 0.05
  pending: boolean;
  error: string | null;
  compareCards: CompareCard[];
}

export function initialState(modelId = "", sentiment = 1.0): SessionState {
  return { transcript: [], modelId, sentiment, pending: false, error: null, compareCards: [] };
}

export function setModel(state: SessionState, modelId: string): SessionState {
  return { ...state, modelId };
}

export function setSentiment(state: SessionState, value: number): SessionState {
  if (!(value >= 0 && value <= 1)) {
    throw new RangeError(`sentiment ${value} outside [0, 1]`);
  }
  return { ...state, sentiment: value };
}

export function beginSend(state: SessionState): SessionState {
  return { ...state, pending: true, error: null };
}

export function applyReply(
  state: SessionState,
  message: string,
  sentiment: number | null,
  response: ChatResponse,
): SessionState {
  const entry: TranscriptEntry = {
    message,
    reply: response.reply,
    modelId: response.model_id,
    sentiment,
    scores: response.scores,
    latencyMs: response.latency_ms,
    notice: response.notice,
  };
  return { ...state, pending: false, transcript: [...state.transcript, entry] };
}

export function applyError(state: SessionState, detail: string): SessionState {
  // transcript untouched: a failed call never fabricates a row
  return { ...state, pending: false, error: detail };
}

export function canSend(state: SessionState, text: string): boolean {
  return !state.pending && text.trim().length > 0 && state.modelId !== "";
}

export function applyCompare(state: SessionState, cards: CompareCard[]): SessionState {
  return { ...state, pending: false, compareCards: sortCards(cards) };
}

export function sortCards(cards: CompareCard[]): CompareCard[] {
  // SCL descending, model id as the tiebreaker; failed cards sink to the end
  return [...cards].sort((a, b) => {
    const sa = a.scores?.scl;
    const sb = b.scores?.scl;
    if (sa == null && sb == null) return a.modelId.localeCompare(b.modelId);
    if (sa == null) return 1;
    if (sb == null) return -1;
    if (sa !== sb) return sb - sa;
    return a.modelId.localeCompare(b.modelId);
  });
}

// Wire types of the /v1 service.

export interface ChatScores {
  coh1: number;
  coh2: number;
  scl: number;
  lm: number;
}

export interface ChatResponse {
  reply: string;
  scores: ChatScores | null;
  latency_ms: number;
  model_id: string;
  kind: string;
  metadata: Record<string, string>;
  notice?: string;
}

export interface ModelInfo {
  model_id: string;
  kind: string;
  sentiment_control: string;
  [extra: string]: string;
}

export interface ChatRequestBody {
  message: string;
  model_id: string;
  sentiment: number | null;
}

export interface TranscriptEntry {
  message: string;
  reply: string;
  modelId: string;
  sentiment: number | null;
  scores: ChatScores | null;
  latencyMs: number;
  notice?: string;
}

export interface CompareCard {
  modelId: string;
  kind: string;
  reply?: string;
  scores?: ChatScores | null;
  error?: string;
}

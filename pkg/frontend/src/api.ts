// Thin fetch client for the /v1 endpoints. The slider value is passed through
// verbatim: whatever number the UI holds is the number on the wire.

import type { ChatRequestBody, ChatResponse, ChatScores, ModelInfo } from "./types.js";

export class ServiceError extends Error {
  constructor(public status: number, public detail: string) {
    super(`service ${status}: ${detail}`);
  }
}

export class ServiceClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = fetch,
  ) {}

  buildChatBody(message: string, modelId: string, sentiment: number | null): ChatRequestBody {
    return { message, model_id: modelId, sentiment };
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}/v1${path}`, init);
    const text = await response.text();
    if (!response.ok) {
      let detail = text;
      try {
        detail = JSON.parse(text).detail ?? text;
      } catch {
        // non-JSON error body: keep raw text
      }
      throw new ServiceError(response.status, detail);
    }
    return JSON.parse(text) as T;
  }

  async health(): Promise<{ status: string; models: number }> {
    return this.request("/health");
  }

  async models(): Promise<ModelInfo[]> {
    const body = await this.request<{ models: ModelInfo[] }>("/models");
    return body.models;
  }

  async chat(message: string, modelId: string, sentiment: number | null): Promise<ChatResponse> {
    return this.request("/chat", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(this.buildChatBody(message, modelId, sentiment)),
    });
  }

  async score(x: string, y: string): Promise<ChatScores> {
    return this.request("/score", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ x, y }),
    });
  }
}

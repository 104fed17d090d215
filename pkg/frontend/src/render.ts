// HTML renderers. Pure string producers so the suite can assert on output
// without a DOM; app.ts injects the strings into the page.

import type { ChatScores, CompareCard, ModelInfo, TranscriptEntry } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

// Badge values reuse the JSON number serialization, which is the shortest
// round-trip form — the same bytes the service put on the wire.
export function formatScore(value: number): string {
  return JSON.stringify(value);
}

export function renderBadges(scores: ChatScores | null): string {
  if (scores === null) {
    return `<span class="badges badges-empty">no scores</span>`;
  }
  const badge = (name: keyof ChatScores) =>
    `<span class="badge badge-${name}" data-metric="${name}">${name.toUpperCase()} ${formatScore(scores[name])}</span>`;
  return `<span class="badges">${badge("coh1")}${badge("coh2")}${badge("scl")}${badge("lm")}</span>`;
}

export function renderEntry(entry: TranscriptEntry): string {
  const notice = entry.notice ? `<div class="notice">${escapeHtml(entry.notice)}</div>` : "";
  const sentiment = entry.sentiment === null ? "–" : String(entry.sentiment);
  return `<div class="turn">
  <div class="turn-user">${escapeHtml(entry.message)}</div>
  <div class="turn-bot" data-model="${escapeHtml(entry.modelId)}" data-sentiment="${sentiment}">
    <div class="reply">${escapeHtml(entry.reply)}</div>
    ${renderBadges(entry.scores)}
    <span class="latency">${entry.latencyMs.toFixed(1)} ms</span>
  </div>
  ${notice}
</div>`;
}

export function renderTranscript(entries: TranscriptEntry[]): string {
  return entries.map(renderEntry).join("\n");
}

export function renderModelOptions(models: ModelInfo[], selected: string): string {
  return models
    .map((m) => {
      const flag = selected === m.model_id ? " selected" : "";
      return `<option value="${escapeHtml(m.model_id)}"${flag}>${escapeHtml(m.model_id)} (${escapeHtml(m.kind)})</option>`;
    })
    .join("");
}

export function sliderDisabled(model: ModelInfo | undefined): boolean {
  return model !== undefined && model.sentiment_control === "fixed by training";
}

export function sliderTooltip(model: ModelInfo | undefined): string {
  return sliderDisabled(model)
    ? "this model's sentiment is fixed by training"
    : "target sentiment for the reply";
}

export function renderCompareCards(cards: CompareCard[]): string {
  const body = cards
    .map((card) => {
      if (card.error !== undefined) {
        return `<div class="card card-error" data-model="${escapeHtml(card.modelId)}">
  <h3>${escapeHtml(card.modelId)}</h3>
  <div class="error">${escapeHtml(card.error)}</div>
</div>`;
      }
      return `<div class="card" data-model="${escapeHtml(card.modelId)}">
  <h3>${escapeHtml(card.modelId)} <small>${escapeHtml(card.kind)}</small></h3>
  <div class="reply">${escapeHtml(card.reply ?? "")}</div>
  ${renderBadges(card.scores ?? null)}
</div>`;
    })
    .join("\n");
  return `<div class="cards">${body}</div>`;
}

export function renderError(detail: string | null): string {
  return detail === null ? "" : `<div class="error-banner">${escapeHtml(detail)}</div>`;
}

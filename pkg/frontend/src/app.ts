// Browser bootstrap: wires the DOM to the service client and the pure
// state/render modules. One in-flight request per pane; compare mode fans out
// to every registered model in parallel.

import { ServiceClient, ServiceError } from "./api.js";
import {
  SessionState,
  applyCompare,
  applyError,
  applyReply,
  beginSend,
  canSend,
  initialState,
  setModel,
  setSentiment,
} from "./state.js";
import {
  renderCompareCards,
  renderError,
  renderModelOptions,
  renderTranscript,
  sliderDisabled,
  sliderTooltip,
} from "./render.js";
import type { CompareCard, ModelInfo } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

export async function bootstrap(baseUrl = ""): Promise<void> {
  const client = new ServiceClient(baseUrl);
  let models: ModelInfo[] = await client.models();
  let state: SessionState = initialState(models[0]?.model_id ?? "", 1.0);

  const input = el<HTMLInputElement>("message");
  const send = el<HTMLButtonElement>("send");
  const compare = el<HTMLButtonElement>("compare");
  const slider = el<HTMLInputElement>("sentiment");
  const sliderValue = el<HTMLSpanElement>("sentiment-value");
  const picker = el<HTMLSelectElement>("model");

  function redraw(): void {
    picker.innerHTML = renderModelOptions(models, state.modelId);
    const active = models.find((m) => m.model_id === state.modelId);
    slider.disabled = sliderDisabled(active);
    slider.title = sliderTooltip(active);
    sliderValue.textContent = slider.value; // shown value = value sent
    el("transcript").innerHTML = renderTranscript(state.transcript);
    el("cards").innerHTML = renderCompareCards(state.compareCards);
    el("errors").innerHTML = renderError(state.error);
    send.disabled = !canSend(state, input.value);
    compare.disabled = state.pending || models.length < 2;
  }

  input.addEventListener("input", redraw);
  picker.addEventListener("change", () => {
    state = setModel(state, picker.value);
    redraw();
  });
  slider.addEventListener("input", () => {
    state = setSentiment(state, Number(slider.value));
    redraw();
  });

  send.addEventListener("click", async () => {
    const message = input.value.trim();
    if (!canSend(state, message)) return;
    state = beginSend(state);
    redraw();
    const sentiment = slider.disabled ? null : state.sentiment;
    try {
      const response = await client.chat(message, state.modelId, sentiment);
      state = applyReply(state, message, sentiment, response);
      input.value = "";
    } catch (error) {
      const detail = error instanceof ServiceError ? error.detail : String(error);
      state = applyError(state, detail);
    }
    redraw();
  });

  compare.addEventListener("click", async () => {
    const message = input.value.trim();
    if (!canSend(state, message)) return;
    state = beginSend(state);
    redraw();
    const sentiment = state.sentiment;
    const cards: CompareCard[] = await Promise.all(
      models.map(async (m): Promise<CompareCard> => {
        try {
          const r = await client.chat(message, m.model_id, sentiment);
          return { modelId: m.model_id, kind: m.kind, reply: r.reply, scores: r.scores };
        } catch (error) {
          const detail = error instanceof ServiceError ? error.detail : String(error);
          return { modelId: m.model_id, kind: m.kind, error: detail };
        }
      }),
    );
    state = applyCompare(state, cards);
    redraw();
  });

  redraw();
}

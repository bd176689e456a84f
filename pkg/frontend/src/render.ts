// DOM rendering. Numbers shown in the panel are formatted service values,
// nothing is recomputed here.

import type { CandidateRow } from "./api.js";
import type { ChatViewState } from "./state.js";

export interface Handlers {
  onCandidateClick(candidateId: string): void;
}

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

export function renderTranscript(state: ChatViewState): HTMLElement {
  const box = el("div", "transcript");
  box.dataset.testid = "transcript";
  for (const msg of state.messages) {
    const row = el("div", `message message-${msg.speaker}`);
    row.appendChild(el("span", "speaker", msg.speaker === "user" ? "you" : "agent"));
    row.appendChild(el("span", "text", msg.text));
    box.appendChild(row);
  }
  return box;
}

function renderRow(
  row: CandidateRow,
  selected: boolean,
  handlers: Handlers,
): HTMLElement {
  const item = el("div", "candidate-row" + (selected ? " override-selected" : ""));
  item.dataset.candidateId = row.candidate_id;
  item.dataset.prob = String(row.prob);
  item.dataset.vCohNorm = String(row.v_coh_norm);
  item.dataset.vCroNorm = String(row.v_cro_norm);

  const bar = el("div", "prob-bar");
  const fill = el("div", "prob-fill");
  fill.style.width = `${(row.prob * 100).toFixed(1)}%`;
  bar.appendChild(fill);
  item.appendChild(bar);

  item.appendChild(el("span", "candidate-text", row.text));
  item.appendChild(el("span", "prob-label", row.prob.toFixed(4)));
  item.appendChild(el("span", "coh-norm", `coh ${row.v_coh_norm.toFixed(3)}`));
  item.appendChild(el("span", "cro-norm", `dev ${row.v_cro_norm.toFixed(3)}`));

  if (row.adhesive === true) {
    item.appendChild(el("span", "badge badge-adhesive", "adhesive"));
  } else if (row.adhesive === false) {
    item.appendChild(el("span", "badge badge-shift", "shift"));
  }

  item.addEventListener("click", () => handlers.onCandidateClick(row.candidate_id));
  return item;
}

export function renderPanel(state: ChatViewState, handlers: Handlers): HTMLElement {
  const panel = el("div", "candidate-panel");
  panel.dataset.testid = "candidate-panel";
  if (state.panel.length === 0) {
    panel.appendChild(el("p", "panel-empty", "no ranking yet"));
    return panel;
  }
  for (const row of state.panel) {
    panel.appendChild(renderRow(row, state.pendingOverride === row.candidate_id, handlers));
  }
  return panel;
}

export function renderErrorBanner(state: ChatViewState): HTMLElement | null {
  if (!state.error) return null;
  const banner = el("div", "error-banner", state.error);
  banner.dataset.testid = "error-banner";
  return banner;
}

export function renderApp(
  root: HTMLElement,
  state: ChatViewState,
  handlers: Handlers,
): void {
  root.textContent = "";
  const banner = renderErrorBanner(state);
  if (banner) root.appendChild(banner);
  root.appendChild(renderTranscript(state));
  root.appendChild(renderPanel(state, handlers));
  const status = el("div", "status-line");
  status.dataset.testid = "status";
  status.textContent = state.busy
    ? "waiting for the agent..."
    : state.pendingOverride
      ? `override armed: ${state.pendingOverride}`
      : "";
  root.appendChild(status);
}

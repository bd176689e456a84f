// Chat view state and pure transition helpers. The UI never computes model
// quantities: the panel mirrors the last TurnResult verbatim.

import type { CandidateRow, TurnResult } from "./api.js";

export interface ChatMessage {
  speaker: "user" | "agent";
  text: string;
}

export interface ChatViewState {
  sessionId: string | null;
  topic: string;
  messages: ChatMessage[];
  panel: CandidateRow[];
  pendingOverride: string | null;
  busy: boolean;
  error: string | null;
}

export function initialState(): ChatViewState {
  return {
    sessionId: null,
    topic: "",
    messages: [],
    panel: [],
    pendingOverride: null,
    busy: false,
    error: null,
  };
}

export function sessionStarted(
  state: ChatViewState,
  sessionId: string,
  topic: string,
): ChatViewState {
  return { ...initialState(), sessionId, topic };
}

export function messageSent(state: ChatViewState, text: string): ChatViewState {
  return {
    ...state,
    busy: true,
    error: null,
    messages: [...state.messages, { speaker: "user", text }],
  };
}

// Applies a TurnResult: agent reply appended, panel replaced, any pending
// override cleared.
export function turnCompleted(
  state: ChatViewState,
  result: TurnResult,
): ChatViewState {
  return {
    ...state,
    busy: false,
    error: null,
    pendingOverride: null,
    panel: result.ranked,
    messages: [...state.messages, { speaker: "agent", text: result.response }],
  };
}

// Failures keep the transcript; the trailing optimistic user message is
// dropped so a retry does not duplicate it.
export function turnFailed(state: ChatViewState, message: string): ChatViewState {
  const messages = [...state.messages];
  if (messages.length && messages[messages.length - 1].speaker === "user") {
    messages.pop();
  }
  return { ...state, busy: false, error: message, messages };
}

export function overrideToggled(
  state: ChatViewState,
  candidateId: string,
): ChatViewState {
  return {
    ...state,
    pendingOverride:
      state.pendingOverride === candidateId ? null : candidateId,
  };
}

export function errorCleared(state: ChatViewState): ChatViewState {
  return { ...state, error: null };
}

// Glue between the API client and the view state: one in-flight message per
// session, override id attached to exactly the next post.

import { ApiClient, ApiError } from "./api.js";
import {
  ChatViewState,
  messageSent,
  overrideToggled,
  sessionStarted,
  turnCompleted,
  turnFailed,
} from "./state.js";

export class ChatController {
  state: ChatViewState;

  constructor(
    private client: ApiClient,
    private onChange: (state: ChatViewState) => void,
    initial: ChatViewState,
  ) {
    this.state = initial;
  }

  private update(next: ChatViewState): void {
    this.state = next;
    this.onChange(this.state);
  }

  async start(body: {
    topic?: string;
    candidates?: { id: string; text: string }[];
    episode_id?: string;
  }): Promise<void> {
    try {
      const info = await this.client.createSession(body);
      this.update(sessionStarted(this.state, info.session_id, info.topic));
    } catch (err) {
      this.update(turnFailed(this.state, describe(err)));
    }
  }

  toggleOverride(candidateId: string): void {
    if (this.state.busy) return;
    this.update(overrideToggled(this.state, candidateId));
  }

  async send(text: string): Promise<void> {
    if (this.state.busy || !this.state.sessionId || !text.trim()) return;
    const override = this.state.pendingOverride;
    this.update(messageSent(this.state, text));
    try {
      const result = await this.client.sendMessage(
        this.state.sessionId,
        text,
        override,
      );
      this.update(turnCompleted(this.state, result));
    } catch (err) {
      this.update(turnFailed(this.state, describe(err)));
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `service error ${err.status}: ${err.message}`;
  if (err instanceof Error) return `network error: ${err.message}`;
  return "unknown error";
}

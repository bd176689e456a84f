// Single-page bootstrap. API base comes from ?api=...; ?fixtures=1 replays
// recorded responses for offline development.

import { ApiClient, FetchLike } from "./api.js";
import { ChatController } from "./controller.js";
import { initialState } from "./state.js";
import { renderApp } from "./render.js";

function fixtureFetch(): FetchLike {
  const load = async (path: string) => {
    const resp = await fetch(path);
    return resp.json();
  };
  let turn = 0;
  return async (input: string, init?: RequestInit) => {
    const respond = (body: unknown, status = 200) =>
      new Response(JSON.stringify(body), {
        status,
        headers: { "Content-Type": "application/json" },
      });
    if (input.endsWith("/sessions") && init?.method === "POST") {
      return respond(await load("tests/fixtures/create_session.json"), 201);
    }
    if (input.includes("/messages")) {
      turn += 1;
      const name = turn === 1 ? "first_turn" : "second_turn";
      return respond(await load(`tests/fixtures/${name}.json`));
    }
    return respond(await load("tests/fixtures/session_snapshot.json"));
  };
}

function defaultPool() {
  return [
    { id: "k1", text: "blue is the color of the clear daytime sky" },
    { id: "k2", text: "red paint mixes from warm pigments" },
    { id: "k3", text: "green grass covers the spring lawn" },
  ];
}

export function bootstrap(root: HTMLElement): ChatController {
  const params = new URLSearchParams(window.location.search);
  const apiBase = params.get("api") ?? "http://127.0.0.1:8000";
  const useFixtures = params.get("fixtures") === "1";
  const client = useFixtures
    ? new ApiClient(apiBase, fixtureFetch())
    : new ApiClient(apiBase);

  const form = document.createElement("form");
  form.className = "composer";
  const input = document.createElement("input");
  input.type = "text";
  input.placeholder = "say something...";
  const button = document.createElement("button");
  button.type = "submit";
  button.textContent = "send";
  form.appendChild(input);
  form.appendChild(button);

  const view = document.createElement("div");
  root.appendChild(view);
  root.appendChild(form);

  const controller = new ChatController(
    client,
    (state) => {
      renderApp(view, state, {
        onCandidateClick: (id) => controller.toggleOverride(id),
      });
      button.disabled = state.busy;
    },
    initialState(),
  );

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const text = input.value;
    input.value = "";
    void controller.send(text);
  });

  const episodeId = params.get("episode");
  void controller.start(
    episodeId
      ? { episode_id: episodeId }
      : { topic: params.get("topic") ?? "demo", candidates: defaultPool() },
  );
  return controller;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  bootstrap(document.getElementById("app") as HTMLElement);
}

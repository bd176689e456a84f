"""Session-oriented HTTP API for live selection and generation.

Sessions are in-memory: a frozen candidate pool, a transcript, and the
selection history. Each message runs the full selection stack on the current
context (the previously *used* candidate, override included, feeds the
development feature) and returns the ranked candidate panel the UI renders.
"""

import threading
import uuid
from typing import Optional

import torch
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .data import KnowledgeCandidate, SelectionSample, Utterance, render_context
from .generator import DecodingConfig, generate
from .selector import argmax_lowest, build_knowledge_graph


class CandidateIn(BaseModel):
    id: str
    text: str


class CreateSessionRequest(BaseModel):
    topic: str = ""
    candidates: Optional[list[CandidateIn]] = None
    episode_id: Optional[str] = None


class MessageRequest(BaseModel):
    text: str
    override_id: Optional[str] = None


class Session:
    def __init__(self, session_id, topic, pool, sim_threshold=0.3):
        self.session_id = session_id
        self.topic = topic
        self.pool = pool
        self.graph = build_knowledge_graph(pool, sim_threshold)
        self.transcript = []  # list[Utterance]
        self.selection_history = []  # {turn, selected_id, overridden}
        self.prev_used_id = None
        self.lock = threading.Lock()

    @property
    def agent_turns(self):
        return len(self.selection_history)

    def snapshot(self):
        return {
            "session_id": self.session_id,
            "topic": self.topic,
            "candidates": [{"id": c.id, "text": c.text} for c in self.pool],
            "transcript": [
                {"speaker": u.speaker, "text": u.text} for u in self.transcript
            ],
            "selection_history": list(self.selection_history),
            "graph": self.graph.to_json(),
        }


def create_app(model, generator=None, episodes=None, cors_origins=("*",),
               max_new_tokens=24):
    """Build the FastAPI app around a loaded selection model.

    ``generator`` is optional; without one the response echoes the selected
    knowledge sentence. ``episodes`` allows creating sessions from corpus
    episode references.
    """
    app = FastAPI(title="cet2 session service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions = {}
    registry_lock = threading.Lock()
    episodes_by_id = {e.episode_id: e for e in (episodes or [])}
    window_l = model.config.window_l

    def get_session_or_404(session_id):
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="session not found")
        return session

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        if req.episode_id is not None:
            episode = episodes_by_id.get(req.episode_id)
            if episode is None:
                raise HTTPException(status_code=404, detail="unknown episode")
            pool = list(episode.turns[0].candidates)
            topic = req.topic or episode.topic
        else:
            if not req.candidates:
                raise HTTPException(status_code=422, detail="candidate pool is empty")
            pool = [KnowledgeCandidate(id=c.id, text=c.text) for c in req.candidates]
            topic = req.topic
        if not pool:
            raise HTTPException(status_code=422, detail="candidate pool is empty")
        session_id = uuid.uuid4().hex
        with registry_lock:
            sessions[session_id] = Session(
                session_id, topic, pool, model.config.sim_threshold
            )
        return {"session_id": session_id, "topic": topic, "m": len(pool)}

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, req: MessageRequest):
        session = get_session_or_404(session_id)
        if not req.text.strip():
            raise HTTPException(status_code=422, detail="message text is empty")
        override_id = req.override_id
        pool_ids = {c.id for c in session.pool}
        if override_id is not None and override_id not in pool_ids:
            raise HTTPException(status_code=422, detail="override_id not in pool")

        with session.lock:
            user_utt = Utterance("user", req.text)
            context = list(session.transcript[-2 * window_l:]) + [user_utt]
            turn_index = session.agent_turns
            sample = SelectionSample(
                episode_id=session.session_id,
                turn_index=turn_index,
                context=context,
                candidates=session.pool,
                gold_index=None,
                prev_gold=None,
                gold_response="",
            )
            prev = session.prev_used_id
            prev_text = None
            if prev is not None:
                prev_text = next(c.text for c in session.pool if c.id == prev)
            with torch.no_grad():
                ps = model.prepare_sample(sample, prev_text=prev_text,
                                          use_prev_gold=False)
                out = model([ps])[0]
            probs = out.dist.probs.detach()
            selected_idx = argmax_lowest(probs)
            overridden = False
            if override_id is not None:
                selected_idx = next(
                    i for i, c in enumerate(session.pool) if c.id == override_id
                )
                overridden = True
            selected = session.pool[selected_idx]

            v_coh = out.v_coh
            v_cro = out.v_cro
            rows = []
            for i, cand in enumerate(session.pool):
                coh_norm = (
                    float(torch.linalg.norm(v_coh[i])) if v_coh is not None else 0.0
                )
                cro_norm = float(torch.linalg.norm(v_cro[i]))
                rows.append({
                    "candidate_id": cand.id,
                    "text": cand.text,
                    "prob": float(probs[i]),
                    "v_coh_norm": coh_norm,
                    "v_cro_norm": cro_norm,
                    "adhesive": (cand.id == prev) if prev is not None else None,
                })
            rows.sort(key=lambda r: -r["prob"])

            rendered = render_context(context)
            if generator is not None:
                response_text = generate(
                    generator, rendered, selected.text,
                    DecodingConfig(max_new_tokens=max_new_tokens),
                )
                if not response_text.strip():
                    response_text = selected.text
            else:
                response_text = selected.text

            session.transcript.append(user_utt)
            session.transcript.append(Utterance("agent", response_text))
            session.selection_history.append({
                "turn": turn_index,
                "selected_id": selected.id,
                "overridden": overridden,
            })
            session.prev_used_id = selected.id
            return {
                "ranked": rows,
                "selected_id": selected.id,
                "response": response_text,
            }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return get_session_or_404(session_id).snapshot()

    return app

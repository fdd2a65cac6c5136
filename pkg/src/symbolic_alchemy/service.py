"""HTTP service: read-only trace browsing plus live interactive sessions.

Trace endpoints serve snapshots reconstructed by replaying each trace's
recorded seed and action list through the environment, so step payloads are
always consistent with offline analysis of the same file.  Sessions wrap a
live environment (plus an exact belief filter over chemistry hypotheses)
behind a per-session lock; trace reads are lock-free.

Endpoints (all JSON):
    GET  /api/traces                  -> [{id, policy, seed, n_steps, score, ...}]
    GET  /api/traces/{id}             -> header, per-trial deposits
    GET  /api/traces/{id}/steps/{t}   -> state before the action, the action,
                                         rewards, belief marginals if a belief
                                         sidecar file sits next to the trace
    POST /api/sessions                -> {seed, mode} -> new session
    GET  /api/sessions/{id}           -> current public state + score
    POST /api/sessions/{id}/actions   -> {action} (or {} to let the session's
                                         policy choose when mode != "human")
    GET  /api/sessions/{id}/belief    -> exact posterior marginals

Errors: 404 unknown trace/session/step, 409 action on a finished episode,
422 malformed or out-of-range action.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .baselines import (
    BeliefState,
    IdealObserverPolicy,
    RandomHeuristicPolicy,
    UniformRandomPolicy,
    init_belief,
    update_from_record,
)
from .chemistry import HUES, vertex_coords
from .environment import AlchemyEnv, EnvConfig, StepRecord, n_actions
from .traces import EpisodeTrace, read_sidecar, read_trace, sidecar_path

SESSION_MODES = ("human", "ideal", "random", "uniform", "epn")


# -- payload builders --------------------------------------------------------


def _stone_view(env: AlchemyEnv) -> list[dict]:
    return [
        {
            "stone": i,
            "percept": [int(x) for x in env.stone_percept(i)],
            "latent": [int(x) for x in vertex_coords(env.stones[i].vertex)],
            "reward": env.stone_reward(i),
            "deposited": env.stones[i].deposited,
        }
        for i in range(env.cfg.n_stones)
    ]


def _potion_view(env: AlchemyEnv) -> dict:
    counts = env.hue_counts()
    return {
        "by_hue": [{"hue": h, "name": HUES[h], "count": int(c)}
                   for h, c in enumerate(counts)],
        "total": int(sum(counts)),
    }


def _state_view(env: AlchemyEnv) -> dict:
    return {
        "trial": env.trial,
        "step_in_trial": env.step_in_trial,
        "stones": _stone_view(env),
        "potions": _potion_view(env),
    }


def _action_view(rec: StepRecord) -> dict:
    return {
        "index": rec.action_index,
        "kind": rec.action.kind,
        "stone": rec.action.stone,
        "hue": rec.action.hue,
        "slot": rec.action.slot,
        "valid": rec.info.valid,
        "null_cause": rec.info.null_cause,
    }


# -- trace store --------------------------------------------------------------


@dataclass
class LoadedTrace:
    trace: EpisodeTrace
    path: Path
    step_states: list[dict]          # state before each recorded action
    belief_rows: dict[tuple, dict]   # (trial, step) -> marginals


class TraceStore:
    """Lazy, cache-once loader for the trace files under one directory."""

    def __init__(self, trace_dir: Path | str):
        self.trace_dir = Path(trace_dir)
        self._cache: dict[str, LoadedTrace] = {}

    def _paths(self) -> dict[str, Path]:
        return {
            p.name[: -len(".trace.jsonl")]: p
            for p in sorted(self.trace_dir.glob("*.trace.jsonl"))
        }

    def list(self) -> list[dict]:
        out = []
        for trace_id in self._paths():
            loaded = self.get(trace_id)
            tr = loaded.trace
            out.append({
                "id": trace_id,
                "policy": tr.policy,
                "seed": tr.seed,
                "n_steps": len(tr.steps),
                "score": tr.score,
                "trials": tr.cfg.trials_per_episode,
                "flags": tr.flags,
                "has_belief": bool(loaded.belief_rows),
            })
        return out

    def get(self, trace_id: str) -> LoadedTrace:
        if trace_id in self._cache:
            return self._cache[trace_id]
        path = self._paths().get(trace_id)
        if path is None:
            raise HTTPException(404, f"unknown trace id: {trace_id}")
        trace = read_trace(path)
        loaded = LoadedTrace(
            trace=trace,
            path=path,
            step_states=_replay_states(trace),
            belief_rows=_load_belief(path),
        )
        self._cache[trace_id] = loaded
        return loaded


def _replay_states(trace: EpisodeTrace) -> list[dict]:
    env = AlchemyEnv(trace.cfg)
    env.reset(trace.seed)
    states = []
    for rec in trace.steps:
        states.append(_state_view(env))
        env.step(rec.action_index)
    return states


def _load_belief(path: Path) -> dict[tuple, dict]:
    side = sidecar_path(path, "belief")
    if not side.exists():
        return {}
    return {
        (row["trial"], row["step"]): row["belief"]
        for row in read_sidecar(side)
    }


# -- sessions -----------------------------------------------------------------


class CreateSession(BaseModel):
    seed: int
    mode: str = "human"
    trials_per_episode: int | None = None
    missing_edges: list[int] | None = None


class PostAction(BaseModel):
    action: int | None = None


@dataclass
class Session:
    session_id: str
    mode: str
    seed: int
    env: AlchemyEnv
    belief: BeliefState
    policy: object | None
    steps: list[StepRecord] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def score(self) -> int:
        return self.steps[-1].info.score_after if self.steps else 0

    def view(self) -> dict:
        return {
            "id": self.session_id,
            "mode": self.mode,
            "seed": self.seed,
            "done": self.env.done,
            "cursor": len(self.steps),
            "score": self.score,
            "state": _state_view(self.env),
            "n_actions": n_actions(self.env.cfg),
        }


def _session_policy(mode: str, checkpoint: Path | None):
    if mode == "ideal":
        return IdealObserverPolicy()
    if mode == "random":
        return RandomHeuristicPolicy()
    if mode == "uniform":
        return UniformRandomPolicy()
    if mode == "epn":
        if checkpoint is None:
            raise HTTPException(
                422, "epn sessions need the service started with a checkpoint")
        from .neural import EpnPolicy, load_params
        return EpnPolicy(load_params(checkpoint), mode="argmax")
    return None


# -- app ----------------------------------------------------------------------


def create_app(trace_dir: Path | str, checkpoint: Path | str | None = None,
               env_cfg: EnvConfig = EnvConfig()) -> FastAPI:
    app = FastAPI(title="symbolic-alchemy service")
    store = TraceStore(trace_dir)
    checkpoint = Path(checkpoint) if checkpoint is not None else None
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    counter = iter(range(1, 10 ** 9))

    @app.get("/api/traces")
    def list_traces() -> list[dict]:
        return store.list()

    @app.get("/api/traces/{trace_id}")
    def get_trace(trace_id: str) -> dict:
        loaded = store.get(trace_id)
        tr = loaded.trace
        return {
            "id": trace_id,
            "policy": tr.policy,
            "seed": tr.seed,
            "env": tr.cfg.to_dict(),
            "chemistry": tr.chemistry.to_record(),
            "flags": tr.flags,
            "n_steps": len(tr.steps),
            "score": tr.score,
            "trial_deposits": tr.trial_deposits(),
            "has_belief": bool(loaded.belief_rows),
        }

    @app.get("/api/traces/{trace_id}/steps/{t}")
    def get_step(trace_id: str, t: int) -> dict:
        loaded = store.get(trace_id)
        if not 0 <= t < len(loaded.trace.steps):
            raise HTTPException(
                404, f"step {t} out of range 0..{len(loaded.trace.steps) - 1}")
        rec = loaded.trace.steps[t]
        payload = {
            "t": t,
            "trial": rec.trial,
            "step": rec.step,
            "state": loaded.step_states[t],
            "action": _action_view(rec),
            "env_reward": rec.env_reward,
            "shaping_reward": rec.shaping_reward,
            "score_after": rec.info.score_after,
        }
        belief = loaded.belief_rows.get((rec.trial, rec.step))
        if belief is not None:
            payload["belief"] = belief
        return payload

    @app.post("/api/sessions", status_code=201)
    def create_session(body: CreateSession) -> dict:
        if body.mode not in SESSION_MODES:
            raise HTTPException(
                422, f"mode must be one of {', '.join(SESSION_MODES)}")
        cfg = env_cfg
        overrides: dict = {}
        if body.trials_per_episode is not None:
            overrides["trials_per_episode"] = body.trials_per_episode
        if body.missing_edges is not None:
            overrides["gen"] = replace(
                cfg.gen, missing_edges=tuple(body.missing_edges))
        if overrides:
            cfg = replace(cfg, **overrides)
        policy = _session_policy(body.mode, checkpoint)
        env = AlchemyEnv(cfg)
        env.reset(body.seed)
        if policy is not None:
            policy.begin_episode(cfg, body.seed)
        with registry_lock:
            session_id = f"s{next(counter):06d}"
            sess = Session(
                session_id=session_id,
                mode=body.mode,
                seed=body.seed,
                env=env,
                belief=init_belief(cfg.gen),
                policy=policy,
            )
            sessions[session_id] = sess
        return sess.view()

    def _get_session(session_id: str) -> Session:
        with registry_lock:
            sess = sessions.get(session_id)
        if sess is None:
            raise HTTPException(404, f"unknown session id: {session_id}")
        return sess

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        sess = _get_session(session_id)
        with sess.lock:
            return sess.view()

    @app.post("/api/sessions/{session_id}/actions")
    def post_action(session_id: str, body: PostAction) -> dict:
        sess = _get_session(session_id)
        with sess.lock:
            if sess.env.done:
                raise HTTPException(409, "episode already finished")
            if body.action is None:
                if sess.policy is None:
                    raise HTTPException(
                        422, "human sessions must provide an action index")
                action = sess.policy.act(sess.env)
            else:
                if not 0 <= body.action < n_actions(sess.env.cfg):
                    raise HTTPException(
                        422,
                        f"action {body.action} out of range "
                        f"0..{n_actions(sess.env.cfg) - 1}")
                action = body.action
            rec = sess.env.step(action)
            if sess.policy is not None:
                sess.policy.observe(rec)
            sess.belief = update_from_record(sess.belief, rec)
            sess.steps.append(rec)
            return {
                "cursor": len(sess.steps),
                "action": _action_view(rec),
                "env_reward": rec.env_reward,
                "shaping_reward": rec.shaping_reward,
                "score": sess.score,
                "done": sess.env.done,
                "state": _state_view(sess.env),
                "belief": sess.belief.marginals().to_dict(),
            }

    @app.get("/api/sessions/{session_id}/belief")
    def get_belief(session_id: str) -> dict:
        sess = _get_session(session_id)
        with sess.lock:
            return sess.belief.marginals().to_dict()

    return app


def http_serve(port: int, trace_dir: Path | str,
               checkpoint: Path | str | None = None) -> None:
    """Run the service until interrupted."""
    import uvicorn

    uvicorn.run(create_app(trace_dir, checkpoint), host="127.0.0.1", port=port)

"""Record golden HTTP payloads for the frontend contract tests.

Runs the real service in-process, replays one ideal-observer trace and one
scripted live session against it, and writes every request/response pair to
test/fixtures/ as JSON. The vitest suite replays these fixtures through a
scripted fetch, so the frontend tests pin the actual wire contract without
needing a running server.

Usage: python3 scripts/make_fixtures.py   (from frontend/, or any cwd)
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from symbolic_alchemy.baselines import IdealObserverPolicy
from symbolic_alchemy.chemistry import GenConfig, apply_potion_latent
from symbolic_alchemy.environment import AlchemyEnv, EnvConfig
from symbolic_alchemy.service import create_app
from symbolic_alchemy.traces import run_episode, sidecar_path, trace_path, write_sidecar, write_trace

FIXTURES = Path(__file__).resolve().parent.parent / "test" / "fixtures"
GOLDEN_CFG = EnvConfig(trials_per_episode=2)
GOLDEN_SEED = 5
SESSION_CFG = {"trials_per_episode": 1, "missing_edges": [0]}


def write_golden_trace(trace_dir: Path) -> str:
    policy = IdealObserverPolicy()
    trace, belief_rows = run_episode(policy, GOLDEN_CFG, seed=GOLDEN_SEED, collect_belief=True)
    kinds = [(s.info.kind, s.info.valid, s.info.null_cause) for s in trace.steps]
    assert any(k == "apply" and v and c == "none" for k, v, c in kinds), "golden trace needs a moving apply"
    assert any(k == "deposit" and v for k, v, c in kinds), "golden trace needs a valid deposit"
    path = trace_path(trace_dir, trace)
    write_trace(trace, path)
    write_sidecar(belief_rows, sidecar_path(path, "belief"))
    return trace.trace_id


def dump(name: str, payload) -> None:
    out = FIXTURES / name
    out.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    print(f"wrote {out.relative_to(FIXTURES.parent.parent)}")


def record_trace_fixtures(client: TestClient, trace_id: str) -> None:
    listing = client.get("/api/traces")
    assert listing.status_code == 200
    dump("traces.json", listing.json())

    header = client.get(f"/api/traces/{trace_id}")
    assert header.status_code == 200
    dump("trace_header.json", header.json())

    n_steps = header.json()["n_steps"]
    steps = []
    for t in range(n_steps):
        resp = client.get(f"/api/traces/{trace_id}/steps/{t}")
        assert resp.status_code == 200
        steps.append(resp.json())
    assert steps[0]["state"]["potions"]["total"] == 12
    assert len(steps[0]["state"]["stones"]) == 3
    assert "belief" in steps[0]
    dump("steps.json", steps)

    missing = client.get("/api/traces/not-a-trace")
    assert missing.status_code == 404
    dump("error_unknown_trace.json", {"status": 404, "body": missing.json()})
    past_end = client.get(f"/api/traces/{trace_id}/steps/{n_steps}")
    assert past_end.status_code == 404
    dump("error_step_range.json", {"status": 404, "body": past_end.json()})


def find_session_plan() -> tuple[int, int, int]:
    """Seed plus action indices for a moving apply and an unavailable-hue apply."""
    cfg = EnvConfig(
        trials_per_episode=SESSION_CFG["trials_per_episode"],
        gen=GenConfig(missing_edges=tuple(SESSION_CFG["missing_edges"])),
    )
    for seed in range(100):
        env = AlchemyEnv(cfg)
        env.reset(seed)
        counts = env.hue_counts()
        move = next(
            (
                (s, h)
                for s in range(3)
                for h in range(6)
                if counts[h] > 0
                and apply_potion_latent(env.chemistry, env.stones[s].vertex, h)[0]
                != env.stones[s].vertex
            ),
            None,
        )
        empty_hue = next((h for h in range(6) if counts[h] == 0), None)
        if move is None or empty_hue is None:
            continue
        s, h = move
        if empty_hue == h:
            continue
        return seed, 1 + 6 * s + h, 1 + 6 * 0 + empty_hue
    raise AssertionError("no suitable session seed in 0..99")


def record_session_script(client: TestClient) -> None:
    seed, apply_idx, unavail_idx = find_session_plan()
    script = []

    def exchange(method: str, path: str, body=None, expect: int | None = None):
        if method == "GET":
            resp = client.get(path)
        else:
            resp = client.post(path, json=body)
        if expect is not None:
            assert resp.status_code == expect, (path, resp.status_code, resp.json())
        entry = {"method": method, "path": path, "status": resp.status_code,
                 "response": resp.json()}
        if body is not None:
            entry["request"] = body
        script.append(entry)
        return resp.json()

    created = exchange(
        "POST", "/api/sessions",
        {"seed": seed, "mode": "human", **SESSION_CFG}, expect=201)
    sid = created["id"]
    assert created["state"]["potions"]["total"] == 12

    prior = exchange("GET", f"/api/sessions/{sid}/belief")
    prior_best = max(p for hue in prior["potion_dir_prob"] for ax in hue for p in ax)
    assert abs(prior_best - 1 / 6) < 1e-9, prior_best

    noop = exchange("POST", f"/api/sessions/{sid}/actions", {"action": 0}, expect=200)
    assert noop["env_reward"] == 0 and noop["shaping_reward"] == 0

    moved = exchange("POST", f"/api/sessions/{sid}/actions", {"action": apply_idx}, expect=200)
    assert moved["action"]["valid"] and moved["action"]["null_cause"] == "none"
    assert moved["state"]["potions"]["total"] == 11
    hue = moved["action"]["hue"]
    best = max(p for ax in moved["belief"]["potion_dir_prob"][hue] for p in ax)
    assert abs(best - 1 / 3) < 1e-9, best

    unavail = exchange("POST", f"/api/sessions/{sid}/actions", {"action": unavail_idx}, expect=200)
    assert not unavail["action"]["valid"] and unavail["shaping_reward"] == -1.0

    exchange("POST", f"/api/sessions/{sid}/actions", {"action": 50}, expect=422)
    exchange("POST", f"/api/sessions/{sid}/actions", {"action": "apply"}, expect=422)

    taken = 3
    last = None
    for _ in range(15 - taken):
        last = exchange("POST", f"/api/sessions/{sid}/actions", {"action": 0}, expect=200)
    assert last is not None and last["done"]

    exchange("POST", f"/api/sessions/{sid}/actions", {"action": 0}, expect=409)
    dump("session_script.json", script)


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        trace_dir = Path(tmp)
        trace_id = write_golden_trace(trace_dir)
        with TestClient(create_app(trace_dir)) as client:
            record_trace_fixtures(client, trace_id)
            record_session_script(client)


if __name__ == "__main__":
    main()

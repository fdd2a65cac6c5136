/** Browser shell: wires the typed client, playback reducer, and renderer.
 *
 * All task logic lives in the pure modules; this file only moves payloads
 * between the service and the DOM. At most one mutating request is in
 * flight at a time — the submit controls are disabled while awaiting.
 */

import { ApiError, Client } from "./api.js";
import type { StepPayload } from "./api.js";
import { cubeViewFromState, cubeViewFromStep } from "./cubeView.js";
import type { PlaybackState } from "./playback.js";
import { frontierAdvanced, replayPlayback, stepCursor, tick, togglePlay } from "./playback.js";
import { actionToast, renderErrorBanner, renderSvg } from "./render.js";

interface Elements {
  traceSelect: HTMLSelectElement;
  loadButton: HTMLButtonElement;
  prevButton: HTMLButtonElement;
  nextButton: HTMLButtonElement;
  playButton: HTMLButtonElement;
  sessionButton: HTMLButtonElement;
  actionInput: HTMLInputElement;
  actionButton: HTMLButtonElement;
  stage: HTMLElement;
  banner: HTMLElement;
  status: HTMLElement;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startApp(client: Client = new Client("")): void {
  const ui: Elements = {
    traceSelect: el("trace-select"),
    loadButton: el("load-trace"),
    prevButton: el("step-back"),
    nextButton: el("step-forward"),
    playButton: el("play-pause"),
    sessionButton: el("start-session"),
    actionInput: el("action-index"),
    actionButton: el("submit-action"),
    stage: el("stage"),
    banner: el("banner"),
    status: el("status"),
  };

  let playback: PlaybackState | null = null;
  let sessionId: string | null = null;
  let mutationInFlight = false;
  let timer: number | null = null;

  const setBanner = (message: string | null) => {
    ui.banner.innerHTML = message === null ? "" : renderErrorBanner(message);
  };

  const fail = (err: unknown) => {
    setBanner(err instanceof ApiError ? err.detail : String(err));
  };

  const showStep = (step: StepPayload) => {
    ui.stage.innerHTML = renderSvg(cubeViewFromStep(step));
    ui.status.textContent =
      `step ${step.t}: ${step.action.kind} / reward ${step.env_reward} / score ${step.score_after}`;
  };

  const refreshReplay = async () => {
    if (!playback || playback.mode !== "replay") return;
    try {
      showStep(await client.getStep(playback.sourceId, playback.cursor));
      setBanner(null);
    } catch (err) {
      fail(err);
    }
  };

  const stopTimer = () => {
    if (timer !== null) {
      window.clearInterval(timer);
      timer = null;
    }
  };

  ui.loadButton.addEventListener("click", async () => {
    stopTimer();
    sessionId = null;
    try {
      const header = await client.getTrace(ui.traceSelect.value);
      playback = replayPlayback(header.id, header.n_steps);
      await refreshReplay();
    } catch (err) {
      fail(err);
    }
  });

  const nudge = async (delta: number) => {
    if (!playback) return;
    playback = stepCursor(playback, delta);
    await refreshReplay();
  };
  ui.prevButton.addEventListener("click", () => void nudge(-1));
  ui.nextButton.addEventListener("click", () => void nudge(1));

  ui.playButton.addEventListener("click", () => {
    if (!playback || playback.mode !== "replay") return;
    playback = togglePlay(playback);
    stopTimer();
    if (playback.playing) {
      timer = window.setInterval(() => {
        if (!playback) return;
        const next = tick(playback);
        if (next === playback) return;
        playback = next;
        if (!playback.playing) stopTimer();
        void refreshReplay();
      }, 600);
    }
  });

  ui.sessionButton.addEventListener("click", async () => {
    stopTimer();
    try {
      const seed = Math.floor(Math.random() * 1_000_000);
      const session = await client.createSession({ seed, mode: "human" });
      sessionId = session.id;
      playback = { ...replayPlayback(session.id, 1), mode: "live" };
      ui.stage.innerHTML = renderSvg(cubeViewFromState(session.state));
      ui.status.textContent = `live session ${session.id} (seed ${seed})`;
      setBanner(null);
    } catch (err) {
      fail(err);
    }
  });

  ui.actionButton.addEventListener("click", async () => {
    if (!sessionId || mutationInFlight) return;
    const raw = ui.actionInput.value.trim();
    const action = raw === "" ? null : Number(raw);
    mutationInFlight = true;
    ui.actionButton.disabled = true;
    try {
      const result = await client.postAction(sessionId, action);
      if (playback) playback = frontierAdvanced(playback);
      ui.stage.innerHTML = renderSvg(cubeViewFromState(result.state, result.belief));
      ui.status.textContent =
        actionToast(result.action.kind, result.env_reward, result.shaping_reward) +
        ` / score ${result.score}` + (result.done ? " / episode finished" : "");
      setBanner(null);
    } catch (err) {
      fail(err);
    } finally {
      mutationInFlight = false;
      ui.actionButton.disabled = false;
    }
  });

  void (async () => {
    try {
      const traces = await client.listTraces();
      ui.traceSelect.innerHTML = traces
        .map((t) => `<option value="${t.id}">${t.id} (score ${t.score})</option>`)
        .join("");
    } catch (err) {
      fail(err);
    }
  })();
}

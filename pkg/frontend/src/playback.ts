/** Navigation state for the viewer, kept as a pure reducer.
 *
 * Replay mode scrubs a recorded trace: the cursor ranges over [0, nSteps-1]
 * and stepping past either end clamps. Live mode follows an interactive
 * session: the frontier is the number of actions taken so far, the cursor
 * may review earlier steps but can never scrub past the frontier.
 */

export type PlaybackMode = "replay" | "live";

export interface PlaybackState {
  readonly mode: PlaybackMode;
  /** Trace id in replay mode, session id in live mode. */
  readonly sourceId: string;
  readonly cursor: number;
  /** Highest cursor currently reachable. */
  readonly frontier: number;
  readonly playing: boolean;
}

export function replayPlayback(traceId: string, nSteps: number): PlaybackState {
  return {
    mode: "replay",
    sourceId: traceId,
    cursor: 0,
    frontier: Math.max(0, nSteps - 1),
    playing: false,
  };
}

export function livePlayback(sessionId: string): PlaybackState {
  return { mode: "live", sourceId: sessionId, cursor: 0, frontier: 0, playing: false };
}

function clamp(value: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, value));
}

export function stepCursor(state: PlaybackState, delta: number): PlaybackState {
  const cursor = clamp(state.cursor + delta, 0, state.frontier);
  return cursor === state.cursor ? state : { ...state, cursor };
}

export function seekCursor(state: PlaybackState, cursor: number): PlaybackState {
  return stepCursor(state, cursor - state.cursor);
}

export function togglePlay(state: PlaybackState): PlaybackState {
  if (state.mode === "live") {
    return state;
  }
  return { ...state, playing: !state.playing };
}

/** One autoplay tick: advance while playing, pause at the end of the trace. */
export function tick(state: PlaybackState): PlaybackState {
  if (!state.playing) {
    return state;
  }
  if (state.cursor >= state.frontier) {
    return { ...state, playing: false };
  }
  return { ...state, cursor: state.cursor + 1 };
}

/** A live session took one more action: grow the frontier and follow it. */
export function frontierAdvanced(state: PlaybackState): PlaybackState {
  const frontier = state.frontier + 1;
  return { ...state, frontier, cursor: frontier };
}

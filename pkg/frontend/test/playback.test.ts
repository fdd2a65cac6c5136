import { describe, expect, it } from "vitest";

import type { StepPayload } from "../src/api.js";
import { cubeViewFromStep } from "../src/cubeView.js";
import {
  frontierAdvanced,
  livePlayback,
  replayPlayback,
  seekCursor,
  stepCursor,
  tick,
  togglePlay,
} from "../src/playback.js";
import { renderSvg } from "../src/render.js";
import { loadFixture } from "./helpers.js";

const steps = loadFixture<StepPayload[]>("steps.json");

describe("replay navigation", () => {
  it("starts at step 0 with the whole trace reachable", () => {
    const s = replayPlayback("trace-a", steps.length);
    expect(s.cursor).toBe(0);
    expect(s.frontier).toBe(steps.length - 1);
    expect(s.playing).toBe(false);
  });

  it("forward then back restores the identical state and view model", () => {
    const start = seekCursor(replayPlayback("trace-a", steps.length), 3);
    const roundTrip = stepCursor(stepCursor(start, 1), -1);
    expect(roundTrip).toEqual(start);

    const viewBefore = cubeViewFromStep(steps[start.cursor]!);
    const svgBefore = renderSvg(viewBefore);
    const viewAfter = cubeViewFromStep(steps[roundTrip.cursor]!);
    expect(viewAfter).toEqual(viewBefore);
    expect(renderSvg(viewAfter)).toBe(svgBefore);
  });

  it("clamps at both ends of the trace", () => {
    const atStart = replayPlayback("trace-a", steps.length);
    expect(stepCursor(atStart, -1)).toBe(atStart);
    const atEnd = seekCursor(atStart, steps.length - 1);
    expect(stepCursor(atEnd, 1).cursor).toBe(steps.length - 1);
    expect(seekCursor(atStart, 999).cursor).toBe(steps.length - 1);
    expect(seekCursor(atStart, -5).cursor).toBe(0);
  });

  it("autoplay ticks forward and pauses itself at the end", () => {
    let s = togglePlay(seekCursor(replayPlayback("trace-a", 3), 1));
    expect(s.playing).toBe(true);
    s = tick(s);
    expect(s.cursor).toBe(2);
    s = tick(s);
    expect(s.playing).toBe(false);
    expect(s.cursor).toBe(2);
    expect(tick(s)).toBe(s);
  });
});

describe("live sessions", () => {
  it("never scrubs past the frontier", () => {
    let s = livePlayback("s000001");
    expect(s.frontier).toBe(0);
    expect(stepCursor(s, 1)).toBe(s);
    s = frontierAdvanced(s);
    expect(s.frontier).toBe(1);
    expect(s.cursor).toBe(1);
    expect(stepCursor(s, 1)).toBe(s);
    const back = stepCursor(s, -1);
    expect(back.cursor).toBe(0);
    expect(stepCursor(back, 1).cursor).toBe(1);
  });

  it("follows the frontier as actions land", () => {
    let s = livePlayback("s000001");
    for (let k = 1; k <= 4; k += 1) {
      s = frontierAdvanced(s);
      expect(s.cursor).toBe(k);
      expect(s.frontier).toBe(k);
    }
  });

  it("ignores play/pause outside replay mode", () => {
    const s = livePlayback("s000001");
    expect(togglePlay(s)).toBe(s);
  });
});

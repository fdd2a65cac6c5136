import { describe, expect, it } from "vitest";

import type { StepPayload } from "../src/api.js";
import { cubeViewFromStep } from "../src/cubeView.js";
import { actionToast, opacityAttr, renderErrorBanner, renderSvg } from "../src/render.js";
import { countOccurrences, loadFixture } from "./helpers.js";

const steps = loadFixture<StepPayload[]>("steps.json");
const stepZero = steps[0]!;
const firstDeposit = steps.find((s) => s.action.kind === "deposit" && s.action.valid)!;

describe("step-0 markup", () => {
  const svg = renderSvg(cubeViewFromStep(stepZero));

  it("shows 12 potion markers and 3 stone markers", () => {
    expect(countOccurrences(svg, 'class="potion-marker"')).toBe(12);
    expect(countOccurrences(svg, 'class="stone-marker"')).toBe(3);
    expect(countOccurrences(svg, 'class="vertex"')).toBe(8);
    expect(countOccurrences(svg, 'class="edge"')).toBe(12);
  });

  it("positions each stone marker by its served latent coords", () => {
    for (const served of stepZero.state.stones) {
      const [c0, c1, c2] = served.latent as [number, number, number];
      const cx = 170 + 60 * c0 + 34 * c2 + 9 * (served.stone - 1);
      const cy = 170 - 60 * c1 - 26 * c2 - 10;
      expect(svg).toContain(
        `data-stone="${served.stone}" data-deposited="false" cx="${cx}" cy="${cy}"`,
      );
    }
  });

  it("labels the best and worst vertices", () => {
    expect(svg).toContain(">+15<");
    expect(svg).toContain(">-3<");
  });

  it("writes every edge opacity as the served marginal to 2 decimals", () => {
    for (let e = 0; e < 12; e += 1) {
      const prob = stepZero.belief!.edge_prob[e]!;
      expect(svg).toContain(
        `data-edge="${e}"`,
      );
      expect(svg).toMatch(
        new RegExp(`data-edge="${e}"[^/]*stroke-opacity="${prob.toFixed(2)}"`),
      );
    }
    for (const m of svg.matchAll(/stroke-opacity="([^"]+)"/g)) {
      expect(m[1]).toMatch(/^\d\.\d\d$/);
    }
  });

  it("writes every hue arrow opacity as the served marginal to 2 decimals", () => {
    for (let hue = 0; hue < 6; hue += 1) {
      const best = Math.max(...stepZero.belief!.potion_dir_prob[hue]!.flat());
      expect(svg).toContain(`data-hue="${hue}" opacity="${best.toFixed(2)}"`);
    }
  });
});

describe("deposit markup", () => {
  it("draws the deposited stone inside the cauldron", () => {
    const stone = firstDeposit.action.stone!;
    const after = renderSvg(cubeViewFromStep(steps[firstDeposit.t + 1]!));
    const cx = 60 + 44 * stone;
    expect(after).toContain(
      `data-stone="${stone}" data-deposited="true" cx="${cx}" cy="296"`,
    );
    expect(after).toContain('class="cauldron"');
  });
});

describe("chrome helpers", () => {
  it("formats opacity with exactly two decimals", () => {
    expect(opacityAttr(1)).toBe("1.00");
    expect(opacityAttr(1 / 3)).toBe("0.33");
    expect(opacityAttr(0.791666667)).toBe("0.79");
  });

  it("renders an escaped error banner", () => {
    const banner = renderErrorBanner('trace <b>"x"</b> & more not found');
    expect(banner).toContain('class="error-banner"');
    expect(banner).toContain("&lt;b&gt;");
    expect(banner).toContain("&amp; more");
    expect(banner).not.toContain("<b>");
  });

  it("describes rewards and shaping in the action toast", () => {
    expect(actionToast("noop", 0, 0)).toBe("noop: reward 0");
    expect(actionToast("apply", 0, -1)).toBe("apply: reward 0 (shaping -1)");
    expect(actionToast("deposit", 15, 0)).toBe("deposit: reward 15");
  });
});

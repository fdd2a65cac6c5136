/** SVG rendering of a CubeView.
 *
 * The renderer is a pure function from view model to markup string; the DOM
 * shell swaps the result in wholesale. All opacities are written with
 * exactly two decimal places so the markup mirrors the served marginals.
 */

import type { CubeView, HueArrow, StoneMarker } from "./cubeView.js";
import { projectVertex, vertexCoords } from "./cubeView.js";

export const HUE_FILLS: Record<string, string> = {
  red: "#d64541",
  green: "#2e8b57",
  yellow: "#e0b817",
  orange: "#e67e22",
  pink: "#e84e8a",
  turquoise: "#39b8b0",
};

const STONE_FILLS: Record<StoneMarker["color"], string> = {
  red: "#c0392b",
  blue: "#2b5cc0",
  green: "#27ae60",
};

const CAULDRON = { x: 60, y: 296, spacing: 44 };
const TRAY = { x: 22, y: 22, spacing: 24 };
const LEGEND = { x: 392, y: 64, spacing: 40 };

export function opacityAttr(p: number): string {
  return p.toFixed(2);
}

export function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function stonePosition(marker: StoneMarker): { x: number; y: number } {
  if (marker.deposited && marker.cauldronSlot !== null) {
    return { x: CAULDRON.x + CAULDRON.spacing * marker.cauldronSlot, y: CAULDRON.y };
  }
  const { x, y } = projectVertex(vertexCoords(marker.vertexId));
  return { x: x + 9 * (marker.stone - 1), y: y - 10 };
}

function arrowDelta(arrow: HueArrow): { dx: number; dy: number } {
  const span = 13 * arrow.direction;
  if (arrow.axis === 0) return { dx: span, dy: 0 };
  if (arrow.axis === 1) return { dx: 0, dy: -span };
  return { dx: span * 0.8, dy: -span * 0.6 };
}

export function renderSvg(view: CubeView): string {
  const parts: string[] = [];
  parts.push(
    '<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 470 330" class="cube-view">',
  );
  parts.push(
    `<text class="trial-label" x="12" y="318">trial ${view.trial} / step ${view.stepInTrial}</text>`,
  );

  for (const edge of view.edges) {
    const a = view.vertices[edge.from];
    const b = view.vertices[edge.to];
    if (!a || !b) continue;
    parts.push(
      `<line class="edge" data-edge="${edge.index}" x1="${a.x}" y1="${a.y}" ` +
        `x2="${b.x}" y2="${b.y}" stroke="#555" stroke-width="2" ` +
        `stroke-opacity="${opacityAttr(edge.opacity)}"/>`,
    );
  }

  for (const v of view.vertices) {
    parts.push(
      `<circle class="vertex" data-vertex="${v.id}" cx="${v.x}" cy="${v.y}" r="4" fill="#333"/>`,
    );
    parts.push(
      `<text class="vertex-reward" data-vertex="${v.id}" x="${v.x + 6}" y="${v.y - 6}">` +
        `${v.reward > 0 ? "+" : ""}${v.reward}</text>`,
    );
  }

  for (const marker of view.potions) {
    const cx = TRAY.x + TRAY.spacing * marker.slot;
    const fill = HUE_FILLS[marker.name] ?? "#888";
    parts.push(
      `<circle class="potion-marker" data-hue="${marker.hue}" cx="${cx}" cy="${TRAY.y}" ` +
        `r="7" fill="${fill}"><title>${escapeXml(marker.name)}</title></circle>`,
    );
  }

  parts.push(
    `<rect class="cauldron" x="${CAULDRON.x - 26}" y="${CAULDRON.y - 14}" ` +
      `width="${CAULDRON.spacing * 2 + 52}" height="28" rx="8" fill="none" stroke="#777"/>`,
  );
  for (const marker of view.stones) {
    const { x, y } = stonePosition(marker);
    parts.push(
      `<circle class="stone-marker" data-stone="${marker.stone}" ` +
        `data-deposited="${marker.deposited}" cx="${x}" cy="${y}" r="8" ` +
        `fill="${STONE_FILLS[marker.color]}" stroke="#111"/>`,
    );
  }

  for (const arrow of view.arrows) {
    const y = LEGEND.y + LEGEND.spacing * arrow.hue;
    const { dx, dy } = arrowDelta(arrow);
    const fill = HUE_FILLS[arrow.name] ?? "#888";
    parts.push(
      `<g class="hue-arrow" data-hue="${arrow.hue}" opacity="${opacityAttr(arrow.opacity)}">` +
        `<circle cx="${LEGEND.x}" cy="${y}" r="5" fill="${fill}"/>` +
        `<line x1="${LEGEND.x + 10}" y1="${y}" x2="${LEGEND.x + 10 + dx}" y2="${y + dy}" ` +
        `stroke="#222" stroke-width="2" marker-end="url(#arrowhead)"/></g>`,
    );
  }

  parts.push(
    '<defs><marker id="arrowhead" markerWidth="6" markerHeight="6" refX="5" refY="3" ' +
      'orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="#222"/></marker></defs>',
  );
  parts.push("</svg>");
  return parts.join("\n");
}

/** Inline banner for request failures; never throws, always returns markup. */
export function renderErrorBanner(message: string): string {
  return `<div class="error-banner" role="alert">${escapeXml(message)}</div>`;
}

/** One-line toast describing the outcome of a live action. */
export function actionToast(kind: string, envReward: number, shapingReward: number): string {
  const shaped = shapingReward !== 0 ? ` (shaping ${shapingReward})` : "";
  return `${kind}: reward ${envReward}${shaped}`;
}

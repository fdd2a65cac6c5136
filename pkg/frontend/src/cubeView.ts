/** Pure view model for one served snapshot of the task.
 *
 * Everything here is a function of the last payload the service returned:
 * no hidden state, no requests. The latent cube has 8 vertices indexed by a
 * 3-bit id (bit i set means coordinate i is +1), 12 edges grouped 4 per axis
 * in the same canonical order the service uses for `edge_prob`, and a reward
 * per vertex equal to the coordinate sum with +3 promoted to +15.
 */

import type { BeliefView, StateView, StepPayload } from "./api.js";

export const STONE_COLORS = ["red", "blue", "green"] as const;

export interface VertexNode {
  id: number;
  coords: [number, number, number];
  reward: number;
  x: number;
  y: number;
}

export interface EdgeElement {
  index: number;
  from: number;
  to: number;
  /** P(edge present) when a belief is attached; 1 otherwise. */
  opacity: number;
}

export interface StoneMarker {
  stone: number;
  color: (typeof STONE_COLORS)[number];
  /** Vertex the stone sits on (from its served latent coords). */
  vertexId: number;
  reward: number;
  deposited: boolean;
  /** Cauldron slot the marker moves to once deposited, else null. */
  cauldronSlot: number | null;
}

export interface PotionMarker {
  hue: number;
  name: string;
  /** Position within the tray; consumed potions are simply absent. */
  slot: number;
}

export interface HueArrow {
  hue: number;
  name: string;
  /** Most probable axis/direction for this hue under the served belief. */
  axis: number;
  direction: 1 | -1;
  /** The served marginal itself. */
  opacity: number;
}

export interface CubeView {
  trial: number;
  stepInTrial: number;
  vertices: VertexNode[];
  edges: EdgeElement[];
  stones: StoneMarker[];
  potions: PotionMarker[];
  arrows: HueArrow[];
}

export function vertexIdFromCoords(coords: number[]): number {
  let vid = 0;
  for (let axis = 0; axis < 3; axis += 1) {
    if ((coords[axis] ?? 0) > 0) {
      vid |= 1 << axis;
    }
  }
  return vid;
}

export function vertexCoords(vid: number): [number, number, number] {
  return [vid & 1 ? 1 : -1, vid >> 1 & 1 ? 1 : -1, vid >> 2 & 1 ? 1 : -1];
}

export function vertexReward(vid: number): number {
  const [a, b, c] = vertexCoords(vid);
  const total = a + b + c;
  return total === 3 ? 15 : total;
}

/** Oblique projection of a latent corner onto the 2D canvas. */
export function projectVertex(coords: [number, number, number]): { x: number; y: number } {
  return {
    x: 170 + 60 * coords[0] + 34 * coords[2],
    y: 170 - 60 * coords[1] - 26 * coords[2],
  };
}

function otherAxes(axis: number): [number, number] {
  if (axis === 0) return [1, 2];
  if (axis === 1) return [0, 2];
  return [0, 1];
}

/** Endpoints of canonical edge e: the low (-1) vertex first, then its +1 twin. */
export function edgeEndpoints(edge: number): [number, number] {
  const axis = Math.floor(edge / 4);
  const rest = edge % 4;
  const [o1, o2] = otherAxes(axis);
  const lo = ((rest >> 1) << o1) | ((rest & 1) << o2);
  return [lo, lo | (1 << axis)];
}

function buildVertices(): VertexNode[] {
  const nodes: VertexNode[] = [];
  for (let vid = 0; vid < 8; vid += 1) {
    const coords = vertexCoords(vid);
    const { x, y } = projectVertex(coords);
    nodes.push({ id: vid, coords, reward: vertexReward(vid), x, y });
  }
  return nodes;
}

function buildEdges(belief?: BeliefView): EdgeElement[] {
  const edges: EdgeElement[] = [];
  for (let e = 0; e < 12; e += 1) {
    const [from, to] = edgeEndpoints(e);
    const opacity = belief ? belief.edge_prob[e] ?? 1 : 1;
    edges.push({ index: e, from, to, opacity });
  }
  return edges;
}

function buildStones(state: StateView): StoneMarker[] {
  return state.stones.map((s) => ({
    stone: s.stone,
    color: STONE_COLORS[s.stone % STONE_COLORS.length] as (typeof STONE_COLORS)[number],
    vertexId: vertexIdFromCoords(s.latent),
    reward: s.reward,
    deposited: s.deposited,
    cauldronSlot: s.deposited ? s.stone : null,
  }));
}

function buildPotions(state: StateView): PotionMarker[] {
  const markers: PotionMarker[] = [];
  let slot = 0;
  for (const entry of state.potions.by_hue) {
    for (let i = 0; i < entry.count; i += 1) {
      markers.push({ hue: entry.hue, name: entry.name, slot });
      slot += 1;
    }
  }
  return markers;
}

function buildArrows(state: StateView, belief?: BeliefView): HueArrow[] {
  if (!belief) {
    return [];
  }
  const names = new Map(state.potions.by_hue.map((e) => [e.hue, e.name]));
  const arrows: HueArrow[] = [];
  for (let hue = 0; hue < belief.potion_dir_prob.length; hue += 1) {
    const byAxis = belief.potion_dir_prob[hue] ?? [];
    let best = { axis: 0, dirbit: 0, p: -1 };
    for (let axis = 0; axis < byAxis.length; axis += 1) {
      for (let dirbit = 0; dirbit < 2; dirbit += 1) {
        const p = byAxis[axis]?.[dirbit] ?? 0;
        if (p > best.p) {
          best = { axis, dirbit, p };
        }
      }
    }
    arrows.push({
      hue,
      name: names.get(hue) ?? `hue ${hue}`,
      axis: best.axis,
      direction: best.dirbit === 1 ? 1 : -1,
      opacity: best.p,
    });
  }
  return arrows;
}

export function cubeViewFromState(state: StateView, belief?: BeliefView): CubeView {
  return {
    trial: state.trial,
    stepInTrial: state.step_in_trial,
    vertices: buildVertices(),
    edges: buildEdges(belief),
    stones: buildStones(state),
    potions: buildPotions(state),
    arrows: buildArrows(state, belief),
  };
}

export function cubeViewFromStep(step: StepPayload): CubeView {
  return cubeViewFromState(step.state, step.belief);
}

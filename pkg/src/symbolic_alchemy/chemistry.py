"""Generative process for stone/potion chemistries on the 3-cube.

A chemistry ties together three independently sampled pieces:

* ``PotionMap``: which latent axis each potion-colour pair acts on, and in
  which direction.
* ``EdgeSet``: which of the 12 cube edges admit transitions at all.
* ``PerceptMap``: how latent coordinates show up as perceptual features.

Latent vertices live on {-1,+1}^3 and are addressed by an integer id in
0..7 (coordinate -1 -> bit 0, +1 -> bit 1, axis a -> bit a).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

N_AXES = 3
N_VERTICES = 8
N_EDGES = 12
N_HUES = 6

HUES = ("red", "green", "yellow", "orange", "pink", "turquoise")
# Opposite hues sit next to each other, so opposite(h) == h ^ 1.
HUE_PAIRS = ((0, 1), (2, 3), (4, 5))

PERCEPT_DIMS = ("color", "size", "shape")
# Label at -1, label at +1, per perceptual dimension.
PERCEPT_LABELS = (("blue", "purple"), ("small", "large"), ("round", "pointy"))

AXIS_PERMS = tuple(itertools.permutations(range(N_AXES)))

NULL_NONE = "none"
NULL_AT_ENDPOINT = "at_endpoint"
NULL_MISSING_EDGE = "missing_edge"


class ChemistryGenError(ValueError):
    """Raised when a GenConfig cannot produce a valid chemistry."""


def opposite_hue(hue: int) -> int:
    return hue ^ 1


def hue_pair(hue: int) -> int:
    return hue >> 1


def vertex_id(coords) -> int:
    """Binarize a {-1,+1}^3 coordinate triple into an id in 0..7."""
    vid = 0
    for axis in range(N_AXES):
        if coords[axis] > 0:
            vid |= 1 << axis
    return vid


def vertex_coords(vid: int) -> np.ndarray:
    return np.array([1 if vid >> a & 1 else -1 for a in range(N_AXES)], dtype=np.int8)


def reward_of(v) -> int:
    """Reward of a latent vertex: coordinate sum, with +3 promoted to +15."""
    if isinstance(v, (int, np.integer)):
        v = vertex_coords(int(v))
    total = int(v[0]) + int(v[1]) + int(v[2])
    return 15 if total == 3 else total


REWARD_BY_ID = np.array([reward_of(vid) for vid in range(N_VERTICES)], dtype=np.int8)


def other_axes(axis: int) -> tuple[int, int]:
    return tuple(a for a in range(N_AXES) if a != axis)


def edge_index(axis: int, vid: int) -> int:
    """Canonical index of the edge along `axis` through vertex `vid`.

    Edges are grouped by axis (4 per axis); within a group they are ordered
    by the binarized coordinates of the two remaining axes, ascending.
    """
    o1, o2 = other_axes(axis)
    return 4 * axis + 2 * (vid >> o1 & 1) + (vid >> o2 & 1)


def edge_endpoints(edge: int) -> tuple[int, int]:
    """Vertex ids joined by a canonical edge, low end (coord -1) first."""
    axis, rest = divmod(edge, 4)
    o1, o2 = other_axes(axis)
    lo = (rest >> 1) << o1 | (rest & 1) << o2
    return lo, lo | 1 << axis


# edge id along each axis through each vertex, shape (8, 3)
EDGE_THROUGH = np.array(
    [[edge_index(a, vid) for a in range(N_AXES)] for vid in range(N_VERTICES)],
    dtype=np.int8,
)


@dataclass(frozen=True)
class PotionMap:
    """Assigns each hue pair a latent axis and a direction.

    ``axis_of_pair[p]`` is the axis pair p acts on (a permutation of 0..2);
    ``pair_sign[p]`` is the direction the even hue of pair p pushes toward.
    The odd hue pushes the other way.
    """

    axis_of_pair: tuple[int, int, int]
    pair_sign: tuple[int, int, int]

    def axis_of(self, hue: int) -> int:
        return self.axis_of_pair[hue_pair(hue)]

    def direction_of(self, hue: int) -> int:
        sign = self.pair_sign[hue_pair(hue)]
        return sign if hue % 2 == 0 else -sign

    @property
    def index(self) -> int:
        perm = AXIS_PERMS.index(self.axis_of_pair)
        bits = sum(1 << p for p in range(3) if self.pair_sign[p] > 0)
        return perm * 8 + bits

    @staticmethod
    def from_index(idx: int) -> "PotionMap":
        perm, bits = divmod(idx, 8)
        signs = tuple(1 if bits >> p & 1 else -1 for p in range(3))
        return PotionMap(AXIS_PERMS[perm], signs)


@dataclass(frozen=True)
class PerceptMap:
    """Maps latent axes onto perceptual dimensions with per-dimension polarity.

    ``dim_of_axis[a]`` is the perceptual dimension showing latent axis a;
    ``polarity[d]`` multiplies the coordinate shown on dimension d.
    Axis permutations plus sign flips only, no rotations.
    """

    dim_of_axis: tuple[int, int, int]
    polarity: tuple[int, int, int]

    def to_percept(self, coords) -> np.ndarray:
        out = np.zeros(N_AXES, dtype=np.int8)
        for axis in range(N_AXES):
            dim = self.dim_of_axis[axis]
            out[dim] = self.polarity[dim] * coords[axis]
        return out

    def to_latent(self, percept) -> np.ndarray:
        out = np.zeros(N_AXES, dtype=np.int8)
        for axis in range(N_AXES):
            dim = self.dim_of_axis[axis]
            out[axis] = self.polarity[dim] * percept[dim]
        return out

    @property
    def index(self) -> int:
        perm = AXIS_PERMS.index(self.dim_of_axis)
        bits = sum(1 << d for d in range(3) if self.polarity[d] > 0)
        return perm * 8 + bits

    @staticmethod
    def from_index(idx: int) -> "PerceptMap":
        perm, bits = divmod(idx, 8)
        pol = tuple(1 if bits >> d & 1 else -1 for d in range(3))
        return PerceptMap(AXIS_PERMS[perm], pol)


IDENTITY_PERCEPT_MAP = PerceptMap((0, 1, 2), (1, 1, 1))


def percept_labels(percept) -> tuple[str, str, str]:
    return tuple(
        PERCEPT_LABELS[d][1] if percept[d] > 0 else PERCEPT_LABELS[d][0]
        for d in range(N_AXES)
    )


@dataclass(frozen=True)
class EdgeSet:
    """Present cube edges as a 12-bit mask (bit e set -> edge e present)."""

    mask: int

    def present(self, edge: int) -> bool:
        return bool(self.mask >> edge & 1)

    @property
    def n_missing(self) -> int:
        return N_EDGES - bin(self.mask).count("1")

    def missing_edges(self) -> tuple[int, ...]:
        return tuple(e for e in range(N_EDGES) if not self.present(e))

    def is_connected(self) -> bool:
        return mask_is_connected(self.mask)


FULL_EDGE_MASK = (1 << N_EDGES) - 1


def mask_is_connected(mask: int) -> bool:
    """Flood-fill over all 8 vertices; every vertex must be reached."""
    seen = 1  # vertex 0
    frontier = [0]
    while frontier:
        vid = frontier.pop()
        for axis in range(N_AXES):
            if not mask >> edge_index(axis, vid) & 1:
                continue
            nxt = vid ^ 1 << axis
            if not seen >> nxt & 1:
                seen |= 1 << nxt
                frontier.append(nxt)
    return seen == (1 << N_VERTICES) - 1


@lru_cache(maxsize=None)
def connected_masks_with_missing(m: int) -> tuple[int, ...]:
    """All edge masks with exactly m absent edges whose graph stays connected."""
    masks = []
    for absent in itertools.combinations(range(N_EDGES), m):
        mask = FULL_EDGE_MASK
        for e in absent:
            mask &= ~(1 << e)
        if mask_is_connected(mask):
            masks.append(mask)
    return tuple(masks)


# A connected graph on 8 vertices needs at least 7 of the 12 edges, so at
# most 5 can be missing.
MAX_MISSING_EDGES = 5


@dataclass(frozen=True)
class GenConfig:
    """Sampling distribution over chemistries.

    ``missing_edges`` lists the allowed counts of absent edges, drawn with
    ``weights`` (uniform when None). Edge sets are rejection-sampled until
    connected; counts above MAX_MISSING_EDGES can never connect and raise
    ChemistryGenError up front.
    """

    missing_edges: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    weights: tuple[float, ...] | None = None
    max_rejects: int = 10_000

    def validate(self) -> None:
        if not self.missing_edges:
            raise ChemistryGenError("missing_edges support is empty")
        for m in self.missing_edges:
            if not 0 <= m <= N_EDGES:
                raise ChemistryGenError(f"missing-edge count {m} out of range")
            if m > MAX_MISSING_EDGES:
                raise ChemistryGenError(
                    f"missing-edge count {m} cannot leave the cube connected "
                    f"(needs at least {N_VERTICES - 1} of {N_EDGES} edges)"
                )
        if self.weights is not None:
            if len(self.weights) != len(self.missing_edges):
                raise ChemistryGenError("weights length != missing_edges length")
            if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
                raise ChemistryGenError("weights must be nonnegative and sum > 0")

    def missing_probs(self) -> np.ndarray:
        self.validate()
        if self.weights is None:
            p = np.full(len(self.missing_edges), 1.0 / len(self.missing_edges))
        else:
            p = np.asarray(self.weights, dtype=np.float64)
            p = p / p.sum()
        return p


@dataclass(frozen=True)
class Chemistry:
    potion_map: PotionMap
    edges: EdgeSet
    percept_map: PerceptMap

    @property
    def n_missing(self) -> int:
        return self.edges.n_missing

    def latent_to_percept(self, vid: int) -> np.ndarray:
        return self.percept_map.to_percept(vertex_coords(vid))

    def percept_to_latent(self, percept) -> int:
        return vertex_id(self.percept_map.to_latent(percept))

    def to_record(self) -> dict:
        return {
            "potion_map": self.potion_map.index,
            "edge_mask": self.edges.mask,
            "percept_map": self.percept_map.index,
        }

    @staticmethod
    def from_record(rec: dict) -> "Chemistry":
        return Chemistry(
            PotionMap.from_index(rec["potion_map"]),
            EdgeSet(rec["edge_mask"]),
            PerceptMap.from_index(rec["percept_map"]),
        )


def apply_potion_latent(chem: Chemistry, vid: int, hue: int) -> tuple[int, str]:
    """Outcome of dipping a stone at latent vertex `vid` into a potion of `hue`.

    Returns (new vertex id, null cause). The stone moves one step along the
    hue's axis when it is not already at that endpoint and the edge exists;
    otherwise it stays put with the cause recorded.
    """
    axis = chem.potion_map.axis_of(hue)
    direction = chem.potion_map.direction_of(hue)
    at_positive = bool(vid >> axis & 1)
    if (direction > 0) == at_positive:
        return vid, NULL_AT_ENDPOINT
    if not chem.edges.present(edge_index(axis, vid)):
        return vid, NULL_MISSING_EDGE
    return vid ^ 1 << axis, NULL_NONE


def _sample_chemistry(rng: np.random.Generator, cfg: GenConfig) -> Chemistry:
    cfg.validate()
    potion = PotionMap.from_index(int(rng.integers(48)))
    percept = PerceptMap.from_index(int(rng.integers(48)))
    probs = cfg.missing_probs()
    m = int(cfg.missing_edges[rng.choice(len(cfg.missing_edges), p=probs)])
    mask = FULL_EDGE_MASK
    for _ in range(cfg.max_rejects):
        absent = rng.choice(N_EDGES, size=m, replace=False)
        mask = FULL_EDGE_MASK
        for e in absent:
            mask &= ~(1 << int(e))
        if mask_is_connected(mask):
            return Chemistry(potion, EdgeSet(mask), percept)
    raise ChemistryGenError(
        f"no connected edge set with {m} missing edges after {cfg.max_rejects} rejections"
    )


def sample_chemistry(seed: int, cfg: GenConfig = GenConfig()) -> Chemistry:
    """Deterministically sample a chemistry from the seeded generative process."""
    return _sample_chemistry(np.random.default_rng(seed), cfg)


def enumerate_chemistries(cfg: GenConfig = GenConfig()):
    """Yield (chemistry, prior weight) over the full support of `cfg`.

    Weights follow the generative process: the configured distribution over
    missing-edge counts, uniform over connected edge sets within a count, and
    uniform over the 48 potion maps and 48 percept maps.
    """
    probs = cfg.missing_probs()
    for m, p_m in zip(cfg.missing_edges, probs):
        masks = connected_masks_with_missing(m)
        w = p_m / (len(masks) * 48 * 48)
        for mask in masks:
            for pm_idx in range(48):
                potion = PotionMap.from_index(pm_idx)
                for xm_idx in range(48):
                    yield (
                        Chemistry(potion, EdgeSet(mask), PerceptMap.from_index(xm_idx)),
                        w,
                    )


def enumerate_chemistry_arrays(cfg: GenConfig = GenConfig()):
    """Array form of enumerate_chemistries for vectorized consumers.

    Returns (potion_idx, percept_idx, edge_mask, weight) aligned arrays; one
    row per chemistry in the support, same order as enumerate_chemistries.
    """
    probs = cfg.missing_probs()
    pm_blocks, xm_blocks, mask_blocks, w_blocks = [], [], [], []
    combo_pm = np.repeat(np.arange(48, dtype=np.int16), 48)
    combo_xm = np.tile(np.arange(48, dtype=np.int16), 48)
    for m, p_m in zip(cfg.missing_edges, probs):
        masks = np.asarray(connected_masks_with_missing(m), dtype=np.int16)
        w = p_m / (len(masks) * 48 * 48)
        n = len(masks) * 48 * 48
        pm_blocks.append(np.tile(combo_pm, len(masks)))
        xm_blocks.append(np.tile(combo_xm, len(masks)))
        mask_blocks.append(np.repeat(masks, 48 * 48))
        w_blocks.append(np.full(n, w))
    return (
        np.concatenate(pm_blocks),
        np.concatenate(xm_blocks),
        np.concatenate(mask_blocks),
        np.concatenate(w_blocks),
    )

"""Episodic planning network: encoder, episodic memory, attention, LSTM.

Per step the agent (1) encodes the observation through two 32-unit affine
layers with an ELU between, (2) concatenates every episodic-memory row with
the raw observation, embeds the rows to 256, applies a pre-LayerNorm
multi-head attention residual s* = ReLU(x + MHA(LayerNorm(x))), a two-layer
64-unit MLP, and a feature-wise max over rows to get a 64-dim readout
(zeros while memory is empty), then (3) feeds [encoded obs, previous action
one-hot, previous reward, readout] to a 256-unit LSTM with linear policy
and value heads on its hidden state.

Memory entries hold the acted stone's observation slice before and after a
potion application, the hue one-hot, and the received reward; only valid
Apply steps are written (a rejected application transforms nothing). Under
the canonical encoding the memory instead stores [s_t, a_t one-hot, s_t+1]
for every step.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, fields

import numpy as np

from ..chemistry import vertex_coords
from ..environment import EnvConfig, StepRecord, n_actions, obs_dim
from .autodiff import (
    ShapeError,
    Tensor,
    add,
    affine,
    concat,
    elu,
    layer_norm,
    lstm_cell,
    matmul,
    max_over_rows,
    relu,
    reshape,
    scale,
    slice_axis,
    softmax,
    tensor,
    transpose2,
)

CHECKPOINT_MAGIC = b"EPNCKPT1"


@dataclass(frozen=True)
class EpnDims:
    """Layer widths; defaults follow the published architecture exactly."""

    obs: int = 21
    n_actions: int = 22
    mem_entry: int = 17
    encoder: int = 32
    embed: int = 256
    heads: int = 4
    head_dim: int = 64
    mlp: int = 64
    lstm: int = 256
    memory_capacity: int = 150

    @property
    def lstm_input(self) -> int:
        return self.encoder + self.n_actions + 1 + self.mlp

    @property
    def mem_row(self) -> int:
        return self.mem_entry + self.obs

    def validate(self) -> None:
        if self.heads * self.head_dim != self.embed:
            raise ShapeError(
                f"attention: {self.heads} heads x {self.head_dim} dims "
                f"must equal the embedding width {self.embed}"
            )

    @staticmethod
    def for_env(cfg: EnvConfig) -> "EpnDims":
        d_obs = obs_dim(cfg)
        d_act = n_actions(cfg)
        if cfg.memory_encoding == "modified":
            entry = 17
        else:
            entry = 2 * d_obs + d_act
        return EpnDims(obs=d_obs, n_actions=d_act, mem_entry=entry)


@dataclass
class EpnParams:
    """All learnable tensors, in checkpoint order."""

    enc_w1: Tensor
    enc_b1: Tensor
    enc_w2: Tensor
    enc_b2: Tensor
    mem_w: Tensor
    mem_b: Tensor
    ln_gain: Tensor
    ln_bias: Tensor
    attn_wq: Tensor
    attn_bq: Tensor
    attn_wk: Tensor
    attn_bk: Tensor
    attn_wv: Tensor
    attn_bv: Tensor
    attn_wo: Tensor
    attn_bo: Tensor
    mlp_w1: Tensor
    mlp_b1: Tensor
    mlp_w2: Tensor
    mlp_b2: Tensor
    lstm_wx: Tensor
    lstm_wh: Tensor
    lstm_b: Tensor
    pi_w: Tensor
    pi_b: Tensor
    v_w: Tensor
    v_b: Tensor
    dims: EpnDims = field(default_factory=EpnDims)

    def named(self) -> list[tuple[str, Tensor]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)
                if f.name != "dims"]

    def n_parameters(self) -> int:
        return sum(t.data.size for _, t in self.named())

    def astype(self, dtype) -> "EpnParams":
        kwargs = {name: Tensor(t.data.astype(dtype)) for name, t in self.named()}
        return EpnParams(dims=self.dims, **kwargs)


def init_params(dims: EpnDims = EpnDims(), seed: int = 0,
                dtype=np.float32) -> EpnParams:
    """Uniform fan-in initialization, biases zero, fully seeded."""
    dims.validate()
    rng = np.random.default_rng([seed, 0xE9])

    def w(fan_in: int, fan_out: int) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in)
        return Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype))

    def b(n: int, value: float = 0.0) -> Tensor:
        return Tensor(np.full(n, value, dtype=dtype))

    e, m, h, a = dims.encoder, dims.embed, dims.lstm, dims.n_actions
    return EpnParams(
        enc_w1=w(dims.obs, e), enc_b1=b(e),
        enc_w2=w(e, e), enc_b2=b(e),
        mem_w=w(dims.mem_row, m), mem_b=b(m),
        ln_gain=Tensor(np.ones(m, dtype=dtype)), ln_bias=b(m),
        attn_wq=w(m, m), attn_bq=b(m),
        attn_wk=w(m, m), attn_bk=b(m),
        attn_wv=w(m, m), attn_bv=b(m),
        attn_wo=w(m, m), attn_bo=b(m),
        mlp_w1=w(m, dims.mlp), mlp_b1=b(dims.mlp),
        mlp_w2=w(dims.mlp, dims.mlp), mlp_b2=b(dims.mlp),
        lstm_wx=w(dims.lstm_input, 4 * h), lstm_wh=w(h, 4 * h), lstm_b=b(4 * h),
        pi_w=w(h, a), pi_b=b(a),
        v_w=w(h, 1), v_b=b(1),
        dims=dims,
    )


class EpisodicMemory:
    """Bounded row buffer, oldest evicted first, cleared per episode."""

    def __init__(self, capacity: int, width: int):
        self.capacity = capacity
        self.width = width
        self.rows: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.rows)

    def write(self, row: np.ndarray) -> None:
        if row.shape != (self.width,):
            raise ShapeError(f"memory: row {row.shape} != width {self.width}")
        self.rows.append(np.asarray(row, dtype=np.float64))
        if len(self.rows) > self.capacity:
            self.rows.pop(0)

    def as_matrix(self) -> np.ndarray:
        return np.stack(self.rows, axis=0)


@dataclass
class AgentState:
    """LSTM carry, episodic memory, and the previous transition context."""

    h: Tensor
    c: Tensor
    memory: EpisodicMemory
    prev_action: int | None = None
    prev_reward: float = 0.0

    def detached(self) -> "AgentState":
        state = AgentState(self.h.detach(), self.c.detach(), self.memory,
                           self.prev_action, self.prev_reward)
        return state


def initial_state(dims: EpnDims = EpnDims(), dtype=np.float32) -> AgentState:
    return AgentState(
        h=Tensor(np.zeros((1, dims.lstm), dtype=dtype)),
        c=Tensor(np.zeros((1, dims.lstm), dtype=dtype)),
        memory=EpisodicMemory(dims.memory_capacity, dims.mem_entry),
    )


@dataclass
class ForwardTrace:
    """Per-step activations for the single-unit analyses."""

    x: np.ndarray | None
    phi: np.ndarray | None
    s_star: np.ndarray | None
    pooled: np.ndarray
    lstm_h: np.ndarray
    logits: np.ndarray
    value: float


def _attention_block(params: EpnParams, x: Tensor) -> Tensor:
    """phi(x) = MHA(LayerNorm(x)) over memory rows."""
    dims = params.dims
    normed = layer_norm(x, params.ln_gain, params.ln_bias, tag="attention.ln")
    q = affine(normed, params.attn_wq, params.attn_bq, tag="attention.q")
    k = affine(normed, params.attn_wk, params.attn_bk, tag="attention.k")
    v = affine(normed, params.attn_wv, params.attn_bv, tag="attention.v")
    outs = []
    inv_sqrt = 1.0 / np.sqrt(dims.head_dim)
    for head in range(dims.heads):
        lo, hi = head * dims.head_dim, (head + 1) * dims.head_dim
        qh, kh, vh = (slice_axis(t, lo, hi) for t in (q, k, v))
        scores = scale(matmul(qh, transpose2(kh), tag="attention.scores"), inv_sqrt)
        outs.append(matmul(softmax(scores, tag="attention.softmax"), vh,
                           tag="attention.mix"))
    heads = concat(outs, axis=-1, tag="attention.heads")
    return affine(heads, params.attn_wo, params.attn_bo, tag="attention.out")


def epn_forward(
    params: EpnParams,
    obs: np.ndarray,
    state: AgentState,
    record: bool = False,
) -> tuple[Tensor, Tensor, AgentState, ForwardTrace | None]:
    """One agent step; returns (policy logits (1,A), value (1,1), state, trace)."""
    dims = params.dims
    dtype = params.pi_w.dtype
    if obs.shape != (dims.obs,):
        raise ShapeError(f"encoder: observation {obs.shape}, expected ({dims.obs},)")

    obs_row = tensor(obs.reshape(1, -1), dtype=dtype)
    enc = affine(obs_row, params.enc_w1, params.enc_b1, tag="encoder.l1")
    enc = affine(elu(enc), params.enc_w2, params.enc_b2, tag="encoder.l2")

    x_raw = None
    phi_data = None
    s_star_data = None
    if len(state.memory) > 0:
        mem = state.memory.as_matrix()
        x_raw = np.concatenate(
            [mem, np.broadcast_to(obs, (len(mem), dims.obs))], axis=1
        )
        x = affine(tensor(x_raw, dtype=dtype), params.mem_w, params.mem_b,
                   tag="memory.embed")
        phi = _attention_block(params, x)
        s_star = relu(add(x, phi))
        rows = affine(s_star, params.mlp_w1, params.mlp_b1, tag="memory.mlp1")
        rows = affine(elu(rows), params.mlp_w2, params.mlp_b2, tag="memory.mlp2")
        pooled = reshape(max_over_rows(rows, tag="memory.pool"), (1, -1))
        phi_data = phi.data.copy() if record else None
        s_star_data = s_star.data.copy() if record else None
    else:
        pooled = tensor(np.zeros((1, dims.mlp)), dtype=dtype)

    prev_onehot = np.zeros((1, dims.n_actions))
    if state.prev_action is not None:
        prev_onehot[0, state.prev_action] = 1.0
    lstm_in = concat(
        [
            enc,
            tensor(prev_onehot, dtype=dtype),
            tensor(np.array([[state.prev_reward]]), dtype=dtype),
            pooled,
        ],
        axis=1,
        tag="lstm.input",
    )
    h, c = lstm_cell(lstm_in, state.h, state.c, params.lstm_wx, params.lstm_wh,
                     params.lstm_b, tag="lstm")
    logits = affine(h, params.pi_w, params.pi_b, tag="policy.head")
    value = affine(h, params.v_w, params.v_b, tag="value.head")

    new_state = AgentState(h, c, state.memory, state.prev_action, state.prev_reward)
    trace = None
    if record:
        trace = ForwardTrace(
            x=None if x_raw is None else x_raw.copy(),
            phi=phi_data,
            s_star=s_star_data,
            pooled=pooled.data.reshape(-1).copy(),
            lstm_h=h.data.reshape(-1).copy(),
            logits=logits.data.reshape(-1).copy(),
            value=float(value.data[0, 0]),
        )
    return logits, value, new_state, trace


def write_memory(state: AgentState, rec: StepRecord, cfg: EnvConfig,
                 obs_after: np.ndarray | None = None) -> None:
    """Append this step's memory entry when the encoding calls for one.

    Modified encoding: the entry is [acted stone's 5-feature block before,
    hue one-hot, received reward (with shaping), acted stone's block after];
    valid Apply steps only. Canonical encoding: [obs, action one-hot, next
    obs] for every step, which requires ``obs_after``.
    """
    if cfg.memory_encoding == "modified":
        info = rec.info
        if info.kind != "apply" or not info.valid:
            return
        stone = info.stone
        before = rec.observation[5 * stone:5 * stone + 5]
        hue_onehot = np.zeros(6)
        hue_onehot[info.hue] = 1.0
        after = np.concatenate([
            vertex_coords(info.percept_after).astype(np.float64),
            [info.reward_after / 15.0, 0.0],
        ])
        row = np.concatenate([before, hue_onehot,
                              [rec.env_reward + rec.shaping_reward], after])
    else:
        if obs_after is None:
            raise ValueError("canonical memory entries need the next observation")
        onehot = np.zeros(n_actions(cfg))
        onehot[rec.action_index] = 1.0
        row = np.concatenate([rec.observation, onehot, obs_after])
    state.memory.write(row)


def sample_action(
    logits: np.ndarray,
    rng: np.random.Generator,
    mode: str = "sample",
    legal_mask: np.ndarray | None = None,
) -> int:
    """Softmax-sample (training) or argmax (evaluation) an action index."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    if legal_mask is not None:
        z = np.where(legal_mask, z, -np.inf)
    if mode == "argmax":
        return int(np.argmax(z))
    z = z - z.max()
    p = np.exp(z)
    p /= p.sum()
    return int(rng.choice(len(p), p=p))


def save_params(params: EpnParams, path) -> None:
    """Versioned binary checkpoint: header json + contiguous row-major data."""
    names = []
    blobs = []
    for name, t in params.named():
        names.append({"name": name, "shape": list(t.shape), "dtype": str(t.dtype)})
        blobs.append(np.ascontiguousarray(t.data).tobytes())
    dims = {f.name: getattr(params.dims, f.name) for f in fields(EpnDims)}
    header = json.dumps({"version": 1, "dims": dims, "tensors": names},
                        sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_params(path) -> EpnParams:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: magic {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        if header["version"] != 1:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        dims = EpnDims(**header["dims"])
        kwargs = {}
        for meta in header["tensors"]:
            dtype = np.dtype(meta["dtype"])
            shape = tuple(meta["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * dtype.itemsize), dtype=dtype)
            kwargs[meta["name"]] = Tensor(data.reshape(shape).copy())
    return EpnParams(dims=dims, **kwargs)

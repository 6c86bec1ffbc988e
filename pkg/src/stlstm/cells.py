"""LSTM, time-aware LSTM and sparse time LSTM cells with exact BPTT.

All step functions are batched: the leading axis of every array is the
batch. Gate blocks are fused along the last axis in the order
``(forget, input, candidate, output)``.

A single :class:`CellConfig` covers the three cell families:

* ``n_delta == 0`` and ``n_sparse == 0``: plain LSTM,
* ``n_sparse == 0``: time-aware LSTM (memory decomposition + decay),
* otherwise: sparse time LSTM, whose hidden state is the concatenation of
  the dense hidden part and an aggregate of per-sparse-feature hidden states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import ACTIVATIONS, activation_grad_from_output, glorot_uniform, orthogonal, sigmoid

AGGREGATIONS = ("dense_layer", "average", "max")
_E = np.e


@dataclass(frozen=True)
class CellConfig:
    input_dim: int
    hidden_dense: int
    n_delta: int = 0
    n_sparse: int = 0
    hidden_sparse: int = 0
    aggregation: str = "dense_layer"
    candidate_activation: str = "tanh"
    share_sparse_weights: bool = False
    aggregate_output_gate: bool = False

    def __post_init__(self):
        if self.input_dim < 0 or self.n_delta < 0 or self.n_sparse < 0:
            raise ValueError("dimensions must be non-negative")
        if self.hidden_dense < 1:
            raise ValueError("hidden_dense must be >= 1")
        if self.n_sparse > 0 and self.hidden_sparse < 1:
            raise ValueError("hidden_sparse must be >= 1 when sparse features are configured")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if self.candidate_activation not in ACTIVATIONS:
            raise ValueError(f"candidate_activation must be one of {tuple(ACTIVATIONS)}")

    @property
    def kind(self) -> str:
        if self.n_sparse:
            return "stlstm"
        return "tlstm" if self.n_delta else "lstm"

    @property
    def hidden_sp(self) -> int:
        return self.hidden_sparse if self.n_sparse else 0

    @property
    def hidden_total(self) -> int:
        return self.hidden_dense + self.hidden_sp

    @property
    def n_sparse_sets(self) -> int:
        return 1 if self.share_sparse_weights else self.n_sparse


def init_cell_params(cfg: CellConfig, rng) -> dict:
    """Glorot-uniform input weights, orthogonal recurrent weights, zero biases.

    The forget-gate bias starts at 1.
    """
    hd, hs, H = cfg.hidden_dense, cfg.hidden_sp, cfg.hidden_total
    p = {}
    p["W_h"] = np.concatenate([orthogonal(H, hd, rng) for _ in range(4)], axis=1)
    if cfg.input_dim:
        p["W_x"] = np.concatenate([glorot_uniform(cfg.input_dim, hd, rng) for _ in range(4)], axis=1)
    else:
        p["W_x"] = np.zeros((0, 4 * hd))
    b = np.zeros(4 * hd)
    b[:hd] = 1.0
    p["b"] = b
    if cfg.n_delta:
        p["W_decay"] = glorot_uniform(hd, hd, rng)
        p["b_decay"] = np.zeros(hd)
        p["alpha"] = np.ones(cfg.n_delta)
    if cfg.n_sparse:
        K = cfg.n_sparse_sets
        p["Wsp_h"] = np.stack(
            [np.concatenate([orthogonal(H, hs, rng) for _ in range(4)], axis=1) for _ in range(K)]
        )
        p["Wsp_x"] = np.stack([np.concatenate([glorot_uniform(1, hs, rng)[0] for _ in range(4)]) for _ in range(K)])
        bsp = np.zeros((K, 4 * hs))
        bsp[:, :hs] = 1.0
        p["bsp"] = bsp
        if cfg.aggregation == "dense_layer":
            p["W_ah"] = glorot_uniform(cfg.n_sparse * hs, hs, rng)
            p["b_ah"] = np.zeros(hs)
            if cfg.aggregate_output_gate:
                p["W_ao"] = glorot_uniform(cfg.n_sparse * hs, hs, rng)
                p["b_ao"] = np.zeros(hs)
    return p


def zero_grads(params: dict) -> dict:
    return {k: np.zeros_like(v) for k, v in params.items()}


@dataclass
class CellState:
    """Recurrent state of one layer for a batch.

    ``h`` is the full hidden state (dense part followed by the sparse
    aggregate), ``c`` the dense memory. ``h_sp``/``c_sp``/``o_sp`` hold one
    row per sparse feature and have a zero-length feature axis when the
    cell has no sparse features.
    """

    h: np.ndarray
    c: np.ndarray
    h_sp: np.ndarray
    c_sp: np.ndarray
    o_sp: np.ndarray
    o: np.ndarray | None = None

    @classmethod
    def zeros(cls, cfg: CellConfig, batch: int) -> "CellState":
        sp = np.zeros((batch, cfg.n_sparse, cfg.hidden_sp))
        return cls(
            h=np.zeros((batch, cfg.hidden_total)),
            c=np.zeros((batch, cfg.hidden_dense)),
            h_sp=sp,
            c_sp=sp.copy(),
            o_sp=sp.copy(),
        )


# decay -----------------------------------------------------------------------


def decay(x_delta, alpha):
    """Time decay factor ``1 / log(e + max(0, alpha . x))``, in ``(0, 1]``.

    ``x_delta`` has shape ``(..., n_delta)``; the result drops the last axis.
    Non-positive inner products map to exactly 1.
    """
    s = np.asarray(x_delta, dtype=float) @ np.asarray(alpha, dtype=float)
    s = np.asarray(s)
    g = np.ones_like(s, dtype=float)
    pos = s > 0
    g[pos] = 1.0 / np.log(_E + s[pos])
    return g


def decay_grad_s(s, g):
    """dg/ds for the clamped decay, with subgradient 0 at and below the kink."""
    return np.where(s > 0, -(g * g) / (_E + np.maximum(s, 0.0)), 0.0)


def decompose_and_decay(c_prev, x_delta, W, b, alpha):
    """Split memory into short/long-term parts and decay the short-term part.

    Returns ``(c_star, cache)``. The update is evaluated as
    ``c_prev + c_short * (g - 1)`` which is algebraically
    ``(c_prev - c_short) + c_short * g`` and leaves ``c_prev`` bit-exact when
    the decay factor is 1.
    """
    c_short = np.tanh(c_prev @ W + b)
    s = x_delta @ alpha
    g = decay(x_delta, alpha)
    c_star = c_prev + c_short * (g - 1.0)[:, None]
    return c_star, (c_prev, x_delta, c_short, s, g)


def decompose_and_decay_backward(dc_star, cache, W, alpha, grads, prefix=""):
    c_prev, x_delta, c_short, s, g = cache
    dc_short = dc_star * (g - 1.0)[:, None]
    dg = np.sum(dc_star * c_short, axis=1)
    dpre = dc_short * (1.0 - c_short * c_short)
    grads[prefix + "W_decay"] += c_prev.T @ dpre
    grads[prefix + "b_decay"] += dpre.sum(axis=0)
    ds = dg * decay_grad_s(s, g)
    grads[prefix + "alpha"] += x_delta.T @ ds
    return dc_star + dpre @ W.T


# gates -----------------------------------------------------------------------


def _gates(z, n, act):
    f = sigmoid(z[:, :n])
    i = sigmoid(z[:, n : 2 * n])
    cand = ACTIVATIONS[act](z[:, 2 * n : 3 * n])
    o = sigmoid(z[:, 3 * n :])
    return f, i, cand, o


def lstm_gate_step(h_prev, x, c_in, W_h, W_x, b, act="tanh"):
    """Standard LSTM gate update on the (possibly decayed) memory ``c_in``.

    Returns ``(h, c, o, cache)``.
    """
    n = c_in.shape[1]
    z = h_prev @ W_h + x @ W_x + b
    f, i, cand, o = _gates(z, n, act)
    c = f * c_in + i * cand
    tc = np.tanh(c)
    h = o * tc
    return h, c, o, (h_prev, x, c_in, f, i, cand, o, tc)


def lstm_gate_backward(dh, dc, cache, W_h, W_x, act, grads, prefix=""):
    h_prev, x, c_in, f, i, cand, o, tc = cache
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate(
        [
            dc * c_in * f * (1.0 - f),
            dc * cand * i * (1.0 - i),
            dc * i * activation_grad_from_output(act, cand),
            dh * tc * o * (1.0 - o),
        ],
        axis=1,
    )
    grads[prefix + "W_h"] += h_prev.T @ dz
    grads[prefix + "W_x"] += x.T @ dz
    grads[prefix + "b"] += dz.sum(axis=0)
    return dz @ W_h.T, dc * f, dz @ W_x.T


# sparse features -------------------------------------------------------------


def sparse_step(h_prev, values, masks, h_sp, c_sp, o_sp, Wsp_h, Wsp_x, bsp, act="tanh"):
    """Update every sparse feature's private (hidden, memory) pair.

    Features with ``mask == 0`` keep their hidden state, memory and output
    gate unchanged; present features run an LSTM-style update on their
    scalar value against the full previous hidden state ``h_prev``.

    Shapes: ``h_prev (B, H)``, ``values``/``masks`` ``(B, m)``,
    ``h_sp``/``c_sp``/``o_sp`` ``(B, m, hs)``, ``Wsp_h (K, H, 4hs)``,
    ``Wsp_x``/``bsp`` ``(K, 4hs)`` with ``K`` either ``m`` or 1 (shared).
    """
    B, m, hs = c_sp.shape
    K, H, G = Wsp_h.shape
    flat = Wsp_h.transpose(1, 0, 2).reshape(H, K * G)
    z = (h_prev @ flat).reshape(B, K, G) + values[:, :, None] * Wsp_x[None] + bsp[None]
    f = sigmoid(z[..., :hs])
    i = sigmoid(z[..., hs : 2 * hs])
    cand = ACTIVATIONS[act](z[..., 2 * hs : 3 * hs])
    o = sigmoid(z[..., 3 * hs :])
    c_upd = f * c_sp + i * cand
    tc = np.tanh(c_upd)
    h_upd = o * tc
    present = masks.astype(bool)[:, :, None]
    h_new = np.where(present, h_upd, h_sp)
    c_new = np.where(present, c_upd, c_sp)
    o_new = np.where(present, o, o_sp)
    cache = (h_prev, values, present, c_sp, f, i, cand, o, tc)
    return h_new, c_new, o_new, cache


def sparse_backward(dh_new, dc_new, cache, Wsp_h, act, grads, prefix=""):
    h_prev, values, present, c_sp, f, i, cand, o, tc = cache
    B, m, hs = c_sp.shape
    K, H, G = Wsp_h.shape
    dh_u = np.where(present, dh_new, 0.0)
    dc_u = np.where(present, dc_new, 0.0)
    dh_carry = np.where(present, 0.0, dh_new)
    dc_carry = np.where(present, 0.0, dc_new)
    dc = dc_u + dh_u * o * (1.0 - tc * tc)
    dz = np.concatenate(
        [
            dc * c_sp * f * (1.0 - f),
            dc * cand * i * (1.0 - i),
            dc * i * activation_grad_from_output(act, cand),
            dh_u * tc * o * (1.0 - o),
        ],
        axis=2,
    )
    dc_prev = dc_carry + dc * f
    if K == 1:
        dz_k = dz.sum(axis=1)
        grads[prefix + "Wsp_h"][0] += h_prev.T @ dz_k
        grads[prefix + "Wsp_x"][0] += values.reshape(-1) @ dz.reshape(B * m, G)
        grads[prefix + "bsp"][0] += dz_k.sum(axis=0)
        dh_prev = dz_k @ Wsp_h[0].T
    else:
        dz_flat = dz.reshape(B, K * G)
        grads[prefix + "Wsp_h"] += (h_prev.T @ dz_flat).reshape(H, K, G).transpose(1, 0, 2)
        grads[prefix + "Wsp_x"] += (values[:, :, None] * dz).sum(axis=0)
        grads[prefix + "bsp"] += dz.sum(axis=0)
        dh_prev = dz_flat @ Wsp_h.transpose(1, 0, 2).reshape(H, K * G).T
    return dh_prev, dh_carry, dc_prev


# aggregation -----------------------------------------------------------------


def aggregate(h_list, mode, W=None, b=None):
    """Merge ``(B, m, hs)`` per-feature states into one ``(B, hs)`` vector.

    ``dense_layer`` applies ``tanh`` to an affine map of the concatenated
    states; ``average`` and ``max`` reduce over the feature axis. With no
    sparse features the result is a zero vector.
    """
    B, m, hs = h_list.shape
    if m == 0:
        return np.zeros((B, hs)), None
    if mode == "average":
        return h_list.mean(axis=1), None
    if mode == "max":
        idx = np.argmax(h_list, axis=1)
        return np.take_along_axis(h_list, idx[:, None, :], axis=1)[:, 0, :], idx
    if mode == "dense_layer":
        flat = h_list.reshape(B, m * hs)
        out = np.tanh(flat @ W + b)
        return out, (flat, out)
    raise ValueError(f"unknown aggregation {mode!r}")


def aggregate_backward(da, h_shape, mode, cache, W=None, grads=None, prefix="", suffix="h"):
    B, m, hs = h_shape
    if m == 0:
        return np.zeros(h_shape)
    if mode == "average":
        return np.broadcast_to(da[:, None, :] / m, h_shape).copy()
    if mode == "max":
        dh = np.zeros(h_shape)
        np.put_along_axis(dh, cache[:, None, :], da[:, None, :], axis=1)
        return dh
    flat, out = cache
    dpre = da * (1.0 - out * out)
    grads[prefix + f"W_a{suffix}"] += flat.T @ dpre
    grads[prefix + f"b_a{suffix}"] += dpre.sum(axis=0)
    return (dpre @ W.T).reshape(h_shape)


# full step -------------------------------------------------------------------


def stlstm_step(state: CellState, x, x_delta, masks, values, params: dict, cfg: CellConfig):
    """One sparse-time-LSTM transition; returns ``(new_state, cache)``.

    Delta and sparse arguments are ignored (may be ``None``) when the
    configuration has no delta or sparse features.
    """
    act = cfg.candidate_activation
    if cfg.n_delta:
        c_star, dcache = decompose_and_decay(state.c, x_delta, params["W_decay"], params["b_decay"], params["alpha"])
    else:
        c_star, dcache = state.c, None
    h_d, c_d, o_d, gcache = lstm_gate_step(state.h, x, c_star, params["W_h"], params["W_x"], params["b"], act)
    if not cfg.n_sparse:
        new = CellState(h=h_d, c=c_d, h_sp=state.h_sp, c_sp=state.c_sp, o_sp=state.o_sp)
        if cfg.aggregate_output_gate:
            new.o = o_d
        return new, (dcache, gcache, None, None)
    h_sp, c_sp, o_sp, scache = sparse_step(
        state.h, values, masks, state.h_sp, state.c_sp, state.o_sp,
        params["Wsp_h"], params["Wsp_x"], params["bsp"], act,
    )
    agg, acache = aggregate(h_sp, cfg.aggregation, params.get("W_ah"), params.get("b_ah"))
    new = CellState(h=np.concatenate([h_d, agg], axis=1), c=c_d, h_sp=h_sp, c_sp=c_sp, o_sp=o_sp)
    if cfg.aggregate_output_gate:
        # concatenated output gate; no downstream consumer
        o_agg, _ = aggregate(o_sp, cfg.aggregation, params.get("W_ao"), params.get("b_ao"))
        new.o = np.concatenate([o_d, o_agg], axis=1)
    return new, (dcache, gcache, scache, acache)


def lstm_step(state: CellState, x, params: dict, cfg: CellConfig):
    """Plain LSTM transition (a cell with neither delta nor sparse inputs)."""
    if cfg.n_delta or cfg.n_sparse:
        raise ValueError("lstm_step needs a configuration without delta or sparse features")
    return stlstm_step(state, x, None, None, None, params, cfg)


@dataclass
class StepGrad:
    """Gradient flowing into a step's output state from later in the graph."""

    h: np.ndarray
    c: np.ndarray
    h_sp: np.ndarray
    c_sp: np.ndarray


def backward_step(dstate: StepGrad, cache, params: dict, cfg: CellConfig, grads: dict, prefix: str = ""):
    """Reverse-mode step: accumulate parameter gradients into ``grads``.

    Returns ``(dstate_prev, dx)`` where ``dx`` is the gradient with respect
    to the dense input of this step.
    """
    if cache is None:
        raise RuntimeError("backward_step called without a forward cache")
    dcache, gcache, scache, acache = cache
    act = cfg.candidate_activation
    hd = cfg.hidden_dense
    dh_d = dstate.h[:, :hd]
    dh_prev, dc_star, dx = lstm_gate_backward(dh_d, dstate.c, gcache, params["W_h"], params["W_x"], act, grads, prefix)
    if cfg.n_sparse:
        da = dstate.h[:, hd:]
        dh_sp = dstate.h_sp + aggregate_backward(
            da, dstate.h_sp.shape, cfg.aggregation, acache, params.get("W_ah"), grads, prefix
        )
        dh_prev_sp, dh_sp_prev, dc_sp_prev = sparse_backward(dh_sp, dstate.c_sp, scache, params["Wsp_h"], act, grads, prefix)
        dh_prev = dh_prev + dh_prev_sp
    else:
        dh_sp_prev, dc_sp_prev = dstate.h_sp, dstate.c_sp
    if cfg.n_delta:
        dc_prev = decompose_and_decay_backward(dc_star, dcache, params["W_decay"], params["alpha"], grads, prefix)
    else:
        dc_prev = dc_star
    return StepGrad(h=dh_prev, c=dc_prev, h_sp=dh_sp_prev, c_sp=dc_sp_prev), dx


# sequences -------------------------------------------------------------------


def cell_forward(params: dict, cfg: CellConfig, x, x_delta=None, masks=None, values=None, state=None):
    """Unroll a cell over ``T`` steps.

    ``x`` has shape ``(B, T, input_dim)``; delta/sparse arrays have shape
    ``(B, T, n)``. Returns the hidden sequence ``(B, T, hidden_total)``, the
    per-step caches and the final state.
    """
    B, T, _ = x.shape
    if T < 1:
        raise ValueError("sequence length must be >= 1")
    state = CellState.zeros(cfg, B) if state is None else state
    outputs = np.empty((B, T, cfg.hidden_total))
    caches = []
    for t in range(T):
        state, cache = stlstm_step(
            state,
            x[:, t],
            x_delta[:, t] if cfg.n_delta else None,
            masks[:, t] if cfg.n_sparse else None,
            values[:, t] if cfg.n_sparse else None,
            params,
            cfg,
        )
        outputs[:, t] = state.h
        caches.append(cache)
    return outputs, caches, state


def cell_backward(params: dict, cfg: CellConfig, caches, d_outputs, grads=None, prefix=""):
    """Backpropagate ``d_outputs`` (``(B, T, hidden_total)``) through time.

    Returns ``(grads, dx)`` with ``dx`` shaped like the dense input.
    """
    if grads is None:
        grads = {prefix + k: np.zeros_like(v) for k, v in params.items()}
    B, T, _ = d_outputs.shape
    if len(caches) != T:
        raise RuntimeError("cache length does not match the output gradient")
    dstate = StepGrad(
        h=np.zeros((B, cfg.hidden_total)),
        c=np.zeros((B, cfg.hidden_dense)),
        h_sp=np.zeros((B, cfg.n_sparse, cfg.hidden_sp)),
        c_sp=np.zeros((B, cfg.n_sparse, cfg.hidden_sp)),
    )
    dx = np.zeros((B, T, cfg.input_dim))
    for t in range(T - 1, -1, -1):
        dstate.h = dstate.h + d_outputs[:, t]
        dstate, dx[:, t] = backward_step(dstate, caches[t], params, cfg, grads, prefix)
    return grads, dx

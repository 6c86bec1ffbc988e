"""Stacked recurrent classifier with static-feature heads.

The bottom layer is an LSTM, time-aware LSTM or sparse time LSTM; any
number of plain LSTM layers sit on top. The top layer's final hidden state
is (optionally) decayed by the static delta features, concatenated with an
embedding of the static dense features and decoded by an affine softmax
layer.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .cells import (
    AGGREGATIONS,
    CellConfig,
    cell_backward,
    cell_forward,
    decay,
    decay_grad_s,
    init_cell_params,
)
from .data.samples import Batch
from .io import load_npz, save_npz
from .numeric import glorot_uniform, softmax, softmax_cross_entropy

CELL_TYPES = ("lstm", "tlstm", "stlstm")


@dataclass
class ModelConfig:
    """Architecture of a :class:`Network`.

    Feature dimensions (``d_dense`` ... ``d_static_delta``) describe the data;
    the estimator fills them in from the training set.
    """

    cell: str = "stlstm"
    n_upper: int = 1
    hidden_dense: int = 32
    hidden_sparse: int = 32
    hidden_upper: int | None = None
    d_dense: int = 0
    d_delta: int = 0
    n_sparse: int = 0
    d_static_dense: int = 0
    d_static_delta: int = 0
    embedding_dim: int = 64
    num_classes: int = 3
    aggregation: str = "dense_layer"
    candidate_activation: str = "tanh"
    share_sparse_weights: bool = False
    aggregate_output_gate: bool = False
    use_static_dense: bool = True
    use_static_delta: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.cell not in CELL_TYPES:
            raise ValueError(f"cell must be one of {CELL_TYPES}, got {self.cell!r}")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.n_upper < 0:
            raise ValueError("n_upper must be >= 0")
        if self.static_dense_on and self.embedding_dim < 1:
            raise ValueError("embedding_dim must be > 0 when static dense features are used")

    @property
    def sparse_native(self) -> bool:
        """True when the bottom cell consumes the sparse stream directly."""
        return self.cell == "stlstm" and self.n_sparse > 0

    @property
    def static_dense_on(self) -> bool:
        return self.use_static_dense and self.d_static_dense > 0

    @property
    def static_delta_on(self) -> bool:
        return self.use_static_delta and self.d_static_delta > 0

    def layer_configs(self) -> list[CellConfig]:
        common = dict(
            candidate_activation=self.candidate_activation,
        )
        if self.sparse_native:
            bottom = CellConfig(
                input_dim=self.d_dense,
                hidden_dense=self.hidden_dense,
                n_delta=self.d_delta,
                n_sparse=self.n_sparse,
                hidden_sparse=self.hidden_sparse,
                aggregation=self.aggregation,
                share_sparse_weights=self.share_sparse_weights,
                aggregate_output_gate=self.aggregate_output_gate,
                **common,
            )
        else:
            # sparse columns are forward-filled into the dense block;
            # a plain LSTM additionally sees the deltas as inputs
            extra = self.d_delta if self.cell == "lstm" else 0
            bottom = CellConfig(
                input_dim=self.d_dense + self.n_sparse + extra,
                hidden_dense=self.hidden_dense + self.hidden_sparse,
                n_delta=0 if self.cell == "lstm" else self.d_delta,
                **common,
            )
        layers = [bottom]
        upper = self.hidden_upper or (self.hidden_dense + self.hidden_sparse)
        for _ in range(self.n_upper):
            layers.append(CellConfig(input_dim=layers[-1].hidden_total, hidden_dense=upper, **common))
        return layers

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def forward_fill(values, masks):
    """Carry the last present sparse value forward along the time axis."""
    B, T, m = values.shape
    idx = np.where(masks, np.arange(T)[None, :, None], 0)
    idx = np.maximum.accumulate(idx, axis=1)
    return np.take_along_axis(values, idx, axis=1)


def static_dense_embed(x, W, b):
    """Embed concatenated one-hot statics: ``tanh(x W + b)``."""
    return np.tanh(x @ W + b)


def static_delta_adjust(h, x_delta, W, b, alpha):
    """Decay the short-term component of the final hidden state.

    Evaluated as ``h + h_short * (g - 1)``, so a zero static delta leaves
    ``h`` untouched bit-for-bit. Returns ``(h_star, cache)``.
    """
    h_short = np.tanh(h @ W + b)
    s = x_delta @ alpha
    g = decay(x_delta, alpha)
    return h + h_short * (g - 1.0)[:, None], (h, x_delta, h_short, s, g)


class Network:
    """Parameters plus forward/backward passes for one :class:`ModelConfig`."""

    def __init__(self, config: ModelConfig, params: dict | None = None):
        self.config = config
        self.layers = config.layer_configs()
        self.params = self.init_params() if params is None else params

    # construction -------------------------------------------------------

    def init_params(self) -> dict:
        cfg = self.config
        p = {}
        for i, lc in enumerate(self.layers):
            rng = np.random.default_rng([cfg.seed, 0, i])
            for k, v in init_cell_params(lc, rng).items():
                p[f"l{i}.{k}"] = v
        top = self.layers[-1].hidden_total
        if cfg.static_delta_on:
            rng = np.random.default_rng([cfg.seed, 2])
            p["static_delta.W"] = glorot_uniform(top, top, rng)
            p["static_delta.b"] = np.zeros(top)
            p["static_delta.alpha"] = np.ones(cfg.d_static_delta)
        emb = 0
        if cfg.static_dense_on:
            rng = np.random.default_rng([cfg.seed, 1])
            p["embed.W"] = glorot_uniform(cfg.d_static_dense, cfg.embedding_dim, rng)
            p["embed.b"] = np.zeros(cfg.embedding_dim)
            emb = cfg.embedding_dim
        rng = np.random.default_rng([cfg.seed, 3])
        p["decoder.W"] = glorot_uniform(top + emb, cfg.num_classes, rng)
        p["decoder.b"] = np.zeros(cfg.num_classes)
        return p

    def layer_params(self, i: int, params: dict | None = None) -> dict:
        params = self.params if params is None else params
        pre = f"l{i}."
        return {k[len(pre) :]: v for k, v in params.items() if k.startswith(pre)}

    # passes -------------------------------------------------------------

    def _check(self, batch: Batch):
        cfg = self.config
        if batch.length < 1:
            raise ValueError("empty sequence")
        got = (
            batch.dense.shape[2],
            batch.delta.shape[2],
            batch.masks.shape[2],
            batch.static_dense.shape[1],
            batch.static_delta.shape[1],
        )
        want = (cfg.d_dense, cfg.d_delta, cfg.n_sparse, cfg.d_static_dense, cfg.d_static_delta)
        if got != want:
            raise ValueError(f"batch feature dims {got} do not match model config {want}")

    def bottom_inputs(self, batch: Batch):
        cfg = self.config
        if cfg.sparse_native:
            return batch.dense, batch.delta, batch.masks, batch.values
        x = batch.dense
        if cfg.n_sparse:
            x = np.concatenate([x, forward_fill(batch.values, batch.masks)], axis=2)
        if cfg.cell == "lstm" and cfg.d_delta:
            x = np.concatenate([x, batch.delta], axis=2)
        return x, batch.delta, None, None

    def logits(self, batch: Batch, params: dict | None = None):
        """Forward pass; returns ``(logits, cache)``."""
        params = self.params if params is None else params
        cfg = self.config
        self._check(batch)
        x, xd, masks, values = self.bottom_inputs(batch)
        caches = []
        for i, lc in enumerate(self.layers):
            lp = self.layer_params(i, params)
            if i == 0:
                H, c, _ = cell_forward(lp, lc, x, xd, masks, values)
            else:
                H, c, _ = cell_forward(lp, lc, H)
            caches.append(c)
        h_T = H[:, -1]
        sd_cache = None
        h_star = h_T
        if cfg.static_delta_on:
            h_star, sd_cache = static_delta_adjust(
                h_T, batch.static_delta, params["static_delta.W"], params["static_delta.b"], params["static_delta.alpha"]
            )
        feats = [h_star]
        emb = None
        if cfg.static_dense_on:
            emb = static_dense_embed(batch.static_dense, params["embed.W"], params["embed.b"])
            feats.append(emb)
        z = np.concatenate(feats, axis=1) if len(feats) > 1 else h_star
        logits = z @ params["decoder.W"] + params["decoder.b"]
        cache = {
            "params_id": id(params),
            "batch": batch,
            "T": H.shape[1],
            "layer_caches": caches,
            "sd_cache": sd_cache,
            "emb": emb,
            "z": z,
        }
        return logits, cache

    def forward(self, batch: Batch, params: dict | None = None):
        """Return ``(probabilities, cache)`` for ``batch``."""
        logits, cache = self.logits(batch, params)
        return softmax(logits), cache

    def backward(self, cache: dict, dlogits, params: dict | None = None) -> dict:
        """Gradients of every parameter given ``dL/dlogits``."""
        params = self.params if params is None else params
        if cache is None or cache.get("params_id") != id(params):
            raise RuntimeError("stale or missing forward cache")
        cfg = self.config
        batch = cache["batch"]
        grads = {k: np.zeros_like(v) for k, v in params.items()}
        z = cache["z"]
        grads["decoder.W"] += z.T @ dlogits
        grads["decoder.b"] += dlogits.sum(axis=0)
        dz = dlogits @ params["decoder.W"].T
        top = self.layers[-1].hidden_total
        dh = dz[:, :top]
        if cfg.static_dense_on:
            emb = cache["emb"]
            dpre = dz[:, top:] * (1.0 - emb * emb)
            grads["embed.W"] += batch.static_dense.T @ dpre
            grads["embed.b"] += dpre.sum(axis=0)
        if cfg.static_delta_on:
            h_T, xsd, h_short, s, g = cache["sd_cache"]
            W = params["static_delta.W"]
            dh_short = dh * (g - 1.0)[:, None]
            dg = np.sum(dh * h_short, axis=1)
            dpre = dh_short * (1.0 - h_short * h_short)
            grads["static_delta.W"] += h_T.T @ dpre
            grads["static_delta.b"] += dpre.sum(axis=0)
            grads["static_delta.alpha"] += xsd.T @ (dg * decay_grad_s(s, g))
            dh = dh + dpre @ W.T
        B, T = batch.size, cache["T"]
        d_out = np.zeros((B, T, top))
        d_out[:, -1] = dh
        for i in range(len(self.layers) - 1, -1, -1):
            lp = self.layer_params(i, params)
            lg, dx = cell_backward(lp, self.layers[i], cache["layer_caches"][i], d_out)
            for k, v in lg.items():
                grads[f"l{i}.{k}"] += v
            d_out = dx
        return grads

    def loss_and_grad(self, batch: Batch, params: dict | None = None):
        """Mean cross-entropy over the batch and its parameter gradients."""
        logits, cache = self.logits(batch, params)
        loss, dlogits = softmax_cross_entropy(logits, batch.labels)
        return loss, self.backward(cache, dlogits, params)

    def loss(self, batch: Batch, params: dict | None = None) -> float:
        logits, _ = self.logits(batch, params)
        return softmax_cross_entropy(logits, batch.labels)[0]

    def predict_proba(self, batch: Batch, params: dict | None = None):
        return self.forward(batch, params)[0]

    # persistence --------------------------------------------------------

    def save(self, path, extra: dict | None = None) -> None:
        meta = {"model_config": self.config.to_dict()}
        if extra:
            meta.update(extra)
        save_npz(path, self.params, meta)

    @classmethod
    def load(cls, path) -> tuple["Network", dict]:
        arrays, meta = load_npz(path)
        cfg = ModelConfig.from_dict(meta.pop("model_config"))
        net = cls(cfg, params=None)
        missing = set(net.params) ^ set(arrays)
        if missing:
            raise ValueError(f"checkpoint tensors do not match the config: {sorted(missing)}")
        net.params = {k: arrays[k] for k in net.params}
        return net, meta


def gradient_check(net: Network, batch: Batch, eps: float = 1e-5, params: dict | None = None, analytic: dict | None = None) -> dict:
    """Compare analytic gradients with central finite differences.

    Returns ``{tensor name: relative error}`` where the error of a tensor is
    ``max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-8)``.
    ``analytic`` may be supplied to check an externally computed gradient.
    """
    params = net.params if params is None else params
    if analytic is None:
        _, analytic = net.loss_and_grad(batch, params)
    work = {k: v.copy() for k, v in params.items()}
    report = {}
    for name in params:
        arr = work[name]
        num = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            lp = net.loss(batch, work)
            arr[idx] = orig - eps
            lm = net.loss(batch, work)
            arr[idx] = orig
            num[idx] = (lp - lm) / (2 * eps)
        a = analytic[name]
        scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(num), initial=0.0), 1e-8)
        report[name] = float(np.max(np.abs(a - num), initial=0.0) / scale)
    return report

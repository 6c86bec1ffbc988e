"""Dense numeric kernel: activations, initializers, softmax loss and ADAM.

Everything works on float64 numpy arrays. Randomness always comes from an
explicit :class:`numpy.random.Generator` so that callers control seeding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

DTYPE = np.float64


def as_generator(seed) -> np.random.Generator:
    """Return a Generator for ``seed`` (int, SeedSequence, Generator or None)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split ``rng`` into ``n`` independent child generators."""
    return [np.random.default_rng(s) for s in rng.bit_generator.seed_seq.spawn(n)]


# activations ----------------------------------------------------------------


def sigmoid(x):
    return expit(np.asarray(x, dtype=DTYPE))


def sigmoid_grad(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def tanh(x):
    return np.tanh(np.asarray(x, dtype=DTYPE))


def tanh_grad(x):
    t = np.tanh(np.asarray(x, dtype=DTYPE))
    return 1.0 - t * t


ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh}


def activation_grad_from_output(name: str, y):
    """Derivative of activation ``name`` expressed through its output ``y``."""
    if name == "sigmoid":
        return y * (1.0 - y)
    if name == "tanh":
        return 1.0 - y * y
    raise ValueError(f"unknown activation {name!r}")


# initializers ---------------------------------------------------------------


def glorot_uniform(fan_in: int, fan_out: int, rng) -> np.ndarray:
    """Glorot/Xavier uniform matrix of shape ``(fan_in, fan_out)``.

    Entries are drawn i.i.d. from ``U[-L, L]`` with
    ``L = sqrt(6 / (fan_in + fan_out))``.
    """
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan dimensions must be >= 1, got ({fan_in}, {fan_out})")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return as_generator(rng).uniform(-limit, limit, size=(fan_in, fan_out))


def orthogonal(n: int, m: int, rng) -> np.ndarray:
    """Random ``(n, m)`` matrix with orthonormal columns (rows if ``n < m``).

    A Gaussian matrix is QR-factorized along its longer side and the signs of
    R's diagonal are folded into Q, which makes the draw Haar-distributed.
    """
    if n < 1 or m < 1:
        raise ValueError(f"dimensions must be >= 1, got ({n}, {m})")
    big, small = max(n, m), min(n, m)
    a = as_generator(rng).standard_normal((big, small))
    q, r = np.linalg.qr(a)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    q = q * d
    return q if n >= m else q.T


# loss -----------------------------------------------------------------------


def softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=DTYPE)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits, label):
    """Cross-entropy of softmax(logits) against integer class ``label``.

    Works on a single logit vector with a scalar label, or on a ``(B, K)``
    batch with a ``(B,)`` label array (loss is then the batch mean and the
    gradient is scaled accordingly).

    Returns
    -------
    loss : float
    dlogits : ndarray
        Gradient of the loss with respect to ``logits``.
    """
    logits = np.asarray(logits, dtype=DTYPE)
    single = logits.ndim == 1
    z = logits[None, :] if single else logits
    labels = np.atleast_1d(np.asarray(label))
    n, k = z.shape
    if labels.shape != (n,):
        raise ValueError("label shape does not match logits")
    if np.any(labels < 0) or np.any(labels >= k):
        raise ValueError(f"label out of range for {k} classes")
    labels = labels.astype(np.intp)
    shifted = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    losses = logsumexp - shifted[np.arange(n), labels]
    grad = np.exp(shifted - logsumexp[:, None])
    grad[np.arange(n), labels] -= 1.0
    if single:
        return float(losses[0]), grad[0]
    return float(losses.mean()), grad / n


# optimizer ------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> dict:
    """Apply one bias-corrected ADAM update.

    ``params`` is a mapping name -> array. A new mapping with updated arrays
    is returned; ``state`` moments and step counter are advanced in place.
    """
    for name, p in params.items():
        g = grads[name]
        if np.shape(g) != np.shape(p):
            raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(p)} for {name!r}")
        if name in state.m and state.m[name].shape != np.shape(p):
            raise ValueError(f"moment shape mismatch for {name!r}")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    out = {}
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        m_hat = m / bc1
        v_hat = v / bc2
        out[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


def clip_global_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    """Rescale ``grads`` so their joint L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm is None or total <= max_norm or total == 0.0:
        return grads, total
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}, total

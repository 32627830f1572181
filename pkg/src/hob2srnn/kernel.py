"""Dense numeric substrate: checked matrix ops, seeded RNG, Adam, finite differences.

Matrices are plain numpy float64 2-D arrays (row-major). The public ops here
validate shapes and finiteness; the autodiff tape in ``tape.py`` builds on the
same conventions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OracleError, ShapeError


def as_matrix(x) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def check_finite(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    if not np.all(np.isfinite(m)):
        raise ShapeError(f"{what} contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul result")


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign to avoid overflow in exp.
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_ELEMENTWISE = {"tanh": np.tanh, "sigmoid": sigmoid}


def elementwise(name: str, m) -> np.ndarray:
    if name not in _ELEMENTWISE:
        raise ValueError(f"unknown elementwise function {name!r}")
    return _ELEMENTWISE[name](np.asarray(m, dtype=np.float64))


class SeededRng:
    """Seeded PCG64 generator; identical seeds give identical streams everywhere.

    All stochastic components take an explicit SeededRng; nothing in the
    package touches numpy's global RNG state.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def bernoulli(self, p: float, size) -> np.ndarray:
        return (self._gen.random(size) < p).astype(np.float64)

    def child(self, key: int) -> "SeededRng":
        """Derive an independent stream, deterministic in (seed, key)."""
        derived = np.random.SeedSequence([self.seed, int(key)])
        return SeededRng(int(derived.generate_state(1, dtype=np.uint64)[0]))


def glorot_init(rows: int, cols: int, rng: SeededRng) -> np.ndarray:
    """Uniform Glorot initialization on [-sqrt(6/(rows+cols)), +sqrt(...)]."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"glorot_init needs positive dims, got ({rows},{cols})")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, (rows, cols))


ParamDict = dict[str, np.ndarray]


@dataclass
class AdamState:
    """Adam accumulators keyed like the parameter dict."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: ParamDict = field(default_factory=dict)
    v: ParamDict = field(default_factory=dict)


def adam_step(params: ParamDict, grads: ParamDict, state: AdamState, lr: float = 1e-4) -> AdamState:
    """One in-place Adam update with bias correction."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"adam_step: grad shape {g.shape} != param shape {p.shape} for {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        m_hat = state.m[name] / (1 - state.beta1**t)
        v_hat = state.v[name] / (1 - state.beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state


def finite_diff_grad(loss_fn, params: ParamDict, h: float = 1e-5) -> ParamDict:
    """Central-difference gradient of a scalar loss over a parameter dict.

    ``loss_fn()`` is re-evaluated with the entries of ``params`` perturbed in
    place, so it must read the same arrays and be deterministic (dropout off).
    Callers are responsible for avoiding non-differentiable points.
    """
    if h <= 0:
        raise ValueError("finite_diff_grad: h must be positive")
    base = float(loss_fn())
    if float(loss_fn()) != base:
        raise OracleError("loss is not deterministic under fixed inputs")
    grads: ParamDict = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        flat_p = p.ravel()
        flat_g = g.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            up = float(loss_fn())
            flat_p[i] = orig - h
            down = float(loss_fn())
            flat_p[i] = orig
            flat_g[i] = (up - down) / (2 * h)
        grads[name] = g
    return grads

"""Dense linear algebra, Adam, and gradient-verification kernels.

Everything runs in 64-bit floats; gradient checks are meaningless in 32-bit.
Matrices are plain 2-D float64 numpy arrays (row-major). All stochastic code
takes an explicit SeededRng so that a single integer seed reproduces a run
bit-for-bit.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import InvalidInput, SingularCovariance

Array = np.ndarray

MASK64 = (1 << 64) - 1


def as_matrix(a, name: str = "matrix") -> Array:
    """Coerce to a finite, C-contiguous float64 2-D array or raise InvalidInput."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidInput(f"{name} contains non-finite entries")
    return arr


def derive_seed(seed: int, *labels) -> int:
    """Stable 64-bit child seed from a parent seed and a label path.

    Used to fan a single pipeline seed out to per-stage / per-item seeds
    without correlated streams.
    """
    h = hashlib.sha256()
    h.update(str(int(seed) & MASK64).encode())
    for lab in labels:
        h.update(b"\x1f")
        h.update(str(lab).encode())
    return int.from_bytes(h.digest()[:8], "little")


class SeededRng:
    """Deterministic generator: identical seed implies identical draw sequence."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def spawn(self, *labels) -> "SeededRng":
        """Child generator with an independent, label-derived stream."""
        return SeededRng(derive_seed(self.seed, *labels))

    def random(self, size=None):
        return self._gen.random(size)

    def uniform(self, low, high, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def shuffle(self, x) -> None:
        self._gen.shuffle(x)

    def permutation(self, n) -> Array:
        return self._gen.permutation(n)


def svd(a: Array):
    """Thin SVD: a = U @ diag(s) @ Vt with s non-negative, descending."""
    a = as_matrix(a, "svd input")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return u, s, vt


def sym_inv_sqrt(a: Array, ridge: float = 0.0) -> Array:
    """Inverse matrix square root (a + ridge*I)^(-1/2) of a symmetric matrix.

    Raises SingularCovariance if any ridged eigenvalue is <= 0; the result is
    symmetrized so downstream whitening identities hold to round-off.
    """
    a = as_matrix(a, "sym_inv_sqrt input")
    n, m = a.shape
    if n != m:
        raise InvalidInput(f"sym_inv_sqrt needs a square matrix, got {n}x{m}")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-10):
        raise InvalidInput("sym_inv_sqrt input is not symmetric")
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    w = w + ridge
    if w.min() <= 0.0:
        raise SingularCovariance(
            f"eigenvalue + ridge = {w.min():.6e} <= 0; increase the ridge"
        )
    out = (v / np.sqrt(w)) @ v.T
    return 0.5 * (out + out.T)


def grad_check(f, params: Array, eps: float = 1e-5) -> float:
    """Compare an analytic gradient against central finite differences.

    `f(params)` must return `(value, grad)` with `grad` shaped like `params`.
    Returns the max elementwise relative error with denominator
    max(|analytic|, |numeric|, 1e-8). eps must lie in (0, 1e-3].
    """
    if not (0.0 < eps <= 1e-3):
        raise InvalidInput(f"eps must be in (0, 1e-3], got {eps}")
    params = np.array(params, dtype=np.float64)
    _, grad = f(params)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape:
        raise InvalidInput(
            f"gradient shape {grad.shape} does not match params {params.shape}"
        )
    worst = 0.0
    it = np.nditer(params, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        p = params.copy()
        p[idx] += eps
        fp, _ = f(p)
        p[idx] -= 2.0 * eps
        fm, _ = f(p)
        numeric = (fp - fm) / (2.0 * eps)
        analytic = float(grad[idx])
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst


class Adam:
    """Adam with standard bias correction; updates the given arrays in place."""

    def __init__(self, params: list[Array], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[Array]) -> None:
        if len(grads) != len(self.params):
            raise InvalidInput("gradient list does not match parameter list")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            p -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

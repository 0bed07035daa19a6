"""Trigonometric bases on the periodicity cell [0, 1] x [0, 1].

Two families share the horizontal factor ``cos(2 pi m x)`` (flavor ``i = +1``)
or ``sin(2 pi m x)`` (flavor ``i = -1``):

* parity ``"B"`` uses ``cos(pi n z)`` vertically (homogeneous Neumann in z),
* parity ``"D"`` uses ``sin(pi n z)`` vertically (homogeneous Dirichlet in z).

Coefficients are stored raw (no orthonormalisation) in an array of shape
``(2, N + 1, N + 1)`` indexed ``[flavor, m, n]`` with flavor slot 0 for
``i = +1`` and slot 1 for ``i = -1``. Entries whose basis function vanishes
identically (``i = -1, m = 0`` and, for parity D, ``n = 0``) are kept at zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

__all__ = [
    "PARITIES",
    "ParityError",
    "ResolutionError",
    "GridMismatchError",
    "BasisIndex",
    "SpectralField",
    "GridField",
    "eval_basis",
    "parseval_weights",
    "valid_mask",
    "grid_points",
    "synthesize",
    "analyze",
    "project_callable",
    "evaluate",
    "differentiate",
    "laplacian",
    "inner_product",
    "l2_norm",
    "h1_seminorm",
    "hessian_norm",
    "multiply_pointwise",
    "dealias_grid",
    "random_field",
    "InequalityReport",
    "check_inequalities",
]

PARITIES = ("B", "D")
TWO_PI = 2.0 * np.pi


class ParityError(ValueError):
    """Operands carry incompatible parity tags."""


class ResolutionError(ValueError):
    """Collocation grid too coarse for exact quadrature of the requested modes."""


class GridMismatchError(ValueError):
    """Grid fields live on different collocation grids."""


def _check_parity(parity: str) -> str:
    if parity not in PARITIES:
        raise ParityError(f"parity must be 'B' or 'D', got {parity!r}")
    return parity


@dataclass(frozen=True)
class BasisIndex:
    i: int
    m: int
    n: int

    def __post_init__(self):
        if self.i not in (1, -1):
            raise ValueError(f"i must be +1 or -1, got {self.i}")
        if self.m < 0 or self.n < 0:
            raise ValueError("mode numbers must be nonnegative")

    @property
    def slot(self) -> int:
        return 0 if self.i == 1 else 1


@lru_cache(maxsize=None)
def _weights(N: int, parity: str) -> np.ndarray:
    wx = np.full((2, N + 1), 0.5)
    wx[0, 0] = 1.0
    wx[1, 0] = 0.0
    wz = np.full(N + 1, 0.5)
    wz[0] = 1.0 if parity == "B" else 0.0
    w = wx[:, :, None] * wz[None, None, :]
    w.flags.writeable = False
    return w


def parseval_weights(N: int, parity: str) -> np.ndarray:
    """Squared L2 norms of the basis functions, shape ``(2, N+1, N+1)``.

    Each entry is 1, 1/2, 1/4 or 0 depending on whether ``m`` and ``n`` vanish.
    """
    return _weights(N, _check_parity(parity))


def valid_mask(N: int, parity: str) -> np.ndarray:
    return parseval_weights(N, parity) > 0


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Truncated expansion over basis B or D; immutable."""

    parity: str
    coeffs: np.ndarray

    def __post_init__(self):
        _check_parity(self.parity)
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 3 or c.shape[0] != 2 or c.shape[1] != c.shape[2]:
            raise ValueError(f"coefficient array must have shape (2, N+1, N+1), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c *= valid_mask(c.shape[1] - 1, self.parity)
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def N(self) -> int:
        return self.coeffs.shape[1] - 1

    @classmethod
    def zeros(cls, N: int, parity: str) -> SpectralField:
        return cls(parity, np.zeros((2, N + 1, N + 1)))

    @classmethod
    def from_modes(cls, N: int, parity: str, modes: dict) -> SpectralField:
        """Build from ``{(i, m, n): value}``."""
        c = np.zeros((2, N + 1, N + 1))
        for (i, m, n), value in modes.items():
            c[BasisIndex(i, m, n).slot, m, n] = value
        return cls(parity, c)

    def coefficient(self, i: int, m: int, n: int) -> float:
        idx = BasisIndex(i, m, n)
        if m > self.N or n > self.N:
            return 0.0
        return float(self.coeffs[idx.slot, m, n])

    def resized(self, N: int) -> SpectralField:
        """Truncate or zero-pad to order ``N``."""
        c = np.zeros((2, N + 1, N + 1))
        k = min(N, self.N) + 1
        c[:, :k, :k] = self.coeffs[:, :k, :k]
        return SpectralField(self.parity, c)

    def mean(self) -> float:
        return self.coefficient(1, 0, 0) if self.parity == "B" else 0.0

    def __add__(self, other: SpectralField) -> SpectralField:
        _same_space(self, other)
        return SpectralField(self.parity, self.coeffs + other.coeffs)

    def __sub__(self, other: SpectralField) -> SpectralField:
        _same_space(self, other)
        return SpectralField(self.parity, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> SpectralField:
        return SpectralField(self.parity, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> SpectralField:
        return SpectralField(self.parity, -self.coeffs)

    def __repr__(self) -> str:
        return f"SpectralField(parity={self.parity!r}, N={self.N})"


def _same_space(f: SpectralField, g: SpectralField) -> None:
    if f.parity != g.parity:
        raise ParityError(f"parity mismatch: {f.parity} vs {g.parity}")
    if f.N != g.N:
        raise ValueError(f"truncation mismatch: {f.N} vs {g.N}")


@dataclass(frozen=True, eq=False)
class GridField:
    """Samples on the uniform grid ``x_j = j/Nx`` (periodic), ``z_k = k/(Nz-1)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("grid values must be a 2D array (Nx, Nz)")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def Nx(self) -> int:
        return self.values.shape[0]

    @property
    def Nz(self) -> int:
        return self.values.shape[1]


def eval_basis(idx: BasisIndex, parity: str, x, z):
    """Evaluate one basis function at ``(x, z)``; broadcasts over arrays."""
    _check_parity(parity)
    hx = np.cos(TWO_PI * idx.m * np.asarray(x)) if idx.i == 1 else np.sin(TWO_PI * idx.m * np.asarray(x))
    vz = np.cos(np.pi * idx.n * np.asarray(z)) if parity == "B" else np.sin(np.pi * idx.n * np.asarray(z))
    return hx * vz


def grid_points(Nx: int, Nz: int) -> tuple[np.ndarray, np.ndarray]:
    if Nx < 1 or Nz < 2:
        raise ResolutionError(f"need Nx >= 1 and Nz >= 2, got ({Nx}, {Nz})")
    return np.arange(Nx) / Nx, np.linspace(0.0, 1.0, Nz)


def _x_matrices(N: int, x: np.ndarray) -> np.ndarray:
    m = np.arange(N + 1)[:, None]
    return np.stack([np.cos(TWO_PI * m * x), np.sin(TWO_PI * m * x)])  # (2, N+1, len(x))


def _z_matrix(N: int, z: np.ndarray, parity: str) -> np.ndarray:
    n = np.arange(N + 1)[:, None]
    return np.cos(np.pi * n * z) if parity == "B" else np.sin(np.pi * n * z)


@lru_cache(maxsize=64)
def _transform(N: int, Nx: int, Nz: int, parity: str):
    x, z = grid_points(Nx, Nz)
    X = _x_matrices(N, x)
    Z = _z_matrix(N, z, parity)
    qx = np.full(Nx, 1.0 / Nx)
    qz = np.full(Nz, 1.0 / (Nz - 1))
    qz[[0, -1]] *= 0.5
    w = parseval_weights(N, parity)
    inv_w = np.divide(1.0, w, out=np.zeros_like(w), where=w > 0)
    # analysis: c[i] = (Xq[i] @ g @ Zq.T) * inv_w[i]
    Xq = X * qx
    Zq = Z * qz
    for a in (X, Z, Xq, Zq, inv_w):
        a.flags.writeable = False
    return X, Z, Xq, Zq, inv_w


def synthesize(f: SpectralField, grid: tuple[int, int]) -> GridField:
    """Evaluate ``f`` at the nodes of an ``Nx x Nz`` grid."""
    Nx, Nz = grid
    X, Z, *_ = _transform(f.N, Nx, Nz, f.parity)
    c = f.coeffs
    return GridField(X[0].T @ c[0] @ Z + X[1].T @ c[1] @ Z)


def analyze(g: GridField, parity: str, N: int) -> SpectralField:
    """L2 projection of grid data onto the order-``N`` basis by exact quadrature.

    The periodic trapezoid rule in x and the end-point trapezoid rule in z are
    exact for the trigonometric integrands that arise whenever the data is
    itself a trigonometric polynomial of degree below ``Nx`` and ``2 (Nz - 1)``.
    """
    _check_parity(parity)
    Nx, Nz = g.shape
    if Nx < 2 * N + 1 or Nz < 2 * N + 1:
        raise ResolutionError(f"grid ({Nx}, {Nz}) too coarse for N={N}: need at least {2 * N + 1} points per direction")
    _, _, Xq, Zq, inv_w = _transform(N, Nx, Nz, parity)
    v = g.values
    c = np.stack([Xq[0] @ v @ Zq.T, Xq[1] @ v @ Zq.T]) * inv_w
    return SpectralField(parity, c)


@lru_cache(maxsize=16)
def _gauss_legendre(nq: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(nq)
    return 0.5 * (t + 1.0), 0.5 * w


def project_callable(func: Callable, parity: str, N: int, nx: int | None = None, nz: int | None = None) -> SpectralField:
    """Project an arbitrary smooth function ``func(x, z)`` onto the order-``N`` basis.

    Uses the periodic trapezoid rule in x and Gauss-Legendre in z, so smooth
    data that is not a trigonometric polynomial in z (exponential weights,
    for instance) is still integrated to near machine precision.
    """
    _check_parity(parity)
    nx = nx or 4 * N + 8
    nz = nz or 4 * N + 64
    x = np.arange(nx) / nx
    z, qz = _gauss_legendre(nz)
    X = _x_matrices(N, x)
    Z = _z_matrix(N, z, parity)
    v = func(x[:, None], z[None, :]) * np.ones((nx, nz))
    w = parseval_weights(N, parity)
    inv_w = np.divide(1.0, w, out=np.zeros_like(w), where=w > 0)
    Zq = Z * qz
    c = np.stack([(X[0] / nx) @ v @ Zq.T, (X[1] / nx) @ v @ Zq.T]) * inv_w
    return SpectralField(parity, c)


def evaluate(f: SpectralField, x, z) -> np.ndarray:
    """Evaluate ``f`` at scattered points (broadcast ``x`` against ``z``)."""
    x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
    flat_x, flat_z = x.ravel(), z.ravel()
    X = _x_matrices(f.N, flat_x)
    Z = _z_matrix(f.N, flat_z, f.parity)
    out = np.einsum("mp,mn,np->p", X[0], f.coeffs[0], Z) + np.einsum("mp,mn,np->p", X[1], f.coeffs[1], Z)
    return out.reshape(x.shape)


def differentiate(f: SpectralField, axis: str) -> SpectralField:
    """Exact term-by-term derivative.

    ``axis="x"`` keeps the parity and swaps the horizontal flavor;
    ``axis="z"`` flips the parity (B <-> D).
    """
    c = f.coeffs
    N = f.N
    if axis == "x":
        k = TWO_PI * np.arange(N + 1)[:, None]
        out = np.stack([k * c[1], -k * c[0]])
        return SpectralField(f.parity, out)
    if axis == "z":
        k = np.pi * np.arange(N + 1)[None, None, :]
        if f.parity == "B":
            return SpectralField("D", -k * c)
        return SpectralField("B", k * c)
    raise ValueError(f"axis must be 'x' or 'z', got {axis!r}")


@lru_cache(maxsize=None)
def _laplacian_symbol(N: int) -> np.ndarray:
    m = np.arange(N + 1)[:, None]
    n = np.arange(N + 1)[None, :]
    lam = (TWO_PI * m) ** 2 + (np.pi * n) ** 2
    lam.flags.writeable = False
    return lam


def laplacian_symbol(N: int) -> np.ndarray:
    """``4 pi^2 m^2 + pi^2 n^2`` on the ``(m, n)`` lattice (minus the Laplacian eigenvalue)."""
    return _laplacian_symbol(N)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.parity, -_laplacian_symbol(f.N) * f.coeffs)


def inner_product(f: SpectralField, g: SpectralField) -> float:
    """L2 inner product over the unit cell via the diagonal Parseval weights."""
    _same_space(f, g)
    return float(np.sum(parseval_weights(f.N, f.parity) * f.coeffs * g.coeffs))


def l2_norm(f: SpectralField) -> float:
    return float(np.sqrt(np.sum(parseval_weights(f.N, f.parity) * f.coeffs**2)))


def h1_seminorm(f: SpectralField) -> float:
    """``||grad f||_{L2}``."""
    fx = differentiate(f, "x")
    fz = differentiate(f, "z")
    return float(np.hypot(l2_norm(fx), l2_norm(fz)))


def hessian_norm(f: SpectralField) -> float:
    """``||D^2 f||_{L2}``: root of ``|f_xx|^2 + 2|f_xz|^2 + |f_zz|^2``."""
    fx = differentiate(f, "x")
    fz = differentiate(f, "z")
    fxx = l2_norm(differentiate(fx, "x"))
    fxz = l2_norm(differentiate(fx, "z"))
    fzz = l2_norm(differentiate(fz, "z"))
    return float(np.sqrt(fxx**2 + 2.0 * fxz**2 + fzz**2))


def multiply_pointwise(f: GridField, g: GridField) -> GridField:
    if f.shape != g.shape:
        raise GridMismatchError(f"grid mismatch: {f.shape} vs {g.shape}")
    return GridField(f.values * g.values)


def dealias_grid(N: int) -> tuple[int, int]:
    """Grid on which triple products of degree-``N`` fields integrate exactly.

    x needs ``Nx > 3N`` (periodic trapezoid), z needs ``2 (Nz - 1) > 3N``;
    both are also kept at or above ``2N + 1`` for ``analyze``.
    """
    Nx = 3 * N + 1
    Nz = max(2 * N + 1, (3 * N) // 2 + 2)
    return Nx, Nz


def random_field(N: int, parity: str, rng: np.random.Generator, zero_mean: bool = True) -> SpectralField:
    """Random smooth field: uniform(-1, 1) coefficients damped by ``1/(1 + m^2 + n^2)``."""
    m = np.arange(N + 1)[:, None]
    n = np.arange(N + 1)[None, :]
    c = rng.uniform(-1.0, 1.0, size=(2, N + 1, N + 1)) / (1.0 + m**2 + n**2)
    if zero_mean and parity == "B":
        c[0, 0, 0] = 0.0
    return SpectralField(parity, c)


def _l4_norm_vector(components: list[SpectralField]) -> float:
    N = max(c.N for c in components)
    grid = (4 * N + 1, 2 * N + 2)
    sq = sum(synthesize(c, grid).values ** 2 for c in components)
    Nx, Nz = grid
    qz = np.full(Nz, 1.0 / (Nz - 1))
    qz[[0, -1]] *= 0.5
    return float((np.sum(sq**2 * qz[None, :]) / Nx) ** 0.25)


@dataclass
class InequalityReport:
    samples: int
    seed: int
    N: int
    poincare_B_max: float
    poincare_D_max: float
    poincare_B_bound: float
    poincare_D_bound: float
    equivalence_min: float
    equivalence_max: float
    ladyzhenskaya_c: float
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def check_inequalities(samples: int, seed: int, N: int = 8, tol: float = 1e-12, horizontal_mean_free: bool = False) -> InequalityReport:
    """Check the Poincare and norm-equivalence inequalities on random fields.

    Ratios checked per sample:

    * ``||Pi|| / ||grad Pi||`` against ``1/(2 pi)`` for zero-mean B fields,
    * ``||theta|| / ||grad theta||`` against ``1/(sqrt(5) pi)`` for D fields,
    * ``||D^2 v|| / ||Delta v||`` against ``[1/16, 1/4]``,

    and the Ladyzhenskaya ratio ``||v||_4 / (||v||^{1/2} ||grad v||^{1/2})`` is
    reported (not asserted) for vector fields ``v = (B field, D field)``.

    With ``horizontal_mean_free=True`` the ``m = 0`` column is removed from every
    sample, which is the subspace on which the two Poincare constants are sharp.
    """
    if samples < 1:
        raise ValueError("samples ≥ 1 required")
    rng = np.random.default_rng(seed)
    pb_bound = 1.0 / TWO_PI
    pd_bound = 1.0 / (np.sqrt(5.0) * np.pi)
    pb = pd = 0.0
    eq_min, eq_max = np.inf, 0.0
    lady = 0.0
    violations = []
    for k in range(samples):
        fb = random_field(N, "B", rng)
        fd = random_field(N, "D", rng)
        if horizontal_mean_free:
            cb, cd = fb.coeffs.copy(), fd.coeffs.copy()
            cb[:, 0, :] = 0.0
            cd[:, 0, :] = 0.0
            fb, fd = SpectralField("B", cb), SpectralField("D", cd)
        rb = l2_norm(fb) / h1_seminorm(fb)
        rd = l2_norm(fd) / h1_seminorm(fd)
        pb, pd = max(pb, rb), max(pd, rd)
        if rb > pb_bound + tol:
            violations.append({"sample": k, "check": "poincare_B", "ratio": rb, "bound": pb_bound})
        if rd > pd_bound + tol:
            violations.append({"sample": k, "check": "poincare_D", "ratio": rd, "bound": pd_bound})
        for v in (fb, fd):
            r = hessian_norm(v) / l2_norm(laplacian(v))
            eq_min, eq_max = min(eq_min, r), max(eq_max, r)
            if r < 1.0 / 16.0 - tol or r > 0.25 + tol:
                violations.append({"sample": k, "check": "norm_equivalence", "parity": v.parity, "ratio": r, "bound": [1 / 16, 1 / 4]})
        grad_sq = sum(h1_seminorm(c) ** 2 for c in (fb, fd))
        l2 = np.hypot(l2_norm(fb), l2_norm(fd))
        lady = max(lady, _l4_norm_vector([fb, fd]) / np.sqrt(l2 * np.sqrt(grad_sq)))
    return InequalityReport(samples, seed, N, pb, pd, pb_bound, pd_bound, eq_min, eq_max, lady, violations)

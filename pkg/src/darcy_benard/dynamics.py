"""Velocity reconstruction, temperature evolution and linear stability.

Nondimensional perturbation system on the periodic cell:

    Delta Pi - b Pi_z = R exp(b z) theta_z        (Pi_z = 0 at the walls)
    u = -exp(-b z) grad Pi + R theta k
    theta_t + u . grad theta = w + Delta theta    (theta = 0 at the walls)

``theta`` and the stream function live in basis D, ``Pi`` and the horizontal
velocity in basis B, the vertical velocity in basis D.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.optimize

from .basis import (
    TWO_PI,
    GridField,
    SpectralField,
    analyze,
    dealias_grid,
    differentiate,
    h1_seminorm,
    inner_product,
    l2_norm,
    laplacian_symbol,
    random_field,
    synthesize,
)
from .pressure import check_beta, pressure_solver, weighted_projection

log = logging.getLogger(__name__)

__all__ = [
    "BlowUpError",
    "SimulationParams",
    "State",
    "EnergyTrace",
    "GalerkinModel",
    "galerkin_model",
    "velocity_from",
    "advection",
    "divergence",
    "initial_state",
    "initial_theta",
    "step_imex",
    "run_simulation",
    "stream_function_solve",
    "linear_growth_rate",
    "critical_rayleigh",
    "LemmaReport",
    "verify_lemmas",
]

SCHEMES = ("imex1", "imex2")


class BlowUpError(RuntimeError):
    """The temperature norm exceeded the overflow guard or became non-finite."""

    def __init__(self, message: str, state: State | None = None, trace: EnergyTrace | None = None):
        super().__init__(message)
        self.state = state
        self.trace = trace


@dataclass(frozen=True)
class SimulationParams:
    R: float
    beta_hat: float = 0.0
    N: int = 16
    dt: float = 1e-3
    t_final: float = 1.0
    sample_every: int = 1
    scheme: str = "imex1"
    overflow: float = 1e6
    snapshot_every: int = 0

    def __post_init__(self):
        errors = []
        if not self.R > 0:
            errors.append(f"R: must be > 0, got {self.R}")
        if not (0.0 <= self.beta_hat < TWO_PI):
            errors.append(f"beta_hat: must lie in [0, 2 pi), got {self.beta_hat}")
        if int(self.N) != self.N or self.N < 1:
            errors.append(f"N: must be a positive integer, got {self.N}")
        if not self.dt > 0:
            errors.append(f"dt: must be > 0, got {self.dt}")
        if not self.t_final >= self.dt:
            errors.append(f"t_final: must be >= dt, got {self.t_final}")
        if int(self.sample_every) != self.sample_every or self.sample_every < 1:
            errors.append(f"sample_every: must be a positive integer, got {self.sample_every}")
        if self.scheme not in SCHEMES:
            errors.append(f"scheme: must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.overflow > 0:
            errors.append(f"overflow: must be > 0, got {self.overflow}")
        if int(self.snapshot_every) != self.snapshot_every or self.snapshot_every < 0:
            errors.append(f"snapshot_every: must be a nonnegative integer, got {self.snapshot_every}")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass(frozen=True, eq=False)
class State:
    t: float
    theta: SpectralField
    pi_big: SpectralField
    u: SpectralField
    w: SpectralField
    phi: SpectralField | None = None
    step: int = 0
    # explicit forcing of the previous step, kept for Adams-Bashforth
    forcing_prev: np.ndarray | None = field(default=None, repr=False)


@dataclass
class EnergyTrace:
    """Sampled energy ``E = (R/2) ||theta||^2`` and companion norms."""

    R: float
    times: np.ndarray
    E: np.ndarray
    theta_l2: np.ndarray
    grad_theta_l2: np.ndarray
    u_l2: np.ndarray
    grad_pi_l2: np.ndarray
    theta_w: np.ndarray

    COLUMNS = ("t", "E", "theta_l2", "grad_theta_l2", "u_l2", "grad_pi_l2")

    def __post_init__(self):
        for name in ("times", "E", "theta_l2", "grad_theta_l2", "u_l2", "grad_pi_l2", "theta_w"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.times)
        if any(len(getattr(self, k)) != n for k in ("E", "theta_l2", "grad_theta_l2", "u_l2", "grad_pi_l2", "theta_w")):
            raise ValueError("trace columns must have equal length")
        if np.any(self.E < 0):
            raise ValueError("energy must be nonnegative")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be increasing")

    def __len__(self) -> int:
        return len(self.times)

    def rows(self) -> np.ndarray:
        return np.column_stack([self.times, self.E, self.theta_l2, self.grad_theta_l2, self.u_l2, self.grad_pi_l2])

    @classmethod
    def from_energy(cls, times, E, R: float = 1.0) -> EnergyTrace:
        """Trace carrying only ``E(t)``; companion columns are filled with NaN."""
        times = np.asarray(times, dtype=float)
        E = np.asarray(E, dtype=float)
        nan = np.full_like(times, np.nan)
        return cls(R, times, E, np.sqrt(2.0 * E / R), nan, nan, nan, nan)


class GalerkinModel:
    """Precomputed linear maps for fixed ``(R, beta_hat, N)``.

    Per horizontal mode ``m`` (shared by both flavors), with ``theta`` given
    by its sine coefficients ``a``:

    * ``Pi = pressure[m] @ a`` (cosine coefficients),
    * ``w = vertical[m] @ a`` (sine coefficients).
    """

    def __init__(self, R: float, beta_hat: float, N: int):
        self.R = float(R)
        self.beta_hat = check_beta(beta_hat)
        self.N = int(N)
        N = self.N
        solver = pressure_solver(self.beta_hat, N)
        d = np.pi * np.arange(N + 1)
        self.W_bb = weighted_projection(-self.beta_hat, N, "B", "B")
        self.W_dd = weighted_projection(-self.beta_hat, N, "D", "D")
        self.W_bd = weighted_projection(-self.beta_hat, N, "B", "D")
        # theta_z = diag(pi n) a ; Pi = R L^{-1} theta_z
        self.pressure = self.R * solver.inverse * d[None, None, :]
        # w = -P_D[e^{-bz} Pi_z] + R theta,   Pi_z = diag(-pi n) Pi
        self.vertical = np.einsum("kj,mjn->mkn", self.W_dd, d[None, :, None] * self.pressure) + self.R * np.eye(N + 1)[None]
        self.vertical[:, 0, :] = 0.0
        self.lam = laplacian_symbol(N)
        self.grid = dealias_grid(N)

    def pressure_coeffs(self, theta_c: np.ndarray) -> np.ndarray:
        return np.einsum("mkn,imn->imk", self.pressure, theta_c)

    def velocity_coeffs(self, theta_c: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pi_c = self.pressure_coeffs(theta_c)
        w_c = np.einsum("mkn,imn->imk", self.vertical, theta_c)
        u_c = _horizontal_velocity(pi_c, self.W_bb)
        return pi_c, u_c, w_c

    def linear_block(self, m: int) -> np.ndarray:
        """Matrix of ``theta -> w(theta) + Delta theta`` on sine modes ``1..N``."""
        A = self.vertical[m][1:, 1:].copy()
        A -= np.diag(self.lam[m, 1:])
        return A


def _horizontal_velocity(pi_c: np.ndarray, W_bb: np.ndarray) -> np.ndarray:
    # u = -P_B[e^{-bz} Pi_x]
    N = pi_c.shape[1] - 1
    k = TWO_PI * np.arange(N + 1)[:, None]
    pix = np.stack([k * pi_c[1], -k * pi_c[0]])
    return -np.einsum("kn,imn->imk", W_bb, pix)


@lru_cache(maxsize=32)
def galerkin_model(R: float, beta_hat: float, N: int) -> GalerkinModel:
    return GalerkinModel(R, beta_hat, N)


def velocity_from(pi_big: SpectralField, theta: SpectralField, R: float, beta_hat: float) -> tuple[SpectralField, SpectralField]:
    """``u = -exp(-b z) Pi_x``, ``w = -exp(-b z) Pi_z + R theta``, projected to order N.

    The exponential weight is applied through exact projection matrices, so
    ``u`` (parity B) and ``w`` (parity D) are the L2 projections of the
    continuous products.
    """
    if pi_big.parity != "B" or theta.parity != "D":
        raise ValueError("expected Pi with parity B and theta with parity D")
    if pi_big.N != theta.N:
        raise ValueError("Pi and theta must share the truncation order")
    beta_hat = check_beta(beta_hat)
    N = theta.N
    W_bb = weighted_projection(-beta_hat, N, "B", "B")
    W_dd = weighted_projection(-beta_hat, N, "D", "D")
    u = _horizontal_velocity(pi_big.coeffs, W_bb)
    piz = differentiate(pi_big, "z").coeffs
    w = -np.einsum("kn,imn->imk", W_dd, piz) + float(R) * theta.coeffs
    return SpectralField("B", u), SpectralField("D", w)


def advection(u: SpectralField, w: SpectralField, theta: SpectralField) -> SpectralField:
    """Galerkin projection of ``u theta_x + w theta_z`` onto basis D (dealiased)."""
    N = theta.N
    grid = dealias_grid(N)
    tx = synthesize(differentiate(theta, "x"), grid).values
    tz = synthesize(differentiate(theta, "z"), grid).values
    ug = synthesize(u, grid).values
    wg = synthesize(w, grid).values
    return analyze(GridField(ug * tx + wg * tz), "D", N)


def divergence(u: SpectralField, w: SpectralField) -> SpectralField:
    """Spectral ``u_x + w_z`` (parity B)."""
    return differentiate(u, "x") + differentiate(w, "z")


def initial_theta(N: int, amplitude: float = 1e-2, kind: str = "multimode", seed: int | None = None) -> SpectralField:
    """Initial temperature perturbations used by the drivers and tests.

    ``single``: ``amplitude * sin(pi z) cos(2 pi x)``; ``multimode``: a fixed
    mix of low modes, including a horizontally uniform one; ``random``: a
    seeded random field on modes ``m, n <= 3`` scaled so its largest
    coefficient equals ``amplitude``; ``zero``.
    """
    if kind == "zero":
        return SpectralField.zeros(N, "D")
    if kind == "single":
        return SpectralField.from_modes(N, "D", {(1, 1, 1): amplitude})
    if kind == "multimode":
        modes = {(1, 1, 1): 1.0, (-1, 1, 2): 0.5, (1, 2, 1): 0.3, (1, 0, 2): 0.2}
        modes = {k: amplitude * v for k, v in modes.items() if k[1] <= N and k[2] <= N}
        return SpectralField.from_modes(N, "D", modes)
    if kind == "random":
        rng = np.random.default_rng(seed)
        f = random_field(min(N, 3), "D", rng).resized(N)
        peak = np.abs(f.coeffs).max()
        return f * (amplitude / peak)
    raise ValueError(f"unknown initial condition kind {kind!r}")


def initial_state(theta0: SpectralField, R: float, beta_hat: float) -> State:
    model = galerkin_model(float(R), float(beta_hat), theta0.N)
    pi_c, u_c, w_c = model.velocity_coeffs(theta0.coeffs)
    return State(0.0, theta0, SpectralField("B", pi_c), SpectralField("B", u_c), SpectralField("D", w_c))


def step_imex(state: State, params: SimulationParams) -> State:
    """Advance one step: implicit diffusion, explicit advection and buoyancy.

    ``imex1``: ``(1 + dt lam) theta' = theta + dt F``;
    ``imex2``: Crank-Nicolson diffusion with Adams-Bashforth forcing
    (first step falls back to a Crank-Nicolson/Euler start).
    """
    model = galerkin_model(float(params.R), float(params.beta_hat), state.theta.N)
    dt = params.dt
    lam = model.lam[None]
    adv = advection(state.u, state.w, state.theta).coeffs
    F = state.w.coeffs - adv
    th = state.theta.coeffs
    if params.scheme == "imex1":
        new = (th + dt * F) / (1.0 + dt * lam)
    else:
        explicit = F if state.forcing_prev is None else 1.5 * F - 0.5 * state.forcing_prev
        new = ((1.0 - 0.5 * dt * lam) * th + dt * explicit) / (1.0 + 0.5 * dt * lam)
    norm = float(np.sqrt(np.sum(new**2)))
    if not np.isfinite(norm) or norm > params.overflow:
        raise BlowUpError(f"||theta|| exceeded overflow guard at t={state.t + dt:.6g}", state=state)
    theta = SpectralField("D", new)
    pi_c, u_c, w_c = model.velocity_coeffs(theta.coeffs)
    return State(
        state.t + dt,
        theta,
        SpectralField("B", pi_c),
        SpectralField("B", u_c),
        SpectralField("D", w_c),
        step=state.step + 1,
        forcing_prev=F,
    )


def _sample(state: State, R: float) -> tuple:
    th = l2_norm(state.theta)
    return (
        state.t,
        0.5 * R * th**2,
        th,
        h1_seminorm(state.theta),
        float(np.hypot(l2_norm(state.u), l2_norm(state.w))),
        h1_seminorm(state.pi_big),
        inner_product(state.theta, state.w),
    )


def _trace(R: float, samples: list) -> EnergyTrace:
    cols = list(zip(*samples)) if samples else [[]] * 7
    return EnergyTrace(R, *cols)


def run_simulation(params: SimulationParams, theta0: SpectralField) -> tuple[EnergyTrace, list[State]]:
    """Integrate to ``t_final``, sampling every ``sample_every`` steps.

    Returns the energy trace and the snapshot states (every
    ``snapshot_every`` steps when that is positive). On blow-up the raised
    :class:`BlowUpError` carries the partial trace.
    """
    if theta0.parity != "D":
        raise ValueError("theta0 must have parity D")
    if theta0.N != params.N:
        theta0 = theta0.resized(params.N)
    state = initial_state(theta0, params.R, params.beta_hat)
    samples = [_sample(state, params.R)]
    snapshots = [state] if params.snapshot_every else []
    n_steps = params.n_steps
    for k in range(1, n_steps + 1):
        try:
            state = step_imex(state, params)
        except BlowUpError as exc:
            exc.trace = _trace(params.R, samples)
            raise
        if k % params.sample_every == 0 or k == n_steps:
            samples.append(_sample(state, params.R))
        if params.snapshot_every and (k % params.snapshot_every == 0 or k == n_steps):
            snapshots.append(state)
    log.debug("finished %d steps, E=%g", n_steps, samples[-1][1])
    return _trace(params.R, samples), snapshots


def stream_function_solve(pi_big: SpectralField, theta: SpectralField, R: float, beta_hat: float) -> SpectralField:
    """Solve ``Delta Phi = -b exp(-b z) Pi_x + R theta_x`` in basis D.

    Sine modes make ``Phi`` and ``Delta Phi`` vanish at the walls; the
    velocity is ``u = -Phi_z``, ``w = Phi_x``.
    """
    beta_hat = check_beta(beta_hat)
    N = theta.N
    W_bd = weighted_projection(-beta_hat, N, "B", "D")
    pix = differentiate(pi_big, "x").coeffs
    rhs = -beta_hat * np.einsum("kn,imn->imk", W_bd, pix) + float(R) * differentiate(theta, "x").coeffs
    lam = laplacian_symbol(N)
    phi = np.divide(-rhs, lam[None], out=np.zeros_like(rhs), where=lam[None] > 0)
    return SpectralField("D", phi)


def linear_growth_rate(R: float, beta_hat: float, m: int, N: int) -> float:
    """Largest real part of the spectrum of ``theta -> w(theta) + Delta theta`` at mode ``m``."""
    if m < 1 or m > N:
        raise ValueError(f"mode m must satisfy 1 <= m <= N, got m={m}, N={N}")
    A = GalerkinModel(R, beta_hat, N).linear_block(m)
    return float(np.max(np.linalg.eigvals(A).real))


def critical_rayleigh(beta_hat: float, m: int = 1, N: int = 16, bracket: tuple[float, float] = (1e-6, 1e4)) -> float:
    """Rayleigh number at which ``linear_growth_rate`` changes sign."""
    return float(scipy.optimize.brentq(lambda R: linear_growth_rate(R, beta_hat, m, N), *bracket, xtol=1e-13, rtol=1e-15))


@dataclass
class LemmaReport:
    R: float
    beta_hat: float
    samples: int
    lemma4_max: float
    lemma8_max: float
    gamma: float
    c_beta: float
    tol: float = 1e-10

    @property
    def passed(self) -> bool:
        return bool(self.lemma4_max <= 1.0 + self.tol and self.lemma8_max <= 1.0 + self.tol)


def lemma_constants(R: float, beta_hat: float) -> tuple[float, float]:
    """``gamma = max(e^{2b}/(2 pi - b), R)`` and ``c(b) = b e^b/(2 pi - b) + pi e^{2b}/(2 (2 pi - b))``."""
    gap = TWO_PI - beta_hat
    gamma = max(np.exp(2 * beta_hat) / gap, R)
    c = beta_hat * np.exp(beta_hat) / gap + np.pi * np.exp(2 * beta_hat) / (2 * gap)
    return float(gamma), float(c)


def verify_lemmas(R: float, beta_hat: float, samples: int = 100, seed: int = 0, N: int = 12, tol: float = 1e-10) -> LemmaReport:
    """Check ``||w||^2 <= gamma ||theta||_{W12}^2`` and ``||grad u|| <= (c(b) + R) ||grad theta||``.

    Ratios are taken over ``samples`` random temperature fields with the
    velocity solved from the pressure problem.
    """
    if samples < 1:
        raise ValueError("samples ≥ 1 required")
    beta_hat = check_beta(beta_hat)
    gamma, c = lemma_constants(R, beta_hat)
    model = galerkin_model(float(R), beta_hat, N)
    rng = np.random.default_rng(seed)
    r4 = r8 = 0.0
    for _ in range(samples):
        theta = random_field(N, "D", rng)
        _, u_c, w_c = model.velocity_coeffs(theta.coeffs)
        u, w = SpectralField("B", u_c), SpectralField("D", w_c)
        w12 = l2_norm(theta) ** 2 + h1_seminorm(theta) ** 2
        r4 = max(r4, l2_norm(w) ** 2 / (gamma * w12))
        grad_u = float(np.hypot(h1_seminorm(u), h1_seminorm(w)))
        r8 = max(r8, grad_u / ((c + R) * h1_seminorm(theta)))
    return LemmaReport(float(R), beta_hat, samples, r4, r8, gamma, c, tol)


def with_params(params: SimulationParams, **changes) -> SimulationParams:
    return replace(params, **changes)

"""Second-order finite-difference solver used to cross-check the spectral code.

Collocated nodes ``x_i = i/nx`` (periodic) and ``z_j = j/nz``, ``j = 0..nz``.
``Pi`` uses ghost points for ``Pi_z = 0``; ``theta`` is Dirichlet and is
extended oddly across the walls when ``theta_z`` is needed there.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import SpectralField, synthesize
from .dynamics import BlowUpError, EnergyTrace, SimulationParams, initial_theta, run_simulation
from .energy import DegenerateTraceError, fit_decay_rate
from .pressure import check_beta, solve_pressure

__all__ = [
    "FdGridSpec",
    "FdState",
    "FdConvergenceError",
    "fd_solve_pressure",
    "fd_velocity",
    "fd_state",
    "fd_step",
    "fd_run",
    "to_fd_grid",
    "fd_norm",
    "CrossValidationReport",
    "cross_validate",
]


class FdConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class FdGridSpec:
    nx: int
    nz: int
    dt: float = 1e-3
    R: float = 1.0
    beta_hat: float = 0.0

    def __post_init__(self):
        if self.nx < 8 or self.nz < 8:
            raise ValueError(f"nx, nz must be >= 8, got {self.nx}, {self.nz}")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        check_beta(self.beta_hat)

    @property
    def hx(self) -> float:
        return 1.0 / self.nx

    @property
    def hz(self) -> float:
        return 1.0 / self.nz

    @property
    def z(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nz + 1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.nx, self.nz + 1


@dataclass(frozen=True, eq=False)
class FdState:
    t: float
    theta: np.ndarray
    pi_big: np.ndarray
    u: np.ndarray
    w: np.ndarray


def _periodic_second(n: int, h: float) -> sp.csr_matrix:
    D = sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="lil")
    D[0, n - 1] = 1.0
    D[n - 1, 0] = 1.0
    return (D / h**2).tocsr()


def _neumann_z(nz: int, h: float, beta: float) -> sp.csr_matrix:
    # d2/dz2 - beta d/dz on nodes 0..nz with ghost Pi_{-1} = Pi_1
    n = nz + 1
    lower = np.full(n - 1, 1.0 / h**2 + beta / (2 * h))
    upper = np.full(n - 1, 1.0 / h**2 - beta / (2 * h))
    A = sp.diags([lower, np.full(n, -2.0 / h**2), upper], [-1, 0, 1], format="lil")
    A[0, 1] = 2.0 / h**2
    A[n - 1, n - 2] = 2.0 / h**2
    return A.tocsr()


@lru_cache(maxsize=16)
def _operators(spec: FdGridSpec):
    nx, nz = spec.nx, spec.nz
    n = nx * (nz + 1)
    Dxx = _periodic_second(nx, spec.hx)
    Lz = _neumann_z(nz, spec.hz, spec.beta_hat)
    A = sp.kron(Dxx, sp.eye(nz + 1)) + sp.kron(sp.eye(nx), Lz)
    # bordered system fixing the trapezoid mean
    wz = np.full(nz + 1, 1.0)
    wz[[0, -1]] = 0.5
    mean_row = np.tile(wz, nx) / (nx * nz)
    ones = np.ones((n, 1))
    bordered = sp.bmat([[A, sp.csr_matrix(ones)], [sp.csr_matrix(mean_row[None]), None]], format="csc")
    pressure_lu = spla.splu(bordered)
    # implicit diffusion on interior theta nodes
    Dzz = sp.diags([np.ones(nz - 2), -2 * np.ones(nz - 1), np.ones(nz - 2)], [-1, 0, 1]) / spec.hz**2
    Lap = sp.kron(Dxx, sp.eye(nz - 1)) + sp.kron(sp.eye(nx), Dzz)
    diffusion_lu = spla.splu((sp.eye(nx * (nz - 1)) - spec.dt * Lap).tocsc())
    return A.tocsr(), pressure_lu, diffusion_lu


def _dx(f: np.ndarray, h: float) -> np.ndarray:
    return (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2 * h)


def _dz_odd(f: np.ndarray, h: float) -> np.ndarray:
    # centered, odd extension across both walls (f = 0 there)
    out = np.empty_like(f)
    out[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2 * h)
    out[:, 0] = f[:, 1] / h
    out[:, -1] = -f[:, -2] / h
    return out


def _dz_even(f: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(f)
    out[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2 * h)
    return out


def fd_solve_pressure(theta: np.ndarray, spec: FdGridSpec, tol: float = 1e-10) -> np.ndarray:
    """Solve ``Delta Pi - b Pi_z = R exp(b z) theta_z`` with ``Pi_z = 0`` and zero mean."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != spec.shape:
        raise ValueError(f"theta must have shape {spec.shape}, got {theta.shape}")
    A, lu, _ = _operators(spec)
    rhs = spec.R * np.exp(spec.beta_hat * spec.z)[None, :] * _dz_odd(theta, spec.hz)
    b = np.append(rhs.ravel(), 0.0)
    sol = lu.solve(b)
    pi = sol[:-1]
    # the multiplier absorbs the discrete compatibility defect
    res = np.linalg.norm(A @ pi + sol[-1] - b[:-1]) / max(np.linalg.norm(b), 1.0)
    if not res <= tol:
        raise FdConvergenceError("pressure solve did not reach tolerance", float(res))
    return pi.reshape(spec.shape)


def fd_velocity(pi_big: np.ndarray, theta: np.ndarray, spec: FdGridSpec) -> tuple[np.ndarray, np.ndarray]:
    weight = np.exp(-spec.beta_hat * spec.z)[None, :]
    u = -weight * _dx(pi_big, spec.hx)
    w = -weight * _dz_even(pi_big, spec.hz) + spec.R * theta
    w[:, [0, -1]] = 0.0
    return u, w


def fd_state(theta: np.ndarray, spec: FdGridSpec, t: float = 0.0) -> FdState:
    theta = np.array(theta, dtype=float)
    theta[:, [0, -1]] = 0.0
    pi = fd_solve_pressure(theta, spec)
    u, w = fd_velocity(pi, theta, spec)
    return FdState(t, theta, pi, u, w)


def fd_step(state: FdState, spec: FdGridSpec, overflow: float = 1e6) -> FdState:
    """One IMEX step: implicit diffusion, explicit centered advection and buoyancy."""
    _, _, lu = _operators(spec)
    th = state.theta
    forcing = state.w - state.u * _dx(th, spec.hx) - state.w * _dz_odd(th, spec.hz)
    interior = th[:, 1:-1] + spec.dt * forcing[:, 1:-1]
    new = np.zeros_like(th)
    new[:, 1:-1] = lu.solve(interior.ravel()).reshape(spec.nx, spec.nz - 1)
    norm = fd_norm(new)
    if not np.isfinite(norm) or norm > overflow:
        raise BlowUpError(f"||theta|| exceeded overflow guard at t={state.t + spec.dt:.6g}")
    pi = fd_solve_pressure(new, spec)
    u, w = fd_velocity(pi, new, spec)
    return FdState(state.t + spec.dt, new, pi, u, w)


def fd_norm(f: np.ndarray) -> float:
    """Trapezoid L2 norm on the unit cell."""
    nx, nzp = f.shape
    wz = np.full(nzp, 1.0)
    wz[[0, -1]] = 0.5
    return float(np.sqrt(np.sum(f**2 * wz[None, :]) / (nx * (nzp - 1))))


def to_fd_grid(field: SpectralField, spec: FdGridSpec) -> np.ndarray:
    """Evaluate a spectral field on the finite-difference nodes."""
    return synthesize(field, spec.shape).values


def fd_run(spec: FdGridSpec, theta0: np.ndarray, t_final: float, sample_every: int = 1) -> EnergyTrace:
    state = fd_state(theta0, spec)
    times, E = [0.0], [0.5 * spec.R * fd_norm(state.theta) ** 2]
    n_steps = int(round(t_final / spec.dt))
    for k in range(1, n_steps + 1):
        state = fd_step(state, spec)
        if k % sample_every == 0 or k == n_steps:
            times.append(state.t)
            E.append(0.5 * spec.R * fd_norm(state.theta) ** 2)
    return EnergyTrace.from_energy(times, E, spec.R)


def _rel(diff: float, ref: float) -> float:
    if diff == 0.0:
        return 0.0
    return diff / ref if ref > 0 else float("inf")


def _orders(errors: list[float]) -> list[float]:
    return [float(np.log2(a / b)) if a > 0 and b > 0 else float("nan") for a, b in zip(errors, errors[1:])]


@dataclass
class CrossValidationReport:
    """Spectral vs FD discrepancies per grid size.

    ``pressure_errors``: relative L2 difference of the initial pressure;
    ``energy_errors``: ``max |E_fd - E_sp| / max E_sp`` over the trace.
    """

    R: float
    beta_hat: float
    grids: list[int]
    pressure_errors: list[float]
    energy_errors: list[float]
    spectral_rate: float
    fd_rates: list[float]

    @property
    def pressure_orders(self) -> list[float]:
        return _orders(self.pressure_errors)

    @property
    def energy_orders(self) -> list[float]:
        return _orders(self.energy_errors)

    @property
    def rate_rel_errors(self) -> list[float]:
        return [abs(r - self.spectral_rate) / abs(self.spectral_rate) for r in self.fd_rates]

    def passed(self, tol: float = 1e-3, order_range: tuple[float, float] = (1.8, 2.2)) -> bool:
        if self.pressure_errors[-1] > tol or self.energy_errors[-1] > tol:
            return False
        if self.pressure_errors[-1] == 0.0:
            return True
        orders = self.pressure_orders
        return not orders or order_range[0] <= orders[-1] <= order_range[1]

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(
            pressure_orders=self.pressure_orders,
            energy_orders=self.energy_orders,
            rate_rel_errors=self.rate_rel_errors,
        )
        return d


def cross_validate(
    R: float,
    beta_hat: float,
    grids=(16, 32, 64),
    N: int = 16,
    dt: float = 1e-3,
    t_final: float = 0.2,
    theta0: SpectralField | None = None,
    reference_N: int = 32,
) -> CrossValidationReport:
    """Run both solvers from the same initial temperature and compare.

    The spectral pressure reference is solved at ``max(N, reference_N)`` so
    its truncation error is negligible next to the FD error.
    """
    theta0 = initial_theta(N, 1e-2, "multimode") if theta0 is None else theta0.resized(N)
    params = SimulationParams(R=R, beta_hat=beta_hat, N=N, dt=dt, t_final=t_final)
    ref, _ = run_simulation(params, theta0)
    pi_ref = solve_pressure(theta0.resized(max(N, reference_N)), R, beta_hat)
    E_scale = float(np.max(ref.E))

    def rate(trace):
        try:
            return fit_decay_rate(trace, 0.5).sigma
        except DegenerateTraceError:
            return float("nan")

    p_err, e_err, rates = [], [], []
    for n in grids:
        spec = FdGridSpec(n, n, dt, R, beta_hat)
        th = to_fd_grid(theta0, spec)
        exact = to_fd_grid(pi_ref, spec)
        p_err.append(_rel(fd_norm(fd_solve_pressure(th, spec) - exact), fd_norm(exact)))
        trace = fd_run(spec, th, t_final)
        e_err.append(_rel(float(np.max(np.abs(trace.E - ref.E))), E_scale))
        rates.append(rate(trace))
    return CrossValidationReport(float(R), float(beta_hat), list(grids), p_err, e_err, rate(ref), rates)

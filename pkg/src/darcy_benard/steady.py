"""Dimensional conduction state and the nondimensional groups.

The pure conduction state has ``v = 0``, a linear temperature and a pressure
in hydrostatic balance with the density law

    rho = rho0 [1 - alpha (T - T0) + beta (p - p0)].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.integrate

__all__ = [
    "DimensionalParams",
    "ConductionProfile",
    "Scales",
    "ClosedFormSingularityError",
    "conduction_temperature",
    "conduction_pressure_closed_form",
    "conduction_pressure_ode",
    "hydrostatic_residual",
    "conduction_profile",
    "nondimensionalize",
]


class ClosedFormSingularityError(ValueError):
    """The closed-form pressure divides by ``beta``; use the ODE profile at ``beta = 0``."""


@dataclass(frozen=True)
class DimensionalParams:
    mu: float = 1e-3
    K: float = 1e-9
    chi: float = 0.6
    c_V: float = 4.2e3
    rho0: float = 1000.0
    alpha: float = 2e-4
    beta: float = 1e-6
    g: float = 9.8
    d: float = 0.1
    T_L: float = 300.0
    T_U: float = 290.0
    T0: float | None = None
    p0: float = 0.0
    p_bar: float = 0.0
    k_override: float | None = field(default=None, repr=False)

    def __post_init__(self):
        errors = []
        for name in ("mu", "K", "chi", "c_V", "rho0", "g", "d"):
            if not getattr(self, name) > 0:
                errors.append(f"{name}: must be > 0")
        if self.alpha < 0:
            errors.append("alpha: must be >= 0")
        if self.beta < 0:
            errors.append("beta: must be >= 0")
        if not self.T_L > self.T_U:
            errors.append("T_L: must exceed T_U")
        if self.k_override is not None and not self.k_override > 0:
            errors.append("k_override: must be > 0")
        if errors:
            raise ValueError("; ".join(errors))
        if self.T0 is None:
            object.__setattr__(self, "T0", self.T_L)

    @property
    def k(self) -> float:
        """Thermal diffusivity entering the heat equation, ``chi/(rho0 c_V)`` unless overridden."""
        if self.k_override is not None:
            return self.k_override
        return self.chi / (self.rho0 * self.c_V)

    @property
    def delta_T(self) -> float:
        return self.T_L - self.T_U


@dataclass(frozen=True)
class Scales:
    R: float
    beta_hat: float
    P: float
    U: float
    T_sharp: float
    tau: float


def _check_z(z, d: float) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if np.any(z < 0) or np.any(z > d):
        raise ValueError(f"z must lie in [0, d] = [0, {d}]")
    return z


def conduction_temperature(z, params: DimensionalParams):
    z = _check_z(z, params.d)
    return params.T_L - params.delta_T / params.d * z


def conduction_pressure_closed_form(z, params: DimensionalParams):
    """Closed-form conduction pressure (requires ``beta > 0``)."""
    z = _check_z(z, params.d)
    beta = params.beta
    if beta == 0:
        raise ClosedFormSingularityError("closed form is singular at beta = 0; use conduction_pressure_ode")
    rho0, g, d = params.rho0, params.g, params.d
    a = rho0 * g * beta
    one_minus = -np.expm1(-a * z)
    grad = params.alpha * params.delta_T / d
    return (
        params.p0
        + params.p_bar * np.exp(-a * z)
        + grad / (beta**2 * rho0 * g) * one_minus
        - (grad * z + one_minus) / beta
    )


def _rhs(params: DimensionalParams):
    rho0, g, alpha, beta, p0 = params.rho0, params.g, params.alpha, params.beta, params.p0

    def f(z, p):
        T = params.T_L - params.delta_T / params.d * z
        return -rho0 * g * (1.0 - alpha * (T - params.T0) + beta * (p - p0))

    return f


def conduction_pressure_ode(z, params: DimensionalParams, rtol: float = 1e-13):
    """Hydrostatic pressure by high-order integration from ``p(0) = p0 + p_bar``."""
    z = _check_z(z, params.d)
    flat = np.atleast_1d(z).ravel()
    p_start = params.p0 + params.p_bar
    scale = max(abs(p_start), params.rho0 * params.g * params.d)
    sol = scipy.integrate.solve_ivp(
        _rhs(params), (0.0, params.d), [p_start], method="DOP853", rtol=rtol, atol=rtol * scale, dense_output=True
    )
    if not sol.success:
        raise RuntimeError(f"hydrostatic integration failed: {sol.message}")
    out = sol.sol(flat)[0]
    return out.reshape(z.shape) if z.ndim else float(out[0])


def hydrostatic_residual(z, p_func, params: DimensionalParams, order: int = 20) -> np.ndarray:
    """Integrated balance ``p(z) - p(0) + int_0^z rho g dz'``, scaled by ``rho0 g d``.

    ``p_func`` maps depths to pressures; the integral uses Gauss-Legendre
    quadrature, exact to round-off for smooth profiles.
    """
    z = np.atleast_1d(_check_z(z, params.d)).ravel()
    xg, wg = np.polynomial.legendre.leggauss(order)
    f = _rhs(params)
    out = np.empty_like(z)
    p_start = p_func(np.array([0.0]))[0]
    for i, zi in enumerate(z):
        s = 0.5 * zi * (xg + 1.0)
        integral = 0.5 * zi * np.dot(wg, f(s, np.asarray(p_func(s))))
        out[i] = (p_func(np.array([zi]))[0] - p_start - integral) / (params.rho0 * params.g * params.d)
    return out


@dataclass
class ConductionProfile:
    z: np.ndarray
    T_b: np.ndarray
    p_b: np.ndarray | None
    p_b_ode: np.ndarray
    max_discrepancy: float
    relative_discrepancy: float
    residual_ode: float

    def as_dict(self) -> dict:
        return {
            "z": self.z.tolist(),
            "T_b": self.T_b.tolist(),
            "p_b": None if self.p_b is None else self.p_b.tolist(),
            "p_b_ode": self.p_b_ode.tolist(),
            "max_discrepancy": self.max_discrepancy,
            "relative_discrepancy": self.relative_discrepancy,
            "residual_ode": self.residual_ode,
        }


def conduction_profile(params: DimensionalParams, n: int = 101) -> ConductionProfile:
    """Both pressure profiles on a uniform grid, with their discrepancy surfaced."""
    z = np.linspace(0.0, params.d, n)
    T = conduction_temperature(z, params)
    p_ode = conduction_pressure_ode(z, params)
    res = hydrostatic_residual(z, lambda s: conduction_pressure_ode(s, params), params)
    if params.beta > 0:
        p = conduction_pressure_closed_form(z, params)
        diff = float(np.max(np.abs(p - p_ode)))
        rel = diff / max(float(np.max(np.abs(p_ode))), params.rho0 * params.g * params.d)
    else:
        p, diff, rel = None, float("nan"), float("nan")
    return ConductionProfile(z, T, p, p_ode, diff, rel, float(np.max(np.abs(res))))


def nondimensionalize(params: DimensionalParams) -> Scales:
    """Darcy-Rayleigh number, dimensionless compressibility and the reference scales."""
    k = params.k
    R = params.rho0 * params.alpha * params.g * params.d * params.delta_T * params.K / (params.mu * k)
    beta_hat = params.rho0 * params.g * params.d * params.beta
    return Scales(
        R=float(R),
        beta_hat=float(beta_hat),
        P=params.mu * k / params.K,
        U=k / params.d,
        T_sharp=params.delta_T,
        tau=params.d**2 / k,
    )

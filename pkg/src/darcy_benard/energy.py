"""Energy functional, Gronwall bounds, decay fits and the certified threshold.

With ``E = (R/2) ||theta||^2`` the energy estimate reads

    (R/2) d/dt ||theta||^2 + R ||grad theta||^2 - A ||u||^2 - B ||grad Pi||^2 <= c0 ||theta||^2

for auxiliary Young constants ``M, M1, M2`` with ``A, B < 0``. Exponential
decay is certified when ``R < 10 pi^2 / (e^{2b}(b^2 + 1) + 4 M1)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.stats

from .basis import TWO_PI, SpectralField, l2_norm
from .dynamics import EnergyTrace
from .pressure import check_beta

__all__ = [
    "EnergyTrace",
    "DecayFit",
    "ThresholdCertificate",
    "GronwallReport",
    "DegenerateTraceError",
    "energy",
    "constants_from",
    "certify_threshold",
    "gronwall_check",
    "fit_decay_rate",
    "energy_identity_residuals",
]

C_TILDE_1 = 10.0 * np.pi**2
INFEASIBLE_BETA = 1.5 * np.pi


class DegenerateTraceError(ValueError):
    """The fit window has too few samples or a nonpositive energy."""


def energy(theta: SpectralField, R: float) -> float:
    if not R > 0:
        raise ValueError(f"R must be > 0, got {R}")
    return 0.5 * R * l2_norm(theta) ** 2


def constants_from(M: float, M1: float, M2: float, R: float, beta_hat: float) -> tuple[float, float, float]:
    """Coefficients ``(A, B, c0)`` of the energy inequality."""
    if min(M, M1, M2) <= 0:
        raise ValueError("M, M1, M2 must be positive")
    A = -1.0 + 1.0 / (2 * M1) + M2 / 2
    B = -1.0 + beta_hat / TWO_PI + (1.0 / (2 * M)) * (1.0 / TWO_PI + 1.0) + 1.0 / (2 * M2)
    c0 = 0.5 * R**2 * np.exp(2 * beta_hat) * (beta_hat**2 + 1) * M + 2 * R**2 * M1
    return float(A), float(B), float(c0)


def _decay_constants(M: float, M1: float, R: float, beta_hat: float) -> tuple[float, float, float, float]:
    _, _, c0 = constants_from(M, M1, 1.0, R, beta_hat)
    c0_hat = R * (0.5 * R * np.exp(2 * beta_hat) * (beta_hat**2 + 1) * M + 2 * R * M1)
    return c0, float(c0_hat), float(2 * c0_hat), float(C_TILDE_1)


@dataclass(frozen=True)
class ThresholdCertificate:
    beta_hat: float
    margin: float
    feasible: bool
    M: float = float("nan")
    M1: float = float("nan")
    M2: float = float("nan")
    A: float = float("nan")
    B: float = float("nan")
    R_max: float = float("nan")
    # evaluated at R_eval = R_max (1 - margin)
    R_eval: float = float("nan")
    c0: float = float("nan")
    c0_hat: float = float("nan")
    c_tilde_0: float = float("nan")
    c_tilde_1: float = C_TILDE_1
    reason: str = ""

    def constants_at(self, R: float) -> dict:
        """``c0, c0_hat, c_tilde_0, c_tilde_1`` and the decay exponent at Rayleigh number ``R``."""
        if not self.feasible:
            raise ValueError(f"infeasible certificate: {self.reason}")
        c0, c0_hat, ct0, ct1 = _decay_constants(self.M, self.M1, R, self.beta_hat)
        return {"c0": c0, "c0_hat": c0_hat, "c_tilde_0": ct0, "c_tilde_1": ct1, "decay_exponent": ct0 - ct1}

    @property
    def decay_exponent(self) -> float:
        return self.c_tilde_0 - self.c_tilde_1

    def as_dict(self) -> dict:
        return asdict(self)


def certify_threshold(beta_hat: float, margin: float = 1e-3) -> ThresholdCertificate:
    """Certified Rayleigh bound with constants at relative distance ``margin`` from their infima.

    ``M2`` sits above ``pi/(2 pi - b)`` and ``M1`` above ``1/(2 - M2)``; ``M``
    is the smallest value (times ``1 + margin``) that makes ``B < 0``. For
    ``b >= 3 pi/2`` the admissible ``M2`` interval is empty and an infeasible
    certificate is returned.
    """
    beta_hat = check_beta(beta_hat)
    if not 0.0 < margin < 1.0:
        raise ValueError(f"margin must lie in (0, 1), got {margin}")
    if beta_hat >= INFEASIBLE_BETA:
        return ThresholdCertificate(beta_hat, margin, False, reason="M2 interval (pi/(2pi-b), 2) is empty")
    m2_inf = np.pi / (TWO_PI - beta_hat)
    # gaps in closed form; direct differences cancel near b = 3 pi/2
    width = 2.0 * (INFEASIBLE_BETA - beta_hat) / (TWO_PI - beta_hat)
    M2 = m2_inf + margin * width
    M1 = (1.0 + margin) / ((1.0 - margin) * width)
    # 1 - b/(2 pi) - 1/(2 M2), using 1/(2 m2_inf) = 1 - b/(2 pi)
    slack = (1.0 - beta_hat / TWO_PI) * margin * width / M2
    M = (1.0 + margin) * (1.0 / TWO_PI + 1.0) / (2 * slack)
    A, B, _ = constants_from(M, M1, M2, 1.0, beta_hat)
    R_max = C_TILDE_1 / (np.exp(2 * beta_hat) * (beta_hat**2 + 1) + 4 * M1)
    R_eval = R_max * (1.0 - margin)
    c0, c0_hat, ct0, ct1 = _decay_constants(M, M1, R_eval, beta_hat)
    return ThresholdCertificate(
        beta_hat, margin, True, float(M), float(M1), float(M2), A, B, float(R_max), float(R_eval), c0, c0_hat, ct0, ct1
    )


@dataclass
class GronwallReport:
    passed: bool
    exponent: float
    max_ratio: float
    first_violation: int | None = None
    first_violation_time: float | None = None


def gronwall_check(trace: EnergyTrace, exponent: float, tol: float = 1e-6, allowance: float = 0.0) -> GronwallReport:
    """Check ``E(t_k) <= E(0) exp(exponent t_k) (1 + tol + allowance)`` at every sample.

    ``allowance`` absorbs time-discretization error (pass ``O(dt)``). Pass
    ``c0`` for the growth bound or ``c_tilde_0 - c_tilde_1`` for the decay bound.
    """
    if len(trace) == 0:
        raise ValueError("trace must be nonempty")
    t = trace.times - trace.times[0]
    with np.errstate(over="ignore"):
        bound = trace.E[0] * np.exp(exponent * t) * (1.0 + tol + allowance)
    bad = np.flatnonzero(trace.E > bound)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, trace.E / bound, np.where(trace.E > 0, np.inf, 0.0))
    max_ratio = float(np.max(ratio))
    if bad.size:
        k = int(bad[0])
        return GronwallReport(False, float(exponent), max_ratio, k, float(trace.times[k]))
    return GronwallReport(True, float(exponent), max_ratio)


@dataclass(frozen=True)
class DecayFit:
    sigma: float
    r_squared: float
    window: tuple[float, float]
    samples: int


def fit_decay_rate(trace: EnergyTrace, tail_fraction: float = 0.5, min_samples: int = 10) -> DecayFit:
    """Least-squares slope of ``log E`` over the last ``tail_fraction`` of the trace."""
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    n = len(trace)
    k0 = n - max(int(np.ceil(tail_fraction * n)), 1)
    t, E = trace.times[k0:], trace.E[k0:]
    if len(t) < min_samples:
        raise DegenerateTraceError(f"need >= {min_samples} samples in the fit window, got {len(t)}")
    if np.any(~np.isfinite(E)) or np.any(E <= np.finfo(float).tiny):
        raise DegenerateTraceError("energy is zero or underflows in the fit window")
    fit = scipy.stats.linregress(t, np.log(E))
    r2 = float(fit.rvalue**2) if np.isfinite(fit.rvalue) else 1.0
    return DecayFit(float(fit.slope), r2, (float(t[0]), float(t[-1])), len(t))


def energy_identity_residuals(trace: EnergyTrace) -> np.ndarray:
    """``d/dt(||theta||^2/2) - [(theta, w) - ||grad theta||^2]`` by forward differences.

    The advection term drops out at the Galerkin level, so for a trace sampled
    every step the residual is ``O(dt)``.
    """
    half = 0.5 * trace.theta_l2**2
    rate = np.diff(half) / np.diff(trace.times)
    rhs = trace.theta_w[:-1] - trace.grad_theta_l2[:-1] ** 2
    return rate - rhs

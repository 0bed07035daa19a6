"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import time

import numpy as np
import pytest

from darcy_benard.basis import SpectralField, inner_product, l2_norm, random_field
from darcy_benard.dynamics import (
    SimulationParams,
    advection,
    critical_rayleigh,
    divergence,
    initial_state,
    initial_theta,
    linear_growth_rate,
    run_simulation,
    verify_lemmas,
)
from darcy_benard.energy import certify_threshold, energy_identity_residuals, fit_decay_rate, gronwall_check
from darcy_benard.fd import cross_validate
from darcy_benard.pressure import manufactured_solution_check, verify_theorem1
from darcy_benard.steady import DimensionalParams, conduction_profile, conduction_pressure_ode


@pytest.fixture
def report(capsys):
    def _report(number: int, title: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}")
        assert ok, detail

    return _report


def test_c01_pressure_estimates(report):
    t0 = time.perf_counter()
    worst = {}
    for beta in (0.0, 1.0, 5.0):
        rng = np.random.default_rng(0)
        g = lap = 0.0
        for _ in range(200):
            r = verify_theorem1(random_field(16, "B", rng), beta)
            g, lap = max(g, r.grad_ratio), max(lap, r.lap_ratio)
        worst[beta] = (g, lap)
    wall = time.perf_counter() - t0
    ok = all(g <= 1 + 1e-10 and lap <= 1 + 1e-10 for g, lap in worst.values()) and wall < 10
    detail = ", ".join(f"b={b:g}: grad {g:.4f} lap {lap:.12f}" for b, (g, lap) in worst.items())
    report(1, "pressure a priori estimates", ok, f"{detail}; {wall:.2f}s")


def test_c02_divergence_free(report):
    rng = np.random.default_rng(1)
    worst = 0.0
    for beta in (0.0, 0.5, 1.0, 3.0, 5.0, 6.2):
        for R in (1.0, 20.0, 100.0):
            th = random_field(16, "D", rng)
            st = initial_state(th, R, beta)
            scale = max(1.0, np.hypot(l2_norm(st.u), l2_norm(st.w)))
            worst = max(worst, l2_norm(divergence(st.u, st.w)) / scale)
    params = SimulationParams(R=70.0, beta_hat=1.0, N=16, dt=1e-3, t_final=0.05, snapshot_every=10)
    _, snaps = run_simulation(params, initial_theta(16, 0.1, "random", seed=4))
    for st in snaps:
        scale = max(1.0, np.hypot(l2_norm(st.u), l2_norm(st.w)))
        worst = max(worst, l2_norm(divergence(st.u, st.w)) / scale)
    report(2, "divergence-free velocity", worst <= 1e-10, f"max ||div u|| / max(1, ||u||) = {worst:.2e}")


def test_c03_manufactured_pressure(report):
    single = manufactured_solution_check(0.0, 8, SpectralField.from_modes(8, "B", {(1, 1, 2): 1.0})).relative_error
    smooth = max(
        manufactured_solution_check(1.5, 24).relative_error,
        manufactured_solution_check(1.5, 24, SpectralField.from_modes(24, "B", {(1, 1, 2): 1.0})).relative_error,
    )
    ok = single <= 1e-12 and smooth <= 1e-8
    report(3, "manufactured pressure", ok, f"single mode b=0 {single:.2e}; smooth b=1.5 N=24 {smooth:.2e}")


def test_c04_threshold_certificate(report):
    target = 30 * np.pi**2 / 11
    c = certify_threshold(0.0, 1e-4)
    rel = abs(c.R_max - target) / target
    edge = 1.5 * np.pi
    infeasible = [not certify_threshold(b).feasible for b in (edge, edge + 1e-9, 5.0, 6.0)]
    feasible = certify_threshold(np.nextafter(edge, 0.0)).feasible
    ok = rel < 1e-3 and all(infeasible) and feasible
    report(4, "threshold certificate", ok, f"R_max={c.R_max:.6f} vs {target:.6f} (rel {rel:.1e}); infeasible from 3pi/2: {all(infeasible) and feasible}")


def test_c05_subcritical_decay(report):
    R, dt = 20.0, 1e-3
    cert = certify_threshold(0.0)
    t0 = time.perf_counter()
    params = SimulationParams(R=R, beta_hat=0.0, N=16, dt=dt, t_final=2.0)
    trace, _ = run_simulation(params, initial_theta(16, 1e-2, "multimode"))
    wall = time.perf_counter() - t0
    mono = bool(np.all(np.diff(trace.E[10:]) <= 0))
    exponent = cert.constants_at(R)["decay_exponent"]
    bound = gronwall_check(trace, exponent, tol=1e-6, allowance=dt)
    fit = fit_decay_rate(trace, 0.5)
    ok = R < cert.R_max and mono and bound.passed and fit.sigma < 0 and wall < 30
    vacuous = " (positive: bound is vacuous)" if exponent > 0 else ""
    detail = f"monotone={mono}, bound exponent {exponent:.4g}{vacuous} holds={bound.passed}, sigma={fit.sigma:.4f}, {wall:.2f}s"
    report(5, "subcritical decay", ok, detail)


def test_c06_bifurcation(report):
    rc = critical_rayleigh(0.0, 1, 16)
    marginal = abs(linear_growth_rate(25 * np.pi**2 / 4, 0.0, 1, 16))
    rates = {}
    for R in (55.0, 70.0):
        params = SimulationParams(R=R, beta_hat=0.0, N=16, dt=1e-3, t_final=2.0)
        trace, _ = run_simulation(params, initial_theta(16, 1e-4, "multimode"))
        rates[R] = fit_decay_rate(trace, 0.5).sigma
    ok = abs(rc - 25 * np.pi**2 / 4) <= 1e-6 and marginal <= 1e-6 and rates[55.0] < 0 < rates[70.0]
    report(6, "bifurcation consistency", ok, f"R_c={rc:.10f}, sigma(R_c)={marginal:.1e}, fit R=55 {rates[55.0]:.3f}, R=70 {rates[70.0]:.3f}")


def test_c07_compressibility_trend(report):
    betas = (0.0, 0.25, 0.5)
    rates = [linear_growth_rate(61.0, b, 1, 16) for b in betas]
    ok = bool(np.all(np.diff(rates) > 0))
    report(7, "growth increasing in beta at R=61", ok, ", ".join(f"b={b:g}: {r:.6f}" for b, r in zip(betas, rates)))


def test_c08_lemma_bounds(report):
    worst4 = worst8 = 0.0
    for R in (1.0, 10.0):
        for beta in (0.0, 1.0):
            rep = verify_lemmas(R, beta, samples=100, seed=11, N=12)
            worst4, worst8 = max(worst4, rep.lemma4_max), max(worst8, rep.lemma8_max)
    ok = worst4 <= 1 + 1e-10 and worst8 <= 1 + 1e-10
    report(8, "velocity bounds", ok, f"max ||w||^2 ratio {worst4:.4f}, max ||grad u|| ratio {worst8:.4f}")


def test_c09_oracle_equivalence(report):
    reps = [
        cross_validate(20.0, 0.0, (32, 64, 128), t_final=0.1, theta0=initial_theta(16, 1e-2, "single")),
        cross_validate(20.0, 1.0, (32, 64, 128), t_final=0.1, theta0=initial_theta(16, 1e-2, "random", seed=3)),
    ]
    errs = [max(r.pressure_errors[-1], r.energy_errors[-1]) for r in reps]
    orders = [o for r in reps for o in (r.pressure_orders[-1], r.energy_orders[-1])]
    ok = max(errs) <= 1e-3 and all(1.8 <= o <= 2.2 for o in orders)
    report(9, "spectral vs finite differences", ok, f"128x128 rel diff {max(errs):.2e}, orders {', '.join(f'{o:.3f}' for o in orders)}")


def test_c10_energy_identity(report):
    # residual(dt) = C dt + D dt^2 + O(dt^3) + e0 on common sample times; e0 by Richardson
    worst_e0 = 0.0
    ratios = []
    skew = 0.0
    for R, beta in ((20.0, 0.0), (70.0, 1.0)):
        res = []
        for k, dt in enumerate((5e-5, 2.5e-5, 1.25e-5)):
            params = SimulationParams(R=R, beta_hat=beta, N=16, dt=dt, t_final=0.01, snapshot_every=50)
            trace, snaps = run_simulation(params, initial_theta(16, 0.1, "multimode"))
            res.append(energy_identity_residuals(trace)[:: 2**k][:200])
            for st in snaps:
                adv = advection(st.u, st.w, st.theta)
                skew = max(skew, abs(inner_product(adv, st.theta)) / (l2_norm(adv) * l2_norm(st.theta) + 1e-300))
        a1, a2 = 2 * res[1] - res[0], 2 * res[2] - res[1]
        e0 = (4 * a2 - a1) / 3
        worst_e0 = max(worst_e0, float(np.max(np.abs(e0))))
        ratios.append(float(np.max(np.abs(res[1])) and np.max(np.abs(res[0])) / np.max(np.abs(res[1]))))
    ok = worst_e0 <= 1e-8 and all(1.7 <= r <= 2.3 for r in ratios) and skew <= 1e-12
    detail = f"extrapolated dt->0 residual {worst_e0:.1e}, halving-dt ratios {', '.join(f'{r:.3f}' for r in ratios)}, <u.grad theta, theta> rel {skew:.1e}"
    report(10, "energy identity", ok, detail)


def test_c11_steady_state(report):
    prof = conduction_profile(DimensionalParams())
    flat = DimensionalParams(alpha=0.0, beta=0.0)
    z = np.linspace(0.0, flat.d, 21)
    exact = flat.p0 + flat.p_bar - flat.rho0 * flat.g * z
    err = float(np.max(np.abs(conduction_pressure_ode(z, flat) - exact))) / (flat.rho0 * flat.g * flat.d)
    ok = prof.residual_ode <= 1e-10 and err <= 1e-12 and np.isfinite(prof.max_discrepancy)
    detail = f"ODE residual {prof.residual_ode:.1e}, closed form vs ODE {prof.max_discrepancy:.2e} Pa (rel {prof.relative_discrepancy:.1e}), constant-density error {err:.1e}"
    report(11, "steady-state audit", ok, detail)

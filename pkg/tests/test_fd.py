import numpy as np
import pytest

from darcy_benard.basis import SpectralField, random_field
from darcy_benard.dynamics import initial_theta
from darcy_benard.fd import (
    FdGridSpec,
    cross_validate,
    fd_norm,
    fd_run,
    fd_solve_pressure,
    fd_state,
    fd_step,
    fd_velocity,
    to_fd_grid,
)
from darcy_benard.pressure import solve_pressure


def test_spec_validation():
    with pytest.raises(ValueError):
        FdGridSpec(4, 16)
    with pytest.raises(ValueError):
        FdGridSpec(16, 16, beta_hat=7.0)


def test_zero_data():
    spec = FdGridSpec(16, 16, R=3.0, beta_hat=1.0)
    assert np.all(fd_solve_pressure(np.zeros(spec.shape), spec) == 0)
    st0 = fd_state(np.zeros(spec.shape), spec)
    st1 = fd_step(st0, spec)
    assert np.all(st1.theta == 0)


def _single_mode_errors(grids, R=2.0):
    errs = []
    mode = SpectralField.from_modes(2, "D", {(1, 1, 1): 1.0})
    exact_pi = SpectralField.from_modes(2, "B", {(1, 1, 1): -R / (5 * np.pi)})
    for n in grids:
        spec = FdGridSpec(n, n, R=R)
        pi = fd_solve_pressure(to_fd_grid(mode, spec), spec)
        ex = to_fd_grid(exact_pi, spec)
        errs.append(fd_norm(pi - ex) / fd_norm(ex))
    return np.array(errs)


def test_pressure_second_order():
    errs = _single_mode_errors([16, 32, 64])
    orders = np.log2(errs[:-1] / errs[1:])
    assert np.all((orders > 1.8) & (orders < 2.2))
    assert errs[-1] < 1e-3


def test_pressure_matches_spectral_at_beta_one(rng):
    th = random_field(4, "D", rng)
    ref = solve_pressure(th.resized(32), 3.0, 1.0)
    spec = FdGridSpec(128, 128, R=3.0, beta_hat=1.0)
    pi = fd_solve_pressure(to_fd_grid(th, spec), spec)
    ex = to_fd_grid(ref, spec)
    assert fd_norm(pi - ex) / fd_norm(ex) < 1e-3


def test_discrete_divergence_second_order(rng):
    th = random_field(3, "D", rng)
    divs = []
    for n in (32, 64):
        spec = FdGridSpec(n, n, R=5.0, beta_hat=0.8)
        g = to_fd_grid(th, spec)
        u, w = fd_velocity(fd_solve_pressure(g, spec), g, spec)
        du = (np.roll(u, -1, 0) - np.roll(u, 1, 0)) / (2 * spec.hx)
        dw = (w[:, 2:] - w[:, :-2]) / (2 * spec.hz)
        divs.append(np.abs(du[:, 1:-1] + dw).max())
    assert 3.0 < divs[0] / divs[1] < 5.0


def test_fd_decay_matches_spectral():
    rep = cross_validate(20.0, 0.0, grids=(32, 64), t_final=0.1, theta0=initial_theta(16, 1e-2, "single"))
    assert rep.rate_rel_errors[-1] < 0.05
    assert all(1.8 < o < 2.2 for o in rep.energy_orders)
    assert rep.passed(tol=1e-3)


def test_zero_cross_validation():
    rep = cross_validate(20.0, 0.5, grids=(16, 32), t_final=0.02, theta0=initial_theta(16, kind="zero"))
    assert rep.energy_errors == [0.0, 0.0] and rep.pressure_errors == [0.0, 0.0]
    assert rep.passed()


def test_fd_run_energy_decays():
    spec = FdGridSpec(16, 16, dt=1e-3, R=20.0)
    th = to_fd_grid(initial_theta(8), spec)
    tr = fd_run(spec, th, 0.05, sample_every=5)
    assert len(tr) == 11 and tr.E[-1] < tr.E[0]

import math

import numpy as np
import pytest
from scipy.integrate import quad

from zenodyn.channels import basis_derivative
from zenodyn.effective import ValidityWarning
from zenodyn.landau_zener import (
    LZParams,
    basis_coupling_sq,
    default_window,
    diabatic_basis,
    level_energy,
    lz_closed_form,
    lz_effective_ode,
    lz_exact,
    lz_experiment,
    lz_formula,
    lz_hamiltonian,
    lz_rate,
    lz_rate_integral,
    make_schedule,
    validity_ratio,
)
from zenodyn.operators import ValidationError

from conftest import SX, SZ


def test_params_validation():
    for bad in ((0.0, 1.0), (1.0, -1.0), (math.nan, 1.0)):
        with pytest.raises(ValidationError):
            LZParams(*bad)
    assert LZParams(1.0, 4.0).window == 0.5


def test_hamiltonian_and_levels():
    p = LZParams(0.8, 3.0)
    H = lz_hamiltonian(p)
    assert np.allclose(H(0.0), 0.8 * SX)
    for t in (-2.0, 0.3, 5.0):
        assert np.allclose(H(t), H(t).conj().T)
        w = np.linalg.eigvalsh(H(t))
        E = level_energy(p, t)
        assert np.allclose(w, [-E, E])


def test_diabatic_basis_eigenvectors():
    p = LZParams(0.8, 3.0)
    for t in np.linspace(-40, 40, 17):
        b = diabatic_basis(p, t)
        E = level_energy(p, t)
        H = lz_hamiltonian(p)(t)
        assert np.linalg.norm(H @ b[0] + E * b[0]) < 1e-10
        assert np.linalg.norm(H @ b[1] - E * b[1]) < 1e-10
        assert abs(np.vdot(b[0], b[1])) < 1e-14


def test_diabatic_basis_limits():
    p = LZParams(1.0, 2.0)
    b = diabatic_basis(p, 0.0)
    assert np.allclose(b[0], np.array([1, -1]) / math.sqrt(2))
    far = diabatic_basis(p, -1e3 / p.eps)
    assert abs(abs(far[0][0]) - 1) < 1e-6
    late = diabatic_basis(p, 1e3 / p.eps)
    assert abs(abs(late[1][0]) - 1) < 1e-6


def test_diabatic_formula_literal():
    # literal closed form where it has no cancellation
    p = LZParams(1.2, 2.5)
    t = -0.7
    E = math.hypot(p.delta, p.eps * t)
    a = E - p.eps * t
    n = math.sqrt(2 * E * a)
    b = diabatic_basis(p, t)
    assert np.allclose(b[0], np.array([a, -p.delta]) / n)
    assert np.allclose(b[1], np.array([p.delta, a]) / n)


def test_coupling_finite_difference():
    p = LZParams(1.0, 3.0)
    for t in (-1.0, -0.1, 0.0, 0.4, 2.0):
        tc = (p.delta ** 2 + (p.eps * t) ** 2) / (p.eps * p.delta)
        b0, dV = basis_derivative(lambda s: diabatic_basis(p, s), t, 1e-5 * tc)
        g = abs(np.vdot(dV[:, 1], b0[0])) ** 2
        assert abs(g - basis_coupling_sq(p, t)) / basis_coupling_sq(p, t) < 1e-6


def test_lz_formula_limits():
    assert lz_formula(LZParams(1e-6, 1.0)) > 0.999999
    assert lz_formula(LZParams(1.0, 1e-3)) < 1e-100
    assert lz_formula(LZParams(1.0, 2.0)) == pytest.approx(math.exp(-math.pi / 2))


# -- schedules ----------------------------------------------------------------------------

def test_uniform_schedule():
    p = LZParams(1.0, 4.0)
    s = make_schedule(p, "uniform", 1)
    assert s.times == (-0.5, 0.0, 0.5)
    s = make_schedule(p, "uniform", 5)
    assert len(s) == 11
    assert np.allclose(s.spacings(), 4 * p.delta / (2 * 5 * p.eps))


def test_adapted_schedule():
    p = LZParams(1.0, 3.0)
    s = make_schedule(p, "adapted", 2)
    w = p.window
    assert np.allclose(s.times, [-w, -w / 3, 0.0, w / 3, w])
    # the printed formula for m >= N + 1 gives the nonnegative half
    N = 2
    printed = [2 * p.delta * (m - N - 1) * (m - N) / (p.eps * N * (N + 1)) for m in range(N + 1, 2 * N + 2)]
    assert np.allclose(s.times[N:], printed)
    for N in (4, 16):
        u, a = make_schedule(p, "uniform", N), make_schedule(p, "adapted", N)
        assert np.all(np.diff(a.times) > 0)
        assert min(np.abs(a.times)) == 0.0 and max(np.abs(a.times)) == pytest.approx(w)
        assert a.times[N + 1] - a.times[N] < u.times[N + 1] - u.times[N]


def test_schedule_errors():
    p = LZParams(1.0, 1.0)
    with pytest.raises(ValidationError):
        make_schedule(p, "uniform", 0)
    with pytest.raises(ValidationError):
        make_schedule(p, "random", 3)
    assert len(make_schedule(p, "none")) == 0


# -- effective equation ------------------------------------------------------------------

def test_rate_integral_matches_quadrature():
    p = LZParams(0.7, 4.0)
    s = 0.05
    for a, b in ((-0.3, 0.2), (0.1, 2.0), (-math.inf, -0.4), (0.3, math.inf)):
        ref = quad(lambda t: lz_rate(p, t, s), a, b, epsabs=1e-14, epsrel=1e-12)[0]
        assert lz_rate_integral(p, a, b, s) == pytest.approx(ref, rel=1e-9)


def test_uniform_closed_form_is_whole_line_integral():
    # constant spacing 2 delta / (eps N) integrated over the real line
    p = LZParams(0.9, 7.0)
    for N in (3, 10):
        s = 2 * p.delta / (p.eps * N)
        I = lz_rate_integral(p, -math.inf, math.inf, s)
        assert 0.5 * (1 - math.exp(-2 * I)) == pytest.approx(lz_closed_form(p, "uniform", N), rel=1e-12)


def test_adapted_closed_form_is_continuous_spacing_integral():
    p = LZParams(0.7, 5.0)
    N = 8
    s = lambda t: 2 * p.delta ** 2 * abs(t) / ((N + 1) * (p.delta ** 2 + (p.eps * t) ** 2))
    I = 2 * quad(lambda t: lz_rate(p, t, s(t)), 0, math.inf, limit=200)[0]
    assert 0.5 * (1 - math.exp(-2 * I)) == pytest.approx(lz_closed_form(p, "adapted", N), rel=1e-9)


def test_closed_form_asymptotics():
    p = LZParams(1.0, 20.0)
    N = 400
    assert N * lz_closed_form(p, "uniform", N) == pytest.approx(math.pi / 4, rel=0.01)
    assert N * lz_closed_form(p, "adapted", N) == pytest.approx(0.25, rel=0.01)
    assert lz_closed_form(p, "adapted", 8) < lz_closed_form(p, "uniform", 8)
    assert lz_closed_form(p, "uniform", 10 ** 6) < 1e-5
    with pytest.raises(ValidationError):
        lz_closed_form(p, "none", 3)
    with pytest.raises(ValidationError):
        lz_closed_form(p, "uniform", 0)


def test_effective_extend_reproduces_uniform_closed_form():
    p = LZParams(1.0, 20.0)
    for N in (8, 16):
        eff = lz_effective_ode(p, make_schedule(p, "uniform", N), tol=1e-12, tails="extend")
        assert eff.terminal == pytest.approx(lz_closed_form(p, "uniform", N), rel=1e-6)


def test_effective_monotone_and_bounded():
    p = LZParams(1.0, 10.0)
    eff = lz_effective_ode(p, make_schedule(p, "adapted", 6), samples_per_interval=3)
    r = eff.rho11
    assert r[0] == 0 and np.all(np.diff(r) >= -1e-12) and r.max() <= 0.5
    assert len(eff.times) == len(r)


def test_effective_close_to_closed_form_for_large_N():
    for eps in (10.0, 20.0):
        p = LZParams(1.0, eps)
        for N in (16, 32):
            eff = lz_effective_ode(p, make_schedule(p, "uniform", N))
            c = lz_closed_form(p, "uniform", N)
            assert abs(eff.terminal - c) / c < 0.05


def test_effective_validity_warning():
    p = LZParams(1.0, 0.5)
    with pytest.warns(ValidityWarning):
        lz_effective_ode(p, make_schedule(p, "uniform", 1))
    assert validity_ratio(p, 0.0, 1.0) == pytest.approx(0.5)


def test_effective_without_measurements_falls_back():
    p = LZParams(1.0, 5.0)
    eff = lz_effective_ode(p, make_schedule(p, "none"))
    assert eff.fallback
    assert eff.terminal == pytest.approx(lz_formula(p), abs=1e-3)


# -- exact runs ----------------------------------------------------------------------------

def test_exact_unmeasured_lz_formula():
    p = LZParams(1.0, 5.0)
    ex = lz_exact(p, make_schedule(p, "none"))
    assert abs(ex.terminal_rho11 - lz_formula(p)) < 1e-3
    assert ex.T >= default_window(p)
    assert len(ex.window_history) >= 2


def test_exact_measured_keeps_probabilities():
    p = LZParams(1.0, 20.0)
    ex = lz_exact(p, make_schedule(p, "uniform", 4))
    pops = ex.trajectory.populations()
    assert np.all(pops > -1e-8) and np.all(pops < 1 + 1e-8)
    assert np.max(np.abs(pops.sum(axis=1) - 1)) < 1e-9
    assert ex.trajectory.select("measure").offdiag_norms().max() < 1e-14


def test_measurements_suppress_transition():
    p = LZParams(1.0, 20.0)
    free = lz_formula(p)
    rep = lz_experiment(p, "uniform", 8)
    assert rep["exact"] < 0.2 * free
    assert set(rep["deviations"]) == {"exact-effective", "exact-closed_form", "effective-closed_form"}
    assert rep["N_times_rho11"]["closed_form"] == pytest.approx(8 * rep["closed_form"])


def test_experiment_without_measurements():
    p = LZParams(1.0, 5.0)
    rep = lz_experiment(p, "none", 0)
    assert rep["effective"] is None and rep["closed_form"] is None
    assert rep["exact"] == pytest.approx(lz_formula(p), abs=1e-3)

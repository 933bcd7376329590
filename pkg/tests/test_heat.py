import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from photothermal import heat as ht
from photothermal.dispersion import Contrast, MediumParams
from photothermal.domain import Particle, ReferenceDomain
from photothermal.errors import ConfigError, QuadratureError
from photothermal.maxwell import IncidentWave, ScatteringProblem, discretization, solve

Z = np.zeros(3)


# kernel

def test_kernel_vanishes_before_source_time():
    assert ht.heat_kernel((1.0, 0, 0), 1.0, Z, 1.0, 1.0) == 0.0
    assert ht.heat_kernel((1.0, 0, 0), 1.0, Z, 2.0, 1.0) == 0.0


def test_kernel_at_source_point():
    a, dt = 2.0, 0.3
    assert ht.heat_kernel(Z, dt, Z, 0.0, a) == pytest.approx((a / (4 * math.pi * dt)) ** 1.5)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 3.0])
def test_kernel_mass(alpha):
    # the kernel carries unit mass at every positive time
    dt = 0.7
    f = lambda r: 4 * math.pi * r * r * ht.heat_kernel((r, 0, 0), dt, Z, 0.0, alpha)
    val, _ = integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-12)
    assert val == pytest.approx(1.0, rel=1e-10)


def test_kernel_solves_heat_equation():
    a, x, t, e = 2.0, np.array([0.5, 0.2, -0.1]), 0.5, 1e-3
    phi = lambda x, t: ht.heat_kernel(x, t, Z, 0.0, a)
    dt = (phi(x, t + e) - phi(x, t - e)) / (2 * e)
    lap = sum((phi(x + e * u, t) - 2 * phi(x, t) + phi(x - e * u, t)) / e ** 2 for u in np.eye(3))
    assert abs(a * dt - lap) < 1e-5 * abs(lap)


def test_kernel_broadcasts():
    x = np.random.default_rng(0).normal(size=(5, 3))
    out = ht.heat_kernel(x, np.array([1.0, 0.0, 2.0, 1.0, 3.0]), Z, 0.5, 1.0)
    assert out.shape == (5,)
    assert out[1] == 0.0


# J integral

def test_J_limit_value():
    assert ht.J_limit((0.5, 0, 0), Z, 2.0) == pytest.approx(2.0 / (4 * math.pi * 0.5))


def test_J_large_time_approaches_limit():
    xi, am = (0.3, 0.4, 0.0), 1.3
    vals = [ht.time_integral_J(xi, Z, t, am) for t in (1.0, 1e2, 1e4, 1e8)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(ht.J_limit(xi, Z, am), rel=1e-4)


def test_J_grid_against_quadrature():
    worst = 0.0
    for am in (0.5, 1.0, 2.0):
        for r in (0.1, 0.5, 2.0):
            for t in (0.1, 1.0, 10.0):
                a = ht.time_integral_J((r, 0, 0), Z, t, am)
                b = ht.time_integral_J_quadrature((r, 0, 0), Z, t, am)
                worst = max(worst, abs(a - b) / b)
    assert worst <= 1e-8


@given(st.floats(0.05, 3.0), st.floats(0.05, 3.0), st.floats(0.05, 20.0))
def test_J_series_matches_closed_form(am, r, t):
    b = am * r * r / (4 * t)
    if b > 4.0:
        # the alternating series loses all digits once erf is close to one
        return
    a = ht.time_integral_J((r, 0, 0), Z, t, am)
    s = ht.time_integral_J_series((r, 0, 0), Z, t, am)
    assert abs(a - s) <= 1e-9 * ht.J_limit((r, 0, 0), Z, am)


def test_erf_series():
    for x in (0.0, 0.1, 0.7, 1.5):
        assert ht.erf_series(x) == pytest.approx(math.erf(x), abs=1e-14)


def test_J_rejects_coincident_points():
    with pytest.raises(ValueError):
        ht.time_integral_J(Z, Z, 1.0, 1.0)


def test_heat_coefficients_validation():
    with pytest.raises(ConfigError):
        ht.HeatCoefficients(gamma_m=5.0)
    with pytest.raises(ConfigError):
        ht.HeatCoefficients(rho_p=-1.0)
    c = ht.HeatCoefficients()
    assert c.alpha_p(0.1) == pytest.approx(0.01)


def test_heat_query_validation():
    with pytest.raises(ConfigError):
        ht.HeatQuery((1, 0, 0), t=1.0, p=1.0)
    with pytest.raises(ConfigError):
        ht.HeatQuery((1, 0, 0), t=0.0)
    with pytest.raises(ConfigError):
        ht.HeatQuery((1, 0), t=1.0)


# sources

@pytest.fixture(scope="module")
def solved(ball8):
    wave = IncidentWave.from_medium(0.5, MediumParams())
    prob = ScatteringProblem(Particle(0.05, domain=ball8.domain), wave, Contrast(2.0 + 0.5j))
    return solve(prob, disc=ball8)


def test_source_without_loss_is_zero(solved):
    src = ht.heat_source(solved, 0.5, 0.0, 1.0, 10.0)
    assert src.total() == 0.0
    assert ht.heat_potential_oracle(src, (1, 0, 0), 1.0, 1.0, 1.0, 0.5) == 0.0


@pytest.mark.parametrize("model", ["faces", "voxels"])
def test_source_total(solved, model):
    om, im, gp = 0.5, 0.3, 2.0
    src = ht.heat_source(solved, om, im, gp, 10.0, model=model)
    expect = om / (2 * math.pi * gp) * im * solved.energy_integral_Omega
    assert src.total() == pytest.approx(expect, rel=1e-12)


def test_source_switches_off_after_T0(solved):
    src = ht.heat_source(solved, 0.5, 0.3, 1.0, 2.0)
    assert np.all(src.at(1.0) > 0)
    assert not np.any(src.at(2.5))


def test_unknown_source_model(solved):
    with pytest.raises(ValueError):
        ht.heat_source(solved, 0.5, 0.3, 1.0, 2.0, model="nodes")


# dominant term

def test_dominant_heat_inverse_distance_at_large_time():
    c = ht.HeatCoefficients()
    a = ht.dominant_heat("plasmonic", 1e-3, (0.5, 0, 0), Z, 1e9, c, 1.0, 1.0, 0.2)
    b = ht.dominant_heat("plasmonic", 1e-3, (1.0, 0, 0), Z, 1e9, c, 1.0, 1.0, 0.2)
    assert a / b == pytest.approx(2.0, rel=1e-4)


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_dominant_heat_rotation_invariant(x, y, zc):
    v = np.array([x, y, zc])
    if np.linalg.norm(v) < 1e-3:
        return
    v = 0.7 * v / np.linalg.norm(v)
    c = ht.HeatCoefficients()
    ref = ht.dominant_heat("dielectric", 1.0, (0.7, 0, 0), Z, 3.0, c, 1.0, 1.0, 0.2)
    assert ht.dominant_heat("dielectric", 1.0, v, Z, 3.0, c, 1.0, 1.0, 0.2) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("regime,power", [("plasmonic", 3), ("dielectric", 5)])
def test_closed_form_is_large_time_limit(regime, power):
    # with alpha_m = 1 and a unit detuning the dominant energy is delta**(power - 2h) |coupling|**2
    c = ht.HeatCoefficients(rho_m=1.0, c_m=0.5, gamma_m=0.5)
    assert c.alpha_m == 1.0
    d, h, cs, om, mu, im = 0.05, 1.0, 0.2, 1.3, 1.0, 0.4
    energy = d ** (power - 2 * h) * cs * (om ** 2 * mu ** 2 if regime == "dielectric" else 1.0)
    full = ht.dominant_heat(regime, energy, (0.5, 0, 0), Z, 1e12, c, om, mu, im)
    closed = ht.dominant_heat_closed(regime, d, h, cs, (0.5, 0, 0), Z, c, om, mu, im)
    assert full == pytest.approx(closed, rel=1e-5)


def test_oracle_of_point_source_is_dominant():
    c = ht.HeatCoefficients()
    d = 0.1
    gp = c.gamma_p(d)
    src = ht.point_source(Z, 2e-3, 1.0, 0.3, gp, 1e6)
    xi = (0.5, 0.0, 0.0)
    oracle = ht.heat_potential_oracle(src, xi, 10.0, c.alpha_m, gp, c.gamma_m)
    dom = ht.dominant_heat("plasmonic", 2e-3, xi, Z, 10.0, c, 1.0, 1.0, 0.3)
    assert oracle == pytest.approx(dom, rel=1e-8)


def test_oracle_monotone_while_heating():
    c = ht.HeatCoefficients()
    src = ht.point_source(Z, 1.0, 1.0, 0.3, c.gamma_p(0.1), 100.0)
    vals = [ht.heat_potential_oracle(src, (0.5, 0, 0), t, c.alpha_m, c.gamma_p(0.1), c.gamma_m)
            for t in (0.1, 0.5, 2.0, 10.0, 50.0)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_oracle_decays_after_switch_off():
    c = ht.HeatCoefficients()
    src = ht.point_source(Z, 1.0, 1.0, 0.3, 1.0, 1.0)
    vals = [ht.heat_potential_oracle(src, (0.5, 0, 0), t, c.alpha_m, 1.0, c.gamma_m) for t in (5.0, 20.0, 80.0)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_oracle_rejects_point_on_source():
    src = ht.point_source(Z, 1.0, 1.0, 0.3, 1.0, 1.0)
    with pytest.raises(ValueError):
        ht.heat_potential_oracle(src, Z, 1.0, 1.0, 1.0, 0.5)


def test_oracle_quadrature_error(monkeypatch):
    src = ht.point_source(Z, 1.0, 1.0, 0.3, 1.0, 10.0)
    monkeypatch.setattr(ht.integrate, "quad", lambda *a, **k: (1.0, 1.0))
    with pytest.raises(QuadratureError):
        ht.heat_potential_oracle(src, (0.5, 0, 0), 1.0, 1.0, 1.0, 0.5)


def test_single_voxel_oracle_matches_prefactor():
    dom = ReferenceDomain.from_mask(np.ones((1, 1, 1), dtype=bool), 1.0)
    disc = discretization(dom)
    wave = IncidentWave.from_medium(0.5, MediumParams())
    prob = ScatteringProblem(Particle(0.01, domain=dom), wave, Contrast(0.0))
    sol = solve(prob, disc=disc, preconditioner="none")
    c = ht.HeatCoefficients()
    gp = c.gamma_p(0.01)
    src = ht.heat_source(sol, 0.5, 0.2, gp, 1e6, model="voxels")
    xi = (0.5, 0.0, 0.0)
    oracle = ht.heat_potential_oracle(src, xi, 10.0, c.alpha_m, gp, c.gamma_m)
    expect = ht.heat_prefactor(0.5, 0.2, c.gamma_m, c.alpha_m) * ht.time_integral_J(xi, Z, 10.0, c.alpha_m) \
        * sol.energy_integral_Omega
    assert oracle == pytest.approx(expect, rel=1e-9)


# remainder constants and appendix function

def test_K_r():
    assert ht.K_r(10.0, 0.25) == pytest.approx(10 ** 0.5 / 0.5)
    with pytest.raises(ValueError):
        ht.K_r(1.0, 0.5)


def test_appendix_limit_at_coincident_points():
    xi = np.array([1.0, 0, 0])
    base = ht.heat_kernel(xi, 2.0, Z, 1.0, 1.0)
    assert ht.varphi_appendix(Z, Z, 2.0, 1.0, 1.0, xi, Z, 1.0) == base
    near = ht.varphi_appendix(Z, np.array([1e-4, 0, 0]), 2.0, 1.0, 1.0, xi, Z, 1.0)
    assert near == pytest.approx(base, rel=1e-6)


def test_appendix_deviation_consistent():
    xi = np.array([1.0, 0, 0])
    y = np.array([0.05, 0, 0])
    full = ht.varphi_appendix(Z, y, 2.0, 1.0, 1.0, xi, Z, 1.0)
    dev = ht.varphi_deviation(Z, y, 2.0, 1.0, 1.0, xi, Z, 1.0)
    assert full - ht.heat_kernel(xi, 2.0, Z, 1.0, 1.0) == pytest.approx(dev, rel=1e-6)


def test_appendix_slope_at_least_one():
    from photothermal.asymptotics import fit_slope

    xi = np.array([1.0, 0, 0])
    ds = np.logspace(-3, -1, 9)
    dev = [abs(ht.varphi_deviation(Z, np.array([d, 0, 0]), 2.0, 1.0, 1.0, xi, Z, 1.0)) for d in ds]
    assert fit_slope(list(zip(ds, dev))).slope >= 1.0


def test_appendix_needs_ordered_times():
    with pytest.raises(ValueError):
        ht.varphi_appendix(Z, Z, 1.0, 1.0, 1.0, np.ones(3), Z, 1.0)

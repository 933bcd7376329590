import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from photothermal.dispersion import Contrast, MediumParams
from photothermal.domain import Particle
from photothermal.errors import ResonanceError
from photothermal.maxwell import (
    IncidentWave, KDELTA_MAX, ModeCluster, ScatteringProblem, StaticInverse, dominant_energy_dielectric,
    dominant_energy_plasmonic, export_field_csv, incident_H, incident_field, norm_diagnostics, solve,
)
from photothermal.operators import DIV_FREE, GRAD_HARMONIC


def problem(disc, s, delta=0.01, omega=0.1, center=(0.0, 0.0, 0.0), **kw):
    wave = IncidentWave.from_medium(omega, MediumParams(), **kw)
    return ScatteringProblem(Particle(delta, center, domain=disc.domain), wave, Contrast(s))


def inner_mean(disc, field, axis=0, radius=0.5):
    g = disc.grid
    m = (np.linalg.norm(g.pos, axis=1) < radius) & (g.axis == axis)
    return np.mean(field[m])


# incident wave

def test_incident_field_unit_and_transverse():
    w = IncidentWave.from_medium(2.0, MediumParams(eps_m=4.0))
    assert w.k == pytest.approx(4.0)
    pts = np.random.default_rng(1).normal(size=(20, 3))
    E = incident_field(w, pts)
    H = incident_H(w, pts)
    np.testing.assert_allclose(np.linalg.norm(E, axis=1), 1.0)
    np.testing.assert_allclose(E @ np.asarray(w.direction), 0.0, atol=1e-14)
    np.testing.assert_allclose(np.sum(E * H, axis=1), 0.0, atol=1e-14)


def test_incident_wave_validation():
    with pytest.raises(ValueError, match="orthogonal"):
        IncidentWave((1.0, 0.0, 0.0), (1.0, 0.0, 0.0), 1.0, 1.0)
    with pytest.raises(ValueError, match="unit"):
        IncidentWave((2.0, 0.0, 0.0), (0.0, 0.0, 1.0), 1.0, 1.0)
    with pytest.raises(ValueError):
        IncidentWave((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), 0.0, 0.0)


def test_kdelta_guard(ball8):
    with pytest.raises(ValueError, match="quasi-static"):
        problem(ball8, 1.0, delta=0.9, omega=2 * KDELTA_MAX / 0.9)


# solver

def test_zero_contrast_returns_incident(ball8):
    sol = solve(problem(ball8, 0.0), disc=ball8)
    np.testing.assert_array_equal(sol.field, sol.incident)
    # only faces normal to the polarization carry the unit amplitude
    nx = int(np.sum(ball8.grid.axis == 0))
    assert sol.energy_integral_Omega == pytest.approx(0.01 ** 3 * ball8.grid.weight * nx)


def test_linear_in_incident_amplitude(ball8):
    p = problem(ball8, 2.0 + 0.3j)
    sol = solve(p, disc=ball8)
    # the field at a shifted centre differs from the incident one by a global phase only
    q = problem(ball8, 2.0 + 0.3j, center=(0.0, 0.0, 1.7))
    sol2 = solve(q, disc=ball8)
    ph = np.exp(1j * q.wave.k * 1.7)
    np.testing.assert_allclose(sol2.field, ph * sol.field, rtol=1e-7, atol=1e-9)


@pytest.mark.parametrize("s", [1.0, 3.0, -0.5 + 0.1j])
def test_ball_interior_matches_uniform_field_ratio(ball8, s):
    sol = solve(problem(ball8, s), disc=ball8)
    assert sol.residual < 1e-8
    target = 3.0 / (3.0 + s)
    assert abs(inner_mean(ball8, sol.field) - target) / abs(target) < 0.1


@given(st.floats(0.05, 4.0), st.floats(0.0, 1.0))
def test_bounded_off_resonance(ball8, re, im):
    sol = solve(problem(ball8, complex(re, im)), disc=ball8)
    assert np.linalg.norm(sol.field) <= 3 * np.linalg.norm(sol.incident)


def test_reciprocity_complex_symmetric(ball8, rng):
    # <A u, v> with the bilinear pairing equals <u, A v> for A = I + sM - cN
    s = 1.5 + 0.2j
    p = problem(ball8, s, omega=3.0, delta=0.05)
    M = ball8.magnetization(p.kdelta)
    N = ball8.newtonian(p.kdelta)
    c = p.newton_coefficient

    def A(x):
        return x + s * M.matvec(x) - c * N.matvec(x)

    nf = ball8.grid.nf
    u = rng.normal(size=nf) + 1j * rng.normal(size=nf)
    v = rng.normal(size=nf) + 1j * rng.normal(size=nf)
    lhs, rhs = A(u) @ v, u @ A(v)
    assert abs(lhs - rhs) < 1e-10 * abs(lhs)


def test_static_inverse_exact(ball8, rng):
    s = -2.0 + 0.5j
    Cinv = StaticInverse(ball8, s)
    M = ball8.magnetization(0.0)
    f = rng.normal(size=ball8.grid.nf) + 0j
    x = Cinv(f)
    r = x + s * M.matvec(x) - f
    assert np.linalg.norm(r) < 1e-9 * np.linalg.norm(f)


def test_exact_gradient_resonance_raises(ball8):
    with pytest.raises(ResonanceError):
        solve(problem(ball8, -1.0), disc=ball8, preconditioner="gradient")


def test_unknown_preconditioner(ball8):
    with pytest.raises(ValueError):
        solve(problem(ball8, 1.0), disc=ball8, preconditioner="bogus")


@pytest.mark.parametrize("pc", ["static", "gradient", "none"])
def test_preconditioners_agree(ball8, pc):
    p = problem(ball8, 0.8 + 0.1j)
    ref = solve(p, disc=ball8, preconditioner="static", tol=1e-11)
    sol = solve(p, disc=ball8, preconditioner=pc, tol=1e-10)
    np.testing.assert_allclose(sol.field, ref.field, atol=1e-8)


# diagnostics

def test_norms_of_constant_field(ball8):
    sol = solve(problem(ball8, 0.0, delta=1.0, omega=1e-9), disc=ball8)
    d = norm_diagnostics(sol)
    nx = int(np.sum(ball8.grid.axis == 0))
    assert d["L2_Omega"] == pytest.approx(np.sqrt(ball8.grid.weight * nx))
    # voxel averages of a unit field are unit vectors
    assert d["L4_Omega"] == pytest.approx(ball8.domain.total_volume ** 0.25, rel=1e-9)
    assert d["L2_sq_of_square"] == pytest.approx(d["L4_Omega"] ** 2)


def test_norm_delta_scaling(ball8):
    a = norm_diagnostics(solve(problem(ball8, 1.0, delta=0.02), disc=ball8))
    b = norm_diagnostics(solve(problem(ball8, 1.0, delta=0.01), disc=ball8))
    assert a["L2_Omega"] / b["L2_Omega"] == pytest.approx(2 ** 1.5, rel=1e-4)
    assert a["L4_Omega"] / b["L4_Omega"] == pytest.approx(2 ** 0.75, rel=1e-4)


def _cluster(sub, lam, ints):
    ints = np.atleast_2d(np.asarray(ints, dtype=float))
    F = np.zeros((len(ints), 1))
    if sub == GRAD_HARMONIC:
        return ModeCluster(sub, np.full(len(ints), lam), F, ints)
    return ModeCluster(sub, np.full(len(ints), lam), F, np.zeros_like(ints), ints)


def test_dominant_plasmonic_formula(ball8):
    p = problem(ball8, -2.0 + 0.1j, delta=0.1)
    c = _cluster(GRAD_HARMONIC, 0.4, [[0.5, 0.0, 0.0], [0.0, 0.2, 0.0]])
    expect = 0.1 ** 3 * 0.25 / abs(1 + p.s * 0.4) ** 2
    assert dominant_energy_plasmonic(p, c) == pytest.approx(expect)


def test_dominant_dielectric_formula(ball8):
    p = problem(ball8, 40.0 + 1j, delta=0.1, omega=1.0)
    c = _cluster(DIV_FREE, 0.1, [[0.0, 0.3, 0.0]])
    # H0 = theta x E0 = (0, 1, 0)
    expect = 0.1 ** 5 * 0.09 / abs(1 - p.s * 0.01 * 0.1) ** 2
    assert dominant_energy_dielectric(p, c) == pytest.approx(expect)


def test_vanishing_coupling_warns(ball8):
    p = problem(ball8, -2.0 + 0.1j)
    with pytest.warns(RuntimeWarning, match="vanishing coupling"):
        dominant_energy_plasmonic(p, _cluster(GRAD_HARMONIC, 0.4, [[0.0, 0.0, 1.0]]))
    with pytest.warns(RuntimeWarning, match="vanishing coupling"):
        dominant_energy_dielectric(p, _cluster(DIV_FREE, 0.1, [[1.0, 0.0, 0.0]]))


def test_dielectric_dominant_needs_potentials(ball8):
    p = problem(ball8, 40.0)
    c = ModeCluster(DIV_FREE, np.array([0.1]), np.zeros((1, 1)), np.zeros((1, 3)))
    with pytest.raises(ValueError, match="potentials"):
        dominant_energy_dielectric(p, c)


def test_curl_potential_residual(ball8):
    from photothermal.operators import eigensystem_static

    es = eigensystem_static(ball8.newtonian(0.0), ball8.projectors, DIV_FREE, count=3)
    for pair in es:
        phi, integral, res = ball8.curl_potential(pair.field)
        assert res <= 1e-3
        assert integral.shape == (3,)


def test_export_csv(ball8, tmp_path):
    sol = solve(problem(ball8, 1.0), disc=ball8)
    path = export_field_csv(sol, tmp_path / "f.csv")
    with open(path, newline="") as fh:
        header, *rows = list(csv.reader(fh))
    assert header[:4] == ["index", "x", "y", "z"]
    assert len(rows) == ball8.domain.voxel_count

"""
Command-line entry point.

    photothermal {resonance,eig,solve,heat,sweep,validate} [--config PATH] [flags]

Exit codes: 0 success, 1 computation failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import asymptotics as asy
from . import heat as ht
from .config import RunConfig, apply_overrides, load_config
from .dispersion import Contrast, RegimeConfig, RegimeKind, q_factor, select
from .domain import Particle, ReferenceDomain, cached_voxelize
from .errors import ConfigError, PhotothermalError
from .io import load_eigen_cache, save_eigen_cache, write_csv, write_report
from .maxwell import (IncidentWave, ScatteringProblem, discretization, dominant_energy_dielectric,
                      dominant_energy_plasmonic, export_field_csv, mode_clusters, norm_diagnostics,
                      select_mode, solve)
from .operators import (CURL_FREE, DIV_FREE, GRAD_HARMONIC, MAGNETIZATION, NEWTONIAN, EigenPair,
                        EigenSystem, eigensystem_static, restricted_norm, set_workers)

EIG_CACHE_VERSION = 1
# (operator, subspace, count); the subspace-3 magnetization block feeds the
# plasmonic regime and the subspace-1 Newtonian block the dielectric one
EIG_BLOCKS = ((MAGNETIZATION, GRAD_HARMONIC, 60), (MAGNETIZATION, DIV_FREE, 10),
              (MAGNETIZATION, CURL_FREE, 10), (NEWTONIAN, DIV_FREE, 12))


# ---------------------------------------------------------------- building blocks

def build_domain(cfg: RunConfig):
    if cfg.shape_text == "voxel":
        return ReferenceDomain.from_mask(np.ones((1, 1, 1), dtype=bool), 1.0)
    return cached_voxelize(cfg.shape, cfg.resolution, cfg.cache)


def _eig_path(cfg, domain) -> Path:
    return Path(cfg.cache) / f"eig-{domain.key()}.bin"


def _compute_blocks(disc) -> dict:
    out = {}
    for kind, sub, count in EIG_BLOCKS:
        op = disc.magnetization(0.0) if kind == MAGNETIZATION else disc.newtonian(0.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            out[(kind, sub)] = eigensystem_static(op, disc.projectors, sub, count=count)
    return out


def eigen_blocks(cfg: RunConfig, domain, disc) -> tuple:
    """Load the eigen cache, or compute and write it. Returns (blocks, hit)."""
    path = _eig_path(cfg, domain)
    meta = {"domain": domain.key(), "version": EIG_CACHE_VERSION, "nf": disc.grid.nf}
    if path.exists():
        try:
            lam, sub, fields, m = load_eigen_cache(path, meta)
            blocks = {}
            for b in m["blocks"]:
                sl = slice(b["start"], b["start"] + b["count"])
                pairs = [EigenPair(float(l), f.real.copy(), int(s), float(r))
                         for l, s, f, r in zip(lam[sl], sub[sl], fields[sl], b["residuals"])]
                blocks[(b["operator"], b["subspace"])] = EigenSystem(disc.grid, b["operator"], b["subspace"],
                                                                     pairs, method=b["method"])
            return blocks, True
        except (ValueError, KeyError) as exc:
            warnings.warn(f"eigen cache {path} unusable ({exc}); rebuilding", RuntimeWarning)
            print(f"warning: eigen cache {path} unusable ({exc}); rebuilding", file=sys.stderr)
    blocks = _compute_blocks(disc)
    lam, sub, fields, desc = [], [], [], []
    for (kind, s), es in blocks.items():
        desc.append({"operator": kind, "subspace": s, "start": len(lam), "count": len(es),
                     "method": es.method, "residuals": [p.residual for p in es]})
        lam += [p.lam for p in es]
        sub += [s] * len(es)
        fields += [p.field for p in es]
    save_eigen_cache(path, np.array(lam), np.array(sub), np.array(fields, dtype=complex),
                     dict(meta, blocks=desc))
    return blocks, False


def regime_block(cfg, blocks):
    if cfg.kind is RegimeKind.PLASMONIC:
        return blocks[(MAGNETIZATION, GRAD_HARMONIC)]
    return blocks[(NEWTONIAN, DIV_FREE)]


class Context:
    """Lazily built domain, discretization, eigen blocks and mode cluster."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.domain = build_domain(cfg)
        self.voxel = cfg.shape_text == "voxel"
        self._disc = None
        self._blocks = None
        self.cache_hit = None
        self._cluster = None

    @property
    def disc(self):
        if self._disc is None:
            self._disc = discretization(self.domain)
        return self._disc

    @property
    def blocks(self):
        if self._blocks is None:
            if self.voxel:
                raise ConfigError("the single-voxel domain has no eigen-system; give [regime] target_eigenvalue")
            self._blocks, self.cache_hit = eigen_blocks(self.cfg, self.domain, self.disc)
        return self._blocks

    def cluster(self):
        if self._cluster is None:
            es = regime_block(self.cfg, self.blocks)
            c = self.cfg
            if c.kind is RegimeKind.PLASMONIC:
                self._cluster = select_mode(mode_clusters(es), c.polarization)
            else:
                H0 = np.cross(np.asarray(c.direction) / np.linalg.norm(c.direction), c.polarization)
                self._cluster = select_mode(mode_clusters(es, self.disc), H0)
        return self._cluster

    def target(self) -> float:
        if self.cfg.target_eigenvalue is not None:
            return float(self.cfg.target_eigenvalue)
        return self.cluster().lam

    def pipeline(self) -> asy.Pipeline:
        c = self.cfg
        es = None if self.voxel else regime_block(c, self.blocks)
        pipe = asy.Pipeline(domain=self.domain, model=c.model, medium=c.medium, regime=c.regime,
                            E0=c.polarization, direction=c.direction, eigsys=es, tol=c.tol,
                            preconditioner=c.preconditioner, source_model=c.heat_source)
        return pipe


def _resonance(cfg, ctx):
    rc = RegimeConfig(cfg.kind, ctx.target(), cfg.h, cfg.delta, cfg.mode_index)
    return select(cfg.model, cfg.medium, rc)


def _resonance_record(cfg, res) -> dict:
    lam = res.target_eigenvalue
    rec = {
        "regime": cfg.regime, "delta": cfg.delta, "h": cfg.h, "target_eigenvalue": lam,
        "omega": res.omega, "zeta": res.zeta, "contrast": res.contrast.value, "eps_p": res.eps_p,
        "detuning": res.detuning, "detuning_ratio": res.detuning_ratio,
        "Q": q_factor(cfg.model.with_zeta(res.zeta), res.omega),
    }
    if cfg.kind is RegimeKind.PLASMONIC:
        rec["checks"] = {"re_contrast_negative": res.contrast.real < 0}
    else:
        target = 1.0 / (lam * cfg.medium.mu_m * cfg.model.omega_0 ** 2)
        ratio = res.contrast.real * cfg.delta ** 2 / target
        rec["checks"] = {"re_contrast_positive": res.contrast.real > 0,
                         "re_contrast_delta2": res.contrast.real * cfg.delta ** 2,
                         "re_contrast_delta2_target": target, "re_contrast_delta2_ratio": ratio}
    return rec


def _solve(cfg, ctx):
    """Solve at the configured delta; returns (problem, solution, resonance or None)."""
    c = cfg
    res = None
    if c.contrast is not None:
        omega = c.model.omega_0
        contrast = Contrast(c.contrast)
    else:
        res = _resonance(c, ctx)
        omega, contrast = res.omega, res.contrast
    wave = IncidentWave(c.polarization, c.direction, omega, c.medium.wavenumber(omega))
    prob = ScatteringProblem(Particle(c.delta, c.center, ctx.domain), wave, contrast, c.medium.mu_m)
    pre = "none" if ctx.voxel and c.preconditioner == "auto" else c.preconditioner
    sol = solve(prob, tol=c.tol, disc=ctx.disc, preconditioner=pre)
    return prob, sol, res


def _dominant(cfg, ctx, prob):
    if ctx.voxel or cfg.contrast is not None:
        return None
    cl = ctx.cluster()
    if cfg.kind is RegimeKind.PLASMONIC:
        return dominant_energy_plasmonic(prob, cl)
    return dominant_energy_dielectric(prob, cl)


def wave_amp(prob):
    return np.asarray(prob.wave.E0)


def _xi(cfg):
    u = np.asarray(cfg.xi_direction, dtype=float)
    return np.asarray(cfg.center) + cfg.xi_distance * cfg.delta ** cfg.p * u / np.linalg.norm(u)


# ---------------------------------------------------------------- subcommands

def cmd_resonance(cfg: RunConfig, ctx: Context) -> int:
    res = _resonance(cfg, ctx)
    rec = _resonance_record(cfg, res)
    path = write_report(Path(cfg.out) / "resonance.json", "resonance", rec)
    print(f"omega = {res.omega:.17g}\nzeta = {res.zeta:.17g}\ncontrast = {res.contrast.value:.17g}")
    print(f"detuning = {res.detuning:.17g} (ratio to delta^h {res.detuning_ratio:.6g})")
    print(f"Q = {rec['Q']:.17g}\nchecks = {rec['checks']}\nwrote {path}")
    ok = rec["checks"].get("re_contrast_negative", rec["checks"].get("re_contrast_positive"))
    return 0 if ok else 1


def cmd_eig(cfg: RunConfig, ctx: Context) -> int:
    t0 = time.perf_counter()
    blocks = ctx.blocks
    g = ctx.disc.grid
    rows, table = [], {}
    for (kind, sub), es in blocks.items():
        ints = [float(np.linalg.norm(g.mean_integral(p.field))) for p in es]
        order = list(range(len(es)))
        if (kind, sub) == (MAGNETIZATION, GRAD_HARMONIC):
            order.sort(key=lambda i: -ints[i])
        name = f"{kind}/{sub}"
        table[name] = [{"lambda": es[i].lam, "abs_integral": ints[i], "residual": es[i].residual}
                       for i in order[:10]]
        rows += [[kind, sub, es[i].lam, ints[i], es[i].residual] for i in range(len(es))]
    summary = {"domain": ctx.domain.key(), "resolution": ctx.domain.resolution, "nf": g.nf,
               "cache_hit": bool(ctx.cache_hit), "top_modes": table}
    summary["lambda_n0_magnetization"] = select_mode(mode_clusters(blocks[(MAGNETIZATION, GRAD_HARMONIC)]),
                                                     cfg.polarization).lam
    out = Path(cfg.out)
    write_report(out / "eig.json", "eig", summary)
    write_csv(out / "eig.csv", ["operator", "subspace", "lambda", "abs_integral", "residual"], rows)
    for name, modes in table.items():
        print(f"# {name}")
        for m in modes:
            print(f"  {m['lambda']: .17g}  {m['abs_integral']:.3e}")
    state = "cache hit" if ctx.cache_hit else "computed"
    print(f"lambda_n0 (magnetization, subspace 3) = {summary['lambda_n0_magnetization']:.17g}")
    print(f"{state} in {time.perf_counter() - t0:.2f} s")
    return 0


def cmd_solve(cfg: RunConfig, ctx: Context) -> int:
    prob, sol, res = _solve(cfg, ctx)
    nd = norm_diagnostics(sol)
    dom = _dominant(cfg, ctx, prob)
    g = sol.grid
    rec = {
        "delta": cfg.delta, "contrast": prob.contrast.value, "omega": prob.wave.omega,
        "residual": sol.residual, "iterations": sol.iterations,
        "energy_integral": sol.energy_integral_Omega,
        # |B| in the face quadrature: h**3 times the face count, per component
        "measure_energy": cfg.delta ** 3 * g.weight * float(np.dot(np.abs(wave_amp(prob)) ** 2, g.counts)),
        "voxel_volume_energy": cfg.delta ** 3 * ctx.domain.total_volume * float(np.sum(np.abs(wave_amp(prob)) ** 2)),
        "norms": nd, "dominant_energy": dom,
        "resonance": _resonance_record(cfg, res) if res is not None else None,
    }
    out = Path(cfg.out)
    write_report(out / "solve.json", "solve", rec)
    export_field_csv(sol, out / "field.csv")
    print(f"residual = {sol.residual:.3e} after {sol.iterations} iterations")
    print(f"int |E|^2 = {sol.energy_integral_Omega:.17g}")
    if dom is not None:
        print(f"dominant  = {dom:.17g}")
    return 0


def cmd_heat(cfg: RunConfig, ctx: Context) -> int:
    prob, sol, res = _solve(cfg, ctx)
    hc = cfg.heat
    xi = _xi(cfg)
    z = prob.particle.z
    omega = prob.wave.omega
    eps_p = prob.contrast.value + cfg.medium.eps_m
    im_eps = eps_p.imag
    gp = hc.gamma_p(cfg.delta)
    energy = sol.energy_integral_Omega
    dom = _dominant(cfg, ctx, prob)
    src = ht.heat_source(sol, omega, im_eps, gp, cfg.T0, cfg.heat_source)
    am = hc.alpha_m
    pref = ht.heat_prefactor(omega, im_eps, hc.gamma_m, am)
    ts = [cfg.t * 10.0 ** (-2 + 2 * i / 11) for i in range(12)]
    series = []
    for t in ts:
        J = ht.time_integral_J(xi, z, t, am)
        series.append([t, J, pref * J * energy, (pref * J * dom) if dom is not None else float("nan"),
                       ht.heat_potential_oracle(src, xi, t, am, gp, hc.gamma_m)])
    J = ht.time_integral_J(xi, z, cfg.t, am)
    oracle = ht.heat_potential_oracle(src, xi, cfg.t, am, gp, hc.gamma_m)
    rec = {
        "regime": cfg.regime, "delta": cfg.delta, "h": cfg.h, "p": cfg.p, "xi": xi, "t": cfg.t, "T0": cfg.T0, "omega": omega, "im_eps_p": im_eps, "gamma_p": gp,
        "alpha_m": am, "J": J, "J_limit": ht.J_limit(xi, z, am), "K_r": ht.K_r(cfg.T0, cfg.r),
        "energy_integral": energy, "dominant_energy": dom,
        "prefactor_J_energy": pref * J * energy,
        "dominant_heat": pref * J * dom if dom is not None else None,
        "oracle_heat": oracle, "solve_residual": sol.residual,
    }
    out = Path(cfg.out)
    write_report(out / "heat.json", "heat", rec)
    write_csv(out / "heat_series.csv", ["t", "J", "prefactor_J_energy", "dominant_heat", "oracle_heat"], series)
    print(f"J = {J:.17g}\nprefactor*J*energy = {pref * J * energy:.17g}\noracle = {oracle:.17g}")
    if dom is not None:
        print(f"dominant = {pref * J * dom:.17g}")
    return 0


def _sweep_spec(cfg, quantity=None, h=None, regime=None, with_heat=False) -> asy.SweepSpec:
    return asy.SweepSpec(list(cfg.deltas), cfg.h if h is None else h, regime or cfg.regime,
                         quantity or cfg.quantity, p=cfg.p, shape=cfg.shape, resolution=cfg.resolution,
                         model=cfg.model, medium=cfg.medium, heat=cfg.heat, E0=cfg.polarization,
                         direction=cfg.direction, xi_direction=cfg.xi_direction, xi_distance=cfg.xi_distance,
                         t=cfg.t, T0=cfg.T0, with_heat=with_heat, tolerance=cfg.tolerance)


def _write_sweep(out: Path, name: str, rep: asy.SweepReport):
    write_report(out / f"{name}.json", "sweep", rep.to_dict())
    keys, rows = rep.csv_rows()
    write_csv(out / f"{name}.csv", keys, rows)


def cmd_sweep(cfg: RunConfig, ctx: Context) -> int:
    spec = _sweep_spec(cfg)
    rep = asy.run_sweep(spec, ctx.pipeline())
    _write_sweep(Path(cfg.out), "sweep", rep)
    if rep.fit is not None:
        f = rep.fit
        print(f"{spec.quantity}: slope {f.slope:.4f} (predicted {f.predicted:.4f}) {f.status}")
    if rep.remainder is not None:
        r = rep.remainder
        print(f"remainder: slope {r.slope:.4f} (>= {r.predicted - r.tolerance:.4f}) {r.status}")
    for fail in rep.failures:
        print(f"failed at delta={fail['delta']}: {fail['error']}", file=sys.stderr)
    return 0 if rep.passed else 1


# validation: (regime, h, mandated fits with tolerances)
VALIDATION = (
    ("plasmonic", 1.0, {"EnergyIntegral": 0.15, "L2E": 0.15, "L2_sq_of_square": 0.2, "HeatDominant": 0.15}),
    ("dielectric", 0.5, {"EnergyIntegral": 0.2, "L2E_sq": 0.3, "L2_sq_of_square": 0.2, "HeatDominant": 0.2}),
)


def validation_checks(cfg: RunConfig) -> dict:
    """Spectral identities, J integral and appendix checks (no sweeps)."""
    ctx = Context(cfg)
    disc, proj = ctx.disc, ctx.disc.projectors
    M = disc.magnetization(0.0)
    blocks = ctx.blocks
    lam_n0 = select_mode(mode_clusters(blocks[(MAGNETIZATION, GRAD_HARMONIC)]), cfg.polarization).lam
    g = disc.grid
    mean_dev = max(float(np.linalg.norm(g.mean_integral(p.field)) / g.norm(p.field))
                   for key in ((NEWTONIAN, DIV_FREE), (MAGNETIZATION, DIV_FREE), (MAGNETIZATION, CURL_FREE))
                   for p in blocks[key])
    s1 = restricted_norm(M, proj, DIV_FREE)
    s2 = restricted_norm(M, proj, CURL_FREE, shift=1.0)
    # J closed form against quadrature on a 27-point grid
    jerr = 0.0
    for am in (0.5, 1.0, 2.0):
        for r in (0.1, 0.5, 2.0):
            for t in (0.1, 1.0, 10.0):
                xi = (r, 0.0, 0.0)
                a = ht.time_integral_J(xi, (0, 0, 0), t, am)
                b = ht.time_integral_J_quadrature(xi, (0, 0, 0), t, am)
                jerr = max(jerr, abs(a - b) / abs(b))
    jl = max(abs(ht.time_integral_J((r, 0, 0), (0, 0, 0), 1e6 * r * r, am) / ht.J_limit((r, 0, 0), (0, 0, 0), am) - 1)
             for am in (0.5, 1.0, 2.0) for r in (0.1, 0.5, 2.0))
    # appendix deviation slope over two decades
    dists = np.logspace(-3, -1, 9)
    dev = [abs(ht.varphi_deviation(np.zeros(3), np.array([d, 0, 0]), 2.0, 1.0, 1.0, np.array([1.0, 0, 0]),
                                   np.zeros(3), 1.0)) for d in dists]
    app = asy.fit_slope(list(zip(dists, dev)))
    checks = {
        "lambda_n0": {"value": lam_n0, "relative_to_third": abs(lam_n0 * 3 - 1), "pass": abs(lam_n0 * 3 - 1) <= 0.05},
        "subspace1_norm": {"value": s1, "pass": s1 <= 1e-4},
        "subspace2_identity": {"value": s2, "pass": s2 <= 1e-3},
        "mean_vanishing": {"value": mean_dev, "pass": mean_dev <= 1e-4},
        "J_quadrature": {"value": jerr, "pass": jerr <= 1e-8},
        "J_limit": {"value": jl, "pass": jl <= 1e-10},
        "appendix_slope": {"value": app.slope, "pass": app.slope >= 1.0},
    }
    return checks


def cmd_validate(cfg: RunConfig, ctx: Context) -> int:
    out = Path(cfg.out)
    body = {"resolution": cfg.resolution, "deltas": list(cfg.deltas), "checks": validation_checks(cfg)}
    ok = all(c["pass"] for c in body["checks"].values())
    sweeps = {}
    for regime, h, fits in VALIDATION:
        c = apply_overrides(cfg, regime=regime, h=h)
        cx = Context(c)
        rep = asy.run_sweep(_sweep_spec(c, "EnergyIntegral", with_heat=True), cx.pipeline())
        rep.fit = None
        asy.add_fits(rep, fits)
        disc = rep.series("HeatRelativeDiscrepancy")
        sweeps[regime] = dict(rep.to_dict(), heat_discrepancy_monotone=asy.monotone_decreasing(disc))
        _write_sweep(out, f"validate-{regime}", rep)
        ok = ok and rep.passed and sweeps[regime]["heat_discrepancy_monotone"]
        if rep.remainder is not None:
            ok = ok and rep.remainder.status in ("pass", "inconclusive")
    body["sweeps"] = sweeps
    body["pass"] = ok
    write_report(out / "validation.json", "validation", body)
    for name, chk in body["checks"].items():
        print(f"{'PASS' if chk['pass'] else 'FAIL'} {name} {chk['value']:.6g}")
    for regime, rep in sweeps.items():
        for q, f in rep["extra_fits"].items():
            print(f"{'PASS' if f['pass'] else 'FAIL'} {regime} {q} slope {f['slope']:.4f} predicted {f['predicted']:.4f}")
        r = rep["remainder"]
        if r is not None:
            print(f"{r['status'].upper()} {regime} remainder slope {r['slope']:.4f} >= {r['predicted'] - r['tolerance']:.4f}")
        print(f"{'PASS' if rep['heat_discrepancy_monotone'] else 'FAIL'} {regime} heat discrepancy monotone")
    return 0 if ok else 1


COMMANDS = {"resonance": cmd_resonance, "eig": cmd_eig, "solve": cmd_solve, "heat": cmd_heat,
            "sweep": cmd_sweep, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run configuration")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--cache", type=Path, help="cache directory")
    common.add_argument("--threads", type=int, help="FFT worker threads")
    common.add_argument("--resolution", type=int, help="voxels per axis")
    common.add_argument("--delta", type=float, help="particle size")
    common.add_argument("--h", type=float, help="detuning exponent")
    common.add_argument("--regime", choices=("plasmonic", "dielectric"))
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="photothermal", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"resonance": "select the resonant frequency and contrast",
             "eig": "compute (or load) the static eigen-systems",
             "solve": "solve the scattering problem at one delta",
             "heat": "evaluate the temperature at the observation point",
             "sweep": "run a delta sweep and fit the log-log slope",
             "validate": "run the validation checks and sweeps"}
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, out=args.out, cache=args.cache, threads=args.threads,
                              resolution=args.resolution, delta=args.delta, h=args.h, regime=args.regime)
        cfg.validate()
    except ConfigError as exc:
        print(f"photothermal: config error: {exc}", file=sys.stderr)
        return 2
    set_workers(cfg.threads)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    Path(cfg.cache).mkdir(parents=True, exist_ok=True)
    try:
        ctx = Context(cfg)
        return COMMANDS[args.command](cfg, ctx)
    except ConfigError as exc:
        print(f"photothermal: config error: {exc}", file=sys.stderr)
        return 2
    except PhotothermalError as exc:
        print(f"photothermal {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

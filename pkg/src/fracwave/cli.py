"""Batch front end: ``fracwave spectrum|simulate|verify|sweep --config FILE``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy.special import gamma as gamma_fn

from . import frac_core as fc
from . import simulator as sim
from .config import ConfigError, ExperimentConfig, load_config, sweep_values
from .decay_analysis import (
    FitError,
    decay_regime,
    default_window,
    fit_decay_exponent,
    predicted_exponent,
)
from .params import FracParams, SystemParams
from .spectrum import (
    BCase,
    RefinementError,
    abscissa_scan,
    classify_b,
    evaluator_for,
    exceptional_b_squared,
    exceptional_eigenpair,
    refine_root,
    sc_check,
    write_roots_csv,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NOT_STABLE = 3


def _write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _fmt(v) -> str:
    return f"{v:.17e}"


# ---------------------------------------------------------------------------
# spectrum


def abscissa_branch(cfg: ExperimentConfig) -> int:
    raw = cfg.get("spectrum", "branch")
    if raw != "auto":
        return int(raw)
    p = cfg.params
    # for odd multiples of pi only the second family approaches the axis slowly
    return 2 if p.a == 1.0 and classify_b(p.b) is BCase.B_IN_PI_ODD else 1


def remainder_order(p: SystemParams, branch: int) -> float:
    """Order ell of the last retained correction, used to scale residuals."""
    if p.a != 1.0:
        return 0.0
    case = classify_b(p.b)
    degenerate = (branch == 1 and case is BCase.B_IN_2PIZ) or (
        branch == 2 and case is BCase.B_IN_PI_ODD
    )
    return 5.0 - p.alpha if degenerate else 1.0 - p.alpha


def cmd_spectrum(cfg: ExperimentConfig) -> int:
    p, out = cfg.params, cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    header = cfg.header_lines()
    wit = sc_check(p, cfg.getint("spectrum", "k_max"))
    if wit.violated:
        report = {
            "config": cfg.as_dict(),
            "status": "strong stability violated",
            "k1": wit.k1,
            "k2": wit.k2,
            "b_exceptional": wit.b_exceptional,
            "imaginary_eigenvalue": wit.lambda_imag,
        }
        _write_json(out / "sc_report.json", report)
        print(
            f"strong stability violated: b matches the exceptional coupling of "
            f"(k1, k2) = ({wit.k1}, {wit.k2}); eigenvalue +-{wit.lambda_imag:.12g} i",
            file=sys.stderr,
        )
        return EXIT_NOT_STABLE

    branch = abscissa_branch(cfg)
    n_min, n_max = cfg.getint("spectrum", "n_min"), cfg.getint("spectrum", "n_max")
    n0 = cfg.getint("spectrum", "n0")
    try:
        scan = abscissa_scan(p, branch, (n_min, n_max), tol=cfg.getfloat("spectrum", "tol"), n0=n0)
    except RefinementError as exc:
        print(f"spectrum: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED

    write_roots_csv(out / "roots.csv", scan.roots, header)

    ell = remainder_order(p, branch)
    with open(out / "asymptotics.csv", "w", newline="") as fh:
        for line in header + [f"scaled_residual = |diff| * (n pi)^{ell:g}"]:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(("n", "abs_diff", "scaled_residual"))
        for r in scan.roots:
            diff = abs(r.lam - r.seed)
            w.writerow((r.n, _fmt(diff), _fmt(diff * (r.n * math.pi) ** ell)))

    s = predicted_exponent(p, cfg.getint("spectrum", "k_max"))
    expected = None if s is None else 2.0 / s
    abscissa = {
        "config": cfg.as_dict(),
        "params": p.to_dict(),
        "branch": branch,
        "n_range": [n_min, n_max],
        "fitted_slope": scan.fitted_exponent,
        "abscissa_exponent": scan.abscissa_exponent,
        "predicted_decay_exponent": s,
        "expected_abscissa_exponent": expected,
        "regime": decay_regime(p),
    }
    _write_json(out / "abscissa.json", abscissa)
    print(f"abscissa exponent {scan.abscissa_exponent:.6f} (branch {branch}, n {n_min}..{n_max})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def initial_data(cfg: ExperimentConfig) -> sim.InitialData:
    kind = cfg.get("simulate", "initial")
    if kind == "zero":
        return sim.zero_data()
    if kind == "smooth":
        return sim.smooth_data()
    if kind == "mode":
        return sim.mode_data(cfg.getint("simulate", "mode"))
    if kind == "random":
        return sim.random_data(cfg.getint("simulate", "seed"))
    mode = exceptional_eigenpair(cfg.params.a, cfg.getint("simulate", "k1"), cfg.getint("simulate", "k2"))
    return sim.exceptional_data(mode)


def sim_config(cfg: ExperimentConfig) -> sim.SimConfig:
    return sim.SimConfig(
        n_cells=cfg.getint("simulate", "n_cells"),
        dt=cfg.getfloat("simulate", "dt", optional=True),
        T=cfg.getfloat("simulate", "t_end"),
        xi_tol=cfg.getfloat("simulate", "xi_tol"),
        initial=initial_data(cfg),
        record_every=cfg.getint("simulate", "record_every"),
    )


def plot_rows(trace: sim.EnergyTrace, n_points: int):
    """Roughly log-spaced (t, log t, log E) samples with t > 0 and E > 0."""
    t, e = trace.times, trace.energy
    ok = np.flatnonzero((t > 0) & (e > 0))
    if ok.size == 0:
        return []
    if ok.size > n_points:
        targets = np.geomspace(t[ok[0]], t[ok[-1]], n_points)
        ok = np.unique(ok[np.clip(np.searchsorted(t[ok], targets), 0, ok.size - 1)])
    return [(t[i], math.log(t[i]), math.log(e[i])) for i in ok]


def cmd_simulate(cfg: ExperimentConfig) -> int:
    p, out = cfg.params, cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    header = cfg.header_lines()
    sc = sim_config(cfg)
    trace = sim.run(p, sc)
    sim.write_trace_csv(out / "trace.csv", trace, header)

    with open(out / "plot_data.csv", "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(("t", "log_t", "log_energy"))
        for row in plot_rows(trace, cfg.getint("simulate", "plot_points")):
            w.writerow([_fmt(v) for v in row])

    e0 = float(trace.energy[0])
    steps = np.diff(trace.energy)
    summary = {
        "config": cfg.as_dict(),
        "params": p.to_dict(),
        "initial": sc.initial.name,
        "energy_initial": e0,
        "energy_final": float(trace.energy[-1]),
        "max_energy_increase": float(max(steps.max(initial=0.0), 0.0)),
        "max_balance_residual": float(trace.balance_residual.max()),
        "accumulated_balance_residual": float(trace.balance_residual.sum()),
    }

    if p.gamma == 0.0:
        drift = float(np.abs(trace.energy - e0).max())
        rel = drift / e0 if e0 > 0 else 0.0
        summary["conservation"] = {
            "max_abs_drift": drift,
            "max_rel_drift": rel,
            "rel_drift_per_unit_time": rel / sc.T,
            "conserved": bool(rel / sc.T <= 1e-10),
        }
        summary["fit"] = None
        summary["fit_refused"] = "gamma = 0: no damping, energy is conserved"
        _write_json(out / "decay_fit.json", summary)
        print(f"conservative run: relative energy drift {rel:.3e} over T = {sc.T:g}")
        return EXIT_OK

    lo = cfg.getfloat("simulate", "fit_t_lo", optional=True)
    hi = cfg.getfloat("simulate", "fit_t_hi", optional=True)
    dlo, dhi = default_window(sc.T)
    window = (dlo if lo is None else lo, dhi if hi is None else hi)
    s = predicted_exponent(p)
    summary["predicted"] = s
    summary["regime"] = decay_regime(p)
    try:
        fit = fit_decay_exponent(trace, window)
    except FitError as exc:
        summary["fit"] = None
        summary["fit_refused"] = str(exc)
        _write_json(out / "decay_fit.json", summary)
        print(f"decay fit refused: {exc}", file=sys.stderr)
        return EXIT_OK
    summary["fit"] = fit.to_dict()
    summary["fit_refused"] = None
    _write_json(out / "decay_fit.json", summary)
    print(f"fitted decay exponent {fit.exponent:.4f} (r^2 = {fit.r_squared:.4f}) on {window}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _check(name, passed, value=None, threshold=None, detail=""):
    return {"name": name, "passed": bool(passed), "value": value, "threshold": threshold, "detail": detail}


def _skip(name, reason):
    return {"name": name, "passed": True, "skipped": True, "value": None, "threshold": None, "detail": reason}


def verify_checks(cfg: ExperimentConfig) -> tuple[list, list]:
    p = cfg.params
    fp = p.frac
    kappa = cfg.getfloat("verify", "kappa_override", optional=True)
    notes, checks = [], []
    if p.eta == 0.0:
        notes.append(
            "eta = 0: zero lies in the spectrum of the generator (it is not invertible); "
            "checks at lambda = 0 are skipped"
        )

    # transfer identity on real and imaginary axes
    grid = fc.build_xi_grid(fp, 100.0, 1e-8, lam_lo=1e-2, lam_hi=1e4)
    lam = np.geomspace(1e-2, 1e4, 40)
    lam = np.concatenate([lam, 1j * lam])
    err = fc.transfer_sweep_error(grid, fp, lam=lam, kappa=kappa)
    checks.append(_check("transfer_identity", err <= 1e-6, err, 1e-6, "max relative error on 80 points"))

    # Caputo derivative of t^2 against the closed form
    caputo_p = FracParams(fp.alpha, eta=0.0, gamma=1.0)
    sig = fc.SampledSignal.from_function(lambda t: t**2, 5.0, 1e-3)
    d = fc.caputo_direct(sig, caputo_p)
    sel = sig.times >= 0.5
    exact = 2.0 * sig.times[sel] ** (2.0 - fp.alpha) / gamma_fn(3.0 - fp.alpha)
    cerr = float(np.max(np.abs(d.values[sel] - exact) / exact))
    checks.append(_check("caputo_t_squared", cerr <= 1e-3, cerr, 1e-3, "eta = 0, dt = 1e-3, t in [0.5, 5]"))

    # diffusive realization against direct product integration
    sig = fc.SampledSignal.from_function(lambda t: np.sin(2.0 * t) * t, 4.0, 2e-3)
    g2 = fc.build_xi_grid(fp, 1.0 / 2e-3, 1e-8, lam_lo=1e-2, lam_hi=1e4)
    via_xi = fc.diffusive_integral(sig, g2, fp, kappa=kappa)
    direct = fc.frac_integral_direct(sig, FracParams(1.0 - fp.alpha, eta=fp.eta))
    scale = float(np.max(np.abs(direct.values)))
    derr = float(np.max(np.abs(via_xi.values - direct.values)) / scale)
    checks.append(_check("diffusive_vs_direct", derr <= 1e-4, derr, 1e-4, "fractional integral of t sin 2t"))

    # conjugate symmetry of the characteristic function
    f = evaluator_for(p)
    pts = [0.3 + 7.1j, -0.2 + 31.4j, 1.5 + 2.0j]
    sym = max(abs(f(z.conjugate()) - f(z).conjugate()) / max(abs(f(z)), 1e-300) for z in pts)
    checks.append(_check("conjugate_symmetry", sym <= 1e-12, sym, 1e-12))

    # an exceptional coupling gives a purely imaginary eigenvalue
    pair = next(
        (k1, k2) for k1 in range(1, 10) for k2 in range(1, 10)
        if exceptional_b_squared(p.a, k1, k2) > 0 and k1**2 != p.a * k2**2
    )
    mode = exceptional_eigenpair(p.a, *pair)
    pe = p.replace(b=mode.b)
    fe = evaluator_for(pe)
    on = abs(fe(1j * mode.lam))
    off = abs(fe(1j * mode.lam * (1 + 1e-3)))
    root = refine_root(1j * mode.lam, fe)
    checks.append(_check(
        "exceptional_eigenpair", on <= 1e-8 * off and root.converged and abs(root.lam.real) <= 1e-9,
        {"relative_residual": on / off, "re_lambda": root.lam.real}, 1e-8, f"(k1, k2) = {pair}",
    ))

    # c1, c2 against the transfer function
    if p.eta == 0.0:
        checks.append(_skip("c1_c2_at_zero", "eta = 0: c1 diverges at lambda = 0"))
    else:
        c1, c2 = fc.c1_c2(0.0, fp, grid)
        ref = fp.gamma * p.eta ** (fp.alpha - 1.0)
        checks.append(_check("c1_c2_at_zero", abs(c2 - ref) <= 1e-6 * ref, abs(c2 - ref) / ref, 1e-6))
    c1, c2 = fc.c1_c2(1.0, fp, grid)
    ref = fp.gamma * (1j + fp.eta) ** (fp.alpha - 1.0)
    cerr = abs((c2 - 1j * c1) - ref) / abs(ref)
    checks.append(_check("c1_c2_identity", cerr <= 1e-6, cerr, 1e-6, "gamma (i + eta)^(alpha-1) = c2 - i c1"))

    # energy: monotone, conservative limit, second-order balance
    n_cells, t_end = cfg.getint("verify", "n_cells"), cfg.getfloat("verify", "t_end")
    data = sim.random_data(cfg.getint("verify", "seed"))
    acc = []
    for n in (n_cells, 2 * n_cells):
        tr = sim.run(p, sim.SimConfig(n_cells=n, T=t_end, initial=data))
        acc.append(float(tr.balance_residual.sum()))
        if n == n_cells:
            inc = float(np.diff(tr.energy).max(initial=0.0))
            checks.append(_check(
                "energy_monotone", inc <= 1e-12 * tr.energy[0], inc, 1e-12, "largest one-step increase / E(0)",
            ))
    ratio = acc[0] / acc[1] if acc[1] > 0 else math.inf
    checks.append(_check("balance_second_order", 3.0 <= ratio <= 5.0, ratio, [3.0, 5.0],
                         "accumulated balance residual ratio under (h, dt) halving"))
    pc = SystemParams.make(p.a, p.b, p.alpha, p.eta, 0.0, allow_zero_gamma=True)
    tr = sim.run(pc, sim.SimConfig(n_cells=n_cells, T=t_end, initial=data))
    drift = float(np.abs(tr.energy - tr.energy[0]).max() / tr.energy[0]) / t_end
    checks.append(_check("conservative_limit", drift <= 1e-10, drift, 1e-10, "gamma = 0, drift per unit time"))
    return notes, checks


def cmd_verify(cfg: ExperimentConfig) -> int:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    notes, checks = verify_checks(cfg)
    ok = all(c["passed"] for c in checks)
    _write_json(out / "verify.json", {"config": cfg.as_dict(), "notes": notes, "checks": checks, "all_passed": ok})
    for c in checks:
        tag = "SKIP" if c.get("skipped") else ("PASS" if c["passed"] else "FAIL")
        print(f"{tag} {c['name']}")
    for n in notes:
        print(f"note: {n}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# sweep


def _run_one(args):
    command, sections, out_dir = args
    from .config import build_config

    cfg = build_config(command, sections, out_dir)
    return COMMANDS[command](cfg)


def _sweep_metric(command: str, out: Path):
    try:
        if command == "spectrum":
            return json.loads((out / "abscissa.json").read_text())["abscissa_exponent"]
        if command == "simulate":
            fit = json.loads((out / "decay_fit.json").read_text())["fit"]
            return None if fit is None else fit["exponent"]
        return json.loads((out / "verify.json").read_text())["all_passed"]
    except (OSError, KeyError):
        return None


def cmd_sweep(cfg: ExperimentConfig) -> int:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    sub, key = cfg.get("sweep", "command"), cfg.get("sweep", "parameter")
    jobs, dirs = [], []
    for v in sweep_values(cfg):
        d = out / f"{key}={v!r}"
        child = cfg.sweep_child(v, d)
        dirs.append((v, d))
        jobs.append((sub, child.sections, str(child.out_dir)))
    with ProcessPoolExecutor(max_workers=cfg.getint("sweep", "workers")) as pool:
        codes = list(pool.map(_run_one, jobs))
    metric = {"spectrum": "abscissa_exponent", "simulate": "fitted_exponent", "verify": "all_passed"}[sub]
    with open(out / "summary.csv", "w", newline="") as fh:
        for line in cfg.header_lines():
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(("parameter", "value", "exit_code", metric, "output_dir"))
        for (v, d), code in zip(dirs, codes):
            m = _sweep_metric(sub, d)
            w.writerow((key, _fmt(v), code, "" if m is None else (m if isinstance(m, bool) else _fmt(m)), d.name))
    return EXIT_OK if all(c == EXIT_OK for c in codes) else EXIT_CHECK_FAILED


COMMANDS = {"spectrum": cmd_spectrum, "simulate": cmd_simulate, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="fracwave", description=__doc__)
    ap.add_argument("command", choices=list(COMMANDS))
    ap.add_argument("--config", required=True, help="INI experiment config")
    ap.add_argument("--out", default=None, help="output directory (overrides $FRACWAVE_OUT)")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, args.command, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return COMMANDS[args.command](cfg)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line experiment runner.

Subcommands ``converge``, ``approx``, ``generalize`` and ``spectrum`` each
read a TOML configuration and write CSV/text artifacts plus a
``manifest.json`` into the output directory.  Exit codes: 0 on success,
1 for configuration errors, 2 when a numerical guard fires.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, _parallel, bounds, ntk
from .barron import approximation_experiment, barron_norm, event_frequencies
from .config import ConfigError, dumps, load
from .experiment import build_augmentation, build_problem, build_samples, build_train_config
from .expressions import ExpressionError
from .io import fmt, write_csv, write_matrix_csv
from .operator import CoefficientBoundError, empirical_risk, population_risk_mc
from .training import DivergenceError, train

log = logging.getLogger("ntkpde")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _setup_logging():
    level = os.environ.get("NTKPDE_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _aug_or_none(cfg):
    aug = build_augmentation(cfg)
    return None if aug.kind == "identity" else aug


def _operator_coeffs(problem, aug):
    if aug is None:
        return problem.coeffs
    from .boundary import TransformedProblem

    return TransformedProblem(problem, aug).coeffs


def run_convergence(cfg, out):
    """Train, then compare the trace with the linear-convergence envelope."""
    problem, _ = build_problem(cfg)
    aug = _aug_or_none(cfg)
    S = build_samples(cfg, problem.dim, aug)
    tc = build_train_config(cfg)
    theta, trace = train(problem, S, tc, aug=aug)
    trace.to_csv(out / "trace.csv")

    coeffs = _operator_coeffs(problem, aug)
    diag = cfg["diagnostics"]
    m, n, d = theta.width, S.n, problem.dim
    G0 = trace.gram0 if trace.gram0 is not None else ntk.gram_a(trace.theta0, S, coeffs)
    lam0 = ntk.lambda_min(G0)
    lam_hat = 0.5 * lam0
    lam_S, lam_S_err, _, _ = ntk.estimate_lambda_S(S, coeffs, diag["kernel_mc"], seed=cfg.seed)
    assumption_ok = lam_S > 3.0 * lam_S_err

    steps, t, risk = trace.column("step"), trace.column("t"), trace.column("risk")
    drift, lmin = trace.column("gram_drift"), trace.column("lambda_min")
    gram_rows = []
    for i in range(len(trace)):
        if math.isfinite(lmin[i]):
            gram_rows.append((int(steps[i]), t[i], lmin[i], drift[i], bool(drift[i] <= 0.25 * lam_S)))
    gw = dict(trace.lambda_min_gw)
    header = ("step", "t", "lambda_min", "gram_drift", "in_set")
    if gw:
        header += ("lambda_min_total",)
        gram_rows = [row + (gw.get(row[0], math.nan),) for row in gram_rows]
    write_csv(out / "gram_drift.csv", header, gram_rows)
    t_star = ntk.first_exit_time([r[1] for r in gram_rows], [r[3] for r in gram_rows], lam_S)

    R0 = risk[0]
    envelope = np.array([bounds.convergence_bound(ti, m, n, lam_hat, R0) for ti in t])
    violations = int(np.sum(risk > envelope))
    reports = [
        bounds.BoundReport(
            "convergence_envelope", float(envelope[-1]),
            {"m": m, "n": n, "lambda_hat": lam_hat, "t": float(t[-1]), "risk0": float(R0)},
            measured=float(risk[-1]),
            note=f"{violations} of {len(trace)} records above the envelope",
        )
    ]
    delta = diag["delta"]
    M = coeffs.bound if coeffs.bound is not None else 1.0
    measured_drift = float(max(np.max(trace.column("max_da")), np.max(trace.column("max_dw"))))
    if lam_S > 0:
        q = bounds.drift_bound_q(M, d, m, n, delta, lam_S, R0)
        reports.append(bounds.BoundReport(
            "drift_q", q, {"M": M, "d": d, "m": m, "n": n, "delta": delta, "lambda_S": lam_S, "risk0": float(R0)},
            measured=measured_drift,
        ))
        C_d = ntk.estimate_C_d(d, seed=cfg.seed)
        req = bounds.required_width(n, M, d, delta, lam_S, R0, C_d)
        reports.append(bounds.BoundReport(
            "required_width", req, {"n": n, "M": M, "d": d, "delta": delta, "lambda_S": lam_S, "C_d": C_d},
            note=f"width m={m} is {'at or above' if m >= req else 'below'} the requirement",
        ))
    else:
        log.warning("drift bound q not evaluated: lambda_S estimate %.3g is not positive", lam_S)
    if tc.asi:
        reports.append(bounds.BoundReport("asi_initial_risk", 0.5, {}, measured=float(R0)))
    else:
        reports.append(bounds.BoundReport(
            "initial_risk", bounds.initial_risk_bound(tc.gamma, m, M, d, delta),
            {"gamma": tc.gamma, "m": m, "M": M, "d": d, "delta": delta}, measured=float(R0),
        ))

    lines = [
        f"width m = {m}, samples n = {n}, dimension d = {d}",
        f"learning rate = {fmt(trace.lr)}, steps = {int(steps[-1])}",
        f"lambda_min(G_a(theta0)) = {fmt(lam0)}",
        f"lambda_hat = {fmt(lam_hat)}",
        f"lambda_S estimate = {fmt(lam_S)} (MC error {fmt(lam_S_err)}); "
        f"positive-definiteness {'supported' if assumption_ok else 'NOT supported'}",
        f"max parameter drift = {fmt(measured_drift)}",
        f"empirical t* = {fmt(t_star)}",
        f"risk(0) = {fmt(float(R0))}, risk(final) = {fmt(float(risk[-1]))}, "
        f"ratio = {fmt(float(risk[-1] / R0) if R0 > 0 else 0.0)}",
        f"envelope violations = {violations}",
        "",
    ]
    bounds.write_reports_text(out / "bound_report.txt", reports, header="\n".join(lines))
    bounds.write_reports_csv(out / "bound_report.csv", reports)
    return EXIT_OK


def run_approximation(cfg, out):
    _, rep = build_problem(cfg)
    if rep is None:
        raise ConfigError("approx needs a [problem.barron] representation", path=cfg.path)
    ap = cfg["approx"]
    table = approximation_experiment(rep, ap["widths"], ap["seeds"], ap["num_mc"], seed=cfg.seed)
    write_csv(out / "approx_scaling.csv", ("width", "mean_risk", "std_err", "bound"), table.rows())
    lines = [f"barron_norm = {fmt(barron_norm(rep))}", f"loglog_slope = {fmt(table.slope)}"]
    for m, mean, se, bnd in table.rows():
        lines.append(f"width {m}: mean {fmt(mean)} +- {fmt(se)} bound {fmt(bnd)} "
                     f"within = {str(bool(mean <= bnd + 3 * se)).lower()}")
    if "event_width" in ap:
        fr, fp = event_frequencies(rep, ap["event_width"], ap.get("event_seeds", 200), ap["num_mc"], seed=cfg.seed)
        lines.append(f"event frequencies at m={ap['event_width']}: risk {fmt(fr)} path_norm {fmt(fp)}")
    (out / "approx_summary.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def run_generalization(cfg, out):
    problem, rep = build_problem(cfg)
    if _aug_or_none(cfg) is not None:
        raise ConfigError("generalize supports only the identity boundary", path=cfg.path)
    S = build_samples(cfg, problem.dim)
    tc = build_train_config(cfg)
    gen = cfg["generalize"]
    delta = gen["delta"]
    theta, trace = train(problem, S, tc)
    trace.to_csv(out / "trace.csv")
    R_S = empirical_risk(theta, S, problem)
    R_D, R_D_se = population_risk_mc(theta, problem, gen["num_mc"], seed=cfg.seed + 2)
    P = float(trace.column("path_norm")[-1])
    M = problem.coeffs.bound
    d, n, m = problem.dim, S.n, theta.width
    reports = [bounds.BoundReport(
        "posterior_gap", bounds.posterior_gap_bound(P, M, d, n, delta),
        {"path_norm": P, "M": M, "d": d, "n": n, "delta": delta}, measured=abs(R_D - R_S),
    )]
    if rep is not None:
        B = barron_norm(rep)
        reports.append(bounds.BoundReport(
            "prior", bounds.prior_bound(B, m, n, M, d, tc.reg_lambda, delta),
            {"barron_norm": B, "m": m, "n": n, "M": M, "d": d, "lambda": tc.reg_lambda, "delta": delta},
            measured=R_D,
        ))
    header = "\n".join([
        f"lambda = {fmt(tc.reg_lambda)} (admissible minimum {fmt(bounds.admissible_lambda(M, d, delta))})",
        f"R_S = {fmt(R_S)}", f"R_D (MC) = {fmt(R_D)} +- {fmt(R_D_se)}", f"path_norm = {fmt(P)}", "",
    ])
    bounds.write_reports_text(out / "generalization_report.txt", reports, header=header)
    bounds.write_reports_csv(out / "generalization.csv", reports)
    return EXIT_OK


def run_ntk_spectrum(cfg, out):
    problem, _ = build_problem(cfg)
    aug = _aug_or_none(cfg)
    S = build_samples(cfg, problem.dim, aug)
    coeffs = _operator_coeffs(problem, aug)
    sp = cfg["spectrum"]
    K, se = ntk.kernel_a_mc(S, coeffs, sp["kernel_mc"], seed=cfg.seed)
    write_matrix_csv(out / "kernel_a.csv", K)
    write_matrix_csv(out / "kernel_a_stderr.csv", se)
    rows, summary = ntk.concentration_experiment(S, coeffs, sp["widths"], sp["seeds"], K, seed=cfg.seed)
    write_csv(out / "spectrum.csv", ("width", "seed", "lambda_min", "frob_gap"), rows)
    write_csv(out / "spectrum_summary.csv", ("width", "mean_lambda_min", "mean_frob_gap"), summary)
    gaps = [r[2] for r in summary]
    monotone = all(b < a for a, b in zip(gaps, gaps[1:]))
    (out / "spectrum_report.txt").write_text(
        f"lambda_min(K_a estimate) = {fmt(ntk.lambda_min(K))}\n"
        f"mean Frobenius gap strictly decreasing in width = {str(monotone).lower()}\n"
    )
    return EXIT_OK


COMMANDS = {
    "converge": run_convergence,
    "approx": run_approximation,
    "generalize": run_generalization,
    "spectrum": run_ntk_spectrum,
}


def _sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out, command, cfg):
    outputs = {p.name: _sha256(p) for p in sorted(out.iterdir()) if p.is_file() and p.name != "manifest.json"}
    manifest = {
        "command": command,
        "seed": cfg.seed,
        "config_sha256": cfg.sha256(),
        "config": dumps(cfg),
        "versions": {"ntkpde": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "outputs": outputs,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def build_parser():
    parser = argparse.ArgumentParser(prog="ntkpde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML experiment configuration")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="override the global seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (outputs do not depend on it)")
        p.add_argument("--gram-cadence", type=int, help="compute G_a every k steps (0 disables)")
    return parser


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        if args.gram_cadence is not None and args.gram_cadence < 0:
            raise ConfigError("--gram-cadence must be non-negative")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load(args.config).with_overrides(seed=args.seed, gram_cadence=args.gram_cadence)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _parallel.set_threads(args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        code = COMMANDS[args.command](cfg, out)
    except (DivergenceError, FloatingPointError) as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, CoefficientBoundError, ExpressionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        _parallel.set_threads(1)
    write_manifest(out, args.command, cfg)
    return code


if __name__ == "__main__":
    sys.exit(main())

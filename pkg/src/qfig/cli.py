"""Command-line runner for verification sweeps.

Every subcommand produces a list of checks (one row per instance and
inequality), writes them as JSON (plus a CSV companion) and exits with 0 when
all hold, 1 on any violation and 2 on a configuration error.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .asymmetry import (
    SymmetrySpec,
    coherence_qfi,
    covariant_degrading_channel,
    covariant_recovery_harness,
    covariant_reversible_channel,
    integer_hamiltonian,
)
from .channels import pinching_channel, universal_recovery_apply
from .divergences import chi2, relative_entropy
from .families import (
    FamilyError,
    counterexample_verify,
    family_from_config,
    make_counterexample_family,
    qfi,
    qfi_matrix,
    random_family,
    random_multi_family,
)
from .metrics import (
    BKM,
    MetricError,
    metric_eval,
    metric_eval_integral,
    parse_metric,
)
from .operators import MAX_DIM, random_density, trace_norm
from .quadrature import BetaQuadrature
from .recovery_analysis import (
    BoundReport,
    alpha_bound_check,
    bkm_bound_check,
    chi_half_recovery_check,
    entropy_gap_integral_check,
    family_sufficiency_test,
    lemma_bound_check,
    log_derivative,
    pair_sufficiency_test,
)
from .sampling import random_instance, reversible_channel

log = logging.getLogger("qfig")

COMMANDS = ("counterexample", "dpi-sweep", "pair-sufficiency", "family-sufficiency",
            "bounds", "asymmetry", "quadrature-audit")
DEFAULTS = {"seed": 0, "trials": 20, "dims": [2, 3, 4],
            "metrics": ["sld", "rld", "bkm", "alpha:0.25", "alpha:0.5", "wyd:0.3"],
            "tol": 1e-9, "grid": 101, "out": None}
CSV_COLUMNS = ("instance_id", "check", "lhs", "rhs", "margin", "satisfied")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    seed: int = 0
    trials: int = 20
    dims: list[int] = field(default_factory=lambda: [2, 3, 4])
    metrics: list[str] = field(default_factory=list)
    tol: float = 1e-9
    grid: int = 101
    out: str | None = None
    family: dict | None = None

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        if not self.dims or any(d < 2 or d > MAX_DIM for d in self.dims):
            raise ConfigError(f"dims must lie in [2, {MAX_DIM}]")
        if self.grid < 3:
            raise ConfigError("grid must be at least 3")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        try:
            for name in self.metrics:
                parse_metric(name)
        except MetricError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class Row:
    instance_id: int
    report: BoundReport

    def as_dict(self) -> dict:
        d = self.report.to_json()
        d["instance_id"] = self.instance_id
        d["margin"] = self.report.margin
        return d


def _csv_list(text: str, cast) -> list:
    return [cast(x) for x in text.split(",") if x.strip()]


def _metrics(cfg: RunConfig):
    return [parse_metric(m) for m in cfg.metrics]


def _regular(cfg: RunConfig):
    regs = [m for m in _metrics(cfg) if m.regular]
    return regs or [BKM]


def _check(name, lhs, rhs, orientation="le", tol=1e-9, **components) -> BoundReport:
    return BoundReport(name, float(lhs), float(rhs), orientation, components, tol)


def _named(report: BoundReport, name: str) -> BoundReport:
    report.check = name
    return report


# ---------------------------------------------------------------------------
# Per-instance work.  Each function takes (config, instance index, rng) and
# returns a list of BoundReports.


def _dpi_instance(cfg: RunConfig, idx: int, rng) -> list[BoundReport]:
    inst = random_instance(rng, cfg.dims)
    phi = inst.phi
    fam = random_family(inst.rho.shape[0], rng)
    mfam = random_multi_family(inst.rho.shape[0], 2, rng)
    rho_out, A_out = phi.apply(inst.rho), phi.apply(inst.A)
    out = []
    for m in _metrics(cfg):
        out.append(_check(f"metric_eval[{m.label}]", metric_eval(m, rho_out, A_out),
                          metric_eval(m, inst.rho, inst.A), tol=cfg.tol))
        out.append(_check(f"chi2[{m.label}]", chi2(m, phi.apply(inst.rho), phi.apply(inst.sigma)),
                          chi2(m, inst.rho, inst.sigma), tol=cfg.tol))
        th = float(rng.uniform(*fam.interval))
        out.append(_check(f"qfi[{m.label}]", qfi(m, fam.pushforward(phi), th), qfi(m, fam, th),
                          tol=cfg.tol))
        th2 = rng.uniform(mfam.lower, mfam.upper)
        diff = qfi_matrix(m, mfam, th2) - qfi_matrix(m, mfam.pushforward(phi), th2)
        out.append(_check(f"qfi_matrix[{m.label}]", float(np.linalg.eigvalsh(diff)[0]), 0.0,
                          "ge", tol=cfg.tol))
    out.append(_check("relative_entropy", relative_entropy(phi.apply(inst.rho), phi.apply(inst.sigma)),
                      relative_entropy(inst.rho, inst.sigma), tol=cfg.tol))
    return out


def _pair_instance(cfg: RunConfig, idx: int, rng) -> list[BoundReport]:
    inst = random_instance(rng, cfg.dims)
    d = inst.rho.shape[0]
    reversible = idx % 2 == 0
    phi = reversible_channel(d, rng) if reversible else inst.phi
    out = [chi_half_recovery_check(inst.rho, inst.sigma, phi)]
    for m in _regular(cfg):
        v = pair_sufficiency_test(m, inst.rho, inst.sigma, phi)
        name = f"pair_sufficiency_test[{m.label}]"
        if reversible:
            out.append(_check(name, v.max_residual, 1e-7, gap=v.gap))
        else:
            out.append(_check(name, min(v.gap, v.certified_error), 0.0, "ge", tol=0.0,
                              gap=v.gap, certified_error=v.certified_error))
    return out


def _family_instance(cfg: RunConfig, idx: int, rng) -> list[BoundReport]:
    d = int(rng.choice(cfg.dims))
    fam = random_family(d, rng)
    phi = reversible_channel(d, rng)
    out = []
    for m in _regular(cfg):
        v = family_sufficiency_test(m, fam, phi, grid=min(cfg.grid, 21))
        out.append(_check(f"family_sufficiency_test[{m.label}]", v.max_residual, 1e-7,
                          max_gap=v.max_gap))
    ld = log_derivative(fam, float(rng.uniform(*fam.interval)))
    out.append(_check("log_derivative", ld.residual, 1e-6))
    return out


def _bounds_instance(cfg: RunConfig, idx: int, rng) -> list[BoundReport]:
    inst = random_instance(rng, cfg.dims)
    out = [chi_half_recovery_check(inst.rho, inst.sigma, inst.phi)]
    eps_grid = np.linspace(0.05, 0.45, 9)
    for t in (0.0, 1.0):
        for m in _regular(cfg):
            out.append(_named(lemma_bound_check(m, inst.rho, inst.A, inst.phi, t),
                              f"lemma_bound_check[{m.label}]"))
        out.append(bkm_bound_check(inst.rho, inst.A, inst.phi, t, eps_grid))
        for al in (0.1, 0.25, 0.4):
            out.append(_named(alpha_bound_check(inst.rho, inst.A, inst.phi, t, al),
                              f"alpha_bound_check[{al:g}]"))
    fam = random_family(inst.rho.shape[0], rng)
    grid = cfg.grid if cfg.grid % 2 else cfg.grid + 1
    rep = entropy_gap_integral_check(fam, inst.phi, grid)
    out.append(rep)
    out.append(_check("entropy_gap_integral_check.richardson",
                      rep.components["richardson_rel_change"], 0.01, tol=0.0))
    return out


def _asymmetry_instance(cfg: RunConfig, idx: int, rng) -> list[BoundReport]:
    d = int(rng.choice(cfg.dims))
    H = integer_hamiltonian(d, rng)
    rho = random_density(d, rng, mix=0.2)
    out = []
    m = _regular(cfg)[0]
    if idx % 2 == 0:
        phi, H_out = covariant_reversible_channel(H, rng)
        spec = SymmetrySpec.build(H, H_out)
        v = covariant_recovery_harness(m, rho, phi, spec)
        out.append(_check("covariant_recovery_harness.gap", abs(v.gap), 1e-8, tol=0.0))
        if v.reversible:
            out.append(_check("covariant_recovery_harness.recovery", v.max_recovery_residual, 1e-6,
                              tol=0.0))
            out.append(_check("covariant_recovery_harness.covariance", v.recovery_covariance, 1e-6,
                              tol=0.0))
    else:
        H_out = integer_hamiltonian(int(rng.choice(cfg.dims)), rng)
        phi = covariant_degrading_channel(H, H_out, rng)
        spec = SymmetrySpec.build(H, H_out)
        v = covariant_recovery_harness(m, rho, phi, spec)
        out.append(_check("covariant_recovery_harness.gap", v.gap, 0.0, "ge", tol=0.0))
        out.append(_check("covariant_recovery_harness.certified_error", v.certified_error, 0.0,
                          "ge", tol=0.0))
    for mm in _metrics(cfg):
        out.append(_check(f"coherence_monotonicity_sweep[{mm.label}]",
                          coherence_qfi(mm, phi.apply(rho), spec.H_out), coherence_qfi(mm, rho, H),
                          tol=cfg.tol))
    return out


def _quadrature_instance(cfg: RunConfig, idx: int, rng) -> list[BoundReport]:
    inst = random_instance(rng, cfg.dims)
    out = []
    if idx == 0:
        _, w = BetaQuadrature().rule()
        out.append(_check("beta_weight_sum", abs(w.sum() - 1), 1e-8, tol=0.0))
    sigma_out = inst.phi.apply(inst.sigma)
    prev = math.inf
    for panels in (2, 4, 8, 16, 32):
        rec = universal_recovery_apply(inst.sigma, inst.phi, sigma_out,
                                       BetaQuadrature(panels=panels, weight_tol=1.0))
        err = trace_norm(rec - inst.sigma)
        # refinement may only stall once the error is at roundoff level
        out.append(_check(f"universal_recovery.refinement[{panels}]", err, prev, tol=1e-12))
        prev = err
    out.append(_check("universal_recovery_apply", prev, 1e-8, tol=0.0))
    for m in _regular(cfg):
        spectral = metric_eval(m, inst.rho, inst.A)
        integral = metric_eval_integral(m, inst.rho, inst.A)
        out.append(_check(f"metric_eval_integral[{m.label}]", abs(integral - spectral) / spectral,
                          1e-6, tol=0.0))
    return out


def _counterexample(cfg: RunConfig) -> list[Row]:
    try:
        fam = family_from_config(cfg.family) if cfg.family else make_counterexample_family()
    except FamilyError as exc:
        raise ConfigError(str(exc)) from None
    rep = counterexample_verify(fam, cfg.grid)
    rows = [Row(0, _check("counterexample_verify.sld_gap", rep.max_abs_sld_gap, 1e-8, tol=0.0)),
            Row(0, _check("counterexample_verify.rld_gap", rep.min_rld_gap(), 1e-4, "ge", tol=0.0)),
            Row(0, _check("counterexample_verify.bkm_gap", rep.min_bkm_gap(), 1e-4, "ge", tol=0.0)),
            Row(0, _check("counterexample_verify.recovery", rep.recovery_margin, 1e-3, "ge",
                          tol=0.0))]
    pinch = pinching_channel(np.diag(np.arange(float(fam.rho(fam.interval[0]).dim))))
    v = family_sufficiency_test(BKM, fam, pinch, grid=min(cfg.grid, 21))
    rows.append(Row(0, _check("family_sufficiency_test[bkm]", v.max_gap, 1e-4, "ge", tol=0.0,
                              max_residual=v.max_residual)))
    return rows


RUNNERS: dict[str, Callable] = {
    "dpi-sweep": _dpi_instance,
    "pair-sufficiency": _pair_instance,
    "family-sufficiency": _family_instance,
    "bounds": _bounds_instance,
    "asymmetry": _asymmetry_instance,
    "quadrature-audit": _quadrature_instance,
}


def _threads() -> int:
    cap = os.environ.get("QFIG_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError("QFIG_THREADS must be an integer") from None
    return n


def execute(cfg: RunConfig) -> list[Row]:
    cfg.validate()
    if cfg.command == "counterexample":
        return _counterexample(cfg)
    work = RUNNERS[cfg.command]
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.trials)

    def one(i):
        return [Row(i, r) for r in work(cfg, i, np.random.default_rng(seeds[i]))]

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        chunks = list(pool.map(one, range(cfg.trials)))
    return [row for chunk in chunks for row in chunk]


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_jsonable(v) for v in x]
    return x


def build_report(cfg: RunConfig, rows: list[Row]) -> dict:
    violations = sum(not r.report.satisfied for r in rows)
    return _jsonable({
        "command": cfg.command,
        "environment": {
            "version": __version__,
            "numpy": np.__version__,
            "seed": cfg.seed,
            "tolerances": {"tol": cfg.tol},
            "trials": cfg.trials,
            "dims": cfg.dims,
            "metrics": cfg.metrics,
            "grid": cfg.grid,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        },
        "summary": {"checks": len(rows), "violations": violations},
        "checks": [r.as_dict() for r in rows],
    })


def write_outputs(report: dict, rows: list[Row], out: str) -> None:
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    with path.with_suffix(".csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([r.instance_id, r.report.check, repr(r.report.lhs), repr(r.report.rhs),
                        repr(r.report.margin), r.report.satisfied])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qfig", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"qfig {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="JSON file with any of the options below")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="JSON report path; a .csv companion is written next to it")
        s.add_argument("--trials", type=int)
        s.add_argument("--dims", help="comma-separated dimensions, e.g. 2,3,4")
        s.add_argument("--metrics", help="comma-separated metrics, e.g. bkm,alpha:0.5,wyd:0.3")
        s.add_argument("--tol", type=float)
        s.add_argument("--grid", type=int)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = dict(DEFAULTS)
    family = None
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        family = data.pop("family", None)
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(data)
    try:
        if args.seed is not None:
            values["seed"] = args.seed
        if args.trials is not None:
            values["trials"] = args.trials
        if args.dims is not None:
            values["dims"] = _csv_list(args.dims, int)
        if args.metrics is not None:
            values["metrics"] = _csv_list(args.metrics, str)
        if args.tol is not None:
            values["tol"] = args.tol
        if args.grid is not None:
            values["grid"] = args.grid
        if args.out is not None:
            values["out"] = args.out
        return RunConfig(args.command, int(values["seed"]), int(values["trials"]),
                         [int(d) for d in values["dims"]], [str(m) for m in values["metrics"]],
                         float(values["tol"]), int(values["grid"]), values["out"], family)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad option value: {exc}") from None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        rows = execute(cfg)
    except ConfigError as exc:
        print(f"qfig: config error: {exc}", file=sys.stderr)
        return 2
    report = build_report(cfg, rows)
    if cfg.out:
        write_outputs(report, rows, cfg.out)
    bad = [r for r in rows if not r.report.satisfied]
    for r in bad:
        log.error("violated: instance %d %s lhs=%r rhs=%r", r.instance_id, r.report.check,
                  r.report.lhs, r.report.rhs)
    print(f"{cfg.command}: {len(rows)} checks, {len(bad)} violations")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())

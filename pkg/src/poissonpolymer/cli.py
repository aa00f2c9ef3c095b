"""Command-line front end: ``polymer analytic|simulate|sweep``.

Experiments are configured by a flat ``key = value`` text file with ``#``
comments.  Accepted keys (anything else is rejected):

    d, beta, nu, t, n_steps, paths_per_env, n_envs, bin_width, delta,
    seed, mode, grid.beta, grid.nu, grid.t

``mode`` selects the experiment: quenched, annealed, localization,
dp-dbeta or dp-dnu.  ``grid.*`` keys hold comma-separated lists and are
only valid for ``sweep``; cells run in beta-major, then nu, then t order.
Outputs are results.csv / results.json / manifest.json; all numbers are
written with 17 significant digits and reruns with the same config and
seed are byte-identical.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime
invariant violation (reported with the offending seed and replicate).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .analytics import (
    BetaCriticalBounds,
    CriticalPoint,
    annealed_gap_integrand,
    annealed_rate,
    bessel_zero,
    classify_phase,
    critical_beta_bounds,
    critical_curve_exponent,
    critical_intensity_lower_bound,
    critical_intensity_ratio,
    curve_kernel,
    drift_gap_integrand,
    in_l2_region,
)
from .errors import ConfigError, InvariantViolationError
from .estimators import (
    ExperimentConfig,
    annealed_free_energy,
    dp_dbeta,
    dp_dnu,
    dp_dnu_fd,
    localization_scan,
    quenched_free_energy,
)

CONFIG_KEYS = {
    "d", "beta", "nu", "t", "n_steps", "paths_per_env", "n_envs",
    "bin_width", "delta", "seed", "mode", "grid.beta", "grid.nu", "grid.t",
}
MODES = ("quenched", "annealed", "localization", "dp-dbeta", "dp-dnu")
CSV_HEADER = "mode,d,beta,nu,t,n_steps,M,K,h,value,std_error,ess_min,observable"

STREAM_RULE = ("k1=splitmix64(seed); k2=splitmix64(k1 xor fnv1a64(tag)); "
               "k3=splitmix64(k2 xor index); philox4x64 key="
               "(k3, splitmix64(k3 xor 0x9E3779B97F4A7C15))")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; unknown or duplicate keys are rejected."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key '{key}'")
        if key in raw:
            raise ConfigError(f"duplicate config key '{key}'")
        raw[key] = value
    return raw


def _parse_number(raw: dict, key: str, cast, default=None):
    if key not in raw:
        if default is None:
            raise ConfigError(f"missing required config key '{key}'")
        return default
    try:
        return cast(raw[key])
    except ValueError as exc:
        raise ConfigError(f"invalid value for key '{key}': {raw[key]!r}") from exc


def _parse_list(raw: dict, key: str):
    if key not in raw:
        return None
    try:
        values = [float(v) for v in raw[key].split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"invalid value for key '{key}': {raw[key]!r}") from exc
    if not values:
        raise ConfigError(f"empty grid for key '{key}'")
    return values


@dataclass
class RunPlan:
    mode: str
    base: dict
    grid_beta: list | None
    grid_nu: list | None
    grid_t: list | None

    def cells(self) -> list[ExperimentConfig]:
        betas = self.grid_beta if self.grid_beta is not None else [self.base["beta"]]
        nus = self.grid_nu if self.grid_nu is not None else [self.base["nu"]]
        ts = self.grid_t if self.grid_t is not None else [self.base["t"]]
        out = []
        for beta in betas:
            for nu in nus:
                for t in ts:
                    kwargs = dict(self.base, beta=beta, nu=nu, t=t)
                    if self.base.get("n_steps") is None:
                        kwargs["n_steps"] = None
                    out.append(ExperimentConfig(**kwargs))
        return out


def build_run_plan(raw: dict, sweep: bool, seed_override: int | None = None) -> RunPlan:
    mode = raw.get("mode", "quenched")
    if mode not in MODES:
        raise ConfigError(f"invalid value for key 'mode': {mode!r} (choose from {MODES})")
    grids = {key: _parse_list(raw, f"grid.{key}") for key in ("beta", "nu", "t")}
    if not sweep and any(g is not None for g in grids.values()):
        raise ConfigError("grid.* keys are only valid for the sweep command")
    base = {
        "d": _parse_number(raw, "d", int, 1),
        "beta": _parse_number(raw, "beta", float,
                              0.0 if grids["beta"] is not None else None),
        "nu": _parse_number(raw, "nu", float,
                            1.0 if grids["nu"] is not None else None),
        "t": _parse_number(raw, "t", float, 4.0),
        "n_steps": _parse_number(raw, "n_steps", int, 0) or None,
        "n_paths": _parse_number(raw, "paths_per_env", int, 2000),
        "n_envs": _parse_number(raw, "n_envs", int, 200),
        "bin_width": _parse_number(raw, "bin_width", float, 0.0) or None,
        "delta": _parse_number(raw, "delta", float, 0.25),
        "seed": _parse_number(raw, "seed", int, 0),
    }
    if seed_override is not None:
        base["seed"] = seed_override
    return RunPlan(mode=mode, base=base, grid_beta=grids["beta"],
                   grid_nu=grids["nu"], grid_t=grids["t"])


def _nan_or(v) -> float:
    return float("nan") if v is None else float(v)


def _run_cell(mode: str, cfg: ExperimentConfig) -> list[dict]:
    """One parameter cell -> observable rows (value, SE, ess, extras)."""
    rows = []

    def row(observable, est, ess_min=None, extra=None):
        rows.append({
            "mode": mode, "d": cfg.d, "beta": cfg.beta, "nu": cfg.nu, "t": cfg.t,
            "n_steps": cfg.n_steps, "M": cfg.n_paths, "K": cfg.n_envs,
            "h": cfg.bin_width, "value": est.value, "std_error": est.std_error,
            "ess_min": _nan_or(ess_min), "observable": observable,
            **(extra or {}),
        })

    if mode == "quenched":
        est = quenched_free_energy(cfg)
        row("quenched_free_energy", est, est.diagnostics["ess_min"])
    elif mode == "annealed":
        row("annealed_free_energy", annealed_free_energy(cfg))
    elif mode == "dp-dbeta":
        for method, name in (("direct", "dp_dbeta_direct"),
                             ("palm", "dp_dbeta_palm"),
                             ("finite_difference", "dp_dbeta_finite_difference")):
            est = dp_dbeta(cfg, method=method)
            row(name, est, est.diagnostics.get("ess_min"))
    elif mode == "dp-dnu":
        est = dp_dnu(cfg)
        row("dp_dnu_field", est, est.diagnostics.get("ess_min"))
        row("dp_dnu_coupled_fd", dp_dnu_fd(cfg))
    else:  # localization
        cell = localization_scan([cfg])[0]
        triple = {
            "middle": {"value": cell.delta_middle.value,
                       "std_error": cell.delta_middle.std_error},
            "negligible_in_tube": {"value": cell.delta_negligible.value,
                                   "std_error": cell.delta_negligible.std_error},
            "predominant_out_of_tube": {"value": cell.delta_predominant.value,
                                        "std_error": cell.delta_predominant.std_error},
        }
        extra = {"delta_sets": triple}
        row("replica_overlap", cell.overlap, cell.ess_min, extra)
        row("favourite_overlap", cell.favourite, cell.ess_min, extra)
        row("delta_middle", cell.delta_middle, cell.ess_min, extra)
        row("delta_negligible", cell.delta_negligible, cell.ess_min, extra)
        row("delta_predominant", cell.delta_predominant, cell.ess_min, extra)
    return rows


def _write_outputs(out_dir: Path, rows: list[dict], config_text: str,
                   plan: RunPlan, timings: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    config_sha = hashlib.sha256(config_text.encode()).hexdigest()

    csv_lines = [CSV_HEADER]
    for r in rows:
        csv_lines.append(",".join([
            r["mode"], str(r["d"]), _fmt(r["beta"]), _fmt(r["nu"]), _fmt(r["t"]),
            str(r["n_steps"]), str(r["M"]), str(r["K"]), _fmt(r["h"]),
            _fmt(r["value"]), _fmt(r["std_error"]), _fmt(r["ess_min"]),
            r["observable"],
        ]))
    (out_dir / "results.csv").write_text("\n".join(csv_lines) + "\n")

    json_rows = []
    for r in rows:
        obj = dict(r)
        obj["ess_min"] = None if math.isnan(r["ess_min"]) else r["ess_min"]
        obj["config_sha256"] = config_sha
        json_rows.append(obj)
    (out_dir / "results.json").write_text(
        json.dumps(json_rows, indent=2, sort_keys=True) + "\n")

    manifest = {
        "library_version": __version__,
        "generator": "philox4x64-10",
        "stream_rule": STREAM_RULE,
        "config_text": config_text,
        "config_sha256": config_sha,
        "master_seed": plan.base["seed"],
        "mode": plan.mode,
        "timings_seconds": timings,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_config_text(args) -> str:
    if args.from_manifest:
        manifest = json.loads(Path(args.from_manifest).read_text())
        return manifest["config_text"]
    if args.config is None:
        raise ConfigError("either a config file or --from-manifest is required")
    return Path(args.config).read_text()


def _cmd_experiment(args, sweep: bool) -> int:
    config_text = _load_config_text(args)
    plan = build_run_plan(parse_config_text(config_text), sweep=sweep,
                          seed_override=args.seed)
    rows = []
    timings = {}
    start = time.perf_counter()
    for idx, cfg in enumerate(plan.cells()):
        cell_start = time.perf_counter()
        rows.extend(_run_cell(plan.mode, cfg))
        timings[f"cell_{idx}"] = time.perf_counter() - cell_start
    timings["total"] = time.perf_counter() - start
    _write_outputs(Path(args.out), rows, config_text, plan, timings)
    return 0


def _linspace_arg(text: str) -> list[float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid must be 'start,stop,count'")
    start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 2:
        return [start]
    return [start + (stop - start) * i / (count - 1) for i in range(count)]


def _cmd_analytic(args) -> int:
    out = sys.stdout
    if args.closed_form == "lambda":
        betas = args.grid if args.grid else [args.beta]
        out.write("beta,lambda\n")
        for b in betas:
            out.write(f"{_fmt(b)},{_fmt(annealed_rate(b))}\n")
    elif args.closed_form == "alpha":
        betas = args.grid if args.grid else [args.beta]
        out.write("beta,alpha\n")
        for b in betas:
            out.write(f"{_fmt(b)},{_fmt(critical_curve_exponent(b))}\n")
    elif args.closed_form == "h-alpha":
        us = args.u_grid if args.u_grid else [args.u]
        out.write("alpha,u,h_alpha\n")
        for u in us:
            out.write(f"{_fmt(args.alpha)},{_fmt(u)},{_fmt(curve_kernel(args.alpha, u))}\n")
    elif args.closed_form == "psi-phi":
        us = args.u_grid if args.u_grid else [args.u]
        out.write("beta,u,psi,phi\n")
        for u in us:
            out.write(f"{_fmt(args.beta)},{_fmt(u)},"
                      f"{_fmt(drift_gap_integrand(args.beta, u))},"
                      f"{_fmt(annealed_gap_integrand(args.beta, u))}\n")
    elif args.closed_form == "bc-bounds":
        crit = CriticalPoint(beta0=args.beta0, nu0=args.nu0, sign=args.branch)
        bounds: BetaCriticalBounds = critical_beta_bounds(args.nu, crit, args.alpha)
        out.write("branch,beta0,nu0,alpha,nu,case,lower,upper\n")
        out.write(f"{args.branch},{_fmt(args.beta0)},{_fmt(args.nu0)},"
                  f"{_fmt(args.alpha)},{_fmt(args.nu)},{bounds.case},"
                  f"{_fmt(bounds.lower)},{_fmt(bounds.upper)}\n")
    elif args.closed_form == "classify":
        crit = CriticalPoint(beta0=args.beta0, nu0=args.nu0, sign=args.branch)
        label = classify_phase(args.beta, args.nu, crit, args.alpha)
        out.write("branch,beta0,nu0,alpha,beta,nu,phase\n")
        out.write(f"{args.branch},{_fmt(args.beta0)},{_fmt(args.nu0)},"
                  f"{_fmt(args.alpha)},{_fmt(args.beta)},{_fmt(args.nu)},"
                  f"{label.value}\n")
    elif args.closed_form == "bessel":
        out.write("d,gamma,ratio,ratio_squared\n")
        out.write(f"{args.d},{_fmt(bessel_zero(args.d))},"
                  f"{_fmt(critical_intensity_ratio(args.d))},"
                  f"{_fmt(critical_intensity_lower_bound(args.d))}\n")
    else:  # l2
        out.write("beta,nu,a_l2,in_l2_region\n")
        out.write(f"{_fmt(args.beta)},{_fmt(args.nu)},{_fmt(args.a_l2)},"
                  f"{str(in_l2_region(args.beta, args.nu, args.a_l2)).lower()}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polymer",
        description="Brownian polymer in a Poissonian medium: closed forms and"
                    " Monte Carlo experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    analytic = sub.add_parser("analytic", help="evaluate a closed form")
    forms = analytic.add_subparsers(dest="closed_form", required=True)

    p_lambda = forms.add_parser("lambda", help="annealed rate e^beta - 1")
    p_lambda.add_argument("--beta", type=float, default=0.0)
    p_lambda.add_argument("--grid", type=_linspace_arg, default=None,
                          metavar="START,STOP,N")

    p_alpha = forms.add_parser("alpha", help="critical-curve exponent")
    p_alpha.add_argument("--beta", type=float, default=0.0)
    p_alpha.add_argument("--grid", type=_linspace_arg, default=None,
                         metavar="START,STOP,N")

    p_h = forms.add_parser("h-alpha", help="curve monotonicity kernel")
    p_h.add_argument("--alpha", type=float, required=True)
    p_h.add_argument("--u", type=float, default=0.0)
    p_h.add_argument("--u-grid", type=_linspace_arg, default=None,
                     metavar="START,STOP,N")

    p_pp = forms.add_parser("psi-phi", help="derivative-gap integrands")
    p_pp.add_argument("--beta", type=float, required=True)
    p_pp.add_argument("--u", type=float, default=0.0)
    p_pp.add_argument("--u-grid", type=_linspace_arg, default=None,
                      metavar="START,STOP,N")

    p_bc = forms.add_parser("bc-bounds", help="critical coupling sandwich")
    p_bc.add_argument("--branch", choices=("plus", "minus"), required=True)
    p_bc.add_argument("--beta0", type=float, required=True)
    p_bc.add_argument("--nu0", type=float, required=True)
    p_bc.add_argument("--alpha", type=float, required=True)
    p_bc.add_argument("--nu", type=float, required=True)

    p_cl = forms.add_parser("classify", help="phase of a (beta, nu) query")
    p_cl.add_argument("--branch", choices=("plus", "minus"), required=True)
    p_cl.add_argument("--beta0", type=float, required=True)
    p_cl.add_argument("--nu0", type=float, required=True)
    p_cl.add_argument("--alpha", type=float, required=True)
    p_cl.add_argument("--beta", type=float, required=True)
    p_cl.add_argument("--nu", type=float, required=True)

    p_bessel = forms.add_parser("bessel", help="critical-intensity bound table")
    p_bessel.add_argument("--d", type=int, required=True)

    p_l2 = forms.add_parser("l2", help="second-moment region test")
    p_l2.add_argument("--beta", type=float, required=True)
    p_l2.add_argument("--nu", type=float, required=True)
    p_l2.add_argument("--a-l2", type=float, required=True)

    for name, help_text in (("simulate", "run one experiment cell"),
                            ("sweep", "run a parameter grid")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("config", nargs="?", default=None,
                         help="flat key=value config file")
        cmd.add_argument("--out", default="out", help="output directory")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the config seed")
        cmd.add_argument("--from-manifest", default=None,
                         help="rerun the config embedded in a manifest.json")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "analytic":
            return _cmd_analytic(args)
        return _cmd_experiment(args, sweep=args.command == "sweep")
    except InvariantViolationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

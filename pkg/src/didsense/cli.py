"""Command-line front door and machine-readable reports.

Subcommands: fit, sensitivity, eb, tipping, simulate, regimes. Options
come from an optional JSON config file with every key overridable by a
flag. Reports are JSON (summaries) and CSV (per-period / per-grid
series); each JSON report embeds the resolved config, the seed, the
package version, and per-parameter split R-hat, and is byte-identical
across reruns with the same seed.

Exit codes: 0 success, 2 input error, 3 convergence failure under
--strict-convergence, 4 sampling failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .ar1 import Ar1Params
from .calibration import (
    RegimeKind,
    builtin_regimes,
    fit_eb,
    regime_from_dict,
    regime_to_dict,
)
from .effects import (
    att_parallel_trends,
    att_with_violation,
    build_trend_set,
    fit_twfe,
)
from .errors import DidsenseError, SamplingError
from .panel import ColumnMapping, load_panel, pre_violation_series
from .sampler import SamplerConfig
from .synth import SynthSpec, generate, to_csv
from .tipping import default_grid, sweep

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONVERGENCE = 3
EXIT_SAMPLING = 4

REGIME_ORDER = (
    "Fixed-1", "Fixed-2", "Fixed-3",
    "Fully-1", "Fully-2", "Fully-3",
    "EB-1", "EB-2", "EB-3",
)


@dataclass
class RunConfig:
    """Resolved options for one command (config file merged with flags)."""

    data: str | None = None
    columns: dict = field(default_factory=dict)
    onset_period: int | None = None
    stratum: str | None = None
    log_transform: bool = True
    allowed_strata: list | None = None
    regime: object = None  # builtin name or inline regime dict
    chains: int = 4
    warmup: int = 1000
    draws: int = 1000
    seed: int | None = None
    target_acceptance: float = 0.8
    max_tree_depth: int = 10
    coefficient_prior_sd: float = 10.0
    noise_prior_scale: float = 1.0
    noise_sd_fixed: float | None = None
    eta_grid: list | None = None
    eta_min: float | None = None
    eta_max: float | None = None
    eta_points: int = 41
    baseline_ounces: float | None = None
    crossing_bound: str = "upper95"
    out_dir: str = "."
    strict_convergence: bool = False
    threads: int = 1
    synth_spec: str | None = None

    def sampler_config(self) -> SamplerConfig:
        if self.seed is None:
            raise InputError("--seed is required (reports must be reproducible)")
        return SamplerConfig(
            chains=self.chains,
            warmup=self.warmup,
            draws=self.draws,
            seed=self.seed,
            target_acceptance=self.target_acceptance,
            max_tree_depth=self.max_tree_depth,
        )

    def column_mapping(self) -> ColumnMapping:
        known = {f.name for f in fields(ColumnMapping)}
        unknown = set(self.columns) - known
        if unknown:
            raise InputError(f"unknown column mapping keys: {sorted(unknown)}")
        return ColumnMapping(**self.columns)


class InputError(DidsenseError):
    """Bad command line, config file, or missing required option."""


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise InputError(f"config file {path} must hold a JSON object")
    return payload


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    provided = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    merged: dict = {}
    if getattr(ns, "config", None):
        merged.update(_load_config_file(ns.config))
    merged.update(provided)
    if "columns" in merged and isinstance(merged["columns"], list):
        pairs = {}
        for item in merged["columns"]:
            key, _, value = str(item).partition("=")
            if not value:
                raise InputError(f"--column expects name=csv_header, got {item!r}")
            pairs[key] = value
        merged["columns"] = pairs
    known = {f.name for f in fields(RunConfig)}
    unknown = set(merged) - known
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise InputError(f"bad config: {exc}") from exc


# ---------------------------------------------------------------------------
# Report helpers
# ---------------------------------------------------------------------------


def _plain(value):
    """Convert numpy scalars/arrays so reports serialize identically."""
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def write_json(path: Path, payload: dict) -> None:
    text = json.dumps(_plain(payload), indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")


def _diagnostics_block(draws) -> dict:
    return {
        "split_rhat": {k: v["split_rhat"] for k, v in draws.diagnostics.items()},
        "ess": {k: v["ess"] for k, v in draws.diagnostics.items()},
        "divergences": draws.divergence_count,
        "converged": draws.converged,
    }


def _report_skeleton(command: str, cfg: RunConfig, diagnostics: dict | None = None) -> dict:
    return {
        "command": command,
        "config": _plain(asdict(cfg)),
        "seed": cfg.seed,
        "version": __version__,
        "diagnostics": diagnostics if diagnostics is not None else {"split_rhat": {}},
    }


def _load_data(cfg: RunConfig):
    if cfg.data is None:
        raise InputError("--data is required for this command")
    if cfg.onset_period is None:
        raise InputError("--onset-period is required for this command")
    return load_panel(
        cfg.data,
        onset_period=cfg.onset_period,
        schema=cfg.column_mapping(),
        log_transform=cfg.log_transform,
        allowed_strata=cfg.allowed_strata,
    )


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fit(cfg: RunConfig, panel):
    return fit_twfe(
        panel,
        cfg.sampler_config(),
        stratum=cfg.stratum,
        coefficient_prior_sd=cfg.coefficient_prior_sd,
        noise_prior_scale=cfg.noise_prior_scale,
        noise_sd_fixed=cfg.noise_sd_fixed,
        threads=cfg.threads,
    )


def _resolve_regimes(cfg: RunConfig) -> list:
    builtins = builtin_regimes()
    if cfg.regime is None:
        return [builtins[name] for name in REGIME_ORDER]
    if isinstance(cfg.regime, str):
        if cfg.regime not in builtins:
            raise InputError(
                f"unknown regime {cfg.regime!r}; builtins: {sorted(builtins)}"
            )
        return [builtins[cfg.regime]]
    if isinstance(cfg.regime, dict):
        return [regime_from_dict(cfg.regime)]
    raise InputError(f"regime must be a name or an inline object, got {cfg.regime!r}")


def _eb_if_needed(cfg: RunConfig, panel, regimes) -> object:
    if any(r.kind is RegimeKind.EMPIRICAL_BAYES for r in regimes):
        return fit_eb(pre_violation_series(panel, stratum=cfg.stratum))
    return None


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_fit(cfg: RunConfig) -> int:
    panel = _load_data(cfg)
    out = _out_dir(cfg)
    fit = _fit(cfg, panel)
    att = att_parallel_trends(panel, fit.draws, stratum=cfg.stratum)
    trends = build_trend_set(panel, fit.draws, stratum=cfg.stratum)
    diagnostics = _diagnostics_block(fit.draws)

    report = _report_skeleton("fit", cfg, diagnostics)
    report["coefficients"] = fit.draws.summary()
    report["att"] = att.summary()
    write_json(out / "posterior_summary.json", report)
    write_json(out / "diagnostics.json", _report_skeleton("fit", cfg, diagnostics))

    cf_mean = trends.counterfactual_pt.mean(axis=0)
    cf_lo, cf_hi = np.percentile(trends.counterfactual_pt, [2.5, 97.5], axis=0)
    with (out / "trends.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["period", "observed_treated", "observed_control",
             "counterfactual_mean", "counterfactual_lower95", "counterfactual_upper95"]
        )
        post_start = trends.post_periods[0]
        for i, period in enumerate(trends.periods):
            row = [int(period), repr(float(trends.observed_treated[i])),
                   repr(float(trends.observed_control[i]))]
            if period >= post_start:
                k = int(period - post_start)
                row += [repr(float(cf_mean[k])), repr(float(cf_lo[k])), repr(float(cf_hi[k]))]
            else:
                row += ["", "", ""]
            writer.writerow(row)

    if cfg.strict_convergence and not fit.draws.converged:
        print("convergence failure: split R-hat >= 1.01 for at least one parameter",
              file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_sensitivity(cfg: RunConfig) -> int:
    panel = _load_data(cfg)
    out = _out_dir(cfg)
    regimes = _resolve_regimes(cfg)
    eb = _eb_if_needed(cfg, panel, regimes)
    fit = _fit(cfg, panel)
    base = att_parallel_trends(panel, fit.draws, stratum=cfg.stratum)
    config = cfg.sampler_config()

    per_regime = {}
    rows = []
    for regime in regimes:
        shifted = att_with_violation(base, regime, eb=eb, config=config)
        summary = shifted.summary()
        entry = {
            "regime": regime_to_dict(regime),
            "att_pt": summary["total_pt"],
            "att_violation": summary["total_violation"],
        }
        if shifted.nonstationary_fraction > 0:
            entry["warning"] = (
                f"nonstationary AR coefficient in "
                f"{shifted.nonstationary_fraction:.0%} of draws (|rho| >= 1); "
                "deviations amplify and intervals inflate"
            )
        per_regime[regime.name] = entry
        for quantity, stats in (("pt", summary["total_pt"]),
                                ("violation", summary["total_violation"])):
            rows.append([
                regime.name, quantity, repr(stats["mean"]), repr(stats["lower95"]),
                repr(stats["upper95"]), repr(stats["upper95"] - stats["lower95"]),
                "nonstationary_rho" if "warning" in entry and quantity == "violation" else "",
            ])

    report = _report_skeleton("sensitivity", cfg, _diagnostics_block(fit.draws))
    report["regimes"] = per_regime
    if eb is not None:
        report["eb_estimate"] = _eb_dict(eb)
    write_json(out / "sensitivity_summary.json", report)
    with (out / "att_by_regime.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["regime", "quantity", "mean", "lower95", "upper95", "width", "warning"])
        writer.writerows(rows)

    if cfg.strict_convergence and not fit.draws.converged:
        print("convergence failure: split R-hat >= 1.01 for at least one parameter",
              file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def _eb_dict(eb) -> dict:
    return {
        "c": eb.c,
        "rho_hat": eb.rho_hat,
        "eta_hat": eb.eta_hat,
        "sigma_hat": eb.sigma_hat,
        "n_used": eb.n_used,
        "stationary": eb.stationary,
    }


def cmd_eb(cfg: RunConfig) -> int:
    if cfg.seed is None:
        raise InputError("--seed is required (reports must be reproducible)")
    panel = _load_data(cfg)
    out = _out_dir(cfg)
    estimate = fit_eb(pre_violation_series(panel, stratum=cfg.stratum))
    report = _report_skeleton("eb", cfg)
    report["eb_estimate"] = _eb_dict(estimate)
    if not estimate.stationary:
        report["warning"] = (
            f"|rho_hat| = {abs(estimate.rho_hat)} >= 1: nonstationary estimate; "
            "treat as a diagnostic signal"
        )
    write_json(out / "eb_estimate.json", report)
    return EXIT_OK


def cmd_tipping(cfg: RunConfig) -> int:
    panel = _load_data(cfg)
    out = _out_dir(cfg)
    if cfg.baseline_ounces is None:
        raise InputError("--baseline-ounces is required for tipping")
    if cfg.regime is None:
        raise InputError("--regime is required for tipping (the sweep template)")
    if cfg.eta_grid is not None:
        grid = np.asarray([float(v) for v in cfg.eta_grid], dtype=float)
    elif cfg.eta_min is not None and cfg.eta_max is not None:
        grid = default_grid(cfg.eta_min, cfg.eta_max, cfg.eta_points)
    else:
        raise InputError("supply --eta-grid or both --eta-min and --eta-max")

    regimes = _resolve_regimes(cfg)
    template = regimes[0]
    eb = _eb_if_needed(cfg, panel, regimes)
    fit = _fit(cfg, panel)
    base = att_parallel_trends(panel, fit.draws, stratum=cfg.stratum)
    result = sweep(
        panel,
        template,
        grid,
        cfg.sampler_config(),
        cfg.baseline_ounces,
        stratum=cfg.stratum,
        eb=eb,
        crossing_bound=cfg.crossing_bound,
        base=base,
    )

    report = _report_skeleton("tipping", cfg, _diagnostics_block(fit.draws))
    report["tipping"] = {
        "regime": regime_to_dict(template),
        "eta_grid": result.eta_grid,
        "means": result.means,
        "lower95": result.lower95,
        "upper95": result.upper95,
        "eta_star": result.eta_star,
        "fold_change_at_star": result.fold_change_at_star,
        "ounces_at_star": result.ounces_at_star,
        "cans_at_star": result.cans_at_star,
        "crossing_bound": result.crossing_bound,
        "baseline_ounces": result.baseline_ounces,
    }
    write_json(out / "tipping.json", report)
    with (out / "tipping_curve.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eta", "mean", "lower95", "upper95"])
        for i in range(result.eta_grid.size):
            writer.writerow([
                repr(float(result.eta_grid[i])), repr(float(result.means[i])),
                repr(float(result.lower95[i])), repr(float(result.upper95[i])),
            ])

    if cfg.strict_convergence and not fit.draws.converged:
        print("convergence failure: split R-hat >= 1.01 for at least one parameter",
              file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def _synth_spec_from_file(path: str, seed_override: int | None) -> SynthSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read synth spec: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"synth spec {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise InputError("synth spec must be a JSON object")
    xi = payload.pop("post_xi_params", None)
    if seed_override is not None:
        payload["seed"] = seed_override
    for key in ("control_trend", "pre_deviations"):
        if payload.get(key) is not None:
            payload[key] = tuple(float(v) for v in payload[key])
    try:
        spec = SynthSpec(
            **payload,
            post_xi_params=Ar1Params(**xi) if xi is not None else None,
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad synth spec: {exc}") from exc
    return spec


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.synth_spec is None:
        raise InputError("--spec is required for simulate")
    spec = _synth_spec_from_file(cfg.synth_spec, cfg.seed)
    out = _out_dir(cfg)
    panel, truth = generate(spec)
    to_csv(panel, out / "panel.csv")
    report = {
        "command": "simulate",
        "config": _plain(asdict(cfg)),
        "seed": spec.seed,
        "version": __version__,
        "diagnostics": {"split_rhat": {}},
        "spec": {
            "num_periods": spec.num_periods,
            "onset_period": spec.onset_period,
            "true_att": spec.true_att,
            "control_trend": list(spec.control_trend) if spec.control_trend else None,
            "group_offset": spec.group_offset,
            "pre_deviations": list(spec.pre_deviations) if spec.pre_deviations else None,
            "post_xi_params": asdict(spec.post_xi_params) if spec.post_xi_params else None,
            "cell_noise_sd": spec.cell_noise_sd,
            "units_per_group": spec.units_per_group,
            "seed": spec.seed,
            "stratum": spec.stratum,
        },
        "ground_truth": {
            "cell_means_control": truth.cell_means[0],
            "cell_means_treated": truth.cell_means[1],
            "pre_deviations": truth.pre_deviations,
            "xi": truth.xi,
            "xi_cumulative": truth.xi_cumulative,
            "true_att": truth.true_att,
        },
    }
    write_json(out / "ground_truth.json", report)
    return EXIT_OK


def cmd_regimes(cfg: RunConfig) -> int:
    print(f"{'name':8s} {'kind':16s} {'eta':18s} {'rho':14s} {'sigma':16s} multipliers")
    for name, regime in builtin_regimes().items():
        d = regime_to_dict(regime)
        def show(spec):
            return json.dumps(spec) if spec is not None else "from EB fit"
        print(
            f"{name:8s} {d['kind']:16s} {show(d['eta_spec']):18s} "
            f"{show(d['rho_spec']):14s} {show(d['sigma_spec']):16s} "
            f"{json.dumps(d['scale_multipliers'])}"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="didsense",
        description="Bayesian difference-in-differences with trend-deviation sensitivity",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def add_common(p, sampling=True):
        p.add_argument("--config", help="JSON config file; flags override its keys")
        p.add_argument("--data", default=S, help="panel CSV path")
        p.add_argument("--onset-period", dest="onset_period", type=int, default=S)
        p.add_argument("--stratum", default=S, help="analyze one stratum only")
        p.add_argument("--log-transform", dest="log_transform", action="store_true", default=S)
        p.add_argument("--no-log-transform", dest="log_transform", action="store_false",
                       default=S)
        p.add_argument("--column", dest="columns", action="append", default=S,
                       metavar="FIELD=HEADER", help="remap a CSV column (repeatable)")
        p.add_argument("--out", dest="out_dir", default=S, help="output directory")
        p.add_argument("--seed", type=int, default=S)
        p.add_argument("--threads", type=int, default=S)
        if sampling:
            p.add_argument("--chains", type=int, default=S)
            p.add_argument("--warmup", type=int, default=S)
            p.add_argument("--draws", type=int, default=S)
            p.add_argument("--target-accept", dest="target_acceptance", type=float, default=S)
            p.add_argument("--max-depth", dest="max_tree_depth", type=int, default=S)
            p.add_argument("--coef-prior-sd", dest="coefficient_prior_sd", type=float,
                           default=S)
            p.add_argument("--noise-prior-scale", dest="noise_prior_scale", type=float,
                           default=S)
            p.add_argument("--noise-sd-fixed", dest="noise_sd_fixed", type=float, default=S)
            p.add_argument("--strict-convergence", dest="strict_convergence",
                           action="store_true", default=S)

    p_fit = sub.add_parser("fit", help="parallel-trends fit and reports")
    add_common(p_fit)

    p_sens = sub.add_parser("sensitivity", help="one or all builtin deviation regimes")
    add_common(p_sens)
    p_sens.add_argument("--regime", default=S, help="builtin regime name (default: all nine)")

    p_eb = sub.add_parser("eb", help="empirical-Bayes estimate from pre-treatment trends")
    add_common(p_eb, sampling=False)

    p_tip = sub.add_parser("tipping", help="tipping-point sweep over the long-run mean")
    add_common(p_tip)
    p_tip.add_argument("--regime", default=S, help="sweep template regime name")
    p_tip.add_argument("--eta-grid", dest="eta_grid", default=S,
                       type=lambda s: [float(v) for v in s.split(",")],
                       help="comma-separated grid values")
    p_tip.add_argument("--eta-min", dest="eta_min", type=float, default=S)
    p_tip.add_argument("--eta-max", dest="eta_max", type=float, default=S)
    p_tip.add_argument("--eta-points", dest="eta_points", type=int, default=S)
    p_tip.add_argument("--baseline-ounces", dest="baseline_ounces", type=float, default=S)
    p_tip.add_argument("--crossing-bound", dest="crossing_bound",
                       choices=("upper95", "lower95"), default=S)

    p_sim = sub.add_parser("simulate", help="generate a synthetic panel with ground truth")
    p_sim.add_argument("--config", help="JSON config file; flags override its keys")
    p_sim.add_argument("--spec", dest="synth_spec", default=S, help="SynthSpec JSON file")
    p_sim.add_argument("--seed", type=int, default=S, help="override the spec's seed")
    p_sim.add_argument("--out", dest="out_dir", default=S)

    p_reg = sub.add_parser("regimes", help="list builtin regimes")
    p_reg.add_argument("--config", help=argparse.SUPPRESS)

    return parser


COMMANDS = {
    "fit": cmd_fit,
    "sensitivity": cmd_sensitivity,
    "eb": cmd_eb,
    "tipping": cmd_tipping,
    "simulate": cmd_simulate,
    "regimes": cmd_regimes,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = resolve_config(ns)
        if ns.command in ("fit", "sensitivity", "tipping") and cfg.seed is None:
            raise InputError("--seed is required (reports must be reproducible)")
        return COMMANDS[ns.command](cfg)
    except SamplingError as exc:
        print(f"sampling failure: {exc}", file=sys.stderr)
        return EXIT_SAMPLING
    except DidsenseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

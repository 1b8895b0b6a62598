"""
Command-line harness: single simulations, tuning campaigns and method comparison.

Usage::

    gfm-smc --mode simulate --out runs/
    gfm-smc --mode optimize --optimizer pso --seed 7 --out runs/
    gfm-smc --mode compare --repetitions 10 --jobs 4 --out runs/

A key-value configuration file (``--scenario``) can override the built-in
system parameters, the event list and the run settings. Command-line flags
take precedence over its ``[run]`` section::

    [scenario]
    horizon = 0.7
    dc_precharge = 518
    events =
        0.1 scale_linear 0.5
        0.2 connect_nonlinear
        0.2 disconnect_linear
        0.5 scale_plant 1.4

    [linear]
    R_l = 9.0

    [run]
    optimizer = pso
    seeds = 0, 1, 2
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .control import BASELINE_GAINS, SmcGains
from .optimize import OPTIMIZERS, budget, convergence_iteration, run_campaign
from .simloop import Event, Scenario, default_scenario, run_scenario, tracking_metrics

__all__ = ["RunConfig", "ConfigError", "load_config", "cmd_simulate", "cmd_optimize",
           "cmd_compare", "comparison_table", "main"]

MODES = ("simulate", "optimize", "compare")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mode: str = "simulate"
    optimizer: str = "pso"
    gains: SmcGains | None = None
    scenario: Scenario = field(default_factory=default_scenario)
    repetitions: int = 1
    seeds: list | None = None
    out: Path = Path(".")
    trace: bool = False
    threshold: float = 0.037
    jobs: int = 1
    population: int | None = None
    iterations: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {sorted(OPTIMIZERS)}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not self.threshold > 0:
            raise ConfigError("threshold must be positive")

    @property
    def seed_list(self) -> list:
        if self.seeds:
            return list(self.seeds)
        return list(range(self.repetitions))

    def budget_overrides(self, method: str) -> dict:
        defaults = {"pso": (50, 45), "ga": (50, 45), "sa": (50, 45)}[method]
        pop = self.population or defaults[0]
        its = self.iterations or defaults[1]
        if method == "ga" and pop % 2:
            pop += 1
        return budget(method, pop, its)


# ---------------------------------------------------------------------------
# configuration


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_gains(s: str) -> SmcGains:
    try:
        vals = [float(v) for v in s.replace(" ", "").split(",")]
        if len(vals) != 3:
            raise ValueError
        return SmcGains(*vals)
    except ValueError as exc:
        raise ConfigError(f"gains must be three positive numbers kcd,kcq,ksat: {s!r}") from exc


def _parse_seeds(s: str) -> list:
    try:
        return [int(v) for v in s.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"seeds must be comma-separated integers: {s!r}") from exc


def _parse_events(text: str) -> tuple:
    events = []
    for line in text.strip().splitlines():
        parts = line.split()
        if not parts:
            continue
        if len(parts) not in (2, 3):
            raise ConfigError(f"bad event line {line!r}; expected 'time kind [factor]'")
        try:
            events.append(Event(float(parts[0]), parts[1],
                                float(parts[2]) if len(parts) == 3 else 1.0))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return tuple(events)


def _override(obj, section):
    kwargs = {}
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key, raw in section.items():
        if key not in names:
            raise ConfigError(f"unknown key {key!r} for {type(obj).__name__}")
        try:
            kwargs[key] = float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key} must be a number, got {raw!r}") from exc
    return replace(obj, **kwargs)


def load_config(path) -> tuple[Scenario, dict]:
    """Read a key-value configuration file.

    Returns the scenario (built-in defaults with the file's overrides applied)
    and the raw ``[run]`` section.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scenario not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str    # keep parameter names like L_s case-sensitive
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    sc = default_scenario()
    updates = {}
    for name, cls_field in (("plant", "plant"), ("controller", "controller"),
                            ("linear", "linear"), ("nonlinear", "nonlinear")):
        if cp.has_section(name):
            try:
                updates[cls_field] = _override(getattr(sc, cls_field), cp[name])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{name}]: {exc}") from exc
    if cp.has_section("scenario"):
        s = cp["scenario"]
        for key, raw in s.items():
            if key == "events":
                updates["events"] = _parse_events(raw)
            elif key in ("linear_connected", "nonlinear_connected"):
                updates[key] = _parse_bool(raw)
            elif key in ("horizon", "dt", "dc_precharge"):
                updates[key] = float(raw)
            else:
                raise ConfigError(f"unknown key {key!r} in [scenario]")
    try:
        sc = replace(sc, **updates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    run = dict(cp["run"]) if cp.has_section("run") else {}
    return sc, run


# ---------------------------------------------------------------------------
# commands


def _event_windows(scenario: Scenario):
    times = sorted({0.0, *(e.time for e in scenario.events)})
    times = [t for t in times if t < scenario.horizon]
    # stop half a sample short so the next event's first tick is excluded
    half = 0.5 * scenario.controller.T_sam
    ends = [t - half for t in times[1:]] + [scenario.horizon]
    return list(zip(times, ends))


def _fmt(v, fmt=".6g"):
    return "-" if v is None else format(v, fmt)


def simulation_summary(result, gains: SmcGains, scenario: Scenario) -> str:
    lines = ["mode: simulate",
             f"k_cd: {gains.k_cd:.9g}", f"k_cq: {gains.k_cq:.9g}", f"k_sat: {gains.k_sat:.9g}",
             f"horizon_s: {scenario.horizon:.9g}",
             f"iae: {result.iae:.9g}", f"diverged: {str(result.diverged).lower()}"]
    tr = result.trace
    if tr is not None and len(tr) > 1 and not result.diverged:
        lines += ["", "window_start window_end axis overshoot_pct settling_time_s steady_state_error_A"]
        for t0, t1 in _event_windows(scenario):
            if not tr.window(t0, t1).any():
                continue
            for axis in ("d", "q"):
                m = tracking_metrics(tr, t0, t1, axis)
                lines.append(f"{t0:.6g} {t1:.6g} {axis} {_fmt(m.overshoot, '.4g')} "
                             f"{_fmt(m.settling_time, '.6g')} {m.steady_state_error:.6g}")
    return "\n".join(lines) + "\n"


def _write(path: Path, text: str):
    path.write_text(text)


def cmd_simulate(cfg: RunConfig) -> int:
    """One closed-loop run with trace capture. Non-zero exit if the run diverged."""
    gains = cfg.gains or BASELINE_GAINS
    label = "custom" if cfg.gains else "baseline"
    seed = cfg.seed_list[0]
    result = run_scenario(gains, cfg.scenario, trace=True)
    stem = cfg.out / f"simulate_{label}_{seed}"
    result.trace.to_csv(stem.with_suffix(".csv"))
    summary = simulation_summary(result, gains, cfg.scenario)
    _write(stem.with_suffix(".txt"), summary)
    print(summary, end="")
    if result.diverged:
        print("error: simulation diverged; partial trace written", file=sys.stderr)
        return 3
    return 0


def _campaign(cfg: RunConfig, method: str, mode: str):
    camp = run_campaign(method, cfg.seed_list, scenario=cfg.scenario, workers=cfg.jobs,
                        **cfg.budget_overrides(method))
    for rep in camp.reports:
        stem = cfg.out / f"{mode}_{method}_{rep.seed}"
        _write(stem.with_suffix(".txt"), rep.to_text())
        _write(stem.with_suffix(".csv"), rep.to_csv())
    return camp


def median_crossing(camp, threshold: float) -> float:
    """Median first-crossing iteration over a campaign (never crossing counts as infinite)."""
    its = [convergence_iteration(r, threshold) for r in camp.reports]
    return float(np.median([math.inf if i is None else i for i in its]))


def campaign_summary(camp, cfg: RunConfig) -> str:
    best = camp.best_report
    lines = [f"method: {camp.method}",
             f"repetitions: {len(camp.reports)}",
             f"seeds: {','.join(str(r.seed) for r in camp.reports)}",
             f"mean_best_cost: {camp.mean_cost:.9g}",
             f"std_best_cost: {camp.std_cost:.9g}",
             f"threshold: {cfg.threshold:.9g}",
             f"median_convergence_iteration: {_fmt_iter(median_crossing(camp, cfg.threshold))}",
             f"best_seed: {best.seed}",
             f"best_cost: {best.best_cost:.9g}"]
    lines += [f"{n}: {v:.9g}" for n, v in zip(best.names, best.best_x)]
    lines += ["", "seed best_cost convergence_iteration"]
    for r in camp.reports:
        lines.append(f"{r.seed} {r.best_cost:.9g} {_fmt(convergence_iteration(r, cfg.threshold), 'd')}")
    return "\n".join(lines) + "\n"


def _fmt_iter(v: float) -> str:
    return "-" if math.isinf(v) else f"{v:g}"


def cmd_optimize(cfg: RunConfig) -> int:
    """Tuning campaign with per-run reports, an aggregate summary and a best-gain trace."""
    camp = _campaign(cfg, cfg.optimizer, "optimize")
    summary = campaign_summary(camp, cfg)
    _write(cfg.out / f"optimize_{cfg.optimizer}_summary.txt", summary)
    best = camp.best_report
    result = run_scenario(best.best_gains, cfg.scenario, trace=True)
    result.trace.to_csv(cfg.out / f"optimize_{cfg.optimizer}_{best.seed}_trace.csv")
    print(summary, end="")
    if result.diverged:
        print("error: best gains diverged on the final run", file=sys.stderr)
        return 3
    return 0


def comparison_table(baseline_iae: float, campaigns: dict, threshold: float) -> list:
    """Rows ``(method, mean_iae, improvement_pct, convergence_iteration)``.

    The baseline row carries no improvement or convergence entry.
    """
    rows = [("baseline", baseline_iae, None, None)]
    for method, camp in campaigns.items():
        improvement = (baseline_iae - camp.mean_cost) / baseline_iae * 100.0
        rows.append((method, camp.mean_cost, improvement, median_crossing(camp, threshold)))
    return rows


def format_table(rows) -> tuple[str, str]:
    text = [f"{'method':<10} {'mean_iae':>12} {'improvement_pct':>16} {'convergence_iteration':>22}"]
    csv_rows = ["method,mean_iae,improvement_pct,convergence_iteration"]
    for method, iae, imp, conv in rows:
        imp_s = "" if imp is None else f"{imp:.2f}"
        conv_s = "" if conv is None else ("" if math.isinf(conv) else f"{conv:g}")
        text.append(f"{method:<10} {iae:>12.6g} {imp_s:>16} {conv_s:>22}")
        csv_rows.append(f"{method},{iae:.9g},{imp_s},{conv_s}")
    return "\n".join(text) + "\n", "\n".join(csv_rows) + "\n"


def cmd_compare(cfg: RunConfig) -> int:
    """Baseline versus PSO, GA and SA campaigns on one scenario and seed set."""
    gains = cfg.gains or BASELINE_GAINS
    base = run_scenario(gains, cfg.scenario, trace=cfg.trace)
    if cfg.trace:
        base.trace.to_csv(cfg.out / "compare_baseline_trace.csv")
    campaigns = {m: _campaign(cfg, m, "compare") for m in ("pso", "ga", "sa")}
    rows = comparison_table(base.iae, campaigns, cfg.threshold)
    text, csv_text = format_table(rows)
    _write(cfg.out / "compare_table.txt", text)
    _write(cfg.out / "compare_table.csv", csv_text)
    for m, camp in campaigns.items():
        _write(cfg.out / f"compare_{m}_summary.txt", campaign_summary(camp, cfg))
        if cfg.trace:
            best = camp.best_report
            run_scenario(best.best_gains, cfg.scenario, trace=True).trace.to_csv(
                cfg.out / f"compare_{m}_{best.seed}_trace.csv")
    print(text, end="")
    return 0


COMMANDS = {"simulate": cmd_simulate, "optimize": cmd_optimize, "compare": cmd_compare}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gfm-smc",
        description="Simulate and tune the sliding-mode current loop of a grid-forming inverter.")
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--optimizer", choices=sorted(OPTIMIZERS))
    ap.add_argument("--seed", type=int, help="single seed (or first seed with --repetitions)")
    ap.add_argument("--seeds", help="comma-separated seed list")
    ap.add_argument("--repetitions", type=int)
    ap.add_argument("--scenario", help="key-value configuration file")
    ap.add_argument("--out", help="output directory (default: current directory)")
    ap.add_argument("--trace", action="store_true", default=None,
                    help="also write traces for compare runs")
    ap.add_argument("--threshold", type=float, help="convergence threshold on IAE (default 0.037)")
    ap.add_argument("--gains", help="kcd,kcq,ksat for simulate / the compare baseline")
    ap.add_argument("--jobs", type=int, help="parallel cost evaluations per iteration")
    ap.add_argument("--population", type=int, help="swarm/population size or SA moves per iteration")
    ap.add_argument("--iterations", type=int, help="iterations (generations) per run")
    ap.add_argument("--horizon", type=float, help="truncate the scenario to this horizon (s)")
    return ap


def config_from_args(args) -> RunConfig:
    if args.scenario:
        scenario, run = load_config(args.scenario)
    else:
        scenario, run = default_scenario(), {}

    def pick(name, conv=str, default=None):
        v = getattr(args, name, None)
        if v is not None:
            return v
        if name in run:
            try:
                return conv(run[name])
            except ValueError as exc:
                raise ConfigError(f"[run] {name}: {exc}") from exc
        return default

    if args.horizon is not None:
        scenario = scenario.with_horizon(args.horizon)
    seeds = _parse_seeds(args.seeds) if args.seeds else (
        _parse_seeds(run["seeds"]) if "seeds" in run else None)
    repetitions = pick("repetitions", int, None)
    first = pick("seed", int, None)
    if seeds is None and first is not None:
        seeds = list(range(first, first + (repetitions or 1)))
    if seeds is not None and repetitions is None:
        repetitions = len(seeds)
    gains = args.gains or run.get("gains")
    out = Path(pick("out", str, "."))
    cfg = RunConfig(
        mode=pick("mode", str, "simulate"),
        optimizer=pick("optimizer", str, "pso"),
        gains=_parse_gains(gains) if gains else None,
        scenario=scenario,
        repetitions=repetitions or 1,
        seeds=seeds,
        out=out,
        trace=bool(pick("trace", _parse_bool, False)),
        threshold=pick("threshold", float, 0.037),
        jobs=pick("jobs", int, 1),
        population=pick("population", int, None),
        iterations=pick("iterations", int, None),
    )
    if cfg.seeds is not None and len(cfg.seeds) != cfg.repetitions:
        raise ConfigError("number of seeds does not match repetitions")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        cfg.out.mkdir(parents=True, exist_ok=True)
        if not os.access(cfg.out, os.W_OK):
            raise ConfigError(f"output directory not writable: {cfg.out}")
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return COMMANDS[cfg.mode](cfg)


if __name__ == "__main__":
    sys.exit(main())

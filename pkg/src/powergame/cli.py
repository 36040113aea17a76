"""Batch experiment runner: scenario generation, games, simulations, oracles.

Every command writes CSV artifacts plus a plain-text manifest sufficient to
reproduce the run. Exit codes: 0 success, 1 verification failure, 2 usage
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .game import (
    GameParams,
    StrategyProfile,
    compute_price_table,
    run_multi_carrier_game,
    run_single_carrier_game,
    write_strategy_csv,
    write_trace_csv,
)
from .propagation import PropagationModel, build_attenuation_tensor, export_attenuation, import_attenuation
from .scenario import (
    InvalidConfig,
    PAPER_DEFAULT_CONFIG,
    ScenarioConfig,
    TimeOfDay,
    build_scenario,
    export_scenario,
    import_scenario,
    load_config,
    populate_ues,
)
from .simulate import MetricsReport, Policy, run_simulation, write_metrics_csv
from .verify import SUITES, write_verify_csv

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _write_manifest(out_dir: Path, command: str, argv: list[str], seed: int | None,
                    extra: dict | None = None) -> None:
    lines = [
        f"command: {command}",
        f"argv: {' '.join(argv)}",
        f"seed: {seed}",
        f"out_dir: {out_dir}",
        f"timestamp: {datetime.datetime.now(datetime.timezone.utc).isoformat()}",
        f"version: powergame {__version__}",
    ]
    for k, v in (extra or {}).items():
        lines.append(f"{k}: {v}")
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _game_params(args) -> GameParams:
    return GameParams(
        alpha=args.alpha,
        beta=args.beta,
        delta=args.delta,
        k=args.k,
        gamma_min=10.0 ** (args.gamma_min_db / 10.0),
        tie_tolerance=args.tie_tol,
        max_rounds=args.max_rounds,
    )


def _add_params_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=1.0, help="sigmoid steepness")
    p.add_argument("--beta", type=float, default=1.0, help="sigmoid center, linear SINR")
    p.add_argument("--delta", type=float, default=0.6, help="unserved-UE unit price")
    p.add_argument("--k", type=float, default=0.25, help="price weight in (0, 1/4]")
    p.add_argument("--gamma-min-db", type=float, default=-10.0, help="serving SINR threshold")
    p.add_argument("--tie-tol", type=float, default=1e-9, help="relative payoff tie tolerance")
    p.add_argument("--max-rounds", type=int, default=25)


def cmd_generate(args, argv: list[str]) -> int:
    out = Path(args.out)
    try:
        config = load_config(args.config) if args.config else PAPER_DEFAULT_CONFIG
    except FileNotFoundError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return EXIT_IO
    scenario = build_scenario(config, args.seed)
    scenario = populate_ues(scenario, TimeOfDay(args.time_of_day.capitalize()), args.seed + 1)
    tensor = build_attenuation_tensor(scenario, PropagationModel.default(), args.seed + 2)
    out.mkdir(parents=True, exist_ok=True)
    export_scenario(scenario, out)
    export_attenuation(tensor, scenario, out / "attenuation.csv")
    (out / "config_resolved.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    _write_manifest(out, "generate", argv, args.seed,
                    {"config": args.config or "<default>", "time_of_day": args.time_of_day})
    print(f"scenario written to {out}: {len(scenario.teams)} teams, "
          f"{len(scenario.locations)} locations, {len(scenario.tiles)} tiles")
    return EXIT_OK


def _load_scenario_dir(path: str):
    scenario = import_scenario(path)
    tensor = import_attenuation(Path(path) / "attenuation.csv", scenario)
    return scenario, tensor


def cmd_play(args, argv: list[str]) -> int:
    try:
        scenario, tensor = _load_scenario_dir(args.scenario)
    except FileNotFoundError as e:
        print(f"error: cannot read scenario: {e}", file=sys.stderr)
        return EXIT_IO
    params = _game_params(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.policy in ("min", "max"):
        profile = (StrategyProfile.min_power(scenario) if args.policy == "min"
                   else StrategyProfile.max_power(scenario))
        write_strategy_csv(profile, scenario, out / "strategy.csv")
        write_trace_csv([], out / "trace.csv")
        _write_manifest(out, "play", argv, args.seed, {"policy": args.policy, "converged": "n/a"})
        return EXIT_OK

    if args.carriers is not None:
        if not (1 <= args.carriers <= len(scenario.carriers)):
            print(f"error: --carriers must be in 1..{len(scenario.carriers)}", file=sys.stderr)
            return EXIT_USAGE
        order = scenario.carrier_order_desc_freq[: args.carriers]
        profile = StrategyProfile.zeros(scenario)
        prices = compute_price_table(scenario, tensor, params)
        served = np.zeros(len(scenario.tiles), dtype=bool)
        trace = []
        converged = True
        from .game import served_tiles

        for ci in order:
            sub = run_single_carrier_game(scenario, tensor, ci, params, prices=prices,
                                          base_profile=profile, prior_served=served.copy())
            profile = sub.profile
            served |= served_tiles(scenario, tensor, profile, params, ci)
            trace.extend(sub.trace)
            converged = converged and sub.converged
    else:
        outcome = run_multi_carrier_game(scenario, tensor, params)
        profile, trace, converged = outcome.profile, outcome.trace, outcome.converged

    write_strategy_csv(profile, scenario, out / "strategy.csv")
    write_trace_csv(trace, out / "trace.csv")
    _write_manifest(out, "play", argv, args.seed,
                    {"policy": "bps", "converged": str(converged).lower()})
    if not converged:
        print("warning: best-reply dynamics did not converge within max rounds", file=sys.stderr)
    return EXIT_OK


def _simulate_one(scenario, tensor, policy: str, args) -> MetricsReport:
    return run_simulation(
        scenario, tensor, Policy(policy), args.duration_s, args.seed,
        params=_game_params(args), update_period_ms=args.update_period_ms,
    )


def cmd_simulate(args, argv: list[str]) -> int:
    if args.duration_s <= 0:
        print("error: --duration-s must be > 0", file=sys.stderr)
        return EXIT_USAGE
    try:
        scenario, tensor = _load_scenario_dir(args.scenario)
    except FileNotFoundError as e:
        print(f"error: cannot read scenario: {e}", file=sys.stderr)
        return EXIT_IO
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = [_simulate_one(scenario, tensor, args.policy, args)]
    if args.compare:
        reports.append(_simulate_one(scenario, tensor, args.compare, args))
    write_metrics_csv(reports, out / "metrics.csv")
    if args.compare:
        _write_comparison(reports[0], reports[1], out / "comparison.csv")
    _write_manifest(out, "simulate", argv, args.seed,
                    {"policy": args.policy, "compare": args.compare or "",
                     "duration_s": args.duration_s})
    return EXIT_OK


def _write_comparison(a: MetricsReport, b: MetricsReport, path: Path) -> None:
    rows_a = {(m, k): v for _, _, m, k, v in a.rows()}
    rows_b = {(m, k): v for _, _, m, k, v in b.rows()}
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["metric", "poa_kind", a.policy.value, b.policy.value, "ratio"])
        for key in rows_a:
            va, vb = rows_a[key], rows_b.get(key, float("nan"))
            ratio = va / vb if vb not in (0.0,) and vb == vb else float("nan")
            w.writerow([key[0], key[1], "%.17g" % va, "%.17g" % vb, "%.6g" % ratio])


def cmd_compare(args, argv: list[str]) -> int:
    args.compare = args.baseline
    return cmd_simulate(args, argv)


def cmd_verify(args, argv: list[str]) -> int:
    suite_fn = SUITES.get(args.suite)
    if suite_fn is None:
        print(f"error: unknown suite '{args.suite}'; choose from {sorted(SUITES)}", file=sys.stderr)
        return EXIT_USAGE
    kwargs = {}
    if args.samples is not None:
        key = {"ne": "n_instances", "welfare": "n_instances",
               "closedform": "n_draws", "substitutes": "n_sweeps"}[args.suite]
        kwargs[key] = args.samples
    if args.seed is not None:
        kwargs["seed"] = args.seed
    result = suite_fn(**kwargs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_verify_csv(result, out / f"verify_{args.suite}.csv")
    _write_manifest(out, "verify", argv, args.seed, {"suite": args.suite, "ok": str(result.ok).lower()})
    for name, passed, detail in result.checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {args.suite}/{name}: {detail}")
    return EXIT_OK if result.ok else EXIT_VERIFY_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="powergame",
        description="Distributed downlink power setting games on two-tier networks",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="cap worker threads (numba kernels honor this)")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="build a scenario and its attenuation tensor")
    g.add_argument("--config", help="JSON/YAML scenario config (default: paper-scale)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--time-of-day", default="morning",
                   choices=["morning", "afternoon", "evening"])

    p = sub.add_parser("play", help="run the power-setting game on a scenario dir")
    p.add_argument("--scenario", required=True, help="directory written by generate")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--carriers", type=int, default=None,
                   help="restrict to the N highest-frequency carriers")
    p.add_argument("--policy", default="bps", choices=["bps", "min", "max"])
    _add_params_flags(p)

    s = sub.add_parser("simulate", help="traffic simulation under a power policy")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--policy", default="bps", choices=[p.value for p in Policy])
    s.add_argument("--compare", default=None, choices=[p.value for p in Policy],
                   help="also simulate a second policy and emit comparison.csv")
    s.add_argument("--duration-s", type=float, default=1.0)
    s.add_argument("--update-period-ms", type=int, default=100)
    _add_params_flags(s)

    c = sub.add_parser("compare", help="paired simulation of two policies")
    c.add_argument("--scenario", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--policy", default="bps", choices=[p.value for p in Policy])
    c.add_argument("--baseline", default="eicic", choices=[p.value for p in Policy])
    c.add_argument("--duration-s", type=float, default=1.0)
    c.add_argument("--update-period-ms", type=int, default=100)
    _add_params_flags(c)

    v = sub.add_parser("verify", help="run an oracle verification suite")
    v.add_argument("--suite", required=True)
    v.add_argument("--out", required=True)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--samples", type=int, default=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0,) else EXIT_OK
    if args.threads is not None and args.threads > 0:
        try:
            import numba

            numba.set_num_threads(max(1, args.threads))
        except ImportError:
            pass
    try:
        handler = {
            "generate": cmd_generate,
            "play": cmd_play,
            "simulate": cmd_simulate,
            "compare": cmd_compare,
            "verify": cmd_verify,
        }[args.command]
        return handler(args, argv)
    except InvalidConfig as e:
        print(f"error: invalid config: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from .config import PRESETS, RunConfig, Settings, configure_logging, load_run_config
from .errors import InstrumentSelectionError
from .harness import (
    FINITE_SAMPLE_DESIGNS,
    FINITE_SAMPLE_SEED,
    finite_sample_study,
    replicate_inputs,
    run_strategy,
    run_sweep,
)
from .norm import resolve_norm_estimate
from .report import aggregate, read_rounds, summary_frame, write_csv
from .scenario import Scenario, compute_similarities, generate_scenario
from .selection import Strategy
from .tracker import RunTracker

logger = logging.getLogger(__name__)


def _load(args: argparse.Namespace, env: Settings) -> RunConfig:
    path = args.config
    if path is None and env.config_path.exists():
        path = env.config_path
    overrides: Dict[str, Any] = {
        "base_seed": args.seed,
        "output_dir": args.out,
        "workers": args.workers,
        "noiseless": True if args.noiseless else None,
        "log_level": args.log_level,
    }
    overrides.update(getattr(args, "extra_overrides", lambda a: {})(args))
    return load_run_config(path, args.preset, env, overrides)


def _emit_json(data: Any, out: Optional[Path]) -> None:
    text = json.dumps(data, indent=2)
    if out is None:
        print(text)
        return
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"failed to write {out}: {exc}") from exc
    logger.info("[CLI] Wrote %s", out)


def cmd_generate(args: argparse.Namespace, config: RunConfig) -> int:
    params = config.scenario
    scenario = generate_scenario(params.n_iv, params.d_x, params.d_id, config.base_seed)
    if config.noiseless:
        scenario = scenario.without_confounding()
    _emit_json(scenario.to_dict(), args.out_file)
    return 0


def cmd_run(args: argparse.Namespace, config: RunConfig) -> int:
    seed = config.base_seed
    if args.scenario is not None:
        scenario = Scenario.load(args.scenario)
        if config.noiseless:
            scenario = scenario.without_confounding()
        sim = compute_similarities(scenario, config.similarity_noise_sd, seed)
        norm_est = resolve_norm_estimate(config.norm_provider, scenario, seed)
    else:
        scenario, sim, norm_est = replicate_inputs(config, seed)

    tracker = RunTracker() if args.events is not None else None
    trajectory = run_strategy(Strategy(args.strategy), scenario, sim, norm_est, config, seed, tracker=tracker)
    if tracker is not None:
        try:
            args.events.parent.mkdir(parents=True, exist_ok=True)
            args.events.write_text(tracker.export_session(), encoding="utf-8")
        except OSError as exc:
            raise OSError(f"failed to write {args.events}: {exc}") from exc
    _emit_json(trajectory.to_dict(), None)
    return 0


def cmd_sweep(args: argparse.Namespace, config: RunConfig) -> int:
    result = run_sweep(config)
    if result.failures:
        logger.error("[CLI] Sweep finished with %d failed run(s); see %s", len(result.failures),
                     config.output_dir / "failures.json")
        return 1
    logger.info("[CLI] Sweep finished: %d trajectories in %s", len(result.trajectories), config.output_dir)
    return 0


def cmd_finite_sample(args: argparse.Namespace, config: RunConfig) -> int:
    # the reference scenario unless --seed is given
    seed = FINITE_SAMPLE_SEED if args.seed is None else args.seed
    result = finite_sample_study(args.d_x, args.d_z, args.n, args.n_runs, seed,
                                 noiseless=config.noiseless, designs=args.designs)
    write_csv(result.frame(), config.output_dir / "finite_sample.csv")
    return 0


def cmd_report(args: argparse.Namespace, config: RunConfig) -> int:
    rounds_path = args.rounds or config.output_dir / "rounds.csv"
    report = aggregate(read_rounds(rounds_path))
    write_csv(summary_frame(report), config.output_dir / "summary.csv")
    return 0


def _sweep_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "n_runs": args.n_runs,
        "strategies": args.strategies,
    }


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML run configuration")
    common.add_argument("--preset", choices=sorted(PRESETS), default=None)
    common.add_argument("--seed", type=int, default=None, help="base seed")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--workers", type=int, default=None)
    common.add_argument("--noiseless", action="store_true", help="drop confounding (M = 0, v = 0)")
    common.add_argument("--log-level", default=None)

    parser = argparse.ArgumentParser(prog="iv-select", description="Sequential instrument selection experiments")
    sub = parser.add_subparsers(dest="cmd", required=True)

    pg = sub.add_parser("generate", parents=[common], help="emit a scenario as JSON")
    pg.add_argument("--out-file", type=Path, default=None, help="write here instead of stdout")
    pg.set_defaults(func=cmd_generate)

    pr = sub.add_parser("run", parents=[common], help="run one trajectory and print it as JSON")
    pr.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.SIS.value)
    pr.add_argument("--scenario", type=Path, default=None, help="scenario JSON from 'generate'")
    pr.add_argument("--events", type=Path, default=None, help="write the run's event log here")
    pr.set_defaults(func=cmd_run)

    ps = sub.add_parser("sweep", parents=[common], help="replicated strategy comparison")
    ps.add_argument("--n-runs", type=int, default=None)
    ps.add_argument("--strategies", nargs="+", choices=[s.value for s in Strategy], default=None)
    ps.set_defaults(func=cmd_sweep, extra_overrides=_sweep_overrides)

    pf = sub.add_parser("finite-sample", parents=[common], help="joint vs split experiments at finite n")
    pf.add_argument("--d-x", type=int, default=3)
    pf.add_argument("--d-z", type=int, default=3)
    pf.add_argument("--n", type=int, default=1000)
    pf.add_argument("--n-runs", type=int, default=500)
    pf.add_argument("--designs", nargs="+", choices=list(FINITE_SAMPLE_DESIGNS), default=list(FINITE_SAMPLE_DESIGNS))
    pf.set_defaults(func=cmd_finite_sample)

    pp = sub.add_parser("report", parents=[common], help="re-aggregate an existing rounds.csv")
    pp.add_argument("--rounds", type=Path, default=None, help="defaults to <out>/rounds.csv")
    pp.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit status."""
    args = build_parser().parse_args(argv)
    try:
        env = Settings()
        config = _load(args, env)
    except (InstrumentSelectionError, ValueError) as exc:
        configure_logging()
        logger.error("[CLI] %s", exc)
        return 1
    configure_logging(config.log_level)
    logger.debug("[CLI] %s with %s", args.cmd, config.model_dump(mode="json"))

    try:
        return args.func(args, config)
    except (InstrumentSelectionError, OSError) as exc:
        logger.error("[CLI] %s failed: %s", args.cmd, exc)
        return 1


def cli() -> None:
    sys.exit(main())


if __name__ == "__main__":
    cli()

"""Command-line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness as H
from .env import export_event_log, load_event_log, observation_positions, xi_from_log
from .errors import AsyncMPCError, ConfigError, InsufficientData
from .meta import acumen_train, run_episode
from .models import save_params

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out-dir", default=None, help="override the config output directory")
    p.add_argument("--parallel", type=int, default=1, help="episodes run concurrently")
    p.add_argument("--scale", type=float, default=1.0, help="shrink populations and iteration counts")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asyncmpc", description="Asynchronous MPC with neural-ODE models and meta-learned priors.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train-meta", help="meta-learn a prior")
    p.add_argument("config")
    _common(p)

    p = sub.add_parser("run-episode", help="run one episode and export its event log")
    p.add_argument("config")
    p.add_argument("--env", choices=("reference", "train", "test"), default="reference")
    _common(p)

    p = sub.add_parser("ablate", help="run an ablation suite")
    p.add_argument("suite", choices=H.SUITES)
    p.add_argument("config")
    _common(p)

    p = sub.add_parser("metrics", help="trajectory metrics of an exported event log")
    p.add_argument("eventlog")
    p.add_argument("--out", default=None, help="write JSON here instead of stdout")

    sub.add_parser("check", help="run the invariant and oracle self-tests")
    return parser


def _load(args) -> H.ExperimentConfig:
    cfg = H.load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, meta=replace(cfg.meta, seed=args.seed))
    if args.out_dir is not None:
        cfg = replace(cfg, output_dir=args.out_dir)
    if args.parallel < 1:
        raise ConfigError("--parallel", "must be >= 1")
    return H.apply_scale(cfg, args.scale)


def cmd_train_meta(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    H.dump_config(cfg, out / "config.yaml")
    theta0 = H.obtain_model(cfg, "node", out)
    res = acumen_train(theta0, cfg.meta, cfg.setup(), args.parallel, out)
    print(f"meta-training finished: {len(res.metrics)} iterations, best held-out success {res.best_test_solved}")
    return EXIT_OK


def cmd_run_episode(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    theta = H.obtain_model(cfg, cfg.model.kind, out)
    if args.env == "reference":
        env = H.reference_env(cfg.variant, cfg.wind_gain)
    else:
        from .env import sample_env

        env = sample_env(args.env, cfg.variant, np.random.default_rng([cfg.seed, 7]), wind_gain=cfg.wind_gain)
    rep = run_episode(theta, env, cfg.setup(), np.random.SeedSequence(cfg.seed))
    export_event_log(rep.events, out / "events.jsonl")
    save_params(rep.params, out / "adapted.npz")
    summary = {
        "outcome": rep.outcome,
        "applied_actions": rep.applied,
        "physics_steps": rep.physics_steps,
        "sim_time": rep.elapsed,
        "val_loss": rep.val_loss,
        "diagnostic": rep.diagnostic,
    }
    (out / "episode.json").write_text(json.dumps(summary) + "\n", encoding="utf-8")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _load(args)
    # scale already applied by _load
    result = H.run_ablation(args.suite, cfg, cfg.output_dir, args.parallel, 1.0)
    print(json.dumps({k: v for k, v in result.items() if k in ("suite", "ok", "error", "runs")}))
    return EXIT_OK if result["ok"] else EXIT_RUNTIME


def eventlog_metrics(events) -> dict:
    """Deterministic summary of an event log: path metrics and the last state estimate."""
    pos = observation_positions(events)
    m = H.traj_metrics(pos, applied=sum(e.kind == "act" and e.flag != "initial" for e in events))
    xi = xi_from_log(events)
    return {
        "observations": int(len(pos)),
        "applied_actions": m.applied,
        "length": m.length,
        "s_kappa": m.s_kappa,
        "last_time": float(events[-1].t),
        "last_state": [float(v) for v in xi[-1].as_array()] if xi else None,
    }


def cmd_metrics(args) -> int:
    try:
        events = load_event_log(args.eventlog)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(args.eventlog, f"cannot read event log: {exc}") from exc
    if not events:
        raise InsufficientData("event log is empty")
    text = json.dumps(eventlog_metrics(events), sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_check(args) -> int:
    from .selfcheck import run_checks

    return EXIT_OK if run_checks() else EXIT_RUNTIME


COMMANDS = {
    "train-meta": cmd_train_meta,
    "run-episode": cmd_run_episode,
    "ablate": cmd_ablate,
    "metrics": cmd_metrics,
    "check": cmd_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AsyncMPCError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``privrlhf <subcommand> [--config PATH] [--out DIR] ...``.

Exit codes: 0 on success, 1 when an invariant check fails, 2 on a bad config.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    SweepConfig,
    emit_outputs,
    footer_line,
    load_config,
    parse_seeds,
    run_offline_sweep,
    run_online_sweep,
    write_instance_file,
)
from .invariants import run_invariant_suite

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2


def _config(args, mode: str) -> SweepConfig:
    if args.config:
        cfg = load_config(args.config, mode=mode)
    elif mode in ("invariants", "gen-instance"):
        cfg = SweepConfig(mode=mode)
    else:
        raise ConfigError(f"{mode} sweeps need --config")
    changes = {}
    if args.seeds:
        changes["seeds"] = parse_seeds(args.seeds)
    if args.threads is not None:
        changes["threads"] = args.threads
    if args.out:
        changes["out_dir"] = args.out
    if getattr(args, "quick", False):
        changes["quick"] = True
    return cfg.replace(**changes) if changes else cfg


def cmd_gen_instance(cfg: SweepConfig) -> int:
    n = cfg.n_values[0] if cfg.n_values else None
    inst = cfg.instance.build(n=n, epsilon=cfg.epsilons[0])
    print(write_instance_file(inst, cfg.out_dir))
    return EXIT_OK


def cmd_offline(cfg: SweepConfig) -> int:
    summary = run_offline_sweep(cfg)
    for p in emit_outputs(summary, [], cfg.out_dir, cfg):
        print(p)
    for row in summary.slopes:
        print(f"epsilon={row['epsilon']:g} slope={row['slope']:.4f} (se {row['stderr']:.4f})")
    return EXIT_OK


def cmd_online(cfg: SweepConfig) -> int:
    summary, traces = run_online_sweep(cfg)
    written = emit_outputs(summary, traces, cfg.out_dir, cfg)
    print(f"wrote {len(written)} files to {cfg.out_dir}")
    for row in summary.checkpoints:
        print(f"T={row['T']} epsilon={row['epsilon']:g} t={row['t']} Reg/log t={row['regret_over_log_t']:.4f}")
    return EXIT_OK


def cmd_invariants(cfg: SweepConfig) -> int:
    report = run_invariant_suite(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = report.lines()
    (out / "invariants.txt").write_text("\n".join(lines) + "\n" + footer_line(cfg), encoding="utf-8")
    print("\n".join(lines))
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


COMMANDS = {
    "gen-instance": cmd_gen_instance,
    "offline-sweep": cmd_offline,
    "online-sweep": cmd_online,
    "invariants": cmd_invariants,
}
MODE_OF = {"gen-instance": "gen-instance", "offline-sweep": "offline", "online-sweep": "online",
           "invariants": "invariants"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privrlhf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with [instance] [privacy] [offline] [online] [sweep]")
        p.add_argument("--out", help="output directory (overrides [sweep] out)")
        p.add_argument("--seeds", help="inclusive range a..b or a comma list")
        p.add_argument("--threads", type=int, help="worker threads; outputs do not depend on it")
        if name == "invariants":
            p.add_argument("--quick", action="store_true", help="smaller replay counts")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args, MODE_OF[args.command])
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

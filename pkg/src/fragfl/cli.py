"""Command-line entry point: ``run``, ``commtime`` and ``attack-demo``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .adversary import AttackConfig
from .errors import FFLError
from .fedsim.commtime import FRAMEWORKS, CostModelInput, comm_time
from .fedsim.config import SimConfig, load_config
from .fedsim.simulation import run_simulation
from .privacy_probe import DEMO_METHODS, DEMO_SOURCES, attack_demo

CSV_HEADER = ("round", "TE", "all_acc", "src_acc", "asr")


def _flip(text: str) -> tuple[int, int]:
    try:
        src, tgt = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected SRC:TGT, e.g. 1:0") from None
    return src, tgt


def _percent(text: str) -> float:
    value = float(text)
    return value / 100.0 if value > 1 else value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fragfl", description="Fragmented federated learning simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a simulation and write a JSON report")
    run.add_argument("--config", type=Path, help="JSON or YAML file with SimConfig keys")
    run.add_argument("--defense", help="ffl, fedavg, median, trimmed_mean or multi_krum")
    run.add_argument("--attack", choices=("none", "gaussian", "label_flip"))
    run.add_argument("--strategy", type=int, choices=(1, 2, 3))
    run.add_argument("--sigma", type=float)
    run.add_argument("--flip", type=_flip, metavar="SRC:TGT")
    run.add_argument("--attackers", type=_percent, metavar="PCT", help="attacker share, e.g. 20 or 0.2")
    run.add_argument("--rounds", type=int, help="override T")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--out", type=Path, required=True, help="JSON report path")
    run.add_argument("--csv", type=Path, help="optional per-round metrics CSV")

    ct = sub.add_parser("commtime", help="per-round communication time of one framework")
    ct.add_argument("--framework", choices=FRAMEWORKS, required=True)
    ct.add_argument("--model-bits", type=float, required=True)
    ct.add_argument("--down", type=float, required=True, help="download speed, Mbit/s")
    ct.add_argument("--up", type=float, required=True, help="upload speed, Mbit/s")
    ct.add_argument("--latency", type=float, required=True, help="one-way latency, seconds")
    ct.add_argument("--participants", type=int, default=0, help="n for the BREA peer-to-peer term")
    ct.add_argument("--json", action="store_true", help="print all terms as JSON")

    demo = sub.add_parser("attack-demo", help="input reconstruction from FL vs FFL gradients")
    demo.add_argument("--method", choices=DEMO_METHODS, default="analytic")
    demo.add_argument("--source", choices=DEMO_SOURCES, help="gradient source; both when omitted")
    demo.add_argument("--seeds", type=int, default=20)
    demo.add_argument("--steps", type=int, default=500)
    return parser


def _sim_config(args: argparse.Namespace) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig()
    changes = {}
    if args.defense:
        changes["defense"] = args.defense
    if args.rounds is not None:
        changes["T"] = args.rounds
    if args.seed is not None:
        changes["seed"] = args.seed
    attack_given = any(v is not None for v in (args.attack, args.strategy, args.sigma, args.flip, args.attackers))
    if attack_given:
        if args.attack == "none":
            changes["attack"] = None
        else:
            base = cfg.attack or AttackConfig()
            upd = {}
            if args.attack:
                upd["kind"] = args.attack
            if args.strategy is not None:
                upd["strategy"] = args.strategy
            if args.sigma is not None:
                upd["sigma"] = args.sigma
            if args.flip is not None:
                upd["src"], upd["tgt"] = args.flip
                upd.setdefault("kind", "label_flip")
            if args.attackers is not None:
                upd["attacker_fraction"] = args.attackers
            changes["attack"] = AttackConfig(**{**base.to_dict(), **upd})
    return replace(cfg, **changes) if changes else cfg


def _write_csv(path: Path, rounds) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rounds:
            m = r.metrics
            w.writerow([r.round] + ["" if m[k] is None else repr(m[k]) for k in CSV_HEADER[1:]])


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _sim_config(args)
    report = run_simulation(cfg)
    args.out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    if args.csv:
        _write_csv(args.csv, report.rounds)
    final = report.final_metrics
    print(f"{cfg.T} rounds, defense={cfg.defense}: TE={final['TE']:.4f} all_acc={final['all_acc']:.4f}")
    return 0


def cmd_commtime(args: argparse.Namespace) -> int:
    inp = CostModelInput(args.model_bits, args.down, args.up, args.latency, args.participants, args.framework)
    t = comm_time(inp)
    if args.json:
        print(json.dumps(t.to_dict(), indent=2))
    else:
        print(f"{t.total_s:.4f}")
    return 0


def cmd_attack_demo(args: argparse.Namespace) -> int:
    sources = [args.source] if args.source else list(DEMO_SOURCES)
    print(f"{'method':<18} {'source':<6} {'rel_error':>10}")
    for source in sources:
        rows = attack_demo(args.method, source, range(args.seeds), steps=args.steps)
        err = float(np.median([r.rel_error for r in rows]))
        print(f"{args.method:<18} {source.upper():<6} {err:>10.4g}")
    return 0


COMMANDS = {"run": cmd_run, "commtime": cmd_commtime, "attack-demo": cmd_attack_demo}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (FFLError, ValueError) as exc:
        print(f"fragfl {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"fragfl {args.command}: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""
Command-line front end.

    modlearn train CONFIG [--seed N] [--outdir DIR] [--override PATH=VALUE]... [--force]
    modlearn validate CONFIG [--seed N] [--override PATH=VALUE]...
    modlearn print-monitor FILE [--channel NAME]...
    modlearn show-model CHECKPOINT_DIR

Exit status: 0 on success, 1 for configuration or input errors, 2 when
training fails at run time. Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, read_manifest
from .dsl import ConfigError, check, load_experiment
from .monitor import read_records

log = logging.getLogger("modlearn")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def default_outdir(config: str) -> str:
    env = os.environ.get("MODLEARN_OUTDIR")
    if env:
        return env
    stem = os.path.splitext(os.path.basename(config))[0]
    return os.path.join(os.getcwd(), f"{stem}-out")


def _load(args):
    spec = load_experiment(args.config, overrides=args.override or (),
                           seed=args.seed)
    check(spec)
    return spec


def cmd_validate(args) -> int:
    try:
        _load(args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _err(f"{args.config}: {exc.strerror or exc}")
        return EXIT_CONFIG
    print(f"{args.config}: ok")
    return EXIT_OK


def cmd_train(args) -> int:
    outdir = args.outdir or default_outdir(args.config)
    model_dir = os.path.join(outdir, "model")
    if os.path.exists(os.path.join(model_dir, "manifest.json")) and \
            not args.force:
        _err(f"{model_dir} already holds a checkpoint; use --force to "
             f"overwrite it")
        return EXIT_CONFIG
    try:
        spec = _load(args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _err(f"{args.config}: {exc.strerror or exc}")
        return EXIT_CONFIG
    harness = spec.root
    try:
        os.makedirs(outdir, exist_ok=True)
        harness.main_loop()
        harness.save(model_dir)
        harness.monitor.export(os.path.join(outdir, "monitor.csv"))
        harness.monitor.export(os.path.join(outdir, "monitor.jsonl"))
    except (ConfigError, ValueError, RuntimeError, OSError,
            FloatingPointError, NotImplementedError) as exc:
        _err(f"training failed: {type(exc).__name__}: {exc}")
        return EXIT_RUNTIME
    last = harness.monitor.records()[-1]
    summary = ", ".join(f"{k}={v:.6g}" for k, v in last.items()
                        if k != "epoch")
    print(f"trained {harness.epochs} epochs (seed {spec.seed}); {summary}")
    print(f"outputs written to {outdir}")
    return EXIT_OK


def format_table(rows: list[dict], columns: list[str]) -> str:
    """Right-aligned text table, one row per record."""
    cells = [["epoch"] + columns]
    for row in rows:
        cells.append([str(int(row["epoch"]))] +
                     [format(float(row[c]), ".10g") for c in columns])
    widths = [max(len(r[i]) for r in cells) for i in range(len(cells[0]))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths))
                     for r in cells)


def cmd_print_monitor(args) -> int:
    try:
        rows = read_records(args.path)
    except FileNotFoundError:
        _err(f"{args.path}: no such file")
        return EXIT_CONFIG
    except (OSError, ValueError, KeyError) as exc:
        _err(f"{args.path}: cannot read monitor records: {exc}")
        return EXIT_CONFIG
    if not rows:
        _err(f"{args.path}: no records")
        return EXIT_CONFIG
    available = [k for k in rows[0] if k != "epoch"]
    columns = available
    if args.channel:
        unknown = [c for c in args.channel if c not in available]
        if unknown:
            _err(f"unknown channel(s) {', '.join(unknown)}; available: "
                 f"{', '.join(available)}")
            return EXIT_CONFIG
        columns = args.channel
    print(format_table(rows, columns))
    return EXIT_OK


def _space_text(d):
    if d is None:
        return "none"
    if d.get("kind") == "conv2d":
        return (f"Conv2DSpace(rows={d['rows']}, cols={d['cols']}, "
                f"num_channels={d['num_channels']}, axes={d['axes']})")
    return f"VectorSpace(dim={d['dim']})"


def cmd_show_model(args) -> int:
    try:
        read_manifest(args.path)
        ckpt = load_checkpoint(args.path)
    except CheckpointError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    m = ckpt.manifest
    out = [f"kind: {m['kind']}",
           f"input space: {_space_text(m.get('input_space'))}",
           f"output space: {_space_text(m.get('output_space'))}"]
    layers = m["config"].get("layers")
    if layers is not None:
        out.append(f"layers: {len(layers)}")
        for spec in layers:
            out.append(f"  {spec.get('layer_name')}: {spec.get('kind')} "
                       f"dim={spec.get('dim')}")
    params = ckpt.model.get_params()
    out.append(f"parameters: {len(params)}")
    for entry in m["params"]:
        value = params[entry["name"]]
        shape = "x".join(str(s) for s in value.shape) or "scalar"
        out.append(f"  {entry['name']}: shape {shape}, "
                   f"norm {np.linalg.norm(value.ravel()):.17g}")
    if ckpt.averaged:
        out.append(f"averaged parameters: {', '.join(sorted(ckpt.averaged))}")
    seeds = m.get("seeds", {})
    out.append("seeds: " + ", ".join(f"{k}={v}" for k, v in
                                     sorted(seeds.items())))
    print("\n".join(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="modlearn",
                     description="Train and inspect models from experiment "
                                 "files.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def add_config_args(p):
        p.add_argument("config", help="experiment file (.yaml)")
        p.add_argument("--seed", type=int, default=None,
                       help="root seed, overriding the file's seed")
        p.add_argument("--override", action="append", metavar="PATH=VALUE",
                       help="set a config value, e.g. "
                            "algorithm.learning_rate=0.01 (repeatable)")

    p = sub.add_parser("train", help="run an experiment")
    add_config_args(p)
    p.add_argument("--outdir", default=None,
                   help="output directory (default: $MODLEARN_OUTDIR or "
                        "./<config>-out)")
    p.add_argument("--force", action="store_true",
                   help="overwrite an existing checkpoint in the outdir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("validate", help="check an experiment without "
                                        "training")
    add_config_args(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("print-monitor", help="print monitor records")
    p.add_argument("path", help="monitor.csv or monitor.jsonl")
    p.add_argument("--channel", action="append",
                   help="only show this channel (repeatable)")
    p.set_defaults(func=cmd_print_monitor)

    p = sub.add_parser("show-model", help="summarize a checkpoint")
    p.add_argument("path", help="checkpoint directory")
    p.set_defaults(func=cmd_show_model)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else
                        logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        # output piped into e.g. `head`; not an error
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Settings resolve as: built-in defaults, then the ``--config`` JSON file
(flat object keyed by flag names), then flags given on the command line.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import datagen, metrics
from .collab import COLLABORATIVE, CENTRALIZED, TrainConfig, evaluate_model, train_centralized, train_collaborative
from .errors import DataError, InvalidClass, InvalidSpec, NotFound
from .evmdecode import TABLE_VERSION, decode_bytecode, format_listing
from .imaging import encode_transactions, export_pgm, preprocess_transaction
from .ingest import (
    FixtureStream,
    FixtureTransport,
    HttpTransport,
    RpcEndpoint,
    fetch_transaction_record,
    run_pipeline,
    throughput,
    write_monitor_csv,
)
from .modelfile import load_model, save_model
from .nn import predict_indices
from .txcore import Dataset, Transaction, concat_datasets, load_dataset, parse_hex, partition_equal, save_dataset, split_dataset

log = logging.getLogger("cocnn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

GLOBAL_OPTIONS = [
    # flag, type, default, help
    ("--seed", int, 0, "master random seed"),
]

# per subcommand: (flag, type | "flag" | choices tuple, default, help)
COMMANDS = {
    "gen": ("generate a synthetic labeled dataset", [
        ("--total", int, 10000, "number of transactions"),
        ("--out", str, "dataset.jsonl", "output dataset file"),
        ("--proportions", str, None, "JSON file mapping class name to proportion"),
        ("--plain-share", float, 0.75, "share of Normal samples that are plain transfers"),
        ("--rate", float, 200.0, "mean arrival rate in transactions per second"),
    ]),
    "train": ("train a centralized or collaborative model", [
        ("--data", str, "dataset.jsonl", "labeled dataset file"),
        ("--out", str, "model", "output directory for model files and round log"),
        ("--mode", ("centralized", "collab"), "collab", "training scheme"),
        ("--nodes", int, 3, "number of mining nodes (collab mode)"),
        ("--iters", int, 1000, "training iterations"),
        ("--batch", int, 32, "mini-batch size per node"),
        ("--lr", float, 0.001, "Adam learning rate"),
        ("--test-fraction", float, 0.2, "held-out share of each node's data"),
        ("--eval-every", int, 100, "evaluate test accuracy every N iterations (0 = never)"),
        ("--aggregate", ("gradients", "params"), "gradients", "what nodes average each round"),
        ("--workers", int, 1, "threads for per-node gradient computation"),
        ("--no-value", "flag", False, "bytecode-only images (drop the value row)"),
    ]),
    "eval": ("evaluate a model file on a labeled dataset", [
        ("--model", str, "model/model_node1.json", "model file"),
        ("--data", str, "dataset.jsonl", "labeled dataset file"),
        ("--out-dir", str, ".", "directory for metrics.json and confusion.csv"),
        ("--no-value", "flag", False, "bytecode-only images (drop the value row)"),
    ]),
    "stream": ("replay a timestamped dataset through windowed detection", [
        ("--model", str, "model/model_node1.json", "model file"),
        ("--data", str, "dataset.jsonl", "timestamped dataset file"),
        ("--window-ms", int, 3000, "window length in milliseconds"),
        ("--queue", int, 4, "bounded queue length between acquisition and detection"),
        ("--out", str, "-", "monitoring CSV path ('-' for stdout)"),
        ("--no-value", "flag", False, "bytecode-only images (drop the value row)"),
    ]),
    "decode": ("disassemble EVM bytecode", [
        ("bytecode", "positional", None, "0x-prefixed hex bytecode"),
    ]),
    "encode": ("encode one transaction as a PGM grey image", [
        ("bytecode", "positional", None, "0x-prefixed hex bytecode"),
        ("--value", str, "0", "value in wei (decimal)"),
        ("--out", str, "image.pgm", "output PGM file"),
        ("--no-value", "flag", False, "bytecode-only images (drop the value row)"),
    ]),
    "fetch": ("fetch transactions by hash over JSON-RPC", [
        ("hashes", "positional*", None, "transaction hashes"),
        ("--url", str, "http://127.0.0.1:8545", "node JSON-RPC endpoint"),
        ("--fixture", str, None, "replay recorded request/response pairs instead of HTTP"),
        ("--timeout-ms", int, 5000, "request timeout"),
        ("--retries", int, 2, "retries after a transport failure"),
        ("--out", str, "-", "output dataset file ('-' for stdout)"),
    ]),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _dest(flag: str) -> str:
    return flag.lstrip("-").replace("-", "_")


def _add_option(parser, flag, kind, default, help_text):
    if kind == "positional":
        parser.add_argument(flag, help=help_text)
    elif kind == "positional*":
        parser.add_argument(flag, nargs="*", help=help_text)
    elif kind == "flag":
        parser.add_argument(flag, action="store_true", default=argparse.SUPPRESS,
                            help=f"{help_text} (default: {default})")
    elif isinstance(kind, tuple):
        parser.add_argument(flag, choices=kind, default=argparse.SUPPRESS,
                            help=f"{help_text} (default: {default})")
    else:
        parser.add_argument(flag, type=kind, default=argparse.SUPPRESS,
                            help=f"{help_text} (default: {default})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cocnn", description="Blockchain transaction attack detection toolkit.")
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file (default: none)")
    common.add_argument("--print-config", action="store_true", default=argparse.SUPPRESS,
                        help="print the effective configuration and exit (default: False)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log progress to stderr (default: False)")
    for flag, kind, default, help_text in GLOBAL_OPTIONS:
        _add_option(common, flag, kind, default, help_text)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (help_text, options) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text, parents=[common])
        for opt in options:
            _add_option(p, *opt)
    return parser


def defaults_for(command: str) -> dict:
    out = {_dest(f): d for f, _, d, _ in GLOBAL_OPTIONS}
    for flag, _, default, _ in COMMANDS[command][1]:
        out[_dest(flag)] = default
    out["verbose"] = False
    return out


def load_config_file(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path}: {exc}") from exc
    if not isinstance(doc, dict) or any(isinstance(v, (dict, list)) for v in doc.values()):
        raise DataError(f"config {path} must be a flat JSON object")
    return {_dest(k): v for k, v in doc.items()}


def _coerce(command: str, key: str, value):
    """Apply the flag's type to a value read from a config file."""
    for flag, kind, _, _ in GLOBAL_OPTIONS + COMMANDS[command][1]:
        if _dest(flag) != key or value is None:
            continue
        if kind == "flag":
            if not isinstance(value, bool):
                raise UsageError(f"config key {key!r} must be true or false")
            return value
        if isinstance(kind, tuple):
            if value not in kind:
                raise UsageError(f"config key {key!r} must be one of {list(kind)}")
            return value
        if kind in (int, float, str):
            if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
                raise UsageError(f"config key {key!r} must be an integer")
            if kind is float and (isinstance(value, bool) or not isinstance(value, (int, float))):
                raise UsageError(f"config key {key!r} must be a number")
            return kind(value)
    if key == "verbose" and not isinstance(value, bool):
        raise UsageError("config key 'verbose' must be true or false")
    return value


def resolve_config(command: str, ns: argparse.Namespace) -> dict:
    given = dict(vars(ns))
    given.pop("command", None)
    cfg = defaults_for(command)
    config_path = given.pop("config", None)
    given.pop("print_config", None)
    if config_path:
        file_cfg = load_config_file(config_path)
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update({k: _coerce(command, k, v) for k, v in file_cfg.items()})
    cfg.update(given)
    return cfg


# ---------------------------------------------------------------- commands


def cmd_gen(cfg):
    proportions = dict(datagen.DEFAULT_PROPORTIONS)
    if cfg["proportions"]:
        proportions = json.loads(Path(cfg["proportions"]).read_text(encoding="utf-8"))
    spec = datagen.GenSpec(total=cfg["total"], proportions=proportions, seed=cfg["seed"],
                           plain_transfer_share=cfg["plain_share"], arrival_rate_per_s=cfg["rate"])
    d = datagen.write_generated(spec, cfg["out"])
    log.info("wrote %d transactions to %s", len(d), cfg["out"])


def _node_splits(d: Dataset, cfg, nodes: int):
    parts = partition_equal(d, nodes, cfg["seed"])
    return [split_dataset(p, cfg["test_fraction"], cfg["seed"] + 1 + k) for k, p in enumerate(parts)]


def cmd_train(cfg):
    data = load_dataset(cfg["data"])
    with_value = not cfg["no_value"]
    collab = cfg["mode"] == "collab"
    nodes = cfg["nodes"] if collab else 1
    try:
        tc = TrainConfig(iterations=cfg["iters"], batch_size=cfg["batch"],
                         mode=COLLABORATIVE if collab else CENTRALIZED, nodes=nodes,
                         with_value=with_value, seed=cfg["seed"], lr=cfg["lr"],
                         aggregate=cfg["aggregate"], eval_every=cfg["eval_every"], workers=cfg["workers"])
    except ValueError as exc:
        raise UsageError(f"train: {exc}") from exc
    if not 0.0 <= cfg["test_fraction"] < 1.0:
        raise UsageError("train: --test-fraction must lie in [0, 1)")
    splits = _node_splits(data, cfg, nodes)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if collab:
        models, roundlog = train_collaborative([s[0] for s in splits], tc, tests=[s[1] for s in splits])
    else:
        model, roundlog = train_centralized(splits[0][0], tc, test=splits[0][1])
        models = [model]
    elapsed = time.perf_counter() - t0

    summary = {"mode": cfg["mode"], "nodes": nodes, "with_value": with_value,
               "iterations": cfg["iters"], "train_seconds": elapsed, "nodes_metrics": {}}
    for k, (model, (_, test)) in enumerate(zip(models, splits), start=1):
        save_model(model, out / f"model_node{k}.json", seed=cfg["seed"],
                   extra={"with_value": with_value, "node": k})
        if len(test):
            rep = evaluate_model(model, test, with_value)
            summary["nodes_metrics"][f"node{k}"] = rep.to_record()
            log.info("node %d test accuracy %.4f", k, rep.accuracy)
    tests = [s[1] for s in splits if len(s[1])]
    if tests:
        summary["pooled_test"] = evaluate_model(models[0], concat_datasets(tests), with_value).to_record()
    roundlog.write_csv(out / "roundlog.csv")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({"models": [str(out / f"model_node{k}.json") for k in range(1, len(models) + 1)],
                      "train_seconds": round(elapsed, 3),
                      "pooled_test_accuracy": summary.get("pooled_test", {}).get("accuracy")}))


def _load_model_checked(path, with_value):
    params, _, doc = load_model(path)
    if "with_value" in doc and bool(doc["with_value"]) != with_value:
        raise DataError(f"{path} was trained with with_value={doc['with_value']}; pass matching --no-value")
    return params


def cmd_eval(cfg):
    with_value = not cfg["no_value"]
    params = _load_model_checked(cfg["model"], with_value)
    data = load_dataset(cfg["data"])
    pred = predict_indices(params, encode_transactions(data, with_value))
    cm = metrics.confusion_from_arrays(data.labels, pred)
    rep = metrics.report(cm)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    record = rep.to_record()
    (out / "metrics.json").write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    (out / "confusion.csv").write_text(cm.to_csv(), encoding="utf-8")
    print(json.dumps(record))
    print(rep.render_table(), file=sys.stderr)


def cmd_stream(cfg):
    with_value = not cfg["no_value"]
    params = _load_model_checked(cfg["model"], with_value)
    stream = FixtureStream.load(cfg["data"])
    records = run_pipeline(stream, params, with_value, cfg["window_ms"], cfg["queue"])
    write_monitor_csv(records, sys.stdout if cfg["out"] == "-" else cfg["out"])
    rate = throughput(records)
    missed = sum(r.deadline_missed for r in records)
    print(f"windows={len(records)} transactions={len(stream)} "
          f"throughput_tx_per_s={rate if rate is None else round(rate, 1)} deadline_misses={missed}",
          file=sys.stderr)


def cmd_decode(cfg):
    if cfg["bytecode"] is None:
        raise UsageError("decode: bytecode argument is required")
    seq = decode_bytecode(_hex_arg(cfg["bytecode"]))
    if len(seq):
        print(format_listing(seq))
    log.info("%d instructions, %d bytes, table %s", len(seq), seq.source_len, TABLE_VERSION)


def _hex_arg(text):
    try:
        return parse_hex(text)
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def cmd_encode(cfg):
    if cfg["bytecode"] is None:
        raise UsageError("encode: bytecode argument is required")
    value = cfg["value"]
    if not (isinstance(value, int) or (str(value).isascii() and str(value).isdigit())):
        raise DataError(f"--value must be a decimal integer, got {value!r}")
    try:
        tx = Transaction(hash=None, bytecode=_hex_arg(cfg["bytecode"]), value=int(value))
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    img = preprocess_transaction(tx, with_value=not cfg["no_value"])
    export_pgm(img, cfg["out"])
    log.info("wrote %dx%d %s image to %s", img.rows, img.cols, img.mode.name, cfg["out"])


def cmd_fetch(cfg):
    if not cfg["hashes"]:
        raise UsageError("fetch: at least one transaction hash is required")
    ep = RpcEndpoint(cfg["url"], cfg["timeout_ms"], cfg["retries"])
    transport = FixtureTransport(cfg["fixture"]) if cfg["fixture"] else HttpTransport(ep.url)
    lines = []
    for h in cfg["hashes"]:
        try:
            rec = fetch_transaction_record(ep, h, transport)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        tx = Transaction(rec["hash"], rec["bytecode"], rec["value"])
        record = tx.to_record()
        record["from"], record["to"] = rec["from"], rec["to"]
        lines.append(json.dumps(record, separators=(",", ":")))
    text = "\n".join(lines) + "\n"
    if cfg["out"] == "-":
        sys.stdout.write(text)
    else:
        Path(cfg["out"]).write_text(text, encoding="utf-8")


HANDLERS = {
    "gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "stream": cmd_stream,
    "decode": cmd_decode, "encode": cmd_encode, "fetch": cmd_fetch,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if not ns.command:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        print_config = getattr(ns, "print_config", False)
        cfg = resolve_config(ns.command, ns)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE

    logging.basicConfig(level=logging.INFO if cfg.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if print_config:
        print(json.dumps({"command": ns.command, **cfg}, indent=2, sort_keys=True))
        return EXIT_OK
    try:
        HANDLERS[ns.command](cfg)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, InvalidSpec, InvalidClass, NotFound, FileNotFoundError, IsADirectoryError,
            UnicodeDecodeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

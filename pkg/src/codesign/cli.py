"""Command-line entry point.

Every command except ``worker`` and ``serve`` goes through a client: in-process by
default, or HTTP when ``--server`` points at a running ``codesign serve``.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
import uuid
from pathlib import Path
from typing import List, Optional

import yaml

from .service import schemas as S
from .service.client import HttpClient, LocalClient
from .service.core import EXIT_CODES, ServiceError

logger = logging.getLogger("codesign")

EXIT_OK, EXIT_CONFIG, EXIT_WORKER, EXIT_DATA = 0, EXIT_CODES["config"], EXIT_CODES["worker"], EXIT_CODES["data"]


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _client(args):
    return HttpClient(args.server) if args.server else LocalClient()


def _read_config(args) -> dict:
    if not args.config:
        raise CliError(EXIT_CONFIG, "search needs --config PATH")
    try:
        data = yaml.safe_load(Path(args.config).read_text())
    except (OSError, yaml.YAMLError) as e:
        raise CliError(EXIT_CONFIG, f"cannot read config {args.config}: {e}") from None
    if not isinstance(data, dict):
        raise CliError(EXIT_CONFIG, f"config {args.config} is not a mapping")
    if args.server is None and "dataset" in data and data["dataset"].get("path"):
        # relative dataset paths are relative to the config file
        p = Path(data["dataset"]["path"])
        if not p.is_absolute() and not p.exists():
            data["dataset"]["path"] = str(Path(args.config).parent / p)
    return data


# -- commands -------------------------------------------------------------------

def cmd_search(args) -> int:
    data = _read_config(args)
    if args.steps is not None:
        data.setdefault("evolution", {})["steps"] = args.steps
    req = S.SearchRequest(config=data, out_dir=args.out_dir, seed=args.seed, parallelism=args.parallelism)
    s = _client(args).search(req)
    print(f"run {s.run_id}: {s.models_evaluated} models evaluated ({s.failed} failed, {s.cache_hits} cache hits), "
          f"avg {s.avg_eval_s:.4g} s, total {s.total_eval_s:.4g} s")
    print(f"front: {s.front_size} point(s)")
    for name in ("log", "pareto", "stats", "report"):
        print(f"{name:>7}: {getattr(s, name)}")
    return EXIT_OK


def _fmt_model(r: S.ModelResponse) -> str:
    t = r.target
    lines = [
        f"genome      {r.genome}",
        f"grid        {r.grid}  on {t.name} ({t.dsp_count} DSP, {t.sram_blocks} SRAM blocks, "
        f"{t.clock_hz / 1e6:g} MHz)",
        f"roofline    {r.device_roofline_gops:.1f} GFLOP/s",
        f"grid peak   {r.grid_peak_gops:.1f} GFLOP/s",
        f"bandwidth   {r.bandwidth_available_bytes_per_s / 1e9:.1f} GB/s available ({t.ddr_banks} bank(s)), "
        f"{r.bandwidth_needed_bytes_per_s / 1e9:.2f} GB/s needed" + ("  [bandwidth bound]" if r.bandwidth_bound else ""),
        f"potential   {r.potential_gops:.3f} GFLOP/s",
        f"effective   {r.effective_gops:.3f} GFLOP/s",
        f"efficiency  {r.efficiency:.4f}",
        f"throughput  {r.outputs_per_s:.6g} outputs/s  ({r.inputs} inputs, batch {r.batch}, {r.batches} batches)",
        f"latency     {r.latency_s:.6g} s per batch",
        f"total time  {r.total_time_s:.6g} s",
        f"flops       {r.total_ops:.6g}",
        "",
        f"{'layer':>5} {'m':>6} {'k':>6} {'n':>6} {'tiles':>7} {'cycles':>10} {'bw ratio':>9} {'GFLOP/s pot':>12}",
    ]
    for i, l in enumerate(r.per_layer):
        lines.append(f"{i:>5} {l.m:>6} {l.k:>6} {l.n:>6} {l.tiles:>7} {l.cycles:>10} {l.bandwidth_ratio:>9.4f} "
                     f"{l.potential_gops:>12.3f}")
    return "\n".join(lines)


def cmd_model(args) -> int:
    req = S.ModelRequest(genome=args.genome, grid=args.grid, target=args.target, batch=args.batch,
                         inputs=args.inputs, ddr_banks=args.ddr_banks,
                         clock_hz=args.clock_mhz * 1e6 if args.clock_mhz else None)
    r = _client(args).model(req)
    record = r.model_dump(mode="json")
    if args.json:
        print(json.dumps(record, sort_keys=True))
    else:
        print(_fmt_model(r))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "model.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_pareto(args) -> int:
    out = args.out or (str(Path(args.out_dir) / "pareto.csv") if args.out_dir else None)
    r = _client(args).pareto(S.LogRequest(log=args.log, out=out, target=args.target))
    if r.warning:
        logger.warning(r.warning)
    if out:
        print(f"{len(r.rows)} front point(s) from {r.evaluations} evaluations -> {out}")
    else:
        import csv

        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(r.header or ["candidate"])
        w.writerows(r.rows)
    return EXIT_OK


def cmd_report(args) -> int:
    out = args.out or str(Path(args.out_dir or Path(args.log).parent) / "report.csv")
    r = _client(args).report(S.LogRequest(log=args.log, out=out, target=args.target))
    print(f"{r.rows} evaluation row(s), {r.failed} failed -> {r.path}")
    return EXIT_OK


def cmd_gen_config(args) -> int:
    template = None
    if args.template:
        try:
            template = yaml.safe_load(Path(args.template).read_text())
        except (OSError, yaml.YAMLError) as e:
            raise CliError(EXIT_CONFIG, f"cannot read template {args.template}: {e}") from None
    label = args.label_column
    if label is not None and label.lstrip("-").isdigit():
        label = int(label)
    r = _client(args).gen_config(S.GenerateConfigRequest(dataset=args.dataset, template=template, label_column=label,
                                                         has_header=False if args.no_header else None))
    dest = args.output or args.config
    if dest:
        Path(dest).write_text(r.yaml)
        print(f"wrote {dest} (input_size={r.input_size}, output_size={r.output_size}, dataset={r.dataset_name})")
    else:
        sys.stdout.write(r.yaml)
    return EXIT_OK


def cmd_worker(args) -> int:
    from .config import ConfigError, load_config
    from .dataset import DataError, load_csv
    from .hw.target import load_catalog
    from .workers import HardwareDbWorker, PhysicalWorker, SimulationWorker
    from .workers.transport import parse_address, run_worker

    wid = args.id or f"{args.kind}-{uuid.uuid4().hex[:6]}"
    if args.kind == "simulation":
        datasets = {}
        try:
            if args.config:
                cfg = load_config(args.config)
                if cfg.dataset.path:
                    ds = load_csv(cfg.dataset.path, cfg.dataset.label_column, cfg.dataset.has_header,
                                  cfg.dataset.name)
                    datasets[ds.name] = ds
            for path in args.dataset or []:
                ds = load_csv(path, args.label_column if args.label_column is not None else -1)
                datasets[ds.name] = ds
        except ConfigError as e:
            raise CliError(EXIT_CONFIG, str(e)) from None
        except DataError as e:
            raise CliError(EXIT_DATA, str(e)) from None
        if not datasets:
            raise CliError(EXIT_CONFIG, "a simulation worker needs --dataset CSV or --config with dataset.path")
        worker = SimulationWorker(wid, datasets, slots=args.slots)
    elif args.kind == "hardware_db":
        worker = HardwareDbWorker(wid, load_catalog(), slots=args.slots)
    else:
        worker = PhysicalWorker(wid, slots=args.slots)

    stop = threading.Event()
    try:
        server = run_worker(worker, parse_address(args.master), parse_address(args.listen), stop)
    except (OSError, RuntimeError) as e:
        raise CliError(EXIT_WORKER, f"cannot start worker: {e}") from None
    print(f"{worker.kind} worker {wid} serving on {server.address[0]}:{server.address[1]}", flush=True)
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    try:
        while not stop.wait(0.5):
            pass
    except KeyboardInterrupt:
        stop.set()
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def cmd_targets(args) -> int:
    for t in _client(args).targets():
        print(f"{t.name:<12} {t.dsp_count:>6} DSP {t.sram_blocks:>6} blocks {t.clock_hz / 1e6:>6g} MHz "
              f"{t.ddr_banks} bank(s) {t.bandwidth_bytes_per_s / 1e9:.1f} GB/s  roofline {t.roofline_gops:.1f} GFLOP/s")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # Subcommands repeat the global flags with suppressed defaults so "codesign --seed 1 search" and
    # "codesign search --seed 1" both work without the subparser clobbering the top-level value.
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=d(None), help="run configuration (YAML)")
    common.add_argument("--seed", type=int, default=d(None), help="override evolution.seed")
    common.add_argument("--parallelism", type=int, default=d(None), help="override evolution.parallelism")
    common.add_argument("--out-dir", default=d(None), help="output directory")
    common.add_argument("--server", default=d(None),
                        help="base URL of a running 'codesign serve'; default runs in-process")
    common.add_argument("-v", "--verbose", action="count", default=d(0))
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    p = argparse.ArgumentParser(prog="codesign", parents=[_global_flags(suppress=False)],
                                description="Co-design search over MLPs and systolic-array grids.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("search", parents=[common], help="run an evolutionary search from --config")
    s.add_argument("--steps", type=int, help="override evolution.steps")
    s.set_defaults(fn=cmd_search)

    m = sub.add_parser("model", parents=[common], help="evaluate one genome on one grid with the performance model")
    m.add_argument("genome", help="IN:HIDDEN:OUT, e.g. 784:64/relu,32/tanh:10")
    m.add_argument("grid", help="RxCxV or RxCxVxIRxIC")
    m.add_argument("--target", default="arria10")
    m.add_argument("--batch", type=int, default=1)
    m.add_argument("--inputs", type=int, default=10000)
    m.add_argument("--ddr-banks", type=int)
    m.add_argument("--clock-mhz", type=float)
    m.add_argument("--json", action="store_true", help="print the structured record instead of the table")
    m.set_defaults(fn=cmd_model)

    pa = sub.add_parser("pareto", parents=[common], help="recompute the Pareto front from a results log")
    pa.add_argument("log")
    pa.add_argument("--out", help="CSV path (default: <out-dir>/pareto.csv, or stdout)")
    pa.add_argument("--target", help="label for hardware columns (default: from the log header)")
    pa.set_defaults(fn=cmd_pareto)

    r = sub.add_parser("report", parents=[common], help="write plot-ready scatter CSV from a results log")
    r.add_argument("log")
    r.add_argument("--out", help="CSV path (default: <out-dir or log dir>/report.csv)")
    r.add_argument("--target")
    r.set_defaults(fn=cmd_report)

    g = sub.add_parser("gen-config", parents=[common], help="fill a config template from a dataset")
    g.add_argument("dataset")
    g.add_argument("--template")
    g.add_argument("--label-column")
    g.add_argument("--no-header", action="store_true")
    g.add_argument("-o", "--output", help="write here (default: --config path, or stdout)")
    g.set_defaults(fn=cmd_gen_config)

    w = sub.add_parser("worker", parents=[common], help="run a standalone worker that registers with a master")
    w.add_argument("--kind", required=True, choices=["simulation", "hardware_db", "physical"])
    w.add_argument("--master", required=True, help="HOST:PORT of the master")
    w.add_argument("--listen", default="127.0.0.1:0", help="HOST:PORT to serve on")
    w.add_argument("--dataset", action="append", help="CSV served by a simulation worker (repeatable)")
    w.add_argument("--label-column")
    w.add_argument("--id")
    w.add_argument("--slots", type=int, default=1)
    w.set_defaults(fn=cmd_worker)

    sv = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    sv.set_defaults(fn=cmd_serve)

    t = sub.add_parser("targets", parents=[common], help="list hardware presets")
    t.set_defaults(fn=cmd_targets)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except ServiceError as e:
        print(f"error ({e.kind}): {e.message}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())

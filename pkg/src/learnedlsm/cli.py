"""Command-line entry point: load, run, bench, stats, dump-model."""

from __future__ import annotations

import argparse
import os
import shutil
import sys
from time import perf_counter
from typing import Optional, Sequence

from .bench.datasets import DATASET_KINDS, DatasetSpec, gen_dataset, load_order
from .bench.runner import format_file_stats, load_keys, report_file_stats, run_workload
from .bench.workloads import DISTRIBUTIONS, WorkloadSpec
from .engine import MANIFEST_NAME, STATS_NAME, Options, Store
from .errors import CorruptionError, StoreError
from .keys import decode_key
from .learner import CBA_MODES, LEARNING_MODES, LEVEL, OFF
from .manifest import manifest_replay
from .plr import deserialize_model
from .sstable import model_path

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
WRITE_HEAVY = 0.5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _nonneg_float(s: str) -> float:
    v = float(s)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _fraction(s: str) -> float:
    v = float(s)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("must be in [0, 1]")
    return v


def _pos_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="learnedlsm", description="LSM key-value store with learned per-file indexes.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def engine_flags(sp):
        sp.add_argument("--delta", type=_pos_int, default=8, help="model error bound in records")
        sp.add_argument("--t-wait-ms", type=_nonneg_float, default=50.0, help="wait before considering a new file")
        sp.add_argument("--cba-mode", choices=CBA_MODES, default="cba")
        sp.add_argument("--learning-mode", choices=LEARNING_MODES, default="file")
        sp.add_argument("--level-size-divisor", type=float, default=1.0, help="shrink level size limits by this factor")
        sp.add_argument("--cost-per-point", type=float, default=None, help="training seconds per record (calibrated if omitted)")
        sp.add_argument("--background", action="store_true", help="run compaction and learning on background threads")

    def dataset_flags(sp):
        sp.add_argument("--dataset", choices=DATASET_KINDS, default="linear")
        sp.add_argument("--n", type=_pos_int, default=100_000)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--order", choices=("seq", "random"), default="seq")
        sp.add_argument("--dataset-file", default=None, help="input for --dataset from_file")

    def workload_flags(sp, seed: bool):
        sp.add_argument("--ops", type=_nonneg_int, default=100_000)
        sp.add_argument("--write-frac", type=_fraction, default=0.0)
        sp.add_argument("--dist", choices=DISTRIBUTIONS, default="uniform")
        sp.add_argument("--workload-seed", type=int, default=None, help="defaults to --seed")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("load", help="create a store and bulk-load a dataset")
    sp.add_argument("--store", required=True)
    sp.add_argument("--force", action="store_true", help="replace an existing store")
    dataset_flags(sp)
    engine_flags(sp)

    sp = sub.add_parser("run", help="run a workload against an existing store")
    sp.add_argument("--store", required=True)
    workload_flags(sp, seed=True)
    engine_flags(sp)

    sp = sub.add_parser("bench", help="load a dataset into a fresh store, then run a workload")
    sp.add_argument("--store", required=True)
    sp.add_argument("--force", action="store_true")
    dataset_flags(sp)
    workload_flags(sp, seed=False)
    engine_flags(sp)

    sp = sub.add_parser("stats", help="print level tables and the per-file statistics dump")
    sp.add_argument("--store", required=True)

    sp = sub.add_parser("dump-model", help="print model summaries for every live file")
    sp.add_argument("--store", required=True)
    return p


def _options(args) -> Options:
    return Options(
        delta=args.delta,
        t_wait_ms=args.t_wait_ms,
        cba_mode=args.cba_mode,
        learning_mode=args.learning_mode,
        level_size_divisor=args.level_size_divisor,
        cost_per_point=args.cost_per_point,
        background=args.background,
    )


def _header(command: str, args, opts: Optional[Options]) -> None:
    """Echo every effective setting so the run can be reproduced."""
    print(f"# command={command}")
    for k, v in sorted(vars(args).items()):
        if k != "command":
            print(f"# arg.{k}={v}")
    if opts is not None:
        for k, v in opts.echo().items():
            print(f"# option.{k}={v}")


def _is_store(path: str) -> bool:
    return os.path.exists(os.path.join(path, MANIFEST_NAME))


def _prepare_new_store(path: str, force: bool) -> None:
    if _is_store(path):
        if not force:
            raise UsageError(f"store already exists at {path}; pass --force to replace it")
        shutil.rmtree(path)
    elif os.path.isdir(path) and os.listdir(path):
        raise UsageError(f"{path} is a non-empty directory that is not a store")


def _print_levels(store: Store) -> None:
    print("level\tfiles\trecords\tbytes\tlearned")
    learned = {m.file_id for m in store.learned_files()}
    for level, files in enumerate(store.version.levels):
        if files:
            n = sum(1 for m in files if m.file_id in learned)
            print(f"L{level}\t{len(files)}\t{sum(m.record_count for m in files)}\t{sum(m.file_size for m in files)}\t{n}")


def _load(store: Store, args) -> float:
    keys = gen_dataset(DatasetSpec(args.dataset, args.n, args.seed, path=args.dataset_file))
    order = load_order(keys, args.order, args.seed)
    t0 = perf_counter()
    load_keys(store, order)
    store.flush_memtable()
    store.wait_idle(timeout=600)
    store.compact_all()
    load_s = perf_counter() - t0
    # Initial build: every file is learned once the load settles.
    if store.options.learning_mode != OFF:
        store.learn_all()
    print(f"loaded {len(keys)} keys in {load_s:.3f} s")
    return load_s


def cmd_load(args) -> int:
    opts = _options(args)
    _header("load", args, opts)
    _prepare_new_store(args.store, args.force)
    with Store(args.store, opts) as store:
        _load(store, args)
        _print_levels(store)
        print(f"learn_s={store.learner.learn_seconds:.4f}")
    return EXIT_OK


def _keyspace(store: Store) -> list[int]:
    return [decode_key(k) for k, _ in store.iter_all()]


def _run(store: Store, args) -> None:
    opts = store.options
    if opts.learning_mode == LEVEL and args.write_frac >= WRITE_HEAVY:
        print("warning: level learning on a write-heavy workload; level models will be invalidated constantly", file=sys.stderr)
    if opts.learning_mode == LEVEL:
        # Level models are not persisted, so they are rebuilt before the run.
        store.learn_all()
    keyspace = _keyspace(store)
    seed = args.seed if args.workload_seed is None else args.workload_seed
    spec = WorkloadSpec(ops=args.ops, write_fraction=args.write_frac, distribution=args.dist, seed=seed)
    if args.ops and not keyspace:
        raise UsageError("store is empty; load a dataset first")
    since = store.clock.now()
    report = run_workload(store, spec, keyspace)
    store.wait_idle(timeout=600)
    print(report.table())
    for line in report.lines():
        print(line)
    print(format_file_stats(report_file_stats(store, since=since)), end="")
    if report.aborted:
        raise StoreError(report.error)


def cmd_run(args) -> int:
    opts = _options(args)
    _header("run", args, opts)
    if not _is_store(args.store):
        raise UsageError(f"no store at {args.store}")
    with Store(args.store, opts, create_if_missing=False) as store:
        _run(store, args)
    return EXIT_OK


def cmd_bench(args) -> int:
    opts = _options(args)
    _header("bench", args, opts)
    _prepare_new_store(args.store, args.force)
    with Store(args.store, opts) as store:
        _load(store, args)
        _run(store, args)
    return EXIT_OK


def cmd_stats(args) -> int:
    _header("stats", args, None)
    if not _is_store(args.store):
        raise UsageError(f"no store at {args.store}")
    replay = manifest_replay(os.path.join(args.store, MANIFEST_NAME))
    print("level\tfiles\trecords\tbytes")
    for level, files in enumerate(replay.levels):
        if files:
            metas = files.values()
            print(f"L{level}\t{len(files)}\t{sum(m.record_count for m in metas)}\t{sum(m.file_size for m in metas)}")
    print(f"total_records={sum(m.record_count for lv in replay.levels for m in lv.values())}")
    stats = os.path.join(args.store, STATS_NAME)
    if os.path.exists(stats):
        with open(stats) as fh:
            print(fh.read(), end="")
    return EXIT_OK


def cmd_dump_model(args) -> int:
    _header("dump-model", args, None)
    if not _is_store(args.store):
        raise UsageError(f"no store at {args.store}")
    replay = manifest_replay(os.path.join(args.store, MANIFEST_NAME))
    print("file_id\tlevel\trecords\tsegments\tdelta\tmin_key\tmax_key")
    for level, files in enumerate(replay.levels):
        for fid in sorted(files):
            meta = files[fid]
            lo, hi = decode_key(meta.min_key), decode_key(meta.max_key)
            p = model_path(args.store, fid)
            try:
                with open(p, "rb") as fh:
                    model = deserialize_model(fh.read())
            except FileNotFoundError:
                print(f"{fid}\tL{level}\t{meta.record_count}\tunlearned\t-\t{lo}\t{hi}")
                continue
            except CorruptionError as exc:
                print(f"{fid}\tL{level}\t{meta.record_count}\tunlearned ({exc})\t-\t{lo}\t{hi}")
                continue
            print(f"{fid}\tL{level}\t{meta.record_count}\t{len(model.segments)}\t{model.delta}\t{lo}\t{hi}")
    return EXIT_OK


COMMANDS = {
    "load": cmd_load,
    "run": cmd_run,
    "bench": cmd_bench,
    "stats": cmd_stats,
    "dump-model": cmd_dump_model,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StoreError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

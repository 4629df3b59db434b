"""Command-line front end: ``tempora train | eval | synth | verify | inspect``.

Outputs go under ``--out-dir`` with fixed names (checkpoint.bin,
manifest.txt, metrics.csv, report.csv, horizon.csv, summary.txt).
Exit codes: 0 success, 1 a failed check or training stage, 2 bad input.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
import warnings
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .autoencoding import StageError, train_mlp, train_staged
from .checkpoint import CheckpointError, describe, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config
from .data import (DataError, NormalizationStats, SequenceDataset, apply_normalization,
                   augment_univariate, load_csv, normalize, save_csv, synth_ar1,
                   synth_multisine, window_batch)
from .evaluation import (PredictionMode, fill_in, free_run, summary_text, write_fill_in_report,
                         write_horizon)
from .rng import RngStream
from .verify import format_table, run_checks

EVAL_STREAM = 0xE7A1


class CliError(Exception):
    """Fatal input problem; reported on stderr with exit code 2."""


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _version_tag() -> str:
    return f"tempora {__version__} ({kernels.BACKEND} kernel)"


def _write_manifest(out_dir: Path, command: str, cfg: RunConfig | None, fields: dict, outputs):
    lines = [f"command = {command}", f"version = {_version_tag()}"]
    if cfg is not None:
        lines += [f"config_hash = {cfg.hash()}", f"seed = {cfg.schedule.seed}"]
    lines += [f"{k} = {v}" for k, v in fields.items()]
    for name in outputs:
        lines.append(f"output.{name} = sha256:{_sha256(out_dir / name)}")
    if cfg is not None:
        lines.append("")
        lines.append("[config]")
        lines.append(cfg.to_text().rstrip("\n"))
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# data plumbing

def _read_frames(path, has_header: bool, chunk: int, column: int) -> SequenceDataset:
    if path is None:
        raise CliError("no dataset given (use --data or data.path)")
    p = Path(path)
    if not p.is_file():
        raise CliError(f"dataset not found: {p}")
    try:
        ds = load_csv(p, has_header)
        if chunk:
            if column > ds.n_dims:
                raise DataError(f"data.column {column} exceeds the {ds.n_dims} column(s) in {p}")
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                ds = augment_univariate(ds.frames[:, column - 1], chunk)
            for w in caught:
                print(f"warning: {w.message}", file=sys.stderr)
    except DataError as exc:
        raise CliError(str(exc)) from None
    return ds


def _check_range(lo: int, hi: int, length: int, what: str):
    if hi > length:
        raise CliError(f"{what} {lo}:{hi} runs past the end of a {length}-frame dataset")


# ---------------------------------------------------------------------------
# commands

def _config_from(args, flag_overrides) -> RunConfig:
    overrides = [(k, v) for k, v in flag_overrides if v is not None]
    overrides += list(args.set or [])
    try:
        return load_config(args.config, overrides)
    except ConfigError as exc:
        raise CliError(str(exc)) from None


def cmd_train(args) -> int:
    cfg = _config_from(args, [
        ("model.kind", args.model), ("model.order", args.order), ("model.hidden_units", args.hidden),
        ("data.path", args.data), ("data.chunk", args.chunk), ("train.seed", args.seed),
        ("train.use_ta", args.use_ta), ("train.mlp", args.mlp),
    ])
    d = cfg.data
    ds = _read_frames(d.path, d.has_header, d.chunk, d.column)
    _check_range(d.train_start, d.train_stop, len(ds), "training range")
    nds, stats = normalize(ds, (d.train_start, d.train_stop))
    frames = nds.frames[d.train_start:d.train_stop]
    rng = RngStream(cfg.schedule.seed)
    try:
        if cfg.mlp:
            result = train_mlp(cfg.model.kind, frames, cfg.schedule, cfg.model.order,
                               cfg.model.hidden_units, cfg.visible_kind, rng)
        else:
            result = train_staged(cfg.model.kind, frames, cfg.schedule, cfg.use_ta,
                                  cfg.model.order, cfg.model.hidden_units, cfg.visible_kind, rng)
    except StageError as exc:
        print(f"error: training failed in stage '{exc.stage}': {exc.cause}", file=sys.stderr)
        return 1
    except ValueError as exc:
        raise CliError(str(exc)) from None

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "config_hash": cfg.hash(), "seed": cfg.schedule.seed, "version": __version__,
        "data_path": d.path, "data_sha256": _sha256(d.path), "has_header": d.has_header,
        "chunk": d.chunk, "column": d.column, "train_start": d.train_start,
        "train_stop": d.train_stop, "use_ta": cfg.use_ta, "mlp": cfg.mlp,
    }
    save_checkpoint(out / "checkpoint.bin", result.model, meta,
                    {"NORM_MEAN": stats.mean, "NORM_SD": stats.sd})
    result.log.write(out / "metrics.csv")
    _write_manifest(out, "train", cfg, {"data_path": d.path, "data_sha256": meta["data_sha256"]},
                    ["checkpoint.bin", "metrics.csv"])
    counts = {}
    for _, stage, _, _ in result.log.rows:
        counts[stage] = counts.get(stage, 0) + 1
    stages = ", ".join(f"{k} {v}" for k, v in counts.items())
    print(f"trained {cfg.model.kind} ({'mlp' if cfg.mlp else 'TA+CD' if cfg.use_ta else 'CD-only'}); "
          f"epochs per stage: {stages}; total {len(result.log)}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from(args, [
        ("model.order", args.order), ("data.path", args.data), ("eval.mode", args.mode),
        ("eval.samples", args.samples), ("eval.horizon", args.horizon),
        ("eval.repetitions", args.repetitions), ("eval.gibbs_steps", args.gibbs_steps),
        ("eval.metric", args.metric), ("eval.seed", args.eval_seed),
    ])
    try:
        ck = load_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        raise CliError(str(exc)) from None
    model, meta = ck.model, ck.meta
    if not hasattr(model, "order"):
        raise CliError("checkpoint does not hold a temporal model")
    if "model.order" in cfg.explicit and cfg.model.order != model.order:
        raise CliError(f"order mismatch: checkpoint has order {model.order}, "
                       f"configuration asks for {cfg.model.order}")

    d = cfg.data
    explicit = cfg.explicit
    path = d.path if "data.path" in explicit else meta.get("data_path")
    has_header = d.has_header if "data.has_header" in explicit else {
        "True": True, "False": False}.get(meta.get("has_header"))
    chunk = d.chunk if "data.chunk" in explicit else int(meta.get("chunk", 0))
    column = d.column if "data.column" in explicit else int(meta.get("column", 1))
    ds = _read_frames(path, has_header, chunk, column)
    if ds.n_dims != model.n_visible:
        raise CliError(f"dataset has {ds.n_dims} dimensions, checkpoint expects {model.n_visible}")
    if "NORM_MEAN" in ck.extra:
        stats = NormalizationStats(ck.extra["NORM_MEAN"], ck.extra["NORM_SD"])
    else:
        stats = NormalizationStats.identity(ds.n_dims)
    nds = apply_normalization(ds, stats)

    order = model.order
    stop = len(ds) if d.eval_stop is None else d.eval_stop
    _check_range(d.eval_start, stop, len(ds), "evaluation range")
    first = max(d.eval_start, order)
    if stop - first < 1:
        raise CliError(f"evaluation range {d.eval_start}:{stop} has no frame with {order} frames of history")
    present = np.arange(first, stop)

    same_data = meta.get("data_sha256") == _sha256(path)
    if same_data and "train_start" in meta and not args.allow_train_eval:
        lo, hi = int(meta["train_start"]), int(meta["train_stop"])
        overlap = int(np.sum((present >= lo) & (present < hi)))
        if overlap:
            raise CliError(f"refusing to evaluate on the training split ({overlap} frames in "
                           f"{lo}:{hi}); pass --allow-train-eval to override")

    try:
        mode = PredictionMode.parse(cfg.eval.mode, cfg.eval.samples)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    rng = RngStream(cfg.eval.seed, stream_id=EVAL_STREAM)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs, fill, horizon = [], None, None
    if cfg.eval.fill_in:
        windows = window_batch(nds, order, first - order, stop)
        fill = fill_in(model, windows, mode, cfg.eval.gibbs_steps, rng, cfg.eval.repetitions)
        write_fill_in_report(out / "report.csv", fill)
        outputs.append("report.csv")
    if cfg.eval.free_run:
        starts = present[present + cfg.eval.horizon <= stop]
        if len(starts) == 0:
            raise CliError(f"horizon {cfg.eval.horizon} needs more ground truth than "
                           f"{d.eval_start}:{stop} provides")
        horizon = free_run(model, nds.frames, starts, cfg.eval.horizon, mode, rng,
                           cfg.eval.repetitions, cfg.eval.gibbs_steps, cfg.eval.metric,
                           stats, cfg.eval.epsilon)
        write_horizon(out / "horizon.csv", horizon)
        outputs.append("horizon.csv")
    summary = summary_text(f"{type(model).__name__} (phase {model.phase})", fill, horizon)
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    outputs.append("summary.txt")
    _write_manifest(out, "eval", cfg, {"checkpoint": args.checkpoint,
                                       "checkpoint_sha256": _sha256(args.checkpoint),
                                       "data_path": path}, outputs)
    sys.stdout.write(summary)
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    try:
        if args.kind == "multisine":
            freqs = None if args.freqs is None else [float(f) for f in args.freqs.split(",")]
            ds = synth_multisine(args.dims, args.length, freqs, args.noise_sd, args.seed)
            params = {"dims": args.dims, "length": args.length, "noise_sd": args.noise_sd,
                      "seed": args.seed, "freqs": args.freqs or "default"}
        elif args.kind == "ar1":
            ds = synth_ar1(args.dims, args.length, args.coef, args.noise_sd, args.seed)
            params = {"dims": args.dims, "length": args.length, "coef": args.coef,
                      "noise_sd": args.noise_sd, "seed": args.seed}
        else:
            if args.input is None:
                raise CliError("synth chunk needs --input")
            ds = _read_frames(args.input, args.has_header, args.chunk, args.column)
            params = {"input": args.input, "input_sha256": _sha256(args.input),
                      "chunk": args.chunk, "column": args.column}
    except (DataError, ValueError) as exc:
        raise CliError(str(exc)) from None
    out.mkdir(parents=True, exist_ok=True)
    save_csv(ds, out / "dataset.csv")
    _write_manifest(out, f"synth {args.kind}", None,
                    {"version_params": ", ".join(f"{k}={v}" for k, v in params.items()),
                     "frames": len(ds), "dims": ds.n_dims}, ["dataset.csv"])
    print(f"wrote {out / 'dataset.csv'} ({len(ds)} frames x {ds.n_dims} dims)")
    return 0


def cmd_verify(args) -> int:
    checks = run_checks(args.level)
    sys.stdout.write(format_table(checks))
    return 0 if all(c.passed for c in checks) else 1


def cmd_inspect(args) -> int:
    try:
        sys.stdout.write(describe(args.checkpoint))
    except (CheckpointError, OSError) as exc:
        raise CliError(f"cannot inspect {args.checkpoint}: {exc}") from None
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tempora", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=_version_tag())
    p.add_argument("--threads", type=int, default=None,
                   help="cap numeric library threads (default: $TEMPORA_THREADS or unlimited)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any configuration key (repeatable)")
        sp.add_argument("--out-dir", default=".", help="directory for output files")

    t = sub.add_parser("train", help="staged training, writes checkpoint.bin and metrics.csv")
    common(t)
    t.add_argument("--data", help="training CSV (data.path)")
    t.add_argument("--model", choices=("crbm", "trbm"))
    t.add_argument("--order", type=int)
    t.add_argument("--hidden", type=int)
    t.add_argument("--chunk", type=int, help="chunk-augment a univariate column")
    t.add_argument("--seed", type=int)
    t.add_argument("--use-ta", type=_bool, metavar="BOOL")
    t.add_argument("--mlp", type=_bool, metavar="BOOL", help="train the backprop-only baseline")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="fill-in and free-run evaluation of a checkpoint")
    common(e)
    e.add_argument("checkpoint")
    e.add_argument("--data", help="evaluation CSV (defaults to the training data)")
    e.add_argument("--order", type=int, help="expected model order; refused if it differs")
    e.add_argument("--mode", help="single, posterior-mean or deterministic")
    e.add_argument("--samples", type=int)
    e.add_argument("--horizon", type=int)
    e.add_argument("--repetitions", type=int)
    e.add_argument("--gibbs-steps", type=int)
    e.add_argument("--metric", choices=("MSE", "MAPE", "mse", "mape"))
    e.add_argument("--eval-seed", type=int)
    e.add_argument("--allow-train-eval", action="store_true",
                   help="permit evaluation on frames used for training")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="write a generated or chunk-augmented dataset")
    s.add_argument("kind", choices=("multisine", "ar1", "chunk"))
    s.add_argument("--out-dir", default=".")
    s.add_argument("--dims", type=int, default=4)
    s.add_argument("--length", type=int, default=3000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise-sd", type=float, default=0.05)
    s.add_argument("--freqs", help="comma-separated cycles per frame, one per dimension")
    s.add_argument("--coef", type=float, default=0.9)
    s.add_argument("--input", help="univariate CSV to chunk")
    s.add_argument("--has-header", type=_bool, default=None, metavar="BOOL",
                   help="input has a header row (default: detect)")
    s.add_argument("--chunk", type=int, default=4)
    s.add_argument("--column", type=int, default=1)
    s.set_defaults(func=cmd_synth)

    v = sub.add_parser("verify", help="run the oracle self-checks")
    v.add_argument("--level", choices=("quick", "full"), default="quick")
    v.set_defaults(func=cmd_verify)

    i = sub.add_parser("inspect", help="print checkpoint metadata")
    i.add_argument("checkpoint")
    i.set_defaults(func=cmd_inspect)
    return p


def _thread_limit(threads):
    if threads is None:
        env = os.environ.get("TEMPORA_THREADS")
        threads = int(env) if env else None
    if threads is None:
        return nullcontext()
    if threads < 1:
        raise CliError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=threads)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit(args.threads):
            return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""``grvq`` command line tool.

Exit status is 0 on success, 2 for usage errors and otherwise the
``exit_code`` of the raised :class:`~grvq.errors.GrvqError` subclass.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .bitstream import MODEL_MAGIC, STREAM_MAGIC, decode_payload, deserialize_model, serialize_model
from .corpus import write_corpus
from .errors import CodecIOError, FormatError, GrvqError
from .wavio import atomic_write_bytes

_CONFIG_FLAGS = ("seed", "groups", "stages", "entries", "frame_size", "sample_rate", "epochs", "decay")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--groups", type=int, help="number of groups G")
    p.add_argument("--stages", type=int, help="residual stages per group N_q")
    p.add_argument("--entries", type=int, help="entries per codebook E")
    p.add_argument("--frame-size", type=int, dest="frame_size")
    p.add_argument("--sample-rate", type=int, dest="sample_rate")
    p.add_argument("--epochs", type=int)
    p.add_argument("--decay", type=float)
    p.add_argument("--reserve-zero-entry", action="store_true", default=None, dest="reserve_zero_entry")


def _run_config(args) -> pipeline.RunConfig:
    overrides = {k: getattr(args, k, None) for k in _CONFIG_FLAGS}
    overrides["reserve_zero_entry"] = getattr(args, "reserve_zero_entry", None)
    if getattr(args, "grid", None):
        overrides["grid"] = _parse_grid(args.grid)
    return pipeline.RunConfig.from_sources(args.config, **overrides)


def _parse_grid(text: str):
    points = []
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) != 4:
            raise argparse.ArgumentTypeError(f"grid point {item!r} is not G:N_q:E:frame_size")
        points.append(tuple(int(p) for p in parts))
    return points


def _write_json(path, payload) -> None:
    atomic_write_bytes(path, (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode())


def cmd_train(args) -> int:
    cfg = _run_config(args)
    model, report = pipeline.train(cfg, args.inputs)
    atomic_write_bytes(args.out, serialize_model(model))
    _write_json(args.report or f"{args.out}.report.json", report)
    print(f"wrote {args.out}: {model.n_groups}x{model.n_stages} codebooks, "
          f"train MSE {report['train_mse']:.6g}, {report['bitrate_bps']:.0f} bps")
    return 0


def cmd_encode(args) -> int:
    info = pipeline.encode_file(args.model, args.wav, args.out)
    print(f"wrote {args.out}: {info['bytes']} bytes, nominal bitrate {info['bitrate_bps']:.0f} bps")
    return 0


def cmd_decode(args) -> int:
    signal = pipeline.decode_file(args.model, args.stream, args.out)
    print(f"wrote {args.out}: {len(signal)} samples at {signal.sample_rate} Hz")
    return 0


def cmd_eval(args) -> int:
    model = pipeline.read_model(args.model)
    cfg = _run_config(args)
    corpus = pipeline.load_corpus([args.wav_dir], model.sample_rate)
    rows = pipeline.evaluate(model, corpus, cfg.mel_scales)
    if args.out:
        atomic_write_bytes(args.out, pipeline.rows_to_csv(rows, pipeline.EVAL_COLUMNS).encode())
        _write_json(f"{args.out}.json", {"config": cfg.as_dict(), "model": args.model, "rows": rows})
    print(pipeline.format_table(rows, pipeline.EVAL_COLUMNS))
    return 0


def cmd_bench(args) -> int:
    cfg = _run_config(args)
    result = pipeline.bench(cfg, args.corpus)
    atomic_write_bytes(args.out, pipeline.rows_to_csv(result["rows"], pipeline.BENCH_COLUMNS).encode())
    _write_json(f"{args.out}.json", result)
    print(pipeline.format_table(result["rows"], pipeline.BENCH_COLUMNS))
    return 0


def cmd_info(args) -> int:
    try:
        data = Path(args.path).read_bytes()
    except OSError as exc:
        raise CodecIOError(f"cannot read {args.path}: {exc}") from exc
    if data[:4] == STREAM_MAGIC:
        header, _ = decode_payload(data)
        info = {"kind": "stream", **vars(header), "payload_bytes": header.payload_bytes}
    elif data[:4] == MODEL_MAGIC:
        model = deserialize_model(data)
        info = {
            "kind": "model",
            "sample_rate": model.sample_rate,
            "frame_size": model.frame_size,
            "groups": model.n_groups,
            "stages": model.n_stages,
            "group_dim": model.group_dim,
            "entries": model.codebook(0, 0).size,
        }
    else:
        raise FormatError(f"{args.path}: neither a .grvq stream nor a .grvm model")
    print(json.dumps(info, indent=2, sort_keys=True))
    return 0


def cmd_synth_corpus(args) -> int:
    paths = write_corpus(args.out, args.files, args.duration, args.sample_rate, args.seed)
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grvq", description="Group-residual VQ audio codec")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on WAV files or directories")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True, help="output .grvm path")
    p.add_argument("--report", help="training report path (default: <out>.report.json)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="encode a WAV file into a .grvq stream")
    p.add_argument("model")
    p.add_argument("wav")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a .grvq stream into a WAV file")
    p.add_argument("model")
    p.add_argument("stream")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="per-file SNR and mel distance of a model")
    p.add_argument("model")
    p.add_argument("wav_dir")
    p.add_argument("--out", help="CSV output path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="train and compare a grid of configurations")
    p.add_argument("corpus")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--grid", help="comma separated G:N_q:E:frame_size points")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("info", help="print the header of a .grvq or .grvm file")
    p.add_argument("path")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("synth-corpus", help="write a seeded synthetic speech-like corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--files", type=int, default=20)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--sample-rate", type=int, default=24000, dest="sample_rate")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_synth_corpus)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GrvqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

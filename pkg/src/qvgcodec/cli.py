"""Command-line front end.

Machine-readable output (JSON, CSV) goes to stdout; progress and
human-readable notes go to stderr.  Exit codes: 0 success, 1 runtime
error, 2 usage error.  ``QVG_THREADS`` caps the worker threads used for
independent benchmark cells (default 1).

For ``--method kivi`` the input stream is treated as a key cache and
quantized with token-axis groups, which requires the token count to be
a multiple of the block size.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import baselines, datagen
from .container import ChunkReader, ChunkWriter, MethodTag, QvgcHeader, dequantize_range
from .errors import CodecError, DimensionMismatch
from .metrics import breakdown_report, memory_breakdown, mse, psnr
from .prq import prq_compress, prq_decompress_onepass
from .types import ChunkSpec, CompressedChunk, KVPlane, QuantConfig

PRESETS = {
    "qvg": dict(block=64, stages=1, centroids=256),
    "qvg-pro": dict(block=16, stages=4, centroids=256),
}

_METHOD_TAGS = {
    "rtn": MethodTag.RTN,
    "kivi": MethodTag.KIVI,
    "quarot": MethodTag.QUAROT,
    "qvg": MethodTag.QVG,
}

BENCH_COLUMNS = [
    "method",
    "bits",
    "block",
    "stages",
    "centroids",
    "seed",
    "n_tokens",
    "head_dim",
    "mse",
    "psnr_db",
    "ratio",
    "encode_s",
    "decode_s",
]

SWEEP_COLUMNS = ["stages", "block", "bits", "ratio", "mse"]


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t]


def _stage_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return _int_list(text)


def _chunk_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split("..", 1)
        return int(lo), int(hi)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("range must look like a..b") from exc


def _config_from_args(args) -> QuantConfig:
    preset = PRESETS.get(getattr(args, "preset", None) or "", {})
    block = args.block if args.block is not None else preset.get("block", 64)
    stages = args.stages if args.stages is not None else preset.get("stages", 1)
    cents = (
        args.centroids if args.centroids is not None else preset.get("centroids", 256)
    )
    if args.method != "qvg":
        stages = 0
        cents = 1
    return QuantConfig(
        bits=args.bits,
        group_size=block,
        stages=stages,
        centroids=cents,
        seed=args.seed,
    )


def _compress_plane(
    plane: KVPlane, method: str, config: QuantConfig
) -> CompressedChunk:
    """One plane through the selected compressor, as a container chunk."""
    if method == "qvg":
        return prq_compress(plane, config)
    if method == "rtn":
        payload, scales = baselines.rtn_compress(plane, config.bits, config.group_size)
    elif method == "kivi":
        if plane.spec.n_tokens % config.group_size:
            raise DimensionMismatch(
                "kivi needs token count divisible by the block size"
            )
        payload, scales, _ = baselines.token_axis_compress(
            plane, config.bits, config.group_size
        )
    elif method == "quarot":
        qc = baselines.quarot_compress(
            plane, config.bits, config.group_size, config.seed
        )
        payload, scales = qc.payload, qc.scales
    else:
        raise ValueError(f"unknown method {method}")
    return CompressedChunk(
        spec=plane.spec, config=config, payload=payload, scales=scales
    )


def _load_source(args) -> list[KVPlane]:
    """Synthetic preset name or a KVT0 path."""
    if args.source == "clustered":
        return datagen.clustered_preset_stream(
            n_chunks=args.chunks, seed=args.seed, drift=args.drift
        )
    return datagen.load_raw_tensor(args.source)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_compress(args) -> int:
    config = _config_from_args(args)
    planes = datagen.load_raw_tensor(args.input)
    head_dim = planes[0].spec.head_dim
    header = QvgcHeader.for_config(config, head_dim, _METHOD_TAGS[args.method])
    with ChunkWriter(args.out, header) as writer:
        for plane in planes:
            writer.append_chunk(_compress_plane(plane, args.method, config))
    spec = planes[0].spec
    print(json.dumps(breakdown_report(args.method, config, spec)))
    _info(f"compressed {len(planes)} planes -> {args.out}")
    return 0


def cmd_decompress(args) -> int:
    with ChunkReader(args.input) as reader:
        count = reader.count
        first, last = args.range if args.range else (0, count - 1)
        if not (0 <= first < count and 0 <= last < count):
            raise CodecError(
                f"range {first}..{last} outside available chunks [0, {count})"
            )
        planes = dequantize_range(reader, first, last)
    datagen.save_raw_tensor(args.out, planes, dtype=datagen.DTYPE_F32)
    _info(f"decompressed {len(planes)} planes -> {args.out}")
    if args.reference:
        ref = datagen.load_raw_tensor(args.reference)[first : last + 1]
        if len(ref) != len(planes) or ref[0].data.shape != planes[0].data.shape:
            raise CodecError("reference shape disagrees with decompressed planes")
        stacked_ref = np.stack([p.data for p in ref])
        stacked_out = np.stack([p.data for p in planes])
        err = mse(stacked_ref, stacked_out)
        peak = float(np.abs(stacked_ref).max()) or 1.0
        print(json.dumps({"mse": err, "psnr_db": psnr(stacked_ref, stacked_out, peak)}))
    return 0


def _bench_cell(planes, method, bits, block, stages, centroids, seed):
    config = QuantConfig(
        bits=bits,
        group_size=block,
        stages=stages if method == "qvg" else 0,
        centroids=centroids if method == "qvg" else 1,
        seed=seed,
    )
    t0 = time.perf_counter()
    chunks = [_compress_plane(p, method, config) for p in planes]
    t1 = time.perf_counter()
    recon = []
    for chunk in chunks:
        if method == "qvg":
            recon.append(prq_decompress_onepass(chunk).data)
        elif method == "kivi":
            recon.append(
                baselines.token_axis_decompress(
                    chunk.payload, chunk.scales, chunk.spec.n_tokens,
                    chunk.spec.head_dim, bits, block,
                )
            )
        elif method == "quarot":
            recon.append(
                baselines.quarot_decompress(
                    baselines.QuarotCompressed(
                        payload=chunk.payload, scales=chunk.scales,
                        n_tokens=chunk.spec.n_tokens, head_dim=chunk.spec.head_dim,
                        bits=bits, group_size=block, seed=seed,
                    )
                )
            )
        else:
            recon.append(
                baselines.rtn_decompress(
                    chunk.payload, chunk.scales, chunk.spec.n_tokens,
                    chunk.spec.head_dim, bits, block,
                )
            )
    t2 = time.perf_counter()

    original = np.stack([p.data for p in planes])
    result = np.stack(recon)
    err = mse(original, result)
    peak = float(np.abs(original).max()) or 1.0
    spec = planes[0].spec
    ratio = memory_breakdown(config, spec).ratio_vs_bf16
    return {
        "method": method,
        "bits": bits,
        "block": block,
        "stages": config.stages,
        "centroids": config.centroids,
        "seed": seed,
        "n_tokens": spec.n_tokens,
        "head_dim": spec.head_dim,
        "mse": f"{err:.6g}",
        "psnr_db": f"{psnr(original, result, peak):.3f}",
        "ratio": f"{ratio:.2f}",
        "encode_s": f"{t1 - t0:.4f}",
        "decode_s": f"{t2 - t1:.4f}",
    }


def _write_csv(rows, columns, out_path) -> None:
    sink = open(out_path, "w", newline="") if out_path else sys.stdout
    try:
        writer = csv.DictWriter(sink, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out_path:
            sink.close()


def cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in _METHOD_TAGS:
            raise CodecError(f"unknown method {m}")
    bits_list = _int_list(args.bits)

    cells = []
    for seed in range(args.seeds):
        source_args = argparse.Namespace(
            source=args.source, chunks=args.chunks, seed=seed, drift=args.drift
        )
        planes = _load_source(source_args)
        for method in methods:
            for bits in bits_list:
                cells.append((planes, method, bits, seed))

    workers = max(1, int(os.environ.get("QVG_THREADS", "1") or "1"))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(
            pool.map(
                lambda c: _bench_cell(
                    c[0], c[1], c[2], args.block, args.stages, args.centroids, c[3]
                ),
                cells,
            )
        )
    _write_csv(rows, BENCH_COLUMNS, args.out)
    return 0


def cmd_sweep(args) -> int:
    planes = _load_source(args)
    rows = []
    for stages in _stage_range(args.stages):
        for block in _int_list(args.block):
            for bits in _int_list(args.bits):
                config = QuantConfig(
                    bits=bits,
                    group_size=block,
                    stages=stages,
                    centroids=args.centroids,
                    seed=args.seed,
                )
                chunks = [_compress_plane(p, "qvg", config) for p in planes]
                recon = np.stack([prq_decompress_onepass(c).data for c in chunks])
                original = np.stack([p.data for p in planes])
                ratio = memory_breakdown(config, planes[0].spec).ratio_vs_bf16
                rows.append(
                    {
                        "stages": stages,
                        "block": block,
                        "bits": bits,
                        "ratio": f"{ratio:.4f}",
                        "mse": f"{mse(original, recon):.6g}",
                    }
                )
    _write_csv(rows, SWEEP_COLUMNS, args.out)
    return 0


def cmd_stats(args) -> int:
    config = _config_from_args(args)
    spec = ChunkSpec(n_tokens=args.tokens, head_dim=args.dim)
    print(json.dumps(breakdown_report(args.method, config, spec)))
    return 0


def cmd_gen(args) -> int:
    planes = datagen.clustered_preset_stream(
        n_chunks=args.chunks,
        seed=args.seed,
        drift=args.drift,
        n_tokens=args.tokens,
        d=args.dim,
        n_clusters=args.clusters,
    )
    dtype = datagen.DTYPE_BF16 if args.dtype == "bf16" else datagen.DTYPE_F32
    datagen.save_raw_tensor(args.out, planes, dtype=dtype)
    _info(f"wrote {len(planes)} planes -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_codec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=sorted(_METHOD_TAGS), default="qvg")
    p.add_argument("--bits", type=int, choices=[2, 4, 8], default=2)
    p.add_argument("--block", type=int, default=None, help="quant group size B")
    p.add_argument("--stages", type=int, default=None, help="smoothing stages S")
    p.add_argument("--centroids", type=int, default=None, help="clusters per stage K")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qvgcodec", description="Streaming low-bit KV-cache codec"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="KVT0 planes -> QVGC container")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    _add_codec_flags(p)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="QVGC container -> KVT0 planes")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--range", type=_chunk_range, default=None, metavar="A..B")
    p.add_argument("--reference", default=None, help="KVT0 to score against")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("bench", help="method x bits comparison CSV")
    p.add_argument("--source", default="clustered", help="preset name or KVT0 path")
    p.add_argument("--methods", default="rtn,kivi,quarot,qvg")
    p.add_argument("--bits", default="2,4")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--block", type=int, default=16)
    p.add_argument("--stages", type=int, default=1)
    p.add_argument("--centroids", type=int, default=256)
    p.add_argument("--chunks", type=int, default=1)
    p.add_argument("--drift", type=float, default=0.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="(ratio, MSE) grid over stages/block/bits")
    p.add_argument("--source", default="clustered")
    p.add_argument("--stages", default="0..4", help="range a..b or list")
    p.add_argument("--block", default="16,32,64")
    p.add_argument("--bits", default="2,4")
    p.add_argument("--centroids", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chunks", type=int, default=1)
    p.add_argument("--drift", type=float, default=0.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stats", help="closed-form memory accounting JSON")
    p.add_argument("--tokens", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    _add_codec_flags(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gen", help="write a synthetic KVT0 stream")
    p.add_argument("--out", required=True)
    p.add_argument("--chunks", type=int, default=1)
    p.add_argument("--tokens", type=int, default=4096)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--clusters", type=int, default=256)
    p.add_argument("--drift", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dtype", choices=["f32", "bf16"], default="bf16")
    p.set_defaults(func=cmd_gen)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CodecError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

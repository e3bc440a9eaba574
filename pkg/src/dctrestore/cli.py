"""Command-line entry point.

Subcommands: degrade (single or double JPEG compression), recover (model
inference back to PPM), train, eval (CSV + figures), inspect, and synth
(deterministic sample images so the toolkit runs without external data).

Exit codes: 0 success, 2 usage error, 3 input format error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import blockdct as bd
from . import metrics as mx
from . import netpbm, report, synth
from .errors import MissingPair, ShiftOutOfRange, ToolkitError, UsageError
from .jfif import encode_jpeg, parse_jpeg
from .net import Ablation, Model, ModelConfig, model_forward, reconstruct_image
from .train import (
    Checkpoint,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train_loop,
)


def _write_manifest(out_path: str, command: str, settings: dict, inputs: list, outputs: list) -> str:
    manifest = {
        "tool": "dctrestore",
        "version": __version__,
        "command": command,
        "settings": {k: (v if not isinstance(v, Path) else str(v)) for k, v in settings.items()},
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
    }
    path = f"{out_path}.manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
    return path


def _parse_shift(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(-?\d+)\s*,\s*(-?\d+)\s*", text)
    if not m:
        raise UsageError(f"invalid --shift {text!r}, expected dx,dy")
    dx, dy = int(m.group(1)), int(m.group(2))
    if not (0 <= dx <= 7 and 0 <= dy <= 7):
        raise ShiftOutOfRange(f"shift ({dx},{dy}) outside 0..7")
    return dx, dy


def _subsampling(text: str) -> bd.Subsampling:
    return bd.Subsampling.S420 if text == "420" else bd.Subsampling.S444


# --- degrade ---


def cmd_degrade(args) -> int:
    img = netpbm.read_image(args.input)
    sub = _subsampling(args.subsampling)
    if args.qf1 is not None or args.qf2 is not None:
        if args.qf1 is None or args.qf2 is None:
            raise UsageError("double compression needs both --qf1 and --qf2")
        shift = _parse_shift(args.shift) if args.shift else (0, 0)
        q = bd.degrade_double(img, args.qf1, args.qf2, shift, sub)
        settings = {"qf1": args.qf1, "qf2": args.qf2, "shift": shift, "subsampling": sub.value}
    else:
        if args.qf is None:
            raise UsageError("need --qf (or --qf1/--qf2 for double compression)")
        q = bd.compress(img, args.qf, sub)
        settings = {"qf": args.qf, "subsampling": sub.value}
    data = encode_jpeg(q)
    with open(args.output, "wb") as fh:
        fh.write(data)
    sparsity = bd.coefficient_sparsity(q)
    print(f"wrote {args.output} ({len(data)} bytes), zero coefficients: {100.0 * sparsity:.2f}%")
    _write_manifest(args.output, "degrade", settings, [args.input], [args.output])
    return 0


# --- recover ---


def _dump_channels(out_dir: str, cmap: np.ndarray, channels: list[int], prefix: str) -> list[str]:
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    paths = []
    for c in channels:
        path = str(Path(out_dir) / f"{prefix}_ch{c:02d}.pgm")
        netpbm.write_pgm_normalized(path, cmap[c])
        paths.append(path)
    return paths


def _channel_list(text: str) -> list[int]:
    chans = [int(t) for t in text.split(",") if t.strip()]
    for c in chans:
        if not 0 <= c < 64:
            raise UsageError(f"channel {c} outside 0..63")
    return chans


def cmd_recover(args) -> int:
    with open(args.input, "rb") as fh:
        q = parse_jpeg(fh.read())
    ckpt = load_checkpoint(args.checkpoint)
    model = ckpt.build_model()
    maps = model_forward(model, q)
    img = reconstruct_image(maps, q.pixel_dims)
    netpbm.write_image(args.output, img)
    outputs = [args.output]
    if args.dump_coeffs:
        chans = _channel_list(args.channels)
        outputs += _dump_channels(args.dump_coeffs, maps["y"], chans, "recovered")
    print(f"wrote {args.output} ({'gray' if q.is_gray else 'color'}, "
          f"{q.pixel_dims[1]}x{q.pixel_dims[0]})")
    _write_manifest(
        args.output,
        "recover",
        {"checkpoint": args.checkpoint, "channels": args.channels if args.dump_coeffs else None},
        [args.input, args.checkpoint],
        outputs,
    )
    return 0


# --- train ---


def _config_from_file(path: str) -> dict:
    kv = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            k, v = line.split("=", 1)
            kv[k.strip()] = v.strip()
    return kv


_MODEL_KEYS = {
    "embed_dim": int,
    "window_size": int,
    "num_blocks": int,
    "units_per_block": int,
    "d_head": int,
    "mlp_ratio": float,
    "grayscale": lambda v: bool(int(v)),
    "subsampling": bd.Subsampling,
    "ablation": Ablation,
}
_TRAIN_KEYS = {
    "steps": int,
    "batch": int,
    "crop": int,
    "qf_min": int,
    "qf_max": int,
    "lr_start": float,
    "lr_peak": float,
    "lr_end": float,
    "warmup_fraction": float,
    "clip": float,
    "seed": int,
    "double_jpeg": lambda v: bool(int(v)),
    "loss_lambda": float,
    "charbonnier_eps": float,
}


def _split_config(kv: dict) -> tuple[dict, dict]:
    model_kv, train_kv = {}, {}
    for k, v in kv.items():
        if k in _MODEL_KEYS:
            model_kv[k] = _MODEL_KEYS[k](v)
        elif k in _TRAIN_KEYS:
            train_kv[k] = _TRAIN_KEYS[k](v)
        else:
            raise UsageError(f"unknown config key {k!r}")
    return model_kv, train_kv


def _load_corpus(corpus_dir: str) -> tuple[list, list]:
    paths = sorted(
        p for p in Path(corpus_dir).iterdir() if p.suffix.lower() in (".ppm", ".pgm")
    )
    if not paths:
        raise UsageError(f"no .ppm/.pgm images in {corpus_dir}")
    return [netpbm.read_image(str(p)) for p in paths], [str(p) for p in paths]


def cmd_train(args) -> int:
    kv = _config_from_file(args.config) if args.config else {}
    overrides = {
        "steps": args.steps,
        "batch": args.batch,
        "crop": args.crop,
        "qf_min": args.qf_min,
        "qf_max": args.qf_max,
        "seed": args.seed,
        "embed_dim": args.embed_dim,
        "window_size": args.window_size,
        "num_blocks": args.num_blocks,
        "units_per_block": args.units_per_block,
        "ablation": args.ablation,
        "grayscale": "1" if args.gray else None,
        "subsampling": args.subsampling,
        "double_jpeg": "1" if args.double_jpeg else None,
    }
    for k, v in overrides.items():
        if v is not None:
            kv[k] = str(v)
    model_kv, train_kv = _split_config(kv)
    train_cfg = TrainConfig(**train_kv)

    resume: Checkpoint | None = None
    if args.resume:
        resume = load_checkpoint(args.resume)
        fresh = ModelConfig(**model_kv)
        if model_kv and fresh.to_text() != resume.config.to_text():
            raise UsageError("model config flags conflict with the resumed checkpoint")
        model = resume.build_model()
    else:
        model = Model(ModelConfig(**model_kv), seed=train_cfg.seed)

    corpus, corpus_paths = _load_corpus(args.corpus)

    every = max(1, (train_cfg.steps - (resume.step if resume else 0)) // 20)

    def on_step(row):
        if row["step"] % every == 0 or row["step"] == train_cfg.steps - 1:
            print(
                f"step {row['step']:6d}  loss {row['loss']:.4f}  "
                f"(freq {row['freq']:.4f} pixel {row['pixel']:.5f})  lr {row['lr']:.2e}"
            )

    trace, adam, rng = train_loop(model, train_cfg, corpus, resume=resume, on_step=on_step)
    save_checkpoint(args.out, model, adam, train_cfg.steps, rng)

    stem = str(Path(args.out).with_suffix(""))
    trace_csv = f"{stem}_loss_trace.csv"
    report.write_loss_trace_csv(trace_csv, trace)
    trace_png = f"{stem}_loss_trace.png"
    report.render_loss_figure(trace_png, trace)
    print(f"saved checkpoint {args.out} ({model.param_count()} parameters)")
    print(f"loss trace: {trace_csv}, figure: {trace_png}")
    _write_manifest(
        args.out,
        "train",
        {"train": train_cfg.to_text(), "model": model.config.to_text(), "resume": args.resume},
        corpus_paths,
        [args.out, trace_csv, trace_png],
    )
    return 0


# --- eval ---


def _qf_from_name(path: str) -> str:
    m = re.search(r"qf(\d+)", Path(path).stem)
    return m.group(1) if m else ""


def _collect_pairs(args) -> list[dict]:
    pairs = []
    if args.pairs:
        import csv as _csv

        with open(args.pairs) as fh:
            for row in _csv.DictReader(fh):
                if "gt" not in row or "test" not in row:
                    raise UsageError("--pairs CSV needs 'gt' and 'test' columns")
                pairs.append(
                    {
                        "gt": row["gt"],
                        "test": row["test"],
                        "qf": row.get("qf") or _qf_from_name(row["test"]),
                    }
                )
    else:
        gt_dir, test_dir = Path(args.gt_dir), Path(args.test_dir)
        for gt in sorted(gt_dir.iterdir()):
            if gt.suffix.lower() not in (".ppm", ".pgm"):
                continue
            candidates = [
                test_dir / (gt.stem + ext) for ext in (".jpg", ".jpeg", ".ppm", ".pgm")
            ]
            hits = [c for c in candidates if c.exists()]
            if not hits:
                hits = sorted(test_dir.glob(gt.stem + "_qf*.jpg")) + sorted(
                    test_dir.glob(gt.stem + "*.jpg")
                )
            if not hits:
                raise MissingPair(f"no test file for {gt.name} in {test_dir}")
            for hit in hits:
                pairs.append({"gt": str(gt), "test": str(hit), "qf": _qf_from_name(str(hit))})
    if not pairs:
        raise MissingPair("no evaluation pairs found")
    return pairs


def _eval_one(gt_img, test_path: str, qf: str, args, model) -> list[dict]:
    channel = args.metric_channel
    rows = []
    lossless = mx.lossless_luma_map(gt_img) if args.dct_metrics else None
    h_ref = mx.dct_histograms(lossless) if args.dct_metrics else None

    def pixel_row(img, method, cmap=None):
        row = {
            "image": Path(test_path).name,
            "qf": qf,
            "method": method,
            "psnr": mx.psnr(gt_img, img, channel),
            "ssim": mx.ssim(gt_img, img),
            "psnr_b": mx.psnr_b(gt_img, img, channel),
        }
        if args.dct_metrics and cmap is not None:
            h = mx.dct_histograms(cmap)
            row["js"] = mx.js_divergence(h, h_ref)
            row["bha"] = mx.bhattacharyya(h, h_ref)
        else:
            row["js"] = math.nan
            row["bha"] = math.nan
        return row

    if test_path.lower().endswith((".jpg", ".jpeg")):
        with open(test_path, "rb") as fh:
            q = parse_jpeg(fh.read())
        decoded = bd.decompress(q)
        cmap = mx.crop_map_to_image(mx.embedded_luma_map(q), q.pixel_dims) if args.dct_metrics else None
        rows.append(pixel_row(decoded, "jpeg", cmap))
        if model is not None:
            maps = model_forward(model, q)
            rec = reconstruct_image(maps, q.pixel_dims)
            rcmap = mx.crop_map_to_image(maps["y"], q.pixel_dims) if args.dct_metrics else None
            rows.append(pixel_row(rec, "recovered", rcmap))
    else:
        img = netpbm.read_image(test_path)
        cmap = mx.lossless_luma_map(img) if args.dct_metrics else None
        rows.append(pixel_row(img, "pixel", cmap))
    return rows


def cmd_eval(args) -> int:
    if bool(args.pairs) == bool(args.gt_dir):
        raise UsageError("use exactly one of --pairs or --dir")
    model = None
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint).build_model()
    pairs = _collect_pairs(args)
    results = []
    for pair in pairs:
        gt_img = netpbm.read_image(pair["gt"])
        results.extend(_eval_one(gt_img, pair["test"], pair["qf"], args, model))
    rep = report.rows_from_pairs(results)
    report.write_metrics_csv(args.report, rep)
    outputs = [args.report]
    if not args.no_figures:
        outputs += report.render_metrics_figures(str(Path(args.report).with_suffix("")), rep)
    for method in sorted({r.method for r in rep.rows}):
        agg = rep.mean_over(method)
        line = f"{method}: psnr {agg['psnr']:.3f}  ssim {agg['ssim']:.4f}  psnr_b {agg['psnr_b']:.3f}"
        if not math.isnan(agg["js"]):
            line += f"  js {agg['js']:.4f}  bha {agg['bha']:.4f}"
        print(line)
    print(f"wrote {', '.join(outputs)}")
    _write_manifest(
        args.report,
        "eval",
        {
            "pairs": args.pairs,
            "dir": [args.gt_dir, args.test_dir] if args.gt_dir else None,
            "dct_metrics": args.dct_metrics,
            "checkpoint": args.checkpoint,
            "metric_channel": args.metric_channel,
        },
        [p["test"] for p in pairs],
        outputs,
    )
    return 0


# --- inspect ---


def cmd_inspect(args) -> int:
    with open(args.input, "rb") as fh:
        q = parse_jpeg(fh.read())
    h, w = q.pixel_dims
    print(f"{args.input}: {w}x{h} pixels, {len(q.components)} component(s), "
          f"subsampling {q.subsampling.value}")
    if q.restart_interval:
        print(f"restart interval: {q.restart_interval} MCUs")
    for i, table in enumerate(q.quant_tables):
        print(f"quantization table {i}:")
        for row in table:
            print("   " + " ".join(f"{v:4d}" for v in row))
    for comp in q.components:
        plane = comp.coefficients
        zero_rate = (plane == 0).reshape(plane.shape[0] // 8, 8, plane.shape[1] // 8, 8).mean(
            axis=(0, 2)
        )
        print(f"component {comp.comp_id} (table {comp.qm_index}, plane {plane.shape[1]}x{plane.shape[0]}):"
              f" zero coefficients {100.0 * float((plane == 0).mean()):.2f}%")
        print("  per-frequency zero rate [%]:")
        for row in zero_rate:
            print("   " + " ".join(f"{100.0 * v:5.1f}" for v in row))
    if args.dump_coeffs:
        cmap = mx.embedded_luma_map(q)
        chans = _channel_list(args.channels)
        paths = _dump_channels(args.dump_coeffs, cmap, chans, "jpeg")
        print(f"dumped {len(paths)} channel view(s) to {args.dump_coeffs}")
    return 0


# --- synth ---


def cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    m = re.fullmatch(r"(\d+)x(\d+)", args.size)
    if not m:
        raise UsageError(f"invalid --size {args.size!r}, expected HxW like 96x96")
    h, w = int(m.group(1)), int(m.group(2))
    ext = ".pgm" if args.gray else ".ppm"
    paths = []
    for i in range(args.count):
        if args.profile == "smooth":
            img = synth.synth_image(
                args.seed + i, h, w, args.gray, detail=0.0, base_sigma=5.0, edge_sharpness=20.0
            )
        else:
            img = synth.synth_image(args.seed + i, h, w, args.gray)
        path = str(out_dir / f"synth_{args.seed + i:04d}{ext}")
        netpbm.write_image(path, img)
        paths.append(path)
    print(f"wrote {len(paths)} images to {out_dir}")
    _write_manifest(
        str(out_dir / "corpus"),
        "synth",
        {"count": args.count, "size": args.size, "gray": args.gray,
         "seed": args.seed, "profile": args.profile},
        [],
        paths,
    )
    return 0


# --- argument wiring ---


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dctrestore", description="DCT-domain JPEG restoration toolkit"
    )
    parser.add_argument("--version", action="version", version=f"dctrestore {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="compress a PPM/PGM to baseline JPEG (single or double)")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--qf", type=int)
    p.add_argument("--qf1", type=int)
    p.add_argument("--qf2", type=int)
    p.add_argument("--shift", help="dx,dy block-grid offset for double compression")
    p.add_argument("--subsampling", choices=["420", "444"], default="420")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("recover", help="restore a JPEG with a trained checkpoint")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dump-coeffs", help="directory for PGM coefficient-channel views")
    p.add_argument("--channels", default="0,1,8,9")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("train", help="train or fine-tune a recovery model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--resume")
    p.add_argument("--double-jpeg", action="store_true")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--crop", type=int)
    p.add_argument("--qf-min", type=int, dest="qf_min")
    p.add_argument("--qf-max", type=int, dest="qf_max")
    p.add_argument("--seed", type=int)
    p.add_argument("--embed-dim", type=int, dest="embed_dim")
    p.add_argument("--window-size", type=int, dest="window_size")
    p.add_argument("--num-blocks", type=int, dest="num_blocks")
    p.add_argument("--units-per-block", type=int, dest="units_per_block")
    p.add_argument("--gray", action="store_true")
    p.add_argument("--subsampling", choices=["420", "444"])
    p.add_argument("--ablation", choices=[a.value for a in Ablation])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PSNR/SSIM/PSNR-B (and DCT metrics) report")
    p.add_argument("report", help="output CSV path")
    p.add_argument("--pairs", help="CSV with gt,test[,qf] columns")
    p.add_argument("--dir", nargs=2, metavar=("GT_DIR", "TEST_DIR"), dest="dirs")
    p.add_argument("--dct-metrics", action="store_true")
    p.add_argument("--checkpoint", help="also evaluate recovered outputs")
    p.add_argument("--metric-channel", choices=["rgb", "y"], default="rgb")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="print tables, sampling and sparsity of a JPEG")
    p.add_argument("input")
    p.add_argument("--dump-coeffs", help="directory for PGM coefficient-channel views")
    p.add_argument("--channels", default="0,1,8,9")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("synth", help="write a deterministic synthetic corpus")
    p.add_argument("out_dir")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", default="96x96")
    p.add_argument("--gray", action="store_true")
    p.add_argument("--seed", type=int, default=100)
    p.add_argument("--profile", choices=["natural", "smooth"], default="natural")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "eval":
        args.gt_dir, args.test_dir = (args.dirs if args.dirs else (None, None))
    try:
        return args.func(args)
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

    spiketrack track --frames DIR --init-box FILE --out FILE [--weights DIR] [--energy-report PATH]
    spiketrack profile [--weights DIR] [--frames DIR --init-box FILE] [--sfr-table CSV] [--energy-report PATH]
    spiketrack train-toy [--steps N] [--out DIR]
    spiketrack selftest
    spiketrack gen-weights --out DIR
    spiketrack gen-sequence --out DIR
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .config import RunConfig, dump_config, load_config
from .energy import EnergyModel, EnergyTrace, energy_report, layer_energy, load_sfr_table
from .model import SpikeTrack, calibrate, init_model
from .params import load_weights, save_weights
from .synthetic import moving_square
from .tracker import Tracker, crop

log = logging.getLogger("spiketrack")

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".pgm", ".tif", ".tiff"}


class CliError(Exception):
    pass


# ---------------------------------------------------------------- io helpers


def read_frames(directory) -> list[np.ndarray]:
    d = Path(directory)
    if not d.is_dir():
        raise CliError(f"frame directory {d} does not exist")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise CliError(f"no image frames found in {d}")
    return [np.asarray(Image.open(p).convert("RGB"), dtype=np.float64) / 255.0 for p in files]


def read_init_box(path) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"init box file {p} not found")
    text = p.read_text().strip().splitlines()
    try:
        vals = [float(v) for v in text[0].replace(",", " ").split()]
    except (ValueError, IndexError):
        raise CliError(f"malformed init box in {p}: expected 'x y w h'") from None
    if len(vals) != 4 or vals[2] <= 0 or vals[3] <= 0:
        raise CliError(f"malformed init box in {p}: expected four numbers with positive w, h")
    return np.array(vals)


def write_frames(directory, frames, boxes=None):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        Image.fromarray(np.round(np.clip(f, 0, 1) * 255).astype(np.uint8)).save(d / f"{i:05d}.png")
    if boxes is not None:
        (d / "init_box.txt").write_text(" ".join(f"{v:.4f}" for v in boxes[0]) + "\n")
        np.savetxt(d / "groundtruth.txt", boxes, fmt="%.4f")


def build_model(cfg: RunConfig, weights=None) -> SpikeTrack:
    if weights is not None:
        params, meta = load_weights(weights)
        if meta.get("config"):
            from .config import from_dict

            cfg.model = from_dict(meta["config"]).model
        return SpikeTrack(cfg.model, params)
    log.warning("no --weights given; using calibrated random weights (seed %d)", cfg.seed)
    return random_model(cfg)


def random_model(cfg: RunConfig) -> SpikeTrack:
    rng = np.random.default_rng(cfg.seed)
    model = SpikeTrack(cfg.model, init_model(cfg.model, rng, cfg.head_width))
    imgs, boxes = moving_square(2, size=cfg.tracker.crop_size, seed=cfg.seed)
    z, _ = crop(imgs[0], boxes[0], cfg.tracker.crop_expansion, cfg.tracker.crop_size)
    x, _ = crop(imgs[1], boxes[0], cfg.tracker.crop_expansion, cfg.tracker.crop_size)
    calibrate(model, np.repeat(z[None], cfg.model.template_timesteps, axis=0), x[None])
    return model


def _write_report(trace: EnergyTrace, path, interval: int, extra: dict | None = None):
    rep = energy_report(trace, EnergyModel(), interval)
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    rep.to_json(p.with_suffix(".json"))
    if extra:
        doc = json.loads(p.with_suffix(".json").read_text())
        doc.update(extra)
        p.with_suffix(".json").write_text(json.dumps(doc, indent=1))
    p.with_suffix(".txt").write_text(rep.to_text() + "\n")
    return rep


# ---------------------------------------------------------------- commands


def cmd_track(args, cfg: RunConfig) -> int:
    frames = read_frames(args.frames)
    box = read_init_box(args.init_box)
    model = build_model(cfg, args.weights)
    trace = EnergyTrace() if args.energy_report else None
    tr = Tracker(model, cfg.tracker, trace=trace)
    lines, per_frame = [], []
    tr.init(frames[0], box)
    lines.append((0, box, 1.0))
    for f in frames[1:]:
        start = len(trace.records) if trace else 0
        r = tr.track(f)
        lines.append((r.index, r.box, r.score))
        if trace:
            recs = trace.records[start:]
            per_frame.append({
                "frame": r.index,
                "search_pj": sum(layer_energy(x) for x in recs if x.branch == "search"),
                "template_pj": sum(layer_energy(x) for x in recs if x.branch == "template"),
                "template_update": r.updated,
            })
    out = "".join(f"{i} {b[0]:.4f} {b[1]:.4f} {b[2]:.4f} {b[3]:.4f} {s:.6f}\n" for i, b, s in lines)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(out)
    else:
        sys.stdout.write(out)
    if trace:
        _write_report(trace, args.energy_report, cfg.tracker.update_interval,
                      {"frames": per_frame, "template_runs": tr.template_runs})
    log.info("tracked %d frames, %d template passes", len(frames), tr.template_runs)
    return 0


def cmd_profile(args, cfg: RunConfig) -> int:
    interval = cfg.tracker.update_interval
    if args.sfr_table:
        recs = load_sfr_table(args.sfr_table, cfg.model.d_cap, branch="template")
        trace = EnergyTrace()
        for r in recs:
            trace.add(r)
    else:
        if args.weights is None and not args.allow_random:
            raise CliError("profile needs --weights (or --allow-random)")
        model = build_model(cfg, args.weights)
        if args.frames:
            frames = read_frames(args.frames)
            box = read_init_box(args.init_box) if args.init_box else None
            if box is None:
                raise CliError("--frames needs --init-box")
            if len(frames) < 2:
                frames = frames * 2
        else:
            frames, boxes = moving_square(2, size=cfg.tracker.crop_size, seed=cfg.seed)
            box = boxes[0]
        trace = EnergyTrace()
        tr = Tracker(model, cfg.tracker, trace=trace)
        tr.init(frames[0], box)
        tr.track(frames[1])
    path = args.energy_report or "energy_report"
    rep = _write_report(trace, path, interval)
    print(rep.to_text())
    return 0


def cmd_train_toy(args, cfg: RunConfig) -> int:
    from .train import TOY_CONFIG, TrainConfig, evaluate, toy_setup, toy_train
    from .tracker import iou_xywh

    model, data, imgs, boxes = toy_setup(TOY_CONFIG, seed=cfg.seed, batch=args.batch)
    tcfg = TrainConfig(steps=args.steps, lr=args.lr, optimizer=args.optimizer, seed=cfg.seed, batch=args.batch)

    def show(step, total, parts):
        if step % 20 == 0:
            log.info("step %4d  loss %.4f  (cls %.4f giou %.4f l1 %.4f)", step, total, *parts)

    hist = toy_train(model, data, tcfg, callback=show)
    final = evaluate(model, data)
    res = Tracker(model, cfg.tracker).run(imgs, boxes[0])
    miou = float(np.mean([iou_xywh(r.box, b) for r, b in zip(res, boxes)]))
    print(f"initial loss {hist[0]:.4f}  final loss {final:.4f}  ratio {final / hist[0]:.3f}  tracking mIoU {miou:.3f}")
    if args.out:
        save_weights(model.params, args.out, {"config": _cfg_doc(model)})
    return 0


def _cfg_doc(model: SpikeTrack) -> dict:
    return RunConfig(model.cfg).to_dict()


def cmd_selftest(args, cfg: RunConfig) -> int:
    from .selftest import run_all

    return run_all(verbose=not args.quiet)


def cmd_gen_weights(args, cfg: RunConfig) -> int:
    model = random_model(cfg)
    save_weights(model.params, args.out, {"config": cfg.to_dict(), "seed": cfg.seed})
    print(f"wrote {len(model.params)} tensors to {args.out}")
    return 0


def cmd_gen_sequence(args, cfg: RunConfig) -> int:
    frames, boxes = moving_square(args.count, seed=cfg.seed)
    write_frames(args.out, frames, boxes)
    print(f"wrote {len(frames)} frames to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spiketrack", description="spike-driven single-object tracker")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--preset", choices=["default", "lasot"], default=None)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", parents=[common], help="track a target through a frame directory")
    p.add_argument("--frames", required=True)
    p.add_argument("--init-box", required=True)
    p.add_argument("--weights")
    p.add_argument("--out")
    p.add_argument("--energy-report")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("profile", parents=[common], help="energy report for a model or an SFR table")
    p.add_argument("--weights")
    p.add_argument("--allow-random", action="store_true")
    p.add_argument("--frames")
    p.add_argument("--init-box")
    p.add_argument("--sfr-table")
    p.add_argument("--energy-report")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("train-toy", parents=[common], help="overfit the toy model on a synthetic sequence")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--optimizer", choices=["sgd", "adam"], default="sgd")
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("selftest", parents=[common], help="run the invariant suite")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("gen-weights", parents=[common], help="write a random-initialised weight container")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_weights)

    p = sub.add_parser("gen-sequence", parents=[common], help="write a synthetic moving-square sequence")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=50)
    p.set_defaults(func=cmd_gen_sequence)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.preset, args.seed)
        return args.func(args, cfg)
    except (CliError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface.

Every subcommand is a thin wrapper over the library: inputs are read,
one library call runs, outputs are written. Configuration comes from
plain-text ``key = value`` files plus repeatable ``--set key=value``
overrides; ``--dump-config`` prints the effective defaults of a
subcommand and exits.

Exit codes: 0 success, 2 missing/empty input, 1 any other failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import datagen, mapper, rasters
from .attn import full_layer_gradient_check
from .bev import BevGridSpec, CameraPose
from .metrics import ConfusionMatrix, accumulate, summarize
from .vocab import RESERVED_LABEL, load_vocabulary

GEN_BEV_DEFAULTS = {
    "size": 500,
    "range_m": 10.0,
    "floor_cut": -1.5,
    "ceiling_cut": 1.2,
    "void_label": 0,
    "classes": "matterport20-bev",
}

TRAIN_DEFAULTS = {
    "learning_rate": 3e-3,
    "epochs": 200,
    "batch_size": 1,
    "seed": 0,
    "beta1": 0.9,
    "beta2": 0.999,
    "epsilon": 1e-8,
    "patch": 4,
    "channels": 16,
    "encoder_layers": 1,
    "attention_layers": 2,
    "n_head": 4,
    "n_point": 4,
    "grid_size": 500,
    "grid_range_m": 10.0,
    "floor_cut": -1.5,
    "ceiling_cut": 1.2,
}


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} not found: {path}", code=2)
    return p


def _parse_kv_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"bad config line (expected key = value): {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _effective_config(defaults: dict, config_path, overrides) -> dict:
    cfg = dict(defaults)
    if config_path:
        file_cfg = _parse_kv_file(_require_file(config_path, "config file"))
        for key, raw in file_cfg.items():
            if key not in cfg:
                raise CliError(f"unknown config key {key!r}")
            cfg[key] = _coerce(raw, cfg[key])
    for item in overrides or []:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in cfg:
            raise CliError(f"unknown config key {key!r}")
        cfg[key] = _coerce(raw.strip(), cfg[key])
    return cfg


def _coerce(raw: str, template):
    if isinstance(template, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    return raw


def _dump_config(defaults: dict) -> int:
    for key, value in defaults.items():
        print(f"{key} = {value}")
    return 0


def _read_pose(path) -> CameraPose:
    payload = json.loads(_require_file(path, "pose file").read_text())
    if isinstance(payload, dict):
        r = np.asarray(payload["rotation"], dtype=np.float64).reshape(3, 3)
        t = np.asarray(payload["translation"], dtype=np.float64)
        return CameraPose(r, t)
    values = np.asarray(payload, dtype=np.float64).reshape(-1)
    if values.size != 12:
        raise CliError("pose file must hold 12 numbers (row-major R then t)")
    return CameraPose(values[:9].reshape(3, 3), values[9:])


def _pose_to_list(pose: CameraPose) -> list[float]:
    return [*pose.rotation.reshape(-1).tolist(), *pose.translation.tolist()]


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen_bev(args) -> int:
    if args.dump_config:
        return _dump_config(GEN_BEV_DEFAULTS)
    cfg = _effective_config(GEN_BEV_DEFAULTS, args.spec, args.set)
    if args.image is not None:
        _require_file(args.image, "image")
    depth = rasters.read_depth(_require_file(args.depth, "depth raster"))
    sem = rasters.read_label(_require_file(args.sem, "semantic raster"))
    pose = _read_pose(args.pose)
    spec = BevGridSpec(
        size=cfg["size"],
        range_m=cfg["range_m"],
        floor_cut=cfg["floor_cut"],
        ceiling_cut=cfg["ceiling_cut"],
        void_label=cfg["void_label"],
    )
    grid = datagen.generate_bev_gt(sem, depth, pose, spec)
    vocab = load_vocabulary(cfg["classes"])
    out = Path(args.out)
    rasters.write_label(out, grid.labels.astype(np.uint8), palette=vocab.palette)
    sidecar = {
        "cell_size_m": spec.cell_size,
        "range_m": spec.range_m,
        "pose": _pose_to_list(pose),
        "classes": cfg["classes"],
    }
    out.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
    return 0


def cmd_stitch(args) -> int:
    manifest_path = _require_file(args.views_manifest, "views manifest")
    manifest = json.loads(manifest_path.read_text())
    views_meta = manifest.get("views", [])
    if not views_meta:
        raise CliError("views manifest lists no views", code=2)
    payload_kind = manifest.get("payload", "label8")
    if payload_kind not in ("label8", "rgb8"):
        raise CliError(f"unsupported payload kind {payload_kind!r}")
    base = manifest_path.parent
    views = []
    for meta in views_meta:
        raster_path = Path(meta["path"])
        if not raster_path.is_absolute():
            raster_path = base / raster_path
        _require_file(raster_path, "view raster")
        if payload_kind == "label8":
            raster = rasters.read_label(raster_path).astype(np.int64)
        else:
            raster = rasters.read_rgb(raster_path).astype(np.float64) / 255.0
        views.append(
            datagen.PinholeView(
                raster=raster,
                fx=float(meta["fx"]),
                fy=float(meta["fy"]),
                cx=float(meta["cx"]),
                cy=float(meta["cy"]),
                rotation=np.asarray(meta["rotation"], dtype=np.float64).reshape(3, 3),
                translation=np.asarray(meta.get("translation", [0, 0, 0]), dtype=np.float64),
                tag=meta.get("tag", ""),
            )
        )
    kind = "label" if payload_kind == "label8" else "rgb"
    pano, coverage = datagen.stitch_views(
        views, int(manifest["height"]), int(manifest["width"]), payload=kind
    )
    out = Path(args.out)
    if kind == "label":
        rasters.write_label(out, pano.astype(np.uint8))
    else:
        rasters.write_rgb(out, pano)
    coverage_path = out.with_name(out.stem + ".coverage.png")
    rasters.write_label(coverage_path, coverage.astype(np.uint8) * 255)
    return 0


def cmd_eval(args) -> int:
    pred_dir = Path(args.pred_dir)
    gt_dir = Path(args.gt_dir)
    if not pred_dir.is_dir():
        raise CliError(f"prediction directory not found: {pred_dir}", code=2)
    if not gt_dir.is_dir():
        raise CliError(f"ground-truth directory not found: {gt_dir}", code=2)
    vocab = load_vocabulary(args.classes)
    names = sorted(p.name for p in gt_dir.glob("*.png"))
    if not names:
        raise CliError(f"no ground-truth rasters in {gt_dir}", code=2)
    cm = ConfusionMatrix(vocab.num_classes, ignore_label=args.ignore_label)
    for name in names:
        gt = rasters.read_label(gt_dir / name)
        pred = rasters.read_label(_require_file(pred_dir / name, "prediction raster"))
        accumulate(cm, pred, gt)
    report = summarize(cm)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Path(str(out) + ".csv").write_text(report.to_csv(list(vocab.names)))
    Path(str(out) + ".json").write_text(report.to_json(list(vocab.names)))
    print(
        f"acc {report.acc:.4f}  mrecall {report.mean_recall:.4f}  "
        f"mprecision {report.mean_precision:.4f}  miou {report.mean_iou:.4f}"
    )
    return 0


def cmd_train_toy(args) -> int:
    if args.dump_config:
        return _dump_config(TRAIN_DEFAULTS)
    cfg = _effective_config(TRAIN_DEFAULTS, args.config, args.set)
    manifest_path = _require_file(args.scenes, "scenes manifest")
    manifest = json.loads(manifest_path.read_text())
    frames = manifest.get("frames", [])
    if not frames:
        raise CliError("scenes manifest lists no frames", code=2)
    vocab = load_vocabulary(manifest.get("classes", GEN_BEV_DEFAULTS["classes"]))
    spec = BevGridSpec(
        size=cfg["grid_size"],
        range_m=cfg["grid_range_m"],
        floor_cut=cfg["floor_cut"],
        ceiling_cut=cfg["ceiling_cut"],
    )
    base = manifest_path.parent

    def resolve(p):
        path = Path(p)
        return path if path.is_absolute() else base / path

    scenes = []
    dims = None
    for frame in frames:
        image = rasters.read_rgb(_require_file(resolve(frame["image"]), "image")) / 255.0
        depth = rasters.read_depth(_require_file(resolve(frame["depth"]), "depth"))
        sem = rasters.read_label(_require_file(resolve(frame["sem"]), "semantic raster"))
        pose = CameraPose(
            np.asarray(frame["pose"][:9], dtype=np.float64).reshape(3, 3),
            np.asarray(frame["pose"][9:12], dtype=np.float64),
        )
        if dims is None:
            dims = depth.shape
        gt = datagen.generate_bev_gt(sem, depth, pose, spec)
        scenes.append((image, depth, pose, gt))

    model = mapper.init_mapper_model(
        dims[0],
        dims[1],
        spec,
        num_classes=vocab.num_classes,
        patch=cfg["patch"],
        channels=cfg["channels"],
        encoder_layers=cfg["encoder_layers"],
        attention_layers=cfg["attention_layers"],
        n_head=cfg["n_head"],
        n_point=cfg["n_point"],
        seed=cfg["seed"],
    )
    train_cfg = mapper.TrainConfig(
        learning_rate=cfg["learning_rate"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        seed=cfg["seed"],
        beta1=cfg["beta1"],
        beta2=cfg["beta2"],
        epsilon=cfg["epsilon"],
    )
    _, losses = mapper.train(scenes, model, train_cfg)
    mapper.save_model(args.out_model, model)
    print(f"epochs {len(losses)}  first-loss {losses[0]:.6f}  final-loss {losses[-1]:.6f}")
    return 0


def cmd_gradcheck(args) -> int:
    try:
        c, n, heads, points = (int(x) for x in args.dims.split(","))
    except ValueError as exc:
        raise CliError(f"--dims expects C,N,HEADS,POINTS: {exc}") from exc
    err = full_layer_gradient_check(
        c=c, n=n, n_head=heads, n_point=points, step=args.step, seed=args.seed
    )
    print(f"max relative error: {err:.3e}")
    return 0 if err < 1e-4 else 1


def cmd_render_map(args) -> int:
    labels = rasters.read_label(_require_file(args.bev, "BEV raster"))
    vocab = load_vocabulary(args.palette)
    table = np.zeros((256, 3), dtype=np.uint8)
    table[: vocab.num_classes] = vocab.palette
    table[RESERVED_LABEL] = 0
    rasters.write_rgb(args.out, table[labels])
    return 0


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panobev",
        description="Panoramic bird's-eye-view semantic mapping toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-bev", help="rasterize a labeled depth panorama into a BEV map")
    p.add_argument("--image", help="RGB panorama (unused by the projection, validated if given)")
    p.add_argument("--depth", required=True, help="depth raster (16-bit mm PNG or raw f32)")
    p.add_argument("--sem", required=True, help="semantic label raster")
    p.add_argument("--pose", required=True, help="JSON pose: 12 numbers, row-major R then t")
    p.add_argument("--spec", help="key=value grid configuration file")
    p.add_argument("--out", required=True, help="output label PNG path")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")
    p.add_argument("--dump-config", action="store_true", help="print defaults and exit")
    p.set_defaults(func=cmd_gen_bev)

    p = sub.add_parser("stitch", help="stitch pinhole views into an equirectangular panorama")
    p.add_argument("--views-manifest", required=True, help="JSON manifest of views")
    p.add_argument("--out", required=True, help="output panorama path")
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("eval", help="score predicted label rasters against ground truth")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--classes", required=True, help="vocabulary name or JSON path")
    p.add_argument("--out", required=True, help="report path prefix (.csv/.json added)")
    p.add_argument("--ignore-label", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train-toy", help="train the toy mapper on a scenes manifest")
    p.add_argument("--scenes", required=True, help="JSON scenes manifest")
    p.add_argument("--config", help="key=value training configuration file")
    p.add_argument("--out-model", required=True, help="output checkpoint path")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")
    p.add_argument("--dump-config", action="store_true", help="print defaults and exit")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("gradcheck", help="finite-difference check of the attention backward pass")
    p.add_argument("--dims", default="8,16,2,4", help="C,N,HEADS,POINTS")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("render-map", help="colorize a BEV label raster with a palette")
    p.add_argument("--bev", required=True, help="BEV label PNG")
    p.add_argument("--palette", required=True, help="vocabulary name or JSON path")
    p.add_argument("--out", required=True, help="output RGB PNG")
    p.set_defaults(func=cmd_render_map)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

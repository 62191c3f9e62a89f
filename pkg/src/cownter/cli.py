"""Command-line surface: synth | tile | train | eval | predict | annotate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Errors go to standard error as single-line JSON records.
"""

from __future__ import annotations

import argparse
import glob as globlib
import json
import sys
from pathlib import Path

import numpy as np

from .blobs import blob_count
from .density import DEFAULT_SIGMA, density_peaks
from .errors import DataError, NumericError
from .fcn import load_params, save_params
from .losses import BLOB_THRESHOLD
from .manifest import (
    DatasetManifest,
    load_manifest,
    record_to_tile,
    save_manifest,
)
from .metrics import (
    DEFAULT_GRID_N,
    DEFAULT_PRESENCE_THRESHOLD,
    CountPair,
    SeedEval,
    binned_report,
)
from .raster import DEFAULT_TILE_SIZE, Label, Point, TileRecord, load_png, save_png
from .synth import DEFAULT_BIN_WEIGHTS, SceneConfig, generate_dataset
from .tiling import PadPolicy, TileGrid, assign_points, slice_scene
from .training import (
    MODEL_TYPES,
    MONITORS,
    TrainConfig,
    evaluate,
    load_split,
    predict_maps,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_MODEL_FOR_HEAD = {"detection": "lcfcn", "density": "density"}


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures on exit code 1 instead of 2."""

    def error(self, message: str) -> None:  # noqa: D102 - argparse override
        self.print_usage(sys.stderr)
        print(json.dumps({"error": "usage", "detail": message}), file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _report_error(kind: str, exc: Exception) -> None:
    print(json.dumps({"error": kind, "detail": str(exc)}), file=sys.stderr)


# ---------------------------------------------------------------------------
# synth


def _weights_from_imbalance(positive_rate: float) -> tuple[float, float, float, float]:
    """Bin weights with the requested positive-tile rate.

    The positive mass is shared among the non-empty bins in the default
    proportions, so --imbalance only moves the empty/non-empty ratio.
    """
    if not 0.0 <= positive_rate < 1.0:
        raise DataError(f"imbalance must be in [0, 1), got {positive_rate}")
    base = np.asarray(DEFAULT_BIN_WEIGHTS[1:], dtype=np.float64)
    positive = base / base.sum() * positive_rate
    return (1.0 - positive_rate, *(float(v) for v in positive))


def cmd_synth(args: argparse.Namespace) -> None:
    cfg = SceneConfig(
        tile_size=args.size,
        seed=args.seed,
        bin_weights=_weights_from_imbalance(args.imbalance),
    )
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    tiles = []
    for record, split in generate_dataset(cfg, args.tiles):
        rel = f"images/{record.id}.png"
        save_png(record.image, out / rel)
        tiles.append(record_to_tile(record, rel, split))
    save_manifest(DatasetManifest(out, tiles))
    print(f"wrote {len(tiles)} tiles and manifest.json to {out}")


# ---------------------------------------------------------------------------
# tile


def _load_scene_points(path: str | None) -> list[Point]:
    if path is None:
        return []
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, dict):
        doc = doc.get("points", [])
    try:
        return [Point(float(p["x"]), float(p["y"])) for p in doc]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed points file: {exc}") from exc


def cmd_tile(args: argparse.Namespace) -> None:
    scene = load_png(args.scene)
    policy = PadPolicy.REFLECT_PAD if args.pad else PadPolicy.DROP_PARTIAL
    grid = TileGrid(tile_size=args.tile_size, stride=args.stride, pad_policy=policy)
    slices = slice_scene(scene, grid)
    if not slices:
        raise DataError(
            f"scene {scene.width}x{scene.height} yields no tiles at size {grid.tile_size}"
        )
    points = _load_scene_points(args.points)
    assigned, orphans = assign_points(points, slices, grid)

    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    tiles = []
    for i, ts in enumerate(slices):
        # origin goes into the id so predictions can be mapped back
        tile_id = f"tile_y{ts.origin_y:06d}_x{ts.origin_x:06d}"
        local = tuple(assigned[i])
        record = TileRecord(
            id=tile_id,
            image=ts.image,
            points=local,
            label=Label.COW if local else Label.NO_COW,
        )
        rel = f"images/{tile_id}.png"
        save_png(ts.image, out / rel)
        tiles.append(record_to_tile(record, rel))
    save_manifest(DatasetManifest(out, tiles))
    print(f"wrote {len(tiles)} tiles and manifest.json to {out}")
    if orphans:
        print(f"{len(orphans)} points fell outside every emitted tile:", file=sys.stderr)
        for p in orphans:
            print(f"  orphan point ({p.x}, {p.y})", file=sys.stderr)


# ---------------------------------------------------------------------------
# train


def cmd_train(args: argparse.Namespace) -> None:
    cfg = TrainConfig(
        model=args.model,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        patience=args.patience,
        seed=args.seed,
        sigma=args.sigma,
        monitor=args.monitor,
    )
    manifest = load_manifest(args.data)
    result = train(manifest, cfg, on_epoch=print)
    save_params(result.params, args.out)
    if args.log is not None:
        Path(args.log).write_text("\n".join(result.log_lines) + "\n", encoding="utf-8")
    print(
        f"saved best epoch {result.best_epoch} "
        f"(val_metric {result.best_val_metric:.9e}) to {args.out}",
        file=sys.stderr,
    )


# ---------------------------------------------------------------------------
# eval


def _expand_models(patterns: list[str]) -> list[str]:
    paths: list[str] = []
    for pat in patterns:
        hits = sorted(globlib.glob(pat))
        paths.extend(hits if hits else [pat])
    return paths


def cmd_eval(args: argparse.Namespace) -> None:
    manifest = load_manifest(args.data)
    # targets are only needed for training; load the split without them
    data = load_split(manifest, args.split, "lcfcn")

    runs: list[SeedEval] = []
    csv_rows: list[str] = []
    if args.oracle:
        from .density import points_cell_counts

        pairs = tuple(CountPair(len(p), float(len(p))) for p in data.points)
        h, w = data.images.shape[1:3]
        cells = np.stack(
            [points_cell_counts(list(p), w, h, args.grid) for p in data.points]
        )
        runs.append(SeedEval(pairs, cells.copy(), cells))
        model_label = "oracle"
    else:
        if not args.model:
            raise DataError("eval needs --model (one or more files) or --oracle")
        paths = _expand_models(args.model)
        if args.seeds is not None and len(paths) != args.seeds:
            raise DataError(
                f"--seeds {args.seeds} but {len(paths)} model files matched: {paths}"
            )
        heads = set()
        for path in paths:
            params = load_params(path)
            heads.add(params.arch.head)
            if len(heads) > 1:
                raise DataError(f"model files mix heads: {sorted(heads)}")
            model_type = _MODEL_FOR_HEAD[params.arch.head]
            runs.append(evaluate(params, data, model_type, grid_n=args.grid))
        model_label = _MODEL_FOR_HEAD[heads.pop()]

    for seed_i, run in enumerate(runs):
        for tile_id, pair in zip(data.ids, run.pairs):
            csv_rows.append(f"{tile_id},{seed_i},{pair.y:g},{pair.y_hat:g}")

    report = binned_report(runs, decision_threshold=args.threshold)
    doc = report.to_document()
    if args.out is not None:
        Path(args.out).write_text(doc + "\n", encoding="utf-8")
    if args.csv is not None:
        Path(args.csv).write_text(
            "tile_id,seed,y,y_hat\n" + "\n".join(csv_rows) + "\n", encoding="utf-8"
        )
    print(doc)
    print(f"evaluated {model_label} on split {args.split!r} "
          f"({len(data.ids)} tiles, {len(runs)} run(s))", file=sys.stderr)


# ---------------------------------------------------------------------------
# predict


def _draw_markers(image_path: str, points: list[Point], out_path: str) -> None:
    from PIL import Image, ImageDraw

    img = Image.open(image_path).convert("RGB")
    draw = ImageDraw.Draw(img)
    arm = 4
    for p in points:
        x, y = p.x, p.y
        draw.line([(x - arm, y), (x + arm, y)], fill=(255, 40, 40), width=1)
        draw.line([(x, y - arm), (x, y + arm)], fill=(255, 40, 40), width=1)
    img.save(out_path)


def cmd_predict(args: argparse.Namespace) -> None:
    params = load_params(args.model)
    raster = load_png(args.image)
    batch = raster.data.astype(np.float32)[None]
    out_map = predict_maps(params, batch)[0]

    if params.arch.head == "detection":
        count, points = blob_count(out_map, args.threshold)
        doc = {"model": "lcfcn", "count": int(count)}
    else:
        points = density_peaks(out_map, sigma=args.sigma)
        doc = {"model": "density", "count": float(out_map.sum())}
    doc["points"] = [{"x": p.x, "y": p.y} for p in points]

    text = json.dumps(doc, indent=2)
    if args.out is not None:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    if args.overlay is not None:
        _draw_markers(args.image, points, args.overlay)


# ---------------------------------------------------------------------------
# annotate


def cmd_annotate(args: argparse.Namespace) -> None:
    from .service import serve

    serve(args.data, host=args.host, port=args.port, static_dir=args.static)


# ---------------------------------------------------------------------------
# wiring


def _build_parser() -> _Parser:
    parser = _Parser(prog="cownter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--tiles", type=int, required=True, help="number of tiles")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--imbalance", type=float, default=1.0 - DEFAULT_BIN_WEIGHTS[0],
                   help="fraction of tiles containing cattle")
    p.add_argument("--size", type=int, default=DEFAULT_TILE_SIZE, help="tile size in px")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("tile", help="slice a scene PNG into a tile dataset")
    p.add_argument("--scene", required=True, help="scene PNG path")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--tile-size", type=int, default=DEFAULT_TILE_SIZE)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--pad", action="store_true",
                   help="reflect-pad border tiles instead of dropping them")
    p.add_argument("--points", default=None,
                   help="JSON file of scene-coordinate points [{x, y}, ...]")
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("train", help="train a counting model")
    p.add_argument("--data", required=True, help="dataset directory (with manifest)")
    p.add_argument("--model", required=True, choices=MODEL_TYPES)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output weights file")
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--monitor", choices=MONITORS, default="mape")
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA,
                   help="density target kernel width (density model)")
    p.add_argument("--log", default=None, help="also write the epoch log here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score trained models on a split")
    p.add_argument("--data", required=True)
    p.add_argument("--model", nargs="*", default=[],
                   help="weights file(s); globs allowed, one per seed")
    p.add_argument("--grid", type=int, default=DEFAULT_GRID_N)
    p.add_argument("--seeds", type=int, default=None,
                   help="expected number of model files (sanity check)")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--threshold", type=float, default=DEFAULT_PRESENCE_THRESHOLD,
                   help="presence decision threshold on predicted count")
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.add_argument("--csv", default=None, help="write per-image rows here")
    p.add_argument("--oracle", action="store_true",
                   help="score the ground-truth echo predictor (debug)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="run one model on one image")
    p.add_argument("--image", required=True, help="input PNG")
    p.add_argument("--model", required=True, help="weights file")
    p.add_argument("--out", default=None, help="write prediction JSON here")
    p.add_argument("--overlay", default=None, help="write marker overlay PNG here")
    p.add_argument("--threshold", type=float, default=BLOB_THRESHOLD,
                   help="blob probability threshold (lcfcn)")
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA,
                   help="kernel width assumed for density peak extraction")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("annotate", help="serve the annotation API and UI")
    p.add_argument("--data", required=True, help="dataset directory (with manifest)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--static", default=None, help="built UI bundle directory")
    p.set_defaults(func=cmd_annotate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except NumericError as exc:
        _report_error("numeric", exc)
        return EXIT_NUMERIC
    except DataError as exc:
        _report_error("data", exc)
        return EXIT_DATA
    except OSError as exc:
        _report_error("data", exc)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())

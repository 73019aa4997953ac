"""Command-line entry point wiring the pipeline together.

Subcommands: ingest, gen, train, eval, query, report. Every command
takes all randomness from an explicit ``--seed`` and, run single
threaded with identical flags, produces byte-identical primary outputs.
A run manifest (command, config snapshot, seed, paths, version,
duration) is written atomically next to every primary output.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from dataclasses import asdict

import click
import numpy as np

from . import __version__, distill, metrics, osm_ingest, road_graph, scenario
from . import model as model_mod
from .geo import (BUILTIN_FRAMES, FrameMismatchError, InvalidCoordinateError,
                  LocalPoint, OutOfZoneError, load_frames)

_ERROR_CODES = (
    (osm_ingest.OsmParseError, "parse-error"),
    (scenario.SceneFormatError, "scene-format"),
    (road_graph.GraphFormatError, "graph-format"),
    (road_graph.UnknownEdgeError, "unknown-edge"),
    (OutOfZoneError, "out-of-zone"),
    (FrameMismatchError, "frame-mismatch"),
    (InvalidCoordinateError, "invalid-coordinate"),
    (model_mod.NumericError, "numeric-error"),
    (FileNotFoundError, "io-error"),
    (ValueError, "invalid-input"),
)


def _fail(exc: BaseException):
    code = "internal-error"
    for exc_type, name in _ERROR_CODES:
        if isinstance(exc, exc_type):
            code = name
            break
    click.echo(f"error code={code} msg={exc}", err=True)
    sys.exit(1)


def _write_manifest(output_path: str, command: str, config: dict,
                    seed, inputs: list[str], started: float):
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": sorted(inputs),
        "outputs": [os.path.basename(output_path)],
        "version": __version__,
        "duration_s": round(time.time() - started, 3),
    }
    path = output_path + ".manifest.json"
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _resolve_frame(name: str, frames_config):
    frames = load_frames(frames_config) if frames_config else BUILTIN_FRAMES
    if name not in frames:
        raise click.UsageError(
            f"unknown frame {name!r}; known: {', '.join(sorted(frames))}"
        )
    return frames[name]


@click.group()
@click.version_option(version=__version__)
@click.option("--threads", default=None, type=int,
              help="Cap numeric thread pools (use 1 for byte-stable runs).")
def main(threads):
    """Navigation-map road graphs and map-aware trajectory prediction."""
    if threads is not None:
        if threads < 1:
            raise click.UsageError("--threads must be >= 1")
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(threads)
        try:
            import threadpoolctl
            threadpoolctl.threadpool_limits(threads)
        except ImportError:
            pass


@main.command()
@click.argument("osm_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--frame", "frame_name", required=True,
              help="City frame for projection sanity checks.")
@click.option("--frames-config", type=click.Path(exists=True),
              default=None, help="Extra city frames (JSON).")
@click.option("--out", "out_path", required=True, type=click.Path())
def ingest(osm_path, frame_name, frames_config, out_path):
    """Parse OSM XML into a serialized navigation graph."""
    started = time.time()
    frame = _resolve_frame(frame_name, frames_config)
    try:
        with open(osm_path, "rb") as fh:
            nodes, ways = osm_ingest.parse_osm(fh)
        graph = osm_ingest.build_nav_graph(nodes, ways)
        # Localizing validates that every node projects into the frame.
        road_graph.localize(graph, frame)
        road_graph.save_graph(graph, out_path)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        _fail(exc)
    _write_manifest(out_path, "ingest",
                    {"frame": frame.name, "zone": frame.zone},
                    None, [osm_path], started)
    click.echo(f"ingested {len(graph.nodes)} nodes, "
               f"{len(graph.edges)} edges -> {out_path}")


def _split_of(scene_id: int, train_fraction: float) -> str:
    digest = hashlib.sha256(str(scene_id).encode("ascii")).digest()
    bucket = int.from_bytes(digest[:4], "big") % 100
    return "train" if bucket < round(train_fraction * 100) else "val"


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--n", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--roads", default=6, show_default=True)
@click.option("--lanes", default=2, show_default=True)
@click.option("--lane-width", default=3.5, show_default=True)
@click.option("--curvature", nargs=2, type=float, default=(-0.002, 0.002),
              show_default=True)
@click.option("--intersections", default=2, show_default=True)
@click.option("--noise", default=0.1, show_default=True)
@click.option("--p-turn", default=0.35, show_default=True)
@click.option("--p-lane-change", default=0.2, show_default=True)
@click.option("--split", "train_fraction", default=0.8, show_default=True,
              help="Train fraction; split by scene-id hash.")
def gen(out_dir, n, seed, roads, lanes, lane_width, curvature,
        intersections, noise, p_turn, p_lane_change, train_fraction):
    """Generate a synthetic world and scene dataset."""
    started = time.time()
    try:
        spec = scenario.WorldSpec(
            seed=seed, num_roads=roads, lanes_per_road=lanes,
            lane_width=lane_width, curvature_range=tuple(curvature),
            intersection_count=intersections,
        )
        world = scenario.generate_world(spec)
        scenes = []
        if n > 0:
            scenes = scenario.generate_scenes(
                world, n, seed=seed, noise_sigma=noise, p_turn=p_turn,
                p_lane_change=p_lane_change,
            )
        os.makedirs(out_dir, exist_ok=True)
        hd_path = os.path.join(out_dir, "world_hd.json")
        nav_path = os.path.join(out_dir, "world_nav.json")
        scenario.write_world(world, hd_path, nav_path)
        splits = {"train": [], "val": []}
        for scene in scenes:
            splits[_split_of(scene.scene_id, train_fraction)].append(scene)
        for name, subset in splits.items():
            scenario.write_scenes(
                subset, os.path.join(out_dir, f"scenes_{name}.ndjson")
            )
    except Exception as exc:  # noqa: BLE001
        _fail(exc)
    config = {
        "world": asdict(spec), "n": n, "noise": noise, "p_turn": p_turn,
        "p_lane_change": p_lane_change, "train_fraction": train_fraction,
    }
    _write_manifest(os.path.join(out_dir, "scenes_train.ndjson"), "gen",
                    config, seed, [], started)
    click.echo(f"generated {len(splits['train'])} train / "
               f"{len(splits['val'])} val scenes -> {out_dir}")


def _data_dir_option():
    return click.option(
        "--data", "data_dir", type=click.Path(exists=True, file_okay=False),
        default=lambda: os.environ.get("NAVPREDICT_DATA_DIR"),
        required=False, help="Dataset directory (or $NAVPREDICT_DATA_DIR).",
    )


def _load_view_points(data_dir: str, source: str) -> np.ndarray:
    if source == "none":
        return np.zeros((0, 2))
    if source == "hd":
        lanes = scenario.read_hd_view(os.path.join(data_dir, "world_hd.json"))
        polys = [lane.points for lane in lanes]
    else:
        polys = scenario.read_nav_view(
            os.path.join(data_dir, "world_nav.json")
        )
    if not polys:
        return np.zeros((0, 2))
    return np.concatenate(polys, axis=0)


@main.command()
@_data_dir_option()
@click.option("--map", "map_source", required=True,
              type=click.Choice(["hd", "nav", "none"]))
@click.option("--distill", "teacher_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Teacher checkpoint; enables knowledge distillation.")
@click.option("--variant", type=click.Choice(["matched", "shared"]),
              default="shared", show_default=True)
@click.option("--alpha", default=1.0, show_default=True)
@click.option("--beta", default=1.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--epochs", default=8, show_default=True)
@click.option("--lr", default=0.002, show_default=True)
@click.option("--d", "embed_width", default=64, show_default=True)
@click.option("--hidden", default=64, show_default=True)
@click.option("--map-radius", default=50.0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def train(data_dir, map_source, teacher_path, variant, alpha, beta, seed,
          epochs, lr, embed_width, hidden, map_radius, out_path):
    """Train a predictor; optionally distill from an HD-map teacher."""
    started = time.time()
    if data_dir is None:
        raise click.UsageError("--data or NAVPREDICT_DATA_DIR required")
    if teacher_path is not None and map_source != "nav":
        raise click.UsageError("--distill requires --map nav")
    try:
        scenes = scenario.read_scenes(
            os.path.join(data_dir, "scenes_train.ndjson")
        )
        tcfg = distill.TrainConfig(epochs=epochs, lr=lr, seed=seed)
        if teacher_path is not None:
            t_params, t_config = model_mod.load_checkpoint(teacher_path)
            if t_config.map_source != "hd":
                raise ValueError("teacher checkpoint must use the hd view")
            dcfg = distill.DistillConfig(alpha=alpha, beta=beta,
                                         variant=variant,
                                         teacher_checkpoint=teacher_path)
            config = model_mod.ModelConfig(
                d=distill.student_width(t_config.d, variant),
                k=t_config.k, hidden=t_config.hidden,
                map_radius=map_radius, map_source="nav",
            )
            result = distill.train(
                scenes, _load_view_points(data_dir, "nav"), config, tcfg,
                teacher=(t_params, t_config),
                teacher_map_points=_load_view_points(data_dir, "hd"),
                dcfg=dcfg,
            )
        else:
            config = model_mod.ModelConfig(
                d=embed_width, hidden=hidden, map_radius=map_radius,
                map_source=map_source,
            )
            result = distill.train(
                scenes, _load_view_points(data_dir, map_source),
                config, tcfg,
            )
        model_mod.save_checkpoint(out_path, result.params, result.config)
        with open(out_path + ".loss.csv", "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write("epoch,smoothed_loss\n")
            for epoch, value in enumerate(result.loss_curve, start=1):
                fh.write(f"{epoch},{value:.9f}\n")
    except click.UsageError:
        raise
    except Exception as exc:  # noqa: BLE001
        _fail(exc)
    config_snapshot = asdict(result.config)
    config_snapshot.update({"epochs": epochs, "lr": lr, "alpha": alpha,
                            "beta": beta, "variant": variant,
                            "distill": teacher_path})
    _write_manifest(out_path, "train", config_snapshot, seed,
                    [data_dir] + ([teacher_path] if teacher_path else []),
                    started)
    click.echo(f"trained {map_source} model "
               f"(final smoothed loss {result.final_loss:.4f}) -> {out_path}")


def _write_per_scene_csv(path, per_scene):
    keys = list(per_scene[0].keys())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(keys) + "\n")
        for row in per_scene:
            cells = [str(row["scene"])] + [
                f"{row[k]:.9f}" for k in keys if k != "scene"
            ]
            fh.write(",".join(cells) + "\n")


def _write_histogram(hist, csv_path=None, svg_path=None):
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("bin_start,bin_end,normalized_count\n")
            for i, count in enumerate(hist.counts):
                fh.write(f"{hist.bin_edges[i]:.6f},"
                         f"{hist.bin_edges[i + 1]:.6f},{count:.9f}\n")
            fh.write("kde_x,kde_density,\n")
            for x, dens in zip(hist.kde_grid, hist.kde_density):
                fh.write(f"{x:.6f},{dens:.9f},\n")
    if svg_path:
        _write_histogram_svg(hist, svg_path)


def _write_histogram_svg(hist, path, width=640, height=360, margin=40):
    """Minimal deterministic SVG: histogram bars plus the KDE polyline."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f'<svg xmlns="http://www.w3.org/2000/svg" '
                 f'width="{width}" height="{height}">\n')
        if not hist.empty:
            x_lo = hist.bin_edges[0]
            x_hi = max(hist.bin_edges[-1],
                       hist.kde_grid[-1] if hist.kde_grid else 0.0)
            y_hi = max(max(hist.counts, default=0.0),
                       max(hist.kde_density, default=0.0), 1e-9)

            def sx(x):
                return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

            def sy(y):
                return height - margin - y / y_hi * (height - 2 * margin)

            for i, count in enumerate(hist.counts):
                x0 = sx(hist.bin_edges[i])
                x1 = sx(hist.bin_edges[i + 1])
                y = sy(count)
                fh.write(f'<rect x="{x0:.2f}" y="{y:.2f}" '
                         f'width="{x1 - x0:.2f}" '
                         f'height="{height - margin - y:.2f}" '
                         f'fill="steelblue" fill-opacity="0.6"/>\n')
            pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}"
                           for x, y in zip(hist.kde_grid, hist.kde_density))
            fh.write(f'<polyline points="{pts}" fill="none" '
                     f'stroke="black"/>\n')
        fh.write("</svg>\n")


@main.command(name="eval")
@_data_dir_option()
@click.option("--ckpt", "ckpt_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--split", type=click.Choice(["train", "val"]), default="val",
              show_default=True)
@click.option("--json", "json_path", type=click.Path(), default=None)
@click.option("--csv", "csv_path", type=click.Path(), default=None)
@click.option("--hist", "hist_path", type=click.Path(), default=None)
@click.option("--hist-svg", "hist_svg_path", type=click.Path(), default=None)
def eval_cmd(data_dir, ckpt_path, split, json_path, csv_path, hist_path,
             hist_svg_path):
    """Evaluate a checkpoint on a dataset split."""
    started = time.time()
    if data_dir is None:
        raise click.UsageError("--data or NAVPREDICT_DATA_DIR required")
    try:
        params, config = model_mod.load_checkpoint(ckpt_path)
        scenes = scenario.read_scenes(
            os.path.join(data_dir, f"scenes_{split}.ndjson")
        )
        map_points = _load_view_points(data_dir, config.map_source)
        report, per_scene = metrics.evaluate_model(params, config, scenes,
                                                   map_points)
        click.echo(metrics.format_report_table(report))
        if json_path:
            with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(report.as_dict(), fh, indent=1, sort_keys=True)
                fh.write("\n")
            _write_manifest(json_path, "eval",
                            {"split": split, "ckpt": ckpt_path}, None,
                            [data_dir, ckpt_path], started)
        if csv_path:
            _write_per_scene_csv(csv_path, per_scene)
        if hist_path or hist_svg_path:
            hist = metrics.fde_histogram(
                [row["minFDE@6"] for row in per_scene]
            )
            _write_histogram(hist, hist_path, hist_svg_path)
    except click.UsageError:
        raise
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command()
@click.option("--graph", "graph_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--frame", "frame_name", required=True)
@click.option("--frames-config", type=click.Path(exists=True), default=None)
@click.option("--x", required=True, type=float)
@click.option("--y", required=True, type=float)
@click.option("--radius", required=True, type=float)
@click.option("--step", default=2.0, show_default=True,
              help="Polyline resampling step in meters.")
def query(graph_path, frame_name, frames_config, x, y, radius, step):
    """List road segments within a radius, with resampled polylines."""
    frame = _resolve_frame(frame_name, frames_config)
    try:
        graph = road_graph.load_graph(graph_path)
        local = road_graph.localize(graph, frame, resample_step=step)
        segments = road_graph.segments_in_radius(
            local, LocalPoint(x, y), radius
        )
        click.echo("src,dst,polyline")
        for seg in segments:
            poly = ";".join(f"{p.x:.6f} {p.y:.6f}" for p in seg.polyline)
            click.echo(f"{seg.src},{seg.dst},{poly}")
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command()
@click.option("--csv", "csv_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Per-scene CSV produced by eval.")
@click.option("--k", default=6, show_default=True)
@click.option("--hist", "hist_path", type=click.Path(), default=None)
@click.option("--hist-svg", "hist_svg_path", type=click.Path(), default=None)
def report(csv_path, k, hist_path, hist_svg_path):
    """Summarize a per-scene CSV: metric table and error histogram."""
    try:
        with open(csv_path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            rows = [dict(zip(header, line.strip().split(",")))
                    for line in fh if line.strip()]
        ade_col = f"minADE@{k}"
        fde_col = f"minFDE@{k}"
        if fde_col not in header:
            raise ValueError(f"column {fde_col!r} not in {csv_path}")
        fdes = [float(row[fde_col]) for row in rows]
        ades = [float(row[ade_col]) for row in rows]
        rep = metrics.MetricReport(
            scene_count=len(rows),
            values={k: {"minADE": float(np.mean(ades)),
                        "minFDE": float(np.mean(fdes)),
                        "MR": metrics.miss_rate(fdes)}},
        )
        click.echo(metrics.format_report_table(rep))
        if hist_path or hist_svg_path:
            hist = metrics.fde_histogram(fdes)
            _write_histogram(hist, hist_path, hist_svg_path)
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


if __name__ == "__main__":
    main()

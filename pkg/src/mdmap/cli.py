"""Command-line front end: one config file, composable subcommands.

``run`` executes the whole pipeline; ``acquire``/``predict``/``mdm``/
``hexbin``/``render`` stop after the named stage while sharing the same
cache, so a later command continues where an earlier one ended.  ``eval``
compares a predicted class raster against a reference and prints metrics.

Exit codes: 0 success, 2 validation, 3 transport, 4 data integrity,
5 internal failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    CatalogParseError,
    ConfigError,
    FormatError,
    IntegrityError,
    LabelError,
    MdmapError,
    MetadataError,
    TransportError,
    ValidationError,
)
from .evaluation import confusion, format_table, metrics, report_json
from .io import read_raster
from .pipeline import PipelineConfig, run_pipeline, validate_config
from .predict import ThresholdPreset
from .raster import ArgumentError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_TRANSPORT = 3
EXIT_INTEGRITY = 4
EXIT_INTERNAL = 5

#: Subcommand name -> last pipeline stage it executes.
_STAGE_COMMANDS = {
    "acquire": "acquire",
    "predict": "predict",
    "mdm": "mdm",
    "hexbin": "hexbin",
    "render": "render",
    "run": None,
}


def _add_pipeline_command(sub, name: str, help_text: str) -> None:
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--config", required=True, help="pipeline config file (TOML)")
    p.add_argument("--threshold", help="detection threshold: opt, hp, or a number")
    p.add_argument("--min-obs", type=int, help="minimum valid observations per pixel")
    p.add_argument("--hex-width-m", type=float, help="hexagon flat-to-flat width, metres")
    p.add_argument("--trim", type=float, help="left-trim fraction for cell means")
    p.add_argument("--top-k", type=int, help="number of top pixels to report")
    p.add_argument("--land-polygons", help="GeoJSON land polygons for coastline masking")
    p.add_argument("--output-dir", help="artifact root (overrides config)")


def _apply_overrides(config: PipelineConfig, args) -> PipelineConfig:
    updates = {}
    if args.threshold is not None:
        try:
            updates["threshold"] = ThresholdPreset.from_name(args.threshold)
        except ArgumentError:
            updates["threshold"] = ThresholdPreset.custom(float(args.threshold))
    if args.min_obs is not None:
        updates["min_obs"] = args.min_obs
    if args.hex_width_m is not None:
        updates["hex_width_m"] = args.hex_width_m
    if args.trim is not None:
        updates["trim_fraction"] = args.trim
    if args.top_k is not None:
        updates["top_k"] = args.top_k
    if args.land_polygons is not None:
        land = Path(args.land_polygons).resolve()
        if not land.is_file():
            raise ValidationError(f"land polygons file does not exist: {land}")
        updates["land_polygons"] = land
    if args.output_dir is not None:
        updates["output_dir"] = Path(args.output_dir).resolve()
    return dataclasses.replace(config, **updates) if updates else config


def _run_stage_command(args) -> int:
    config = _apply_overrides(validate_config(args.config), args)
    ledger = run_pipeline(config, until=_STAGE_COMMANDS[args.command])
    for stage in ledger.stages:
        print(f"{stage.name:<8} {stage.status:<10} {stage.wall_time_s:.3f}s")
    print(f"artifacts under {config.output_dir / ledger.run_id}")
    return EXIT_OK


def _class_plane(path: str) -> tuple[np.ndarray, np.ndarray]:
    # Class planes carry no acquisition semantics; any date placeholder works.
    raster = read_raster(path, default_date=datetime.date(1970, 1, 1))
    plane = raster.bands[0].values
    valid = ~np.isnan(plane)
    return np.where(valid, plane, 0).astype(np.int64), valid


def _run_eval(args) -> int:
    pred, pred_valid = _class_plane(args.pred)
    ref, ref_valid = _class_plane(args.ref)
    labels = [int(v) for v in args.labels.split(",")]
    valid = pred_valid & ref_valid
    ms = metrics(confusion(pred, ref, labels, valid=valid))
    print(format_table(ms))
    if args.json:
        Path(args.json).write_text(report_json(ms))
        print(f"report written to {args.json}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdmap",
        description="Marine debris density mapping from satellite scene time series.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_pipeline_command(sub, "acquire", "query or index scenes and stop")
    _add_pipeline_command(sub, "predict", "run through probability prediction and stop")
    _add_pipeline_command(sub, "mdm", "run through the debris-metric stage and stop")
    _add_pipeline_command(sub, "hexbin", "run through hexagonal binning and stop")
    _add_pipeline_command(sub, "render", "run the full pipeline through rendering")
    _add_pipeline_command(sub, "run", "run the full pipeline")

    e = sub.add_parser("eval", help="score a predicted class raster against a reference")
    e.add_argument("--pred", required=True, help="predicted class raster")
    e.add_argument("--ref", required=True, help="reference class raster")
    e.add_argument("--labels", default="0,1", help="comma-separated class labels")
    e.add_argument("--json", help="also write the metric report as JSON")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "eval":
            return _run_eval(args)
        return _run_stage_command(args)
    except (ConfigError, ValidationError, ArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (IntegrityError, FormatError, MetadataError, LabelError,
            CatalogParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except MdmapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

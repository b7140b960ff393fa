import csv
import datetime
import json
import shutil

import numpy as np
import pytest

from mdmap import (
    ArgumentError,
    Band,
    ConfigError,
    IntegrityError,
    SceneRaster,
    TransportError,
    ValidationError,
    run_pipeline,
    validate_config,
    write_raster,
)
from mdmap.cli import main
from mdmap.indices import BAND_NAMES
from mdmap.io import probability_path
from mdmap.masking import CLASS_CLOUD, CLASS_WATER
from mdmap.pipeline import PIPELINE_STAGES

from support import make_grid

# Two spectral signatures for the shipped logistic weights: background
# water scores ~2e-4, the planted patch ~0.99997.
BG = {"red": 0.06, "re2": 0.05, "nir": 0.04, "swir1": 0.07}
HOT = {"red": 0.05, "re2": 0.04, "nir": 0.30, "swir1": 0.02}
HOT_ROWS = slice(2, 4)
HOT_COLS = slice(3, 5)

WEIGHTS = {
    "bias": -6.0,
    "coefficients": {"red": 0.0, "re2": 0.0, "nir": 0.0, "swir1": 0.0,
                     "ndvi": -2.0, "fdi": 60.0},
}

BASE_CONFIG = """
[roi]
corner_a = [35.0, 24.0]
corner_b = [35.2, 24.3]
date_start = 2021-06-01
date_end = 2021-06-30

[scenes]
local_dir = "scenes"

[predictor]
weights = "weights.json"

[run]
output_dir = "out"
"""


def write_scene(path, date, names=None, hot=True):
    grid = make_grid()
    bands = []
    for canonical, name in zip(BAND_NAMES, names or BAND_NAMES):
        plane = np.full(grid.shape, BG[canonical], np.float32)
        if hot:
            plane[HOT_ROWS, HOT_COLS] = HOT[canonical]
        bands.append(Band(name, plane))
    write_raster(SceneRaster(grid, bands, date), path)
    return grid


def build_workspace(root, n_dates=3, config_text=BASE_CONFIG, names=None):
    scenes = root / "scenes"
    scenes.mkdir(exist_ok=True)
    for k in range(n_dates):
        date = datetime.date(2021, 6, 1 + k)
        write_scene(scenes / f"SCN{k:02d}_{date.isoformat()}.f32", date, names)
    (root / "weights.json").write_text(json.dumps(WEIGHTS))
    config = root / "config.toml"
    config.write_text(config_text)
    return config


def stage_statuses(ledger):
    return {s.name: s.status for s in ledger.stages}


class TestValidateConfig:
    def test_defaults(self, tmp_path):
        config = build_workspace(tmp_path)
        cfg = validate_config(config)
        assert cfg.threshold.name == "opt"
        assert cfg.threshold.value == 0.815
        assert cfg.min_obs == 3
        assert cfg.hex_width_m == 5000.0
        assert cfg.trim_fraction == 0.5
        assert cfg.top_k == 10
        assert cfg.workers == 1
        assert cfg.product_type == "S2MSI2A"
        assert cfg.scene_dir == (tmp_path / "scenes").resolve()
        assert cfg.output_dir == (tmp_path / "out").resolve()
        assert cfg.weights_path == (tmp_path / "weights.json").resolve()
        assert not cfg.use_catalog

    def test_explicit_values(self, tmp_path):
        text = BASE_CONFIG + """
[mdm]
threshold = 0.33
min_obs = 2

[hexbin]
width_m = 800.0
trim_fraction = 0.25
top_k = 4
"""
        cfg = validate_config(build_workspace(tmp_path, config_text=text))
        assert cfg.threshold.name == "custom"
        assert cfg.threshold.value == 0.33
        assert cfg.min_obs == 2
        assert cfg.hex_width_m == 800.0
        assert cfg.trim_fraction == 0.25
        assert cfg.top_k == 4

    def test_unknown_section_rejected(self, tmp_path):
        config = build_workspace(tmp_path, config_text=BASE_CONFIG + "\n[extra]\nx = 1\n")
        with pytest.raises(ConfigError, match="unknown config section"):
            validate_config(config)

    def test_unknown_key_rejected(self, tmp_path):
        config = build_workspace(
            tmp_path, config_text=BASE_CONFIG.replace("[run]", "[run]\ncolour = 3")
        )
        with pytest.raises(ConfigError, match="unknown key run.colour"):
            validate_config(config)

    def test_unknown_band_map_key_rejected(self, tmp_path):
        text = BASE_CONFIG.replace(
            'local_dir = "scenes"', 'local_dir = "scenes"\nband_map = { blue = "B02" }'
        )
        with pytest.raises(ConfigError, match="band_map"):
            validate_config(build_workspace(tmp_path, config_text=text))

    def test_invalid_toml_rejected(self, tmp_path):
        config = tmp_path / "config.toml"
        config.write_text("this is [not toml")
        with pytest.raises(ConfigError):
            validate_config(config)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            validate_config(tmp_path / "absent.toml")

    def test_exactly_one_scene_source(self, tmp_path):
        both = BASE_CONFIG.replace('local_dir = "scenes"',
                                   'local_dir = "scenes"\ncatalog = true')
        with pytest.raises(ValidationError, match="exactly one scene source"):
            validate_config(build_workspace(tmp_path, config_text=both))
        neither = BASE_CONFIG.replace('local_dir = "scenes"', "")
        with pytest.raises(ValidationError, match="exactly one scene source"):
            validate_config(build_workspace(tmp_path, config_text=neither))

    def test_exactly_one_predictor_source(self, tmp_path):
        both = BASE_CONFIG.replace('weights = "weights.json"',
                                   'weights = "weights.json"\nprob_dir = "scenes"')
        with pytest.raises(ValidationError, match="exactly one predictor source"):
            validate_config(build_workspace(tmp_path, config_text=both))

    def test_missing_paths_rejected(self, tmp_path):
        config = build_workspace(tmp_path)
        shutil.rmtree(tmp_path / "scenes")
        with pytest.raises(ValidationError, match="local_dir"):
            validate_config(config)

    def test_missing_weights_rejected(self, tmp_path):
        config = build_workspace(tmp_path)
        (tmp_path / "weights.json").unlink()
        with pytest.raises(ValidationError, match="weights"):
            validate_config(config)

    def test_missing_roi_rejected(self, tmp_path):
        text = BASE_CONFIG.split("[scenes]")[1]
        config = build_workspace(tmp_path, config_text="[scenes]" + text)
        with pytest.raises(ValidationError, match=r"\[roi\]"):
            validate_config(config)

    def test_bad_threshold_rejected(self, tmp_path):
        text = BASE_CONFIG + '\n[mdm]\nthreshold = "sometimes"\n'
        with pytest.raises(ValidationError, match="threshold"):
            validate_config(build_workspace(tmp_path, config_text=text))
        text = BASE_CONFIG + "\n[mdm]\nthreshold = 1.5\n"
        with pytest.raises(ValidationError, match="threshold"):
            validate_config(build_workspace(tmp_path, config_text=text))

    def test_bad_numbers_rejected(self, tmp_path):
        bad = [BASE_CONFIG + "\n" + section
               for section in ("[hexbin]\nwidth_m = -5.0",
                               "[hexbin]\ntrim_fraction = 1.0",
                               "[hexbin]\ntop_k = 0", "[mdm]\nmin_obs = 0")]
        bad.append(BASE_CONFIG.replace('output_dir = "out"',
                                       'output_dir = "out"\nworkers = 0'))
        for text in bad:
            config = build_workspace(tmp_path, config_text=text)
            with pytest.raises(ValidationError):
                validate_config(config)


def read_cells(run_dir):
    with open(run_dir / "hexbin" / "cells.csv") as fh:
        return list(csv.DictReader(fh))


class TestRunPipeline:
    def test_full_run_produces_artifacts(self, tmp_path):
        cfg = validate_config(build_workspace(tmp_path))
        ledger = run_pipeline(cfg)
        assert [s.name for s in ledger.stages] == list(PIPELINE_STAGES)
        assert all(s.status == "succeeded" for s in ledger.stages)
        assert ledger.run_id == "run-" + cfg.config_hash()[:12]
        run_dir = cfg.output_dir / ledger.run_id
        assert (run_dir / "acquire" / "manifest.json").is_file()
        assert (run_dir / "mdm" / "mdm.csv").is_file()
        assert (run_dir / "hexbin" / "cells.csv").is_file()
        assert (run_dir / "hexbin" / "top_pixels.csv").is_file()
        assert (run_dir / "render" / "density_map.svg").is_file()
        assert (run_dir / "ledger.json").is_file()
        svg = (run_dir / "render" / "density_map.svg").read_text()
        assert 'class="hex-cell"' in svg

    def test_hot_patch_dominates(self, tmp_path):
        cfg = validate_config(build_workspace(tmp_path))
        ledger = run_pipeline(cfg)
        run_dir = cfg.output_dir / ledger.run_id
        # the whole 12x10 grid fits inside one 5 km hexagon; its trimmed
        # mean keeps the upper half of values, washing the hot patch in
        cells = read_cells(run_dir)
        assert len(cells) == 1
        with open(run_dir / "hexbin" / "top_pixels.csv") as fh:
            top = list(csv.DictReader(fh))
        assert float(top[0]["mdm"]) > 99.0
        # top pixels are the 4 planted ones, then background zeros
        assert [round(float(t["mdm"])) for t in top[:4]] == [100, 100, 100, 100]
        assert float(top[4]["mdm"]) == 0.0

    def test_rerun_skips_everything_and_keeps_bytes(self, tmp_path):
        cfg = validate_config(build_workspace(tmp_path))
        first = run_pipeline(cfg)
        run_dir = cfg.output_dir / first.run_id
        before = {
            p: (run_dir / p).read_bytes()
            for p in ("mdm/mdm.csv", "hexbin/cells.csv", "hexbin/top_pixels.csv",
                      "render/density_map.svg", "acquire/manifest.json")
        }
        second = run_pipeline(cfg)
        assert all(s.status == "skipped" for s in second.stages)
        for rel, payload in before.items():
            assert (run_dir / rel).read_bytes() == payload

    def test_deleted_stage_reruns_only_suffix(self, tmp_path):
        cfg = validate_config(build_workspace(tmp_path))
        first = run_pipeline(cfg)
        run_dir = cfg.output_dir / first.run_id
        cells_before = (run_dir / "hexbin" / "cells.csv").read_bytes()
        shutil.rmtree(run_dir / "hexbin")
        again = run_pipeline(cfg)
        statuses = stage_statuses(again)
        assert statuses["mdm"] == "skipped"
        assert statuses["hexbin"] == "succeeded"
        # regenerated bytes match, so render sees an unchanged input and skips
        assert statuses["render"] == "skipped"
        assert (run_dir / "hexbin" / "cells.csv").read_bytes() == cells_before

    def test_scene_edit_reruns_pipeline(self, tmp_path):
        config = build_workspace(tmp_path)
        cfg = validate_config(config)
        run_pipeline(cfg)
        # drop the hot patch from the last scene; every stage must rerun
        date = datetime.date(2021, 6, 3)
        write_scene(tmp_path / "scenes" / f"SCN02_{date.isoformat()}.f32", date,
                    hot=False)
        again = run_pipeline(cfg)
        assert all(s.status == "succeeded" for s in again.stages)

    def test_until_stops_early(self, tmp_path):
        cfg = validate_config(build_workspace(tmp_path))
        ledger = run_pipeline(cfg, until="mdm")
        assert [s.name for s in ledger.stages] == list(PIPELINE_STAGES[:6])
        run_dir = cfg.output_dir / ledger.run_id
        assert (run_dir / "mdm" / "mdm.csv").is_file()
        assert not (run_dir / "hexbin").exists()
        # finishing the run afterwards reuses the cached prefix
        rest = run_pipeline(cfg)
        statuses = stage_statuses(rest)
        assert statuses["mdm"] == "skipped"
        assert statuses["render"] == "succeeded"

    def test_unknown_until_rejected(self, tmp_path):
        cfg = validate_config(build_workspace(tmp_path))
        with pytest.raises(ArgumentError):
            run_pipeline(cfg, until="polish")

    def test_failure_lands_in_ledger(self, tmp_path):
        text = BASE_CONFIG.replace('weights = "weights.json"', 'prob_dir = "probs"')
        (tmp_path / "probs").mkdir()
        config = build_workspace(tmp_path, config_text=text)
        cfg = validate_config(config)
        with pytest.raises(IntegrityError):
            run_pipeline(cfg)
        ledgers = list(cfg.output_dir.glob("*/ledger.json"))
        assert len(ledgers) == 1
        doc = json.loads(ledgers[0].read_text())
        failed = [s for s in doc["stages"] if s["status"] == "failed"]
        assert failed and failed[0]["name"] == "predict"
        assert "probability" in failed[0]["message"]

    def test_external_probabilities_match_baseline(self, tmp_path):
        baseline_cfg = validate_config(build_workspace(tmp_path))
        ledger = run_pipeline(baseline_cfg)
        predict_dir = baseline_cfg.output_dir / ledger.run_id / "predict"

        # feed the baseline's own probability files back through prob_dir
        ext_root = tmp_path / "ext"
        ext_root.mkdir()
        prob_dir = ext_root / "probs"
        prob_dir.mkdir()
        for path in predict_dir.glob("probs_*"):
            shutil.copyfile(path, prob_dir / path.name)
        shutil.copytree(tmp_path / "scenes", ext_root / "scenes")
        text = BASE_CONFIG.replace('weights = "weights.json"', 'prob_dir = "probs"')
        config = ext_root / "config.toml"
        config.write_text(text)
        (ext_root / "weights.json").write_text("unused")
        cfg = validate_config(config)
        second = run_pipeline(cfg)
        a = baseline_cfg.output_dir / ledger.run_id / "mdm" / "mdm.csv"
        b = cfg.output_dir / second.run_id / "mdm" / "mdm.csv"
        assert a.read_bytes() == b.read_bytes()

    def test_band_map_renames(self, tmp_path):
        text = BASE_CONFIG.replace(
            'local_dir = "scenes"',
            'local_dir = "scenes"\n'
            'band_map = { red = "B04", re2 = "B06", nir = "B08", swir1 = "B11" }',
        )
        config = build_workspace(tmp_path, config_text=text,
                                 names=("B04", "B06", "B08", "B11"))
        ledger = run_pipeline(validate_config(config))
        assert all(s.status == "succeeded" for s in ledger.stages)

    def test_scene_class_mask_drops_observations(self, tmp_path):
        text = BASE_CONFIG + '\n[masks]\nscene_class_dir = "scl"\n[mdm]\nmin_obs = 2\n'
        config = build_workspace(tmp_path, config_text=text)
        scl = tmp_path / "scl"
        scl.mkdir()
        grid = make_grid()
        for k in range(3):
            date = datetime.date(2021, 6, 1 + k)
            codes = np.full(grid.shape, CLASS_WATER, np.float32)
            if k == 0:
                codes[:, :] = CLASS_CLOUD  # first date fully clouded
            write_raster(SceneRaster(grid, [Band("scl", codes)], date),
                         scl / f"SCN{k:02d}_{date.isoformat()}.f32")
        cfg = validate_config(config)
        run_dir = cfg.output_dir / run_pipeline(cfg).run_id
        with open(run_dir / "mdm" / "mdm.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows and all(r["obs_count"] == "2" for r in rows)

    def test_land_polygons_exclude_pixels(self, tmp_path):
        land = {
            "type": "Polygon",
            "coordinates": [[[23.9, 34.9], [24.006, 34.9], [24.006, 35.1],
                             [23.9, 35.1], [23.9, 34.9]]],
        }
        (tmp_path / "land.json").write_text(json.dumps(land))
        text = BASE_CONFIG + '\n[masks]\nland_polygons = "land.json"\n'
        cfg = validate_config(build_workspace(tmp_path, config_text=text))
        run_dir = cfg.output_dir / run_pipeline(cfg).run_id
        with open(run_dir / "mdm" / "mdm.csv") as fh:
            lons = [float(r["lon"]) for r in csv.DictReader(fh)]
        assert lons and min(lons) > 24.006


class TestCli:
    def test_run_exit_zero(self, tmp_path, capsys):
        config = build_workspace(tmp_path)
        assert main(["run", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        for stage in PIPELINE_STAGES:
            assert stage in out
        assert "artifacts under" in out

    def test_stage_command_stops_at_stage(self, tmp_path):
        config = build_workspace(tmp_path)
        assert main(["mdm", "--config", str(config)]) == 0
        run_dirs = list((tmp_path / "out").iterdir())
        assert len(run_dirs) == 1
        assert (run_dirs[0] / "mdm").is_dir()
        assert not (run_dirs[0] / "hexbin").exists()

    def test_config_problem_exits_2(self, tmp_path, capsys):
        config = build_workspace(tmp_path, config_text=BASE_CONFIG + "\n[wat]\nx = 1\n")
        assert main(["run", "--config", str(config)]) == 2
        assert "error:" in capsys.readouterr().err
        assert main(["run", "--config", str(tmp_path / "absent.toml")]) == 2

    def test_transport_problem_exits_3(self, tmp_path):
        text = BASE_CONFIG.replace(
            'local_dir = "scenes"',
            f'catalog = true\nendpoint = "file://{tmp_path}/absent.json"',
        )
        config = build_workspace(tmp_path, config_text=text)
        assert main(["run", "--config", str(config)]) == 3

    def test_integrity_problem_exits_4(self, tmp_path):
        text = BASE_CONFIG.replace('weights = "weights.json"', 'prob_dir = "probs"')
        (tmp_path / "probs").mkdir()
        config = build_workspace(tmp_path, config_text=text)
        assert main(["run", "--config", str(config)]) == 4

    def test_internal_problem_exits_5(self, tmp_path):
        # every observation cloud-masked: nothing to bin, rendering fails
        text = BASE_CONFIG + '\n[masks]\nscene_class_dir = "scl"\n'
        config = build_workspace(tmp_path, config_text=text)
        scl = tmp_path / "scl"
        scl.mkdir()
        grid = make_grid()
        for k in range(3):
            date = datetime.date(2021, 6, 1 + k)
            codes = np.full(grid.shape, CLASS_CLOUD, np.float32)
            write_raster(SceneRaster(grid, [Band("scl", codes)], date),
                         scl / f"SCN{k:02d}_{date.isoformat()}.f32")
        assert main(["run", "--config", str(config)]) == 5

    def test_threshold_override_changes_run(self, tmp_path):
        config = build_workspace(tmp_path)
        assert main(["run", "--config", str(config)]) == 0
        assert main(["run", "--config", str(config), "--threshold", "hp"]) == 0
        assert len(list((tmp_path / "out").iterdir())) == 2

    def test_eval_subcommand(self, tmp_path, capsys):
        grid = make_grid(width=2, height=2)
        date = datetime.date(2021, 6, 1)
        pred = np.array([[1, 1], [0, 1]], np.float32)
        ref = np.array([[1, 1], [1, 0]], np.float32)
        write_raster(SceneRaster(grid, [Band("class", pred)], date),
                     tmp_path / "pred.f32")
        write_raster(SceneRaster(grid, [Band("class", ref)], date),
                     tmp_path / "ref.f32")
        report = tmp_path / "report.json"
        code = main(["eval", "--pred", str(tmp_path / "pred.f32"),
                     "--ref", str(tmp_path / "ref.f32"), "--json", str(report)])
        assert code == 0
        out = capsys.readouterr().out
        assert "precision (micro)" in out
        doc = json.loads(report.read_text())
        assert doc["per_class"]["1"]["iou"] == pytest.approx(0.5)

    def test_eval_foreign_label_exits_4(self, tmp_path, capsys):
        grid = make_grid(width=2, height=2)
        date = datetime.date(2021, 6, 1)
        write_raster(SceneRaster(grid, [Band("class", np.full((2, 2), 9, np.float32))],
                                 date), tmp_path / "pred.f32")
        write_raster(SceneRaster(grid, [Band("class", np.zeros((2, 2), np.float32))],
                                 date), tmp_path / "ref.f32")
        code = main(["eval", "--pred", str(tmp_path / "pred.f32"),
                     "--ref", str(tmp_path / "ref.f32")])
        assert code == 4
        assert "error:" in capsys.readouterr().err

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "mdmap" in capsys.readouterr().out

import json
import subprocess
import sys

import numpy as np
import pytest

from layerlab import load_layers, load_volume, save_volume
from layerlab.cli import main

from corpus import halves_image, quadrant_image


@pytest.fixture
def halves_png(tmp_path):
    vol, _ = halves_image(dim=64)
    path = tmp_path / "halves.png"
    save_volume(vol, path)
    return path


def run_cli(argv):
    """Invoke main() in-process; returns (exit_code, None)."""
    try:
        return main(argv), None
    except SystemExit as exc:  # argparse errors
        return int(exc.code), exc


class TestDecomposeCommand:
    def test_two_color_image(self, halves_png, tmp_path, capsys):
        out = tmp_path / "out.lbld"
        code, _ = run_cli(["decompose", "--input", str(halves_png), "--out", str(out),
                           "--num-layers", "2", "--superpixels", "50"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["rmse"] < 0.02
        assert out.exists()
        layers = load_layers(out)
        assert layers.num_layers == 2

    def test_missing_input_exits_2(self, tmp_path, capsys):
        code, _ = run_cli(["decompose", "--input", str(tmp_path / "nope.png"),
                           "--out", str(tmp_path / "o.lbld")])
        assert code == 2
        assert "--input" in capsys.readouterr().err

    def test_zero_layers_exits_2(self, halves_png, tmp_path, capsys):
        code, _ = run_cli(["decompose", "--input", str(halves_png),
                           "--out", str(tmp_path / "o.lbld"), "--num-layers", "0"])
        assert code == 2
        assert "num-layers" in capsys.readouterr().err

    def test_stage_timings_cover_total(self, halves_png, tmp_path, capsys):
        code, _ = run_cli(["decompose", "--input", str(halves_png),
                           "--out", str(tmp_path / "o.lbld"),
                           "--num-layers", "2", "--superpixels", "30"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        stage_sum = sum(report["stages_ms"].values())
        assert abs(stage_sum - report["total_ms"]) <= 0.1 * report["total_ms"]

    def test_palette_override_and_constraints(self, tmp_path, capsys):
        vol, palette = quadrant_image(dim=32)
        img = tmp_path / "quad.png"
        save_volume(vol, img)
        pal_path = tmp_path / "pal.json"
        pal_path.write_text(json.dumps({"colors": palette.colors.tolist()}))
        cons_path = tmp_path / "cons.json"
        cons_path.write_text(json.dumps({"strokes": [
            {"x": 4, "y": 4, "t": 0, "layer": 0, "value": 1.0}]}))
        out = tmp_path / "q.lbld"
        code, _ = run_cli(["decompose", "--input", str(img), "--out", str(out),
                           "--palette", str(pal_path), "--constraints", str(cons_path),
                           "--superpixels", "16"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["rmse"] < 0.02
        assert load_layers(out).num_layers == 4


class TestRecolorCommand:
    def _decomposed(self, halves_png, tmp_path):
        out = tmp_path / "out.lbld"
        code, _ = run_cli(["decompose", "--input", str(halves_png), "--out", str(out),
                           "--num-layers", "2", "--superpixels", "50"])
        assert code == 0
        return out

    def test_identity_recolor_matches_reconstruction(self, halves_png, tmp_path, capsys):
        lbld = self._decomposed(halves_png, tmp_path)
        layers = load_layers(lbld)
        pal_path = tmp_path / "pal.json"
        pal_path.write_text(json.dumps({"colors": layers.palette.colors.tolist()}))
        out_png = tmp_path / "recolored.png"
        code, _ = run_cli(["recolor", "--layers", str(lbld), "--palette", str(pal_path),
                           "--out", str(out_png)])
        assert code == 0
        assert "ms/frame" in capsys.readouterr().out
        from layerlab import compose
        baseline = tmp_path / "baseline.png"
        save_volume(compose(layers, layers.palette), baseline)
        assert out_png.read_bytes() == baseline.read_bytes()

    def test_palette_size_mismatch_exits_2(self, halves_png, tmp_path, capsys):
        lbld = self._decomposed(halves_png, tmp_path)
        pal_path = tmp_path / "pal.json"
        pal_path.write_text(json.dumps({"colors": [[1.0, 0.0, 0.0]]}))
        code, _ = run_cli(["recolor", "--layers", str(lbld), "--palette", str(pal_path),
                           "--out", str(tmp_path / "x.png")])
        assert code == 2

    def test_recolor_changes_colors(self, halves_png, tmp_path):
        lbld = self._decomposed(halves_png, tmp_path)
        pal_path = tmp_path / "pal.json"
        pal_path.write_text(json.dumps({"colors": [[0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]}))
        out_png = tmp_path / "green.png"
        code, _ = run_cli(["recolor", "--layers", str(lbld), "--palette", str(pal_path),
                           "--out", str(out_png)])
        assert code == 0
        recolored = load_volume(out_png)
        # green channel now dominates where red used to be
        assert recolored.pixels()[:, 1].mean() > 0.5


class TestFilterCommand:
    def test_filter_writes_new_layers(self, halves_png, tmp_path):
        lbld = tmp_path / "out.lbld"
        run_cli(["decompose", "--input", str(halves_png), "--out", str(lbld),
                 "--num-layers", "2", "--superpixels", "50"])
        filtered = tmp_path / "filtered.lbld"
        render = tmp_path / "render.png"
        code, _ = run_cli(["filter", "--layers", str(lbld), "--layer", "0",
                           "--kernel", "gaussian", "--sigma", "3.0",
                           "--out", str(filtered), "--render", str(render)])
        assert code == 0
        a = load_layers(lbld)
        b = load_layers(filtered)
        assert not np.array_equal(a.weights[0], b.weights[0])
        assert np.array_equal(a.weights[1], b.weights[1])
        assert render.exists()

    def test_bad_layer_id_exits_2(self, halves_png, tmp_path):
        lbld = tmp_path / "out.lbld"
        run_cli(["decompose", "--input", str(halves_png), "--out", str(lbld),
                 "--num-layers", "2", "--superpixels", "50"])
        code, _ = run_cli(["filter", "--layers", str(lbld), "--layer", "5",
                           "--kernel", "emboss", "--out", str(tmp_path / "f.lbld")])
        assert code == 2


class TestInspectCommand:
    def test_prints_meta(self, halves_png, tmp_path, capsys):
        lbld = tmp_path / "out.lbld"
        run_cli(["decompose", "--input", str(halves_png), "--out", str(lbld),
                 "--num-layers", "2", "--superpixels", "50"])
        capsys.readouterr()
        code, _ = run_cli(["inspect", "--layers", str(lbld)])
        assert code == 0
        meta = json.loads(capsys.readouterr().out)
        assert meta["width"] == 64 and meta["num_layers"] == 2

    def test_bad_file_fails(self, tmp_path, capsys):
        bad = tmp_path / "bad.lbld"
        bad.write_bytes(b"NOPE" + b"\0" * 40)
        code, _ = run_cli(["inspect", "--layers", str(bad)])
        assert code == 1
        assert "bad magic" in capsys.readouterr().err


class TestDeterminism:
    def test_byte_identical_lbld_across_processes(self, halves_png, tmp_path):
        outs = []
        for name in ("a.lbld", "b.lbld"):
            out = tmp_path / name
            proc = subprocess.run(
                [sys.executable, "-m", "layerlab.cli", "decompose",
                 "--input", str(halves_png), "--out", str(out),
                 "--num-layers", "2", "--superpixels", "40", "--seed", "3"],
                capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

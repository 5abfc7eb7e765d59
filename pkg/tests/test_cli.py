import json
import subprocess
import sys

import numpy as np
import pytest
from click.testing import CliRunner

from klsaliency import Tensor, load_npy, save_npy
from klsaliency.cli import main
from klsaliency.pngio import read_png_chw
from klsaliency.tinycnn import forward, load_manifest


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory, tinycnn_dir):
    """Activation bundle exported from one forward pass on the fixture."""
    out = tmp_path_factory.mktemp("bundle")
    manifest = load_manifest(tinycnn_dir / "manifest.json")
    image = read_png_chw(tinycnn_dir / "input.png", channels=1)
    result = forward(manifest, image)
    save_npy(out / "features.npy", Tensor(result.features.maps))
    save_npy(out / "logits.npy", Tensor(result.logits.values))
    return out


def _explain_args(bundle_dir, out_dir, image=None, label=3, **overrides):
    args = [
        "explain",
        "--features", str(bundle_dir / "features.npy"),
        "--logits", str(bundle_dir / "logits.npy"),
        "--label", str(label),
        "--out-dir", str(out_dir),
    ]
    if image is not None:
        args += ["--image", str(image)]
    for key, value in overrides.items():
        args += [f"--{key.replace('_', '-')}", str(value)]
    return args


def run_cli(args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


class TestExplain:
    def test_fixture_bundle_succeeds(self, bundle_dir, tmp_path, tinycnn_dir):
        out = tmp_path / "out"
        result = run_cli(_explain_args(bundle_dir, out, image=tinycnn_dir / "input.png"))
        assert result.exit_code == 0, result.output
        assert (out / "heatmap.png").is_file()
        assert (out / "overlay.png").is_file()
        metrics = json.loads((out / "metrics.json").read_text())
        assert np.isfinite(metrics["kl_value"])
        assert metrics["mode"] == "literal"
        assert metrics["perplexity"] == 9.0  # default 30 clamped to K-1
        assert metrics["degenerate_gradient"] is False
        assert 0.0 <= metrics["salient_area_fraction"] <= 1.0

    def test_literal_mode_is_label_invariant(self, bundle_dir, tmp_path):
        out3 = tmp_path / "l3"
        out7 = tmp_path / "l7"
        assert run_cli(_explain_args(bundle_dir, out3, label=3)).exit_code == 0
        assert run_cli(_explain_args(bundle_dir, out7, label=7)).exit_code == 0
        assert (out3 / "heatmap.png").read_bytes() == (out7 / "heatmap.png").read_bytes()
        # The alpha weights themselves do differ between labels.
        m3 = json.loads((out3 / "metrics.json").read_text())
        m7 = json.loads((out7 / "metrics.json").read_text())
        assert m3["kl_value"] != m7["kl_value"]

    def test_matched_mode_runs_when_counts_agree(self, bundle_dir, tmp_path):
        out = tmp_path / "matched"
        result = run_cli(_explain_args(bundle_dir, out, mode="matched"))
        assert result.exit_code == 0
        assert json.loads((out / "metrics.json").read_text())["mode"] == "matched"

    def test_matched_mode_shape_mismatch_exits_2(self, tmp_path):
        np.save(tmp_path / "features.npy", np.random.default_rng(1).uniform(size=(5, 4, 4)))
        np.save(tmp_path / "logits.npy", np.arange(10.0))
        out = tmp_path / "out"
        result = run_cli(_explain_args(tmp_path, out, mode="matched"))
        assert result.exit_code == 2
        assert "combine" in result.stderr

    def test_degenerate_logits_exit_3_with_metrics(self, tmp_path):
        np.save(tmp_path / "features.npy", np.random.default_rng(2).uniform(size=(3, 4, 4)))
        np.save(tmp_path / "logits.npy", np.full(10, 1.25))
        out = tmp_path / "out"
        result = run_cli(_explain_args(tmp_path, out))
        assert result.exit_code == 3
        assert "standardize" in result.stderr
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["degenerate_gradient"] is True
        assert metrics["salient_area_fraction"] == 0.0

    def test_label_out_of_range_exit_2(self, bundle_dir, tmp_path):
        result = run_cli(_explain_args(bundle_dir, tmp_path / "out", label=10))
        assert result.exit_code == 2
        assert "load-inputs" in result.stderr

    def test_missing_features_exit_2(self, bundle_dir, tmp_path):
        args = _explain_args(bundle_dir, tmp_path / "out")
        args[args.index("--features") + 1] = str(tmp_path / "absent.npy")
        result = run_cli(args)
        assert result.exit_code == 2
        assert "load-inputs" in result.stderr

    def test_unwritable_out_dir_exit_2(self, bundle_dir, tmp_path):
        blocker = tmp_path / "blocked"
        blocker.write_text("a file where a directory must go")
        result = run_cli(_explain_args(bundle_dir, blocker / "out"))
        assert result.exit_code == 2
        assert "write-outputs" in result.stderr

    def test_deterministic_outputs(self, bundle_dir, tmp_path, tinycnn_dir):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        image = tinycnn_dir / "input.png"
        assert run_cli(_explain_args(bundle_dir, out_a, image=image)).exit_code == 0
        assert run_cli(_explain_args(bundle_dir, out_b, image=image)).exit_code == 0
        for name in ("heatmap.png", "overlay.png", "metrics.json"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def _gaussian_bump_bundle(path, sigma, seed=9):
    path.mkdir(parents=True, exist_ok=True)
    y, x = np.mgrid[0:32, 0:32].astype(np.float64)
    bump = np.exp(-(((x - 16.0) ** 2 + (y - 16.0) ** 2) / (2.0 * sigma**2)))
    np.save(path / "features.npy", bump[None, :, :])
    np.save(path / "logits.npy", np.random.default_rng(seed).normal(size=10))
    return path


class TestCompare:
    def _compare_args(self, a, b, out, label=3):
        return [
            "compare",
            "--features-a", str(a / "features.npy"),
            "--logits-a", str(a / "logits.npy"),
            "--features-b", str(b / "features.npy"),
            "--logits-b", str(b / "logits.npy"),
            "--label", str(label),
            "--out-dir", str(out),
        ]

    def test_peaked_vs_diffuse(self, tmp_path):
        peaked = _gaussian_bump_bundle(tmp_path / "peaked", sigma=2.0)
        diffuse = _gaussian_bump_bundle(tmp_path / "diffuse", sigma=12.0)
        out = tmp_path / "cmp"
        result = run_cli(self._compare_args(peaked, diffuse, out))
        assert result.exit_code == 0, result.output
        doc = json.loads((out / "comparison.json").read_text())
        assert doc["salient_area_fraction_a"] < doc["salient_area_fraction_b"]
        assert doc["ratio"] < 0.8
        assert (out / "a" / "heatmap.png").is_file()
        assert (out / "b" / "heatmap.png").is_file()

    def test_bundle_against_itself(self, bundle_dir, tmp_path):
        out = tmp_path / "cmp"
        result = run_cli(self._compare_args(bundle_dir, bundle_dir, out))
        assert result.exit_code == 0
        doc = json.loads((out / "comparison.json").read_text())
        assert doc["salient_area_fraction_a"] == doc["salient_area_fraction_b"]
        assert doc["ratio"] == 1.0

    def test_missing_side_exit_2(self, bundle_dir, tmp_path):
        ghost = tmp_path / "ghost"
        ghost.mkdir()
        result = run_cli(self._compare_args(bundle_dir, ghost, tmp_path / "cmp"))
        assert result.exit_code == 2
        assert "bundle B" in result.stderr

    def test_degenerate_side_still_reports(self, bundle_dir, tmp_path):
        flat = tmp_path / "flat"
        flat.mkdir()
        np.save(flat / "features.npy", np.random.default_rng(3).uniform(size=(3, 4, 4)))
        np.save(flat / "logits.npy", np.zeros(10))
        out = tmp_path / "cmp"
        result = run_cli(self._compare_args(bundle_dir, flat, out))
        assert result.exit_code == 3
        doc = json.loads((out / "comparison.json").read_text())
        assert doc["degenerate_b"] is True
        assert doc["salient_area_fraction_b"] == 0.0


class TestForwardExplain:
    def _args(self, tinycnn_dir, out, label=3):
        return [
            "forward-explain",
            "--manifest", str(tinycnn_dir / "manifest.json"),
            "--image", str(tinycnn_dir / "input.png"),
            "--label", str(label),
            "--out-dir", str(out),
        ]

    def test_matches_explain_on_exported_bundle(self, tinycnn_dir, bundle_dir, tmp_path):
        out_fwd = tmp_path / "fwd"
        out_exp = tmp_path / "exp"
        assert run_cli(self._args(tinycnn_dir, out_fwd)).exit_code == 0
        assert run_cli(
            _explain_args(bundle_dir, out_exp, image=tinycnn_dir / "input.png")
        ).exit_code == 0
        for name in ("heatmap.png", "overlay.png", "metrics.json"):
            assert (out_fwd / name).read_bytes() == (out_exp / name).read_bytes()

    def test_corrupt_manifest_exit_2(self, tinycnn_dir, tmp_path):
        bad = tmp_path / "manifest.json"
        bad.write_text("{broken")
        args = self._args(tinycnn_dir, tmp_path / "out")
        args[args.index("--manifest") + 1] = str(bad)
        result = run_cli(args)
        assert result.exit_code == 2
        assert "model-load" in result.stderr

    def test_image_size_mismatch_exit_2(self, tinycnn_dir, tmp_path):
        from PIL import Image

        small = tmp_path / "small.png"
        Image.new("L", (16, 16), color=128).save(small)
        args = self._args(tinycnn_dir, tmp_path / "out")
        args[args.index("--image") + 1] = str(small)
        result = run_cli(args)
        assert result.exit_code == 2
        assert "shape" in result.stderr
        assert "load-inputs" in result.stderr


class TestSubprocessDeterminism:
    def test_two_process_runs_byte_identical(self, bundle_dir, tinycnn_dir, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            cmd = [
                sys.executable, "-m", "klsaliency", "explain",
                "--features", str(bundle_dir / "features.npy"),
                "--logits", str(bundle_dir / "logits.npy"),
                "--image", str(tinycnn_dir / "input.png"),
                "--label", "3",
                "--out-dir", str(out),
            ]
            proc = subprocess.run(cmd, capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            outs.append(out)
        for name in ("heatmap.png", "overlay.png", "metrics.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


class TestBundleRoundTrip:
    def test_exported_npy_parse_back(self, bundle_dir):
        features = load_npy(bundle_dir / "features.npy")
        logits = load_npy(bundle_dir / "logits.npy")
        assert features.ndim == 3
        assert logits.shape == (10,)

import json

import numpy as np
import pytest
from click.testing import CliRunner

from objerase.cli import main
from objerase.images import encode_png, load_image, mask_to_png, save_image


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def scene(tmp_path):
    rng = np.random.default_rng(0)
    image = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    mask = np.zeros((8, 8), dtype=bool)
    mask[2:5, 2:5] = True
    image_path = tmp_path / "image.png"
    mask_path = tmp_path / "mask.png"
    save_image(image, image_path)
    (mask_path).write_bytes(mask_to_png(mask))
    return image, mask, image_path, mask_path


BASE = ["--steps", "4", "--seed", "0", "--backend", "toy"]


class TestErase:
    def test_empty_mask_returns_input(self, runner, tmp_path, scene):
        image, _, image_path, _ = scene
        empty_path = tmp_path / "empty.png"
        empty_path.write_bytes(mask_to_png(np.zeros((8, 8), dtype=bool)))
        out = tmp_path / "out.png"
        result = runner.invoke(
            main,
            ["erase", "--image", str(image_path), "--mask", str(empty_path), "--out", str(out)]
            + BASE,
        )
        assert result.exit_code == 0, result.output
        assert np.array_equal(load_image(out), image)

    def test_missing_mask_flag_exits_2_with_usage(self, runner, tmp_path, scene):
        _, _, image_path, _ = scene
        result = runner.invoke(
            main, ["erase", "--image", str(image_path), "--out", str(tmp_path / "o.png")]
        )
        assert result.exit_code == 2
        assert "Usage" in result.output or "usage" in result.output

    def test_full_strategy_writes_no_curves(self, runner, tmp_path, scene):
        _, _, image_path, mask_path = scene
        curves = tmp_path / "curves.jsonl"
        result = runner.invoke(
            main,
            ["erase", "--image", str(image_path), "--mask", str(mask_path),
             "--out", str(tmp_path / "o.png"), "--strategy", "full",
             "--curves", str(curves)] + BASE,
        )
        assert result.exit_code == 0, result.output
        assert not curves.exists()

    def test_token_strategy_writes_curves(self, runner, tmp_path, scene):
        _, _, image_path, mask_path = scene
        curves = tmp_path / "curves.jsonl"
        result = runner.invoke(
            main,
            ["erase", "--image", str(image_path), "--mask", str(mask_path),
             "--out", str(tmp_path / "o.png"), "--strategy", "token",
             "--curves", str(curves)] + BASE,
        )
        assert result.exit_code == 0, result.output
        lines = curves.read_text().strip().splitlines()
        assert lines
        assert json.loads(lines[0])["timestep"] == 4

    def test_unreadable_image_exits_3(self, runner, tmp_path, scene):
        _, _, _, mask_path = scene
        result = runner.invoke(
            main,
            ["erase", "--image", str(tmp_path / "absent.png"), "--mask", str(mask_path),
             "--out", str(tmp_path / "o.png")] + BASE,
        )
        assert result.exit_code == 3

    def test_unknown_backend_exits_4(self, runner, tmp_path, scene):
        _, _, image_path, mask_path = scene
        result = runner.invoke(
            main,
            ["erase", "--image", str(image_path), "--mask", str(mask_path),
             "--out", str(tmp_path / "o.png"), "--backend", "sdxl", "--steps", "4"],
        )
        assert result.exit_code == 4

    def test_config_file_with_flag_override(self, runner, tmp_path, scene):
        image, mask, image_path, mask_path = scene
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"steps": 4, "seed": 3, "strategy": "full"}))
        out = tmp_path / "o.png"
        result = runner.invoke(
            main,
            ["erase", "--image", str(image_path), "--mask", str(mask_path),
             "--out", str(out), "--config", str(cfg_path), "--strategy", "none"],
        )
        assert result.exit_code == 0, result.output
        # strategy overridden to none, steps/seed taken from the file
        from objerase.latent import RemovalConfig
        from objerase.pipeline import run_removal

        direct = run_removal(image, mask, RemovalConfig(steps=4, seed=3, strategy="none"))
        assert out.read_bytes() == encode_png(direct.image)


class TestAblate:
    def _corpus(self, tmp_path):
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        rng = np.random.default_rng(1)
        image = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        mask = np.zeros((8, 8), dtype=bool)
        mask[1:4, 1:4] = True
        save_image(image, corpus / "sample.png")
        (corpus / "sample.mask.png").write_bytes(mask_to_png(mask))
        return corpus

    def test_two_strategies_two_rows(self, runner, tmp_path):
        corpus = self._corpus(tmp_path)
        out_dir = tmp_path / "out"
        result = runner.invoke(
            main,
            ["ablate", "--corpus", str(corpus), "--out-dir", str(out_dir),
             "--strategies", "none,full", "--steps", "4"],
        )
        assert result.exit_code == 0, result.output
        lines = (out_dir / "ablation.csv").read_text().strip().splitlines()
        assert len(lines) == 3  # header + 2 rows
        none_row = lines[1].split(",")
        full_row = lines[2].split(",")
        assert none_row[0] == "none" and full_row[0] == "full"
        # Blending pins the background, so background PSNR matches exactly.
        assert none_row[4] == full_row[4]

    def test_sweep_is_deterministic(self, runner, tmp_path):
        corpus = self._corpus(tmp_path)
        csvs = []
        for name in ("a", "b"):
            out_dir = tmp_path / name
            result = runner.invoke(
                main,
                ["ablate", "--corpus", str(corpus), "--out-dir", str(out_dir),
                 "--strategies", "token,none", "--steps", "4", "--seed", "7"],
            )
            assert result.exit_code == 0, result.output
            csvs.append((out_dir / "ablation.csv").read_bytes())
        assert csvs[0] == csvs[1]

    def test_empty_corpus_exits_2(self, runner, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        result = runner.invoke(
            main, ["ablate", "--corpus", str(empty), "--out-dir", str(tmp_path / "o")]
        )
        assert result.exit_code == 2

    def test_reference_matrix(self, runner, tmp_path):
        corpus = self._corpus(tmp_path)
        out_dir = tmp_path / "refs"
        result = runner.invoke(
            main,
            ["ablate", "--corpus", str(corpus), "--out-dir", str(out_dir),
             "--strategies", "token", "--references", "matched,first", "--steps", "4"],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads((out_dir / "ablation.json").read_text())
        refs = [row["reference"] for row in payload["rows"]]
        assert refs == ["matched", "first"]


class TestVerify:
    def test_fast_verify_passes_and_writes_json(self, runner, tmp_path):
        json_path = tmp_path / "report.json"
        result = runner.invoke(main, ["verify", "--fast", "--json", str(json_path)])
        assert result.exit_code == 0, result.output
        assert "[PASS]" in result.output
        assert "[FAIL]" not in result.output
        payload = json.loads(json_path.read_text())
        assert payload["passed"] is True

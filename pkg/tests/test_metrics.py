import math

import numpy as np
import pytest

from objerase.errors import InvalidInputError
from objerase.metrics import EvalReport, EvalRow, mask_coverage, psnr


class TestPsnr:
    def test_identical_images_are_infinite(self):
        img = np.random.default_rng(0).integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        assert psnr(img, img) == math.inf

    def test_off_by_one_closed_form(self):
        a = np.zeros((16, 16), dtype=np.uint8)
        b = np.ones((16, 16), dtype=np.uint8)
        oracle = 10.0 * math.log10(255.0**2 / 1.0)
        assert oracle == pytest.approx(48.1308, abs=5e-5)
        assert psnr(a, b) == pytest.approx(oracle, abs=1e-9)

    def test_region_restriction(self):
        a = np.zeros((4, 4), dtype=np.uint8)
        b = a.copy()
        b[0, 0] = 10  # damage outside the region
        region = np.zeros((4, 4), dtype=bool)
        region[2:, 2:] = True
        assert psnr(a, b, region=region) == math.inf
        assert psnr(a, b) < math.inf

    def test_region_on_color_images(self):
        rng = np.random.default_rng(1)
        a = rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
        b = a.copy()
        b[0, 0] = 0
        region = np.ones((6, 6), dtype=bool)
        region[0, 0] = False
        assert psnr(a, b, region=region) == math.inf

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            psnr(np.zeros((2, 2)), np.zeros((3, 3)))

    def test_empty_region_rejected(self):
        with pytest.raises(InvalidInputError):
            psnr(np.zeros((2, 2)), np.zeros((2, 2)), region=np.zeros((2, 2), dtype=bool))


class TestEvalReport:
    def _rows(self):
        return [
            EvalRow("none", "matched", 1, math.inf, math.inf, 0.25),
            EvalRow("full", "matched", 1, 30.5, math.inf, 0.25),
        ]

    def test_csv_layout(self):
        csv = EvalReport(rows=self._rows()).to_csv()
        lines = csv.strip().split("\n")
        assert lines[0] == EvalReport.CSV_HEADER
        assert lines[1] == "none,matched,1,inf,inf,0.250000"
        assert lines[2] == "full,matched,1,30.5000,inf,0.250000"

    def test_json_round_trips(self):
        import json

        payload = json.loads(EvalReport(rows=self._rows()).to_json())
        assert payload["rows"][0]["psnr_full"] == "inf"
        assert payload["rows"][1]["psnr_full"] == "30.5000"

    def test_mask_coverage(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[:2] = True
        assert mask_coverage(mask) == 0.5

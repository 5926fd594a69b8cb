import numpy as np
import pytest

from vixseg.errors import ConfigError, ShapeError
from vixseg.metrics import (
    MetricReport,
    boundary_voxels,
    dsc_iou,
    evaluate_case,
    hd95,
    image_diagonal,
    write_case_csv,
    write_dotplot_csv,
)


def brute_force_hd95(a, b, spacing=None):
    """O(n^2) all-pairs oracle with the same empty-mask conventions."""
    rank = a.ndim
    spacing = np.ones(rank) if spacing is None else np.asarray(spacing, dtype=np.float64)
    if not a.any() and not b.any():
        return 0.0, True
    if a.any() != b.any():
        return image_diagonal(a.shape, spacing), False
    pa = np.argwhere(boundary_voxels(a)).astype(np.float64)
    pb = np.argwhere(boundary_voxels(b)).astype(np.float64)

    def directed(p, q):
        d = np.sqrt((((p[:, None, :] - q[None, :, :]) * spacing) ** 2).sum(-1)).min(axis=1)
        return np.percentile(d, 95, method="linear")

    return float(max(directed(pa, pb), directed(pb, pa))), True


class TestDscIou:
    def test_identical_maps(self):
        labels = np.random.default_rng(0).integers(0, 3, size=(10, 10))
        d, j = dsc_iou(labels, labels, 3)
        assert np.array_equal(d, np.ones(3))
        assert np.array_equal(j, np.ones(3))

    def test_disjoint_equal_regions(self):
        a = np.zeros((8, 8), dtype=int)
        b = np.zeros((8, 8), dtype=int)
        a[:2, :2] = 1
        b[4:6, 4:6] = 1
        d, j = dsc_iou(a, b, 2)
        assert d[1] == 0.0 and j[1] == 0.0

    def test_half_overlap(self):
        # equal squares of area 8 overlapping in 4 cells
        a = np.zeros((8, 8), dtype=int)
        b = np.zeros((8, 8), dtype=int)
        a[0:2, 0:4] = 1
        b[0:2, 2:6] = 1
        d, j = dsc_iou(a, b, 2)
        assert d[1] == 0.5
        assert j[1] == pytest.approx(1.0 / 3.0)

    def test_both_empty_class_scores_one(self):
        a = np.zeros((4, 4), dtype=int)
        d, j = dsc_iou(a, a, 3)
        assert d[1] == j[1] == 1.0

    def test_dsc_iou_identity_1000(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            a = rng.integers(0, 3, size=(8, 8))
            b = rng.integers(0, 3, size=(8, 8))
            d, j = dsc_iou(a, b, 3)
            assert np.allclose(d, 2 * j / (1 + j))
            assert np.all(d >= j - 1e-15)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a = rng.integers(0, 3, size=(9, 9))
        b = rng.integers(0, 3, size=(9, 9))
        da, ja = dsc_iou(a, b, 3)
        db, jb = dsc_iou(b, a, 3)
        assert np.array_equal(da, db) and np.array_equal(ja, jb)

    def test_label_out_of_range(self):
        with pytest.raises(ShapeError):
            dsc_iou(np.array([[3]]), np.array([[0]]), 3)


class TestHd95:
    def test_identical_masks(self):
        m = np.zeros((10, 10), dtype=bool)
        m[2:6, 3:8] = True
        assert hd95(m, m) == (0.0, True)

    def test_translated_square(self):
        a = np.zeros((24, 24), dtype=bool)
        b = np.zeros((24, 24), dtype=bool)
        a[5:10, 5:10] = True
        b[5:10, 8:13] = True
        value, defined = hd95(a, b)
        assert defined and value == 3.0

    def test_brute_force_exact_50_pairs(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            a = rng.random((24, 24)) > 0.6
            b = rng.random((24, 24)) > 0.6
            got = hd95(a, b)
            want = brute_force_hd95(a, b)
            assert got == want

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a = rng.random((16, 16)) > 0.5
        b = rng.random((16, 16)) > 0.5
        assert hd95(a, b) == hd95(b, a)

    def test_spacing_scale(self):
        rng = np.random.default_rng(4)
        a = rng.random((12, 12)) > 0.5
        b = rng.random((12, 12)) > 0.5
        v1, _ = hd95(a, b)
        v3, _ = hd95(a, b, (3.0, 3.0))
        assert v3 == pytest.approx(3.0 * v1, rel=1e-12)

    def test_anisotropic_spacing_matches_oracle(self):
        rng = np.random.default_rng(5)
        a = rng.random((14, 14)) > 0.55
        b = rng.random((14, 14)) > 0.55
        got = hd95(a, b, (1.0, 2.5))
        want = brute_force_hd95(a, b, (1.0, 2.5))
        assert got[0] == pytest.approx(want[0], rel=1e-12)

    def test_both_empty(self):
        z = np.zeros((6, 6), dtype=bool)
        assert hd95(z, z) == (0.0, True)

    def test_one_empty_flagged_diagonal(self):
        a = np.zeros((6, 8), dtype=bool)
        b = np.zeros((6, 8), dtype=bool)
        b[2, 2] = True
        value, defined = hd95(a, b)
        assert not defined
        assert value == pytest.approx(np.sqrt(36 + 64))

    def test_bad_spacing(self):
        m = np.ones((4, 4), dtype=bool)
        with pytest.raises(ConfigError):
            hd95(m, m, (1.0, 0.0))

    def test_3d(self):
        a = np.zeros((8, 8, 8), dtype=bool)
        b = np.zeros((8, 8, 8), dtype=bool)
        a[2:4, 2:4, 2:4] = True
        b[2:4, 2:4, 4:6] = True
        got = hd95(a, b)
        want = brute_force_hd95(a, b)
        assert got == want


class TestReports:
    def _reports(self):
        rng = np.random.default_rng(6)
        reports = []
        for i in range(4):
            pred = rng.integers(0, 3, size=(12, 12))
            gt = rng.integers(0, 3, size=(12, 12))
            reports.append(evaluate_case(f"case{i}", pred, gt, 3))
        return reports

    def test_case_csv_row_count(self, tmp_path):
        reports = self._reports()
        path = tmp_path / "metrics.csv"
        write_case_csv(path, reports)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "case_id,class_id,dsc,iou,hd95,hd95_defined"
        assert len(lines) - 1 == 4 * 3

    def test_dotplot_recomputation(self, tmp_path):
        import csv

        reports = self._reports()
        path = tmp_path / "dot.csv"
        write_dotplot_csv(path, reports)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        for row in rows:
            c = int(row["class_id"])
            vals = {
                "dsc": [r.dsc[c] for r in reports],
                "iou": [r.iou[c] for r in reports],
                "hd95": [r.hd95_values[c] for r in reports],
            }[row["metric"]]
            assert float(row["mean"]) == np.mean(vals)
            assert float(row["std"]) == np.std(vals)

    def test_foreground_means(self):
        r = MetricReport(
            "c", np.array([0.9, 0.8, 0.6]), np.array([0.8, 0.7, 0.5]),
            np.array([1.0, 2.0, 4.0]), np.array([True, True, True]),
        )
        assert r.mean_dsc() == pytest.approx(0.7)
        assert r.mean_iou() == pytest.approx(0.6)
        assert r.mean_hd95() == pytest.approx(3.0)

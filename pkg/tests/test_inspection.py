"""Surface inspection: PGM I/O, patch geometry, features, whitening,
two-pass detection, and localization."""

import numpy as np
import pytest

from vwkde.core import SeedSpec
from vwkde.errors import (
    DegenerateFeaturesError,
    InsufficientDataError,
    InvalidConfigError,
    InvalidDataError,
    PgmParseError,
)
from vwkde.inspection import (
    GrayImage,
    detect_defect,
    extract_patches,
    fit_whitener,
    image_features,
    inject_square,
    iou,
    load_pgm,
    localize_defect,
    patch_features,
    rank_auc,
    save_pgm,
    synthetic_texture,
    write_inspection_csv,
)


class TestPgmIo:
    def test_tiny_file_bit_exact(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
        img = load_pgm(path)
        np.testing.assert_array_equal(img.pixels, [[0, 255], [128, 64]])

    def test_round_trip_8bit(self, tmp_path):
        img = synthetic_texture(40, 56, SeedSpec(1))
        path = tmp_path / "r.pgm"
        save_pgm(img, path)
        back = load_pgm(path)
        np.testing.assert_array_equal(back.pixels, img.pixels)

    def test_round_trip_16bit(self, tmp_path):
        rng = np.random.default_rng(2)
        img = GrayImage(rng.integers(0, 65535, size=(20, 30)).astype(np.uint16))
        path = tmp_path / "wide.pgm"
        save_pgm(img, path)
        back = load_pgm(path)
        np.testing.assert_array_equal(back.pixels, img.pixels)
        assert back.pixels.dtype == np.uint16

    def test_ascii_p2_rejected(self, tmp_path):
        path = tmp_path / "ascii.pgm"
        path.write_bytes(b"P2\n2 2\n255\n0 1 2 3\n")
        with pytest.raises(PgmParseError):
            load_pgm(path)

    def test_truncated_payload_reports_offset(self, tmp_path):
        path = tmp_path / "short.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes(7))
        with pytest.raises(PgmParseError, match="byte"):
            load_pgm(path)

    def test_header_comments_skipped(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 1\n255\n" + bytes([9, 30]))
        img = load_pgm(path)
        np.testing.assert_array_equal(img.pixels, [[9, 30]])

    def test_bad_maxval(self, tmp_path):
        path = tmp_path / "mv.pgm"
        path.write_bytes(b"P5\n1 1\n70000\n\x00\x00")
        with pytest.raises(PgmParseError):
            load_pgm(path)


class TestPatchGeometry:
    def test_exact_fit_single_patch(self):
        img = GrayImage(np.zeros((32, 32), dtype=np.uint8))
        ps = extract_patches(img)
        assert len(ps) == 1
        np.testing.assert_array_equal(ps.origins, [[0, 0]])

    def test_48_gives_four(self):
        img = GrayImage(np.zeros((48, 48), dtype=np.uint8))
        ps = extract_patches(img)
        assert len(ps) == 4

    def test_496_gives_canonical_900(self):
        # floor((496 - 32) / 16) + 1 = 30 windows per axis
        img = GrayImage(np.zeros((496, 496), dtype=np.uint8))
        ps = extract_patches(img)
        assert len(ps) == 900

    def test_origins_on_stride_grid_and_contained(self):
        img = GrayImage(np.zeros((100, 80), dtype=np.uint8))
        ps = extract_patches(img)
        assert np.all(ps.origins % 16 == 0)
        assert np.all(ps.origins[:, 0] + 32 <= 100)
        assert np.all(ps.origins[:, 1] + 32 <= 80)
        # expected window counts per axis
        assert len(ps) == ((100 - 32) // 16 + 1) * ((80 - 32) // 16 + 1)

    def test_footprints_cover_grid_span(self):
        img = GrayImage(np.zeros((64, 64), dtype=np.uint8))
        ps = extract_patches(img)
        covered = np.zeros((64, 64), dtype=bool)
        for r, c in ps.origins:
            covered[r : r + 32, c : c + 32] = True
        assert covered.all()

    def test_too_small_image(self):
        img = GrayImage(np.zeros((16, 40), dtype=np.uint8))
        with pytest.raises(InvalidDataError):
            extract_patches(img)


class TestPatchFeatures:
    def test_constant_patch_zero_guarded(self):
        feats = patch_features(np.full((32, 32), 57.0))
        np.testing.assert_allclose(feats, [0.0, 0.0, 0.0, 0.0], atol=1e-12)

    def test_dc_offset_invariance(self):
        rng = np.random.default_rng(3)
        patch = rng.uniform(40, 200, size=(32, 32))
        np.testing.assert_allclose(
            patch_features(patch), patch_features(patch + 25.0), atol=1e-9
        )

    def test_step_edge_transpose_symmetry(self):
        step = np.zeros((32, 32))
        step[:, 16:] = 100.0
        np.testing.assert_allclose(
            patch_features(step), patch_features(step.T), atol=1e-12
        )

    def test_feature_vector_shape_and_kurtosis_convention(self):
        rng = np.random.default_rng(4)
        feats = patch_features(rng.uniform(0, 255, size=(32, 32)))
        assert feats.shape == (4,)
        assert feats[0] > 0 and feats[1] > 0
        # non-excess kurtosis of any nondegenerate distribution is >= 1
        assert feats[3] >= 1.0


class TestWhitener:
    def test_identity_covariance_on_own_corpus(self):
        rng = np.random.default_rng(5)
        base = rng.normal(size=(500, 4)) @ np.diag([3.0, 0.5, 1.5, 0.1])
        base += rng.normal(size=4)
        whit = fit_whitener([base])
        out = whit.apply(base)
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-10)
        np.testing.assert_allclose(np.cov(out, rowvar=False, ddof=1), np.eye(4), atol=1e-8)

    def test_already_white_gives_near_identity(self):
        rng = np.random.default_rng(6)
        white = rng.standard_normal((20000, 4))
        whit = fit_whitener([white])
        assert np.abs(whit.transform - np.eye(4)).max() < 0.05

    def test_idempotence(self):
        rng = np.random.default_rng(7)
        base = rng.normal(size=(400, 4)) * np.array([2.0, 0.3, 1.0, 5.0])
        w1 = fit_whitener([base])
        once = w1.apply(base)
        w2 = fit_whitener([once])
        twice = w2.apply(once)
        assert np.abs(twice - once).max() < 1e-6

    def test_affine_combination_preserved(self):
        rng = np.random.default_rng(8)
        base = rng.normal(size=(200, 4))
        whit = fit_whitener([base])
        x1 = rng.normal(size=(10, 4))
        x2 = rng.normal(size=(10, 4))
        lhs = whit.apply(0.3 * x1 + 0.7 * x2)
        rhs = 0.3 * whit.apply(x1) + 0.7 * whit.apply(x2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_rank_deficient_rejected(self):
        rng = np.random.default_rng(9)
        col = rng.normal(size=(100, 1))
        dup = np.hstack([col, col, rng.normal(size=(100, 2))])
        with pytest.raises(DegenerateFeaturesError):
            fit_whitener([dup])

    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError):
            fit_whitener([np.zeros((3, 4))])


def _whitened_corpus(n_normals=8, hw=128, seed=777):
    master = SeedSpec(seed)
    normals = [image_features(synthetic_texture(hw, hw, master.child(0, i)))
               for i in range(n_normals)]
    whit = fit_whitener([f.features for f in normals])
    return master, whit, [whit.apply_image(f) for f in normals]


class TestDetection:
    def test_self_query_is_corpus_minimum(self):
        _, _, normals = _whitened_corpus()
        res = detect_defect(normals[3], normals, k=3, h=0.6)
        assert res.best_match == 3
        others = [v for i, v in res.pass1 if i != 3]
        assert res.score < min(others)

    def test_full_k_equals_single_pass(self):
        _, _, normals = _whitened_corpus()
        query = normals[1]
        full = detect_defect(query, normals, k=len(normals), h=0.6)
        assert len(full.pass2) == len(normals)
        best_direct = min(full.pass2, key=lambda iv: iv[1])
        assert full.best_match == best_direct[0]
        assert full.score == best_direct[1]

    def test_winner_always_in_pass1_top_k(self):
        master, _, normals = _whitened_corpus()
        query = normals[0]
        res = detect_defect(query, normals, k=3, h=0.6)
        top = {i for i, _ in sorted(res.pass1, key=lambda iv: iv[1])[:3]}
        assert res.best_match in top

    def test_k_bounds(self):
        _, _, normals = _whitened_corpus(n_normals=4)
        with pytest.raises(InvalidConfigError):
            detect_defect(normals[0], normals, k=0, h=0.5)
        with pytest.raises(InvalidConfigError):
            detect_defect(normals[0], normals, k=5, h=0.5)
        with pytest.raises(InvalidConfigError):
            detect_defect(normals[0], [], k=1, h=0.5)


class TestLocalization:
    def test_flat_map_flagged(self):
        _, _, normals = _whitened_corpus(n_normals=6)
        res = localize_defect(normals[2], normals[2], h=0.6)
        assert not res.found
        assert res.box is None

    def test_injected_square_found_with_iou(self):
        master, whit, normals = _whitened_corpus(n_normals=10, hw=128)
        base = synthetic_texture(128, 128, master.child(9, 0))
        r, c = 48, 64
        defective = inject_square(base, r, c)
        query = whit.apply_image(image_features(defective))
        det = detect_defect(query, normals, k=3, h=0.6)
        loc = localize_defect(query, normals[det.best_match], h=0.6)
        assert loc.found
        assert iou(loc.box, (r, c, 32, 32)) > 0.1

    def test_threshold_monotonicity(self):
        master, whit, normals = _whitened_corpus(n_normals=10, hw=128)
        base = synthetic_texture(128, 128, master.child(9, 1))
        defective = inject_square(base, 32, 32)
        query = whit.apply_image(image_features(defective))
        det = detect_defect(query, normals, k=3, h=0.6)
        strict = localize_defect(query, normals[det.best_match], h=0.6, factor=0.9)
        loose = localize_defect(query, normals[det.best_match], h=0.6, factor=0.5)
        assert strict.found and loose.found
        assert loose.mask.sum() >= strict.mask.sum()
        assert np.all(loose.mask[strict.mask])


class TestSyntheticHelpers:
    def test_texture_determinism(self):
        a = synthetic_texture(50, 60, SeedSpec(11))
        b = synthetic_texture(50, 60, SeedSpec(11))
        np.testing.assert_array_equal(a.pixels, b.pixels)

    def test_inject_bounds_checked(self):
        img = synthetic_texture(64, 64, SeedSpec(12))
        with pytest.raises(InvalidConfigError):
            inject_square(img, 40, 40, size=32)


class TestScoringHelpers:
    def test_iou_hand_value(self):
        assert iou((0, 0, 2, 2), (1, 1, 2, 2)) == pytest.approx(1.0 / 7.0)
        assert iou((0, 0, 2, 2), (10, 10, 2, 2)) == 0.0
        assert iou((0, 0, 4, 4), (0, 0, 4, 4)) == 1.0

    def test_rank_auc(self):
        assert rank_auc([3.0, 4.0], [1.0, 2.0]) == 1.0
        assert rank_auc([1.0], [1.0]) == 0.5
        with pytest.raises(InsufficientDataError):
            rank_auc([], [1.0])

    def test_inspection_csv(self, tmp_path):
        rows = [("q1.pgm", 12.5, "n3.pgm", (16, 32, 48, 64)),
                ("q2.pgm", 0.3, "n1.pgm", None)]
        path = tmp_path / "out.csv"
        write_inspection_csv(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "image,score,best_match,box_row,box_col,box_h,box_w"
        assert lines[1].startswith("q1.pgm,12.5,n3.pgm,16,32,48,64")
        assert lines[2].endswith(",,,")

    def test_label_file_scorer(self, tmp_path):
        from vwkde.inspection import score_detections

        results = tmp_path / "results.csv"
        write_inspection_csv(
            [("d1.pgm", 40.0, "n0.pgm", (30, 30, 40, 40)),
             ("d2.pgm", 55.0, "n1.pgm", (200, 0, 30, 30)),
             ("c1.pgm", 0.2, "n0.pgm", None),
             ("c2.pgm", -0.1, "n2.pgm", None)],
            results,
        )
        labels = tmp_path / "labels.csv"
        labels.write_text(
            "image,is_defect,box_row,box_col,box_h,box_w\n"
            "d1.pgm,1,32,32,32,32\n"     # overlaps the prediction
            "d2.pgm,1,100,100,32,32\n"   # missed localization
            "c1.pgm,0,,,,\n"
            "c2.pgm,0,,,,\n"
        )
        out = score_detections(results, labels)
        assert out["auc"] == 1.0
        assert out["localization_rate"] == pytest.approx(0.5)
        assert out["n_defects"] == 2

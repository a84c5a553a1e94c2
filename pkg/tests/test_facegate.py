"""Face-gate tests: exact integral sums, hand-checked features, and full
equivalence between detect_faces and a brute-force rescanner."""

import math
import os

import numpy as np
import pytest

from forgegate.errors import BoundsError, ConfigurationError, ContractError, GeometryError
from forgegate.facegate import (
    Cascade,
    CascadeStage,
    GateReport,
    HaarFeature,
    WeakClassifier,
    cascade_from_dict,
    cascade_to_dict,
    detect_faces,
    eval_cascade_window,
    eval_feature,
    gate_report,
    integral_image,
    load_cascade,
    rect_sum,
    save_cascade,
    to_grayscale,
    window_normalizer,
)

from oracles import naive_integral_table, naive_rect_sum


# ---------------------------------------------------------------------------
# brute-force oracle: rescans every window with direct pixel sums


def _bf_rect_sum(image, x, y, w, h):
    return float(np.sum(image[y : y + h, x : x + w]))


def _bf_window_accepts(cascade, image, wx, wy, scale):
    bw, bh = cascade.base_window
    win_w = int(math.floor(bw * scale))
    win_h = int(math.floor(bh * scale))
    area = win_w * win_h
    mean = _bf_rect_sum(image, wx, wy, win_w, win_h) / area
    mean_sq = float(np.sum(image[wy : wy + win_h, wx : wx + win_w] ** 2)) / area
    variance = mean_sq - mean * mean
    normalizer = math.sqrt(variance) if variance > 0.0 else 1.0
    for stage in cascade.stages:
        votes = 0.0
        for weak in stage.weak_classifiers:
            total = 0.0
            for x, y, w, h, weight in weak.feature.rectangles:
                sx = int(round(x * scale))
                sy = int(round(y * scale))
                sw = int(round(w * scale))
                sh = int(round(h * scale))
                if sw >= 1 and sh >= 1:
                    total += weight * _bf_rect_sum(image, wx + sx, wy + sy, sw, sh)
            value = total / (normalizer * scale * scale)
            votes += weak.left_value if value < weak.threshold else weak.right_value
        if votes < stage.stage_threshold:
            return False
    return True


def _bf_iou(a, b):
    ix = max(0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
    iy = max(0, min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if union else 0.0


def brute_force_detect(cascade, image, scale_factor=1.25, step=1, min_neighbors=1):
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    bw, bh = cascade.base_window
    if w < bw or h < bh:
        return []
    hits = []
    level = 0
    seen = set()
    while True:
        scale = scale_factor**level
        win_w = int(math.floor(bw * scale))
        win_h = int(math.floor(bh * scale))
        if win_w > w or win_h > h:
            break
        level += 1
        if (win_w, win_h) in seen:
            continue
        seen.add((win_w, win_h))
        for wy in range(0, h - win_h + 1, step):
            for wx in range(0, w - win_w + 1, step):
                if _bf_window_accepts(cascade, image, wx, wy, scale):
                    hits.append((wx, wy, win_w, win_h))
    if min_neighbors <= 0:
        return sorted(hits)
    seeds, members = [], []
    for box in hits:
        for i, seed in enumerate(seeds):
            if _bf_iou(box, seed) >= 0.5:
                members[i].append(box)
                break
        else:
            seeds.append(box)
            members.append([box])
    out = []
    for group in members:
        if len(group) >= min_neighbors:
            arr = np.asarray(group, dtype=np.float64)
            out.append(tuple(int(v) for v in np.rint(arr.mean(axis=0))))
    return sorted(out)


def random_cascade(rng, base=8, stages=2, weak_per_stage=2):
    """Random cascade whose rectangles keep a 2px margin so no scale escapes."""
    stage_list = []
    for _ in range(stages):
        weak = []
        for _ in range(weak_per_stage):
            rects = []
            for j in range(2):
                w = int(rng.integers(1, 4))
                h = int(rng.integers(1, 4))
                x = int(rng.integers(0, base - 2 - w + 1))
                y = int(rng.integers(0, base - 2 - h + 1))
                weight = 1.0 if j == 0 else -1.0
                rects.append((x, y, w, h, weight))
            weak.append(
                WeakClassifier(
                    feature=HaarFeature(rects),
                    threshold=float(rng.normal(0.0, 2.0)),
                    left_value=float(rng.uniform(0, 1)),
                    right_value=float(rng.uniform(0, 1)),
                )
            )
        stage_list.append(CascadeStage(weak, stage_threshold=float(rng.uniform(0.2, 1.2))))
    return Cascade(base_window=(base, base), stages=stage_list)


def int_image(rng, h, w):
    return rng.integers(0, 256, size=(h, w)).astype(np.float64)


# ---------------------------------------------------------------------------


class TestIntegralImage:
    def test_all_ones_4x4(self):
        ii = integral_image(np.ones((4, 4)))
        assert ii.table[4, 4] == 16
        assert ii.table[2, 3] == 6

    def test_single_pixel(self):
        ii = integral_image(np.array([[7.0]]))
        assert ii.table[1, 1] == 7

    def test_zero_border(self):
        ii = integral_image(np.random.default_rng(0).uniform(size=(5, 3)))
        assert np.all(ii.table[0, :] == 0) and np.all(ii.table[:, 0] == 0)

    def test_matches_naive_table_exactly(self):
        img = int_image(np.random.default_rng(1), 8, 8)
        ii = integral_image(img)
        np.testing.assert_array_equal(ii.table, naive_integral_table(img))

    def test_squared_table_matches_naive(self):
        img = int_image(np.random.default_rng(2), 6, 7)
        ii = integral_image(img)
        np.testing.assert_array_equal(ii.squared_table, naive_integral_table(img * img))

    def test_monotone_for_nonnegative_images(self):
        img = int_image(np.random.default_rng(3), 6, 6)
        ii = integral_image(img)
        assert np.all(np.diff(ii.table, axis=0) >= 0)
        assert np.all(np.diff(ii.table, axis=1) >= 0)


class TestRectSum:
    def test_full_image_all_ones(self):
        ii = integral_image(np.ones((4, 4)))
        assert rect_sum(ii, 0, 0, 4, 4) == 16

    def test_single_pixel_rect(self):
        img = int_image(np.random.default_rng(4), 5, 5)
        ii = integral_image(img)
        assert rect_sum(ii, 2, 3, 1, 1) == img[3, 2]

    def test_random_rects_match_naive_exactly(self):
        rng = np.random.default_rng(5)
        img = int_image(rng, 9, 11)
        ii = integral_image(img)
        for _ in range(50):
            w = int(rng.integers(1, 11))
            h = int(rng.integers(1, 9))
            x = int(rng.integers(0, 11 - w + 1))
            y = int(rng.integers(0, 9 - h + 1))
            assert rect_sum(ii, x, y, w, h) == naive_rect_sum(img, x, y, w, h)

    @pytest.mark.parametrize("rect", [(-1, 0, 2, 2), (0, 0, 6, 1), (0, 4, 1, 2), (0, 0, 0, 1)])
    def test_bad_rectangles_rejected(self, rect):
        ii = integral_image(np.ones((5, 5)))
        with pytest.raises(BoundsError):
            rect_sum(ii, *rect)


class TestEvalFeature:
    def test_constant_image_cancels(self):
        ii = integral_image(np.full((8, 8), 0.7))
        feature = HaarFeature([(0, 0, 4, 8, 1.0), (4, 0, 4, 8, -1.0)])
        value = eval_feature(ii, feature, (0, 0, 1.0), normalizer=1.0, base_window=(8, 8))
        assert value == pytest.approx(0.0, abs=1e-9)

    def test_half_black_half_white_hand_computation(self):
        # left half 0, right half 1: feature (+left, -right) sums to -32;
        # window variance 0.25 so the normalizer is 0.5; value = -32/0.5 = -64
        img = np.zeros((8, 8))
        img[:, 4:] = 1.0
        ii = integral_image(img)
        feature = HaarFeature([(0, 0, 4, 8, 1.0), (4, 0, 4, 8, -1.0)])
        normalizer = window_normalizer(ii, 0, 0, 8, 8)
        assert normalizer == pytest.approx(0.5)
        value = eval_feature(ii, feature, (0, 0, 1.0), normalizer, base_window=(8, 8))
        assert value == pytest.approx(-64.0)

    def test_zero_variance_window_normalizer_is_one(self):
        ii = integral_image(np.full((8, 8), 0.3))
        assert window_normalizer(ii, 0, 0, 8, 8) == 1.0

    def test_escaping_rectangle_raises(self):
        ii = integral_image(np.ones((20, 20)))
        feature = HaarFeature([(6, 0, 2, 2, 1.0), (0, 0, 2, 2, -1.0)])
        # at scale 1.6 the right edge rounds past floor(8*1.6)=12
        with pytest.raises(GeometryError):
            eval_feature(ii, feature, (0, 0, 1.6), 1.0, base_window=(8, 8))

    def test_feature_rectangle_count_enforced(self):
        with pytest.raises(ConfigurationError):
            HaarFeature([(0, 0, 1, 1, 1.0)])
        with pytest.raises(ConfigurationError):
            HaarFeature([(0, 0, 1, 1, 1.0)] * 5)


class TestEvalCascadeWindow:
    def test_zero_stage_cascade_accepts(self):
        cascade = Cascade(base_window=(8, 8), stages=[])
        ii = integral_image(np.zeros((10, 10)))
        assert eval_cascade_window(cascade, ii, (0, 0, 1.0)) is True

    def test_unreachable_stage_threshold_rejects(self):
        weak = WeakClassifier(
            feature=HaarFeature([(0, 0, 2, 2, 1.0), (2, 0, 2, 2, -1.0)]),
            threshold=0.0,
            left_value=1.0,
            right_value=1.0,
        )
        cascade = Cascade(base_window=(8, 8), stages=[CascadeStage([weak], stage_threshold=2.0)])
        ii = integral_image(int_image(np.random.default_rng(6), 12, 12))
        for wx in range(4):
            assert eval_cascade_window(cascade, ii, (wx, 0, 1.0)) is False

    def test_hand_built_two_stage_cascade_accepts_pattern(self):
        # 24x24 pattern: rows 0-11 at 0.2, rows 12-23 at 0.8.
        # window stats: mean .5, mean square .34, variance .09, normalizer .3
        # stage 1 feature (top band - bottom band) = 57.6 - 230.4 = -172.8,
        #   normalized -576 < 0 -> left vote 1.0 >= threshold 0.5: pass
        # stage 2 feature (left half - right half) = 144 - 144 = 0,
        #   normalized 0 < 0.5 -> left vote 0.7 >= threshold 0.5: pass
        img = np.full((24, 24), 0.2)
        img[12:, :] = 0.8
        ii = integral_image(img)
        assert window_normalizer(ii, 0, 0, 24, 24) == pytest.approx(0.3)
        stage1 = CascadeStage(
            [
                WeakClassifier(
                    HaarFeature([(0, 0, 24, 12, 1.0), (0, 12, 24, 12, -1.0)]),
                    threshold=0.0,
                    left_value=1.0,
                    right_value=0.0,
                )
            ],
            stage_threshold=0.5,
        )
        stage2 = CascadeStage(
            [
                WeakClassifier(
                    HaarFeature([(0, 0, 12, 24, 1.0), (12, 0, 12, 24, -1.0)]),
                    threshold=0.5,
                    left_value=0.7,
                    right_value=0.0,
                )
            ],
            stage_threshold=0.5,
        )
        cascade = Cascade(base_window=(24, 24), stages=[stage1, stage2])
        assert eval_cascade_window(cascade, ii, (0, 0, 1.0)) is True
        # flipping stage 2's vote below threshold must reject
        stage2.weak_classifiers[0].left_value = 0.3
        assert eval_cascade_window(cascade, ii, (0, 0, 1.0)) is False


class TestDetectFaces:
    def test_image_smaller_than_base_window(self):
        cascade = Cascade(base_window=(24, 24), stages=[])
        assert detect_faces(cascade, np.ones((10, 10))) == []

    def test_zero_stage_raw_hits_equal_window_count(self):
        cascade = Cascade(base_window=(24, 24), stages=[])
        img = int_image(np.random.default_rng(7), 40, 40)
        hits = detect_faces(cascade, img, scale_factor=1.25, step=1, min_neighbors=0)
        # sizes 24, 30, 37 fit in 40: 17^2 + 11^2 + 4^2 windows
        assert len(hits) == 289 + 121 + 16

    def test_scale_coverage(self):
        cascade = Cascade(base_window=(8, 8), stages=[])
        img = np.ones((20, 20))
        hits = detect_faces(cascade, img, scale_factor=1.3, step=4, min_neighbors=0)
        sizes = sorted({(w, h) for _, _, w, h in hits})
        assert sizes == [(8, 8), (10, 10), (13, 13), (17, 17)]

    @pytest.mark.parametrize("seed", range(6))
    def test_equivalence_with_brute_force_scanner(self, seed):
        rng = np.random.default_rng(seed)
        cascade = random_cascade(rng)
        img = int_image(rng, 24, 24)
        for neighbors in (0, 1, 2):
            ours = detect_faces(cascade, img, scale_factor=1.25, step=2, min_neighbors=neighbors)
            ref = brute_force_detect(cascade, img, scale_factor=1.25, step=2, min_neighbors=neighbors)
            assert ours == ref

    def test_equivalence_at_64(self):
        rng = np.random.default_rng(42)
        cascade = random_cascade(rng, base=12, stages=1, weak_per_stage=3)
        img = int_image(rng, 64, 64)
        ours = detect_faces(cascade, img, scale_factor=1.4, step=3, min_neighbors=1)
        ref = brute_force_detect(cascade, img, scale_factor=1.4, step=3, min_neighbors=1)
        assert ours == ref

    @pytest.mark.parametrize("seed", range(5))
    def test_monotone_rejection_when_adding_stages(self, seed):
        rng = np.random.default_rng(100 + seed)
        base = random_cascade(rng, stages=2)
        extended = Cascade(
            base_window=base.base_window,
            stages=base.stages + random_cascade(rng, stages=1).stages,
        )
        img = int_image(rng, 20, 20)
        small = set(detect_faces(extended, img, min_neighbors=0))
        big = set(detect_faces(base, img, min_neighbors=0))
        assert small <= big

    def test_parameter_validation(self):
        cascade = Cascade(base_window=(8, 8), stages=[])
        with pytest.raises(ContractError):
            detect_faces(cascade, np.ones((10, 10)), scale_factor=1.0)
        with pytest.raises(ContractError):
            detect_faces(cascade, np.ones((10, 10)), step=0)


class TestGateReport:
    def test_all_pass(self):
        cascade = Cascade(base_window=(8, 8), stages=[])
        batch = np.random.default_rng(8).uniform(size=(5, 3, 12, 12))
        report = gate_report(cascade, batch)
        assert report.pass_fraction == 1.0
        assert report.passed == [True] * 5

    def test_k_of_n(self):
        # stage voting for a strong top-dark/bottom-bright gradient: the three
        # gradient images pass, the two flat ones fail -> 3/5
        gradient_only = Cascade(
            base_window=(8, 8),
            stages=[
                CascadeStage(
                    [
                        WeakClassifier(
                            HaarFeature([(0, 0, 8, 4, 1.0), (0, 4, 8, 4, -1.0)]),
                            threshold=-20.0,
                            left_value=1.0,
                            right_value=0.0,
                        )
                    ],
                    stage_threshold=0.5,
                )
            ],
        )
        gradient = np.zeros((3, 3, 8, 8))
        gradient[:, :, 4:, :] = 1.0
        flat = np.full((2, 3, 8, 8), 0.5)
        batch = np.concatenate([gradient, flat])
        report = gate_report(gradient_only, batch)
        assert report.passed == [True, True, True, False, False]
        assert report.pass_fraction == pytest.approx(3 / 5)

    def test_empty_batch_rejected(self):
        cascade = Cascade(base_window=(8, 8), stages=[])
        with pytest.raises(ContractError):
            gate_report(cascade, np.zeros((0, 3, 10, 10)))

    def test_out_of_range_rejected(self):
        cascade = Cascade(base_window=(8, 8), stages=[])
        with pytest.raises(ContractError):
            gate_report(cascade, np.full((2, 3, 10, 10), 1.5))

    def test_grayscale_weights(self):
        img = np.zeros((3, 2, 2))
        img[0] = 1.0
        np.testing.assert_allclose(to_grayscale(img), 0.299)


class TestCascadeJson:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(11)
        cascade = random_cascade(rng, stages=3)
        path = str(tmp_path / "cascade.json")
        save_cascade(cascade, path)
        loaded = load_cascade(path)
        assert cascade_to_dict(loaded) == cascade_to_dict(cascade)

    def test_malformed_json_rejected(self):
        with pytest.raises(ConfigurationError):
            cascade_from_dict({"window": [8], "stages": []})
        with pytest.raises(ConfigurationError):
            cascade_from_dict({"stages": []})

    def test_window_minimum(self):
        with pytest.raises(ConfigurationError):
            Cascade(base_window=(3, 8), stages=[])


class TestShippedCascade:
    CASCADE_PATH = os.path.join(os.path.dirname(__file__), "..", "data", "toy_face_cascade.json")

    def test_blob_faces_pass_and_flat_images_fail(self):
        from forgegate.data import make_blob_faces

        cascade = load_cascade(self.CASCADE_PATH)
        rng = np.random.default_rng(0)
        faces = np.concatenate(
            [make_blob_faces(20, 16, True, rng), make_blob_faces(20, 16, False, rng)]
        )
        assert gate_report(cascade, faces).pass_fraction >= 0.9
        flat = np.full((10, 3, 16, 16), 0.5)
        assert gate_report(cascade, flat).pass_fraction == 0.0

    def test_scales_never_escape_up_to_64(self):
        cascade = load_cascade(self.CASCADE_PATH)
        image = np.random.default_rng(1).integers(0, 256, size=(64, 64)).astype(np.float64)
        detect_faces(cascade, image, scale_factor=1.25, step=4, min_neighbors=1)

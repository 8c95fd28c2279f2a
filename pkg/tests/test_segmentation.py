"""Segmenters against the synthetic ground-truth generator."""

import numpy as np
import pytest

from shadowpipe.evaluate import iou
from shadowpipe.models import Region
from shadowpipe.segmentation import (
    ImgDiffParams, Mog2Params, extract_crops, mask_to_regions, segment_imgdiff,
    segment_mog2,
)
from shadowpipe.synthetic import moving_square_frames, static_frames

MOG2 = Mog2Params(alpha=0.01, burn_in=20, pad_px=2)


def named(frames):
    return [(f"f{i:03d}", f) for i, f in enumerate(frames)]


class TestMog2:
    def test_static_scene_emits_nothing_after_burn_in(self):
        frames = static_frames(30, (160, 120), noise_sigma=2.0, seed=3)
        results = segment_mog2(named(frames), Mog2Params(alpha=0.05, burn_in=2))
        assert all(regions == [] for _, regions in results[2:])

    def test_moving_square_tracked(self):
        frames, truths = moving_square_frames(60, (360, 120), 40, 5, 2.0, seed=7)
        results = segment_mog2(named(frames), MOG2)
        post = list(zip(results, truths))[MOG2.burn_in:]
        good = sum(1 for (_, regions), truth in post
                   if len(regions) == 1 and iou(regions[0], truth) >= 0.5)
        assert good / len(post) >= 0.9

    def test_two_squares_matched_by_position(self):
        rng = np.random.default_rng(4)
        frames, t_top, t_bot = [], [], []
        for i in range(60):
            frame = np.clip(128 + rng.normal(0, 2, (160, 360)), 0, 255)
            x = 10 + 5 * i
            frame[20:50, x:x + 30] = 255
            frame[100:130, x:x + 30] = 255
            frames.append(frame.astype(np.uint8))
            t_top.append(Region(x, 20, 30, 30))
            t_bot.append(Region(x, 100, 30, 30))
        results = segment_mog2(named(frames), MOG2)
        for (_, regions), top, bottom in list(zip(results, t_top, t_bot))[MOG2.burn_in:]:
            assert len(regions) == 2
            by_y = sorted(regions, key=lambda r: r.y)
            assert iou(by_y[0], top) >= 0.5
            assert iou(by_y[1], bottom) >= 0.5

    def test_mismatched_frame_skipped(self):
        frames = static_frames(6, (80, 60), seed=1)
        pairs = named(frames)
        pairs[3] = ("f003", np.zeros((40, 40), dtype=np.uint8))
        results = segment_mog2(pairs, Mog2Params(alpha=0.2, burn_in=1))
        assert results[3] == ("f003", [])

    def test_deterministic(self):
        frames, _ = moving_square_frames(20, (200, 120), 30, 5, 2.0, seed=5)
        a = segment_mog2(named(frames), MOG2)
        b = segment_mog2(named(frames), MOG2)
        assert a == b

    def test_downscaled_processing_rescales_boxes(self):
        # 2400-wide frames processed at long side 960; a square appearing
        # mid-sequence must come back as a box in original coordinates
        rng = np.random.default_rng(9)
        truth = Region(600, 120, 240, 240)
        frames = []
        for i in range(12):
            frame = np.clip(128 + rng.normal(0, 2, (480, 2400)), 0, 255)
            if i >= 6:
                frame[truth.y:truth.y + truth.h, truth.x:truth.x + truth.w] = 255
            frames.append(frame.astype(np.uint8))
        params = Mog2Params(alpha=0.01, burn_in=3, pad_px=8, work_long_side=960)
        results = segment_mog2(named(frames), params)
        for _, regions in results[3:6]:
            assert regions == []
        for _, regions in results[6:]:
            assert len(regions) == 1
            assert iou(regions[0], truth) >= 0.5


class TestImgDiff:
    def test_identical_frames_no_regions(self):
        base = np.full((100, 100), 90, dtype=np.uint8)
        results = segment_imgdiff([(f"f{i}", base.copy()) for i in range(8)],
                                  ImgDiffParams())
        assert all(regions == [] for _, regions in results)

    def test_single_outlier_frame(self):
        base = np.full((200, 200), 100, dtype=np.uint8)
        pairs = [(f"f{i}", base.copy()) for i in range(10)]
        outlier = base.copy()
        outlier[75:125, 60:110] = 180  # +80 block of 50x50
        pairs[4] = ("f4", outlier)
        results = segment_imgdiff(pairs, ImgDiffParams(pad_px=0))
        truth = Region(60, 75, 50, 50)
        for name, regions in results:
            if name == "f4":
                assert len(regions) == 1
                assert iou(regions[0], truth) >= 0.8
            else:
                assert regions == []

    def test_moving_square(self):
        # over 60 frames each pixel sees the square for at most 8, so the
        # mean-image pollution (127 * 8/60 ~ 17) stays below the threshold
        frames, truths = moving_square_frames(60, (360, 120), 40, 5, 2.0,
                                              seed=2)
        results = segment_imgdiff(named(frames), ImgDiffParams(pad_px=2))
        hits = sum(
            1 for (_, regions), truth in zip(results, truths)
            if any(iou(r, truth) >= 0.5 for r in regions)
        )
        assert hits / len(results) >= 0.8


class TestMaskToRegions:
    def test_region_invariants_on_random_masks(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            mask = rng.random((60, 80)) < 0.2
            regions = mask_to_regions(mask, min_area=4, pad_px=3, scale=1.0,
                                      orig_size=(80, 60))
            for region in regions:
                assert region.x >= 0 and region.y >= 0
                assert region.w >= 1 and region.h >= 1
                assert region.x + region.w <= 80
                assert region.y + region.h <= 60

    def test_min_area_filters_specks(self):
        mask = np.zeros((50, 50), dtype=bool)
        mask[5:8, 5:8] = True      # 9 px: survives erosion as 1 px
        mask[20:40, 20:40] = True  # 400 px blob
        regions = mask_to_regions(mask, min_area=50, pad_px=0, scale=1.0,
                                  orig_size=(50, 50))
        assert len(regions) == 1
        assert regions[0].key() == (19, 19, 22, 22)  # eroded once, dilated twice


class TestExtractCrops:
    def test_full_frame_crop_is_identity(self):
        image = np.arange(100 * 80, dtype=np.uint8).reshape(80, 100) % 251
        (crop, region), = extract_crops(image, "img", [Region(0, 0, 100, 80)])
        assert np.array_equal(crop, image)
        assert region.frame.offset_x == 0 and region.frame.offset_y == 0
        assert region.frame.scale == 1.0

    def test_direct_slice(self):
        image = np.zeros((400, 600), dtype=np.uint8)
        image[200:350, 100:400] = 7
        (crop, region), = extract_crops(image, "img",
                                        [Region(100, 200, 300, 150)])
        assert crop.shape == (150, 300)
        assert (crop == 7).all()
        assert (region.frame.offset_x, region.frame.offset_y) == (100, 200)

    def test_downscale_records_scale(self):
        image = np.zeros((500, 2100), dtype=np.uint8)
        (crop, region), = extract_crops(
            image, "img", [Region(10, 10, 2000, 400)], target_long_side=640)
        assert region.frame.scale == pytest.approx(0.32)
        assert crop.shape[1] == 640

    def test_out_of_bounds_region_rejected(self):
        with pytest.raises(ValueError):
            extract_crops(np.zeros((50, 50), dtype=np.uint8), "img",
                          [Region(40, 40, 20, 20)])

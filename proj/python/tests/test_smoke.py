import numpy as np
import pytest

import uwstereo as uw


def parse_pfm(path):
    # Independent reader: header lines, then rows bottom-to-top; a negative
    # scale means little-endian.
    with open(path, "rb") as f:
        kind = f.readline().strip()
        assert kind == b"Pf"
        w, h = map(int, f.readline().split())
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(), dtype=dtype)
    assert data.size == w * h
    return np.flipud(data.reshape(h, w)).astype(np.float32)


def write_pfm(path, arr):
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n%d %d\n-1.0\n" % (w, h))
        f.write(np.flipud(arr).astype("<f4").tobytes())


def test_pfm_written_by_module_parses_independently(tmp_path):
    rng = np.random.default_rng(0)
    d = rng.uniform(0, 50, size=(7, 11)).astype(np.float32)
    d[2, 3] = np.inf
    uw.write_pfm(tmp_path / "d.pfm", d)
    back = parse_pfm(tmp_path / "d.pfm")
    np.testing.assert_array_equal(back, d)
    np.testing.assert_array_equal(uw.read_pfm(tmp_path / "d.pfm"), d)


def test_module_reads_numpy_written_pfm(tmp_path):
    d = np.arange(12, dtype=np.float32).reshape(3, 4)
    write_pfm(tmp_path / "n.pfm", d)
    np.testing.assert_array_equal(uw.read_pfm(tmp_path / "n.pfm"), d)


def test_corrupt_pfm_raises(tmp_path):
    (tmp_path / "bad.pfm").write_bytes(b"Pf\n4 4\n-1.0\n\x00\x00")
    with pytest.raises(Exception):
        uw.read_pfm(tmp_path / "bad.pfm")


def sgm_left_to_right(cost, p1, p2):
    h, w, d = cost.shape
    agg = np.empty_like(cost)
    agg[:, 0] = cost[:, 0]
    for x in range(1, w):
        prev = agg[:, x - 1]
        best = prev.min(axis=1, keepdims=True)
        up = np.full_like(prev, np.inf)
        down = np.full_like(prev, np.inf)
        up[:, 1:] = prev[:, :-1] + p1
        down[:, :-1] = prev[:, 1:] + p1
        step = np.minimum(np.minimum(prev, up), np.minimum(down, best + p2))
        agg[:, x] = cost[:, x] + step
    return agg


def test_single_path_sgm_matches_numpy_dp():
    rng = np.random.default_rng(3)
    cost = rng.integers(0, 8, size=(3, 9, 5)).astype(np.float32) / 8
    p1, p2 = 0.125, 0.625
    got = uw.sgm_aggregate(cost, p1=p1, p2=p2, paths=1, normalize=False)
    np.testing.assert_allclose(got, sgm_left_to_right(cost, p1, p2), rtol=0, atol=1e-6)
    norm = uw.sgm_aggregate(cost, p1=p1, p2=p2, paths=1, normalize=True)
    np.testing.assert_array_equal(norm.argmin(axis=2), got.argmin(axis=2))
    np.testing.assert_array_equal(uw.winner_take_all(got), got.argmin(axis=2).astype(np.float32))


def test_match_shapes_and_range():
    scene = uw.fronto_parallel_plane(96, 64, 6.0, seed=2)
    m = uw.Matcher.create(scales=1, channels=4, features=16, seed=1)
    d = uw.match(scene["left"], scene["right"], m, d_max=16)
    assert d.shape == (64, 96) and d.dtype == np.float32
    valid = np.isfinite(d)
    assert valid.any()
    assert (d[valid] >= -0.5).all() and (d[valid] <= 16.5).all()
    mask = np.zeros((64, 96), np.uint8)
    mask[:, 48:] = 1
    dm = uw.match(scene["left"], scene["right"], m, d_max=16, left_mask=mask)
    assert not np.isfinite(dm[:, :48]).any()


def test_triangulate_plane_depth():
    f, b = 800.0, 0.03
    d = np.full((48, 64), f * b / 0.6, np.float32)
    d[0, 0] = np.inf
    pts = uw.triangulate(d, f, b, 31.5, 23.5)
    assert pts.shape == (48 * 64 - 1, 3)
    np.testing.assert_allclose(pts[:, 2], 0.6, rtol=1e-5)
    assert uw.remove_outliers(pts).shape[0] >= 0.99 * pts.shape[0]


def test_disparity_errors():
    gt = np.full((10, 10), 5.0, np.float32)
    est = gt + 0.5
    est[0, :] += 2.0
    e = uw.disparity_errors(est, gt, threshold=1.0)
    assert e["bad_rate"] == pytest.approx(0.1)
    assert e["gt_pixels"] == 100
    assert e["coverage"] == 1.0


def test_bubbles_keep_gt_and_touch_only_masked_pixels():
    assert uw.conditions()[0] == "clean" and len(uw.conditions()) == 9
    scene = uw.random_scene(120, 80, 4, 24, seed=5)
    out = uw.render_bubbles(scene, "near_much_large", seed=3, max_disparity=scene["max_disparity"])
    np.testing.assert_array_equal(out["gt_left"], scene["gt_left"])
    changed = out["left"] != scene["left"]
    assert not (changed & (out["left_bubbles"] == 0)).any()


def test_disc_sample_and_iou():
    img, mask = uw.disc_sample(32, 4)
    assert img.shape == (32, 32) and mask.shape == (32, 32)
    assert uw.iou(mask, mask) == 1.0

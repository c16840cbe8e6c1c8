import math

import cv2
import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from edgevo.edges import (DistanceField, EdgeMap, detect_edges_canny, distance_transform,
                          load_external_edge_map, sample_bilinear)
from edgevo.errors import BadThresholds, DecodeError, DimensionMismatch, NoEdgePixels, OutOfBounds


def brute_force_dt(mask):
    # independent oracle: nearest edge pixel by exhaustive search
    ey, ex = np.nonzero(mask)
    yy, xx = np.mgrid[:mask.shape[0], :mask.shape[1]]
    d2 = (yy[..., None] - ey) ** 2 + (xx[..., None] - ex) ** 2
    return np.sqrt(d2.min(axis=-1))


nonempty_masks = arrays(bool, st.tuples(st.integers(1, 20), st.integers(1, 20))).filter(np.any)


def test_single_centre_edge():
    m = np.zeros((3, 3), bool)
    m[1, 1] = True
    f = distance_transform(EdgeMap(m))
    assert f.dist[0, 0] == math.sqrt(2)
    assert f.dist[1, 0] == 1.0


def test_frozen_small_field():
    # values from brute_force_dt on this mask
    m = np.zeros((4, 5), bool)
    m[0, 0] = m[3, 3] = True
    expected = np.array([
        [0.0, 1.0, 2.0, 3.0, 3.1622776601683795],
        [1.0, 1.4142135623730951, 2.23606797749979, 2.0, 2.23606797749979],
        [2.0, 2.23606797749979, 1.4142135623730951, 1.0, 1.4142135623730951],
        [3.0, 2.0, 1.0, 0.0, 1.0],
    ])
    assert np.array_equal(distance_transform(m).dist, expected)
    assert np.array_equal(brute_force_dt(m), expected)


def test_all_edge_and_empty():
    assert not distance_transform(np.ones((5, 7), bool)).dist.any()
    with pytest.raises(NoEdgePixels):
        distance_transform(EdgeMap(np.zeros((5, 5), bool)))


def test_matches_brute_force_random():
    rng = np.random.default_rng(11)
    for density in (0.001, 0.01, 0.2):
        for _ in range(10):
            m = rng.uniform(size=(40, 31)) < density
            if not m.any():
                m[rng.integers(40), rng.integers(31)] = True
            assert np.array_equal(distance_transform(m).dist, brute_force_dt(m))


@given(nonempty_masks)
def test_matches_brute_force_property(m):
    assert np.array_equal(distance_transform(m).dist, brute_force_dt(m))


@given(nonempty_masks)
def test_zero_exactly_on_edges(m):
    d = distance_transform(m).dist
    assert np.array_equal(d == 0, m)
    assert (d >= 0).all()


@given(nonempty_masks, st.data())
def test_lipschitz(m, data):
    d = distance_transform(m).dist
    h, w = m.shape
    for _ in range(20):
        y0, y1 = data.draw(st.integers(0, h - 1)), data.draw(st.integers(0, h - 1))
        x0, x1 = data.draw(st.integers(0, w - 1)), data.draw(st.integers(0, w - 1))
        assert abs(d[y0, x0] - d[y1, x1]) <= math.hypot(y1 - y0, x1 - x0) + 1e-12


@given(nonempty_masks)
def test_gradient_bounded(m):
    g = distance_transform(m).grad
    assert np.abs(g).max() <= 1.0 + 1e-12
    assert np.linalg.norm(g, axis=-1).max() <= math.sqrt(2) + 1e-12


def test_gradient_is_central_difference():
    m = np.zeros((9, 9), bool)
    m[4, 4] = True
    f = distance_transform(m)
    assert f.grad[4, 6, 0] == (f.dist[4, 7] - f.dist[4, 5]) / 2
    assert f.grad[0, 4, 1] == f.dist[1, 4] - f.dist[0, 4]     # one-sided at border
    assert f.grad[4, 8, 0] == f.dist[4, 8] - f.dist[4, 7]


def test_bilinear_examples():
    dist = np.array([[1.0, 2.0], [3.0, 4.0]])
    f = DistanceField(dist, np.zeros((2, 2, 2)))
    assert sample_bilinear(f, 1, 1)[0] == 4.0
    assert sample_bilinear(f, 0.5, 0)[0] == 1.5
    assert sample_bilinear(f, 0.5, 0.5)[0] == 2.5
    assert sample_bilinear(f, 1.0, 0.25)[0] == 2.5
    for u, v in ((-0.1, 0), (0, -0.1), (1.01, 0), (0, 1.5)):
        with pytest.raises(OutOfBounds):
            sample_bilinear(f, u, v)


def test_bilinear_at_nodes_exact():
    rng = np.random.default_rng(0)
    m = rng.uniform(size=(30, 40)) < 0.05
    f = distance_transform(m)
    vv, uu = np.mgrid[:30, :40]
    d, g, ok = f.sample(uu.ravel().astype(float), vv.ravel().astype(float))
    assert ok.all()
    assert np.array_equal(d, f.dist.ravel())
    assert np.array_equal(g, f.grad.reshape(-1, 2))


@given(st.floats(0, 38.99), st.floats(0, 28.99), st.floats(-1e-3, 1e-3), st.floats(-1e-3, 1e-3))
def test_bilinear_continuity(u, v, du, dv):
    rng = np.random.default_rng(1)
    f = distance_transform(rng.uniform(size=(30, 40)) < 0.05)
    u2, v2 = min(max(u + du, 0), 39), min(max(v + dv, 0), 29)
    d1, _ = sample_bilinear(f, u, v)
    d2, _ = sample_bilinear(f, u2, v2)
    assert abs(d1 - d2) <= math.sqrt(2) * math.hypot(u2 - u, v2 - v) + 1e-9


def test_canny_constant_image():
    assert detect_edges_canny(np.full((40, 50), 0.5)).count == 0


def test_canny_vertical_step():
    img = np.zeros((40, 60))
    img[:, 30:] = 1.0
    em = detect_edges_canny(img)
    # oracle: column of the strongest horizontal Sobel response
    sob = np.abs(cv2.Sobel(img, cv2.CV_64F, 1, 0, ksize=3))
    step_col = int(np.argmax(sob[20]))
    cols = np.unique(np.nonzero(em.mask)[1])
    assert em.count > 0
    assert np.all(np.abs(cols - step_col) <= 1)
    rows = np.nonzero(em.mask[:, cols[0]])[0]
    assert len(rows) >= 38


def test_canny_bad_thresholds():
    with pytest.raises(BadThresholds):
        detect_edges_canny(np.zeros((10, 10)), low=150, high=50)
    with pytest.raises(BadThresholds):
        detect_edges_canny(np.zeros((10, 10)), low=50, high=50)


def test_external_binarisation(tmp_path):
    img = np.zeros((6, 8), np.uint8)
    img[1, 1], img[2, 2], img[3, 3] = 255, 127, 128
    p = str(tmp_path / "e.png")
    cv2.imwrite(p, img)
    em = load_external_edge_map(p, (6, 8), 128)
    assert em.source == "external"
    assert em.mask[1, 1] and em.mask[3, 3] and not em.mask[2, 2]
    assert em.count == 2


def test_external_dimension_and_decode_errors(tmp_path):
    p = str(tmp_path / "e.png")
    cv2.imwrite(p, np.zeros((240, 320), np.uint8))
    with pytest.raises(DimensionMismatch):
        load_external_edge_map(p, (480, 640))
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(DecodeError):
        load_external_edge_map(str(bad), (480, 640))
    with pytest.raises(DecodeError):
        load_external_edge_map(str(tmp_path / "missing.png"), (480, 640))


def test_edge_map_is_immutable():
    em = EdgeMap(np.zeros((3, 3), bool))
    with pytest.raises(ValueError):
        em.mask[0, 0] = True
    with pytest.raises(ValueError):
        EdgeMap(np.zeros((3, 3)), "sobel")

"""Shi-Tomasi corners on edge images, density pruning, and circle stamping."""
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from .edges import EdgeMap
from .errors import ImageTooSmall


@dataclass(frozen=True)
class CornerConfig:
    window_size: int = 5
    quality_level: float = 0.01
    prune_window: int = 20
    prune_stride: int = 20
    max_corners_per_window: int = 5
    stamp_radius: int = 3

    def __post_init__(self):
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValueError("window_size must be odd and >= 3")
        if not 0 < self.quality_level <= 1:
            raise ValueError("quality_level must be in (0, 1]")
        for name in ("prune_window", "prune_stride", "max_corners_per_window", "stamp_radius"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


class CornerSet:
    """Corner pixel coordinates with their Shi-Tomasi responses.

    Stored in row-major order (by y, then x).
    """

    def __init__(self, xs=(), ys=(), responses=()):
        xs = np.asarray(xs, dtype=np.intp).reshape(-1)
        ys = np.asarray(ys, dtype=np.intp).reshape(-1)
        responses = np.asarray(responses, dtype=float).reshape(-1)
        if not (len(xs) == len(ys) == len(responses)):
            raise ValueError("xs, ys and responses must have equal length")
        order = np.lexsort((xs, ys))
        self.xs, self.ys, self.responses = xs[order], ys[order], responses[order]
        for a in (self.xs, self.ys, self.responses):
            a.flags.writeable = False

    def __len__(self):
        return len(self.xs)

    def __iter__(self):
        return iter(zip(self.xs.tolist(), self.ys.tolist(), self.responses.tolist()))

    def __repr__(self):
        return f"CornerSet(n={len(self)})"

    def subset(self, keep):
        return CornerSet(self.xs[keep], self.ys[keep], self.responses[keep])


def gaussian_window(window_size, sigma=None):
    """Normalised ``window_size`` x ``window_size`` Gaussian weights."""
    if sigma is None:
        sigma = (window_size - 1) / 4.0
    r = np.arange(window_size) - (window_size - 1) / 2.0
    g = np.exp(-0.5 * (r / sigma) ** 2)
    g /= g.sum()
    return np.outer(g, g)


def image_gradients(image):
    """Central differences (one-sided on the border); returns (Ix, Iy)."""
    iy, ix = np.gradient(np.asarray(image, dtype=float))
    return ix, iy


def structure_tensor_response(image, window_size=5, weights=None):
    """Per-pixel min eigenvalue of the Gaussian-weighted structure tensor.

    Pixels outside the image contribute nothing to the window sum.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2 or min(image.shape) < window_size:
        raise ImageTooSmall(f"image {image.shape} smaller than window {window_size}")
    w = gaussian_window(window_size) if weights is None else np.asarray(weights, dtype=float)
    ix, iy = image_gradients(image)
    a = ndimage.correlate(ix * ix, w, mode="constant", cval=0.0)
    b = ndimage.correlate(ix * iy, w, mode="constant", cval=0.0)
    c = ndimage.correlate(iy * iy, w, mode="constant", cval=0.0)
    return min_eigenvalue(a, b, c)


def min_eigenvalue(a, b, c):
    """Smaller eigenvalue of the symmetric 2x2 matrix [[a, b], [b, c]]."""
    half_tr = 0.5 * (a + c)
    disc = np.sqrt(0.25 * (a - c) ** 2 + b * b)
    return np.maximum(half_tr - disc, 0.0)


def local_maxima(response):
    """3x3 non-maximum suppression with a row-major tiebreak.

    A pixel survives if it is strictly greater than its neighbours that come
    before it in row-major order and at least as large as those after it,
    so each plateau keeps only its first pixel per neighbourhood.
    """
    r = np.pad(np.asarray(response, dtype=float), 1, constant_values=-np.inf)
    h, w = response.shape
    centre = r[1:-1, 1:-1]
    keep = np.ones((h, w), dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            nb = r[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
            if (dy, dx) < (0, 0):
                keep &= centre > nb
            else:
                keep &= centre >= nb
    return keep


def select_corners(response, quality_level=0.01):
    """Keep local maxima whose response exceeds ``quality_level * max``."""
    response = np.asarray(response, dtype=float)
    peak = response.max() if response.size else 0.0
    if not peak > 0:
        return CornerSet()
    cand = (response > quality_level * peak) & local_maxima(response)
    ys, xs = np.nonzero(cand)
    return CornerSet(xs, ys, response[ys, xs])


def _top_k(xs, ys, resp, idx, k):
    # highest response first, ties by (y, x)
    order = np.lexsort((xs[idx], ys[idx], -resp[idx]))
    return idx[order[:k]]


def prune_density(corners, prune_window=20, prune_stride=20, max_per_window=5):
    """Thin over-dense regions with a sliding box.

    The box moves left-to-right, top-to-bottom. Whenever it holds more than
    ``max_per_window`` surviving corners, only the strongest
    ``max_per_window`` are kept; removed corners stay removed.
    """
    if prune_window < 1 or prune_stride < 1 or max_per_window < 1:
        raise ValueError("prune parameters must be >= 1")
    n = len(corners)
    if n == 0:
        return corners
    xs, ys, resp = corners.xs, corners.ys, corners.responses
    alive = np.ones(n, dtype=bool)
    for y0 in range(0, int(ys.max()) + 1, prune_stride):
        in_row = alive & (ys >= y0) & (ys < y0 + prune_window)
        if in_row.sum() <= max_per_window:
            continue
        for x0 in range(0, int(xs.max()) + 1, prune_stride):
            idx = np.flatnonzero(alive & in_row & (xs >= x0) & (xs < x0 + prune_window))
            if len(idx) <= max_per_window:
                continue
            keep = _top_k(xs, ys, resp, idx, max_per_window)
            alive[idx] = False
            alive[keep] = True
            in_row &= alive
    return corners.subset(alive)


def midpoint_circle(radius):
    """Integer offsets (dx, dy) of the midpoint-algorithm circle of ``radius``."""
    pts = set()
    x, y, d = radius, 0, 1 - radius
    while x >= y:
        for px, py in ((x, y), (y, x), (-y, x), (-x, y), (-x, -y), (-y, -x), (y, -x), (x, -y)):
            pts.add((px, py))
        y += 1
        if d < 0:
            d += 2 * y + 1
        else:
            x -= 1
            d += 2 * (y - x) + 1
    return np.array(sorted(pts), dtype=np.intp).reshape(-1, 2)


def augment_edge_map(edges, corners, stamp_radius=3):
    """Union of the edge mask with a centre pixel and circle at every corner."""
    mask = np.array(edges.mask, copy=True)
    if len(corners):
        h, w = mask.shape
        offs = np.vstack([[0, 0], midpoint_circle(stamp_radius)])
        px = (corners.xs[:, None] + offs[None, :, 0]).ravel()
        py = (corners.ys[:, None] + offs[None, :, 1]).ravel()
        ok = (px >= 0) & (px < w) & (py >= 0) & (py < h)
        mask[py[ok], px[ok]] = True
    return EdgeMap(mask, "augmented")


def detect_corners(edges, config):
    """Corner pipeline on an edge map: response, selection, pruning."""
    image = edges.mask.astype(float) if isinstance(edges, EdgeMap) else np.asarray(edges, float)
    response = structure_tensor_response(image, config.window_size)
    corners = select_corners(response, config.quality_level)
    return prune_density(corners, config.prune_window, config.prune_stride,
                         config.max_corners_per_window)


class CornerAugmenter(TransformerMixin, BaseEstimator):
    """Transformer: edge map -> edge map with circles stamped at pruned corners.

    Stateless; ``fit`` only validates the parameters. After ``transform``
    the corners of the last input are kept in ``corners_``.
    """

    def __init__(self, window_size=5, quality_level=0.01, prune_window=20, prune_stride=20,
                 max_corners_per_window=5, stamp_radius=3):
        self.window_size = window_size
        self.quality_level = quality_level
        self.prune_window = prune_window
        self.prune_stride = prune_stride
        self.max_corners_per_window = max_corners_per_window
        self.stamp_radius = stamp_radius

    def _config(self):
        return CornerConfig(**self.get_params())

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        return self

    def transform(self, X):
        config = self._config()
        edges = X if isinstance(X, EdgeMap) else EdgeMap(X, "canny")
        self.corners_ = detect_corners(edges, config)
        return augment_edge_map(edges, self.corners_, config.stamp_radius)

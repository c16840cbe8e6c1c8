"""Edge maps, the exact Euclidean distance transform and its sampling."""
from dataclasses import dataclass
import os

import cv2
import numba
import numpy as np

from .errors import BadThresholds, DecodeError, DimensionMismatch, NoEdgePixels, OutOfBounds

EDGE_SOURCES = ("canny", "external", "augmented")


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class EdgeMap:
    mask: np.ndarray
    source: str = "canny"

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2:
            raise ValueError("edge mask must be 2-D")
        if self.source not in EDGE_SOURCES:
            raise ValueError(f"unknown edge source {self.source!r}")
        object.__setattr__(self, "mask", _readonly(m.astype(bool, copy=True)))

    @property
    def height(self):
        return self.mask.shape[0]

    @property
    def width(self):
        return self.mask.shape[1]

    @property
    def count(self):
        return int(self.mask.sum())


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Distance (pixels) to the nearest edge pixel, and its gradient.

    ``grad[..., 0]`` is d/du (along columns), ``grad[..., 1]`` is d/dv.
    """

    dist: np.ndarray
    grad: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dist", _readonly(np.asarray(self.dist, dtype=float)))
        object.__setattr__(self, "grad", _readonly(np.asarray(self.grad, dtype=float)))

    @property
    def height(self):
        return self.dist.shape[0]

    @property
    def width(self):
        return self.dist.shape[1]

    def sample(self, u, v):
        """Vectorised bilinear lookup.

        Returns ``(dist, grad, valid)``; entries outside the grid get
        ``valid = False`` and zero values instead of raising.
        """
        return bilinear(self.dist, self.grad, u, v)


def detect_edges_canny(intensity, low=50.0, high=150.0, blur_sigma=1.0):
    """Canny edges of a [0, 1] intensity image; thresholds on the 0-255 scale."""
    if not (0 <= low < high):
        raise BadThresholds(f"need 0 <= low < high, got low={low}, high={high}")
    if blur_sigma < 0:
        raise BadThresholds("blur_sigma must be >= 0")
    img = np.asarray(intensity, dtype=np.float32) * 255.0
    if blur_sigma > 0:
        img = cv2.GaussianBlur(img, (0, 0), sigmaX=blur_sigma, sigmaY=blur_sigma,
                               borderType=cv2.BORDER_REPLICATE)
    img8 = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    mask = cv2.Canny(img8, low, high, apertureSize=3, L2gradient=True) > 0
    return EdgeMap(mask, "canny")


def read_gray_image(path):
    """Decode an image file into a single-channel array (dtype preserved)."""
    if not os.path.isfile(path):
        raise DecodeError(f"no such file: {path}")
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise DecodeError(f"cannot decode image: {path}")
    if img.ndim == 3:
        if img.shape[2] == 4:
            img = img[..., :3]
        img = cv2.cvtColor(img, cv2.COLOR_BGR2GRAY)
    return img


def load_external_edge_map(path, shape, binarize_threshold=128):
    """Binarise a precomputed (e.g. CNN) edge image: edge where value >= threshold.

    ``shape`` is ``(height, width)`` of the frame the edges belong to.
    """
    img = read_gray_image(path)
    if img.dtype == np.uint16:
        img = img / 257.0
    if img.shape != tuple(shape):
        raise DimensionMismatch(f"{path}: edge image is {img.shape[1]}x{img.shape[0]}, "
                                f"frame is {shape[1]}x{shape[0]}")
    return EdgeMap(img >= binarize_threshold, "external")


_INF = 1e20


@numba.njit(cache=True)
def _envelope_1d(f, out, v, z):
    # Lower envelope of parabolas (q - v)^2 + f[v]; out[q] = min over v.
    n = f.shape[0]
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        fq = f[q] + q * q
        p = v[k]
        s = (fq - (f[p] + p * p)) / (2.0 * q - 2.0 * p)
        # z[0] = -inf, so k never drops below 0
        while s <= z[k]:
            k -= 1
            p = v[k]
            s = (fq - (f[p] + p * p)) / (2.0 * q - 2.0 * p)
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        out[q] = (q - p) * (q - p) + f[p]


@numba.njit(cache=True)
def _squared_edt(mask):
    h, w = mask.shape
    n = max(h, w)
    f = np.empty(n)
    out = np.empty(n)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    g = np.empty((h, w))
    for c in range(w):
        for r in range(h):
            f[r] = 0.0 if mask[r, c] else _INF
        _envelope_1d(f[:h], out[:h], v, z)
        for r in range(h):
            g[r, c] = out[r]
    d = np.empty((h, w))
    for r in range(h):
        for c in range(w):
            f[c] = g[r, c]
        _envelope_1d(f[:w], out[:w], v, z)
        for c in range(w):
            d[r, c] = out[c]
    return d


def squared_distance_transform(mask):
    """Exact squared Euclidean distance to the nearest true pixel."""
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    if not mask.any():
        raise NoEdgePixels("edge map has no edge pixels")
    return _squared_edt(mask)


def distance_transform(edges):
    """Exact Euclidean distance transform of an edge map, with its gradient.

    Separable two-pass lower-envelope algorithm (column pass, then row
    pass), linear in the number of pixels. The gradient uses central
    differences inside and one-sided differences on the border.
    """
    mask = edges.mask if isinstance(edges, EdgeMap) else np.asarray(edges, dtype=bool)
    dist = np.sqrt(squared_distance_transform(mask))
    # a length-1 axis has no neighbours to difference against
    gu = np.gradient(dist, axis=1) if dist.shape[1] > 1 else np.zeros_like(dist)
    gv = np.gradient(dist, axis=0) if dist.shape[0] > 1 else np.zeros_like(dist)
    return DistanceField(dist, np.stack([gu, gv], axis=-1))


def bilinear(dist, grad, u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    h, w = dist.shape
    valid = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    uc = np.where(valid, u, 0.0)
    vc = np.where(valid, v, 0.0)
    x0 = np.minimum(np.floor(uc).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(vc).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = uc - x0
    ay = vc - y0
    w00 = (1 - ax) * (1 - ay)
    w01 = ax * (1 - ay)
    w10 = (1 - ax) * ay
    w11 = ax * ay
    d = w00 * dist[y0, x0] + w01 * dist[y0, x1] + w10 * dist[y1, x0] + w11 * dist[y1, x1]
    g = (w00[..., None] * grad[y0, x0] + w01[..., None] * grad[y0, x1]
         + w10[..., None] * grad[y1, x0] + w11[..., None] * grad[y1, x1])
    d = np.where(valid, d, 0.0)
    g = np.where(valid[..., None], g, 0.0)
    return d, g, valid


def sample_bilinear(field, u, v):
    """Interpolated ``(dist, grad)`` at one subpixel location.

    Raises ``OutOfBounds`` outside ``[0, W-1] x [0, H-1]``.
    """
    d, g, valid = bilinear(field.dist, field.grad, np.array([u]), np.array([v]))
    if not valid[0]:
        raise OutOfBounds(f"({u}, {v}) outside {field.width}x{field.height} field")
    return float(d[0]), g[0]

"""Parameterized transformations and their ordered cascade.

Each operator takes a normalized magnitude m in [0, 1] which it maps onto a
physical range (noise sigma, rotation angle, shift, ...).  A pipeline is an
ordered list of (op, probability, magnitude) stages applied first-to-last;
every stage consumes draws from the caller's :class:`RngStream` in a fixed
order, so the result is a pure function of (input, pipeline, stream
coordinates).

Image operators clamp their output back into [0, 1] and geometric ones
resample nearest-neighbor with zero padding; vector operators are unclamped.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ParameterError, ShapeError
from .rng import RngStream

MODE_VECTOR = "vector"
MODE_IMAGE = "image"


@dataclass(frozen=True)
class TransformSpec:
    """One stage: operator name, application probability, magnitude in [0,1]."""

    op: str
    probability: float
    magnitude: float

    def __post_init__(self):
        if not (0.0 <= self.probability <= 1.0):
            raise ParameterError(f"probability must be in [0, 1], got {self.probability}")
        if not (0.0 <= self.magnitude <= 1.0):
            raise ParameterError(f"magnitude must be in [0, 1], got {self.magnitude}")


@dataclass(frozen=True)
class Pipeline:
    """An ordered cascade; stage 0 is applied first."""

    stages: tuple[TransformSpec, ...]

    def __len__(self) -> int:
        return len(self.stages)


def pipeline_key(pipeline: Pipeline) -> int:
    """Stable 64-bit content hash; identical pipelines map to identical keys.

    Used to derive application rng streams, so two branches that drew the
    same stages replay the same randomness and produce bit-identical output.
    """
    h = hashlib.blake2b(digest_size=8)
    for s in pipeline.stages:
        h.update(s.op.encode())
        h.update(float(s.probability).hex().encode())
        h.update(float(s.magnitude).hex().encode())
    return int.from_bytes(h.digest(), "little")


# --------------------------------------------------------------------------
# vector operators


def _v_jitter(x, m, rng):
    return x + rng.normal(0.5 * m, size=x.shape)


def _v_scale(x, m, rng):
    return x * (1.0 + rng.sign() * m)


def _v_rotate_pair(x, m, rng):
    d = x.shape[0]
    if d < 2:
        return x
    i = int(rng.integers(0, d))
    j = int(rng.integers(0, d - 1))
    if j >= i:
        j += 1
    theta = m * math.pi / 2.0
    out = x.copy()
    xi, xj = x[i], x[j]
    out[i] = xi * math.cos(theta) - xj * math.sin(theta)
    out[j] = xi * math.sin(theta) + xj * math.cos(theta)
    return out


def _v_translate(x, m, rng):
    i = int(rng.integers(0, x.shape[0]))
    out = x.copy()
    out[i] = out[i] + rng.sign() * m
    return out


def _v_coordinate_drop(x, m, rng):
    mask = rng.uniform(size=x.shape) < 0.3 * m
    out = x.copy()
    out[mask] = 0.0
    return out


# --------------------------------------------------------------------------
# image operators

_GRID_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _grid(h: int, w: int):
    g = _GRID_CACHE.get((h, w))
    if g is None:
        ys, xs = np.mgrid[0:h, 0:w]
        g = (xs.ravel().astype(np.float64), ys.ravel().astype(np.float64))
        _GRID_CACHE[(h, w)] = g
    return g


def _affine_nearest(img, a, b, c, d, tx=0.0, ty=0.0):
    """Resample with the inverse map src = M (dst - center) + center + t."""
    h, w = img.shape
    xs, ys = _grid(h, w)
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    sx = a * (xs - cx) + b * (ys - cy) + cx + tx
    sy = c * (xs - cx) + d * (ys - cy) + cy + ty
    ix = np.rint(sx).astype(np.int64)
    iy = np.rint(sy).astype(np.int64)
    valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    np.clip(ix, 0, w - 1, out=ix)
    np.clip(iy, 0, h - 1, out=iy)
    out = img[iy, ix]
    out[~valid] = 0.0
    return out.reshape(h, w)


def _i_rotate(x, m, rng):
    theta = rng.sign() * m * math.pi / 4.0
    ct, st = math.cos(theta), math.sin(theta)
    return _affine_nearest(x, ct, st, -st, ct)


def _i_translate_x(x, m, rng):
    return _affine_nearest(x, 1, 0, 0, 1, tx=rng.sign() * m * 0.4 * x.shape[1])


def _i_translate_y(x, m, rng):
    return _affine_nearest(x, 1, 0, 0, 1, ty=rng.sign() * m * 0.4 * x.shape[1])


def _i_shear_x(x, m, rng):
    return _affine_nearest(x, 1, -rng.sign() * m * 0.5, 0, 1)


def _i_shear_y(x, m, rng):
    return _affine_nearest(x, 1, 0, -rng.sign() * m * 0.5, 1)


def _i_zoom(x, m, rng):
    f = 1.0 + rng.sign() * 0.5 * m
    return _affine_nearest(x, 1.0 / f, 0, 0, 1.0 / f)


def _i_brightness(x, m, rng):
    return x + rng.sign() * m * 0.6


def _i_contrast(x, m, rng):
    mean = float(x.mean())
    return mean + (x - mean) * (1.0 + rng.sign() * m)


def _i_invert(x, m, rng):
    return 1.0 - x


def _i_cutout(x, m, rng):
    h, w = x.shape
    side = m * 0.5 * w
    cx = rng.uniform(0, w)
    cy = rng.uniform(0, h)
    x0 = max(0, int(round(cx - side / 2)))
    x1 = min(w, int(round(cx + side / 2)))
    y0 = max(0, int(round(cy - side / 2)))
    y1 = min(h, int(round(cy + side / 2)))
    out = x.copy()
    out[y0:y1, x0:x1] = 0.0
    return out


def _i_gauss_noise(x, m, rng):
    return x + rng.normal(0.3 * m, size=x.shape)


VECTOR_OPS = {
    "jitter": _v_jitter,
    "scale": _v_scale,
    "rotate_pair": _v_rotate_pair,
    "translate": _v_translate,
    "coordinate_drop": _v_coordinate_drop,
}

IMAGE_OPS = {
    "rotate": _i_rotate,
    "translate_x": _i_translate_x,
    "translate_y": _i_translate_y,
    "shear_x": _i_shear_x,
    "shear_y": _i_shear_y,
    "zoom": _i_zoom,
    "brightness": _i_brightness,
    "contrast": _i_contrast,
    "invert": _i_invert,
    "cutout": _i_cutout,
    "gauss_noise": _i_gauss_noise,
}


def registry(mode: str) -> tuple[str, ...]:
    """The operator names available for a feature mode, in draw order."""
    if mode == MODE_VECTOR:
        return tuple(VECTOR_OPS)
    if mode == MODE_IMAGE:
        return tuple(IMAGE_OPS)
    raise ParameterError(f"unknown mode {mode!r}")


def _mode_of(x: np.ndarray) -> str:
    if x.ndim == 1:
        return MODE_VECTOR
    if x.ndim == 2:
        return MODE_IMAGE
    raise ShapeError("rank 1 or 2 features", x.shape)


def apply_one(x: np.ndarray, spec: TransformSpec, rng: RngStream) -> np.ndarray:
    """Apply one stage: a probability draw first, then the operator's own
    draws.  Skipped stages return the input unchanged."""
    mode = _mode_of(x)
    ops = VECTOR_OPS if mode == MODE_VECTOR else IMAGE_OPS
    fn = ops.get(spec.op)
    if fn is None:
        raise ConfigurationError(f"operator {spec.op!r} is not registered for {mode} mode")
    if rng.uniform() >= spec.probability:
        return x
    out = fn(x, spec.magnitude, rng)
    if mode == MODE_IMAGE:
        out = np.clip(out, 0.0, 1.0)
    return np.asarray(out, dtype=x.dtype)


def apply_pipeline(x: np.ndarray, pipeline: Pipeline, rng: RngStream) -> np.ndarray:
    """Left fold of :func:`apply_one` over the stages, first stage first."""
    out = x
    for spec in pipeline.stages:
        out = apply_one(out, spec, rng)
    return out

"""Local scaling warp of detected pores.

The radial map f(r) = (1 - (r / r_max - 1)^2 * a) * r is applied as a
backward map: an output pixel at distance r from a circle center samples the
input at distance f(r). Negative strengths shrink the content of the circle,
positive strengths enlarge it, and the circle's center and rim stay fixed.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .datapipe import WINDOW_ORDINAL
from .errors import (
    InvalidInputError,
    InvalidParameterError,
    StrengthRangeError,
    UnsatisfiableTargetError,
)
from .imagecore import bilinear_sample_array
from .poreseg import PoreComponent, pore_stats

A_MIN, A_MAX = -3.0, 1.0
DEFAULT_BETA = 1.5
# pixel centers sit half a pixel inside the pore outline
PIXEL_HALF_EXTENT = 0.5
FLOW_MAGIC = b"PSFF"


def _check_strength(a: float) -> None:
    if not (A_MIN < a < A_MAX):
        raise InvalidParameterError(f"warp strength a={a} outside ({A_MIN:g}, {A_MAX:g}); the map would not be monotone")


def radial_map(r: float, r_max: float, a: float) -> float:
    _check_strength(a)
    if not r_max > 0:
        raise InvalidInputError(f"r_max must be > 0, got {r_max}")
    if not (0.0 <= r <= r_max):
        raise InvalidInputError(f"r={r} outside [0, r_max={r_max}]")
    u = r / r_max - 1.0
    return (1.0 - u * u * a) * r


def radial_map_derivative(r: float, r_max: float, a: float) -> float:
    u = r / r_max
    return 1.0 - a * (u - 1.0) * (3.0 * u - 1.0)


@dataclass(frozen=True)
class WarpCircle:
    cx: float
    cy: float
    r_max: float
    a: float

    def __post_init__(self):
        if not self.r_max > 0:
            raise InvalidInputError(f"r_max must be > 0, got {self.r_max}")
        _check_strength(self.a)


def _strength(rho: float, beta: float) -> float:
    s = math.sqrt(rho)
    return (1.0 - 1.0 / s) / (s / beta - 1.0) ** 2


def admissible_ratio_range(beta: float) -> tuple[float, float]:
    """Open interval of area ratios whose solved strength lies in (-3, 1)."""
    # strength is increasing in sqrt(rho) on (0, beta): solve for both ends
    lo = brentq(lambda s: _strength(s * s, beta) - A_MIN, 1e-9, 1.0)
    hi = brentq(lambda s: _strength(s * s, beta) - A_MAX, 1.0, beta * (1 - 1e-12))
    return lo * lo, hi * hi


def solve_warp_strength(rho: float, beta: float = DEFAULT_BETA) -> float:
    """Strength that maps a pore of radius r_max/beta to radius sqrt(rho) * r_max/beta.

    The destination rim at sqrt(rho) * r_p samples the source rim r_p, so the
    pore's area scales by rho.
    """
    if not beta > 1:
        raise InvalidParameterError(f"beta must be > 1, got {beta}")
    if not rho > 0:
        raise InvalidParameterError(f"area ratio must be > 0, got {rho}")
    if math.sqrt(rho) >= beta:
        raise UnsatisfiableTargetError(
            f"area ratio {rho} needs the pore rim at {math.sqrt(rho):.4g} r_p, outside the circle (beta={beta})"
        )
    a = _strength(rho, beta)
    if not (A_MIN < a < A_MAX):
        lo, hi = admissible_ratio_range(beta)
        raise StrengthRangeError(
            f"area ratio {rho} gives strength {a:.4g} outside ({A_MIN:g}, {A_MAX:g}); "
            f"admissible ratios for beta={beta} are ({lo:.6g}, {hi:.6g})",
            admissible=(lo, hi),
        )
    return a


def identity_field(width: int, height: int) -> np.ndarray:
    if width < 1 or height < 1:
        raise InvalidInputError(f"flow field dimensions must be positive, got {width}x{height}")
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    return np.stack([xs, ys], axis=-1)


def _circle_displacement(c: WarpCircle, width: int, height: int):
    """Displacement patch of one circle: (y-slice, x-slice, dx, dy)."""
    x0 = max(0, int(math.floor(c.cx - c.r_max)))
    x1 = min(width, int(math.ceil(c.cx + c.r_max)) + 1)
    y0 = max(0, int(math.floor(c.cy - c.r_max)))
    y1 = min(height, int(math.ceil(c.cy + c.r_max)) + 1)
    if x0 >= x1 or y0 >= y1:
        return None
    px = np.arange(x0, x1, dtype=np.float64)[None, :] - c.cx
    py = np.arange(y0, y1, dtype=np.float64)[:, None] - c.cy
    r = np.sqrt(px * px + py * py)
    u = r / c.r_max - 1.0
    # source = center + (p - center) * f(r) / r  =>  displacement = -(p - center) * a * u^2
    k = np.where(r < c.r_max, -c.a * u * u, 0.0)
    return slice(y0, y1), slice(x0, x1), px * k, py * k


def build_flow_field(width: int, height: int, circles: Iterable[WarpCircle]) -> np.ndarray:
    """(H, W, 2) grid of absolute source coordinates (x_src, y_src).

    Circle displacements are summed onto the identity grid. Each one is zero
    outside its circle, so pixels outside every circle keep the identity
    coordinates exactly. Displacements are accumulated in a canonical circle
    order, so the field does not depend on the order of ``circles``.
    """
    field = identity_field(width, height)
    disp = np.zeros_like(field)
    for c in sorted(circles, key=lambda c: (c.cy, c.cx, c.r_max, c.a)):
        if c.a == 0.0:
            continue
        patch = _circle_displacement(c, width, height)
        if patch is None:
            continue
        ys, xs, dx, dy = patch
        disp[ys, xs, 0] += dx
        disp[ys, xs, 1] += dy
    return field + disp


def apply_flow(img, field: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    field = np.asarray(field, dtype=np.float64)
    if field.shape != arr.shape[:2] + (2,):
        raise InvalidInputError(f"flow field {field.shape[:2]} does not match image {arr.shape[:2]}")
    if not np.all(np.isfinite(field)):
        raise InvalidInputError("flow field contains non-finite entries")
    return bilinear_sample_array(arr, field[..., 0], field[..., 1])


def write_flow_field(path, field: np.ndarray) -> None:
    """Binary sidecar: b'PSFF', u32 width, u32 height, row-major little-endian f32 (x, y) pairs."""
    from .imagecore import atomic_write_bytes

    h, w = field.shape[:2]

    def writer(tmp):
        with open(tmp, "wb") as fh:
            fh.write(FLOW_MAGIC + struct.pack("<II", w, h))
            fh.write(np.ascontiguousarray(field, dtype="<f4").tobytes())

    atomic_write_bytes(path, writer)


def read_flow_field(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) != 12 or head[:4] != FLOW_MAGIC:
            raise InvalidInputError(f"{path}: not a PSFF flow field")
        w, h = struct.unpack("<II", head[4:])
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != w * h * 2:
        raise InvalidInputError(f"{path}: expected {w * h * 2} floats, found {data.size}")
    return data.reshape(h, w, 2).astype(np.float64)


def pore_circles(components: Sequence[PoreComponent], a: float, beta: float = DEFAULT_BETA) -> list[WarpCircle]:
    return [
        WarpCircle(c.circle_center[0], c.circle_center[1], (c.circle_radius + PIXEL_HALF_EXTENT) * beta, a)
        for c in components
    ]


def window_features(window: str, components: Sequence[PoreComponent]) -> list[float]:
    if window not in WINDOW_ORDINAL:
        raise InvalidInputError(f"unknown time window {window!r}; expected one of {sorted(WINDOW_ORDINAL)}")
    return [float(WINDOW_ORDINAL[window]), 1.0, float(pore_stats(list(components)).pore_count)]


def simulate_ratio(img, components: Sequence[PoreComponent], rho: float, beta: float = DEFAULT_BETA) -> np.ndarray:
    """Warp every pore toward area ratio ``rho`` with one shared strength."""
    arr = np.asarray(img, dtype=np.float64)
    a = solve_warp_strength(rho, beta)
    if a == 0.0 or not components:
        return arr.copy()
    h, w = arr.shape[:2]
    return apply_flow(arr, build_flow_field(w, h, pore_circles(components, a, beta)))


def simulate(img, components: Sequence[PoreComponent], model, window: str, beta: float = DEFAULT_BETA) -> np.ndarray:
    """Predict the window's area ratio with ``model`` and warp the pores accordingly."""
    from .rfregress import predict

    feats = window_features(window, components)
    rho = predict(model, feats)
    try:
        return simulate_ratio(img, components, rho, beta)
    except (UnsatisfiableTargetError, StrengthRangeError, InvalidParameterError) as exc:
        raise type(exc)(f"window {window}: predicted area ratio {rho:.6g}: {exc}") from exc

"""Synthetic stand-ins for clinical data: pore sheets with exact truth, and index cohorts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .datapipe import SESSIONS, IndexSample
from .errors import InvalidInputError, InvalidParameterError

# luma of this tint is 1, so the gray channel equals the intensity field
SKIN_TINT = (1.12, 0.97, 0.85)
SUPERSAMPLE = 4


@dataclass
class SyntheticSheetSpec:
    width: int = 512
    height: int = 512
    n_pores: int = 30
    radius_range: tuple[float, float] = (2.0, 6.0)
    contrast_range: tuple[float, float] = (0.3, 0.3)
    max_elongation: float = 1.5
    background_level: float = 0.6
    texture_amplitude: float = 0.05
    texture_scale: float = 16.0
    n_lines: int = 0
    line_length: float = 80.0
    line_width: float = 8.0
    min_gap: float = 6.0
    rgb: bool = True
    rng_seed: int = 0

    def validate(self) -> "SyntheticSheetSpec":
        if self.width < 1 or self.height < 1:
            raise InvalidParameterError("sheet dimensions must be positive")
        if self.n_pores < 0 or self.n_lines < 0:
            raise InvalidParameterError("n_pores and n_lines must be >= 0")
        lo, hi = self.radius_range
        if not (1.0 <= lo <= hi):
            raise InvalidParameterError("radius range must satisfy 1 <= min <= max")
        clo, chi = self.contrast_range
        if not (0 < clo <= chi < 1):
            raise InvalidParameterError("contrast range must lie inside (0, 1)")
        if self.max_elongation < 1:
            raise InvalidParameterError("max_elongation must be >= 1")
        return self


@dataclass
class PlantedShape:
    kind: str  # "pore" or "line"
    cx: float
    cy: float
    semi_major: float
    semi_minor: float
    angle_deg: float
    contrast: float

    @property
    def area(self) -> float:
        if self.kind == "line":
            return 2 * self.semi_major * 2 * self.semi_minor
        return math.pi * self.semi_major * self.semi_minor

    @property
    def bound_radius(self) -> float:
        if self.kind == "line":
            return math.hypot(self.semi_major, self.semi_minor)
        return self.semi_major


@dataclass
class SyntheticSheet:
    image: np.ndarray
    truth_mask: np.ndarray
    pores: list[PlantedShape]
    lines: list[PlantedShape] = field(default_factory=list)

    @property
    def truth_area(self) -> float:
        return float(sum(p.area for p in self.pores))


def _coverage(shape: PlantedShape, x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    """Fractional coverage of pixels [x0, x1) x [y0, y1) by a shape, by supersampling."""
    s = SUPERSAMPLE
    offs = (np.arange(s) + 0.5) / s - 0.5
    xs = (np.arange(x0, x1)[:, None] + offs[None, :]).ravel()
    ys = (np.arange(y0, y1)[:, None] + offs[None, :]).ravel()
    gx, gy = np.meshgrid(xs - shape.cx, ys - shape.cy)
    t = math.radians(shape.angle_deg)
    u = gx * math.cos(t) + gy * math.sin(t)
    v = -gx * math.sin(t) + gy * math.cos(t)
    if shape.kind == "line":
        inside = (np.abs(u) <= shape.semi_major) & (np.abs(v) <= shape.semi_minor)
    else:
        inside = (u / shape.semi_major) ** 2 + (v / shape.semi_minor) ** 2 <= 1.0
    h, w = y1 - y0, x1 - x0
    return inside.reshape(h, s, w, s).mean(axis=(1, 3))


def _texture(rng: np.random.Generator, h: int, w: int, scale: float) -> np.ndarray:
    noise = ndimage.gaussian_filter(rng.standard_normal((h, w)), scale, mode="wrap")
    sd = noise.std()
    return noise / sd if sd > 0 else noise


def _place(rng, spec, shapes, bound, margin, tries=2000):
    for _ in range(tries):
        cx = rng.uniform(margin, spec.width - 1 - margin)
        cy = rng.uniform(margin, spec.height - 1 - margin)
        if all(math.hypot(cx - s.cx, cy - s.cy) >= bound + s.bound_radius + spec.min_gap for s in shapes):
            return cx, cy
    raise InvalidInputError(
        f"could not place {spec.n_pores} pores and {spec.n_lines} lines on a "
        f"{spec.width}x{spec.height} sheet without overlap"
    )


def gen_synthetic_sheet(spec: SyntheticSheetSpec | None = None) -> SyntheticSheet:
    """Textured skin-like sheet with anti-aliased dark elliptical pores.

    The truth mask marks pixels at least half covered by a pore. Line
    artifacts, when requested, are drawn but excluded from the truth.
    """
    spec = (spec or SyntheticSheetSpec()).validate()
    rng = np.random.default_rng(spec.rng_seed)
    h, w = spec.height, spec.width
    intensity = spec.background_level + spec.texture_amplitude * _texture(rng, h, w, spec.texture_scale)

    shapes: list[PlantedShape] = []
    for _ in range(spec.n_lines):
        half = spec.line_length / 2.0
        probe = PlantedShape("line", 0, 0, half, spec.line_width / 2.0, 0, 0)
        cx, cy = _place(rng, spec, shapes, probe.bound_radius, probe.bound_radius + 2)
        shapes.append(PlantedShape(
            "line", cx, cy, half, spec.line_width / 2.0,
            float(rng.uniform(0, 180)), float(rng.uniform(*spec.contrast_range)),
        ))
    for _ in range(spec.n_pores):
        major = float(rng.uniform(*spec.radius_range))
        minor = max(spec.radius_range[0], major / float(rng.uniform(1.0, spec.max_elongation)))
        cx, cy = _place(rng, spec, shapes, major, major + 8)
        shapes.append(PlantedShape(
            "pore", cx, cy, major, minor,
            float(rng.uniform(0, 180)), float(rng.uniform(*spec.contrast_range)),
        ))

    truth = np.zeros((h, w), dtype=bool)
    for s in shapes:
        b = s.bound_radius + 1
        x0, x1 = max(0, int(math.floor(s.cx - b))), min(w, int(math.ceil(s.cx + b)) + 1)
        y0, y1 = max(0, int(math.floor(s.cy - b))), min(h, int(math.ceil(s.cy + b)) + 1)
        cov = _coverage(s, x0, y0, x1, y1)
        intensity[y0:y1, x0:x1] -= s.contrast * cov
        if s.kind == "pore":
            truth[y0:y1, x0:x1] |= cov >= 0.5

    intensity = np.clip(intensity, 0.0, 1.0 / max(SKIN_TINT))
    image = intensity[:, :, None] * np.array(SKIN_TINT) if spec.rgb else intensity
    image = np.clip(image, 0.0, 1.0)
    pores = [s for s in shapes if s.kind == "pore"]
    lines = [s for s in shapes if s.kind == "line"]
    return SyntheticSheet(image=image, truth_mask=truth, pores=pores, lines=lines)


@dataclass
class PlantedOutlier:
    subject_id: str
    day: int
    index_name: str
    factor: float


@dataclass
class SyntheticCohort:
    samples: list[IndexSample]
    outliers: list[PlantedOutlier]


def gen_synthetic_cohort(
    n_subjects: int = 60,
    days: int = 30,
    trend: float = -0.005,
    noise: float = 0.02,
    outlier_rate: float = 0.0,
    outlier_amplitude: float = 5.0,
    seed: int = 0,
    extra_indexes: dict[str, float] | None = None,
    baseline_range: tuple[float, float] = (500.0, 3000.0),
    index_name: str = "Pore_Area_total",
) -> SyntheticCohort:
    """Clinical-style index series for days 0..days, three sessions per day.

    value = baseline * (1 + trend * day) * (1 + noise * N(0, 1)), so each
    subject's normalized daily mean follows ``1 + trend * day`` exactly when
    noise is zero. Outliers scale a whole subject-day by
    ``1 +/- outlier_amplitude * noise`` and are planted on interior days
    (1 .. days-1), never on two consecutive days of one series.
    ``extra_indexes`` maps further index names to their own trends.
    """
    if n_subjects < 1 or days < 1 or days > 30:
        raise InvalidParameterError("need n_subjects >= 1 and 1 <= days <= 30")
    if noise < 0 or not (0 <= outlier_rate < 0.5) or outlier_amplitude <= 0:
        raise InvalidParameterError("noise must be >= 0, outlier_rate in [0, 0.5), amplitude > 0")
    rng = np.random.default_rng(seed)
    trends = {index_name: trend, **(extra_indexes or {})}
    day_axis = np.arange(days + 1)
    samples: list[IndexSample] = []
    outliers: list[PlantedOutlier] = []
    interior = list(range(1, days))
    n_out = int(math.floor(outlier_rate * len(interior) + 0.5))

    for s in range(n_subjects):
        sid = f"S{s:03d}"
        for name, slope in trends.items():
            base = rng.uniform(*baseline_range)
            curve = base * (1.0 + slope * day_axis)
            factors = np.ones(days + 1)
            if n_out:
                chosen = _non_adjacent(rng, interior, n_out)
                for d in chosen:
                    f = 1.0 + outlier_amplitude * noise * rng.choice((-1.0, 1.0))
                    factors[d] = f
                    outliers.append(PlantedOutlier(sid, int(d), name, float(f)))
            for d in day_axis:
                eps = rng.standard_normal(len(SESSIONS))
                for sess, e in zip(SESSIONS, eps):
                    value = curve[d] * factors[d] * (1.0 + noise * e)
                    samples.append(IndexSample(sid, int(d), sess, name, float(max(value, 1e-9))))
    return SyntheticCohort(samples=samples, outliers=outliers)


def _non_adjacent(rng, days, k):
    for _ in range(1000):
        chosen = sorted(rng.choice(days, size=k, replace=False).tolist())
        if all(b - a > 1 for a, b in zip(chosen, chosen[1:])):
            return chosen
    raise InvalidParameterError("outlier rate too high to keep planted outliers non-adjacent")

"""Classical pore detector: DoG response threshold, morphology, component filters."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError, InvalidParameterError
from .geometry import min_enclosing_circle
from .imagecore import as_raster, dog_filter, rgb_to_lab_array, to_gray

MIN_SIDE = 64

COMPONENT_CSV_FIELDS = ["id", "cx", "cy", "area", "ecc", "orient", "circle_x", "circle_y", "radius"]


@dataclass
class DetectionConfig:
    sigma1: float = 1.0
    sigma2: float = 3.0
    response_threshold: float = 0.02
    morph_radius: int = 1
    min_area_px: int = 4
    max_area_px: int = 400
    max_aspect_ratio: float = 4.0
    connectivity: int = 8

    def validate(self) -> "DetectionConfig":
        if not (0 < self.sigma1 < self.sigma2):
            raise InvalidParameterError("detection: need 0 < sigma1 < sigma2")
        if not self.response_threshold > 0:
            raise InvalidParameterError("detection: response_threshold must be > 0")
        if self.morph_radius < 0:
            raise InvalidParameterError("detection: morph_radius must be >= 0")
        if not (1 <= self.min_area_px <= self.max_area_px):
            raise InvalidParameterError("detection: need 1 <= min_area_px <= max_area_px")
        if not self.max_aspect_ratio >= 1:
            raise InvalidParameterError("detection: max_aspect_ratio must be >= 1")
        if self.connectivity not in (4, 8):
            raise InvalidParameterError("detection: connectivity must be 4 or 8")
        return self


@dataclass
class PoreComponent:
    pixels: np.ndarray = field(repr=False)  # (N, 2) int array of (x, y)
    centroid: tuple[float, float]
    area_px: int
    eccentricity: float
    orientation_deg: float
    aspect_ratio: float
    circle_center: tuple[float, float]
    circle_radius: float
    mean_lab: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass
class PoreStats:
    pore_count: int = 0
    pore_area_total: float = 0.0
    pore_area_mean: float = 0.0
    mean_eccentricity: float = 0.0
    mean_orientation_deg: float = 0.0
    mean_L: float = 0.0
    mean_a: float = 0.0
    mean_b: float = 0.0

    def to_dict(self):
        return asdict(self)


def disk(radius: int) -> np.ndarray:
    t = np.arange(-radius, radius + 1)
    return (t[:, None] ** 2 + t[None, :] ** 2) <= radius * radius


def moment_shape(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    """Eccentricity, orientation (deg in [0, 180)) and aspect ratio from second moments.

    Each pixel is treated as a unit square, adding 1/12 to both variances.
    Orientation is measured from +x toward +y (image rows grow downward).
    """
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    mu20 = float(np.mean(dx * dx)) + 1.0 / 12.0
    mu02 = float(np.mean(dy * dy)) + 1.0 / 12.0
    mu11 = float(np.mean(dx * dy))
    common = math.sqrt(((mu20 - mu02) / 2.0) ** 2 + mu11 * mu11)
    lam1 = (mu20 + mu02) / 2.0 + common
    lam2 = max((mu20 + mu02) / 2.0 - common, 1e-12)
    ecc = math.sqrt(max(0.0, 1.0 - lam2 / lam1))
    orient = math.degrees(0.5 * math.atan2(2.0 * mu11, mu20 - mu02)) % 180.0
    return ecc, orient, math.sqrt(lam1 / lam2)


def _component(xs, ys, rgb) -> PoreComponent:
    ecc, orient, aspect = moment_shape(xs.astype(float), ys.astype(float))
    pts = np.column_stack([xs, ys])
    center, radius = min_enclosing_circle(_hull_candidates(pts))
    lab = (0.0, 0.0, 0.0)
    if rgb is not None:
        lab = tuple(float(v) for v in rgb_to_lab_array(rgb[ys, xs]).mean(axis=0))
    return PoreComponent(
        pixels=pts,
        centroid=(float(xs.mean()), float(ys.mean())),
        area_px=int(len(xs)),
        eccentricity=ecc,
        orientation_deg=orient,
        aspect_ratio=aspect,
        circle_center=center,
        circle_radius=radius,
        mean_lab=lab,
    )


def _hull_candidates(pts: np.ndarray) -> np.ndarray:
    # only the extreme pixel of each row can touch the enclosing circle
    if len(pts) <= 8:
        return pts
    out = []
    for y in np.unique(pts[:, 1]):
        row = pts[pts[:, 1] == y, 0]
        out.append((row.min(), y))
        if row.max() != row.min():
            out.append((row.max(), y))
    return np.array(out)


def candidate_mask(gray: np.ndarray, cfg: DetectionConfig) -> np.ndarray:
    """Thresholded DoG response followed by closing then opening."""
    mask = dog_filter(gray, cfg.sigma1, cfg.sigma2) <= -cfg.response_threshold
    if cfg.morph_radius > 0:
        se = disk(cfg.morph_radius)
        pad = cfg.morph_radius
        # pad so closing does not erode pixels touching the frame
        padded = np.pad(mask, pad, mode="edge")
        padded = ndimage.binary_closing(padded, structure=se)
        padded = ndimage.binary_opening(padded, structure=se)
        mask = padded[pad:-pad, pad:-pad]
    return mask


def detect_pores(img, cfg: DetectionConfig | None = None) -> tuple[np.ndarray, list[PoreComponent]]:
    cfg = (cfg or DetectionConfig()).validate()
    arr = as_raster(img)
    h, w = arr.shape[:2]
    if h < MIN_SIDE or w < MIN_SIDE:
        raise InvalidInputError(f"image must be at least {MIN_SIDE}x{MIN_SIDE}, got {w}x{h}")
    rgb = arr if arr.ndim == 3 else np.repeat(arr[:, :, None], 3, axis=2)
    gray = to_gray(arr) if arr.ndim == 3 else arr

    mask = candidate_mask(gray, cfg)
    structure = np.ones((3, 3), bool) if cfg.connectivity == 8 else ndimage.generate_binary_structure(2, 1)
    labels, n = ndimage.label(mask, structure=structure)
    out_mask = np.zeros_like(mask)
    components = []
    if n == 0:
        return out_mask, components
    # ndimage.label numbers components in row-major order of their first pixel
    slices = ndimage.find_objects(labels)
    for lab_id, sl in enumerate(slices, start=1):
        sub = labels[sl] == lab_id
        area = int(sub.sum())
        if area < cfg.min_area_px or area > cfg.max_area_px:
            continue
        ys, xs = np.nonzero(sub)
        ys = ys + sl[0].start
        xs = xs + sl[1].start
        comp = _component(xs, ys, rgb)
        if comp.aspect_ratio > cfg.max_aspect_ratio:
            continue
        components.append(comp)
        out_mask[ys, xs] = True
    return out_mask, components


def pore_stats(components: list[PoreComponent]) -> PoreStats:
    if not components:
        return PoreStats()
    areas = np.array([c.area_px for c in components], dtype=float)
    labs = np.array([c.mean_lab for c in components], dtype=float)
    total = float(areas.sum())
    return PoreStats(
        pore_count=len(components),
        pore_area_total=total,
        pore_area_mean=total / len(components),
        mean_eccentricity=float(np.mean([c.eccentricity for c in components])),
        mean_orientation_deg=float(np.mean([c.orientation_deg for c in components])),
        mean_L=float(labs[:, 0].mean()),
        mean_a=float(labs[:, 1].mean()),
        mean_b=float(labs[:, 2].mean()),
    )


def mask_metrics(pred, truth) -> dict[str, float]:
    """Dice, IoU, precision and pixel accuracy.

    A metric whose denominator is zero is 1.0 when both masks are empty,
    otherwise 0.0.
    """
    p = np.asarray(pred, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    if p.shape != t.shape:
        raise InvalidInputError(f"mask shapes differ: {p.shape} vs {t.shape}")
    both_empty = not p.any() and not t.any()
    inter = float(np.logical_and(p, t).sum())
    union = float(np.logical_or(p, t).sum())
    ps, ts = float(p.sum()), float(t.sum())

    def ratio(num, den):
        if den == 0:
            return 1.0 if both_empty else 0.0
        return num / den

    return {
        "dice": ratio(2.0 * inter, ps + ts),
        "iou": ratio(inter, union),
        "precision": ratio(inter, ps),
        "accuracy": float((p == t).sum()) / p.size,
    }


def write_components_csv(path, components: list[PoreComponent]) -> None:
    from .imagecore import atomic_write_bytes

    def writer(tmp):
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(COMPONENT_CSV_FIELDS)
            for i, c in enumerate(components):
                wr.writerow([
                    i, f"{c.centroid[0]:.6f}", f"{c.centroid[1]:.6f}", c.area_px,
                    f"{c.eccentricity:.6f}", f"{c.orientation_deg:.6f}",
                    f"{c.circle_center[0]:.6f}", f"{c.circle_center[1]:.6f}", f"{c.circle_radius:.6f}",
                ])

    atomic_write_bytes(path, writer)


def read_components_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [
        {k: (int(v) if k in ("id", "area") else float(v)) for k, v in row.items()}
        for row in rows
    ]

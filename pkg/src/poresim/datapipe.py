"""Index-series preparation: normalization, daily means, sliding-window cleaning, trends."""
from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, OutOfRangeError

log = logging.getLogger(__name__)

SESSIONS = ("morning_wake", "morning_wash", "evening_wash")
CSV_FIELDS = ["subject_id", "day", "session", "index_name", "value"]
BASELINE = "Baseline"
TIME_WINDOWS = {"TW10": (1, 10), "TW20": (11, 20), "TW30": (21, 30)}
WINDOW_ORDINAL = {"TW10": 1, "TW20": 2, "TW30": 3}
MAX_DAY = 30


@dataclass(frozen=True)
class IndexSample:
    subject_id: str
    day: int
    session: str
    index_name: str
    value: float

    def __post_init__(self):
        if self.day < 0:
            raise InvalidInputError(f"day must be >= 0, got {self.day}")
        if self.session not in SESSIONS:
            raise InvalidInputError(f"unknown session {self.session!r}")
        if not (math.isfinite(self.value) and self.value > 0):
            raise InvalidInputError(f"index value must be finite and > 0, got {self.value}")


@dataclass(frozen=True)
class DailyValue:
    subject_id: str
    index_name: str
    day: int
    value: float


@dataclass
class CleanConfig:
    window_days: int = 3
    k_sigma: float = 1.0

    def validate(self) -> "CleanConfig":
        if self.window_days < 2:
            raise InvalidParameterError("window_days must be >= 2")
        if not self.k_sigma > 0:
            raise InvalidParameterError("k_sigma must be > 0")
        return self


class MissingBaselineError(InvalidInputError):
    def __init__(self, subjects):
        self.subjects = sorted(subjects)
        super().__init__(f"no day-0 baseline for subject(s): {', '.join(self.subjects)}")


def read_samples_csv(path) -> list[IndexSample]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != CSV_FIELDS:
            raise InvalidInputError(f"{path}: expected header {','.join(CSV_FIELDS)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(IndexSample(row["subject_id"], int(row["day"]), row["session"],
                                       row["index_name"], float(row["value"])))
            except (ValueError, TypeError) as exc:
                raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_samples_csv(path, samples: Iterable[IndexSample]) -> None:
    from .imagecore import atomic_write_bytes

    def writer(tmp):
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(CSV_FIELDS)
            for s in samples:
                wr.writerow([s.subject_id, s.day, s.session, s.index_name, repr(s.value)])

    atomic_write_bytes(path, writer)


def normalize_subject(series: Iterable[IndexSample], subject: str | None = None) -> list[IndexSample]:
    """Divide each value by its subject's day-0 mean for the same index.

    With ``subject`` given only that subject's samples are returned.
    Raises :class:`MissingBaselineError` naming every subject lacking day 0.
    """
    rows = [s for s in series if subject is None or s.subject_id == subject]
    base_sum: dict[tuple[str, str], float] = defaultdict(float)
    base_n: dict[tuple[str, str], int] = defaultdict(int)
    for s in rows:
        if s.day == 0:
            base_sum[s.subject_id, s.index_name] += s.value
            base_n[s.subject_id, s.index_name] += 1
    missing = {s.subject_id for s in rows if (s.subject_id, s.index_name) not in base_n}
    if subject is not None and not rows:
        missing.add(subject)
    if missing:
        raise MissingBaselineError(missing)
    out = []
    for s in rows:
        key = (s.subject_id, s.index_name)
        base = base_sum[key] / base_n[key]
        out.append(IndexSample(s.subject_id, s.day, s.session, s.index_name, s.value / base))
    return out


def daily_mean(series: Iterable[IndexSample]) -> list[DailyValue]:
    """Mean over available sessions per (subject, index, day), sorted by that key."""
    acc: dict[tuple[str, str, int], list[float]] = defaultdict(list)
    for s in series:
        acc[s.subject_id, s.index_name, s.day].append(s.value)
    return [DailyValue(sid, name, day, math.fsum(v) / len(v)) for (sid, name, day), v in sorted(acc.items())]


def _window_offsets(n: int) -> range:
    lo = -(n // 2)
    return range(lo, lo + n)


def sliding_window_clean(daily: Iterable[DailyValue], cfg: CleanConfig | None = None
                         ) -> tuple[list[DailyValue], list[DailyValue]]:
    """Centered n-day outlier rejection stepped one day at a time.

    A day is tested only when every day of its centered window is present
    in the same series (odd n: d-n//2 .. d+n//2; even n: d-n//2 .. d+n//2-1).
    It is removed iff sample std > 0 and |x - mean| > k * std. Other days
    are kept. Windows always use the original values, so removals do not
    cascade.
    """
    cfg = (cfg or CleanConfig()).validate()
    groups: dict[tuple[str, str], dict[int, DailyValue]] = defaultdict(dict)
    for d in daily:
        groups[d.subject_id, d.index_name][d.day] = d
    offsets = _window_offsets(cfg.window_days)
    kept, removed = [], []
    for key in sorted(groups):
        by_day = groups[key]
        if cfg.window_days > len(by_day):
            log.warning("series %s/%s has %d days, shorter than window %d; nothing removed",
                        key[0], key[1], len(by_day), cfg.window_days)
        for day in sorted(by_day):
            point = by_day[day]
            window = [by_day.get(day + o) for o in offsets]
            if any(w is None for w in window):
                kept.append(point)
                continue
            vals = np.array([w.value for w in window])
            mu = vals.mean()
            sd = vals.std(ddof=1)
            if sd > 0 and abs(point.value - mu) > cfg.k_sigma * sd:
                removed.append(point)
            else:
                kept.append(point)
    return kept, removed


def clean_samples(samples: list[IndexSample], cfg: CleanConfig | None = None
                  ) -> tuple[list[IndexSample], list[IndexSample]]:
    """Clean on raw daily means, then split the session rows by their day's verdict."""
    _, removed = sliding_window_clean(daily_mean(samples), cfg)
    bad = {(d.subject_id, d.index_name, d.day) for d in removed}
    kept_rows = [s for s in samples if (s.subject_id, s.index_name, s.day) not in bad]
    removed_rows = [s for s in samples if (s.subject_id, s.index_name, s.day) in bad]
    return kept_rows, removed_rows


def assign_time_window(day: int) -> str:
    if not isinstance(day, (int, np.integer)) or day < 0 or day > MAX_DAY:
        raise OutOfRangeError(f"day must be an integer in [0, {MAX_DAY}], got {day!r}")
    if day == 0:
        return BASELINE
    for label, (lo, hi) in TIME_WINDOWS.items():
        if lo <= day <= hi:
            return label
    raise AssertionError("unreachable")


@dataclass
class TrendFit:
    slope: float
    intercept: float
    r2: float


def cohort_daily_means(daily: Iterable[DailyValue], index_name: str | None = None) -> dict[int, float]:
    acc: dict[int, list[float]] = defaultdict(list)
    for d in daily:
        if index_name is None or d.index_name == index_name:
            acc[d.day].append(d.value)
    return {day: math.fsum(v) / len(v) for day, v in sorted(acc.items())}


def trend_fit(points: dict[int, float] | Iterable[tuple[float, float]]) -> TrendFit:
    """Ordinary least squares of value against day.

    ``points`` is a ``{day: value}`` mapping (e.g. from
    :func:`cohort_daily_means`) or an iterable of ``(day, value)`` pairs.
    """
    pairs = list(points.items()) if isinstance(points, dict) else list(points)
    t = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    if len(np.unique(t)) < 2:
        raise InvalidInputError("trend_fit needs at least two distinct days")
    tm, ym = t.mean(), y.mean()
    sxx = float(np.sum((t - tm) ** 2))
    sxy = float(np.sum((t - tm) * (y - ym)))
    slope = sxy / sxx
    intercept = ym - slope * tm
    ss_tot = float(np.sum((y - ym) ** 2))
    ss_res = float(np.sum((y - (intercept + slope * t)) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return TrendFit(slope, float(intercept), r2)


def window_means(values: dict[int, float]) -> dict[str, float]:
    out = {}
    for label, (lo, hi) in TIME_WINDOWS.items():
        v = [x for d, x in values.items() if lo <= d <= hi]
        if v:
            out[label] = math.fsum(v) / len(v)
    return out


def select_representative_index(daily: Iterable[DailyValue]) -> dict:
    """Rank indexes by |slope| * r2 of the cohort-mean trend.

    ``daily`` should already be normalized and cleaned. Ties are broken by
    index name.
    """
    daily = list(daily)
    names = sorted({d.index_name for d in daily})
    if not names:
        raise InvalidInputError("no index values to rank")
    entries = []
    for name in names:
        means = cohort_daily_means(daily, name)
        entry = {"index_name": name, "window_means": window_means(means), "n_days": len(means)}
        if len(means) >= 2:
            fit = trend_fit(means)
            entry.update(slope=fit.slope, intercept=fit.intercept, r2=fit.r2,
                         score=abs(fit.slope) * fit.r2)
        else:
            entry.update(slope=0.0, intercept=next(iter(means.values())), r2=0.0, score=0.0)
        entries.append(entry)
    entries.sort(key=lambda e: (-e["score"], e["index_name"]))
    for rank, e in enumerate(entries, start=1):
        e["rank"] = rank
    return {"representative": entries[0]["index_name"], "ranking": entries}


def prepare_daily(samples: list[IndexSample]) -> list[DailyValue]:
    """Normalized daily means, the form consumed by trend analysis and training."""
    return daily_mean(normalize_subject(samples))

"""Random-forest regression (CART variance reduction, bootstrap, per-split feature subsets)."""
from __future__ import annotations

import json
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .datapipe import TIME_WINDOWS, WINDOW_ORDINAL, DailyValue
from .errors import InvalidInputError, InvalidParameterError

FEATURE_NAMES = ("time_window", "baseline_pore_area_total", "baseline_pore_count")
AREA_INDEX = "Pore_Area_total"
COUNT_INDEX = "Pore_Count"


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 8
    min_samples_leaf: int = 2
    bootstrap: bool = True
    rng_seed: int = 0

    def validate(self) -> "ForestConfig":
        if self.n_trees < 1 or self.max_depth < 0 or self.min_samples_leaf < 1:
            raise InvalidParameterError("forest: need n_trees >= 1, max_depth >= 0, min_samples_leaf >= 1")
        return self


@dataclass
class Tree:
    """Flat binary tree. Leaves have feature == -1."""

    feature: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    value: list[float]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(len(X), dtype=np.intp)
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        active = feat[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            n = node[idx]
            go_left = X[idx, feat[n]] <= thr[n]
            node[idx] = np.where(go_left, left[n], right[n])
            active = feat[node] >= 0
        return np.asarray(self.value)[node]

    def to_dict(self):
        return asdict(self)


def _mean(v: np.ndarray) -> float:
    return math.fsum(v) / len(v)


def max_features(p: int) -> int:
    return max(1, math.ceil(p / 3))


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best threshold on one feature by weighted child variance (SSE).

    Returns (sse, threshold) or None when no admissible split exists.
    """
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(ys)
    csum = np.cumsum(ys)
    csq = np.cumsum(ys * ys)
    n_left = np.arange(1, n)
    sum_l, sq_l = csum[:-1], csq[:-1]
    sum_r, sq_r = csum[-1] - sum_l, csq[-1] - sq_l
    n_right = n - n_left
    sse = (sq_l - sum_l ** 2 / n_left) + (sq_r - sum_r ** 2 / n_right)
    valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None
    sse = np.where(valid, sse, np.inf)
    i = int(np.argmin(sse))
    thr = (xs[i] + xs[i + 1]) / 2.0
    if thr >= xs[i + 1]:  # midpoint of adjacent floats can round up
        thr = xs[i]
    return float(sse[i]), float(thr)


def fit_tree(X, y, max_depth: int | None = 8, min_samples_leaf: int = 1,
             n_features: int | None = None, rng: np.random.Generator | None = None) -> Tree:
    """Greedy CART regression tree.

    At each node ``n_features`` features are drawn without replacement; if
    none of them admits a split, the remaining features are tried in random
    order before the node becomes a leaf.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
        raise InvalidInputError("fit_tree needs a non-empty (n, p) matrix and n targets")
    p = X.shape[1]
    n_features = p if n_features is None else n_features
    rng = rng or np.random.default_rng(0)
    depth_cap = math.inf if max_depth is None else max_depth
    tree = Tree([], [], [], [], [])

    def new_node(value):
        for arr, v in ((tree.feature, -1), (tree.threshold, 0.0), (tree.left, -1), (tree.right, -1)):
            arr.append(v)
        tree.value.append(value)
        return len(tree.value) - 1

    stack = [(np.arange(len(y)), 0, new_node(_mean(y)))]
    while stack:
        idx, depth, node = stack.pop()
        yy = y[idx]
        if depth >= depth_cap or len(idx) < 2 * min_samples_leaf or np.ptp(yy) == 0:
            continue
        perm = rng.permutation(p)
        best = None
        for j, f in enumerate(perm):
            if j >= n_features and best is not None:
                break
            res = _best_split(X[idx, f], yy, min_samples_leaf)
            if res is not None and (best is None or res[0] < best[0]):
                best = (res[0], res[1], int(f))
        if best is None:
            continue
        _, thr, f = best
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.left[node] = new_node(_mean(y[li]))
        tree.right[node] = new_node(_mean(y[ri]))
        stack.append((ri, depth + 1, tree.right[node]))
        stack.append((li, depth + 1, tree.left[node]))
    return tree


@dataclass
class RandomForestModel:
    config: ForestConfig
    n_features: int
    trees: list[Tree]
    target_range: tuple[float, float]

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise InvalidInputError(f"expected {self.n_features} features, got {X.shape[1]}")
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def to_json(self) -> str:
        payload = {
            "config": asdict(self.config),
            "n_features": self.n_features,
            "feature_names": list(FEATURE_NAMES) if self.n_features == len(FEATURE_NAMES) else None,
            "target_range": list(self.target_range),
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "RandomForestModel":
        d = json.loads(text)
        try:
            return cls(
                config=ForestConfig(**d["config"]),
                n_features=int(d["n_features"]),
                trees=[Tree(**t) for t in d["trees"]],
                target_range=tuple(d["target_range"]),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed model file: {exc}") from exc

    def save(self, path) -> None:
        from .imagecore import atomic_write_bytes

        def writer(tmp):
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(self.to_json())

        atomic_write_bytes(path, writer)

    @classmethod
    def load(cls, path) -> "RandomForestModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _fit_one(X, y, cfg: ForestConfig, tree_index: int) -> Tree:
    rng = np.random.default_rng([cfg.rng_seed, tree_index])
    n = len(y)
    idx = rng.integers(0, n, n) if cfg.bootstrap else np.arange(n)
    return fit_tree(X[idx], y[idx], cfg.max_depth, cfg.min_samples_leaf, max_features(X.shape[1]), rng)


def fit_forest(X, y, cfg: ForestConfig | None = None, n_jobs: int = 1) -> RandomForestModel:
    """Bagged CART trees. Tree i draws from its own stream seeded by (seed, i),
    so serial and parallel fits are identical."""
    cfg = (cfg or ForestConfig()).validate()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if len(y) < 2 or len(X) != len(y):
        raise InvalidInputError("fit_forest needs at least two samples with matching targets")
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(lambda i: _fit_one(X, y, cfg, i), range(cfg.n_trees)))
    else:
        trees = [_fit_one(X, y, cfg, i) for i in range(cfg.n_trees)]
    return RandomForestModel(cfg, X.shape[1], trees, (float(y.min()), float(y.max())))


def predict(model: RandomForestModel, features: Sequence[float]) -> float:
    x = np.asarray(features, dtype=float)
    if x.ndim != 1 or len(x) != model.n_features:
        raise InvalidInputError(f"expected {model.n_features} features, got {x.shape}")
    return float(model.predict(x[None, :])[0])


def regression_metrics(preds, targets) -> dict[str, float]:
    p = np.asarray(preds, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape or p.ndim != 1 or len(p) == 0:
        raise InvalidInputError("preds and targets must be equal-length non-empty vectors")
    err = np.abs(p - t)
    ss_res = float(np.sum((p - t) ** 2))
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0:
        if ss_res != 0:
            raise InvalidInputError("r2 undefined: targets are constant but predictions differ")
        r2 = 1.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return {"r2": r2, "mae": float(err.mean()), "mae_std": float(err.std())}


@dataclass
class RegressionSample:
    features: tuple[float, float, float]
    target: float
    subject_id: str = ""
    window: str = ""


def build_regression_samples(daily: Iterable[DailyValue], raw_daily: Iterable[DailyValue] | None = None
                             ) -> list[RegressionSample]:
    """One sample per (subject, time window) with normalized Pore_Area_total data.

    ``daily`` holds normalized daily means. ``raw_daily`` (un-normalized)
    supplies the baseline Pore_Count feature; it is 0 when unavailable.
    """
    by_subject: dict[str, dict[int, float]] = defaultdict(dict)
    for d in daily:
        if d.index_name == AREA_INDEX:
            by_subject[d.subject_id][d.day] = d.value
    counts: dict[str, float] = {}
    for d in raw_daily or ():
        if d.index_name == COUNT_INDEX and d.day == 0:
            counts[d.subject_id] = d.value
    out = []
    for sid in sorted(by_subject):
        days = by_subject[sid]
        if 0 not in days:
            continue
        for label, (lo, hi) in TIME_WINDOWS.items():
            vals = [v for day, v in days.items() if lo <= day <= hi]
            if vals:
                feats = (float(WINDOW_ORDINAL[label]), days[0], counts.get(sid, 0.0))
                out.append(RegressionSample(feats, math.fsum(vals) / len(vals), sid, label))
    return out


def samples_to_arrays(samples: list[RegressionSample]) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        raise InvalidInputError("no regression samples")
    return np.array([s.features for s in samples], dtype=float), np.array([s.target for s in samples])

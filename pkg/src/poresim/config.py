from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields

from .datapipe import CleanConfig
from .deform import DEFAULT_BETA
from .errors import InvalidParameterError
from .poreseg import DetectionConfig
from .rfregress import ForestConfig


@dataclass
class PipelineConfig:
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    clean: CleanConfig = field(default_factory=CleanConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    beta: float = DEFAULT_BETA
    rng_seed: int = 0

    def validate(self) -> "PipelineConfig":
        self.detection.validate()
        self.clean.validate()
        self.forest.validate()
        if not self.beta > 1:
            raise InvalidParameterError("beta must be > 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(
                detection=DetectionConfig(**d.get("detection", {})),
                clean=CleanConfig(**d.get("clean", {})),
                forest=ForestConfig(**d.get("forest", {})),
                beta=float(d.get("beta", DEFAULT_BETA)),
                rng_seed=int(d.get("rng_seed", 0)),
            ).validate()
        except TypeError as exc:
            raise InvalidParameterError(f"bad config: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        from .imagecore import atomic_write_bytes

        def writer(tmp):
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(self.to_json() + "\n")

        atomic_write_bytes(path, writer)


def thread_count() -> int:
    """Worker cap from PORESIM_THREADS (0 or unset = number of CPUs)."""
    raw = os.environ.get("PORESIM_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise InvalidParameterError(f"PORESIM_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise InvalidParameterError("PORESIM_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)

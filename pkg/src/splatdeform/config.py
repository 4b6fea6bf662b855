"""Pipeline configuration: JSON file plus flag overrides.

All radii, magnitudes and evaluation thresholds are expressed as multiples
of the scene scale s and validated before any compute runs.
"""

import json
import os
from dataclasses import asdict, dataclass, field

DEFAULT_THRESHOLDS = (0.05, 0.075, 0.1)
CACHE_ENV_VAR = "SPLATDEFORM_CACHE"


@dataclass
class PipelineConfig:
    input: str = None
    epsilon_factor: float = 0.005
    k_laplacian: int = 30
    k_bind: int = 3
    method: str = "arap"
    max_iters: int = 50
    tol: float = 1e-6
    boundary_samples: int = 64
    interior_rings: int = 3
    ring_samples: int = 32
    adapt: bool = True
    logit: bool = False
    thresholds: list = field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    cache_dir: str = None
    output: str = None
    report: str = None

    def validate(self):
        if self.epsilon_factor < 0:
            raise ValueError("epsilon_factor must be non-negative")
        if self.k_laplacian < 1 or self.k_bind < 1:
            raise ValueError("neighborhood sizes must be positive")
        if self.method not in ("arap", "bbw"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.max_iters < 1 or self.tol < 0:
            raise ValueError("solver options out of range")
        if self.boundary_samples < 16:
            raise ValueError("boundary_samples must be at least 16")
        if any(t <= 0 for t in self.thresholds):
            raise ValueError("thresholds must be positive multiples of s")
        return self

    def resolved_cache_dir(self):
        if self.cache_dir:
            return self.cache_dir
        return os.environ.get(CACHE_ENV_VAR, ".splatdeform_cache")

    def graph_params(self):
        """Parameters that determine the graph, for cache keying."""
        return {
            "epsilon_factor": self.epsilon_factor,
            "boundary_samples": self.boundary_samples,
            "interior_rings": self.interior_rings,
            "ring_samples": self.ring_samples,
            "logit": self.logit,
        }

    @classmethod
    def load(cls, path=None, overrides=None):
        data = {}
        if path is not None:
            with open(path) as f:
                data = json.load(f)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        for key, value in (overrides or {}).items():
            if value is not None:
                setattr(cfg, key, value)
        return cfg.validate()

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

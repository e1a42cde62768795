"""Structured check results."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

__all__ = ["CheckReport", "jsonable"]


def jsonable(obj: Any) -> Any:
    """Convert numpy containers and scalars into plain JSON types."""
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


@dataclass
class CheckReport:
    """Pass/fail record.

    ``residuals`` are nonnegative violations; the check passes iff every
    residual is finite and at most its tolerance.  ``runtime`` is kept out of
    :meth:`to_dict` so reports are reproducible byte for byte.
    """

    check_id: str
    params: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    seed: int = 0
    runtime: float = 0.0
    notes: str = ""
    covers: tuple = ()
    # scan results for CSV export; not part of the report document
    scans: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        missing = set(self.residuals) - set(self.tolerances)
        if missing:
            raise ValueError(f"residuals without tolerances: {sorted(missing)}")

    @property
    def status(self) -> str:
        if not self.residuals:
            return "fail"
        for name, r in self.residuals.items():
            r = float(r)
            if not math.isfinite(r) or r > float(self.tolerances[name]):
                return "fail"
        return "pass"

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def failing(self) -> list[str]:
        return [
            k
            for k, r in self.residuals.items()
            if not math.isfinite(float(r)) or float(r) > float(self.tolerances[k])
        ]

    def to_dict(self) -> dict:
        return jsonable(
            {
                "check_id": self.check_id,
                "status": self.status,
                "params": self.params,
                "residuals": self.residuals,
                "tolerances": {k: self.tolerances[k] for k in self.residuals},
                "witnesses": self.witnesses,
                "seed": self.seed,
                "notes": self.notes,
                "covers": list(self.covers),
            }
        )

    def summary_line(self) -> str:
        worst = ""
        if self.residuals:
            k = max(self.residuals, key=lambda k: float(self.residuals[k]) / max(float(self.tolerances[k]), 1e-300))
            worst = f"{k}={float(self.residuals[k]):.3e} (tol {float(self.tolerances[k]):.1e})"
        return f"{self.status.upper():4s} {self.check_id} {worst}"

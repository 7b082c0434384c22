"""Calibration of the generic constant ``C`` against measured norms.

A family is a list of samples ``(chain, inputs, measured)``.  The calibrated
dial is the smallest ``C`` in ``[1, ceiling]`` (log-space bisection to a
relative resolution) for which every chain value dominates its measurement.
Failure at the ceiling is reported, not hidden: it means the estimate family
does not hold on the data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from paralab.bounds import BoundInputs, Envelopes, evaluate_chain


@dataclass(frozen=True)
class CalibrationSample:
    chain: str
    inputs: BoundInputs
    measured: float
    envelopes: Envelopes | None = None
    scale: float = 1.0

    def value(self, C: float) -> float:
        return self.scale * evaluate_chain(self.chain, self.inputs.with_dials(C=C), self.envelopes)


@dataclass
class CalibrationResult:
    family: str
    C: float
    compliant: bool
    ceiling: float
    margins: list[tuple[str, float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"family": self.family, "C": self.C, "compliant": self.compliant, "ceiling": self.ceiling}


def _all_ok(samples: Sequence[CalibrationSample], C: float) -> bool:
    return all(s.measured <= s.value(C) for s in samples)


def calibrate(family: str, samples: Sequence[CalibrationSample], ceiling: float = 1e6, resolution: float = 0.02) -> CalibrationResult:
    """Smallest compliant ``C`` to within ``resolution`` (relative)."""
    if not samples:
        raise ValueError(f"family {family!r} has no calibration samples")
    if _all_ok(samples, 1.0):
        C = 1.0
    elif not _all_ok(samples, ceiling):
        return CalibrationResult(family, math.inf, False, ceiling, _margins(samples, ceiling))
    else:
        lo, hi = 0.0, math.log(ceiling)
        while hi - lo > math.log1p(resolution):
            mid = 0.5 * (lo + hi)
            if _all_ok(samples, math.exp(mid)):
                hi = mid
            else:
                lo = mid
        C = math.exp(hi)
    return CalibrationResult(family, C, True, ceiling, _margins(samples, C))


def _margins(samples: Sequence[CalibrationSample], C: float) -> list[tuple[str, float, float]]:
    return [(s.chain, s.measured, s.value(C)) for s in samples]


def save_dials(path: str | Path, dials: dict[str, float]) -> Path:
    path = Path(path)
    path.write_text(json.dumps({k: dials[k] for k in sorted(dials)}, indent=2) + "\n")
    return path


def load_dials(path: str | Path) -> dict[str, float]:
    path = Path(path)
    if not path.exists():
        return {}
    return {k: float(v) for k, v in json.loads(path.read_text()).items()}

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from bgsched.errors import ParameterError

logger = logging.getLogger(__name__)


def _pair(
    actual: Sequence[float], predicted: Sequence[float]
) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actual, dtype=float)
    f = np.asarray(predicted, dtype=float)
    if a.shape != f.shape:
        raise ParameterError(f"length mismatch: {len(a)} actual vs {len(f)} predicted")
    if not len(a):
        raise ParameterError("need at least one value")
    return a, f


def smape(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """Symmetric mean absolute percentage error; 0/0 terms count as 0."""
    a, f = _pair(actual, predicted)
    denominator = (np.abs(a) + np.abs(f)) / 2.0
    terms = np.divide(
        np.abs(f - a), denominator, out=np.zeros_like(a), where=denominator > 0
    )
    return float(100.0 * terms.mean())


def mpe_and_cumulative(
    actual: Sequence[float], predicted: Sequence[float]
) -> Tuple[Optional[float], float]:
    """Mean percentage error over nonzero actuals, and the summed error.

    The MPE is None when every actual is zero.
    """
    a, f = _pair(actual, predicted)
    cumulative = float((a - f).sum())
    nonzero = a != 0
    if not nonzero.any():
        return None, cumulative
    mpe = float(100.0 * ((a[nonzero] - f[nonzero]) / a[nonzero]).mean())
    return mpe, cumulative


@dataclass(frozen=True)
class ForecastErrors:
    smape: float
    mpe: Optional[float]
    cumulative_error: float
    per_bin_error: np.ndarray
    zero_actual_bins: int = 0

    @property
    def mpe_defined(self) -> bool:
        return self.mpe is not None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "smape": self.smape,
            "mpe": self.mpe,
            "mpe_defined": self.mpe_defined,
            "cumulative_error": self.cumulative_error,
            "max_abs_bin_error": float(np.abs(self.per_bin_error).max()),
            "bins": len(self.per_bin_error),
            "zero_actual_bins": self.zero_actual_bins,
        }


def evaluate(actual: Sequence[float], predicted: Sequence[float]) -> ForecastErrors:
    a, f = _pair(actual, predicted)
    mpe, cumulative = mpe_and_cumulative(a, f)
    zero = int((a == 0).sum())
    if zero:
        logger.info("Excluded %d zero-actual bins from MPE", zero)
    return ForecastErrors(
        smape=smape(a, f),
        mpe=mpe,
        cumulative_error=cumulative,
        per_bin_error=a - f,
        zero_actual_bins=zero,
    )

"""Percentile bootstrap confidence intervals."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..numkit import Rng
from .metrics import PredictionSet

log = logging.getLogger(__name__)


@dataclass
class BootstrapResult:
    mean: float
    ci_low: float
    ci_high: float
    iters: int
    redraws: int

    def triple(self) -> tuple[float, float, float]:
        return self.mean, self.ci_low, self.ci_high


def resample_with_replacement(rng: Rng, n: int) -> np.ndarray:
    return rng.integers(n, size=n)


def bootstrap_ci(preds: PredictionSet, metric, iters: int = 10000, seed: int = 0,
                 level: float = 0.95, resampler=resample_with_replacement) -> BootstrapResult:
    """Mean and percentile interval of ``metric`` over slide resamples.

    Slides are put in slide-id order first, and iteration ``i`` draws from
    its own substream ``boot:{i}`` of ``seed``, so the result depends on
    neither input order nor evaluation order. A resample on which ``metric``
    is undefined (it raises ValidationError, e.g. a class is missing) is
    redrawn from the same substream; if redraws outnumber valid draws the
    metric is deemed undefined.
    """
    if iters < 1:
        raise ValidationError("iters must be >= 1")
    if not 0 < level < 1:
        raise ValidationError("level must lie in (0, 1)")
    preds = preds.canonical()
    n = len(preds)
    if n == 0:
        raise ValidationError("cannot bootstrap an empty prediction set")
    root = Rng(seed)
    values = np.empty(iters)
    redraws = 0
    for i in range(iters):
        rng = root.substream(f"boot:{i}")
        while True:
            try:
                values[i] = metric(preds.take(resampler(rng, n)))
                break
            except ValidationError:
                redraws += 1
                if redraws > iters:
                    raise ValidationError(
                        f"metric undefined in more than half of the bootstrap draws ({redraws} redraws)"
                    ) from None
    if redraws:
        log.info("bootstrap: %d undefined resamples redrawn", redraws)
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(values, [tail, 100.0 - tail])  # linear interpolation
    return BootstrapResult(float(values.mean()), float(low), float(high), iters, redraws)

"""Class-balanced slide sampling."""
from __future__ import annotations

from ..errors import ValidationError
from ..numkit import Rng
from ..slideio.manifest import CLASS_NAMES


class BalancedSampler:
    """Draw a class uniformly, then a slide of that class uniformly."""

    def __init__(self, records, rng: Rng, n_classes: int = len(CLASS_NAMES)):
        self.groups = [[r for r in records if r.label == c] for c in range(n_classes)]
        empty = [CLASS_NAMES[c] for c, g in enumerate(self.groups) if not g]
        if empty:
            raise ValidationError(f"no training slides for class(es): {', '.join(empty)}")
        self.rng = rng

    def next(self):
        group = self.groups[self.rng.integers(len(self.groups))]
        return group[self.rng.integers(len(group))]

    def __iter__(self):
        while True:
            yield self.next()

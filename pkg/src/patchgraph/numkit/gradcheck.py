"""Finite-difference verification of reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tape, Tensor, backward


@dataclass
class GradCheckResult:
    passed: bool
    max_rel_error: float
    worst: tuple | None  # (param index, flat component)
    checked: int

    def __bool__(self):
        return self.passed


def relative_error(analytic, numeric, floor=1e-8):
    """``|a - n| / max(|a|, |n|, floor)``; the floor guards exact zeros."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def roundoff_floor(value: float, h: float, tol: float) -> float:
    """Smallest gradient magnitude a central difference can resolve to ``tol``.

    Each evaluation of ``f`` carries round-off of about ``eps * |f|``, so the
    difference quotient is uncertain by ``2 * eps * |f| / (2h)``; below
    ``that / tol`` a relative comparison measures noise, not the gradient.
    """
    return max(1e-8, np.finfo(np.float64).eps * max(1.0, abs(value)) / (h * tol))


def grad_check(f, params, h=1e-5, tol=1e-4, components=None, rng=None, floor=None):
    """Compare backward() against central differences of ``f``.

    ``f`` takes no arguments and returns a scalar Tensor computed from
    ``params``. ``components`` limits the check to that many randomly chosen
    entries per parameter (drawn from ``rng``); None checks every entry.
    ``floor`` bounds the relative-error denominator from below and defaults
    to :func:`roundoff_floor` at ``f``'s value.
    """
    if not 0 < h <= 1e-2:
        raise ValueError("h must lie in (0, 1e-2]")
    params = list(params)
    with Tape() as tape:
        out = f()
    grads = backward(out, tape)
    if floor is None:
        floor = roundoff_floor(out.item(), h, tol)
    worst_err, worst, checked = 0.0, None, 0
    for pi, p in enumerate(params):
        analytic = grads[p].data.reshape(-1) if p in grads else np.zeros(p.size)
        flat = p.data.reshape(-1)
        idx = np.arange(p.size)
        if components is not None and components < p.size:
            idx = np.sort(rng.choice(p.size, components))
        for k in idx:
            orig = flat[k]
            flat[k] = orig + h
            up = f().item()
            flat[k] = orig - h
            down = f().item()
            flat[k] = orig
            numeric = (up - down) / (2 * h)
            if not (np.isfinite(up) and np.isfinite(down) and np.isfinite(analytic[k])):
                name = p.name or f"param[{pi}]"
                raise FloatingPointError(f"non-finite value at {name}[{k}]")
            err = float(relative_error(analytic[k], numeric, floor))
            checked += 1
            if err > worst_err or worst is None:
                worst_err, worst = err, (pi, int(k))
    return GradCheckResult(worst_err < tol, worst_err, worst, checked)

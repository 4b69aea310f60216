"""Iterative grid search: one or two hyperparameters per step, the rest frozen."""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..config import TUNED_FIELDS, ModelConfig
from ..errors import ConfigError

log = logging.getLogger(__name__)

ALIASES = {"lr": "learning_rate"}


@dataclass
class TuneStep:
    params: list
    grid: dict  # name -> candidate values

    def __post_init__(self):
        self.params = [ALIASES.get(p, p) for p in self.params]
        self.grid = {ALIASES.get(k, k): list(v) for k, v in self.grid.items()}
        if not 1 <= len(self.params) <= 2:
            raise ConfigError("a tuning step adjusts one or two hyperparameters")
        if len(set(self.params)) != len(self.params):
            raise ConfigError(f"duplicate hyperparameter in step {self.params}")
        for p in self.params:
            if p not in TUNED_FIELDS:
                raise ConfigError(f"{p!r} is not a tunable hyperparameter")
            if not self.grid.get(p):
                raise ConfigError(f"step has no candidate values for {p}")
        extra = set(self.grid) - set(self.params)
        if extra:
            raise ConfigError(f"grid lists values for parameters not in the step: {sorted(extra)}")

    def candidates(self) -> list[dict]:
        values = [self.grid[p] for p in self.params]
        return [dict(zip(self.params, combo)) for combo in itertools.product(*values)]


@dataclass
class TunePlan:
    initial: ModelConfig
    steps: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, doc: dict) -> "TunePlan":
        if not isinstance(doc, dict) or "steps" not in doc:
            raise ConfigError("plan must be an object with 'initial' and 'steps'")
        initial = ModelConfig.from_dict({ALIASES.get(k, k): v for k, v in doc.get("initial", {}).items()})
        steps = []
        for s in doc["steps"]:
            try:
                steps.append(TuneStep(list(s["params"]), dict(s["grid"])))
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"malformed plan step {s!r}") from exc
        return cls(initial, steps)

    @classmethod
    def load(cls, path) -> "TunePlan":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


@dataclass
class Trial:
    index: int
    step: int  # -1 for the initial configuration
    config: ModelConfig
    score: float
    cached: bool


@dataclass
class TuneResult:
    best: ModelConfig
    best_score: float
    trials: list
    unique: int
    exhausted: bool  # True when the budget ran out before the plan ended


def _key(config: ModelConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True)


def tune(plan: TunePlan, score_fn, budget: int = 100) -> TuneResult:
    """Run ``plan``, scoring configurations with ``score_fn(config) -> float``
    (lower is better, e.g. mean balanced validation cross-entropy).

    Repeated configurations are scored once and do not use budget. Within a
    step the minimum wins; ties go to the incumbent, then to the candidate
    with the smaller values.
    """
    if budget < 1:
        raise ConfigError("budget must be at least 1")
    cache: dict = {}
    trials: list = []
    exhausted = False

    def evaluate(cfg, step):
        nonlocal exhausted
        key = _key(cfg)
        if key in cache:
            trials.append(Trial(len(trials), step, cfg, cache[key], True))
            return cache[key]
        if len(cache) >= budget:
            exhausted = True
            return None
        score = float(score_fn(cfg))
        if math.isnan(score):
            score = math.inf
        cache[key] = score
        trials.append(Trial(len(trials), step, cfg, score, False))
        log.info("trial %d (step %d): %.6g", len(trials) - 1, step, score)
        return score

    incumbent = plan.initial
    best = evaluate(incumbent, -1)
    for s, step in enumerate(plan.steps):
        scored = []
        for values in step.candidates():
            cfg = incumbent.replace(**values)
            score = evaluate(cfg, s)
            if score is None:
                break
            scored.append((score, cfg, values))
        if scored:
            current = [getattr(incumbent, p) for p in step.params]
            score, cfg, _ = min(
                scored,
                key=lambda t: (t[0], [t[2][p] for p in step.params] != current,
                               [t[2][p] for p in step.params]),
            )
            if score < best or (score == best and _key(cfg) == _key(incumbent)):
                incumbent, best = cfg, score
        if exhausted:
            break
    return TuneResult(incumbent, best, trials, len(cache), exhausted)


def write_trials(path, result: TuneResult) -> None:
    rows = [
        {"trial": t.index, "step": t.step, "score": t.score, "cached": t.cached, "config": t.config.to_dict()}
        for t in result.trials
    ]
    Path(path).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")

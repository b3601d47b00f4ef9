"""Tri-state learning-rate schedule and the random hyperparameter search.

The schedule is piecewise linear: ramp from 0 to max_lr over the first 10%
of steps, hold for 50%, then decay linearly back to 0 over the final 40%.
Search configurations are sampled independently per (seed, index), so a
search can be resumed or parallelized without changing what gets drawn.
"""

import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

RAMP_FRAC = 0.10
PLATEAU_FRAC = 0.50
COOLDOWN_FRAC = 0.40

LR_RANGE = (1e-5, 1e-2)
FREEZE_RANGE = (0, 1000)
MAX_STEPS_RANGE = (20_000, 40_000)
DURATION_RANGE = (4.0, 18.0)
THAW_RANGE = (0, 23)


def batch_size_for_duration(duration_s: float) -> int:
    """Samples per update for a given crop duration: 4 * floor(75 / duration)."""
    return 4 * math.floor(75.0 / duration_s)


@dataclass(frozen=True)
class TriStateSchedule:
    max_lr: float
    total_steps: int

    def __post_init__(self):
        if self.max_lr <= 0:
            raise ConfigError(f"max_lr must be positive, got {self.max_lr}")
        if self.total_steps < 10:
            raise ConfigError(f"total_steps must be >= 10, got {self.total_steps}")


def lr_at(schedule: TriStateSchedule, step: float) -> float:
    """Learning rate at a step; breakpoints sit at 10% and 60% of total steps."""
    t = schedule.total_steps
    if not 0 <= step <= t:
        raise ConfigError(f"step {step} outside [0, {t}]")
    ramp_end = RAMP_FRAC * t
    plateau_end = (RAMP_FRAC + PLATEAU_FRAC) * t
    if step < ramp_end:
        return schedule.max_lr * step / ramp_end
    if step < plateau_end:
        return schedule.max_lr
    return schedule.max_lr * (t - step) / (COOLDOWN_FRAC * t)


@dataclass
class TrainConfig:
    """One sampled (or hand-built) finetuning configuration."""

    batch_size: int
    freeze_steps: int
    learning_rate: float
    lna: bool
    max_steps: int
    duration_s: float
    thaw_depth: int
    seed: int

    def __post_init__(self):
        if not FREEZE_RANGE[0] <= self.freeze_steps <= FREEZE_RANGE[1]:
            raise ConfigError(f"freeze_steps {self.freeze_steps} outside {FREEZE_RANGE}")
        if not LR_RANGE[0] <= self.learning_rate <= LR_RANGE[1]:
            raise ConfigError(f"learning_rate {self.learning_rate} outside {LR_RANGE}")
        if not MAX_STEPS_RANGE[0] <= self.max_steps <= MAX_STEPS_RANGE[1]:
            raise ConfigError(f"max_steps {self.max_steps} outside {MAX_STEPS_RANGE}")
        if not DURATION_RANGE[0] <= self.duration_s <= DURATION_RANGE[1]:
            raise ConfigError(f"duration_s {self.duration_s} outside {DURATION_RANGE}")
        if not THAW_RANGE[0] <= self.thaw_depth <= THAW_RANGE[1]:
            raise ConfigError(f"thaw_depth {self.thaw_depth} outside {THAW_RANGE}")
        expected = batch_size_for_duration(self.duration_s)
        if self.batch_size != expected:
            warnings.warn(
                f"batch_size {self.batch_size} overrides the duration formula value {expected}",
                stacklevel=2,
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def sample_config(seed: int, index: int) -> TrainConfig:
    """Draw configuration `index` of the search stream `seed`.

    Duration, freeze steps, max steps and thaw depth are uniform; the
    learning rate is log-uniform; LNA is a fair coin. Batch size follows
    the duration formula. Deterministic per (seed, index).
    """
    if seed < 0 or index < 0:
        raise ConfigError(f"seed and index must be nonnegative, got ({seed}, {index})")
    rng = np.random.default_rng([seed, index])
    duration = float(rng.uniform(*DURATION_RANGE))
    freeze = int(rng.integers(FREEZE_RANGE[0], FREEZE_RANGE[1] + 1))
    lr = float(np.exp(rng.uniform(np.log(LR_RANGE[0]), np.log(LR_RANGE[1]))))
    lna = bool(rng.integers(0, 2))
    max_steps = int(rng.integers(MAX_STEPS_RANGE[0], MAX_STEPS_RANGE[1] + 1))
    thaw = int(rng.integers(THAW_RANGE[0], THAW_RANGE[1] + 1))
    run_seed = int(rng.integers(0, 2**31 - 1))
    return TrainConfig(
        batch_size=batch_size_for_duration(duration),
        freeze_steps=freeze,
        learning_rate=lr,
        lna=lna,
        max_steps=max_steps,
        duration_s=duration,
        thaw_depth=thaw,
        seed=run_seed,
    )


@dataclass
class SearchEntry:
    index: int
    config: TrainConfig
    score: float
    status: str  # "ok" or "error"
    error: str | None = None

    def to_json(self) -> str:
        row = {
            "index": self.index,
            "config": self.config.to_dict(),
            "score": None if self.status == "error" else self.score,
            "status": self.status,
            "error": self.error,
        }
        return json.dumps(row, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "SearchEntry":
        row = json.loads(line)
        score = row["score"]
        return cls(
            index=row["index"],
            config=TrainConfig.from_dict(row["config"]),
            score=float("-inf") if score is None else float(score),
            status=row["status"],
            error=row.get("error"),
        )


def _read_journal(path: Path) -> dict[int, SearchEntry]:
    entries: dict[int, SearchEntry] = {}
    if path.exists():
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                entry = SearchEntry.from_json(line)
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: bad journal line ({exc})") from exc
            entries[entry.index] = entry
    return entries


def rank_entries(entries: dict[int, SearchEntry]) -> list[SearchEntry]:
    """Score-descending order, index-ascending on ties; failures sink to the bottom."""
    return sorted(entries.values(), key=lambda e: (-e.score, e.index))


def run_search(objective, budget: int, seed: int,
               journal_path=None, resume: bool = False) -> list[SearchEntry]:
    """Evaluate `budget` sampled configs and return them ranked by score.

    Objective crashes are recorded (score -inf) and the search continues.
    With a journal path the search is resumable: completed indices are
    skipped and new results appended.
    """
    if budget < 1:
        raise ConfigError(f"budget must be >= 1, got {budget}")

    entries: dict[int, SearchEntry] = {}
    journal = Path(journal_path) if journal_path is not None else None
    if journal is not None and resume:
        entries = _read_journal(journal)
    elif journal is not None and journal.exists():
        journal.unlink()

    handle = None
    if journal is not None:
        journal.parent.mkdir(parents=True, exist_ok=True)
        handle = open(journal, "a", encoding="utf-8")
    try:
        for index in range(budget):
            if index in entries:
                continue
            config = sample_config(seed, index)
            try:
                entry = SearchEntry(index, config, float(objective(config)), "ok")
            except Exception as exc:  # objective is untrusted; record and move on
                entry = SearchEntry(index, config, float("-inf"), "error", error=str(exc))
            entries[index] = entry
            if handle is not None:
                handle.write(entry.to_json() + "\n")
                handle.flush()
    finally:
        if handle is not None:
            handle.close()

    return rank_entries({i: e for i, e in entries.items() if i < budget})


def rank_journal(journal_path) -> list[SearchEntry]:
    """Re-rank a journal on disk; replaying yields the identical ranking."""
    return rank_entries(_read_journal(Path(journal_path)))

"""SSD admission and eviction policies.

``SsdState`` is an immutable, score-ordered resident set; ``decide`` and
``release`` return new states. Occupancy is tracked in whole bytes so that
capacity checks are exact.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from enum import Enum

from .econ import CostModel, Tier, crossover_density
from .predictor import Prediction
from .trace_model import BYTES_PER_TB, TempFileRecord, io_density


class PlacementError(ValueError):
    pass


class PolicyKind(str, Enum):
    ALL_HDD = "all-hdd"
    ALL_SSD = "all-ssd"
    ORACLE = "oracle"
    PREDICTED = "predicted"
    CAPACITY_SCORE = "capacity-score"

    @property
    def needs_predictions(self) -> bool:
        return self in (PolicyKind.PREDICTED, PolicyKind.CAPACITY_SCORE)

    @classmethod
    def parse(cls, name: str) -> "PolicyKind":
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(p.value for p in cls)
            raise PlacementError(f"unknown policy {name!r}; valid policies: {valid}") from None


@dataclass(frozen=True, order=True)
class Resident:
    # sort key: higher score first, then lower file_id
    sort_key: tuple[float, int] = field(init=False, repr=False)
    file_id: int = field(compare=False)
    size_bytes: int = field(compare=False)
    score: float = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sort_key", (-self.score, self.file_id))

    @property
    def size_tb(self) -> float:
        return self.size_bytes / BYTES_PER_TB

    @property
    def iops(self) -> float:
        return self.score * self.size_tb


@dataclass(frozen=True)
class SsdState:
    capacity_tb: float
    resident: tuple[Resident, ...] = ()
    used_bytes: int = field(init=False, default=0)

    def __post_init__(self):
        if not self.capacity_tb > 0:
            raise PlacementError(f"SSD capacity must be > 0 TB, got {self.capacity_tb}")
        object.__setattr__(self, "resident", tuple(self.resident))
        object.__setattr__(self, "used_bytes", sum(r.size_bytes for r in self.resident))

    @property
    def used_tb(self) -> float:
        return self.used_bytes / BYTES_PER_TB

    @property
    def capacity_bytes(self) -> float:
        return self.capacity_tb * BYTES_PER_TB

    def fits(self, size_bytes: int, freed: int = 0) -> bool:
        return self.used_bytes - freed + size_bytes <= self.capacity_bytes

    def resident_ids(self) -> set[int]:
        return {r.file_id for r in self.resident}

    def total_iops(self) -> float:
        return math.fsum(r.iops for r in self.resident)

    def check(self) -> None:
        assert self.used_bytes <= self.capacity_bytes, "over capacity"
        assert all(math.isfinite(r.score) and r.score >= 0 for r in self.resident)
        assert list(self.resident) == sorted(self.resident), "resident order broken"
        assert len(self.resident_ids()) == len(self.resident), "duplicate resident"

    def _with(self, add: Resident | None = None, drop: frozenset[int] = frozenset()) -> "SsdState":
        kept = [r for r in self.resident if r.file_id not in drop]
        if add is not None:
            bisect.insort(kept, add)
        return SsdState(self.capacity_tb, tuple(kept))


@dataclass(frozen=True)
class FileContext:
    file_id: int
    size_bytes: int


@dataclass(frozen=True)
class PlacementDecision:
    tier: Tier
    evictions: tuple[int, ...] = ()
    score: float = 0.0


def score(prediction: Prediction) -> float:
    """Expected IOPS per TB of space."""
    return prediction.predicted_avg_iops / (prediction.predicted_size_bytes / BYTES_PER_TB)


def release(state: SsdState, file_id: int) -> SsdState:
    if file_id not in state.resident_ids():
        return state
    return state._with(drop=frozenset({file_id}))


def _admit(state: SsdState, ctx: FileContext, s: float) -> tuple[PlacementDecision, SsdState]:
    return PlacementDecision(Tier.SSD, (), s), state._with(Resident(ctx.file_id, ctx.size_bytes, s))


def _capacity_score(state: SsdState, ctx: FileContext, s: float,
                    threshold: float) -> tuple[PlacementDecision, SsdState]:
    hdd = PlacementDecision(Tier.HDD, (), s)
    if not s > threshold:
        return hdd, state
    if state.fits(ctx.size_bytes):
        return _admit(state, ctx, s)

    victims: list[Resident] = []
    freed = 0
    # lowest score first; resident is sorted by descending score
    for r in reversed(state.resident):
        if not r.score < s:
            break
        victims.append(r)
        freed += r.size_bytes
        if state.fits(ctx.size_bytes, freed):
            break
    if not victims or not state.fits(ctx.size_bytes, freed):
        return hdd, state

    gained = s * ctx.size_bytes / BYTES_PER_TB
    lost = math.fsum(v.iops for v in victims)
    if not gained > lost:
        return hdd, state
    evicted = tuple(v.file_id for v in victims)
    new_state = state._with(Resident(ctx.file_id, ctx.size_bytes, s), frozenset(evicted))
    return PlacementDecision(Tier.SSD, evicted, s), new_state


def decide(policy: PolicyKind, file_ctx: FileContext, prediction: Prediction | None,
           truth: TempFileRecord | None, state: SsdState,
           model: CostModel) -> tuple[PlacementDecision, SsdState]:
    """Place a newly created file; returns the decision and the updated SSD state."""
    policy = PolicyKind(policy)
    threshold = crossover_density(model)

    if policy is PolicyKind.ALL_HDD:
        return PlacementDecision(Tier.HDD), state

    if policy is PolicyKind.ALL_SSD:
        if state.fits(file_ctx.size_bytes):
            return _admit(state, file_ctx, 0.0)
        return PlacementDecision(Tier.HDD), state

    if policy is PolicyKind.ORACLE:
        if truth is None:
            raise PlacementError("oracle policy needs the file's true I/O record")
        s = io_density(truth)
        if s > threshold and state.fits(file_ctx.size_bytes):
            return _admit(state, file_ctx, s)
        return PlacementDecision(Tier.HDD, (), s), state

    if prediction is None:
        raise PlacementError(f"policy {policy.value} needs a prediction")
    s = score(prediction)

    if policy is PolicyKind.PREDICTED:
        if s > threshold and state.fits(file_ctx.size_bytes):
            return _admit(state, file_ctx, s)
        return PlacementDecision(Tier.HDD, (), s), state

    return _capacity_score(state, file_ctx, s, threshold)

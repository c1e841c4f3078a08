"""Symbolic speed classes for stages and empirical phase-length estimates."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Sequence

from .errors import DomainError
from .linear import find_member
from .model import Protocol

if TYPE_CHECKING:
    from .stages import Certificate, Stage

DEFAULT_STEP_CAP = 10**7


class SpeedClass(Enum):
    """Expected-interaction bounds provable by the certificate-shape rules."""

    QUAD_LOG = "O(n^2 log n)"
    EXP_N_LOG_N = "2^(O(n log n))"
    UNKNOWN = "unknown"


def classify(
    protocol: Protocol, stage: "Stage", certificate: "Certificate", dead: Sequence[str]
) -> SpeedClass:
    """Speed class from the certificate's response to the live transitions.

    A live transition that increases the certificate forces the exponential
    class; if none increases it and at least one strictly decreases it, the
    stage drains in O(n² log n) expected interactions.
    """
    if stage.terminal:
        raise DomainError("terminal_stage", f"stage {stage.id} is terminal and has no speed")
    dead_set = set(dead)
    deltas = [
        certificate.delta(t) for t in protocol.transitions if t.name not in dead_set
    ]
    if any(d > 0 for d in deltas):
        return SpeedClass.EXP_N_LOG_N
    if any(d < 0 for d in deltas) and all(d <= 0 for d in deltas):
        return SpeedClass.QUAD_LOG
    return SpeedClass.UNKNOWN


@dataclass(frozen=True)
class SpeedEstimate:
    """Monte-Carlo phase lengths: for each population size, the mean number of
    sampled interactions (Null steps included) from the stage's witness until
    a child stage is entered."""

    sizes: tuple[int, ...]
    mean_interactions: tuple[float, ...]
    trials: int
    censored: tuple[int, ...]
    skipped_sizes: tuple[int, ...]
    slope: float | None

    def rows(self) -> list[tuple[int, float, int, int]]:
        return [
            (n, mean, self.trials, cens)
            for n, mean, cens in zip(self.sizes, self.mean_interactions, self.censored)
        ]


def estimate(
    protocol: Protocol,
    stage: "Stage",
    children: Sequence["Stage"],
    sizes: Sequence[int],
    trials: int,
    rng: random.Random,
    step_cap: int = DEFAULT_STEP_CAP,
) -> SpeedEstimate:
    """Empirical expected interactions to leave the stage for a child.

    Starts each trial at the smallest member of the stage outside all children
    with exactly n agents; sizes with no such member are skipped and flagged.
    Trials hitting the step cap are censored (counted at the cap), so reported
    means are lower bounds when censoring occurred.
    """
    if trials < 1:
        raise DomainError("bad_trials", "trials must be >= 1")
    child_sets = [c.constraint for c in children]
    kept_sizes: list[int] = []
    means: list[float] = []
    censored_counts: list[int] = []
    skipped: list[int] = []
    for n in sizes:
        start = find_member(stage.constraint, n, exclude=child_sets, exact_size=n)
        if start is None:
            skipped.append(n)
            continue
        total = 0
        censored = 0
        for _ in range(trials):
            config = start
            steps = 0
            while steps < step_cap:
                if any(cs.satisfies(config) for cs in child_sets):
                    break
                interaction = protocol.sample_interaction(config, rng)
                if interaction.transition is not None:
                    config = protocol.apply(config, interaction.transition)
                steps += 1
            else:
                censored += 1
            total += steps
        kept_sizes.append(n)
        means.append(total / trials)
        censored_counts.append(censored)
    slope = _loglog_slope(kept_sizes, means)
    return SpeedEstimate(
        tuple(kept_sizes), tuple(means), trials, tuple(censored_counts), tuple(skipped), slope
    )


def _loglog_slope(sizes: Sequence[int], means: Sequence[float]) -> float | None:
    """Least-squares slope of log(mean) against log(n); None when fewer than
    two usable points (zero means carry no log information)."""
    points = [(math.log(n), math.log(m)) for n, m in zip(sizes, means) if m > 0]
    if len(points) < 2:
        return None
    mean_x = sum(x for x, _ in points) / len(points)
    mean_y = sum(y for _, y in points) / len(points)
    sxx = sum((x - mean_x) ** 2 for x, _ in points)
    if sxx == 0:
        return None
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in points)
    return sxy / sxx

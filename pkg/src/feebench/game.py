"""Network-effect participation game: demand map, equilibrium solver, price design.

Each agent i has a standalone value theta_i and pays price p to participate.
Participation payoff is theta_i + beta * N - p where N is the expected TOTAL
number of participants (including the agent itself).  A fulfilled-expectation
equilibrium (FEE) is a count n such that when everyone expects n, exactly n
agents find participation worthwhile: demand(n) == n, a fixed point of the
demand map.  Under multiplicity the benchmark selects the maximal fixed point
(it Pareto-dominates under positive network effects).
"""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass


class Action(enum.Enum):
    ATTEND = "attend"
    NOT_ATTEND = "not_attend"


class TrajectoryKind(enum.Enum):
    STATIC = "static"
    INCREASING = "increasing"
    DECREASING = "decreasing"
    CONVERGING = "converging"
    DIVERGING = "diverging"


class NoEquilibriumError(Exception):
    """Raised when the fixed-point scan finds no self-fulfilling count.

    Impossible for 0 <= beta < 1 on sorted finite type grids; reachable only
    for beta >= 1 pathologies, which the solver still accepts as input.
    """


@dataclass(frozen=True)
class GameSpec:
    """Immutable game definition: sorted standalone values, network strength."""

    types: tuple[float, ...]
    beta: float

    def __post_init__(self):
        if len(self.types) < 1:
            raise ValueError("population must have at least one agent")
        if any(b < a for a, b in zip(self.types, self.types[1:])):
            raise ValueError("types must be sorted non-decreasing")
        object.__setattr__(self, "types", tuple(float(t) for t in self.types))

    @property
    def population(self) -> int:
        return len(self.types)

    @classmethod
    def integer_grid(cls, population: int, beta: float) -> "GameSpec":
        """The canonical instance: types 0, 1, ..., population-1."""
        return cls(types=tuple(float(i) for i in range(population)), beta=beta)


@dataclass(frozen=True)
class EquilibriumSolution:
    price: float
    fixed_points: tuple[int, ...]
    selected: int

    def __post_init__(self):
        if self.selected != max(self.fixed_points):
            raise ValueError("selected must be the maximal fixed point")


@dataclass(frozen=True)
class PriceSequence:
    kind: TrajectoryKind
    prices: tuple[float, ...]
    target_counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.prices) != len(self.target_counts):
            raise ValueError("prices and target_counts must have equal length")
        if len(self.prices) == 0:
            raise ValueError("empty price sequence")


def utility(theta: float, beta: float, expected_total: int, price: float) -> float:
    """Participation payoff given an expectation of total participation."""
    return theta + beta * expected_total - price


def best_response(theta: float, beta: float, expected_total: int, price: float) -> Action:
    """Attend iff payoff is non-negative (ties attend)."""
    if utility(theta, beta, expected_total, price) >= 0:
        return Action.ATTEND
    return Action.NOT_ATTEND


def demand(spec: GameSpec, price: float, expected_total: int) -> int:
    """Number of agents whose payoff is non-negative at this expectation.

    Ties (zero payoff) attend, so the count is the suffix of the sorted types
    at or above the cutoff price - beta * expected_total.
    """
    if not 0 <= expected_total <= spec.population:
        raise ValueError(f"expected_total must be in [0, {spec.population}]")
    cutoff = price - spec.beta * expected_total
    return spec.population - bisect.bisect_left(spec.types, cutoff)


def solve_fee(spec: GameSpec, price: float) -> EquilibriumSolution:
    """All fixed points of the demand map at this price, by exhaustive scan."""
    fixed = tuple(
        n for n in range(spec.population + 1) if demand(spec, price, n) == n
    )
    if not fixed:
        raise NoEquilibriumError(
            f"no fixed point at price {price} (beta={spec.beta})"
        )
    return EquilibriumSolution(price=price, fixed_points=fixed, selected=fixed[-1])


def equilibrium_price_interval(spec: GameSpec, target_n: int) -> tuple[float, float]:
    """Half-open price interval (lower, upper] where demand(p, target_n) == target_n.

    Requires strictly sorted types.  The one-sided boundary cases (target 0
    and target K) are capped at width 1 so designed prices stay symmetric.
    """
    k = spec.population
    if not 0 <= target_n <= k:
        raise ValueError(f"target_n must be in [0, {k}]")
    if any(b <= a for a, b in zip(spec.types, spec.types[1:])):
        raise ValueError("price intervals require strictly sorted types")
    if target_n == 0:
        lower = spec.types[-1]
        return lower, lower + 1.0
    upper = spec.types[k - target_n] + spec.beta * target_n
    if target_n == k:
        return upper - 1.0, upper
    lower = spec.types[k - target_n - 1] + spec.beta * target_n
    return lower, upper


def make_price(spec: GameSpec, target_n: int, offset: float = 0.01) -> float:
    """A price just below the interval top, so the FEE benchmark is target_n.

    offset must stay in (0, 1 - beta): above 1 - beta the price drops into the
    overlap region where target_n + 1 is also a fixed point and would be
    selected instead.
    """
    if not 0 < offset < 1 - spec.beta:
        raise ValueError(f"offset must be in (0, {1 - spec.beta})")
    _, upper = equilibrium_price_interval(spec, target_n)
    return round(upper - offset, 10)


DESIGNED_COUNTS = (0, 10, 20, 30, 40, 50)


def _order_counts(kind: TrajectoryKind, counts: list[int], k: int) -> list[int]:
    mid = k / 2
    if kind in (TrajectoryKind.INCREASING, TrajectoryKind.STATIC):
        return sorted(counts)
    if kind is TrajectoryKind.DECREASING:
        return sorted(counts, reverse=True)
    # converging: farthest from the population midpoint first, low count
    # breaking ties; diverging is the exact reverse
    converging = sorted(counts, key=lambda n: (-abs(n - mid), n))
    if kind is TrajectoryKind.CONVERGING:
        return converging
    return converging[::-1]


def build_trajectory(
    spec: GameSpec,
    kind: TrajectoryKind,
    target_counts: tuple[int, ...] = DESIGNED_COUNTS,
    offset: float = 0.01,
) -> PriceSequence:
    """Order the designed equilibrium prices according to the trajectory kind."""
    counts = _order_counts(kind, list(target_counts), spec.population)
    prices = tuple(make_price(spec, n, offset) for n in counts)
    seq = PriceSequence(kind=kind, prices=prices, target_counts=tuple(counts))
    _validate_sequence(seq, spec.population)
    return seq


def _validate_sequence(seq: PriceSequence, k: int) -> None:
    c = seq.target_counts
    if seq.kind is TrajectoryKind.INCREASING:
        if any(b <= a for a, b in zip(c, c[1:])):
            raise ValueError("increasing trajectory needs strictly increasing counts")
    elif seq.kind is TrajectoryKind.DECREASING:
        if any(b >= a for a, b in zip(c, c[1:])):
            raise ValueError("decreasing trajectory needs strictly decreasing counts")
    elif seq.kind is TrajectoryKind.CONVERGING:
        d = [abs(n - k / 2) for n in c]
        if any(b > a for a, b in zip(d, d[1:])):
            raise ValueError("converging trajectory must approach the midpoint")
    elif seq.kind is TrajectoryKind.DIVERGING:
        d = [abs(n - k / 2) for n in c]
        if any(b < a for a, b in zip(d, d[1:])):
            raise ValueError("diverging trajectory must move away from the midpoint")

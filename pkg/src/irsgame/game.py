r"""Coalition partitions, preference orders, switch operations, stability.

The played partition space is binary: c1 = 1 means {{L,R}, {E}} and c1 = 0
means {{L}, {E,R}}. Preferences are *hedonic*: a player's utility is keyed
by its own coalition, so a PreferenceContext is a lookup table from
(player, coalition) to utility.

Preference order (strict, with the welcome clause):
    S_a >_i S_b  iff  U^i(S_a) > U^i(S_b)
                 and  U^k(S_a) > U^k(S_a \ {i}) for every other member k.

Switch operation (i leaves S_a for S_b, S_b may be empty):
    admissible iff S_b + {i} >_i S_a  and  S_b + {i} >_k S_b for all k in S_b,
with the additional structural requirement S_b + {i} in Delta.

Executable moves are those whose resulting partition keeps every coalition
inside Delta; with Delta as printed that leaves exactly the IRS side flips,
while L's and E's accept/refuse agency lives in the welcome clauses. The
stability check enumerates the same deviation set, so a fixed point of the
switch dynamics is stable by construction; tests cross-check this against an
independent brute-force enumeration.
"""

from dataclasses import dataclass, field

from .econ import (
    COALITION_E_ALONE,
    COALITION_EV_R,
    COALITION_L_ALONE,
    COALITION_LP,
    COALITION_R_ALONE,
    DELTA,
    EV,
    LP,
    PLAYERS,
    TIRS,
)

DEFAULT_ORDER = (TIRS, LP, EV)


class MissingUtilityError(KeyError):
    pass


class MalformedMoveError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class CoalitionPartition:
    """Binary coalition structure over {L, E, R}."""

    c1: int

    def __post_init__(self):
        if self.c1 not in (0, 1):
            raise ValueError("c1 must be 0 or 1")

    @property
    def c2(self) -> int:
        return 1 - self.c1

    def coalitions(self) -> tuple:
        if self.c1:
            return (COALITION_LP, COALITION_E_ALONE)
        return (COALITION_L_ALONE, COALITION_EV_R)

    def coalition_of(self, player: str) -> frozenset:
        for s in self.coalitions():
            if player in s:
                return s
        raise ValueError(f"unknown player {player!r}")

    def flipped(self) -> "CoalitionPartition":
        return CoalitionPartition(1 - self.c1)


PARTITION_LP_SIDE = CoalitionPartition(1)
PARTITION_EV_SIDE = CoalitionPartition(0)


@dataclass
class PreferenceContext:
    """Utility lookup keyed by (player, that player's coalition)."""

    table: dict = field(default_factory=dict)

    def set(self, player: str, s: frozenset, utility: float):
        self.table[(player, s)] = float(utility)

    def utility(self, player: str, s: frozenset) -> float:
        try:
            return self.table[(player, s)]
        except KeyError:
            raise MissingUtilityError(f"no utility recorded for {player!r} in {set(s)!r}")

    @classmethod
    def from_partition_utilities(cls, lp_side: dict, ev_side: dict,
                                 u_r_alone: float = 0.0) -> "PreferenceContext":
        """Build the 7-entry table from the two candidate-partition evaluations.

        ``lp_side`` and ``ev_side`` map player -> utility under c1=1 and c1=0
        respectively. Hedonic keying: e.g. L alone is only realized on the
        ev-side partition, so U^L({L}) comes from ``ev_side``.
        """
        ctx = cls()
        ctx.set(LP, COALITION_LP, lp_side[LP])
        ctx.set(TIRS, COALITION_LP, lp_side[TIRS])
        ctx.set(EV, COALITION_E_ALONE, lp_side[EV])
        ctx.set(LP, COALITION_L_ALONE, ev_side[LP])
        ctx.set(TIRS, COALITION_EV_R, ev_side[TIRS])
        ctx.set(EV, COALITION_EV_R, ev_side[EV])
        ctx.set(TIRS, COALITION_R_ALONE, u_r_alone)
        return ctx


def prefers(i: str, s_a: frozenset, s_b: frozenset, ctx: PreferenceContext) -> bool:
    """Strict preference of ``i`` for S_a over S_b, including the welcome clause."""
    if i not in s_a:
        raise MalformedMoveError(f"{i!r} must be a member of S_a")
    if not ctx.utility(i, s_a) > ctx.utility(i, s_b):
        return False
    for k in s_a - {i}:
        if not ctx.utility(k, s_a) > ctx.utility(k, s_a - {i}):
            return False
    return True


def switch_admissible(i: str, s_a: frozenset, s_b: frozenset, ctx: PreferenceContext) -> bool:
    """Whether ``i`` may leave S_a and join S_b (possibly empty)."""
    if i not in s_a:
        raise MalformedMoveError(f"{i!r} is not in its claimed current coalition")
    if i in s_b:
        raise MalformedMoveError(f"{i!r} is already in the target coalition")
    target = s_b | {i}
    if target not in DELTA:
        raise MalformedMoveError(f"{set(target)!r} is not an admissible coalition")
    if not prefers(i, target, s_a, ctx):
        return False
    return all(prefers(k, target, s_b, ctx) for k in s_b)


def executable_moves(partition: CoalitionPartition, player: str):
    """Moves of ``player`` whose outcome is again a valid binary partition.

    Yields (current, target_without_player, resulting_partition). Targets are
    the other coalition of the partition or the empty set; moves that would
    strand a non-Delta coalition (e.g. a bare {R}) are filtered out.
    """
    s_a = partition.coalition_of(player)
    others = [s for s in partition.coalitions() if player not in s]
    for s_b in others + [frozenset()]:
        target = s_b | {player}
        if target == s_a or target not in DELTA:
            continue
        remainder = s_a - {player}
        leftovers = [c for c in (remainder, *(s for s in others if s != s_b)) if c]
        new_parts = [target] + leftovers
        if any(c not in DELTA for c in new_parts):
            continue
        covered = frozenset().union(*new_parts)
        if covered != frozenset(PLAYERS) or sum(len(c) for c in new_parts) != len(PLAYERS):
            continue
        c1 = 1 if COALITION_LP in new_parts else 0
        yield s_a, s_b, CoalitionPartition(c1)


def find_admissible_move(partition: CoalitionPartition, ctx: PreferenceContext,
                         order=DEFAULT_ORDER):
    """First admissible executable move in player order, or None."""
    for player in order:
        for s_a, s_b, result in executable_moves(partition, player):
            if switch_admissible(player, s_a, s_b, ctx):
                return player, s_a, s_b, result
    return None


@dataclass(frozen=True)
class SwitchResult:
    partition: CoalitionPartition
    switches: int
    sweeps: int


def run_switch_dynamics(ctx: PreferenceContext, start: CoalitionPartition,
                        order=DEFAULT_ORDER, max_iters: int = 8) -> SwitchResult:
    """Apply admissible switch operations until none remains.

    With two candidate partitions and strict-improvement switches this
    terminates after at most one effective switch; exceeding ``max_iters``
    sweeps is treated as a hard failure.
    """
    partition = start
    switches = 0
    for sweep in range(1, max_iters + 1):
        move = find_admissible_move(partition, ctx, order)
        if move is None:
            return SwitchResult(partition, switches, sweep)
        partition = move[3]
        switches += 1
    raise NonConvergenceError(f"switch dynamics did not settle within {max_iters} sweeps")


def is_stable(partition: CoalitionPartition, ctx: PreferenceContext) -> bool:
    """Def.-4 individual stability: no player gains via an admissible move.

    A move blocked by the welcome clause cannot be executed unilaterally, so
    the deviator's payoff stays at the status quo; stability is therefore the
    absence of any admissible executable move (weak inequality holds at ties
    because admissibility requires strict improvement).
    """
    return find_admissible_move(partition, ctx) is None


def deviation_payoffs(partition: CoalitionPartition, ctx: PreferenceContext) -> dict:
    """Best single-deviation payoff per player from ``partition``.

    Refused or non-executable moves fall back to the status-quo utility.
    """
    payoffs = {}
    for player in PLAYERS:
        current = ctx.utility(player, partition.coalition_of(player))
        best = current
        for s_a, s_b, result in executable_moves(partition, player):
            if switch_admissible(player, s_a, s_b, ctx):
                best = max(best, ctx.utility(player, result.coalition_of(player)))
        payoffs[player] = best
    return payoffs


@dataclass(frozen=True)
class NeReport:
    """Time-averaged unilateral deviation gains per player."""

    gains: dict
    tolerance: float

    @property
    def max_gain(self) -> float:
        return max(self.gains.values())

    @property
    def consistent(self) -> bool:
        return all(g <= self.tolerance for g in self.gains.values())


def check_ne_trace(trace, tolerance: float = 1e-9) -> NeReport:
    """Average per-slot deviation gains over a recorded run.

    ``trace`` is an iterable of per-slot dicts mapping player ->
    (achieved_utility, best_deviation_utility).
    """
    totals = {p: 0.0 for p in PLAYERS}
    slots = 0
    for row in trace:
        slots += 1
        for p in PLAYERS:
            achieved, best_dev = row[p]
            totals[p] += best_dev - achieved
    if slots == 0:
        raise ValueError("trace must contain at least one slot")
    gains = {p: totals[p] / slots for p in PLAYERS}
    return NeReport(gains=gains, tolerance=tolerance)

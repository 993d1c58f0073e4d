r"""Utilities, coalition values, Shapley payments.

Players are "L" (the legitimate transmitter-receiver side as one player),
"E" (the proactive eavesdropper) and "R" (the third-party IRSs acting as
one player). Admissible coalitions are {L}, {E}, {L,R}, {E,R}; the
singleton {R} additionally carries a coalition value so the Shapley/payment
formulas are well defined.

Coalition value:
    v(S) =  sum_i R^sec_i - rho * sum_{j in S} E^j   if L in S
         = -sum_i R^sec_i - rho * sum_{j in S} E^j   if E in S
         = -rho * E^R                                 if S == {R}
         = 0                                          if S empty

Payment to the IRS side when allied with party i (closed form of the
two-player Shapley value):
    mu_i = (v({i,R}) + v({R}) - v({i})) / 2,
clamped into [0, sum_i R^sec_i]; the raw value is kept for analysis.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

LP, EV, TIRS = "L", "E", "R"
PLAYERS = (LP, EV, TIRS)

COALITION_LP = frozenset({LP, TIRS})
COALITION_EV_R = frozenset({EV, TIRS})
COALITION_L_ALONE = frozenset({LP})
COALITION_E_ALONE = frozenset({EV})
COALITION_R_ALONE = frozenset({TIRS})
EMPTY = frozenset()

# The paper game's coalition set; {R} is a valid value-bearing coalition but
# never part of a played partition.
DELTA = frozenset({COALITION_L_ALONE, COALITION_E_ALONE, COALITION_LP, COALITION_EV_R})
VALUED_COALITIONS = DELTA | {COALITION_R_ALONE, EMPTY}


class InvalidCoalitionError(ValueError):
    pass


def coalition(*members) -> frozenset:
    s = frozenset(members)
    if not s <= set(PLAYERS):
        raise InvalidCoalitionError(f"unknown players in {s!r}")
    if LP in s and EV in s:
        raise InvalidCoalitionError("a coalition may never contain both L and E")
    return s


@dataclass(frozen=True)
class EconState:
    """Coalition indicators and the switch-punishment bookkeeping for one slot."""

    c1: int
    c2: int
    prev_c1: int
    prev_u_r: float = 0.0
    c_conf: float = 0.1
    eta: float = 2.0

    def __post_init__(self):
        if self.c1 not in (0, 1) or self.c2 not in (0, 1) or self.prev_c1 not in (0, 1):
            raise ValueError("coalition indicators must be 0 or 1")
        if self.c1 + self.c2 != 1:
            raise ValueError("exactly one of c1, c2 must be 1")
        if self.c_conf < 0.0 or self.eta < 0.0:
            raise ValueError("c_conf and eta must be >= 0")

    @property
    def switched(self) -> int:
        """F(t) = c1(t) XOR c1(t-1)."""
        return self.c1 ^ self.prev_c1


def coalition_value(s: frozenset, rates, energies: dict, rho: float) -> float:
    """Value of coalition ``s`` given a RateReport and per-member energies (W)."""
    if s not in VALUED_COALITIONS:
        raise InvalidCoalitionError(f"{set(s) or '{}'} is not a valued coalition")
    if not s:
        return 0.0
    energy_cost = rho * sum(energies[m] for m in s)
    if LP in s:
        return rates.sum_secrecy - energy_cost
    if EV in s:
        return -rates.sum_secrecy - energy_cost
    return -energy_cost  # singleton {R}


def shapley(i: str, s: frozenset, values) -> float:
    r"""Exact Shapley value of player ``i`` in coalition ``s``.

    ``values`` maps a frozenset coalition to its value (callable or mapping).
    Sums |t|!(|s|-|t|-1)!/|s|! * (v(t+i) - v(t)) over all t subseteq s\{i}.
    """
    if i not in s:
        raise ValueError(f"player {i!r} not in coalition {set(s)!r}")
    lookup = values if callable(values) else values.__getitem__
    others = sorted(s - {i})
    n = len(s)
    total = 0.0
    for size in range(len(others) + 1):
        for subset in itertools.combinations(others, size):
            t = frozenset(subset)
            weight = math.factorial(size) * math.factorial(n - size - 1) / math.factorial(n)
            total += weight * (lookup(t | {i}) - lookup(t))
    return total


@dataclass(frozen=True)
class Payment:
    """Clamped payment plus the raw (unclamped) Shapley value."""

    mu: float
    raw: float


def payment_mu(i: str, value_pair: float, value_r_alone: float, value_i_alone: float,
               sum_secrecy: float) -> Payment:
    """Payment to the IRS side for assisting party ``i`` (L or E).

    Closed form (v({i,R}) + v({R}) - v({i})) / 2, then clamped into
    [0, sum_secrecy] to honour the payment bounds.
    """
    if i not in (LP, EV):
        raise ValueError("payments are defined for L or E only")
    raw = (value_pair + value_r_alone - value_i_alone) / 2.0
    return Payment(mu=float(np.clip(raw, 0.0, sum_secrecy)), raw=raw)


def utility_lp(rates, energy_l: float, energy_r: float, econ: EconState,
               rho: float, mu_l: float) -> float:
    """U^L = sum R^sec - c1*mu_L - rho*(E^L + c1*E^R)."""
    return rates.sum_secrecy - econ.c1 * mu_l - rho * (energy_l + econ.c1 * energy_r)


def utility_ev(rates, energy_e: float, energy_r: float, econ: EconState,
               rho: float, mu_e: float) -> float:
    """U^E = -sum R^sec - c2*mu_E - rho*(E^E + c2*E^R)."""
    return -rates.sum_secrecy - econ.c2 * mu_e - rho * (energy_e + econ.c2 * energy_r)


def utility_tirs(econ: EconState, mu_l: float, mu_e: float) -> float:
    """U^R = c1*mu_L + c2*mu_E - C_conf * F(t) * U^R(t-1).

    Implemented literally: a switch after a negative previous utility adds a
    bonus rather than a punishment.
    """
    return econ.c1 * mu_l + econ.c2 * mu_e - econ.c_conf * econ.switched * econ.prev_u_r


@dataclass(frozen=True)
class UtilityReport:
    """Per-slot individual utilities, payments and coalition values."""

    u_l: float
    u_e: float
    u_r: float
    mu_l: Optional[Payment]
    mu_e: Optional[Payment]
    value_lp_side: float      # v({L,R}) if c1 else v({L})
    value_ev_side: float      # v({E}) if c1 else v({E,R})
    secrecy: tuple
    sum_secrecy: float

    def __post_init__(self):
        for pay in (self.mu_l, self.mu_e):
            if pay is not None and not 0.0 <= pay.mu <= self.sum_secrecy + 1e-12:
                raise ValueError("clamped payment escaped [0, sum R^sec]")

"""Closed-form information measures, optimal observation thresholds, regimes.

The threshold p* is the sharp observation probability above which exact matrix
recovery is possible.  It is a max of three rates: a coupon-collecting term for
the rating vectors, a grouping term discounted by the graph's group-separation
power, and a clustering term discounted by its cluster-separation power.
Natural logarithms throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .gen import GraphParams, ObservationParams
from .model import DegenerateModelError, DeltaPair, ValidationError

__all__ = [
    "InfoMeasures",
    "RegimeKind",
    "Regime",
    "PStar",
    "info_measures",
    "prefactor",
    "coupon_coefficient",
    "p_star_general",
    "p_star_232",
    "classify_regime",
    "regime_map",
    "RegimeCell",
]


@dataclass(frozen=True)
class InfoMeasures:
    """Hellinger-style separation rates of the side information.

    i_g = (sqrt(alpha)-sqrt(beta))^2 separates groups within a cluster;
    i_c1 = (sqrt(alpha)-sqrt(gamma))^2 and i_c2 = (sqrt(beta)-sqrt(gamma))^2
    separate clusters; i_r = p*(sqrt(1-theta)-sqrt(theta))^2 is the per-entry
    rating-channel rate.
    """

    i_g: float
    i_c1: float
    i_c2: float
    i_r: float = 0.0

    def __post_init__(self):
        if min(self.i_g, self.i_c1, self.i_c2, self.i_r) < 0:
            raise ValidationError("information measures must be nonnegative")


class RegimeKind(Enum):
    PERFECT = "perfect-clustering-grouping"
    GROUPING_LIMITED = "grouping-limited"
    CLUSTERING_LIMITED = "clustering-limited"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    active_term: int  # 1..3, ties broken toward the lower index
    is_tie: bool


@dataclass(frozen=True)
class PStar:
    """Threshold evaluation: raw max-formula value plus the reporting clamp."""

    value: float          # clamped to [0, 1]
    raw: float            # literal formula value (may be negative or exceed 1)
    terms: tuple[float, float, float]
    active_term: int
    is_tie: bool
    out_of_range: bool    # raw exceeded 1, so no p in [0, 1] meets the bound
    prefactor: float


def info_measures(params: GraphParams, obs: ObservationParams) -> InfoMeasures:
    sa, sb, sg = math.sqrt(params.alpha), math.sqrt(params.beta), math.sqrt(params.gamma)
    return InfoMeasures(
        i_g=(sa - sb) ** 2,
        i_c1=(sa - sg) ** 2,
        i_c2=(sb - sg) ** 2,
        i_r=obs.p * (math.sqrt(1.0 - obs.theta) - math.sqrt(obs.theta)) ** 2,
    )


def prefactor(theta: float, q: int = 2) -> float:
    """1 / (sqrt(1-theta) - sqrt(theta/(q-1)))^2; equals 1 at theta = 0."""
    if not (0.0 <= theta < (q - 1) / q):
        raise ValidationError(f"theta={theta} outside [0, (q-1)/q) for q={q}")
    return 1.0 / (math.sqrt(1.0 - theta) - math.sqrt(theta / (q - 1))) ** 2


def coupon_coefficient(c: int, g: int, r: int) -> float:
    """Multiplier of log(m)/n in the first threshold term: g*c/(g-r+1)."""
    return g * c / (g - r + 1)


def _finalize(raw_terms: tuple[float, float, float], pref: float) -> PStar:
    raw = pref * max(raw_terms)
    # argmax with ties to the lower index, on the raw (pre-prefactor) terms
    best = max(raw_terms)
    active = next(i for i, t in enumerate(raw_terms) if t == best) + 1
    is_tie = sum(1 for t in raw_terms if t == best) > 1
    value = min(max(raw, 0.0), 1.0)
    return PStar(value=value, raw=raw, terms=raw_terms, active_term=active,
                 is_tie=is_tie, out_of_range=raw > 1.0, prefactor=pref)


def _check_common(n: int, m: int, deltas: DeltaPair) -> None:
    if n < 1 or m < 1:
        raise ValidationError("need n, m >= 1")
    if deltas.delta_g <= 0 or deltas.delta_c <= 0:
        raise DegenerateModelError("thresholds require delta_g > 0 and delta_c > 0")


def p_star_general(c: int, g: int, r: int, q: int, n: int, m: int, theta: float,
                   info: InfoMeasures, deltas: DeltaPair) -> PStar:
    """Optimal observation probability for general (c, g, r, q).

    Negative bracket terms participate in the max as-is; the final value is
    clamped to [0, 1] with `out_of_range` flagging a raw value outside it.
    """
    if not (1 <= r <= g):
        raise ValidationError("need 1 <= r <= g")
    _check_common(n, m, deltas)
    pref = prefactor(theta, q)
    t1 = (g * c / (g - r + 1)) * math.log(m) / n
    t2 = (math.log(n) - (n / (g * c)) * info.i_g) / (deltas.delta_g * m)
    t3 = (math.log(n) - (n / (g * c)) * info.i_c1
          - ((g - 1) * n / (g * c)) * info.i_c2) / (deltas.delta_c * m)
    return _finalize((t1, t2, t3), pref)


def p_star_232(n: int, m: int, theta: float, info: InfoMeasures,
               deltas: DeltaPair) -> PStar:
    """Threshold specialized to (c, g, r, q) = (2, 3, 2, 2)."""
    _check_common(n, m, deltas)
    pref = prefactor(theta, 2)
    t1 = 3.0 * math.log(m) / n
    t2 = (math.log(n) - n * info.i_g / 6.0) / (m * deltas.delta_g)
    t3 = (math.log(n) - n * info.i_c1 / 6.0 - n * info.i_c2 / 3.0) / (m * deltas.delta_c)
    return _finalize((t1, t2, t3), pref)


_TERM_TO_REGIME = {
    1: RegimeKind.PERFECT,
    2: RegimeKind.GROUPING_LIMITED,
    3: RegimeKind.CLUSTERING_LIMITED,
}


def classify_regime(n: int, m: int, theta: float, info: InfoMeasures,
                    deltas: DeltaPair) -> Regime:
    """Which max-term is active at (2,3,2,2): perfect / grouping- / clustering-limited."""
    ps = p_star_232(n, m, theta, info, deltas)
    return Regime(kind=_TERM_TO_REGIME[ps.active_term], active_term=ps.active_term,
                  is_tie=ps.is_tie)


@dataclass(frozen=True)
class RegimeCell:
    i_g: float
    i_c2: float
    regime: Regime
    p_star: float
    feasible: bool


def _invert_measures(i_g: float, i_c2: float, gamma: float) -> tuple[InfoMeasures, bool]:
    # One consistent reconstruction: beta from (gamma, i_c2), alpha from (beta, i_g).
    beta = (math.sqrt(gamma) + math.sqrt(i_c2)) ** 2
    alpha = (math.sqrt(beta) + math.sqrt(i_g)) ** 2
    i_c1 = (math.sqrt(alpha) - math.sqrt(gamma)) ** 2
    feasible = alpha <= 1.0
    return InfoMeasures(i_g=i_g, i_c1=i_c1, i_c2=i_c2), feasible


def regime_map(i_g_values, i_c2_values, n: int, m: int, theta: float,
               deltas: DeltaPair, gamma: float) -> list[RegimeCell]:
    """Regime label per (i_g, i_c2) grid point, row-major over i_g then i_c2.

    i_c1 is derived by reconstructing (alpha, beta) from (i_g, i_c2, gamma);
    points forcing an edge probability above 1 are flagged infeasible.
    """
    if not (0.0 <= gamma <= 1.0):
        raise ValidationError("gamma must lie in [0, 1]")
    cells = []
    for i_g in i_g_values:
        for i_c2 in i_c2_values:
            info, feasible = _invert_measures(float(i_g), float(i_c2), gamma)
            ps = p_star_232(n, m, theta, info, deltas)
            reg = Regime(kind=_TERM_TO_REGIME[ps.active_term],
                         active_term=ps.active_term, is_tie=ps.is_tie)
            cells.append(RegimeCell(i_g=float(i_g), i_c2=float(i_c2), regime=reg,
                                    p_star=ps.value, feasible=feasible))
    return cells

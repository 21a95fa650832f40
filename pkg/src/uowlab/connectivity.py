"""Connectivity probability of random directed sector graphs.

Closed-form estimates of the probability that no node is obscured (every
node keeps at least k descendants and k antecedents), plus seeded Monte
Carlo estimators used to validate them.  The closed forms are asymptotic
(unit deployment area, many nodes, small normalized range): radii are
normalized by the deployment side before evaluation and outputs are
clamped into [0, 1].

Quantities follow the sector-graph model: a node's forward degree is the
number of nodes inside its sector, its backward degree the number of
sectors covering it.  The central parameter is

    Q = -scan_angle * M * radius**2 / 2,

the negated expected forward degree, so Pr[forward degree = 0] ~ exp(Q).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

from .netgraph import sector_degrees

_TWO_PI = 2.0 * math.pi

# Normalized radius beyond which the asymptotic forms are used outside
# their comfort zone; evaluation proceeds with a warning.
_RADIUS_SOFT_LIMIT = 0.3


class AsymptoticRangeWarning(RuntimeWarning):
    """A closed form was evaluated outside its asymptotic comfort zone."""


@dataclass(frozen=True)
class ConnectivityParams:
    """Parameter point of the connectivity formulas.

    Attributes:
        M: Number of nodes.
        radius: Communication range normalized to a unit-area square
            (radius_m / area_side).
        scan_angle: Shared sector width (rad), in (0, 2pi].
        Q: Derived, -scan_angle * M * radius^2 / 2 (always <= 0).
    """

    M: int
    radius: float
    scan_angle: float
    Q: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.M < 0:
            raise ValueError(f"M must be >= 0, got {self.M}")
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        if not 0.0 < self.scan_angle <= _TWO_PI:
            raise ValueError(f"scan_angle must be in (0, 2pi], got {self.scan_angle}")
        derived = -self.scan_angle * self.M * self.radius ** 2 / 2.0
        if self.Q is None:
            object.__setattr__(self, "Q", derived)
        elif not math.isclose(self.Q, derived, rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError(f"Q={self.Q} inconsistent with derived {derived}")

    @classmethod
    def from_meters(cls, M: int, radius_m: float, area_side: float,
                    scan_angle: float) -> "ConnectivityParams":
        """Build params from a physical range and deployment side (meters)."""
        if area_side <= 0:
            raise ValueError(f"area_side must be > 0, got {area_side}")
        return cls(M=M, radius=radius_m / area_side, scan_angle=scan_angle)


def _soft_precondition(params: ConnectivityParams) -> None:
    if params.radius > _RADIUS_SOFT_LIMIT:
        warnings.warn(
            f"normalized radius {params.radius:.3f} is large for the asymptotic "
            "connectivity forms; results may drift from simulation",
            AsymptoticRangeWarning, stacklevel=3)


def _clamp(p: float) -> float:
    if p < -1e-9 or p > 1.0 + 1e-9:
        warnings.warn(f"closed form produced {p:.6g}; clamped into [0, 1]",
                      AsymptoticRangeWarning, stacklevel=3)
    return min(1.0, max(0.0, p))


def p_forward(params: ConnectivityParams) -> float:
    """Probability a node has at least one descendant, 1 - exp(Q)."""
    _soft_precondition(params)
    return _clamp(1.0 - math.exp(params.Q))


def p_forward_k(params: ConnectivityParams, k: int) -> float:
    """Probability a node has at least k descendants.

    Poisson tail with mean -Q: 1 - sum_{j<k} exp(Q) (-Q)^j / j!.
    Equals :func:`p_forward` at k = 1 and 1 - exp(Q)(1 - Q) at k = 2.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    _soft_precondition(params)
    mean = -params.Q
    term = math.exp(params.Q)
    tail = 1.0 - term
    for j in range(1, k):
        term *= mean / j
        tail -= term
    return _clamp(tail)


def _xi(params: ConnectivityParams) -> float:
    """Shared exponent (2pi - phi)(-Q) / (pi (2 - phi r^2)) of the conditionals."""
    phi, r, Q = params.scan_angle, params.radius, params.Q
    return -Q * (_TWO_PI - phi) / (math.pi * (2.0 - phi * r * r))


def p_backward_given_forward(params: ConnectivityParams) -> float:
    """Conditional probability of backward connectivity given forward.

    Closed form obtained by summing, over the forward degree b >= 1, the
    probability that neither the b in-sector nodes nor the remaining
    M - 1 - b nodes cover the target:

        1 - exp(Q)/(1 - exp(Q)) * (1 - phi r^2 / 2)^(M-1) * (exp(xi) - 1)

    Exactly 1 at scan_angle = 2pi, where every in-range node is both
    descendant and antecedent.
    """
    if params.M < 2:
        raise ValueError(f"M must be >= 2, got {params.M}")
    if params.Q == 0.0:
        raise ValueError("Q = 0 (empty sector) leaves the conditional undefined")
    _soft_precondition(params)
    phi, r, Q = params.scan_angle, params.radius, params.Q
    base = 1.0 - phi * r * r / 2.0
    ratio = math.exp(Q) / (1.0 - math.exp(Q))
    value = 1.0 - ratio * base ** (params.M - 1) * math.expm1(_xi(params))
    return _clamp(value)


def p_backward_given_forward_2(params: ConnectivityParams) -> float:
    """Conditional probability of 2-backward given 2-forward connectivity.

    1 - S1 - S2 - S3 where the three sums run over the forward degree
    b >= 2 and separate the no-mutual-link / one-mutual-link events:

        P  = exp(Q) / (1 - (1 - Q) exp(Q))
        S1 = P (1 - phi r^2/2)^(M-1) (exp(xi) - xi - 1)
        S2 = P (phi r^2/2) (1 - phi r^2/2)^(M-2)
               [(M-1)(exp(xi) - 1 - xi) - xi (exp(xi) - 1)]
        S3 = P (M phi^2 r^2 / 4 pi) (1 - phi r^2/2)^(M-2) (exp(xi) - 1)

    Each sum vanishes at scan_angle = 2pi (xi = 0), giving exactly 1.
    """
    s1, s2, s3 = backward2_sum_terms(params)
    return _clamp(1.0 - s1 - s2 - s3)


def backward2_sum_terms(params: ConnectivityParams):
    """The three summed terms (S1, S2, S3) of the k = 2 conditional.

    Exposed so the closed forms can be cross-checked against direct
    summation over the forward degree.
    """
    if params.M < 3:
        raise ValueError(f"M must be >= 3, got {params.M}")
    phi, r, Q, M = params.scan_angle, params.radius, params.Q, params.M
    denom = 1.0 - (1.0 - Q) * math.exp(Q)
    if denom == 0.0:
        raise ValueError("Q = 0 (empty sector) leaves the conditional undefined")
    _soft_precondition(params)
    xi = _xi(params)
    prefactor = math.exp(Q) / denom
    base = 1.0 - phi * r * r / 2.0
    exp_xi_m1 = math.expm1(xi)

    s1 = prefactor * base ** (M - 1) * (exp_xi_m1 - xi)
    s2 = (prefactor * (phi * r * r / 2.0) * base ** (M - 2)
          * ((M - 1) * (exp_xi_m1 - xi) - xi * exp_xi_m1))
    s3 = (prefactor * (M * phi * phi * r * r / (4.0 * math.pi))
          * base ** (M - 2) * exp_xi_m1)
    return s1, s2, s3


def p_connected(params: ConnectivityParams, exponent: str = "all_factors") -> float:
    """Probability that the whole network has no obscured node (k = 1).

    Combines the per-node forward probability with the backward-given-
    forward conditional.  ``exponent`` selects how the per-node product
    is lifted to the network:

      - "all_factors": (p_forward * p_backward_given_forward)^M, reading
        the closed form as a per-node probability raised over M nodes.
        Tracks simulation far better and is the default.
      - "single_forward": p_forward * p_backward_given_forward^M, the
        literal printed arrangement with a single forward factor.

    Both variants share the conditional's approximations and sit above
    torus-mode simulation in the transition region; see
    :func:`p_connected_refined` for a tighter diagnostic form.
    """
    if params.M < 2:
        raise ValueError(f"M must be >= 2, got {params.M}")
    pd = 1.0 - math.exp(params.Q)
    if pd == 0.0:
        return 0.0
    pad = p_backward_given_forward(params)
    if exponent == "all_factors":
        value = (pd * pad) ** params.M
    elif exponent == "single_forward":
        value = pd * pad ** params.M
    else:
        raise ValueError(f"unknown exponent form {exponent!r}")
    return _clamp(value)


def p_connected_k(params: ConnectivityParams, k: int,
                  exponent: str = "all_factors") -> float:
    """Network-level no-obscured-node probability for degree k in {1, 2}."""
    if k == 1:
        return p_connected(params, exponent=exponent)
    if k == 2:
        if params.M < 3:
            raise ValueError(f"M must be >= 3 for k = 2, got {params.M}")
        pdk = p_forward_k(params, 2)
        if pdk == 0.0:
            return 0.0
        padk = p_backward_given_forward_2(params)
        if exponent == "all_factors":
            value = (pdk * padk) ** params.M
        elif exponent == "single_forward":
            value = pdk * padk ** params.M
        else:
            raise ValueError(f"unknown exponent form {exponent!r}")
        return _clamp(value)
    raise ValueError(f"closed forms cover k in {{1, 2}}, got k = {k}")


def p_connected_refined(params: ConnectivityParams) -> float:
    """Tightened k = 1 network probability (diagnostic variant).

    Uses the exact per-node obscured probability for independent uniform
    placements -- including the (1 - phi/2pi) orientation factor that
    reduces the antecedent rate of nodes outside the forward sector --
    and lifts it with an independence approximation across nodes:

        obscured = 2 (1 - q)^(M-1) - (1 - (2 - phi/2pi) q)^(M-1),
        q = phi r^2 / 2,   p = (1 - obscured)^M.

    Tracks torus-mode simulation within Monte Carlo error over the
    sweep grids, unlike the factored conditional forms above.
    """
    if params.M < 2:
        raise ValueError(f"M must be >= 2, got {params.M}")
    _soft_precondition(params)
    phi, r, M = params.scan_angle, params.radius, params.M
    q = phi * r * r / 2.0
    if q >= 1.0:
        return 1.0
    both_rate = (2.0 - phi / _TWO_PI) * q
    obscured = 2.0 * (1.0 - q) ** (M - 1) - max(0.0, 1.0 - both_rate) ** (M - 1)
    return _clamp((1.0 - obscured) ** M)


# ---------------------------------------------------------------------------
# Monte Carlo estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonteCarloEstimate:
    """Connectivity frequency over seeded trials with binomial stderr."""

    probability: float
    stderr: float
    trials: int
    successes: int


RngLike = Union[np.random.Generator, np.random.SeedSequence, int]


def _trial_streams(rng: RngLike, trials: int):
    """Independent per-trial generators, fixed by the parent stream alone."""
    if isinstance(rng, np.random.SeedSequence):
        return [np.random.default_rng(child) for child in rng.spawn(trials)]
    if isinstance(rng, (int, np.integer)):
        return _trial_streams(np.random.SeedSequence(int(rng)), trials)
    return rng.spawn(trials)


def monte_carlo_p_connected(
    M: int,
    area_side: float,
    scan_angle: float,
    radius: float,
    k: int = 1,
    trials: int = 1000,
    border_mode: str = "bounded",
    rng: RngLike = 0,
) -> MonteCarloEstimate:
    """Estimate the k-connectivity probability by simulating deployments.

    Each trial draws a fresh uniform deployment (positions then
    orientations, matching :func:`uowlab.netgraph.deploy`) from its own
    derived substream and counts the graphs where every node has at
    least k descendants and k antecedents.  The estimate is independent
    of how trials are scheduled because substreams are fixed up front.

    Args:
        M: Nodes per deployment.
        area_side: Deployment square side (m).
        scan_angle: Shared sector width (rad).
        radius: Shared communication range (m).
        k: Required degree on both sides.
        trials: Number of simulated deployments.
        border_mode: "bounded" (hard square) or "torus" (wrapped).
        rng: Generator, SeedSequence, or integer seed.

    Returns:
        MonteCarloEstimate with the success frequency and its stderr.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if border_mode not in ("bounded", "torus"):
        raise ValueError(f"border_mode must be 'bounded' or 'torus', got {border_mode!r}")
    torus = border_mode == "torus"

    successes = 0
    for stream in _trial_streams(rng, trials):
        positions = stream.uniform(0.0, area_side, size=(M, 2))
        orientations = stream.uniform(0.0, _TWO_PI, size=M)
        out_deg, in_deg = sector_degrees(
            positions, orientations, scan_angle, radius, area_side, torus)
        if M == 0 or (out_deg.min() >= k and in_deg.min() >= k):
            successes += 1

    p_hat = successes / trials
    stderr = math.sqrt(p_hat * (1.0 - p_hat) / trials)
    return MonteCarloEstimate(probability=p_hat, stderr=stderr,
                              trials=trials, successes=successes)

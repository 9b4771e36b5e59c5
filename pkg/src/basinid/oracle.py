"""Exact brute-force verification on small finite-state Markov chains.

Everything here is computed to floating-point exactness (matrix powers,
dynamic programming, eigenvector iteration): no sampling, no learning. It
provides an independent check of the risk-separation logic that the neural
pipeline relies on: within a well the survival-conditioned law approaches
the quasi-stationary distribution, so marginal laws from two core states
become indistinguishable, while across wells they stay separated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BasinIdError


class NonPrimitiveBlockError(BasinIdError):
    """The well-restricted substochastic block has no unique quasi-stationary
    distribution (it is reducible or periodic)."""


@dataclass
class FiniteChain:
    """Row-stochastic transition matrix with a declared well/core structure."""

    P: np.ndarray
    wells: list[list[int]]
    cores: list[list[int]]

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        s = self.P.shape[0]
        if self.P.ndim != 2 or self.P.shape != (s, s):
            raise ValueError("P must be square")
        if np.any(self.P < 0):
            raise ValueError("P has negative entries")
        if np.max(np.abs(self.P.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("rows of P must sum to 1 within 1e-12")
        flat = [x for w in self.wells for x in w]
        if sorted(flat) != list(range(s)):
            raise ValueError("wells must disjointly cover all states")
        if len(self.cores) != len(self.wells):
            raise ValueError("need one core per well")
        for c, w in zip(self.cores, self.wells):
            if not set(c) <= set(w):
                raise ValueError("each core must lie inside its well")

    @property
    def num_states(self) -> int:
        return self.P.shape[0]


def chain_from_json(source) -> FiniteChain:
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source) as fh:
            data = json.load(fh)
    else:
        data = source
    return FiniteChain(
        P=np.asarray(data["P"], dtype=np.float64),
        wells=[list(map(int, w)) for w in data["wells"]],
        cores=[list(map(int, c)) for c in data["cores"]],
    )


def _block(chain: FiniteChain, well: list[int]) -> np.ndarray:
    return chain.P[np.ix_(well, well)]


def exit_probability(chain: FiniteChain, x: int, well: list[int], T: int) -> float:
    """P(tau_well <= T | X_0 = x): the chance of leaving ``well`` within the
    first T steps, by exact dynamic programming with an absorbing exit."""
    if x not in well:
        raise ValueError(f"state {x} is not in the well")
    if T < 0:
        raise ValueError("T must be >= 0")
    q = _block(chain, well)
    pos = well.index(x)
    v = np.zeros(len(well))
    v[pos] = 1.0
    for _ in range(T):
        v = v @ q
    return float(1.0 - v.sum())


def _is_primitive(q: np.ndarray) -> bool:
    s = q.shape[0]
    if s == 1:
        return q[0, 0] > 0.0
    adj = q > 0.0
    # Wielandt bound: primitive iff A^((s-1)^2 + 1) is strictly positive
    target = (s - 1) ** 2 + 1
    power = np.eye(s, dtype=bool)
    base = adj
    t = target
    while t:
        if t & 1:
            power = (power.astype(np.uint8) @ base.astype(np.uint8)) > 0
        base = (base.astype(np.uint8) @ base.astype(np.uint8)) > 0
        t >>= 1
    return bool(power.all())


def quasi_stationary(q: np.ndarray, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Leading left eigenvector of a primitive substochastic block,
    normalized to a probability vector, by power iteration."""
    if not _is_primitive(q):
        raise NonPrimitiveBlockError("well block is not primitive; no unique QSD")
    s = q.shape[0]
    v = np.full(s, 1.0 / s)
    for _ in range(max_iter):
        w = v @ q
        total = w.sum()
        if total <= 0.0:
            raise NonPrimitiveBlockError("well block is fully absorbing")
        w = w / total
        if np.abs(w - v).sum() < tol:
            return w
        v = w
    raise NonPrimitiveBlockError("QSD power iteration did not converge")


def conditional_mixing_gap(chain: FiniteChain, well: list[int], core: list[int], t: int):
    """Worst-case total-variation distance, over core states, between the
    time-t survival-conditioned law and the quasi-stationary distribution.
    Returns (epsilon, qsd)."""
    if not set(core) <= set(well):
        raise ValueError("core must lie inside the well")
    if t < 0:
        raise ValueError("t must be >= 0")
    q = _block(chain, well)
    pi = quasi_stationary(q)
    qt = np.linalg.matrix_power(q, t)
    eps = 0.0
    for x in core:
        row = qt[well.index(x)]
        total = row.sum()
        if total <= 0.0:
            raise NonPrimitiveBlockError(f"no survival mass after {t} steps from state {x}")
        cond = row / total
        eps = max(eps, 0.5 * float(np.abs(cond - pi).sum()))
    return eps, pi


def bayes_risk(p0, p1) -> float:
    """Minimum error probability distinguishing two equally likely
    distributions: (1 - TV) / 2 with TV = half the L1 distance."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    if p0.shape != p1.shape or p0.ndim != 1:
        raise ValueError("distributions must be vectors over the same support")
    for p in (p0, p1):
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("inputs must be probability vectors")
    tv = 0.5 * float(np.abs(p0 - p1).sum())
    return (1.0 - tv) / 2.0


@dataclass
class PairCheck:
    x0: int
    x1: int
    same_well: bool
    risk: float
    bound: float
    ok: bool


@dataclass
class Theorem1Report:
    t_star: int
    T: int
    delta: float
    epsilon: float
    same_floor: float          # (1 - delta) * (1/2 - epsilon)
    pairs: list[PairCheck] = field(default_factory=list)
    violations: list[PairCheck] = field(default_factory=list)
    assumption_warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


_FLOAT_SLACK = 1e-12


def verify_theorem1(chain: FiniteChain, t_star: int, T: int) -> Theorem1Report:
    """Measure (delta, epsilon) exactly and check the risk-separation bounds
    for every pair of core states.

    Same-well pairs must have Bayes risk >= (1 - delta)(1/2 - epsilon);
    cross-well pairs must have risk <= delta. Assumption problems (no unique
    QSD, epsilon >= 1/2) are reported, not raised.
    """
    if not t_star < T:
        raise ValueError("need t_star < T")

    delta = 0.0
    for well, core in zip(chain.wells, chain.cores):
        for x in core:
            delta = max(delta, exit_probability(chain, x, well, T))

    epsilon = 0.0
    warnings: list[str] = []
    for idx, (well, core) in enumerate(zip(chain.wells, chain.cores)):
        if not core:
            continue
        try:
            eps_w, _ = conditional_mixing_gap(chain, well, core, t_star)
        except NonPrimitiveBlockError as exc:
            warnings.append(f"well {idx}: {exc}")
            epsilon = np.nan
            break
        epsilon = max(epsilon, eps_w)
    if np.isfinite(epsilon) and epsilon >= 0.5:
        warnings.append(f"epsilon = {epsilon:.6g} >= 1/2: same-well floor is vacuous")

    same_floor = (1.0 - delta) * (0.5 - epsilon) if np.isfinite(epsilon) else np.nan
    report = Theorem1Report(
        t_star=t_star, T=T, delta=delta, epsilon=epsilon, same_floor=same_floor,
        assumption_warnings=warnings,
    )

    pt = np.linalg.matrix_power(chain.P, t_star)
    core_states = [
        (x, widx) for widx, core in enumerate(chain.cores) for x in core
    ]
    for a in range(len(core_states)):
        for b in range(a + 1, len(core_states)):
            (x0, w0), (x1, w1) = core_states[a], core_states[b]
            risk = bayes_risk(pt[x0], pt[x1])
            same = w0 == w1
            if same:
                bound = same_floor
                ok = (not np.isfinite(bound)) or risk >= bound - _FLOAT_SLACK
            else:
                bound = delta
                ok = risk <= bound + _FLOAT_SLACK
            check = PairCheck(x0=x0, x1=x1, same_well=same, risk=risk, bound=bound, ok=ok)
            report.pairs.append(check)
            if not ok:
                report.violations.append(check)
    return report

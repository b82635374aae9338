"""Finite-alphabet probability distributions, distances, and hard-instance generators.

Symbols are 0-based: a distribution over an alphabet of size k assigns mass to
{0, ..., k-1}.  All generators return immutable :class:`Pmf` objects that
validate (and renormalize away float dust from) their mass vector on
construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Pmf",
    "PaninskiParam",
    "Partition",
    "SubsetSpec",
    "uniform",
    "paninski",
    "flying_pony",
    "tv",
    "lp2_dist",
    "chi2",
    "chi2_plain",
    "kl",
    "sample",
    "split_duplicate",
    "merge_pairs",
    "flatten",
    "conditional",
]

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class Pmf:
    """A probability mass function over the alphabet {0, ..., k-1}.

    Entries must be nonnegative and sum to 1 within 1e-9; the stored vector is
    renormalized so downstream exact checks see a true probability vector.
    """

    k: int
    probs: np.ndarray

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("alphabet size must be >= 1")
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (self.k,):
            raise ValueError(f"probs must have shape ({self.k},), got {p.shape}")
        if np.any(p < 0):
            raise ValueError("probabilities must be nonnegative")
        total = p.sum()
        if abs(total - 1.0) > _SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        p = p / total
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.probs**2)))

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "probs": [float(x) for x in self.probs]})

    @classmethod
    def from_json(cls, text: str) -> "Pmf":
        obj = json.loads(text)
        return cls(k=int(obj["k"]), probs=np.array(obj["probs"], dtype=np.float64))


@dataclass(frozen=True)
class PaninskiParam:
    """Parameters of the paired-perturbation hard instance family."""

    k: int
    eps: float
    theta: np.ndarray

    def __post_init__(self):
        if self.k < 2 or self.k % 2 != 0:
            raise ValueError("k must be a positive even integer")
        if not (0 <= self.eps <= 0.5):
            raise ValueError("eps must lie in [0, 1/2]")
        th = np.asarray(self.theta, dtype=np.int64)
        if th.shape != (self.k // 2,):
            raise ValueError("theta must have length k/2")
        if not np.all(np.abs(th) == 1):
            raise ValueError("theta entries must be +1 or -1")
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)


@dataclass(frozen=True)
class Partition:
    """A partition of {0,...,k-1} into L parts, as a part-index assignment."""

    k: int
    L: int
    assign: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assign, dtype=np.int64)
        if a.shape != (self.k,):
            raise ValueError("assign must have length k")
        if a.min() < 0 or a.max() >= self.L:
            raise ValueError("part indices must lie in [0, L)")
        a.setflags(write=False)
        object.__setattr__(self, "assign", a)

    @property
    def balanced(self) -> bool:
        counts = np.bincount(self.assign, minlength=self.L)
        return bool(counts.max() - counts.min() <= (0 if self.k % self.L == 0 else 1))

    @property
    def exactly_balanced(self) -> bool:
        counts = np.bincount(self.assign, minlength=self.L)
        return self.k % self.L == 0 and bool(counts.max() == counts.min())

    def part_members(self, r: int) -> np.ndarray:
        return np.flatnonzero(self.assign == r)

    @classmethod
    def from_blocks(cls, k: int, blocks: list[np.ndarray]) -> "Partition":
        assign = np.full(k, -1, dtype=np.int64)
        for r, members in enumerate(blocks):
            assign[np.asarray(members, dtype=np.int64)] = r
        if np.any(assign < 0):
            raise ValueError("blocks do not cover the alphabet")
        return cls(k=k, L=len(blocks), assign=assign)


@dataclass(frozen=True)
class SubsetSpec:
    """A sorted subset of s distinct symbols from {0,...,k-1}."""

    k: int
    s: int
    members: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.members, dtype=np.int64)
        if not (1 <= self.s <= self.k):
            raise ValueError("need 1 <= s <= k")
        if m.shape != (self.s,):
            raise ValueError("members must have length s")
        if np.any(np.diff(m) <= 0):
            raise ValueError("members must be strictly increasing")
        if m[0] < 0 or m[-1] >= self.k:
            raise ValueError("members out of range")
        m.setflags(write=False)
        object.__setattr__(self, "members", m)


def uniform(k: int) -> Pmf:
    """The uniform distribution u_k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return Pmf(k=k, probs=np.full(k, 1.0 / k))


def paninski(param: PaninskiParam) -> Pmf:
    """Paired perturbation of uniform: p(2i) = (1+2eps*theta_i)/k, p(2i+1) = (1-2eps*theta_i)/k.

    The result is at total variation distance exactly eps from uniform.
    """
    k, eps, theta = param.k, param.eps, param.theta
    p = np.empty(k)
    p[0::2] = (1.0 + 2.0 * eps * theta) / k
    p[1::2] = (1.0 - 2.0 * eps * theta) / k
    return Pmf(k=k, probs=p)


def flying_pony(k: int, theta) -> Pmf:
    """Uniform over a hidden half of the domain: p(2i) = (1+theta_i)/k, p(2i+1) = (1-theta_i)/k.

    Every probability is 0 or 2/k; TV to uniform is exactly 1/2.
    """
    if k < 2 or k % 2 != 0:
        raise ValueError("k must be a positive even integer")
    th = np.asarray(theta, dtype=np.int64)
    if th.shape != (k // 2,) or not np.all(np.abs(th) == 1):
        raise ValueError("theta must be a +/-1 vector of length k/2")
    p = np.empty(k)
    p[0::2] = (1.0 + th) / k
    p[1::2] = (1.0 - th) / k
    return Pmf(k=k, probs=p)


def _check_match(p: Pmf, q: Pmf):
    if p.k != q.k:
        raise ValueError(f"alphabet sizes differ: {p.k} vs {q.k}")


def tv(p: Pmf, q: Pmf) -> float:
    """Total variation distance, 0.5 * l1."""
    _check_match(p, q)
    return float(0.5 * np.abs(p.probs - q.probs).sum())


def lp2_dist(p: Pmf, q: Pmf) -> float:
    """Euclidean distance between mass vectors."""
    _check_match(p, q)
    return float(np.sqrt(np.sum((p.probs - q.probs) ** 2)))


def chi2(p: Pmf, q: Pmf) -> float:
    """Chi-square divergence with denominator q_x(1 - q_x).

    Requires 0 < q_x < 1 wherever p_x > 0 or q_x > 0.
    """
    _check_match(p, q)
    qq = q.probs
    active = (p.probs > 0) | (qq > 0)
    denom = qq * (1.0 - qq)
    if np.any(denom[active] <= 0):
        raise ZeroDivisionError("chi2 denominator q(1-q) vanishes on the support")
    d = p.probs - qq
    return float(np.sum(d[active] ** 2 / denom[active]))


def chi2_plain(p: Pmf, q: Pmf) -> float:
    """Plain chi-square divergence, denominator q_x (likelihood-ratio form)."""
    _check_match(p, q)
    qq = q.probs
    active = (p.probs > 0) | (qq > 0)
    if np.any(qq[active] <= 0):
        raise ZeroDivisionError("chi2 denominator q vanishes where p has mass")
    d = p.probs - qq
    return float(np.sum(d[active] ** 2 / qq[active]))


def kl(p: Pmf, q: Pmf) -> float:
    """Kullback-Leibler divergence in nats."""
    _check_match(p, q)
    pp, qq = p.probs, q.probs
    pos = pp > 0
    if np.any(qq[pos] <= 0):
        raise ZeroDivisionError("kl undefined: p has mass where q does not")
    return float(np.sum(pp[pos] * np.log(pp[pos] / qq[pos])))


def sample(p: Pmf, rng: np.random.Generator, size: int | None = None):
    """Draw i.i.d. symbols from p.  Returns a scalar when size is None."""
    if size is None:
        return int(rng.choice(p.k, p=p.probs))
    return rng.choice(p.k, size=size, p=p.probs)


def split_duplicate(p: Pmf) -> Pmf:
    """Duplicate each symbol into two halves: q(2i) = q(2i+1) = p(i)/2.

    The l2 norm drops by a factor sqrt(2), so ||q||_2 <= 1/sqrt(2) always.
    """
    q = np.repeat(p.probs / 2.0, 2)
    return Pmf(k=2 * p.k, probs=q)


def merge_pairs(q: Pmf) -> Pmf:
    """Inverse of split_duplicate: add adjacent pairs."""
    if q.k % 2 != 0:
        raise ValueError("alphabet size must be even")
    return Pmf(k=q.k // 2, probs=q.probs[0::2] + q.probs[1::2])


def flatten(p: Pmf, part: Partition) -> Pmf:
    """The L-ary distribution induced by p on a partition of its domain."""
    if part.k != p.k:
        raise ValueError("partition does not match the alphabet")
    out = np.bincount(part.assign, weights=p.probs, minlength=part.L)
    return Pmf(k=part.L, probs=out)


def conditional(p: Pmf, S: SubsetSpec) -> Pmf:
    """The conditional distribution of p restricted to S, renormalized."""
    if S.k != p.k:
        raise ValueError("subset does not match the alphabet")
    mass = p.probs[S.members]
    total = mass.sum()
    if total <= 0:
        raise ZeroDivisionError("p assigns zero mass to S")
    return Pmf(k=S.s, probs=mass / total)

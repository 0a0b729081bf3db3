"""Importance-sampling estimates of large sums.

A sum ``M = sum_a m[a]`` over ``N`` terms is estimated from ``N_s`` indices
drawn with probabilities ``q[a]`` as the sample mean of ``m[a] / q[a]``.
Indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rng import RngBackend

MAX_EXACT_TERMS = 2**24
MAX_VALIDATED_TERMS = 2**20
_CHUNK = 2**20


class InvalidProposalError(ValueError):
    """A sampled index has zero proposal probability."""


@dataclass
class SumProblem:
    """Terms of a sum and the proposal distribution used to sample them.

    ``terms`` is either an array of term values or a vectorized callable
    mapping an int64 index array to values (for domains too large to store).
    ``q`` is ``None`` for the uniform proposal, or an array of probabilities
    sampled by inverse CDF over the cumulative weights. ``sampler`` overrides
    index generation: it maps an array of uniforms to indices.
    """

    n_terms: int
    terms: np.ndarray | Callable[[np.ndarray], np.ndarray]
    q: np.ndarray | None = None
    sampler: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.n_terms < 1:
            raise ValueError("need at least one term")
        if not callable(self.terms):
            self.terms = np.asarray(self.terms, dtype=np.float64)
            if self.terms.shape != (self.n_terms,):
                raise ValueError("terms array length must equal n_terms")
        if self.q is not None:
            self.q = np.asarray(self.q, dtype=np.float64)
            if self.q.shape != (self.n_terms,):
                raise ValueError("q length must equal n_terms")
            if np.any(self.q < 0):
                raise ValueError("q must be nonnegative")
            if self.n_terms <= MAX_VALIDATED_TERMS and not np.isclose(self.q.sum(), 1.0, atol=1e-9):
                raise ValueError(f"q must sum to 1, sums to {self.q.sum()!r}")
            if not callable(self.terms) and np.any((self.q == 0) & (self.terms != 0)):
                raise ValueError("q must be positive wherever the term is nonzero")
            self._cdf = np.cumsum(self.q)
            self._cdf /= self._cdf[-1]

    @classmethod
    def from_terms(cls, terms, q=None) -> "SumProblem":
        terms = np.asarray(terms, dtype=np.float64)
        return cls(len(terms), terms, q)

    def term_values(self, idx: np.ndarray) -> np.ndarray:
        if callable(self.terms):
            return np.asarray(self.terms(idx), dtype=np.float64)
        return self.terms[idx]

    def proposal(self, idx: np.ndarray) -> np.ndarray:
        if self.q is None:
            return np.full(len(idx), 1.0 / self.n_terms)
        return self.q[idx]

    def draw(self, u: np.ndarray) -> np.ndarray:
        if self.sampler is not None:
            return np.asarray(self.sampler(u), dtype=np.int64)
        if self.q is None:
            return np.minimum((u * self.n_terms).astype(np.int64), self.n_terms - 1)
        return np.minimum(np.searchsorted(self._cdf, u, side="right"), self.n_terms - 1)


def mc_estimate(problem: SumProblem, n_samples: int, backend: RngBackend) -> tuple[float, float]:
    """Return (estimate, standard error) of the sum from ``n_samples`` draws."""
    if n_samples < 2:
        raise ValueError("need at least two samples for a standard error")
    idx = problem.draw(backend.uniforms(n_samples))
    if problem.q is None:
        ratio = problem.term_values(idx) * problem.n_terms
    else:
        q = problem.proposal(idx)
        if np.any(q <= 0):
            bad = int(idx[np.argmax(q <= 0)])
            raise InvalidProposalError(f"sampled index {bad} has zero proposal probability")
        ratio = problem.term_values(idx) / q
    return float(ratio.mean()), float(ratio.std(ddof=1) / np.sqrt(n_samples))


def exact_sum(problem: SumProblem) -> float:
    """Brute-force sum over every term."""
    if problem.n_terms > MAX_EXACT_TERMS:
        raise ValueError(f"refusing exact sum over {problem.n_terms} > 2**24 terms")
    if not callable(problem.terms):
        return float(problem.terms.sum())
    total = 0.0
    for start in range(0, problem.n_terms, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, problem.n_terms), dtype=np.int64)
        total += float(problem.term_values(idx).sum())
    return total

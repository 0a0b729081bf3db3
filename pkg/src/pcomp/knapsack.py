"""0/1 knapsack by Markov chain Monte Carlo, with an exact DP baseline.

The chain lives on feasible selections (total weight <= capacity) and
targets ``P(s) ~ exp(beta * V(s))``. Proposals flip exactly two distinct
items, so the size parity of the selection is conserved along a chain:
from the empty start only even-sized selections are reachable.

Uniform layout per step (fixed, so chains replay bit-exactly):

* Metropolis: 2 for the item pair, 1 for acceptance.
* Multiple-try with ``k`` tries: ``2k`` for the candidates, 1 for the
  selection among them, ``2(k - 1)`` for the reference points, 1 for
  acceptance, i.e. ``4k`` in total.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numba
import numpy as np

from .rng import RngBackend

MAX_DP_CELLS = 10**8
_CHUNK_STEPS = 1 << 15


@dataclass
class KnapsackInstance:
    values: np.ndarray
    weights: np.ndarray
    capacity: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.values.ndim != 1 or self.values.shape != self.weights.shape:
            raise ValueError("values and weights must be 1-D of equal length")
        if np.any(self.values <= 0) or np.any(self.weights <= 0):
            raise ValueError("values and weights must be positive")
        if not self.capacity >= 0:
            raise ValueError("capacity must be nonnegative")
        self.capacity = float(self.capacity)

    @property
    def n_items(self) -> int:
        return len(self.values)

    @classmethod
    def random(cls, n_items: int, rng: np.random.Generator, low: int = 1, high: int = 1000,
               capacity_ratio: float = 0.5) -> "KnapsackInstance":
        v = rng.integers(low, high + 1, n_items)
        w = rng.integers(low, high + 1, n_items)
        return cls(v, w, math.floor(capacity_ratio * w.sum()))


@dataclass
class KnapsackState:
    selection: np.ndarray
    value: float
    weight: float

    @classmethod
    def from_selection(cls, instance: KnapsackInstance, selection) -> "KnapsackState":
        sel = np.asarray(selection, dtype=np.int8).copy()
        if sel.shape != instance.values.shape:
            raise ValueError("selection length must equal the number of items")
        return cls(sel, float(instance.values @ sel), float(instance.weights @ sel))

    @classmethod
    def empty(cls, instance: KnapsackInstance) -> "KnapsackState":
        return cls(np.zeros(instance.n_items, dtype=np.int8), 0.0, 0.0)

    def feasible(self, instance: KnapsackInstance) -> bool:
        return self.weight <= instance.capacity


def _pair(u1: float, u2: float, n: int) -> tuple[int, int]:
    i = min(int(u1 * n), n - 1)
    j = min(int(u2 * (n - 1)), n - 2)
    if j >= i:
        j += 1
    return i, j


def propose_two_item(state: KnapsackState, backend: RngBackend) -> np.ndarray:
    """Candidate selection with two distinct, uniformly chosen items flipped."""
    n = len(state.selection)
    if n < 2:
        raise ValueError("two-item proposals need at least two items")
    u1, u2 = backend.uniforms(2)
    i, j = _pair(u1, u2, n)
    cand = state.selection.copy()
    cand[i] ^= 1
    cand[j] ^= 1
    return cand


def metropolis_step(
    instance: KnapsackInstance, state: KnapsackState, candidate, beta: float, u: float
) -> KnapsackState:
    """Accept a feasible candidate with probability ``min(1, exp(beta * dV))``."""
    new = KnapsackState.from_selection(instance, candidate)
    if new.weight > instance.capacity:
        return state
    dv = new.value - state.value
    if dv >= 0 or u < math.exp(beta * dv):
        return new
    return state


def _logsumexp(xs) -> float:
    m = max(xs)
    if m == -math.inf:
        return -math.inf
    return m + math.log(sum(math.exp(x - m) for x in xs))


def multiple_try_step(
    instance: KnapsackInstance, state: KnapsackState, k: int, beta: float, backend: RngBackend
) -> KnapsackState:
    """One multiple-try Metropolis step with ``k`` two-item candidates.

    Weights are ``exp(beta * V)`` for feasible points and 0 otherwise. The
    chosen candidate ``y`` is accepted with probability
    ``min(1, sum w(candidates) / sum w(references from y, plus x))``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = instance.n_items
    if n < 2:
        raise ValueError("two-item proposals need at least two items")
    u = backend.uniforms(4 * k)
    v, w, cap = instance.values, instance.weights, instance.capacity

    def logw(sel):
        if w @ sel > cap:
            return -math.inf
        return beta * (v @ sel - state.value)

    cands = []
    for t in range(k):
        i, j = _pair(u[2 * t], u[2 * t + 1], n)
        c = state.selection.copy()
        c[i] ^= 1
        c[j] ^= 1
        cands.append(c)
    lw = [logw(c) for c in cands]
    top = max(lw)
    if top == -math.inf:
        return state
    cum = list(itertools.accumulate(math.exp(x - top) for x in lw))
    target = u[2 * k] * cum[-1]
    pick = next((t for t in range(k) if target < cum[t]), k - 1)
    y = cands[pick]
    refs = [0.0]
    for t in range(k - 1):
        i, j = _pair(u[2 * k + 1 + 2 * t], u[2 * k + 2 + 2 * t], n)
        r = y.copy()
        r[i] ^= 1
        r[j] ^= 1
        refs.append(logw(r))
    log_ratio = _logsumexp(lw) - _logsumexp(refs)
    if log_ratio >= 0 or u[4 * k - 1] < math.exp(log_ratio):
        return KnapsackState.from_selection(instance, y)
    return state


# ---------------------------------------------------------------------------
# compiled chain


@numba.njit(cache=True)
def _lse(xs, n):
    m = -np.inf
    for t in range(n):
        if xs[t] > m:
            m = xs[t]
    if m == -np.inf:
        return -np.inf
    acc = 0.0
    for t in range(n):
        acc += math.exp(xs[t] - m)
    return m + math.log(acc)


@numba.njit(cache=True)
def _draw_pair(u1, u2, n):
    i = int(u1 * n)
    if i > n - 1:
        i = n - 1
    j = int(u2 * (n - 1))
    if j > n - 2:
        j = n - 2
    if j >= i:
        j += 1
    return i, j


@numba.njit(cache=True)
def _mtm_chain(values, weights, capacity, sel, V, W, betas, k, u,
               best_sel, best_v, trace, index, record):
    """Run ``len(betas)`` multiple-try steps in place.

    Returns (V, W, best_v, index). ``record`` (length 0 to disable) receives
    the bit-encoded state index after each step.
    """
    n = values.shape[0]
    ci = np.empty(k, np.int64)
    cj = np.empty(k, np.int64)
    lw = np.empty(k)
    ref = np.empty(k)
    cum = np.empty(k)
    dvs = np.empty(k)
    dws = np.empty(k)
    for step in range(betas.shape[0]):
        beta = betas[step]
        base = step * 4 * k
        top = -np.inf
        for t in range(k):
            i, j = _draw_pair(u[base + 2 * t], u[base + 2 * t + 1], n)
            ci[t] = i
            cj[t] = j
            dv = (1 - 2 * sel[i]) * values[i] + (1 - 2 * sel[j]) * values[j]
            dw = (1 - 2 * sel[i]) * weights[i] + (1 - 2 * sel[j]) * weights[j]
            dvs[t] = dv
            dws[t] = dw
            if W + dw <= capacity:
                lw[t] = beta * dv
            else:
                lw[t] = -np.inf
            if lw[t] > top:
                top = lw[t]
        if top > -np.inf:
            acc = 0.0
            for t in range(k):
                acc += math.exp(lw[t] - top)
                cum[t] = acc
            target = u[base + 2 * k] * acc
            pick = k - 1
            for t in range(k):
                if target < cum[t]:
                    pick = t
                    break
            yi = ci[pick]
            yj = cj[pick]
            vy = dvs[pick]
            wy = dws[pick]
            ref[0] = 0.0
            for t in range(k - 1):
                a, b = _draw_pair(u[base + 2 * k + 1 + 2 * t], u[base + 2 * k + 2 + 2 * t], n)
                sa = sel[a] ^ (1 if (a == yi or a == yj) else 0)
                sb = sel[b] ^ (1 if (b == yi or b == yj) else 0)
                dv = vy + (1 - 2 * sa) * values[a] + (1 - 2 * sb) * values[b]
                dw = wy + (1 - 2 * sa) * weights[a] + (1 - 2 * sb) * weights[b]
                if W + dw <= capacity:
                    ref[t + 1] = beta * dv
                else:
                    ref[t + 1] = -np.inf
            log_ratio = _lse(lw, k) - _lse(ref, k)
            if log_ratio >= 0 or u[base + 4 * k - 1] < math.exp(log_ratio):
                sel[yi] ^= 1
                sel[yj] ^= 1
                V += vy
                W += wy
                index ^= (1 << yi) | (1 << yj)
                if V > best_v:
                    best_v = V
                    best_sel[:] = sel
        trace[step] = best_v
        if record.shape[0] > 0:
            record[step] = index
    return V, W, best_v, index


def _as_betas(betas, n_steps):
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim == 0:
        betas = np.full(n_steps, float(betas))
    if betas.shape != (n_steps,):
        raise ValueError("beta schedule length must equal the number of steps")
    if np.any(betas < 0):
        raise ValueError("beta must be nonnegative")
    return betas


def geometric_schedule(start: float, end: float, n: int) -> np.ndarray:
    if n == 1:
        return np.array([float(end)])
    return start * (end / start) ** (np.arange(n) / (n - 1))


@dataclass
class SolveResult:
    selection: np.ndarray
    value: float
    trace: np.ndarray
    final: KnapsackState


def _run(instance, betas, k, backend, state, record_states):
    if k < 1:
        raise ValueError("k must be >= 1")
    if instance.n_items < 2:
        raise ValueError("two-item proposals need at least two items")
    if record_states and instance.n_items > 62:
        raise ValueError("state recording is limited to 62 items")
    n_steps = len(betas)
    sel = state.selection.astype(np.int64).copy()
    V, W = state.value, state.weight
    best_sel = sel.copy()
    best_v = V
    index = int(sum(1 << i for i in np.flatnonzero(sel))) if record_states else 0
    trace = np.empty(n_steps)
    record = np.empty(n_steps if record_states else 0, dtype=np.int64)
    for start in range(0, n_steps, _CHUNK_STEPS):
        stop = min(start + _CHUNK_STEPS, n_steps)
        u = backend.uniforms((stop - start) * 4 * k)
        V, W, best_v, index = _mtm_chain(
            instance.values, instance.weights, instance.capacity, sel, V, W,
            betas[start:stop], k, u, best_sel, best_v, trace[start:stop], index,
            record[start:stop] if record_states else record,
        )
    final = KnapsackState.from_selection(instance, sel)
    best = KnapsackState.from_selection(instance, best_sel)
    return final, best, trace, record


def run_chain(instance: KnapsackInstance, n_steps: int, beta, k: int, backend: RngBackend,
              state: KnapsackState | None = None) -> tuple[KnapsackState, np.ndarray]:
    """Fixed-temperature chain; returns the final state and the bit-encoded
    state index (bit ``m`` = item ``m``) after every step."""
    state = state or KnapsackState.empty(instance)
    final, _, _, record = _run(instance, _as_betas(beta, n_steps), k, backend, state, True)
    return final, record


def solve(instance: KnapsackInstance, n_steps: int, backend: RngBackend, k: int = 8,
          beta_start: float = 1e-3, beta_end: float = 10.0, betas=None) -> SolveResult:
    """Anneal a multiple-try chain from the empty selection.

    Tracks the best feasible selection seen; ``trace[t]`` is the best value
    after step ``t`` (nondecreasing).
    """
    if betas is None:
        betas = geometric_schedule(beta_start, beta_end, n_steps)
    betas = _as_betas(betas, n_steps)
    final, best, trace, _ = _run(instance, betas, k, backend, KnapsackState.empty(instance), False)
    return SolveResult(best.selection, best.value, trace, final)


# ---------------------------------------------------------------------------
# exact baseline


def dp_solve(instance: KnapsackInstance) -> tuple[float, np.ndarray]:
    """Exact optimum by the O(N * C) table over integer capacities."""
    w = instance.weights
    if not np.all(w == np.round(w)) or instance.capacity != round(instance.capacity):
        raise ValueError("dynamic programming needs integer weights and capacity")
    cap = int(instance.capacity)
    n = instance.n_items
    if n * (cap + 1) > MAX_DP_CELLS:
        raise ValueError(f"refusing a {n} x {cap + 1} table (limit {MAX_DP_CELLS} cells)")
    wi = w.astype(np.int64)
    best = np.zeros(cap + 1)
    take = np.zeros((n, cap + 1), dtype=bool)
    for m in range(n):
        if wi[m] > cap:
            continue
        cand = best[: cap + 1 - wi[m]] + instance.values[m]
        better = cand > best[wi[m]:]
        take[m, wi[m]:] = better
        best[wi[m]:] = np.where(better, cand, best[wi[m]:])
    sel = np.zeros(n, dtype=np.int8)
    c = cap
    for m in range(n - 1, -1, -1):
        if take[m, c]:
            sel[m] = 1
            c -= wi[m]
    return float(best[cap]), sel


# ---------------------------------------------------------------------------
# instance file: "capacity=C" then CSV rows "value,weight"


def parse_instance(text: str) -> KnapsackInstance:
    capacity = None
    values, weights = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.lower().startswith("capacity"):
            capacity = float(line.split("=", 1)[1])
            continue
        if line.lower().replace(" ", "") == "value,weight":
            continue
        try:
            v, w = (float(x) for x in line.split(","))
        except ValueError:
            raise ValueError(f"line {lineno}: expected 'value,weight', got {line!r}") from None
        values.append(v)
        weights.append(w)
    if capacity is None:
        raise ValueError("missing 'capacity=C' header line")
    return KnapsackInstance(values, weights, capacity)


def format_instance(instance: KnapsackInstance) -> str:
    def num(x):
        return str(int(x)) if float(x).is_integer() else repr(float(x))

    lines = [f"capacity={num(instance.capacity)}", "value,weight"]
    lines += [f"{num(v)},{num(w)}" for v, w in zip(instance.values, instance.weights)]
    return "\n".join(lines) + "\n"

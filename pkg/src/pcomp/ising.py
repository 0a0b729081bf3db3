"""Boltzmann machines with quadratic (Ising) energies.

Energy of a spin vector ``s``::

    E(s) = -sum_{i<j} W_ij s_i s_j - sum_i h_i s_i + offset

with ``W`` symmetric and zero on the diagonal. Spins are either ``binary01``
(``s_i`` in {0, 1}) or ``bipolar`` (``s_i`` in {-1, +1}). The p-bit input of
spin ``i`` is its local field

* binary01: ``I_i = beta * (sum_j W_ij s_j + h_i)``
* bipolar:  ``I_i = 2 * beta * (sum_j W_ij s_j + h_i)``

so that ``sigmoid(I_i)`` is the conditional probability of the high state
(1 or +1) given the other spins. A p-bit output of 1 maps to the high state.

States are indexed by integers whose bit ``i`` is set when spin ``i`` is in
the high state; :func:`exact_boltzmann` returns probabilities in that order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping

import numba
import numpy as np
import scipy.sparse as sp

from .engine import Kernel
from .rng import RngBackend

BINARY = "binary01"
BIPOLAR = "bipolar"
CONVENTIONS = (BINARY, BIPOLAR)
MAX_EXACT_SPINS = 20
_CHUNK_UPDATES = 1 << 20


class ConventionError(ValueError):
    pass


@dataclass
class IsingModel:
    W: sp.csr_matrix
    h: np.ndarray
    beta: float = 1.0
    convention: str = BIPOLAR
    offset: float = 0.0

    def __post_init__(self):
        W = sp.csr_matrix(self.W, dtype=np.float64)
        W.eliminate_zeros()
        W.sort_indices()
        n = W.shape[0]
        if W.shape != (n, n):
            raise ValueError("W must be square")
        if abs(W - W.T).max() if n else 0:
            raise ValueError("W must be symmetric")
        if np.any(W.diagonal() != 0):
            raise ValueError("W must have a zero diagonal")
        self.W = W
        self.h = np.zeros(n) if self.h is None else np.asarray(self.h, dtype=np.float64)
        if self.h.shape != (n,):
            raise ValueError("h length must match W")
        if self.convention not in CONVENTIONS:
            raise ConventionError(f"convention must be one of {CONVENTIONS}")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError("beta must be finite and nonnegative")

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def low(self) -> int:
        return 0 if self.convention == BINARY else -1

    @classmethod
    def from_dense(cls, W, h=None, beta=1.0, convention=BIPOLAR, offset=0.0) -> "IsingModel":
        return cls(sp.csr_matrix(np.asarray(W, dtype=np.float64)), h, beta, convention, offset)

    @classmethod
    def from_edges(cls, n, edges, h=None, beta=1.0, convention=BIPOLAR) -> "IsingModel":
        """Build from ``(i, j, W_ij)`` triples; repeated pairs accumulate."""
        rows, cols, vals = [], [], []
        for i, j, w in edges:
            if i == j:
                raise ValueError(f"self-coupling on spin {i}")
            rows += [i, j]
            cols += [j, i]
            vals += [w, w]
        W = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        return cls(W, h, beta, convention)

    def dense(self) -> np.ndarray:
        return self.W.toarray()

    def with_beta(self, beta: float) -> "IsingModel":
        return IsingModel(self.W, self.h, beta, self.convention, self.offset)

    def to_bipolar(self) -> "IsingModel":
        """Same energies over states mapped by ``s01 = (s + 1) / 2``."""
        if self.convention == BIPOLAR:
            return self
        rowsum = np.asarray(self.W.sum(axis=1)).ravel()
        offset = self.offset - self.W.sum() / 8 - self.h.sum() / 2
        return IsingModel(self.W / 4, self.h / 2 + rowsum / 4, self.beta, BIPOLAR, offset)

    def to_binary(self) -> "IsingModel":
        """Same energies over states mapped by ``s = 2 * s01 - 1``."""
        if self.convention == BINARY:
            return self
        rowsum = np.asarray(self.W.sum(axis=1)).ravel()
        offset = self.offset - self.W.sum() / 2 + self.h.sum()
        return IsingModel(self.W * 4, 2 * self.h - 2 * rowsum, self.beta, BINARY, offset)

    def check_state(self, s) -> np.ndarray:
        s = np.asarray(s)
        if s.shape[-1:] != (self.n,):
            raise ConventionError(f"state must have {self.n} spins")
        if not np.all((s == self.low) | (s == 1)):
            raise ConventionError(f"state values must be {self.low} or 1 ({self.convention})")
        return s


def _to_index(states: np.ndarray) -> np.ndarray:
    high = (np.asarray(states) == 1).astype(np.int64)
    return high @ (1 << np.arange(high.shape[-1], dtype=np.int64))


def state_index(s) -> int:
    return int(_to_index(np.asarray(s)[None])[0])


def all_states(n: int, convention: str = BIPOLAR) -> np.ndarray:
    """Every state in index order, shape ``(2**n, n)``."""
    idx = np.arange(2**n, dtype=np.int64)[:, None]
    bits = ((idx >> np.arange(n)) & 1).astype(np.int8)
    return bits if convention == BINARY else (2 * bits - 1).astype(np.int8)


def energy(model: IsingModel, s) -> float:
    s = model.check_state(s).astype(np.float64)
    return float(-0.5 * s @ (model.W @ s) - model.h @ s + model.offset)


def energies(model: IsingModel, states) -> np.ndarray:
    S = model.check_state(states).astype(np.float64)
    return -0.5 * np.einsum("ki,ki->k", S, (model.W @ S.T).T) - S @ model.h + model.offset


def local_field(model: IsingModel, s, i: int) -> float:
    s = model.check_state(s)
    if not 0 <= i < model.n:
        raise IndexError(f"spin {i} out of range")
    lo, hi = model.W.indptr[i], model.W.indptr[i + 1]
    f = model.W.data[lo:hi] @ s[model.W.indices[lo:hi]] + model.h[i]
    scale = 1.0 if model.convention == BINARY else 2.0
    return float(scale * model.beta * f)


# ---------------------------------------------------------------------------
# compiled samplers


@numba.njit(cache=True)
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@numba.njit(cache=True)
def _field(indptr, indices, data, s, i):
    acc = 0.0
    for p in range(indptr[i], indptr[i + 1]):
        acc += data[p] * s[indices[p]]
    return acc


@numba.njit(cache=True)
def _gibbs_chain(ip1, ix1, d1, h, ip2, ix2, d2, a, b, bipolar, s, free, random_scan, u,
                 thin, out, track, energy_now, best_e, best_s):
    """Sequential p-bit sweeps over the spins listed in ``free``.

    Spin ``i`` sees the field ``a[t] * (W1 s + h)_i + b[t] * (W2 s)_i`` in
    sweep ``t``. A sweep consumes one uniform per free spin (two in random
    scan). The state after every ``thin``-th sweep is written to ``out``.
    With ``track`` the energy ``-s.W1.s/2 - h.s`` is followed update by update
    and its minimum kept in ``best_e``/``best_s``.
    """
    nf = free.shape[0]
    per = 2 * nf if random_scan else nf
    low = -1 if bipolar else 0
    scale = 2.0 if bipolar else 1.0
    kept = 0
    for t in range(a.shape[0]):
        base = t * per
        for q in range(nf):
            if random_scan:
                pos = int(u[base + 2 * q] * nf)
                if pos >= nf:
                    pos = nf - 1
                i = free[pos]
                r = u[base + 2 * q + 1]
            else:
                i = free[q]
                r = u[base + q]
            f1 = _field(ip1, ix1, d1, s, i) + h[i]
            f = a[t] * f1
            if ip2.shape[0] > 1:
                f += b[t] * _field(ip2, ix2, d2, s, i)
            new = 1 if _sigmoid(scale * f) > r else low
            if new != s[i]:
                if track:
                    energy_now -= (new - s[i]) * f1
                s[i] = new
                if track and energy_now < best_e:
                    best_e = energy_now
                    best_s[:] = s
        if (t + 1) % thin == 0:
            out[kept, :] = s
            kept += 1
    return energy_now, best_e


@numba.njit(cache=True)
def _mh_chain(indptr, indices, data, h, beta, bipolar, s, free, u, thin, out):
    """Single-spin-flip Metropolis; two uniforms per step (site, acceptance)."""
    nf = free.shape[0]
    kept = 0
    for t in range(u.shape[0] // 2):
        pos = int(u[2 * t] * nf)
        if pos >= nf:
            pos = nf - 1
        i = free[pos]
        new = (-s[i]) if bipolar else (1 - s[i])
        f = _field(indptr, indices, data, s, i) + h[i]
        dE = -(new - s[i]) * f
        if dE <= 0 or u[2 * t + 1] < math.exp(-beta * dE):
            s[i] = new
        if (t + 1) % thin == 0:
            out[kept, :] = s
            kept += 1


@numba.njit(cache=True)
def _mh_table_chain(E, beta, n, idx, u, thin, out):
    kept = 0
    for t in range(u.shape[0] // 2):
        i = int(u[2 * t] * n)
        if i >= n:
            i = n - 1
        new = idx ^ (1 << i)
        dE = E[new] - E[idx]
        if dE <= 0 or u[2 * t + 1] < math.exp(-beta * dE):
            idx = new
        if (t + 1) % thin == 0:
            out[kept] = idx
            kept += 1
    return idx


_EMPTY_CSR = (np.zeros(1, np.int32), np.zeros(0, np.int32), np.zeros(0))


def _free_spins(n: int, clamps: Mapping[int, int] | None, order=None) -> np.ndarray:
    clamped = set(clamps or ())
    if order is None:
        order = range(n)
    elif sorted(order) != list(range(n)):
        raise ValueError("sweep order must be a permutation of the spin indices")
    return np.array([int(i) for i in order if int(i) not in clamped], dtype=np.int64)


def _initial_state(model: IsingModel, s0, clamps, backend) -> np.ndarray:
    if s0 is None:
        bits = backend.uniforms(model.n) < 0.5
        s = np.where(bits, 1, model.low).astype(np.int64)
    else:
        s = model.check_state(s0).astype(np.int64).copy()
    for i, v in (clamps or {}).items():
        if v not in (model.low, 1):
            raise ConventionError(f"clamp value {v} invalid for {model.convention}")
        s[i] = v
    return s


def run_gibbs(
    model: IsingModel,
    s: np.ndarray,
    a: np.ndarray,
    backend: RngBackend,
    clamps: Mapping[int, int] | None = None,
    thin: int = 1,
    random_scan: bool = False,
    second: tuple[sp.csr_matrix, np.ndarray] | None = None,
    track_energy: bool = False,
    order=None,
):
    """Low-level driver of the compiled sweep kernel; ``s`` is updated in place.

    ``a[t]`` scales ``W`` and ``h`` in sweep ``t``; ``second=(W2, b)`` adds a
    further coupling matrix scaled by ``b[t]``. Returns the recorded states
    and, with ``track_energy``, the lowest-energy state visited. ``order`` is
    the sequential sweep order (default: index order).
    """
    a = np.asarray(a, dtype=np.float64)
    n_sweeps = len(a)
    if thin < 1 or n_sweeps % thin:
        raise ValueError("number of sweeps must be a multiple of thin")
    free = _free_spins(model.n, clamps, order)
    if second is None:
        ip2, ix2, d2 = _EMPTY_CSR
        b = np.zeros(n_sweeps)
    else:
        W2 = sp.csr_matrix(second[0])
        ip2, ix2, d2 = W2.indptr, W2.indices, W2.data
        b = np.asarray(second[1], dtype=np.float64)
    W = model.W
    bipolar = model.convention == BIPOLAR
    out = np.empty((n_sweeps // thin, model.n), dtype=np.int8)
    per = len(free) * (2 if random_scan else 1)
    chunk = max(thin, (_CHUNK_UPDATES // max(per, 1)) // thin * thin)
    e_now = energy(_classical_part(model), s) if track_energy else 0.0
    best_e, best_s = e_now, s.copy()
    for start in range(0, n_sweeps, chunk):
        stop = min(start + chunk, n_sweeps)
        u = backend.uniforms((stop - start) * per)
        e_now, best_e = _gibbs_chain(
            W.indptr, W.indices, W.data, model.h, ip2, ix2, d2, a[start:stop], b[start:stop],
            bipolar, s, free, random_scan, u, thin, out[start // thin: stop // thin],
            track_energy, e_now, best_e, best_s,
        )
    if track_energy:
        return out, best_s, best_e + model.offset
    return out


def _classical_part(model: IsingModel) -> IsingModel:
    return IsingModel(model.W, model.h, model.beta, model.convention, 0.0)


def gibbs_sweep(model: IsingModel, s, backend: RngBackend, clamps=None,
                random_scan: bool = False) -> np.ndarray:
    """One sequential sweep in index order (clamped spins are skipped)."""
    s = _initial_state(model, s, clamps, backend)
    run_gibbs(model, s, [model.beta], backend, clamps, random_scan=random_scan)
    return s.astype(np.int8)


def gibbs_sample(
    model: IsingModel,
    n_samples: int,
    backend: RngBackend,
    s0=None,
    clamps: Mapping[int, int] | None = None,
    burn_in: int = 0,
    thinning: int = 1,
    random_scan: bool = False,
    order=None,
) -> np.ndarray:
    """States after every ``thinning``-th sweep, shape ``(n_samples, n)``.

    Without ``s0`` the start is drawn uniformly (consuming ``n`` uniforms).
    """
    s = _initial_state(model, s0, clamps, backend)
    if burn_in:
        run_gibbs(model, s, np.full(burn_in, model.beta), backend, clamps, burn_in, random_scan,
                  order=order)
    return run_gibbs(model, s, np.full(n_samples * thinning, model.beta), backend, clamps,
                     thinning, random_scan, order=order)


def mh_sample(model: IsingModel, n_samples: int, backend: RngBackend, s0=None,
              clamps: Mapping[int, int] | None = None, burn_in: int = 0,
              thinning: int = 1) -> np.ndarray:
    """Metropolis chain of single-spin flips; state kept every ``thinning`` steps."""
    s = _initial_state(model, s0, clamps, backend)
    free = _free_spins(model.n, clamps)
    W = model.W
    bipolar = model.convention == BIPOLAR
    scratch = np.empty((max(burn_in, 1), model.n), dtype=np.int8)
    if burn_in:
        _mh_chain(W.indptr, W.indices, W.data, model.h, model.beta, bipolar, s, free,
                  backend.uniforms(2 * burn_in), burn_in, scratch)
    out = np.empty((n_samples, model.n), dtype=np.int8)
    step = max(thinning, (_CHUNK_UPDATES // thinning) * thinning)
    total = n_samples * thinning
    for start in range(0, total, step):
        stop = min(start + step, total)
        _mh_chain(W.indptr, W.indices, W.data, model.h, model.beta, bipolar, s, free,
                  backend.uniforms(2 * (stop - start)), thinning,
                  out[start // thinning: stop // thinning])
    return out


def mh_step(model: IsingModel, s, backend: RngBackend) -> np.ndarray:
    """Flip one uniformly chosen spin with probability ``min(1, exp(-beta dE))``."""
    return mh_sample(model, 1, backend, s0=s)[0]


def empirical_distribution(states: np.ndarray, n: int | None = None) -> np.ndarray:
    """Histogram of states over ``2**n`` indices, normalized."""
    states = np.asarray(states)
    n = states.shape[-1] if n is None else n
    counts = np.bincount(_to_index(states), minlength=2**n)
    return counts / counts.sum()


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# ---------------------------------------------------------------------------
# tabulated energies


@dataclass
class TabulatedModel:
    """Energy given by table lookup over state indices (``beta * E = -ln P``)."""

    n: int
    energies: np.ndarray
    beta: float = 1.0

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=np.float64)
        if self.energies.shape != (2**self.n,):
            raise ValueError("need one energy per state")


def from_target_distribution(P) -> TabulatedModel:
    P = np.asarray(P, dtype=np.float64)
    n = int(round(math.log2(len(P)))) if len(P) else -1
    if n < 0 or 2**n != len(P):
        raise ValueError("table length must be a power of two")
    if np.any(P <= 0):
        raise ValueError("target probabilities must be strictly positive")
    if not np.isclose(P.sum(), 1.0, atol=1e-9):
        raise ValueError("target probabilities must sum to 1")
    return TabulatedModel(n, -np.log(P), 1.0)


def mh_sample_table(model: TabulatedModel, n_samples: int, backend: RngBackend,
                    start: int = 0, thinning: int = 1) -> np.ndarray:
    """Metropolis over a tabulated model; returns visited state indices."""
    out = np.empty(n_samples, dtype=np.int64)
    idx = int(start)
    total = n_samples * thinning
    step = max(thinning, (_CHUNK_UPDATES // thinning) * thinning)
    for lo in range(0, total, step):
        hi = min(lo + step, total)
        idx = _mh_table_chain(model.energies, model.beta, model.n, idx,
                              backend.uniforms(2 * (hi - lo)), thinning,
                              out[lo // thinning: hi // thinning])
    return out


# ---------------------------------------------------------------------------
# exact enumeration


def exact_boltzmann(model: IsingModel | TabulatedModel) -> np.ndarray:
    """``exp(-beta E) / Z`` over all ``2**n`` states in index order."""
    if model.n > MAX_EXACT_SPINS:
        raise ValueError(f"refusing to enumerate {model.n} > {MAX_EXACT_SPINS} spins")
    if isinstance(model, TabulatedModel):
        E = model.energies
    else:
        E = np.concatenate([energies(model, chunk) for chunk in _state_chunks(model)])
    logw = -model.beta * E
    logw -= logw.max()
    p = np.exp(logw)
    return p / p.sum()


def _state_chunks(model: IsingModel, size: int = 1 << 16):
    n = model.n
    for start in range(0, 2**n, size):
        idx = np.arange(start, min(start + size, 2**n), dtype=np.int64)[:, None]
        bits = ((idx >> np.arange(n)) & 1).astype(np.int8)
        yield bits if model.convention == BINARY else 2 * bits - 1


def ground_states(model: IsingModel, tol: float = 1e-9) -> tuple[float, np.ndarray]:
    """Minimum energy and the indices of all states attaining it."""
    if model.n > MAX_EXACT_SPINS:
        raise ValueError(f"refusing to enumerate {model.n} > {MAX_EXACT_SPINS} spins")
    E = np.concatenate([energies(model, chunk) for chunk in _state_chunks(model)])
    emin = E.min()
    return float(emin), np.flatnonzero(E <= emin + tol)


# ---------------------------------------------------------------------------
# invertible logic


AND_TRUTH_TABLE = ((0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 1))


class ConstructionError(RuntimeError):
    pass


def invertible_and_gate(beta: float = 1.0, grid: int = 3) -> IsingModel:
    """Binary 3-spin model (a, b, c = a AND b) found by exhaustive search.

    Couplings and biases range over the integers ``-grid..grid``. Among the
    parameter sets whose ground states are exactly the four truth-table rows
    the one with the largest gap to the other states wins, then the smallest
    L1 norm, then the first in lexicographic order.
    """
    states = np.array(list(itertools.product((0, 1), repeat=3)), dtype=np.float64)
    truth = np.array([tuple(s) in AND_TRUTH_TABLE for s in states.astype(int)])
    # features per parameter (W_ab, W_ac, W_bc, h_a, h_b, h_c); E = -features . params
    feats = np.column_stack([
        states[:, 0] * states[:, 1], states[:, 0] * states[:, 2], states[:, 1] * states[:, 2],
        states[:, 0], states[:, 1], states[:, 2],
    ])
    vals = np.arange(-grid, grid + 1, dtype=np.float64)
    params = np.array(list(itertools.product(vals, repeat=6)))
    E = -params @ feats.T
    e_truth = E[:, truth]
    degenerate = np.all(e_truth == e_truth[:, :1], axis=1)
    gap = E[:, ~truth].min(axis=1) - e_truth[:, 0]
    ok = degenerate & (gap > 0)
    if not ok.any():
        raise ConstructionError(f"no AND encoding on the integer grid [-{grid}, {grid}]")
    cand = np.flatnonzero(ok)
    key = np.lexsort((np.abs(params[cand]).sum(axis=1), -gap[cand]))
    best = params[cand[key[0]]]
    W = np.zeros((3, 3))
    W[0, 1] = W[1, 0] = best[0]
    W[0, 2] = W[2, 0] = best[1]
    W[1, 2] = W[2, 1] = best[2]
    return IsingModel.from_dense(W, best[3:], beta, BINARY)


def spectral_gap(model: IsingModel, ground: set[int]) -> float:
    """Lowest energy outside ``ground`` minus the lowest energy inside it."""
    E = energies(model, all_states(model.n, model.convention))
    mask = np.zeros(len(E), dtype=bool)
    mask[list(ground)] = True
    return float(E[~mask].min() - E[mask].min())


# ---------------------------------------------------------------------------
# annealing and max-cut


def anneal(model: IsingModel, schedule, backend: RngBackend, sweeps: int | None = None,
           s0=None, clamps=None) -> tuple[np.ndarray, float]:
    """Gibbs sweeps under a nondecreasing beta schedule.

    ``schedule`` is either one beta per sweep or a ``(start, end)`` pair
    expanded geometrically over ``sweeps``. Returns the lowest-energy state
    visited and its energy.
    """
    betas = _schedule(schedule, sweeps)
    if np.any(np.diff(betas) < 0):
        raise ValueError("annealing schedule must be nondecreasing")
    s = _initial_state(model, s0, clamps, backend)
    _, best_s, best_e = run_gibbs(model, s, betas, backend, clamps, thin=len(betas),
                                  track_energy=True)
    return best_s.astype(np.int8), float(best_e)


def _schedule(schedule, sweeps):
    if isinstance(schedule, tuple) and len(schedule) == 2 and sweeps is not None:
        start, end = schedule
        if sweeps == 1:
            return np.array([float(end)])
        if start > 0:
            return start * (end / start) ** (np.arange(sweeps) / (sweeps - 1))
        return np.linspace(start, end, sweeps)
    betas = np.asarray(schedule, dtype=np.float64)
    if betas.ndim != 1 or len(betas) == 0:
        raise ValueError("schedule must be a (start, end) pair with sweeps, or one beta per sweep")
    return betas


def maxcut_to_ising(edges, n: int | None = None, beta: float = 1.0):
    """Antiferromagnetic bipolar model whose energy minima are maximum cuts.

    ``edges`` holds ``(i, j, weight)`` triples (or a networkx graph with
    optional ``weight`` attributes). ``E(s) = sum_e w_e s_i s_j`` so that
    ``cut(s) = (sum_e w_e - E(s)) / 2``.
    """
    if hasattr(edges, "edges"):
        graph = edges
        n = graph.number_of_nodes() if n is None else n
        edges = [(i, j, d.get("weight", 1.0)) for i, j, d in graph.edges(data=True)]
    edges = [(int(i), int(j), float(w)) for i, j, w in edges]
    for i, j, _ in edges:
        if i == j:
            raise ValueError(f"self-loop on node {i}")
    if n is None:
        n = 1 + max(max(i, j) for i, j, _ in edges)
    model = IsingModel.from_edges(n, [(i, j, -w) for i, j, w in edges], beta=beta)
    ei = np.array([e[0] for e in edges], dtype=np.int64)
    ej = np.array([e[1] for e in edges], dtype=np.int64)
    ew = np.array([e[2] for e in edges])

    def cut_value(s) -> float:
        s = np.asarray(s)
        return float(ew @ (1 - s[..., ei] * s[..., ej]) / 2)

    return model, cut_value


# ---------------------------------------------------------------------------
# engine adapter


def gibbs_kernel(model: IsingModel, s0, clamps: Mapping[int, int] | None = None) -> Kernel:
    """Sequential Gibbs as an engine kernel driving one p-bit per clock cycle.

    The kernel cycles through the free spins in index order; each cycle the
    p-bit output replaces the current spin and the input for the next spin
    is its local field. Observables are the spins after the update, so a
    thinning equal to the number of free spins records one state per sweep.
    """
    free = list(_free_spins(model.n, clamps))
    s = _initial_state(model, s0, clamps, None)
    names = tuple(f"s{i}" for i in range(model.n))

    def step(pbits, state):
        s, pos = state
        s = s.copy()
        i = free[pos]
        s[i] = 1 if pbits.outputs[0] else model.low
        pos = (pos + 1) % len(free)
        return np.array([local_field(model, s, free[pos])]), tuple(s.tolist()), (s, pos)

    return Kernel(step, np.array([local_field(model, s, free[0])]), names, (s, 0))


# ---------------------------------------------------------------------------
# model file
#
#   convention bipolar
#   beta 1.0
#   n 4              # optional; inferred from indices otherwise
#   0 1 1.0          # i j W_ij
#   bias 2 -0.5      # bias i h_i


def parse_model(text: str) -> IsingModel:
    convention, beta, n = BIPOLAR, 1.0, None
    edges, biases = [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0].lower()
        try:
            if key == "convention":
                convention = parts[1]
            elif key == "beta":
                beta = float(parts[1])
            elif key == "n":
                n = int(parts[1])
            elif key == "bias":
                biases[int(parts[1])] = float(parts[2])
            elif len(parts) == 3:
                edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
            else:
                raise ValueError
        except (ValueError, IndexError):
            raise ValueError(f"line {lineno}: cannot parse {line!r}") from None
    idx = [max(i, j) for i, j, _ in edges] + list(biases)
    if n is None:
        n = 1 + max(idx) if idx else 0
    if idx and max(idx) >= n:
        raise ValueError("spin index out of range")
    h = np.zeros(n)
    for i, v in biases.items():
        h[i] = v
    return IsingModel.from_edges(n, edges, h, beta, convention)


def format_model(model: IsingModel) -> str:
    lines = [f"convention {model.convention}", f"beta {float(model.beta)!r}", f"n {model.n}"]
    coo = sp.triu(model.W, k=1).tocoo()
    lines += [f"{int(i)} {int(j)} {float(w)!r}" for i, j, w in zip(coo.row, coo.col, coo.data)]
    lines += [f"bias {i} {float(v)!r}" for i, v in enumerate(model.h) if v != 0]
    return "\n".join(lines) + "\n"

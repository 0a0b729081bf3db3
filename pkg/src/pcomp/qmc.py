"""Quantum Monte Carlo on p-bits.

Two parts:

* Gate circuits. The amplitude ``<m| U_d ... U_1 |k>`` is a sum of products
  of matrix elements over intermediate basis states (Feynman paths). Paths
  are sampled one gate at a time, uniformly among the outputs a gate can
  reach from the current basis state, and weighted by amplitude / proposal
  probability. Complex weights cancel, which is what the average sign
  measures.
* Transverse-field Ising model. The Suzuki-Trotter decomposition maps
  ``H = -sum_{i<j} J_ij Z_i Z_j - sum_i g_i Z_i - Gamma sum_i X_i`` at inverse
  temperature ``beta`` to a classical Ising model on ``n x r`` spins with
  all weights positive, sampled with the Gibbs sampler of :mod:`pcomp.ising`.

Basis states are integers with bit ``q`` holding qubit ``q``. A gate on
targets ``(t0, t1, ...)`` acts on the local index whose most significant bit
is qubit ``t0`` (so ``CNOT`` on ``(c, t)`` has control ``c``).
"""

from __future__ import annotations

import cmath
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.stats import unitary_group

from .engine import integrated_autocorrelation
from .ising import BIPOLAR, IsingModel, energy, gibbs_sample, run_gibbs
from .rng import RngBackend

MAX_STATEVECTOR_QUBITS = 20
MAX_ENUMERATED_PATH_BITS = 16
MAX_ORACLE_SPINS = 8
UNITARY_TOL = 1e-10
_NONZERO_TOL = 1e-14


# ---------------------------------------------------------------------------
# circuits


def _rz(theta: float) -> np.ndarray:
    return np.diag([cmath.exp(-0.5j * theta), cmath.exp(0.5j * theta)])


GATES = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "I": np.eye(2, dtype=complex),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
}


@dataclass
class Gate:
    matrix: np.ndarray
    targets: tuple[int, ...]
    name: str = "U"

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        self.targets = tuple(int(t) for t in self.targets)
        k = len(self.targets)
        if k < 1 or len(set(self.targets)) != k:
            raise ValueError("gate targets must be distinct and non-empty")
        if self.matrix.shape != (2**k, 2**k):
            raise ValueError(f"{self.name}: matrix shape does not match {k} targets")
        err = np.abs(self.matrix.conj().T @ self.matrix - np.eye(2**k)).max()
        if err > UNITARY_TOL:
            raise ValueError(f"{self.name}: matrix is not unitary (error {err:.2e})")


def gate(name: str, *targets: int, theta: float | None = None) -> Gate:
    key = name.upper()
    if key == "RZ":
        if theta is None:
            raise ValueError("RZ needs an angle")
        return Gate(_rz(theta), targets, f"RZ({theta!r})")
    if key not in GATES:
        raise ValueError(f"unknown gate {name!r}")
    return Gate(GATES[key], targets, key)


@dataclass
class GateCircuit:
    n: int
    gates: list[Gate] = field(default_factory=list)
    initial: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one qubit")
        if not 0 <= self.initial < 2**self.n:
            raise ValueError("initial basis state out of range")
        for g in self.gates:
            if max(g.targets) >= self.n or min(g.targets) < 0:
                raise ValueError(f"{g.name}: target out of range for {self.n} qubits")

    @property
    def depth(self) -> int:
        return len(self.gates)

    def add(self, name: str, *targets: int, theta: float | None = None) -> "GateCircuit":
        self.gates.append(gate(name, *targets, theta=theta))
        self.__post_init__()
        return self


def random_circuit(n: int, depth: int, rng: np.random.Generator) -> GateCircuit:
    """Circuit of ``depth`` gates drawn from H, X, Z, RZ, CNOT and Haar 1-qubit unitaries."""
    gates = []
    kinds = ["H", "X", "Z", "RZ", "U", "U"] + (["CNOT", "CNOT"] if n > 1 else [])
    for _ in range(depth):
        kind = kinds[rng.integers(len(kinds))]
        if kind == "CNOT":
            c, t = rng.choice(n, 2, replace=False)
            gates.append(gate("CNOT", int(c), int(t)))
        elif kind == "RZ":
            gates.append(gate("RZ", int(rng.integers(n)), theta=float(rng.uniform(0, 2 * np.pi))))
        elif kind == "U":
            U = unitary_group.rvs(2, random_state=rng)
            gates.append(Gate(U, (int(rng.integers(n)),), "U"))
        else:
            gates.append(gate(kind, int(rng.integers(n))))
    return GateCircuit(n, gates, 0)


def _local_index(x: np.ndarray, targets) -> np.ndarray:
    k = len(targets)
    out = np.zeros_like(x)
    for pos, t in enumerate(targets):
        out |= ((x >> t) & 1) << (k - 1 - pos)
    return out


def _with_local(x: np.ndarray, targets, local: np.ndarray) -> np.ndarray:
    k = len(targets)
    mask = sum(1 << t for t in targets)
    out = x & ~mask
    for pos, t in enumerate(targets):
        out |= ((local >> (k - 1 - pos)) & 1) << t
    return out


def brute_force_amplitude(circuit: GateCircuit, m: int) -> complex:
    """Exact ``<m| U_d ... U_1 |initial>`` by dense state-vector propagation."""
    return complex(statevector(circuit)[m])


def statevector(circuit: GateCircuit) -> np.ndarray:
    n = circuit.n
    if n > MAX_STATEVECTOR_QUBITS:
        raise ValueError(f"refusing a state vector of {n} > {MAX_STATEVECTOR_QUBITS} qubits")
    psi = np.zeros(2**n, dtype=complex)
    psi[circuit.initial] = 1.0
    x = np.arange(2**n, dtype=np.int64)
    for g in circuit.gates:
        row = _local_index(x, g.targets)
        new = np.zeros_like(psi)
        for c in range(g.matrix.shape[1]):
            src = _with_local(x, g.targets, np.full_like(x, c))
            new += g.matrix[row, c] * psi[src]
        psi = new
    return psi


def gate_operator(g: Gate, n: int) -> np.ndarray:
    """Full ``2**n x 2**n`` matrix of a gate."""
    x = np.arange(2**n, dtype=np.int64)
    col = _local_index(x, g.targets)
    M = np.zeros((2**n, 2**n), dtype=complex)
    for c in range(g.matrix.shape[0]):
        M[_with_local(x, g.targets, np.full_like(x, c)), x] = g.matrix[c, col]
    return M


def path_sum_amplitude(circuit: GateCircuit, m: int) -> complex:
    """Amplitude as an explicit sum over every intermediate-state path."""
    n, d = circuit.n, circuit.depth
    if d == 0:
        return complex(circuit.initial == m)
    if n * (d - 1) > MAX_ENUMERATED_PATH_BITS:
        raise ValueError("too many paths to enumerate")
    ops = [gate_operator(g, n) for g in circuit.gates]
    total = 0j
    for path in itertools.product(range(2**n), repeat=d - 1):
        states = (circuit.initial, *path, m)
        amp = 1 + 0j
        for t, U in enumerate(ops):
            amp *= U[states[t + 1], states[t]]
            if amp == 0:
                break
        total += amp
    return total


@dataclass(frozen=True)
class PathEstimate:
    amplitude: complex
    stderr: float
    average_sign: float
    n_samples: int


def _successors(U: np.ndarray, proposal: str):
    """Per input column: reachable outputs and their proposal probabilities."""
    dim = U.shape[0]
    mag = np.abs(U)
    nz = mag > _NONZERO_TOL
    cnt = nz.sum(axis=0)
    table = np.zeros((dim, dim), dtype=np.int64)
    probs = np.zeros((dim, dim))
    for c in range(dim):
        outs = np.flatnonzero(nz[:, c])
        table[c, : len(outs)] = outs
        if proposal == "uniform":
            probs[c, : len(outs)] = 1.0 / len(outs)
        else:
            probs[c, : len(outs)] = mag[outs, c] / mag[outs, c].sum()
    return table, np.cumsum(probs, axis=1), probs, cnt


def path_contributions(circuit: GateCircuit, m: int, n_samples: int, backend: RngBackend,
                       proposal: str = "uniform") -> np.ndarray:
    """Per-sample path weights ``A / q``; their mean estimates the amplitude.

    Paths start at the initial state; gates 1..d-1 each draw one uniform per
    sample to choose the next basis state, and the last gate is pinned to
    the output ``m``.
    """
    if proposal not in ("uniform", "magnitude"):
        raise ValueError("proposal must be 'uniform' or 'magnitude'")
    x = np.full(n_samples, circuit.initial, dtype=np.int64)
    if circuit.depth == 0:
        return np.full(n_samples, complex(circuit.initial == m))
    w = np.ones(n_samples, dtype=complex)
    for g in circuit.gates[:-1]:
        table, cum, probs, cnt = _successors(g.matrix, proposal)
        col = _local_index(x, g.targets)
        u = backend.uniforms(n_samples)
        if proposal == "uniform":
            pick = np.minimum((u * cnt[col]).astype(np.int64), cnt[col] - 1)
        else:
            pick = (u[:, None] >= cum[col]).sum(axis=1)
            pick = np.minimum(pick, cnt[col] - 1)
        out = table[col, pick]
        w *= g.matrix[out, col] / probs[col, pick]
        x = _with_local(x, g.targets, out)
    last = circuit.gates[-1]
    mask = sum(1 << t for t in last.targets)
    same_rest = (x & ~mask) == (m & ~mask)
    row = _local_index(np.array([m]), last.targets)[0]
    w *= np.where(same_rest, last.matrix[row, _local_index(x, last.targets)], 0)
    return w


def feynman_path_sample(circuit: GateCircuit, m: int, n_samples: int, backend: RngBackend,
                        proposal: str = "uniform") -> PathEstimate:
    if n_samples < 2:
        raise ValueError("need at least two samples")
    w = path_contributions(circuit, m, n_samples, backend, proposal)
    mean = w.mean()
    var = w.real.var(ddof=1) + w.imag.var(ddof=1)
    mag = np.abs(w).mean()
    sign = abs(mean) / mag if mag > 0 else 1.0
    return PathEstimate(complex(mean), float(math.sqrt(var / n_samples)), float(min(sign, 1.0)),
                        n_samples)


def hadamard_chain(n: int, depth: int) -> GateCircuit:
    """``depth`` layers of a Hadamard on every qubit."""
    return GateCircuit(n, [gate("H", q) for _ in range(depth) for q in range(n)], 0)


# circuit file:
#   QUBITS 3
#   INIT 0
#   GATE H 0
#   GATE CNOT 0 1
#   GATE RZ(0.25) 2
#   GATE CUSTOM 1 ; 0 1 1 0        # row-major complex entries after ';'


def parse_circuit(text: str) -> GateCircuit:
    n, init, gates = None, 0, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, entries = line.partition(";")
        parts = head.split()
        key = parts[0].upper()
        try:
            if key == "QUBITS":
                n = int(parts[1])
            elif key == "INIT":
                init = int(parts[1], 0)
            elif key == "GATE":
                name = parts[1]
                targets = [int(t) for t in parts[2:]]
                if name.upper() == "CUSTOM":
                    vals = [complex(e.replace("i", "j")) for e in entries.split()]
                    k = len(targets)
                    gates.append(Gate(np.array(vals).reshape(2**k, 2**k), targets, "CUSTOM"))
                elif name.upper().startswith("RZ(") and name.endswith(")"):
                    gates.append(gate("RZ", *targets, theta=float(name[3:-1])))
                else:
                    gates.append(gate(name, *targets))
            else:
                raise ValueError(f"unknown directive {parts[0]!r}")
        except (ValueError, IndexError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if n is None:
        n = 1 + max((max(g.targets) for g in gates), default=0)
    return GateCircuit(n, gates, init)


def format_circuit(circuit: GateCircuit) -> str:
    lines = [f"QUBITS {circuit.n}", f"INIT {circuit.initial}"]
    for g in circuit.gates:
        targets = " ".join(map(str, g.targets))
        if g.name in GATES or g.name.startswith("RZ("):
            lines.append(f"GATE {g.name} {targets}")
        else:
            entries = " ".join(repr(complex(v)).strip("()") for v in g.matrix.ravel())
            lines.append(f"GATE CUSTOM {targets} ; {entries}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# transverse-field Ising model


@dataclass
class TfimProblem:
    J: np.ndarray
    gamma: float
    beta: float
    replicas: int
    g: np.ndarray | None = None

    def __post_init__(self):
        self.J = np.asarray(self.J, dtype=np.float64)
        n = self.J.shape[0]
        if self.J.shape != (n, n) or not np.allclose(self.J, self.J.T, atol=0):
            raise ValueError("J must be a symmetric square matrix")
        if np.any(np.diag(self.J) != 0):
            raise ValueError("J must have a zero diagonal")
        self.g = np.zeros(n) if self.g is None else np.asarray(self.g, dtype=np.float64)
        if self.g.shape != (n,):
            raise ValueError("g length must match J")
        if self.replicas < 2:
            raise ValueError("need at least two replicas")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError("beta must be positive and finite")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError("gamma must be finite and nonnegative")

    @property
    def n(self) -> int:
        return self.J.shape[0]

    @classmethod
    def chain(cls, n: int, J: float, gamma: float, beta: float, replicas: int,
              periodic: bool = False, g: float = 0.0) -> "TfimProblem":
        M = np.zeros((n, n))
        for i in range(n - 1 + (periodic and n > 2)):
            j = (i + 1) % n
            M[i, j] = M[j, i] = J
        return cls(M, gamma, beta, replicas, np.full(n, g))

    def classical_model(self) -> IsingModel:
        """The Gamma = 0 problem as a bipolar Ising model at ``beta``."""
        return IsingModel.from_dense(self.J, self.g, self.beta, BIPOLAR)


def trotter_coupling(beta: float, gamma: float, replicas: int) -> float:
    """Ferromagnetic coupling between neighbouring replicas, ``(1/2) ln coth(beta Gamma / r)``."""
    if gamma <= 0:
        raise ValueError("transverse field must be positive; use the classical model for Gamma = 0")
    return -0.5 * math.log(math.tanh(beta * gamma / replicas))


def _replica_ring(n: int, r: int) -> sp.csr_matrix:
    rows, cols = [], []
    for k in range(r):
        for i in range(n):
            a, b = k * n + i, ((k + 1) % r) * n + i
            rows += [a, b]
            cols += [b, a]
    return sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n * r, n * r)).tocsr()


def _replica_blocks(problem: TfimProblem) -> tuple[sp.csr_matrix, np.ndarray]:
    W = sp.block_diag([sp.csr_matrix(problem.J)] * problem.replicas, format="csr")
    return W, np.tile(problem.g, problem.replicas)


def suzuki_trotter_map(problem: TfimProblem) -> IsingModel:
    """Classical bipolar model on ``n * r`` spins (spin ``k * n + i`` is site
    ``i`` of replica ``k``) whose Boltzmann weights at ``beta = 1`` are the
    Trotterized weights. For ``r = 2`` the two ring bonds of a site coincide
    and their couplings add.
    """
    jp = trotter_coupling(problem.beta, problem.gamma, problem.replicas)
    W, h = _replica_blocks(problem)
    scale = problem.beta / problem.replicas
    total = W * scale + _replica_ring(problem.n, problem.replicas) * jp
    return IsingModel(total, h * scale, 1.0, BIPOLAR)


def tfim_sample(problem: TfimProblem, n_samples: int, backend: RngBackend,
                thinning: int = 1, burn_in: int = 0) -> np.ndarray:
    """Gibbs samples of the replica lattice, shape ``(n_samples, r, n)``, +-1."""
    model = suzuki_trotter_map(problem)
    S = gibbs_sample(model, n_samples, backend, burn_in=burn_in, thinning=thinning)
    return S.reshape(n_samples, problem.replicas, problem.n)


def estimate_thinning(problem: TfimProblem, backend: RngBackend, pilot_sweeps: int = 20000,
                      burn_in: int = 1000) -> int:
    """Sweeps between samples so that they are roughly independent.

    Runs a pilot chain and returns the ceiling of the integrated
    autocorrelation time of the replica-averaged nearest-neighbour ``zz``
    (or of the magnetization when there are no couplings).
    """
    S = tfim_sample(problem, pilot_sweeps, backend, thinning=1, burn_in=burn_in)
    S = S.astype(np.float64)
    bonds = np.argwhere(np.triu(problem.J) != 0)
    if len(bonds):
        series = (S[:, :, bonds[:, 0]] * S[:, :, bonds[:, 1]]).mean(axis=(1, 2))
    else:
        series = S.mean(axis=(1, 2))
    return int(math.ceil(integrated_autocorrelation(series)))


def zz_correlation(samples: np.ndarray, L: int, periodic: bool = False) -> float:
    """Mean of ``s_i s_{i+L}`` over samples, replicas and sites."""
    s = np.asarray(samples, dtype=np.float64)
    n = s.shape[-1]
    if not 0 <= L < n:
        raise ValueError(f"separation {L} out of range for {n} sites")
    if periodic:
        return float((s * np.roll(s, -L, axis=-1)).mean())
    return float((s[..., : n - L] * s[..., L:]).mean())


@dataclass(frozen=True)
class TfimExpectations:
    zz: np.ndarray
    z: np.ndarray
    x: np.ndarray

    def zz_at(self, L: int, periodic: bool = False) -> float:
        n = len(self.z)
        if periodic:
            return float(np.mean([self.zz[i, (i + L) % n] for i in range(n)]))
        return float(np.mean([self.zz[i, i + L] for i in range(n - L)]))


def tfim_hamiltonian(problem: TfimProblem) -> np.ndarray:
    n = problem.n
    if n > MAX_ORACLE_SPINS:
        raise ValueError(f"refusing exact diagonalization of {n} > {MAX_ORACLE_SPINS} spins")
    x = np.arange(2**n)
    z = 2 * ((x[:, None] >> np.arange(n)) & 1) - 1
    diag = -(z * problem.g).sum(axis=1).astype(float)
    for i in range(n):
        for j in range(i + 1, n):
            diag -= problem.J[i, j] * z[:, i] * z[:, j]
    H = np.diag(diag)
    for i in range(n):
        H[x ^ (1 << i), x] -= problem.gamma
    return H


def exact_tfim_oracle(problem: TfimProblem) -> TfimExpectations:
    """Thermal ``<Z_i Z_j>``, ``<Z_i>`` and ``<X_i>`` by dense diagonalization."""
    n = problem.n
    H = tfim_hamiltonian(problem)
    evals, vecs = np.linalg.eigh(H)
    w = np.exp(-problem.beta * (evals - evals[0]))
    rho = (vecs * (w / w.sum())) @ vecs.T
    x = np.arange(2**n)
    z = 2 * ((x[:, None] >> np.arange(n)) & 1) - 1
    p = np.diag(rho)
    zz = np.einsum("k,ki,kj->ij", p, z, z)
    xs = np.array([rho[x ^ (1 << i), x].sum() for i in range(n)])
    return TfimExpectations(zz, p @ z, xs)


def trotter_exact_zz(problem: TfimProblem) -> np.ndarray:
    """Exact ``<s_i s_j>`` of the Trotterized classical model (any replica).

    Transfer matrix over the ``2**n`` column states of one replica, so the
    result carries the finite-``r`` Trotter error but no sampling noise.
    """
    n, r = problem.n, problem.replicas
    if n > MAX_ORACLE_SPINS:
        raise ValueError(f"refusing transfer matrix over {n} > {MAX_ORACLE_SPINS} spins")
    x = np.arange(2**n)
    z = (2 * ((x[:, None] >> np.arange(n)) & 1) - 1).astype(np.float64)
    c = 0.5 * np.einsum("ai,ij,aj->a", z, problem.J, z) + z @ problem.g
    d = problem.beta / r * c
    jp = trotter_coupling(problem.beta, problem.gamma, r)
    K = np.exp(jp * (z @ z.T))
    half = np.exp(0.5 * (d - d.max()))
    T = half[:, None] * K * half[None, :]
    evals, vecs = np.linalg.eigh(T)
    w = (evals / evals[-1]) ** r
    p = (vecs**2) @ (w / w.sum())
    return np.einsum("a,ai,aj->ij", p, z, z)


def majority_vote(replica_states: np.ndarray) -> np.ndarray:
    """Per-site sign of the replica sum; ties take replica 0's spin."""
    s = np.asarray(replica_states)
    total = s.sum(axis=0)
    return np.where(total > 0, 1, np.where(total < 0, -1, s[0])).astype(np.int8)


def quantum_anneal(problem: TfimProblem, sweeps: int, backend: RngBackend,
                   gamma_schedule=(3.0, 0.01), beta_schedule=None) -> tuple[np.ndarray, float]:
    """Anneal the replica lattice while Gamma decreases linearly.

    ``beta_schedule`` is a constant, a ``(start, end)`` pair (linear), or
    ``None`` for ``problem.beta``. Returns the majority-vote configuration
    across replicas and its classical energy.
    """
    g0, g1 = gamma_schedule
    if not (g0 >= g1 > 0):
        raise ValueError("Gamma schedule must decrease to a small positive value")
    gammas = np.linspace(g0, g1, sweeps)
    if beta_schedule is None:
        betas = np.full(sweeps, problem.beta)
    elif np.ndim(beta_schedule) == 0:
        betas = np.full(sweeps, float(beta_schedule))
    else:
        betas = np.linspace(*beta_schedule, sweeps)
    r = problem.replicas
    a = betas / r
    b = np.array([trotter_coupling(bt, gt, r) for bt, gt in zip(betas, gammas)])
    W, h = _replica_blocks(problem)
    lattice = IsingModel(W, h, 1.0, BIPOLAR)
    s = np.where(backend.uniforms(lattice.n) < 0.5, 1, -1).astype(np.int64)
    run_gibbs(lattice, s, a, backend, thin=sweeps, second=(_replica_ring(problem.n, r), b))
    state = majority_vote(s.reshape(r, problem.n))
    return state, energy(problem.classical_model(), state)


def load_tfim_config(path: str | Path) -> dict:
    """TFIM run settings from JSON.

    Keys: ``n``, ``edges`` (list of ``[i, j, J_ij]``), ``gamma``, ``beta``,
    ``replicas``, optional ``bias`` (list), ``gamma_schedule`` and
    ``beta_schedule`` (``[start, end]``), ``periodic`` (bool) and
    ``max_separation``.
    """
    return json.loads(Path(path).read_text())


def problem_from_config(cfg: dict) -> TfimProblem:
    n = int(cfg["n"])
    J = np.zeros((n, n))
    for i, j, w in cfg.get("edges", []):
        J[i, j] += w
        J[j, i] += w
    return TfimProblem(J, float(cfg["gamma"]), float(cfg["beta"]), int(cfg["replicas"]),
                       np.asarray(cfg.get("bias", np.zeros(n)), dtype=float))

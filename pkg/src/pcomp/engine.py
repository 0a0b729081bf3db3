"""RNG -> kernel -> data-collector pipeline.

A kernel receives the freshly sampled p-bit vector together with its own
state, and deterministically returns the inputs for the next p-bit sample,
an observable record and its updated state. One kernel step is one clock
cycle; all randomness flows through the backend.
"""

from __future__ import annotations

import copy
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .rng import PBitVector, RngBackend, make_backend, pbit_array_sample, split_seed

DEFAULT_SEED = 20220117

StepFn = Callable[[PBitVector, Any], "tuple[np.ndarray, Sequence[float], Any]"]


@dataclass
class Kernel:
    """Deterministic feedback kernel driven by an ``n_pbits`` p-bit array."""

    step: StepFn
    initial_inputs: np.ndarray
    observables: tuple[str, ...]
    initial_state: Any = None

    def __post_init__(self):
        self.initial_inputs = np.asarray(self.initial_inputs, dtype=np.float64)
        self.observables = tuple(self.observables)
        if self.initial_inputs.ndim != 1 or len(self.initial_inputs) == 0:
            raise ValueError("kernel needs at least one p-bit")
        if not self.observables:
            raise ValueError("kernel must declare at least one observable")

    @property
    def n_pbits(self) -> int:
        return len(self.initial_inputs)


@dataclass(frozen=True)
class RunConfig:
    n_samples: int
    n_chains: int = 1
    burn_in: int = 0
    thinning: int = 1
    master_seed: int = DEFAULT_SEED
    backend: str = "longperiod"

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    @property
    def n_steps(self) -> int:
        return self.burn_in + self.n_samples * self.thinning

    def chain_seed(self, index: int) -> int:
        return split_seed(self.master_seed, index)

    def chain_backend(self, index: int) -> RngBackend:
        return make_backend(self.backend, self.chain_seed(index))


@dataclass
class SampleStats:
    """Running count, mean and sum of squared deviations per observable."""

    names: tuple[str, ...]
    count: int = 0
    mean: np.ndarray = None
    m2: np.ndarray = None
    histogram: Counter | None = None

    def __post_init__(self):
        self.names = tuple(self.names)
        k = len(self.names)
        self.mean = np.zeros(k) if self.mean is None else np.asarray(self.mean, dtype=float)
        self.m2 = np.zeros(k) if self.m2 is None else np.asarray(self.m2, dtype=float)

    @classmethod
    def from_samples(cls, names, samples, histogram: bool = False) -> "SampleStats":
        x = np.asarray(samples, dtype=np.float64).reshape(-1, len(names))
        n = len(x)
        if n == 0:
            return cls(names, histogram=Counter() if histogram else None)
        mean = x.mean(axis=0)
        m2 = ((x - mean) ** 2).sum(axis=0)
        hist = Counter(map(tuple, x.tolist())) if histogram else None
        return cls(names, n, mean, m2, hist)

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.full(len(self.names), np.nan)
        return self.m2 / (self.count - 1)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(self.variance / self.count)

    def __getitem__(self, name: str) -> float:
        return float(self.mean[self.names.index(name)])


class SchemaMismatchError(ValueError):
    pass


def merge(a: SampleStats, b: SampleStats) -> SampleStats:
    """Combine statistics of two disjoint streams (pairwise update)."""
    if a.names != b.names:
        raise SchemaMismatchError(f"cannot merge {a.names} with {b.names}")
    hist = None
    if a.histogram is not None or b.histogram is not None:
        hist = Counter(a.histogram or {}) + Counter(b.histogram or {})
    if b.count == 0:
        return SampleStats(a.names, a.count, a.mean.copy(), a.m2.copy(), hist)
    if a.count == 0:
        return SampleStats(b.names, b.count, b.mean.copy(), b.m2.copy(), hist)
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = (a.count * a.mean + b.count * b.mean) / n
    m2 = a.m2 + b.m2 + delta**2 * (a.count * b.count / n)
    return SampleStats(a.names, n, mean, m2, hist)


class KernelStepError(RuntimeError):
    """A kernel step failed; the trace recorded so far is attached and invalid."""

    def __init__(self, step: int, partial_trace: np.ndarray, cause: BaseException):
        super().__init__(f"kernel step {step} failed: {cause!r}")
        self.step = step
        self.partial_trace = partial_trace
        self.valid = False


class ParallelRunError(RuntimeError):
    def __init__(self, failures: dict[int, BaseException]):
        self.failures = failures
        super().__init__(f"chains {sorted(failures)} failed")


def run_chain(
    kernel: Kernel, config: RunConfig, backend: RngBackend, histogram: bool = False
) -> tuple[SampleStats, np.ndarray]:
    """Iterate the sample -> kernel feedback loop and record observables.

    Runs ``burn_in + n_samples * thinning`` steps and keeps the observable of
    every ``thinning``-th step after burn-in, the last step included.
    """
    inputs = kernel.initial_inputs
    state = copy.deepcopy(kernel.initial_state)
    trace = np.empty((config.n_samples, len(kernel.observables)))
    kept = 0
    for t in range(config.n_steps):
        try:
            pbits = pbit_array_sample(inputs, backend)
            inputs, record, state = kernel.step(pbits, state)
        except Exception as exc:
            raise KernelStepError(t, trace[:kept].copy(), exc) from exc
        since = t - config.burn_in + 1
        if since > 0 and since % config.thinning == 0:
            trace[kept] = record
            kept += 1
    return SampleStats.from_samples(kernel.observables, trace, histogram), trace


def run_parallel(
    kernel: Kernel, config: RunConfig, max_workers: int | None = None, histogram: bool = False
) -> tuple[SampleStats, list[np.ndarray]]:
    """Run ``n_chains`` independent chains on split seeds and merge them.

    Results do not depend on ``max_workers``; chains are merged in index order.
    """

    def one(i):
        return run_chain(kernel, config, config.chain_backend(i), histogram)

    indices = range(config.n_chains)
    results: dict[int, Any] = {}
    failures: dict[int, BaseException] = {}
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            futures = {i: pool.submit(one, i) for i in indices}
        for i, fut in futures.items():
            exc = fut.exception()
            if exc is None:
                results[i] = fut.result()
            else:
                failures[i] = exc
    else:
        for i in indices:
            try:
                results[i] = one(i)
            except Exception as exc:
                failures[i] = exc
    if failures:
        raise ParallelRunError(failures)
    stats = SampleStats(kernel.observables, histogram=Counter() if histogram else None)
    for i in indices:
        stats = merge(stats, results[i][0])
    return stats, [results[i][1] for i in indices]


@dataclass(frozen=True)
class ThroughputReport:
    n_chains: int
    n_samples: int
    elapsed: float
    clock_hz: float | None = None

    @property
    def total_samples(self) -> int:
        return self.n_chains * self.n_samples

    @property
    def samples_per_sec(self) -> float:
        return self.n_chains * self.n_samples / self.elapsed

    @property
    def ideal_rate(self) -> float | None:
        """Ideal N_p * f_c rate for one sample per unit per clock cycle."""
        if self.clock_hz is None:
            return None
        return self.n_chains * self.clock_hz

    def lines(self) -> list[str]:
        out = [
            f"total_samples={self.total_samples}",
            # full precision so the printed rate is exactly total / elapsed
            f"elapsed_s={self.elapsed!r}",
            f"samples_per_sec={self.samples_per_sec!r}",
        ]
        if self.clock_hz is not None:
            out.append(
                f"ideal_samples_per_sec={self.ideal_rate:.6g} "
                f"(N_p={self.n_chains} x f_c={self.clock_hz:.6g} Hz)"
            )
        return out

    def __str__(self) -> str:
        return "\n".join(self.lines())


def throughput_report(elapsed: float, config: RunConfig, clock_hz: float | None = None) -> ThroughputReport:
    if not elapsed > 0:
        raise ValueError("elapsed time must be positive")
    return ThroughputReport(config.n_chains, config.n_samples, float(elapsed), clock_hz)


def integrated_autocorrelation(x, window: float = 5.0) -> float:
    """Integrated autocorrelation time of a scalar series, in steps.

    Uses the FFT autocorrelation and the self-consistent window ``M >= window * tau``.
    Returns 1 for a constant series.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two points")
    x = x - x.mean()
    f = np.fft.rfft(x, 2 * n)
    ac = np.fft.irfft(f * np.conj(f))[:n]
    if ac[0] <= 0:
        return 1.0
    ac /= ac[0]
    tau = 1.0
    for m in range(1, n):
        tau += 2.0 * ac[m]
        if m >= window * tau:
            break
    return max(tau, 1.0)


def identity_kernel(n_pbits: int = 1) -> Kernel:
    """Fair-coin kernel: inputs stay zero, the observable is the first bit."""
    zeros = np.zeros(n_pbits)

    def step(pbits, state):
        return zeros, (float(pbits.outputs[0]),), state

    return Kernel(step, zeros, ("bit0",))

"""Probabilistic-bit sampling kernels.

Submodules:

- ``rng``: uniform sources (LFSR, xoshiro256**, Philox) and the p-bit rule
- ``engine``: chain driver, statistics, parallel chains, throughput accounting
- ``integrate``: importance-sampled sums
- ``bayes``: Bayesian networks and ancestral sampling
- ``knapsack``: multiple-try Metropolis for 0/1 knapsack
- ``ising``: Ising models, Gibbs and Metropolis samplers, annealing
- ``qmc``: Feynman path sampling and Suzuki-Trotter TFIM sampling
"""

__version__ = "0.1.0"

from .rng import make_backend, pbit_sample, sigmoid, split_seed  # noqa: E402
from .engine import Kernel, RunConfig, run_chain, run_parallel  # noqa: E402

__all__ = [
    "__version__",
    "make_backend",
    "pbit_sample",
    "sigmoid",
    "split_seed",
    "Kernel",
    "RunConfig",
    "run_chain",
    "run_parallel",
]

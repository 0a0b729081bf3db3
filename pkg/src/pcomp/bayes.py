"""Bayesian networks of binary nodes sampled ancestrally on p-bits.

Each node holds a conditional probability table (CPT) with one row per
configuration of its parents. Row ``k`` gives ``P(node = 1)`` when parent
``j`` (in the node's declared parent order) has bit ``(k >> j) & 1``; the
first parent is the least significant bit.

Sampling a node with ``P = P(node = 1 | parents)`` is the p-bit rule with
input ``logit(P)``; it is evaluated as ``u < P`` so that rows equal to 0 or 1
give clamped bits without an infinite input.
"""

from __future__ import annotations

import graphlib
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .rng import RngBackend

MAX_PARENTS = 16
MAX_EXACT_NODES = 20


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    node: str | None
    message: str

    def __str__(self) -> str:
        where = f"[{self.node}] " if self.node is not None else ""
        return f"{self.kind}: {where}{self.message}"


class InvalidNetworkError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(map(str, diagnostics)))


class UndefinedCorrelationError(ValueError):
    """One of the queried nodes never varied in the sample."""


@dataclass
class BayesNet:
    nodes: list[str]
    parents: dict[str, tuple[str, ...]]
    cpt: dict[str, np.ndarray]
    generation: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = list(self.nodes)
        self.parents = {v: tuple(self.parents.get(v, ())) for v in self.nodes}
        self.cpt = {v: np.atleast_1d(np.asarray(p, dtype=np.float64)) for v, p in self.cpt.items()}

    @cached_property
    def order(self) -> list[str]:
        """Topological order; ties broken by declaration order."""
        sorter = graphlib.TopologicalSorter()
        for v in self.nodes:
            sorter.add(v, *self.parents[v])
        sorter.prepare()
        rank = {v: i for i, v in enumerate(self.nodes)}
        order = []
        while sorter.is_active():
            ready = sorted(sorter.get_ready(), key=rank.__getitem__)
            order.extend(ready)
            sorter.done(*ready)
        return order

    def index(self, node: str) -> int:
        try:
            return self.nodes.index(node)
        except ValueError:
            raise KeyError(f"unknown node {node!r}") from None

    def edges(self) -> list[tuple[str, str]]:
        return [(p, v) for v in self.nodes for p in self.parents[v]]


def validate(net: BayesNet) -> list[Diagnostic]:
    """Return structural problems of ``net``; an empty list means valid."""
    out: list[Diagnostic] = []
    known = set(net.nodes)
    if len(known) != len(net.nodes):
        out.append(Diagnostic("duplicate", None, "node names must be unique"))
    for v in net.nodes:
        ps = net.parents.get(v, ())
        missing = [p for p in ps if p not in known]
        if missing:
            out.append(Diagnostic("unknown-parent", v, f"parents {missing} are not nodes"))
        if v in ps:
            out.append(Diagnostic("cycle", v, "node is its own parent"))
        if len(set(ps)) != len(ps):
            out.append(Diagnostic("duplicate", v, "repeated parent"))
        if len(ps) > MAX_PARENTS:
            out.append(Diagnostic("too-many-parents", v, f"{len(ps)} > {MAX_PARENTS}"))
            continue
        table = net.cpt.get(v)
        if table is None:
            out.append(Diagnostic("missing-cpt", v, "no conditional probability table"))
            continue
        if table.shape != (2 ** len(ps),):
            out.append(
                Diagnostic("cpt-size", v, f"expected {2 ** len(ps)} rows, got {table.size}")
            )
        if not np.all(np.isfinite(table)) or np.any((table < 0) | (table > 1)):
            out.append(Diagnostic("cpt-range", v, f"probabilities must lie in [0, 1]: {table}"))
    for v in net.cpt:
        if v not in known:
            out.append(Diagnostic("unknown-node", v, "CPT given for an undeclared node"))
    if not any(d.kind == "unknown-parent" for d in out):
        try:
            net.__dict__.pop("order", None)
            net.order
        except graphlib.CycleError as exc:
            cycle = exc.args[1]
            out.append(Diagnostic("cycle", None, "cyclic graph: " + " -> ".join(cycle)))
    return out


def _require_valid(net: BayesNet) -> None:
    diags = validate(net)
    if diags:
        raise InvalidNetworkError(diags)


def sample_many(net: BayesNet, n_samples: int, backend: RngBackend) -> np.ndarray:
    """Draw ``n_samples`` full assignments, shape ``(n_samples, len(nodes))``.

    Uniforms are consumed sample by sample, and within a sample one per node
    in topological order.
    """
    _require_valid(net)
    order = net.order
    pos = {v: i for i, v in enumerate(order)}
    u = backend.uniforms(n_samples * len(order)).reshape(n_samples, len(order))
    bits = np.zeros((n_samples, len(net.nodes)), dtype=np.int8)
    for v in order:
        row = np.zeros(n_samples, dtype=np.int64)
        for j, p in enumerate(net.parents[v]):
            row |= bits[:, net.index(p)].astype(np.int64) << j
        bits[:, net.index(v)] = u[:, pos[v]] < net.cpt[v][row]
    return bits


def ancestral_sample(net: BayesNet, backend: RngBackend) -> dict[str, int]:
    """One joint assignment of every node."""
    bits = sample_many(net, 1, backend)[0]
    return {v: int(b) for v, b in zip(net.nodes, bits)}


def pearson_pm1(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation of bits mapped to +-1 (``s -> 2s - 1``)."""
    x = 2.0 * np.asarray(x, dtype=np.float64) - 1.0
    y = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = (dx * dx).sum(), (dy * dy).sum()
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation undefined: a node never varied")
    return float((dx * dy).sum() / np.sqrt(sxx * syy))


def estimate_correlation(
    net: BayesNet, a: str, b: str, n_samples: int, backend: RngBackend
) -> float:
    """Sampled correlation of nodes ``a`` and ``b``.

    Every node is sampled; unobserved nodes are never summed over, so the
    cost is O(n_samples * nodes) whichever pair is queried.
    """
    ia, ib = net.index(a), net.index(b)
    bits = sample_many(net, n_samples, backend)
    return pearson_pm1(bits[:, ia], bits[:, ib])


def running_correlation(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Correlation of the first ``t`` samples for every ``t`` (nan while undefined)."""
    x = 2.0 * np.asarray(x, dtype=np.float64) - 1.0
    y = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    t = np.arange(1, len(x) + 1)
    mx, my = np.cumsum(x) / t, np.cumsum(y) / t
    cxy = np.cumsum(x * y) / t - mx * my
    vx = 1.0 - mx**2
    vy = 1.0 - my**2
    with np.errstate(invalid="ignore", divide="ignore"):
        r = cxy / np.sqrt(vx * vy)
    r[(vx <= 1e-15) | (vy <= 1e-15)] = np.nan
    return r


# ---------------------------------------------------------------------------
# exact enumeration


def exact_joint(net: BayesNet) -> tuple[np.ndarray, np.ndarray]:
    """All ``2**n`` assignments and their probabilities, by brute force.

    Returns ``(states, probs)`` with ``states[k]`` in node order.
    """
    _require_valid(net)
    n = len(net.nodes)
    if n > MAX_EXACT_NODES:
        raise ValueError(f"refusing exact enumeration of {n} > {MAX_EXACT_NODES} nodes")
    states = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int8).reshape(-1, n)
    probs = np.ones(len(states))
    for v in net.nodes:
        row = np.zeros(len(states), dtype=np.int64)
        for j, p in enumerate(net.parents[v]):
            row |= states[:, net.index(p)].astype(np.int64) << j
        p1 = net.cpt[v][row]
        probs *= np.where(states[:, net.index(v)] == 1, p1, 1.0 - p1)
    return states, probs


def exact_correlation(net: BayesNet, a: str, b: str) -> float:
    states, probs = exact_joint(net)
    x = 2.0 * states[:, net.index(a)] - 1.0
    y = 2.0 * states[:, net.index(b)] - 1.0
    mx, my = probs @ x, probs @ y
    cov = probs @ (x * y) - mx * my
    vx, vy = 1.0 - mx**2, 1.0 - my**2
    if vx <= 0 or vy <= 0:
        raise UndefinedCorrelationError("correlation undefined: a node is deterministic")
    return float(cov / np.sqrt(vx * vy))


def exact_marginals(net: BayesNet) -> np.ndarray:
    states, probs = exact_joint(net)
    return probs @ states


# ---------------------------------------------------------------------------
# family trees


@dataclass(frozen=True)
class FamilyTreeSpec:
    """Layered family tree.

    Generation 0 holds ``founders`` unrelated individuals. Every later
    generation is formed from couples of the previous one:

    * ``pairing="married_in"``: each individual of the previous generation
      marries a new unrelated founder and has ``children`` children.
    * ``pairing="adjacent"``: individuals ``2j`` and ``2j + 1`` of the
      previous generation (after a one-place rotation for ``g >= 2`` so that
      siblings do not pair) form a couple with ``children`` children.
    """

    generations: int
    founders: int = 1
    children: int = 1
    pairing: str = "married_in"

    def __post_init__(self):
        if self.generations < 1:
            raise ValueError("need at least one generation")
        if self.founders < 1 or self.children < 1:
            raise ValueError("founders and children must be positive")
        if self.pairing not in ("married_in", "adjacent"):
            raise ValueError(f"unknown pairing rule {self.pairing!r}")
        if self.pairing == "adjacent" and self.generations > 1 and self.founders % 2:
            raise ValueError("adjacent pairing needs an even number of founders")


INHERIT_CPT = np.array([0.0, 0.5, 0.5, 1.0])


def build_family_tree(spec: FamilyTreeSpec) -> BayesNet:
    """Founders are fair coins; a child copies a uniformly chosen parent.

    With parents ``m`` and ``f`` the CPT is ``P(child = 1) = (m + f) / 2``.
    """
    nodes: list[str] = []
    parents: dict[str, tuple[str, ...]] = {}
    cpt: dict[str, np.ndarray] = {}
    generation: dict[str, int] = {}

    def add(name, gen, ps=()):
        nodes.append(name)
        parents[name] = tuple(ps)
        cpt[name] = INHERIT_CPT.copy() if ps else np.array([0.5])
        generation[name] = gen

    current = [f"g0_{j}" for j in range(spec.founders)]
    for name in current:
        add(name, 0)
    for g in range(1, spec.generations):
        couples = []
        if spec.pairing == "married_in":
            for j, person in enumerate(current):
                spouse = f"s{g - 1}_{j}"
                add(spouse, g - 1)
                couples.append((person, spouse))
        else:
            people = current if g == 1 else current[1:] + current[:1]
            couples = list(zip(people[0::2], people[1::2]))
        nxt = []
        for c, (m, f) in enumerate(couples):
            for k in range(spec.children):
                name = f"g{g}_{c * spec.children + k}"
                add(name, g, (m, f))
                nxt.append(name)
        current = nxt
    return BayesNet(nodes, parents, cpt, generation)


def lineage(net: BayesNet, node: str) -> list[str]:
    """Ancestors of ``node`` along first parents, nearest first."""
    out = []
    while net.parents[node]:
        node = net.parents[node][0]
        out.append(node)
    return out


# ---------------------------------------------------------------------------
# text format
#
#   [nodes]
#   a
#   b
#   [edges]
#   a b            # parent child
#   [cpt]
#   a = 0.5
#   b = 0.1 0.9    # rows indexed by parent bits, first parent least significant


def parse_net(text: str) -> BayesNet:
    section = None
    nodes: list[str] = []
    parents: dict[str, list[str]] = {}
    cpt: dict[str, np.ndarray] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("nodes", "edges", "cpt"):
                raise ValueError(f"line {lineno}: unknown section [{section}]")
            continue
        if section == "nodes":
            nodes.extend(line.split())
        elif section == "edges":
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'parent child'")
            parents.setdefault(parts[1], []).append(parts[0])
        elif section == "cpt":
            name, _, rest = line.partition("=")
            if not rest:
                raise ValueError(f"line {lineno}: expected 'node = p0 p1 ...'")
            cpt[name.strip()] = np.array([float(x) for x in rest.split()])
        else:
            raise ValueError(f"line {lineno}: content outside a section")
    return BayesNet(nodes, {k: tuple(v) for k, v in parents.items()}, cpt)


def format_net(net: BayesNet) -> str:
    lines = ["[nodes]", *net.nodes, "[edges]"]
    lines += [f"{p} {c}" for p, c in net.edges()]
    lines.append("[cpt]")
    for v in net.nodes:
        lines.append(f"{v} = " + " ".join(repr(float(x)) for x in net.cpt[v]))
    return "\n".join(lines) + "\n"


def load_net(path: str | Path) -> BayesNet:
    return parse_net(Path(path).read_text())

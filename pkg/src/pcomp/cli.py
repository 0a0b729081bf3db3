"""``pcomp`` command-line front end.

Every subcommand writes CSV (or whitespace-separated ``plain``) records
preceded by ``#`` comment lines carrying the tool version, the seed and a
hash of the run configuration. Data rows depend only on argv and the seed;
anything timing-related goes to comment lines.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .engine import DEFAULT_SEED, RunConfig, identity_kernel, run_parallel, throughput_report
from .rng import BACKEND_KINDS

SEED_ENV = "PCOMP_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser whose errors are a single diagnostic line."""

    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    try:
        value = int(float(text)) if "e" in text.lower() else int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def default_seed() -> int:
    """``$PCOMP_SEED`` when set, otherwise the fixed default."""
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return DEFAULT_SEED
    try:
        return _seed(env)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"{SEED_ENV}: {exc}") from None


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("run options")
    g.add_argument("--seed", type=_seed, default=None,
                   help=f"master seed (default: ${SEED_ENV} or {DEFAULT_SEED})")
    g.add_argument("--samples", type=_positive_int, default=None, help="number of kept samples")
    g.add_argument("--chains", type=_positive_int, default=1, help="independent chains")
    g.add_argument("--burn-in", type=_nonneg_int, default=0, help="steps discarded first")
    g.add_argument("--thin", type=_positive_int, default=1, help="keep every THIN-th step")
    g.add_argument("--backend", choices=BACKEND_KINDS, default="longperiod")
    g.add_argument("--output", "-o", default=None, help="output file (default: stdout)")
    g.add_argument("--format", choices=("csv", "plain"), default="csv")
    g.add_argument("--fc", type=float, default=None, metavar="HZ",
                   help="hypothetical clock frequency for the ideal-throughput line")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="pcomp", description="p-bit sampling kernels")
    parser.add_argument("--version", action="version", version=f"pcomp {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("integrate", parents=[common], help="importance-sampled sum")
    p.add_argument("--terms", required=True, help="file with one real term per line")
    p.add_argument("--no-exact", action="store_true", help="skip the brute-force sum")

    p = sub.add_parser("bayes", parents=[common], help="ancestral sampling of a network")
    p.add_argument("--net", required=True, help="network file")
    p.add_argument("--pair", required=True, help="two node names, 'a,b'")

    p = sub.add_parser("knapsack", parents=[common], help="multiple-try Metropolis knapsack")
    p.add_argument("--instance", required=True, help="instance file")
    p.add_argument("--k", type=_positive_int, default=8, help="tries per step")
    p.add_argument("--beta-start", type=float, default=1e-3)
    p.add_argument("--beta-end", type=float, default=10.0)

    p = sub.add_parser("ising", parents=[common], help="Gibbs sampling or annealing")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--mode", choices=("sample", "anneal"), default="sample")
    p.add_argument("--sweeps", type=_positive_int, default=None,
                   help="kept sweeps (sample) or schedule length (anneal)")
    p.add_argument("--beta-start", type=float, default=None, help="anneal start (default beta/100)")
    p.add_argument("--beta-end", type=float, default=None, help="anneal end (default model beta)")

    p = sub.add_parser("qmc", parents=[common], help="Feynman path amplitude estimate")
    p.add_argument("--circuit", required=True, help="circuit file")
    p.add_argument("--target", required=True, help="output basis state (integer or 0b...)")
    p.add_argument("--proposal", choices=("uniform", "magnitude"), default="uniform")

    p = sub.add_parser("tfim", parents=[common], help="Suzuki-Trotter TFIM sampling")
    p.add_argument("--config", required=True, help="JSON config")
    p.add_argument("--sweeps", type=_positive_int, default=None, help="kept samples (alias of --samples)")
    p.add_argument("--mode", choices=("sample", "anneal"), default="sample")

    p = sub.add_parser("bench", parents=[common], help="throughput of the chain driver")
    p.add_argument("--kernel", choices=("identity",), default="identity")
    p.add_argument("--pbits", type=_positive_int, default=1, help="p-bits in the kernel")
    return parser


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    args = build_parser().parse_args(argv)
    if args.seed is None:
        args.seed = default_seed()
    return args


def config_hash(args: argparse.Namespace) -> str:
    """Short hash of every setting that affects data rows (seed excluded)."""
    skip = {"seed", "output", "format", "fc"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    for key in ("terms", "net", "instance", "model", "circuit", "config"):
        if key in cfg:
            cfg[key + "_sha256"] = hashlib.sha256(Path(cfg[key]).read_bytes()).hexdigest()
            cfg[key] = os.path.basename(cfg[key])
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_csv(rows: Iterable[Sequence], schema: Sequence[str], path: str | None = None,
             comments: Sequence[str] = (), fmt: str = "csv") -> None:
    """Write comment lines, a header row and one line per record.

    Floats are written with ``repr`` so values round-trip exactly. ``path``
    of ``None`` or ``-`` means stdout.
    """
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(schema)
        for row in rows:
            if len(row) != len(schema):
                raise ValueError(f"record has {len(row)} fields, schema has {len(schema)}")
            w.writerow([_cell(v) for v in row])
    else:
        buf.write(" ".join(schema) + "\n")
        for row in rows:
            if len(row) != len(schema):
                raise ValueError(f"record has {len(row)} fields, schema has {len(schema)}")
            buf.write(" ".join(_cell(v) for v in row) + "\n")
    text = buf.getvalue()
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(path: str) -> tuple[list[str], list[list[str]], list[str]]:
    """Read back ``(schema, rows, comments)`` from a file written by :func:`emit_csv`."""
    comments, body = [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            comments.append(line[2:])
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return rows[0], rows[1:], comments


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _samples(args, default: int) -> int:
    return args.samples if args.samples is not None else default


# ---------------------------------------------------------------------------
# subcommands; each returns (schema, rows, extra comment lines)


def cmd_integrate(args):
    from .integrate import SumProblem, exact_sum, mc_estimate
    from .rng import make_backend

    terms = np.loadtxt(args.terms, dtype=np.float64, ndmin=1, comments="#")
    problem = SumProblem.from_terms(terms)
    n = _samples(args, 10_000)
    if n < 2:
        raise UsageError("integrate needs --samples >= 2")
    cfg = RunConfig(n, args.chains, master_seed=args.seed, backend=args.backend)
    schema = ["chain", "estimate", "stderr"] + ([] if args.no_exact else ["exact"])
    exact = None if args.no_exact else exact_sum(problem)
    rows = []
    for c in range(args.chains):
        est, err = mc_estimate(problem, n, make_backend(args.backend, cfg.chain_seed(c)))
        rows.append([c, est, err] + ([] if exact is None else [exact]))
    return schema, rows, [f"terms={problem.n_terms}"]


def cmd_bayes(args):
    from .bayes import load_net, running_correlation, sample_many

    net = load_net(args.net)
    pair = [p.strip() for p in args.pair.split(",")]
    if len(pair) != 2:
        raise UsageError("--pair takes two node names, 'a,b'")
    ia, ib = (net.index(p) for p in pair)
    n = _samples(args, 10_000)
    cfg = RunConfig(n, 1, args.burn_in, args.thin, args.seed, args.backend)
    bits = sample_many(net, cfg.burn_in + n * cfg.thinning, cfg.chain_backend(0))
    bits = bits[cfg.burn_in:][cfg.thinning - 1::cfg.thinning]
    corr = running_correlation(bits[:, ia], bits[:, ib])
    rows = [[t, "".join(map(str, b)), "" if np.isnan(c) else repr(float(c))]
            for t, (b, c) in enumerate(zip(bits, corr))]
    return ["sample", "bits", "running_correlation"], rows, [
        "nodes=" + " ".join(net.order),
        f"pair={pair[0]},{pair[1]}",
    ]


def cmd_knapsack(args):
    from .knapsack import parse_instance, solve

    inst = parse_instance(_read(args.instance))
    n = _samples(args, 100_000)
    cfg = RunConfig(n, args.chains, master_seed=args.seed, backend=args.backend)
    rows, extra = [], []
    for c in range(args.chains):
        res = solve(inst, n, cfg.chain_backend(c), k=args.k, beta_start=args.beta_start,
                    beta_end=args.beta_end)
        keep = np.arange(args.thin - 1, n, args.thin)
        if keep[-1] != n - 1:
            keep = np.append(keep, n - 1)
        rows += [[c, int(t) + 1, res.trace[t]] for t in keep]
        extra.append(f"chain={c} best_value={res.value!r} "
                     f"selection={''.join(map(str, res.selection.astype(int)))}")
    return ["chain", "step", "best_value"], rows, extra


def cmd_ising(args):
    from .ising import anneal, energies, gibbs_sample, parse_model

    model = parse_model(_read(args.model))
    n = args.sweeps or _samples(args, 1000)
    cfg = RunConfig(n, args.chains, args.burn_in, args.thin, args.seed, args.backend)
    bits = [f"s{i}" for i in range(model.n)]
    rows = []
    if args.mode == "sample":
        for c in range(args.chains):
            S = gibbs_sample(model, n, cfg.chain_backend(c), burn_in=cfg.burn_in,
                             thinning=cfg.thinning)
            E = energies(model, S)
            rows += [[c, t, *s, e] for t, (s, e) in enumerate(zip(S.tolist(), E))]
        return ["chain", "sample", *bits, "energy"], rows, [f"convention={model.convention}"]
    start = args.beta_start if args.beta_start is not None else model.beta / 100
    end = args.beta_end if args.beta_end is not None else model.beta
    for c in range(args.chains):
        state, e = anneal(model, (start, end), cfg.chain_backend(c), sweeps=n)
        rows.append([c, *state.tolist(), e])
    return ["chain", *bits, "energy"], rows, [f"schedule=geometric {start!r}->{end!r} sweeps={n}"]


def _target(text: str, n: int) -> int:
    try:
        m = int(text, 0)
    except ValueError:
        raise UsageError(f"invalid --target {text!r}") from None
    if not 0 <= m < 2**n:
        raise UsageError(f"--target {m} out of range for {n} qubits")
    return m


def cmd_qmc(args):
    from .qmc import feynman_path_sample, parse_circuit, statevector

    circ = parse_circuit(_read(args.circuit))
    m = _target(args.target, circ.n)
    n = _samples(args, 10_000)
    if n < 2:
        raise UsageError("qmc needs --samples >= 2")
    cfg = RunConfig(n, args.chains, master_seed=args.seed, backend=args.backend)
    exact = complex(statevector(circ)[m]) if circ.n <= 20 else None
    rows = []
    for c in range(args.chains):
        est = feynman_path_sample(circ, m, n, cfg.chain_backend(c), args.proposal)
        row = [c, est.amplitude.real, est.amplitude.imag, est.stderr, est.average_sign]
        if exact is not None:
            row += [exact.real, exact.imag]
        rows.append(row)
    schema = ["chain", "amplitude_re", "amplitude_im", "stderr", "average_sign"]
    if exact is not None:
        schema += ["exact_re", "exact_im"]
    return schema, rows, [f"qubits={circ.n} depth={circ.depth} target={m}"]


def cmd_tfim(args):
    from .qmc import (MAX_ORACLE_SPINS, exact_tfim_oracle, load_tfim_config, majority_vote,
                      problem_from_config, quantum_anneal, tfim_sample, zz_correlation)

    try:
        cfg_json = load_tfim_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot load {args.config}: {exc}") from None
    problem = problem_from_config(cfg_json)
    periodic = bool(cfg_json.get("periodic", False))
    n = args.sweeps or _samples(args, 1000)
    cfg = RunConfig(n, args.chains, args.burn_in, args.thin, args.seed, args.backend)
    if args.mode == "anneal":
        gs = tuple(cfg_json.get("gamma_schedule", (3.0, 0.01)))
        bs = cfg_json.get("beta_schedule")
        rows = []
        for c in range(args.chains):
            state, e = quantum_anneal(problem, n, cfg.chain_backend(c), gs,
                                      None if bs is None else tuple(bs))
            rows.append([c, *state.tolist(), e])
        return ["chain", *[f"s{i}" for i in range(problem.n)], "energy"], rows, []
    max_L = int(cfg_json.get("max_separation", problem.n - 1))
    oracle = exact_tfim_oracle(problem) if problem.n <= MAX_ORACLE_SPINS else None
    samples = [tfim_sample(problem, n, cfg.chain_backend(c), cfg.thinning, cfg.burn_in)
               for c in range(args.chains)]
    S = np.concatenate(samples)
    rows = []
    for L in range(0, min(max_L, problem.n - 1) + 1):
        row = [L, zz_correlation(S, L, periodic)]
        if oracle is not None:
            row.append(oracle.zz_at(L, periodic))
        rows.append(row)
    schema = ["L", "zz"] + (["exact_zz"] if oracle is not None else [])
    return schema, rows, [f"n={problem.n} replicas={problem.replicas} samples={len(S)}"]


def cmd_bench(args):
    n = _samples(args, 100_000)
    cfg = RunConfig(n, args.chains, args.burn_in, args.thin, args.seed, args.backend)
    kernel = identity_kernel(args.pbits)
    t0 = time.perf_counter()
    stats, _ = run_parallel(kernel, cfg)
    elapsed = time.perf_counter() - t0
    report = throughput_report(elapsed, cfg, args.fc)
    rows = [[args.kernel, cfg.n_chains, cfg.n_samples, report.total_samples,
             float(stats.mean[0])]]
    return ["kernel", "chains", "samples_per_chain", "total_samples", "mean_bit0"], rows, report.lines()


COMMANDS = {
    "integrate": cmd_integrate,
    "bayes": cmd_bayes,
    "knapsack": cmd_knapsack,
    "ising": cmd_ising,
    "qmc": cmd_qmc,
    "tfim": cmd_tfim,
    "bench": cmd_bench,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"pcomp: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse usage errors, --help, --version
        return exc.code if isinstance(exc.code, int) else 2
    try:
        schema, rows, extra = COMMANDS[args.command](args)
        header = [f"pcomp {__version__}", f"command={args.command}", f"seed={args.seed}",
                  f"backend={args.backend}", f"config={config_hash(args)}", *extra]
        emit_csv(rows, schema, args.output, header, args.format)
    except UsageError as exc:
        print(f"pcomp: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        print(f"pcomp {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

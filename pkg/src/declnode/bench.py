"""Benchmark harness and CLI.

Times forward/backward passes of the two nodes across problem sizes and
methods, and reports analytic peak workspace bytes (see
:mod:`declnode.workspace`).  Results are emitted as CSV with a fixed
header.

Accounting model: the forward measurement includes the tensors the node
retains for its backward pass (input and output caches), since that is
how memory is actually consumed at training time; closed-form forwards
would otherwise report near-zero workspace and forward/backward
comparisons would be meaningless.  The backward measurement covers the
backward's own transients only.  For the ``unrolled`` method the backward
includes re-running the forward recurrence with its tape, because that
storage exists only to serve the backward.

Timings are wall-clock medians over ``repeats`` runs after one untimed
warm-up; the memory pass runs separately so tracking overhead never
pollutes the timings.  Instance generation is seeded and deterministic:
pooling draws standard normal points, transport draws uniform [0, 1)
costs with exactly uniform marginals.  The pooling penalty scale is tied
to the feature dimension (alpha = sqrt(m)) so distances of standard
normal points fall in the penalty's working range at every size.
"""

from __future__ import annotations

import argparse
import io
import statistics
import sys
import time
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from . import workspace
from .backend import active_backend, use_backend
from .errors import BenchConfigError, DeclnodeError
from .gradcheck import fd_vjp
from .penalties import PENALTY_FAMILIES, PenaltyKind
from .robust_pool import pool_backward, pool_forward, pool_jacobian_naive
from .sinkhorn_ot import TransportProblem, ot_backward, ot_forward
from .workspace import track as track_workspace  # noqa: F401  (public API)

__all__ = [
    "CSV_HEADER",
    "NODE_METHODS",
    "BenchConfig",
    "BenchRecord",
    "generate_instance",
    "run_bench",
    "write_csv",
    "track_workspace",
    "main",
]

NODE_METHODS = {
    "pooling": ("structured", "naive-jacobian", "fd"),
    "ot": ("structured", "full-inverse", "unrolled", "fd"),
}

CSV_HEADER = (
    "node,method,penalty,gamma,batch,m,n,iterations,repeats,seed,"
    "time_forward_ns,time_backward_ns,peak_bytes_forward,peak_bytes_backward,"
    "converged"
)

# Defaults for float64; float32 benchmark mode uses tolerances near that
# precision's attainable floor instead of burning the iteration cap.
_POOL_FORWARD_TOL = 1e-10
_POOL_FORWARD_TOL_F32 = 1e-4
_OT_FORWARD_TOL = 1e-9
_OT_FORWARD_TOL_F32 = 1e-6


@dataclass(frozen=True)
class BenchConfig:
    node: str
    method: str
    penalty: Optional[str] = None
    gamma: Optional[float] = None
    batch: int = 1
    m: int = 32
    n: int = 64
    iterations: int = 0  # 0 = run to tolerance; > 0 = fixed iteration budget
    repeats: int = 3
    seed: int = 0
    out_path: Optional[str] = None
    log_domain: bool = False
    float32: bool = False
    parallel_batch: bool = False

    def validate(self) -> None:
        if self.node not in NODE_METHODS:
            raise BenchConfigError(f"unknown node {self.node!r}")
        if self.method not in NODE_METHODS[self.node]:
            raise BenchConfigError(
                f"method {self.method!r} is not valid for node {self.node!r}; "
                f"choose from {NODE_METHODS[self.node]}"
            )
        if self.node == "pooling":
            if self.penalty not in PENALTY_FAMILIES:
                raise BenchConfigError(
                    f"penalty must be one of {PENALTY_FAMILIES}, got {self.penalty!r}"
                )
        else:
            if self.gamma is None or not self.gamma > 0:
                raise BenchConfigError("gamma must be positive for the ot node")
        for name in ("batch", "m", "n", "repeats"):
            if getattr(self, name) < 1:
                raise BenchConfigError(f"{name} must be at least 1")
        if self.iterations < 0:
            raise BenchConfigError("iterations must be non-negative")


@dataclass
class BenchRecord:
    node: str
    method: str
    penalty: Optional[str]
    gamma: Optional[float]
    batch: int
    m: int
    n: int
    iterations: int
    repeats: int
    seed: int
    time_forward_ns: int
    time_backward_ns: int
    peak_bytes_forward: int
    peak_bytes_backward: int
    converged: bool


def generate_instance(cfg: BenchConfig) -> dict:
    """Deterministic benchmark instance for a config (timings excluded,
    everything downstream of the same seed is bit-reproducible)."""
    rng = np.random.default_rng(cfg.seed)
    dtype = np.float32 if cfg.float32 else np.float64
    b, m, n = cfg.batch, cfg.m, cfg.n
    if cfg.node == "pooling":
        return {
            "x": rng.standard_normal((b, m, n)).astype(dtype),
            "v": rng.standard_normal((b, m)).astype(dtype),
        }
    return {
        "M": rng.random((b, m, n)).astype(dtype),
        "r": np.full((b, m), 1.0 / m, dtype=dtype),
        "c": np.full((b, n), 1.0 / n, dtype=dtype),
        "dJdP": rng.standard_normal((b, m, n)).astype(dtype),
    }


def _batch_map(fn, b: int, parallel: bool):
    if not parallel or b == 1:
        return [fn(bi) for bi in range(b)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=min(b, 8)) as pool:
        return list(pool.map(fn, range(b)))


class _PoolingNode:
    def __init__(self, cfg: BenchConfig, inst: dict):
        self.cfg = cfg
        self.x = inst["x"]
        self.v = inst["v"]
        self.kind = PenaltyKind(cfg.penalty, alpha=float(np.sqrt(cfg.m)))
        self.max_iter = cfg.iterations if cfg.iterations > 0 else 500
        self.tol = _POOL_FORWARD_TOL_F32 if cfg.float32 else _POOL_FORWARD_TOL
        self.result = None
        self._cache = None

    def forward(self):
        cache = workspace.alloc(self.x.shape, self.x.dtype)
        np.copyto(cache, self.x)

        def solve_one(bi):
            return pool_forward(
                self.x[bi : bi + 1], self.kind,
                tol=self.tol, max_iter=self.max_iter,
            )

        parts = _batch_map(solve_one, self.cfg.batch, self.cfg.parallel_batch)
        self.result = parts
        self._cache = cache

    @property
    def converged(self) -> bool:
        return all(bool(p.converged.all()) for p in self.result)

    def _y(self, bi):
        return self.result[bi].y

    def backward(self):
        method = self.cfg.method

        def one(bi):
            xs = self.x[bi : bi + 1]
            ys = self._y(bi)
            vs = self.v[bi : bi + 1]
            if method == "structured":
                return pool_backward(xs, ys, self.kind, vs)
            if method == "naive-jacobian":
                jac = pool_jacobian_naive(xs, ys, self.kind)
                return np.einsum("bi,bikj->bkj", vs, jac)
            # finite differences over the flattened batch element
            m, n = self.cfg.m, self.cfg.n

            def fwd(flat):
                res = pool_forward(
                    flat.reshape(1, m, n), self.kind,
                    tol=self.tol, max_iter=self.max_iter,
                )
                return res.y
            return fd_vjp(fwd, xs.ravel(), vs.ravel()).reshape(1, m, n)

        return _batch_map(one, self.cfg.batch, self.cfg.parallel_batch)


class _OtNode:
    def __init__(self, cfg: BenchConfig, inst: dict):
        self.cfg = cfg
        self.inst = inst
        self.prob = TransportProblem(inst["M"], inst["r"], inst["c"], cfg.gamma)
        if cfg.iterations > 0:
            self.tol, self.max_iter = 0.0, cfg.iterations
        else:
            forward_tol = _OT_FORWARD_TOL_F32 if cfg.float32 else _OT_FORWARD_TOL
            self.tol, self.max_iter = forward_tol, 10_000
        self.plans = None
        self._cache = None

    def _sub_problem(self, bi):
        return TransportProblem(
            self.inst["M"][bi : bi + 1], self.inst["r"][bi : bi + 1],
            self.inst["c"][bi : bi + 1], self.cfg.gamma,
        )

    def forward(self):
        caches = []
        for key in ("M", "r", "c"):
            buf = workspace.alloc(self.inst[key].shape, self.inst[key].dtype)
            np.copyto(buf, self.inst[key])
            caches.append(buf)

        def solve_one(bi):
            return ot_forward(
                self._sub_problem(bi), tol=self.tol, max_iter=self.max_iter,
                log_domain=self.cfg.log_domain,
            )

        self.plans = _batch_map(solve_one, self.cfg.batch, self.cfg.parallel_batch)
        self._cache = caches

    @property
    def converged(self) -> bool:
        return all(bool(p.converged.all()) for p in self.plans)

    def backward(self):
        method = {
            "structured": "structured-block",
            "full-inverse": "structured-full",
            "unrolled": "unrolled",
        }.get(self.cfg.method)

        def one(bi):
            dJdP = self.inst["dJdP"][bi : bi + 1]
            if method is not None:
                return ot_backward(self._sub_problem(bi), self.plans[bi], dJdP, method)
            m, n = self.cfg.m, self.cfg.n
            prob = self._sub_problem(bi)

            def fwd(flat):
                p = TransportProblem(
                    flat.reshape(1, m, n), prob.r, prob.c, prob.gamma
                )
                return ot_forward(p, tol=self.tol, max_iter=self.max_iter,
                                  log_domain=self.cfg.log_domain).P
            return fd_vjp(fwd, prob.M.ravel(), dJdP.ravel()).reshape(1, m, n)

        return _batch_map(one, self.cfg.batch, self.cfg.parallel_batch)


def _median_time_ns(fn, repeats: int) -> int:
    fn()  # warm-up, excluded
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - t0)
    return int(statistics.median(times))


def run_bench(cfg: BenchConfig) -> list[BenchRecord]:
    """Run one benchmark configuration and return its records."""
    cfg.validate()
    inst = generate_instance(cfg)
    node = _PoolingNode(cfg, inst) if cfg.node == "pooling" else _OtNode(cfg, inst)

    time_forward = _median_time_ns(node.forward, cfg.repeats)
    with workspace.track() as tracker:
        node.forward()
    peak_forward = tracker.peak_bytes

    time_backward = _median_time_ns(node.backward, cfg.repeats)
    with workspace.track() as tracker:
        node.backward()
    peak_backward = tracker.peak_bytes

    return [
        BenchRecord(
            node=cfg.node,
            method=cfg.method,
            penalty=cfg.penalty,
            gamma=cfg.gamma,
            batch=cfg.batch,
            m=cfg.m,
            n=cfg.n,
            iterations=cfg.iterations,
            repeats=cfg.repeats,
            seed=cfg.seed,
            time_forward_ns=time_forward,
            time_backward_ns=time_backward,
            peak_bytes_forward=peak_forward,
            peak_bytes_backward=peak_backward,
            converged=node.converged,
        )
    ]


def _format_field(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return np.format_float_positional(value, trim="-")
    return str(value)


def write_csv(records, path) -> None:
    """Write records with the fixed header; ``path`` may be a file object."""
    if not records:
        raise ValueError("no records to write")
    lines = [CSV_HEADER]
    for rec in records:
        lines.append(",".join(_format_field(getattr(rec, f.name)) for f in fields(BenchRecord)))
    text = "\n".join(lines) + "\n"
    if isinstance(path, io.IOBase) or hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 on config errors, not argparse's 2
        raise BenchConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="declnode-bench",
        description="Time/memory benchmarks for the pooling and transport nodes.",
    )
    parser.add_argument("--node", required=True, choices=sorted(NODE_METHODS))
    parser.add_argument(
        "--method", default="structured",
        help="backward method, or a comma-separated list of methods "
        "(pooling: structured, naive-jacobian, fd; "
        "ot: structured, full-inverse, unrolled, fd)",
    )
    parser.add_argument(
        "--penalty", default="quadratic",
        help="pooling penalty family; its scale is tied to the feature "
        f"dimension (alpha = sqrt(m)); one of {', '.join(PENALTY_FAMILIES)}",
    )
    parser.add_argument(
        "--gamma", type=float, default=10.0,
        help="transport regularization strength; the entropy term is divided "
        "by gamma, so larger gamma means weaker regularization and a "
        "sharper plan",
    )
    parser.add_argument("--batch", type=int, default=1)
    parser.add_argument("--m", type=int, default=32)
    parser.add_argument("--n", type=int, default=64)
    parser.add_argument(
        "--iterations", type=int, default=0,
        help="fixed forward iteration budget; 0 runs to tolerance "
        "(pooling 1e-10 gradient, ot 1e-9 marginal residual)",
    )
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help="CSV output path (default: stdout)")
    parser.add_argument("--log-domain", action="store_true",
                        help="force log-domain Sinkhorn updates")
    parser.add_argument("--float32", action="store_true",
                        help="generate float32 instances (benchmark mode only; "
                        "accuracy contracts assume float64)")
    parser.add_argument("--parallel-batch", action="store_true",
                        help="process batch elements in parallel threads; "
                        "timings then measure throughput, not latency")
    parser.add_argument("--backend", default="auto", choices=("auto", "ext", "python"),
                        help="kernel backend to benchmark (default: compiled "
                        "extension when available)")
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        methods = [mth.strip().lower() for mth in args.method.split(",") if mth.strip()]
        if not methods:
            raise BenchConfigError("no method given")
        penalty = args.penalty.strip().lower()
        records = []
        with use_backend(args.backend):
            for method in methods:
                cfg = BenchConfig(
                    node=args.node,
                    method=method,
                    penalty=penalty if args.node == "pooling" else None,
                    gamma=args.gamma if args.node == "ot" else None,
                    batch=args.batch,
                    m=args.m,
                    n=args.n,
                    iterations=args.iterations,
                    repeats=args.repeats,
                    seed=args.seed,
                    out_path=args.out,
                    log_domain=args.log_domain,
                    float32=args.float32,
                    parallel_batch=args.parallel_batch,
                )
                records.extend(run_bench(cfg))
        write_csv(records, args.out if args.out else sys.stdout)
    except BenchConfigError as exc:
        print(f"declnode-bench: error: {exc}", file=sys.stderr)
        return 1
    except DeclnodeError as exc:
        print(f"declnode-bench: solver failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

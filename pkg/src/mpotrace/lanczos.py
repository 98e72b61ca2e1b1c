"""Global block Lanczos over the Hilbert-Schmidt inner product.

The three-term recurrence treats whole MPOs as vectors. It produces the
symmetric tridiagonal projection of a Hermitian input operator onto the
Krylov subspace built from a positive starting block, and the Gauss
quadrature rule induced by that projection: nodes are the eigenvalues of the
tridiagonal matrix, weights the squared first eigenvector components scaled
by the squared starting norm. Evaluating a scalar function on the rule
approximates trace[sqrt(B) f(A) sqrt(B)^dag].
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import mpo, tensor

_RUN_MAGIC = b"LRUN"
_RUN_FORMAT_VERSION = 1

# Dense Hermiticity spot-check is affordable up to this chain length.
_HERMITICITY_CHECK_MAX_L = 6


class NumericalError(RuntimeError):
    """Raised when an iteration or evaluation produces invalid values."""


@dataclass(frozen=True)
class StopRule:
    """Early-termination criterion checked once per iteration.

    kind "relative-change": stop once the quadrature estimate for ``probe``
    changes by less than ``tolerance`` (relatively) for ``consecutive``
    iterations in a row. kind "node-range": same, tracking the relative
    stagnation of the extreme quadrature nodes instead.
    """

    kind: str
    tolerance: float
    probe: object = None
    consecutive: int = 3

    def __post_init__(self):
        if self.kind not in ("relative-change", "node-range"):
            raise ValueError(f"unknown stop rule kind {self.kind!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.kind == "relative-change" and self.probe is None:
            raise ValueError("relative-change rule needs a probe function")
        if self.consecutive < 1:
            raise ValueError("consecutive must be >= 1")


@dataclass(frozen=True)
class LanczosConfig:
    k_max: int
    d_max: int
    breakdown_tol: float = 1e-12  # relative to the starting norm
    reorthogonalize: bool = False
    stop_rules: tuple = ()

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.d_max < 1:
            raise ValueError("d_max must be >= 1")
        if not 0.0 < self.breakdown_tol < 1.0:
            raise ValueError("breakdown_tol must lie in (0, 1)")


@dataclass(frozen=True)
class TridiagonalProjection:
    """Recurrence coefficients of T_k plus the starting-block norm beta1."""

    alphas: np.ndarray  # diagonal, length k
    betas: np.ndarray  # off-diagonal, length k-1
    beta1: float
    termination: str  # "k-max" | "breakdown" | "stop-rule"

    @property
    def k(self):
        return int(self.alphas.size)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss rule for the spectral measure seen by the starting block.

    Weights are squared first-row eigenvector components times beta1^2, hence
    non-negative by construction; their sum is beta1^2.
    """

    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class LanczosRun:
    projection: TridiagonalProjection
    quadrature: QuadratureRule
    compression_log: np.ndarray  # total discarded weight per iteration
    model_label: str = ""
    start_label: str = ""
    basis: tuple = ()  # stored U_i, only under full reorthogonalization


def quadrature_rule(projection):
    nodes, vecs = tensor.symtridiag_eig(projection.alphas, projection.betas)
    weights = projection.beta1 ** 2 * np.abs(vecs[0, :]) ** 2
    return QuadratureRule(nodes, weights)


class _StopTracker:
    def __init__(self, rule):
        self.rule = rule
        self.prev = None
        self.hits = 0

    def update(self, nodes, weights):
        if self.rule.kind == "relative-change":
            value = float(np.dot(weights, _apply_probe(self.rule.probe, nodes)))
            if self.prev is not None:
                change = abs(value - self.prev) / max(abs(value), 1e-300)
                self.hits = self.hits + 1 if change < self.rule.tolerance else 0
            self.prev = value
        else:  # node-range
            lo, hi = float(nodes[0]), float(nodes[-1])
            if self.prev is not None:
                spread = max(hi - lo, 1e-300)
                change = max(abs(lo - self.prev[0]), abs(hi - self.prev[1])) / spread
                self.hits = self.hits + 1 if change < self.rule.tolerance else 0
            self.prev = (lo, hi)
        return self.hits >= self.rule.consecutive


def _apply_probe(f, nodes):
    vals = np.asarray(f(nodes), dtype=float)
    if vals.shape != nodes.shape:
        raise ValueError("probe function must map nodes elementwise")
    return vals


def run_lanczos(a, start, cfg, model_label=""):
    """Three-term global Lanczos recurrence on MPOs.

    Per iteration: beta_i = |V_{i-1}|, U_i = V_{i-1}/beta_i,
    V_i = A U_i - beta_i U_{i-1}, alpha_i = Re<U_i, V_i>,
    V_i -= alpha_i U_i, with every product and sum capped at cfg.d_max.
    Terminates on k_max, on breakdown (beta below breakdown_tol * beta1,
    i.e. a numerically invariant subspace) or on a firing stop rule.
    """
    if a.length <= _HERMITICITY_CHECK_MAX_L:
        if mpo.hermiticity_defect(a) > 1e-8:
            raise ValueError("input operator is not Hermitian")
    beta1 = mpo.frobenius_norm(start.mpo)
    if not beta1 > 0.0:
        raise ValueError("zero starting block")
    threshold = cfg.breakdown_tol * beta1
    alphas = []
    betas = []
    comp_log = []
    basis = []
    trackers = [_StopTracker(rule) for rule in cfg.stop_rules]
    termination = "k-max"
    u_prev = None
    v = start.mpo
    for i in range(1, cfg.k_max + 1):
        beta = beta1 if i == 1 else mpo.frobenius_norm(v)
        if not np.isfinite(beta):
            raise NumericalError("non-finite block norm (overflow?)")
        if i > 1:
            if beta <= threshold:
                termination = "breakdown"
                break
            betas.append(beta)
        u = mpo.scale(1.0 / beta, v)
        w, rep = mpo.multiply(a, u, cfg.d_max)
        discarded = rep.total_discarded
        if u_prev is not None:
            w, rep = mpo.add(w, mpo.scale(-beta, u_prev), cfg.d_max)
            discarded += rep.total_discarded
        alpha_c = mpo.inner_product(u, w)
        if not np.isfinite(alpha_c):
            raise NumericalError("non-finite diagonal coefficient (overflow?)")
        if abs(alpha_c.imag) > 1e-8 * abs(alpha_c) + 1e-12:
            raise NumericalError(f"diagonal coefficient {alpha_c} is not real; "
                                 "input operator looks non-Hermitian")
        alpha = float(alpha_c.real)
        alphas.append(alpha)
        w, rep = mpo.add(w, mpo.scale(-alpha, u), cfg.d_max)
        discarded += rep.total_discarded
        if cfg.reorthogonalize:
            basis.append(u)
            for uj in basis:
                c = mpo.inner_product(uj, w)
                if c.imag == 0.0:
                    c = c.real  # keep real chains in real storage
                w, rep = mpo.add(w, mpo.scale(-c, uj), cfg.d_max)
                discarded += rep.total_discarded
        comp_log.append(discarded)
        if trackers:
            nodes, vecs = tensor.symtridiag_eig(np.asarray(alphas), np.asarray(betas))
            weights = beta1 ** 2 * np.abs(vecs[0, :]) ** 2
            if any(t.update(nodes, weights) for t in trackers):
                termination = "stop-rule"
                break
        u_prev = u
        v = w
    projection = TridiagonalProjection(
        np.asarray(alphas, dtype=float),
        np.asarray(betas, dtype=float),
        beta1,
        termination,
    )
    return LanczosRun(
        projection,
        quadrature_rule(projection),
        np.asarray(comp_log, dtype=float),
        model_label,
        start.label,
        tuple(basis),
    )


def _function_values(f, nodes):
    with np.errstate(all="ignore"):  # non-finite values raise below instead
        try:
            vals = np.asarray(f(nodes))
            if vals.shape != nodes.shape:
                raise TypeError
        except Exception:
            vals = np.asarray([f(x) for x in nodes])
    bad = ~np.isfinite(vals)
    if np.any(bad):
        raise NumericalError(f"function not finite at node {nodes[bad][0]}")
    return vals


def evaluate(run, f):
    """Quadrature estimate sum_j w_j f(node_j) of the trace functional."""
    nodes = run.quadrature.nodes
    vals = _function_values(f, nodes)
    return float(np.real(np.dot(run.quadrature.weights, vals)))


def evaluate_many(run, fs):
    """Evaluate several functions against the same (cached) rule."""
    return [evaluate(run, f) for f in fs]


def save_run(run, path, extra_header=None):
    """Serialize the projection and logs; portable little-endian layout."""
    header = {
        "format_version": _RUN_FORMAT_VERSION,
        "model_label": run.model_label,
        "start_label": run.start_label,
        "termination": run.projection.termination,
        "k": run.projection.k,
    }
    if extra_header:
        header.update(extra_header)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", _RUN_MAGIC, _RUN_FORMAT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<d", run.projection.beta1))
        for arr in (run.projection.alphas, run.projection.betas, run.compression_log):
            fh.write(struct.pack("<I", arr.size))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_run(path):
    """Read a run written by :func:`save_run`; returns (run, header dict).

    The quadrature rule is recomputed from the stored coefficients, which
    round-trip exactly.
    """
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) != 12:
            raise ValueError("truncated run file")
        magic, version, blob_len = struct.unpack("<4sII", head)
        if magic != _RUN_MAGIC:
            raise ValueError("not a Lanczos run file")
        if version != _RUN_FORMAT_VERSION:
            raise ValueError(f"unsupported run file version {version}")
        header = json.loads(fh.read(blob_len).decode("utf-8"))
        (beta1,) = struct.unpack("<d", fh.read(8))
        arrays = []
        for _ in range(3):
            (n,) = struct.unpack("<I", fh.read(4))
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise ValueError("truncated run file")
            arrays.append(np.frombuffer(buf, dtype="<f8").astype(float))
    projection = TridiagonalProjection(arrays[0], arrays[1], beta1, header["termination"])
    run = LanczosRun(
        projection,
        quadrature_rule(projection),
        arrays[2],
        header.get("model_label", ""),
        header.get("start_label", ""),
    )
    return run, header

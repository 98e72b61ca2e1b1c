"""Thermal-equilibrium observables as quadrature functionals of H.

Every quantity is a combination of weighted sums over one reusable
quadrature rule: partition function, energy and second-moment ratios,
entropy density, specific heat, thermal fidelity, trace distance, trace
norm and two-site sz correlators. All exponentials are taken relative to
the minimum node, so no intermediate can overflow no matter how large
beta * ||H|| gets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lanczos, models, mpo
from .lanczos import NumericalError

LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class BetaGrid:
    """Strictly increasing positive inverse temperatures plus the temperature
    offset used for fidelity / trace-distance pairs."""

    betas: np.ndarray
    delta_t: float

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        object.__setattr__(self, "betas", b)
        if b.ndim != 1 or b.size == 0:
            raise ValueError("betas must be a non-empty 1-d array")
        if not np.all(np.isfinite(b)) or np.any(b <= 0.0):
            raise ValueError("betas must be finite and positive")
        if np.any(np.diff(b) <= 0.0):
            raise ValueError("betas must be strictly increasing")
        if not self.delta_t > 0.0:
            raise ValueError("delta_t must be positive")

    @property
    def temperatures(self):
        """Temperatures in ascending order (reverse of the beta order)."""
        return (1.0 / self.betas)[::-1]

    @classmethod
    def from_temperatures(cls, temps, delta_t=None):
        t = np.asarray(temps, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("temperatures must be a non-empty 1-d array")
        if np.any(t <= 0.0) or not np.all(np.isfinite(t)):
            raise ValueError("temperatures must be finite and positive")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("temperatures must be strictly increasing")
        if delta_t is None:
            delta_t = float(t[1] - t[0]) if t.size > 1 else float(t[0])
        return cls((1.0 / t)[::-1].copy(), float(delta_t))


def _require_identity_start(run):
    if run.start_label not in ("", "identity"):
        raise ValueError(
            f"run was started from {run.start_label!r}; partition traces need "
            "an identity starting block"
        )


def _shifted_sums(nodes, weights, beta, lam_ref):
    m = weights * np.exp(-beta * (nodes - lam_ref))
    tot = float(np.sum(m))
    if not np.isfinite(tot) or tot <= 0.0:
        raise NumericalError("degenerate quadrature mass; run looks corrupt")
    return tot, m


def partition_traces(run, betas):
    """(log Z, F/Z, G/Z) per beta from one identity-start run.

    log Z = -beta*lam_ref + log sum_j w_j e^{-beta (node_j - lam_ref)} with
    lam_ref the minimum node; the ratios are weighted means over the
    normalized shifted distribution, so the shift cancels exactly.
    """
    _require_identity_start(run)
    nodes = run.quadrature.nodes
    weights = run.quadrature.weights
    lam_ref = float(nodes[0])
    b = np.atleast_1d(np.asarray(betas, dtype=float))
    log_z = np.empty(b.size)
    f_over_z = np.empty(b.size)
    g_over_z = np.empty(b.size)
    for idx, beta in enumerate(b):
        if beta < 0.0 or not np.isfinite(beta):
            raise ValueError("beta must be finite and >= 0")
        tot, m = _shifted_sums(nodes, weights, beta, lam_ref)
        log_z[idx] = -beta * lam_ref + float(np.log(tot))
        p = m / tot
        f_over_z[idx] = float(np.dot(p, nodes))
        g_over_z[idx] = float(np.dot(p, nodes ** 2))
    return log_z, f_over_z, g_over_z


def entropy_density(log_z, f_over_z, beta, length):
    """Entropy per site s = (beta F/Z + log Z) / L."""
    return (np.asarray(beta, float) * np.asarray(f_over_z, float)
            + np.asarray(log_z, float)) / length


def specific_heat(f_over_z, g_over_z, beta, length):
    """Heat capacity per site c = beta^2/L (G/Z - (F/Z)^2)."""
    f = np.asarray(f_over_z, float)
    g = np.asarray(g_over_z, float)
    return np.asarray(beta, float) ** 2 / length * (g - f ** 2)


def thermal_fidelity(run, beta0, beta1):
    """Z((b0+b1)/2) / sqrt(Z(b0) Z(b1)), computed in the log domain.

    Cauchy-Schwarz on the quadrature measure keeps the value <= 1; equal
    arguments give exactly 1.
    """
    if beta0 <= 0.0 or beta1 <= 0.0:
        raise ValueError("inverse temperatures must be positive")
    log_z, _, _ = partition_traces(run, [beta0, beta1, 0.5 * (beta0 + beta1)])
    return float(np.exp(log_z[2] - 0.5 * (log_z[0] + log_z[1])))


def trace_distance_thermal(run, beta0, beta1):
    """Schatten-1 distance between the two Gibbs states of the same H.

    Each term |e^a - e^b| is evaluated as e^{max(a,b)} (1 - e^{-|a-b|}), so
    the result is exact zero for equal arguments and never overflows.
    """
    if beta0 <= 0.0 or beta1 <= 0.0:
        raise ValueError("inverse temperatures must be positive")
    log_z, _, _ = partition_traces(run, [beta0, beta1])
    nodes = run.quadrature.nodes
    weights = run.quadrature.weights
    a = -beta0 * nodes - log_z[0]
    b = -beta1 * nodes - log_z[1]
    hi = np.maximum(a, b)
    diff = -np.expm1(-np.abs(a - b))
    return float(np.sum(weights * np.exp(hi) * diff))


def trace_norm(run):
    """trace sqrt of a positive operator from a run on it (e.g. A^dag A).

    Nodes slightly below zero are clamped; strongly negative nodes signal an
    invalid input or severe truncation and raise.
    """
    nodes = run.quadrature.nodes
    node_max = float(np.max(nodes))
    floor = -1e-6 * max(node_max, 1e-300)
    if float(np.min(nodes)) < floor:
        raise NumericalError(
            f"node {float(np.min(nodes))} is negative beyond tolerance; "
            "input was not positive or truncation was too severe"
        )
    clamped = np.clip(nodes, 0.0, None)
    return float(np.dot(run.quadrature.weights, np.sqrt(clamped)))


def expectation(parts, z_run, betas):
    """<O>(beta) for O = sum_p sign_p O_p, from per-part quadrature runs.

    Each part's run must have used sqrt(O_p) as starting block; the partition
    function comes from the separate identity-start run ``z_run``. One global
    minimum node serves as shift for all runs, so numerator and denominator
    share the same (cancelling) exponential prefactor.
    """
    _require_identity_start(z_run)
    for _, part in parts:
        if part.model_label and z_run.model_label and part.model_label != z_run.model_label:
            raise ValueError(
                f"mismatched Hamiltonians: {part.model_label!r} vs {z_run.model_label!r}"
            )
    b = np.atleast_1d(np.asarray(betas, dtype=float))
    lam_ref = min(
        [float(z_run.quadrature.nodes[0])]
        + [float(r.quadrature.nodes[0]) for _, r in parts]
    )
    out = np.zeros(b.size)
    for idx, beta in enumerate(b):
        num = 0.0
        for sign, part in parts:
            tot, _ = _shifted_sums(part.quadrature.nodes, part.quadrature.weights,
                                   beta, lam_ref)
            num += sign * tot
        den, _ = _shifted_sums(z_run.quadrature.nodes, z_run.quadrature.weights,
                               beta, lam_ref)
        out[idx] = num / den
    return out


def _spin_flip_commutes(h):
    """Dense check of [H, X^(x)L] = 0; only affordable at small L."""
    flip = mpo.Mpo([models.SX.reshape(1, 2, 2, 1)] * h.length)
    hm = mpo.to_dense(h)
    fm = mpo.to_dense(flip)
    comm = hm @ fm - fm @ hm
    return float(np.linalg.norm(comm)) <= 1e-10 * max(float(np.linalg.norm(hm)), 1e-300)


def correlation_zz(h, i, j, betas, cfg, symmetry="none", z_run=None,
                   model_label="", runner=None):
    """Connected correlator C_zz(i,j) = <sz_i sz_j> - <sz_i><sz_j>.

    ``symmetry="spin-flip"`` asserts (densely, for L <= 10; trusted beyond)
    that H commutes with the global spin flip, which makes <sz_i> vanish and
    halves the projector runs: <sz_i sz_j> = 2(<P0P0> - <P1P0>). Otherwise
    the full projector decompositions of sz_i sz_j and of each single-site sz
    are run separately.
    """
    runner = runner or lanczos.run_lanczos
    length = h.length
    if i == j:
        raise ValueError("correlator sites must differ")
    if not (1 <= i <= length and 1 <= j <= length):
        raise ValueError("correlator site out of range")
    if i > j:
        i, j = j, i
    if symmetry not in ("none", "spin-flip"):
        raise ValueError(f"unknown symmetry mode {symmetry!r}")
    if z_run is None:
        z_run = runner(h, models.identity_block(length), cfg, model_label)
    if symmetry == "spin-flip":
        if length <= 10 and not _spin_flip_commutes(h):
            raise ValueError("Hamiltonian does not commute with the global spin flip")
        r00 = runner(h, models.projector_block(length, [(i, 0), (j, 0)]), cfg, model_label)
        r10 = runner(h, models.projector_block(length, [(i, 1), (j, 0)]), cfg, model_label)
        return expectation([(2.0, r00), (-2.0, r10)], z_run, betas)
    pos, neg = models.zz_decomposition(length, i, j)
    r_pos = runner(h, pos, cfg, model_label)
    r_neg = runner(h, neg, cfg, model_label)
    zz = expectation([(1.0, r_pos), (-1.0, r_neg)], z_run, betas)
    z_site = []
    for site in (i, j):
        r0 = runner(h, models.projector_block(length, [(site, 0)]), cfg, model_label)
        r1 = runner(h, models.projector_block(length, [(site, 1)]), cfg, model_label)
        z_site.append(expectation([(1.0, r0), (-1.0, r1)], z_run, betas))
    return zz - z_site[0] * z_site[1]


@dataclass
class ThermalSweepResult:
    """Per-temperature observables of one Hamiltonian, ascending in T."""

    temperatures: np.ndarray
    log_z: np.ndarray
    energy_density: np.ndarray  # (F/Z)/L
    entropy: np.ndarray  # s
    heat_capacity: np.ndarray  # c
    fidelity: np.ndarray  # F_T(T) = F_T(1/T, 1/(T+delta_t))
    trace_distance: np.ndarray  # D_T(T), same pairing
    czz: dict = field(default_factory=dict)  # (i, j) -> values per T

    def check_bounds(self, slack=1e-8):
        """Raise if any physical range constraint is violated."""
        if np.any(self.entropy < -slack) or np.any(self.entropy > LN2 + slack):
            raise NumericalError("entropy density out of [0, ln 2]")
        if np.any(self.heat_capacity < -slack):
            raise NumericalError("negative heat capacity")
        if np.any(self.fidelity < -slack) or np.any(self.fidelity > 1.0 + slack):
            raise NumericalError("thermal fidelity out of [0, 1]")
        if np.any(self.trace_distance < -slack) or np.any(self.trace_distance > 2.0 + slack):
            raise NumericalError("trace distance out of [0, 2]")


def sweep_observables(run, grid, length):
    """All base observables on a temperature grid from one identity-start run."""
    temps = grid.temperatures
    betas = 1.0 / temps
    log_z, f_over_z, _g = partition_traces(run, betas)
    s = entropy_density(log_z, f_over_z, betas, length)
    c = specific_heat(f_over_z, _g, betas, length)
    fid = np.array([thermal_fidelity(run, 1.0 / t, 1.0 / (t + grid.delta_t))
                    for t in temps])
    dist = np.array([trace_distance_thermal(run, 1.0 / t, 1.0 / (t + grid.delta_t))
                     for t in temps])
    return ThermalSweepResult(
        temperatures=temps.copy(),
        log_z=log_z,
        energy_density=f_over_z / length,
        entropy=s,
        heat_capacity=c,
        fidelity=fid,
        trace_distance=dist,
    )

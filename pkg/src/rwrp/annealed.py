"""Annealed travel costs b_{r,N}(0, y) and their r-derivative.

Three independent estimator families:

* EXACT_ENUM: enumerate every potential over the box and average the exact
  per-environment solves.
* ENV_MC: average exact solves over sampled environments.
* PATH_MC: Fubini route; simulate the killed walk and average the
  local-time product weight prod_z (r + (1-r) e^{-l_z}).

The r-derivative comes in three matching routes: the local-time ratio
estimator, the site-flip enumeration and a central finite difference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from ._kernels import path_mc_batch, solve_field_batch
from .driver import stream_seed, tree_stats, tree_sum
from .environment import environment_key, mask_weights, mask_weight_derivatives, ENUMERATION_GUARD
from .errors import EstimatorError, ValidationError
from .lattice import BoxGeometry, l1_norm
from .rng import stream_key
from .solver import DEFAULT_TOL, MAX_SWEEPS, e0_table, range_upper_bound_constant

EXACT_ENUM = "EXACT_ENUM"
ENV_MC = "ENV_MC"
PATH_MC = "PATH_MC"

JACKKNIFE_BLOCKS = 50


@dataclass(frozen=True)
class CostEstimate:
    value: float
    std_error: float
    replicates: int
    estimator: str
    r: float
    lam: float
    y: tuple
    d: int
    N: int
    capped: int = 0


@dataclass(frozen=True)
class DerivativeReport:
    """-d/dr of the annealed cost by up to three routes."""

    r: float
    formula_value: float | None = None
    formula_se: float | None = None
    flip_value: float | None = None
    fd_value: float | None = None
    replicates: int = 0

    @property
    def discrepancies(self) -> dict:
        out = {}
        if self.formula_value is not None and self.flip_value is not None:
            out["formula_vs_flip"] = abs(self.formula_value - self.flip_value)
        if self.formula_value is not None and self.fd_value is not None:
            out["formula_vs_fd"] = abs(self.formula_value - self.fd_value)
        if self.flip_value is not None and self.fd_value is not None:
            out["flip_vs_fd"] = abs(self.flip_value - self.fd_value)
        return out


def step_cap(box: BoxGeometry) -> int:
    # diffusive bound with a safety factor
    return 64 * box.side**2


def _zero_cost(box, r, lam, y, estimator) -> CostEstimate:
    return CostEstimate(
        value=0.0,
        std_error=0.0,
        replicates=0,
        estimator=estimator,
        r=float(r),
        lam=float(lam),
        y=tuple(y),
        d=box.dimension,
        N=box.radius,
    )


def annealed_cost_exact(box, r, y, lam=0.0, guard=ENUMERATION_GUARD) -> CostEstimate:
    """b_{r,N}(0, y, lambda) by full enumeration; deterministic, zero error."""
    if not 0.0 <= r <= 1.0:
        raise ValidationError(f"r must lie in [0, 1], got {r}")
    y = tuple(int(c) for c in y)
    if y == (0,) * box.dimension:
        return _zero_cost(box, r, lam, y, EXACT_ENUM)
    e0, relevant = e0_table(box, y, lam, guard)
    k = len(relevant)
    masks = np.arange(1 << k, dtype=np.uint64)
    w = mask_weights(k, masks, r)
    mean_e = tree_sum(w * e0)
    return CostEstimate(
        value=-math.log(mean_e),
        std_error=0.0,
        replicates=1 << k,
        estimator=EXACT_ENUM,
        r=float(r),
        lam=float(lam),
        y=y,
        d=box.dimension,
        N=box.radius,
    )


def annealed_cost_and_derivative(box, r, y, lam=0.0, guard=ENUMERATION_GUARD):
    """(b_{r,N}, -db/dr) from the enumerated polynomial E_r[e_N]; 0 < r < 1."""
    if not 0.0 < r < 1.0:
        raise ValidationError(f"r must lie in (0, 1) for the derivative, got {r}")
    y = tuple(int(c) for c in y)
    if y == (0,) * box.dimension:
        return 0.0, 0.0
    e0, relevant = e0_table(box, y, lam, guard)
    k = len(relevant)
    masks = np.arange(1 << k, dtype=np.uint64)
    mean_e = tree_sum(mask_weights(k, masks, r) * e0)
    d_mean = tree_sum(mask_weight_derivatives(k, masks, r) * e0)
    return -math.log(mean_e), d_mean / mean_e


def _env_mc_values(box, r, y, lam, replicates, seed, tol, workers):
    env_keys = np.array(
        [environment_key(stream_seed(seed, i)) for i in range(replicates)], dtype=np.uint64
    )
    if workers:
        nb.set_num_threads(max(1, min(workers, nb.config.NUMBA_NUM_THREADS)))
    e_vals, resid, _ = solve_field_batch(
        env_keys,
        box.site_hashes(),
        float(r),
        float(lam),
        box.neighbor_table(),
        box.index_of(y),
        box.origin_index,
        tol,
        MAX_SWEEPS,
    )
    bad = np.nonzero(resid > tol)[0]
    if bad.size:
        raise EstimatorError(f"replicate {bad[0]} (seed {stream_seed(seed, int(bad[0]))}) did not converge")
    return e_vals


def annealed_cost_env_mc(
    box, r, y, lam=0.0, replicates=1000, seed=0, tol=DEFAULT_TOL, workers=None
) -> CostEstimate:
    """-log of the sample mean of exact quenched solves over sampled potentials."""
    if replicates < 2:
        raise ValidationError("environment MC needs at least 2 replicates")
    if not 0.0 <= r <= 1.0:
        raise ValidationError(f"r must lie in [0, 1], got {r}")
    y = tuple(int(c) for c in y)
    if y == (0,) * box.dimension:
        return _zero_cost(box, r, lam, y, ENV_MC)
    e_vals = _env_mc_values(box, r, y, lam, replicates, seed, tol, workers)
    stats = tree_stats(e_vals)
    if stats.mean <= 0.0:
        raise EstimatorError("sample mean of e_N underflowed to zero")
    return CostEstimate(
        value=-math.log(stats.mean),
        std_error=stats.std_error_of_mean / stats.mean,
        replicates=replicates,
        estimator=ENV_MC,
        r=float(r),
        lam=float(lam),
        y=y,
        d=box.dimension,
        N=box.radius,
    )


def _path_mc_samples(box, r, y, lam, replicates, seed):
    walk_keys = np.array(
        [stream_key(0x504D43, stream_seed(seed, i)) for i in range(replicates)], dtype=np.uint64
    )
    return path_mc_batch(
        walk_keys,
        float(r),
        float(lam),
        box.neighbor_table(),
        box.origin_index,
        box.index_of(y),
        step_cap(box),
    )


def annealed_cost_path_mc(box, r, y, lam=0.0, replicates=1000, seed=0) -> CostEstimate:
    """-log of the sample mean of the local-time product weight over walks."""
    if replicates < 2:
        raise ValidationError("path MC needs at least 2 replicates")
    if not 0.0 <= r <= 1.0:
        raise ValidationError(f"r must lie in [0, 1], got {r}")
    y = tuple(int(c) for c in y)
    if y == (0,) * box.dimension:
        return _zero_cost(box, r, lam, y, PATH_MC)
    phi, _, hit, _, capped = _path_mc_samples(box, r, y, lam, replicates, seed)
    if not hit.any():
        raise EstimatorError(
            "no walk reached the target; raise the replicate budget or shrink the box"
        )
    stats = tree_stats(phi)
    return CostEstimate(
        value=-math.log(stats.mean),
        std_error=stats.std_error_of_mean / stats.mean,
        replicates=replicates,
        estimator=PATH_MC,
        r=float(r),
        lam=float(lam),
        y=y,
        d=box.dimension,
        N=box.radius,
        capped=int(capped.sum()),
    )


def _jackknife_ratio_se(num, den, blocks=JACKKNIFE_BLOCKS):
    n = num.size
    blocks = min(blocks, n)
    edges = np.linspace(0, n, blocks + 1, dtype=np.int64)
    bn = np.array([tree_sum(num[a:b]) for a, b in zip(edges[:-1], edges[1:])])
    bd = np.array([tree_sum(den[a:b]) for a, b in zip(edges[:-1], edges[1:])])
    tn, td = bn.sum(), bd.sum()
    if np.any(td - bd == 0.0):
        return math.inf
    jack = (tn - bn) / (td - bd)
    jm = jack.mean()
    return math.sqrt((blocks - 1) / blocks * np.sum((jack - jm) ** 2))


def annealed_derivative_formula(box, r, y, replicates=10**4, seed=0) -> DerivativeReport:
    """-db/dr as the local-time ratio estimator over killed-walk samples."""
    if not 0.0 < r < 1.0:
        raise ValidationError(f"r must lie in (0, 1), got {r}")
    if replicates < 2:
        raise ValidationError("path MC needs at least 2 replicates")
    y = tuple(int(c) for c in y)
    phi, phi_deriv, hit, _, _ = _path_mc_samples(box, r, y, 0.0, replicates, seed)
    if not hit.any():
        raise EstimatorError("no walk reached the target; raise the replicate budget")
    value = tree_sum(phi_deriv) / tree_sum(phi)
    se = _jackknife_ratio_se(phi_deriv, phi)
    return DerivativeReport(r=float(r), formula_value=value, formula_se=se, replicates=replicates)


def annealed_derivative_flip(box, r, y, lam=0.0, guard=ENUMERATION_GUARD) -> float:
    """-db/dr by site-flip differentiation of the enumerated E_r[e_N]."""
    if not 0.0 < r < 1.0:
        raise ValidationError(f"r must lie in (0, 1), got {r}")
    e0, relevant = e0_table(box, tuple(y), lam, guard)
    k = len(relevant)
    masks = np.arange(1 << k, dtype=np.uint64)
    w = mask_weights(k, masks, r)
    mean_e = tree_sum(w * e0)
    total = 0.0
    for bit in range(k):
        bitmask = np.uint64(1 << bit)
        total += tree_sum(w * (e0[masks & ~bitmask] - e0[masks | bitmask]))
    return total / mean_e


def annealed_derivative_fd(box, r, y, lam=0.0, h=1e-4, guard=ENUMERATION_GUARD) -> float:
    """-db/dr by a central finite difference of the exact enumeration."""
    lo = annealed_cost_exact(box, r - h, y, lam, guard).value
    hi = annealed_cost_exact(box, r + h, y, lam, guard).value
    return (lo - hi) / (2.0 * h)


def derivative_report(
    box,
    r,
    y,
    replicates=10**4,
    seed=0,
    with_flip=True,
    with_fd=True,
    h=1e-4,
    guard=ENUMERATION_GUARD,
) -> DerivativeReport:
    """Combine the three derivative routes into one report."""
    rep = annealed_derivative_formula(box, r, y, replicates=replicates, seed=seed)
    flip = annealed_derivative_flip(box, r, y, guard=guard) if with_flip else None
    fd = annealed_derivative_fd(box, r, y, h=h, guard=guard) if with_fd else None
    return DerivativeReport(
        r=float(r),
        formula_value=rep.formula_value,
        formula_se=rep.formula_se,
        flip_value=flip,
        fd_value=fd,
        replicates=replicates,
    )


def derivative_lower_bound(y) -> float:
    """(1 - e^{-1}) l1(y), the uniform-in-r lower bound on -db/dr."""
    return (1.0 - math.exp(-1.0)) * l1_norm(y)


def derivative_upper_envelope(d, r, y) -> float:
    """r^{-1} times the expected-range envelope, an upper bound on -db/dr."""
    return range_upper_bound_constant(d, r) * l1_norm(y) / r


def annealed_cost(box, r, y, lam=0.0, estimator=EXACT_ENUM, replicates=1000, seed=0, workers=None, guard=ENUMERATION_GUARD):
    """Dispatch on the estimator kind."""
    if estimator == EXACT_ENUM:
        return annealed_cost_exact(box, r, y, lam, guard)
    if estimator == ENV_MC:
        return annealed_cost_env_mc(box, r, y, lam, replicates, seed, workers=workers)
    if estimator == PATH_MC:
        return annealed_cost_path_mc(box, r, y, lam, replicates, seed)
    raise ValidationError(f"unknown estimator {estimator!r}")

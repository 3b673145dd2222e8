"""Exact quenched travel costs on a box via killed-walk linear systems.

The field u(x) = e_N(x, y, omega + lambda) solves

    u(x) = exp(-(omega(x) + lambda)) * (2d)^{-1} * sum of u over neighbors

for x != y inside the box, with u(y) = 1 and u = 0 outside.  Gauss-Seidel
sweeps in flat-index order converge because killing at the boundary and
absorption at the target make the iteration strictly substochastic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import gauss_seidel
from .environment import (
    Environment,
    mask_weight_derivatives,
    mask_weights,
    sample_environment,
    ENUMERATION_GUARD,
)
from .errors import GuardError, SolverError, ValidationError
from .lattice import BoxGeometry, l1_norm
from .rng import stream_key

DEFAULT_TOL = 1e-12
MAX_SWEEPS = 10**6


@dataclass(frozen=True)
class QuenchedField:
    """Solved travel field in mantissa-plus-log-scale form."""

    box: BoxGeometry
    target: tuple
    shift: float
    mantissa: np.ndarray
    log_scale: float
    residual: float
    iterations: int

    def value_at(self, site) -> float:
        """u(site), the killed-walk expectation e_N(site, target)."""
        return float(self.mantissa[self.box.index_of(site)]) * math.exp(self.log_scale)

    def cost_at(self, site) -> float:
        """The quenched travel cost -log u(site); 0 at the target."""
        idx = self.box.index_of(site)
        m = float(self.mantissa[idx])
        if m == 0.0:
            return math.inf
        return -(math.log(m) + self.log_scale)


@dataclass(frozen=True)
class FlipRatioReport:
    site: tuple
    log_ratio: float
    omega_at_z: int


def _factors(env: Environment, lam: float) -> np.ndarray:
    return np.exp(-(env.values.astype(np.float64) + lam))


def _solve_absorbing(env, lam, fixed_idx, fixed_val, tol, relaxation, max_sweeps):
    factor = _factors(env, lam)
    u, res, sweeps = gauss_seidel(
        factor,
        env.box.neighbor_table(),
        np.asarray(fixed_idx, dtype=np.int64),
        np.asarray(fixed_val, dtype=np.float64),
        tol,
        max_sweeps,
        relaxation,
    )
    if res > tol:
        raise SolverError(
            f"no convergence within {max_sweeps} sweeps (residual {res:.3e} > tol {tol:.3e})",
            residual=res,
            iterations=sweeps,
        )
    return u, res, sweeps


def solve_travel_field(
    box: BoxGeometry,
    env: Environment,
    y,
    lam: float = 0.0,
    tol: float = DEFAULT_TOL,
    relaxation: float = 1.0,
    max_sweeps: int = MAX_SWEEPS,
) -> QuenchedField:
    """Solve for the restricted travel field with target y and shift lambda."""
    if lam < 0.0:
        raise ValidationError(f"shift lambda must be >= 0, got {lam}")
    if tol <= 0.0:
        raise ValidationError(f"tolerance must be > 0, got {tol}")
    y_idx = box.index_of(y)
    u, res, sweeps = _solve_absorbing(env, lam, [y_idx], [1.0], tol, relaxation, max_sweeps)
    return QuenchedField(
        box=box,
        target=tuple(int(c) for c in y),
        shift=float(lam),
        mantissa=u,
        log_scale=0.0,
        residual=float(res),
        iterations=int(sweeps),
    )


def quenched_cost(box, env, y, start=None, lam=0.0, tol=DEFAULT_TOL) -> float:
    """a_N(start, y, omega + lambda); start defaults to the origin."""
    if start is None:
        start = (0,) * box.dimension
    if tuple(start) == tuple(y):
        return 0.0
    field = solve_travel_field(box, env, y, lam=lam, tol=tol)
    return field.cost_at(start)


def hit_before_probability(box, env, y, z, start=None, lam=0.0, tol=DEFAULT_TOL) -> float:
    """Probability under the tilted path measure that z is visited before y."""
    if start is None:
        start = (0,) * box.dimension
    y_idx = box.index_of(y)
    z_idx = box.index_of(z)
    s_idx = box.index_of(start)
    if z_idx == s_idx:
        return 1.0
    if z_idx == y_idx:
        return 0.0
    field = solve_travel_field(box, env, y, lam=lam, tol=tol)
    return _hit_before_from_field(box, env, field, z_idx, s_idx, lam, tol)


def _hit_before_from_field(box, env, field, z_idx, s_idx, lam, tol):
    y_idx = box.index_of(field.target)
    if z_idx == s_idx:
        return 1.0
    if z_idx == y_idx:
        return 0.0
    e_start = field.mantissa[s_idx]
    if e_start <= 0.0:
        raise SolverError("e_N at the start underflowed to zero; cannot normalize the path measure")
    w, _, _ = _solve_absorbing(env, lam, [z_idx, y_idx], [1.0, 0.0], tol, 1.0, MAX_SWEEPS)
    p = w[s_idx] * field.mantissa[z_idx] / e_start
    return float(min(max(p, 0.0), 1.0))


def expected_range(box, env, y, start=None, lam=0.0, tol=DEFAULT_TOL, sites=None) -> float:
    """Expected number of distinct sites visited before hitting y.

    Sums the hit-before probabilities over box sites (or the ``sites``
    sub-selection); one auxiliary solve per site.
    """
    if start is None:
        start = (0,) * box.dimension
    s_idx = box.index_of(start)
    field = solve_travel_field(box, env, y, lam=lam, tol=tol)
    if sites is None:
        z_indices = range(box.site_count)
    else:
        z_indices = [box.index_of(z) for z in sites]
    total = 0.0
    for z_idx in z_indices:
        total += _hit_before_from_field(box, env, field, z_idx, s_idx, lam, tol)
    return total


def return_weight_psi(box, env, z, lam: float = 0.0, tol: float = DEFAULT_TOL) -> float:
    """Reciprocal of one minus the weighted return probability to z.

    Box-restricted analog of the unrestricted return weight: the walk is
    killed at the box boundary instead of running on all of Z^d.
    """
    z_idx = box.index_of(z)
    v, _, _ = _solve_absorbing(env, lam, [z_idx], [1.0], tol, 1.0, MAX_SWEEPS)
    nbr = box.neighbor_table()
    deg = nbr.shape[1]
    s = 0.0
    for k in range(deg):
        j = nbr[z_idx, k]
        if j >= 0:
            s += v[j]
    ret = s / deg
    if ret >= 1.0 - tol:
        raise SolverError(f"return weight {ret} is within tolerance of singular (near-recurrence)")
    return 1.0 / (1.0 - ret)


def flip_log_ratio(box, env, y, z, tol: float = DEFAULT_TOL) -> FlipRatioReport:
    """log of e_N(0, y, omega with z flipped) over e_N(0, y, omega)."""
    from .environment import flip_site

    z_t = tuple(int(c) for c in z)
    if z_t == tuple(int(c) for c in y):
        raise ValidationError("flip site must differ from the target")
    omega_z = env.value_at(z)
    flipped = flip_site(env, z, 1 - omega_z)
    origin = (0,) * box.dimension
    a_orig = quenched_cost(box, env, y, origin, tol=tol)
    a_flip = quenched_cost(box, flipped, y, origin, tol=tol)
    return FlipRatioReport(site=z_t, log_ratio=a_orig - a_flip, omega_at_z=omega_z)


# ---------------------------------------------------------------------------
# Exact enumeration over environments
# ---------------------------------------------------------------------------

_E0_TABLES: dict = {}


def e0_table(box, y, lam=0.0, guard=ENUMERATION_GUARD, tol=DEFAULT_TOL):
    """e_N(0, y, . ) for every potential over the box sites other than y.

    Returns (e0 array indexed by bitmask, relevant flat indices).  Bit j of
    the mask set means potential 1 at the j-th relevant site.  The target's
    own value never influences the cost, so y is excluded by default.
    """
    y_idx = box.index_of(y)
    key = (box.dimension, box.radius, y_idx, float(lam))
    cached = _E0_TABLES.get(key)
    if cached is not None:
        return cached
    relevant = [i for i in range(box.site_count) if i != y_idx]
    k = len(relevant)
    if k > guard:
        raise GuardError(
            f"{k} relevant sites exceed the enumeration guard of {guard} (2^{k} solves)"
        )
    nbr = box.neighbor_table()
    fixed_idx = np.array([y_idx], dtype=np.int64)
    fixed_val = np.ones(1)
    origin = box.origin_index
    e0 = np.empty(1 << k)
    values = np.zeros(box.site_count, dtype=np.float64)
    for mask in range(1 << k):
        values[:] = 0.0
        for bit, site_idx in enumerate(relevant):
            if mask >> bit & 1:
                values[site_idx] = 1.0
        factor = np.exp(-(values + lam))
        u, res, sweeps = gauss_seidel(factor, nbr, fixed_idx, fixed_val, tol, MAX_SWEEPS, 1.0)
        if res > tol:
            raise SolverError("enumeration solve failed to converge", residual=res)
        e0[mask] = u[origin]
    result = (e0, relevant)
    _E0_TABLES[key] = result
    return result


def expected_quenched_cost(box, y, r, lam=0.0, guard=ENUMERATION_GUARD):
    """(E_r[a_N(0,y)], d/dr E_r[a_N(0,y)]) by exact enumeration."""
    if tuple(y) == (0,) * box.dimension:
        return 0.0, 0.0
    e0, relevant = e0_table(box, y, lam, guard)
    k = len(relevant)
    masks = np.arange(1 << k, dtype=np.uint64)
    a = -np.log(e0)
    w = mask_weights(k, masks, r)
    value = float(np.dot(w, a))
    if 0.0 < r < 1.0:
        dw = mask_weight_derivatives(k, masks, r)
        deriv = float(np.dot(dw, a))
    else:
        deriv = math.nan
    return value, deriv


def russo_rhs(
    box,
    r,
    y,
    estimator: str = "exact",
    budget: int | None = None,
    seed: int = 0,
    lam: float = 0.0,
    guard: int = ENUMERATION_GUARD,
) -> float:
    """Site-flip form of -d/dr E_r[a_N(0, y)].

    Sums over flip sites z the expected one-site cost change
    E_r[a_N(omega with z forced to 1) - a_N(omega with z forced to 0)];
    exact mode enumerates the environment, mc mode averages ``budget``
    sampled environments.
    """
    if not 0.0 < r < 1.0:
        raise ValidationError(f"r must lie in (0, 1) for the derivative, got {r}")
    if estimator == "exact":
        e0, relevant = e0_table(box, y, lam, guard)
        k = len(relevant)
        masks = np.arange(1 << k, dtype=np.uint64)
        a = -np.log(e0)
        w = mask_weights(k, masks, r)
        total = 0.0
        for bit in range(k):
            bitmask = np.uint64(1 << bit)
            a_set = a[masks | bitmask]
            a_clear = a[masks & ~bitmask]
            total += float(np.dot(w, a_set - a_clear))
        return total
    if estimator == "mc":
        if budget is None or budget < 1:
            raise ValidationError("mc mode needs a positive environment budget")
        origin = (0,) * box.dimension
        y_idx = box.index_of(y)
        total = 0.0
        from .environment import flip_site

        for i in range(budget):
            env = sample_environment(box, r, stream_key(seed, 0x5253, i))
            a_flip = np.empty(2)
            acc = 0.0
            for z_idx in range(box.site_count):
                if z_idx == y_idx:
                    continue
                z = box.site_of(z_idx)
                for v in (0, 1):
                    a_flip[v] = quenched_cost(box, flip_site(env, z, v), y, origin, lam=lam)
                acc += a_flip[1] - a_flip[0]
            total += acc
        return total / budget
    raise ValidationError(f"unknown estimator {estimator!r}; expected 'exact' or 'mc'")


def flip_ratio_table(box, env, y, zs, psi_box_radius=None, lam=0.0, tol=DEFAULT_TOL):
    """Rows (z, omega_z, log_ratio, psi, hit_prob, bound_rhs) for each z.

    ``psi_box_radius`` recomputes the return weight on an enlarged box (the
    same seed re-threshold keeps the potential consistent on the overlap)
    as a proxy for the unrestricted quantity; the bound_rhs column is
    4 * psi * hit_prob.
    """
    field = solve_travel_field(box, env, y, lam=lam, tol=tol)
    origin_idx = box.origin_index
    psi_env, psi_box = env, box
    if psi_box_radius is not None and psi_box_radius > box.radius:
        from .lattice import build_box

        psi_box = build_box(box.dimension, psi_box_radius)
        if env.parameter_r is None or env.seed is None:
            raise ValidationError("enlarged-box psi needs a sampled environment (r and seed)")
        psi_env = sample_environment(psi_box, env.parameter_r, env.seed)
        inner = box.coordinates()
        outer_idx = np.array([psi_box.index_of(tuple(c)) for c in inner])
        if not np.array_equal(psi_env.values[outer_idx], env.values):
            raise SolverError("enlarged environment disagrees with the original on the overlap")
    rows = []
    for z in zs:
        rep = flip_log_ratio(box, env, y, z, tol=tol)
        psi = return_weight_psi(psi_box, psi_env, z, lam=lam, tol=tol)
        hit = _hit_before_from_field(box, env, field, box.index_of(z), origin_idx, lam, tol)
        rows.append(
            {
                "z": rep.site,
                "omega_z": rep.omega_at_z,
                "log_ratio": rep.log_ratio,
                "psi": psi,
                "hit_prob": hit,
                "bound_rhs": 4.0 * psi * hit,
            }
        )
    return rows


def range_upper_bound_constant(d: int, r: float) -> float:
    """(1 + log 2d) / (-log(e^{-1} + (1 - e^{-1}) r)), the expected-range envelope."""
    return (1.0 + math.log(2 * d)) / (-math.log(math.exp(-1.0) + (1.0 - math.exp(-1.0)) * r))


def min_l1_visits(y) -> int:
    """Any path from 0 to y visits at least this many distinct sites before y."""
    return l1_norm(y)


def save_field(field: QuenchedField, path) -> None:
    """Dump a solved field as `index mantissa` lines with a log_scale footer."""
    with open(path, "w") as fh:
        for idx, m in enumerate(field.mantissa):
            fh.write(f"{idx} {float(m)!r}\n")
        fh.write(f"log_scale {field.log_scale!r}\n")


def load_field_dump(path):
    """(mantissa array, log_scale) from a field dump; exact round-trip."""
    mantissa = []
    log_scale = None
    with open(path) as fh:
        for line in fh:
            head, val = line.split()
            if head == "log_scale":
                log_scale = float(val)
                break
            if int(head) != len(mantissa):
                raise ValidationError(f"field dump out of order at index {head}")
            mantissa.append(float(val))
    if log_scale is None:
        raise ValidationError("field dump is missing the log_scale footer")
    return np.array(mantissa), log_scale

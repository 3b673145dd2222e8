"""Empirical checks of the Lipschitz-in-r bounds and rate-function transfer.

Every check compares a measured difference of exponents (or rate
functions) between two densities p < q against the closed-form bound
(1 - e^{-1})(q - p) from below, or a log-Lipschitz envelope from above,
and reports a margin with a verdict.  A cell only FAILs when the margin
is more than three standard errors below zero; exact-backend cells carry
zero error, so there any negative margin beyond roundoff fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .annealed import annealed_cost_exact, annealed_derivative_formula
from .environment import ENUMERATION_GUARD
from .errors import NonConcaveError, ValidationError
from .lattice import build_box, l1_norm, linf_norm
from .lyapunov import quenched_cost_samples
from .solver import expected_quenched_cost

QUENCHED = "QUENCHED"
ANNEALED = "ANNEALED"

QL_LOWER = "QL_LOWER"
QL_UPPER = "QL_UPPER"
AL_LOWER = "AL_LOWER"
AL_UPPER_LOG = "AL_UPPER_LOG"
AL_UPPER_LIN_D3 = "AL_UPPER_LIN_D3"
RATE_LOWER = "RATE_LOWER"
RATE_UPPER = "RATE_UPPER"

PASS = "PASS"
PASS_WITHIN_ERROR = "PASS_WITHIN_ERROR"
FAIL = "FAIL"

AT_BRACKET_MAX = "AT_BRACKET_MAX"

LOWER_SLOPE = 1.0 - math.exp(-1.0)

_EXACT_TOL = 1e-10


def _l1f(x) -> float:
    # lattice.l1_norm is integer-valued; rate-function inputs are real
    return float(sum(abs(float(c)) for c in x))


@dataclass(frozen=True)
class BoundCell:
    bound_id: str
    p: float
    q: float
    x: tuple
    measured: float
    bound: float | None
    margin: float | None
    stderr: float
    verdict: str


@dataclass(frozen=True)
class BoundReport:
    bound_id: str
    lam: float
    cells: tuple

    @property
    def worst_margin(self):
        margins = [c.margin for c in self.cells if c.margin is not None]
        return min(margins) if margins else None

    @property
    def failed(self) -> bool:
        return any(c.verdict == FAIL for c in self.cells)


def _verdict(margin, stderr):
    if margin >= 0.0 or (stderr == 0.0 and margin >= -_EXACT_TOL):
        return PASS
    if margin >= -3.0 * stderr:
        return PASS_WITHIN_ERROR
    return FAIL


def range_upper_slope(d, q0) -> float:
    """The explicit log-Lipschitz constant (1 + log 2d) / -log(e^{-1} + (1 - e^{-1}) q0)."""
    return (1.0 + math.log(2 * d)) / -math.log(math.exp(-1.0) + (1.0 - math.exp(-1.0)) * q0)


# ---------------------------------------------------------------------------
# exponent backends


@dataclass(frozen=True)
class ExactBackend:
    """Per-step exponents by full environment enumeration at a fixed distance.

    Deterministic and error-free, so bound margins are exact; the
    pre-limit inequalities hold at every box size, which is what makes
    a finite n a legitimate stand-in for the n -> infinity limit.
    """

    d: int
    n: int = 2
    pad: int = 1
    guard: int = ENUMERATION_GUARD

    def exponent(self, kind, r, lam, v):
        y = tuple(self.n * c for c in v)
        box = build_box(self.d, linf_norm(y) + self.pad)
        if kind == QUENCHED:
            mean_cost, _ = expected_quenched_cost(box, y, r, lam=lam, guard=self.guard)
            return mean_cost / self.n, 0.0
        return annealed_cost_exact(box, r, y, lam, self.guard).value / self.n, 0.0


@dataclass(frozen=True)
class MCBackend:
    """Per-step exponents from sampled environments.

    The environment stream depends only on (seed, replicate), never on
    r or lambda, so evaluations at different parameters are coupled and
    their differences carry much less noise than either term.
    """

    d: int
    n: int = 6
    replicates: int = 200
    seed: int = 0
    pad: int = 5
    workers: int | None = None

    def exponent(self, kind, r, lam, v):
        y = tuple(self.n * c for c in v)
        N = linf_norm(y) + self.pad
        a_vals = quenched_cost_samples(
            self.d, r, lam, y, N, self.replicates, self.seed, workers=self.workers
        )
        if kind == QUENCHED:
            m = a_vals.mean()
            se = a_vals.std(ddof=1) / math.sqrt(a_vals.size)
            return m / self.n, se / self.n
        e_vals = np.exp(-a_vals)
        mean_e = e_vals.mean()
        se = e_vals.std(ddof=1) / math.sqrt(e_vals.size) / mean_e
        return -math.log(mean_e) / self.n, se / self.n


def default_backend(d, exact=True, **kwargs):
    return ExactBackend(d, **kwargs) if exact else MCBackend(d, **kwargs)


# ---------------------------------------------------------------------------
# rate functions


@dataclass(frozen=True)
class RateFunctionValue:
    kind: str
    r: float
    x: tuple
    value: float
    supremizer: object
    bracket: tuple
    evaluations: int


def _direction_and_scale(x):
    """Split a real vector into scale * primitive-integer-direction."""
    fracs = [Fraction(float(c)).limit_denominator(10**6) for c in x]
    denom = math.lcm(*(f.denominator for f in fracs))
    ints = [int(f * denom) for f in fracs]
    g = math.gcd(*(abs(c) for c in ints))
    if g == 0:
        return 0.0, tuple(0 for _ in x)
    v = tuple(c // g for c in ints)
    return g / denom, v


def rate_function(
    d,
    r,
    x,
    kind=QUENCHED,
    backend=None,
    bracket_start=2.0,
    bracket_cap=64.0,
    tol=1e-6,
    max_evals=200,
) -> RateFunctionValue:
    """sup over lambda >= 0 of (exponent(lambda, x) - lambda), by golden section.

    The objective is concave in lambda, so a bracket is grown by doubling
    until the function turns over, then narrowed.  Evaluations are cached
    per lambda and reuse one environment stream, so comparisons between
    nearby lambdas are paired.  A descending-then-ascending pattern beyond
    three combined standard errors is reported as an error rather than
    silently searched over.
    """
    if not 0.0 < r <= 1.0:
        raise ValidationError(f"need 0 < r <= 1, got r={r}")
    if kind not in (QUENCHED, ANNEALED):
        raise ValidationError(f"unknown kind {kind!r}")
    x = tuple(float(c) for c in x)
    norm = _l1f(x)
    if norm == 0.0:
        return RateFunctionValue(kind, float(r), x, 0.0, 0.0, (0.0, 0.0), 0)
    if norm >= 1.0 - 1e-12:
        raise ValidationError(
            f"l1(x) = {norm} is outside the open unit ball; the supremum need not be attained"
        )
    scale, v = _direction_and_scale(x)
    if backend is None:
        backend = ExactBackend(d)

    cache = {}

    def g(lam):
        hit = cache.get(lam)
        if hit is None:
            val, se = backend.exponent(kind, r, lam, v)
            hit = (scale * val - lam, scale * se)
            cache[lam] = hit
        return hit

    at_cap = False
    g(0.0)
    hi = bracket_start
    g(hi)
    while g(hi)[0] >= g(hi / 2.0)[0]:
        if hi >= bracket_cap:
            at_cap = True
            break
        hi = min(2.0 * hi, bracket_cap)
        g(hi)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, hi
    c = b - (b - a) * invphi
    e = a + (b - a) * invphi
    while b - a > tol and len(cache) < max_evals:
        if g(c)[0] >= g(e)[0]:
            b, e = e, c
            c = b - (b - a) * invphi
        else:
            a, c = c, e
            e = a + (b - a) * invphi

    _check_unimodal(cache)
    best_lam = max(cache, key=lambda lam: cache[lam][0])
    value = cache[best_lam][0]
    supremizer = AT_BRACKET_MAX if at_cap else best_lam
    return RateFunctionValue(kind, float(r), x, value, supremizer, (0.0, hi), len(cache))


def _check_unimodal(cache):
    pts = sorted(cache.items())
    vals = [gv for _, (gv, _) in pts]
    ses = [se for _, (_, se) in pts]
    peak = max(range(len(vals)), key=vals.__getitem__)
    for i in range(len(vals) - 1):
        rising = i < peak
        lhs, rhs = vals[i], vals[i + 1]
        slack = 3.0 * (ses[i] + ses[i + 1]) + 1e-9
        ok = rhs >= lhs - slack if rising else rhs <= lhs + slack
        if not ok:
            triple = (pts[max(i - 1, 0)][0], pts[i][0], pts[i + 1][0])
            raise NonConcaveError(
                f"objective not unimodal beyond noise near lambda = {pts[i][0]}", triple
            )


# ---------------------------------------------------------------------------
# bound grids


def check_quenched_bounds(
    d, p, q, ys=((2,),), lam=0.0, backend=None
) -> tuple[BoundReport, BoundReport]:
    """Lower- and upper-bound reports for differences of quenched exponents.

    Lower cells test (E_p[a] - E_q[a]) / l1(y) >= (1 - e^{-1})(q - p);
    upper cells just report the measured Lipschitz ratio, since the
    matching constant is not explicit.
    """
    if not 0.0 < p <= q < 1.0:
        raise ValidationError(f"need 0 < p <= q < 1, got p={p}, q={q}")
    if backend is None:
        backend = ExactBackend(d, n=1)
    bound = LOWER_SLOPE * (q - p)
    lower, upper = [], []
    for y in ys:
        y = tuple(int(c) for c in y)
        ap, se_p = backend.exponent(QUENCHED, p, lam, y)
        aq, se_q = backend.exponent(QUENCHED, q, lam, y)
        norm = l1_norm(y)
        measured = (ap - aq) / norm
        stderr = math.hypot(se_p, se_q) / norm
        margin = measured - bound
        lower.append(
            BoundCell(QL_LOWER, p, q, y, measured, bound, margin, stderr, _verdict(margin, stderr))
        )
        ratio = measured / (q - p) if q > p else 0.0
        upper.append(
            BoundCell(QL_UPPER, p, q, y, ratio, None, None, stderr / (q - p) if q > p else 0.0, PASS)
        )
    return (
        BoundReport(QL_LOWER, lam, tuple(lower)),
        BoundReport(QL_UPPER, lam, tuple(upper)),
    )


def check_annealed_bounds(
    d,
    p,
    q,
    ys=((2,),),
    lam=0.0,
    backend=None,
    r_grid=(0.05, 0.1, 0.2, 0.4, 0.6, 0.9),
    derivative_replicates=20000,
    seed=0,
) -> tuple[BoundReport, ...]:
    """Annealed analogues: the same lower bound, a log-Lipschitz upper
    bound with the explicit range constant at q0 = p, and (for d >= 3)
    a boundedness check of -db/dr across small r, where the log bound
    sharpens to a linear one."""
    if not 0.0 < p <= q < 1.0:
        raise ValidationError(f"need 0 < p <= q < 1, got p={p}, q={q}")
    if backend is None:
        backend = ExactBackend(d, n=1)
    low_bound = LOWER_SLOPE * (q - p)
    up_bound = range_upper_slope(d, p) * (math.log(q) - math.log(p)) if q > p else 0.0
    lower, upper = [], []
    for y in ys:
        y = tuple(int(c) for c in y)
        bp, se_p = backend.exponent(ANNEALED, p, lam, y)
        bq, se_q = backend.exponent(ANNEALED, q, lam, y)
        norm = l1_norm(y)
        measured = (bp - bq) / norm
        stderr = math.hypot(se_p, se_q) / norm
        margin = measured - low_bound
        lower.append(
            BoundCell(AL_LOWER, p, q, y, measured, low_bound, margin, stderr, _verdict(margin, stderr))
        )
        up_margin = up_bound - measured
        upper.append(
            BoundCell(
                AL_UPPER_LOG, p, q, y, measured, up_bound, up_margin, stderr, _verdict(up_margin, stderr)
            )
        )
    reports = [
        BoundReport(AL_LOWER, lam, tuple(lower)),
        BoundReport(AL_UPPER_LOG, lam, tuple(upper)),
    ]
    if d >= 3:
        reports.append(
            _d3_derivative_ratio(d, ys[0], r_grid, derivative_replicates, seed)
        )
    return tuple(reports)


def _d3_derivative_ratio(d, y, r_grid, replicates, seed) -> BoundReport:
    """max/min of -db/dr over the r grid; boundedness (ratio <= 10) is the
    empirical face of the linear-in-(q-p) strengthening for d >= 3."""
    y = tuple(int(c) for c in y)
    box = build_box(d, max(1, linf_norm(y)))
    derivs = []
    for r in r_grid:
        rep = annealed_derivative_formula(box, r, y, replicates=replicates, seed=seed)
        derivs.append((rep.formula_value, rep.formula_se))
    vals = np.array([v for v, _ in derivs])
    ses = np.array([s for _, s in derivs])
    hi_i, lo_i = int(vals.argmax()), int(vals.argmin())
    ratio = vals[hi_i] / vals[lo_i]
    se = ratio * math.hypot(ses[hi_i] / vals[hi_i], ses[lo_i] / vals[lo_i])
    margin = 10.0 - ratio
    cell = BoundCell(
        AL_UPPER_LIN_D3,
        float(min(r_grid)),
        float(max(r_grid)),
        y,
        float(ratio),
        10.0,
        float(margin),
        float(se),
        _verdict(margin, se),
    )
    return BoundReport(AL_UPPER_LIN_D3, 0.0, (cell,))


def check_rate_bounds(
    d, p, q, xs=((0.5,),), backend=None, search=None
) -> tuple[BoundReport, ...]:
    """Rate-function transfer: (I_p - I_q)/l1(x) >= (1 - e^{-1})(q - p) and
    the annealed analogue, plus report-only Lipschitz ratios.

    Directions must lie in the open l1-unit ball; on the boundary the
    supremizing lambda can run away, so those inputs are rejected.
    """
    if not 0.0 < p <= q < 1.0:
        raise ValidationError(f"need 0 < p <= q < 1, got p={p}, q={q}")
    search = search or {}
    bound = LOWER_SLOPE * (q - p)
    lower_cells = {RATE_LOWER: [], AL_LOWER: []}
    upper_cells = []
    for x in xs:
        x = tuple(float(c) for c in x)
        norm = _l1f(x)
        if norm >= 1.0 - 1e-12:
            raise ValidationError(f"l1(x) = {norm} is not inside the open unit ball")
        for kind, cell_id in ((QUENCHED, RATE_LOWER), (ANNEALED, AL_LOWER)):
            rp = rate_function(d, p, x, kind=kind, backend=backend, **search)
            rq = rate_function(d, q, x, kind=kind, backend=backend, **search)
            measured = (rp.value - rq.value) / norm
            stderr = 0.0
            margin = measured - bound
            lower_cells[cell_id].append(
                BoundCell(cell_id, p, q, x, measured, bound, margin, stderr, _verdict(margin, stderr))
            )
            if kind == QUENCHED and q > p:
                upper_cells.append(
                    BoundCell(RATE_UPPER, p, q, x, measured / (q - p), None, None, 0.0, PASS)
                )
    annealed_lower = [
        BoundCell(RATE_LOWER, c.p, c.q, c.x, c.measured, c.bound, c.margin, c.stderr, c.verdict)
        for c in lower_cells[AL_LOWER]
    ]
    return (
        BoundReport(RATE_LOWER, 0.0, tuple(lower_cells[RATE_LOWER] + annealed_lower)),
        BoundReport(RATE_UPPER, 0.0, tuple(upper_cells)),
    )

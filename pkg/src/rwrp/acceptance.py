"""Self-verification suite: twelve release gates, shared by `rwrp verify`
and the test suite.

Each check returns a CheckResult; a build passes when every result does.
Timed checks call warm_up() first so compiled-kernel startup is not
billed to the measured operation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import annealed as an
from . import bounds as bd
from . import lyapunov as ly
from . import solver as sv
from .driver import stream_seed
from .environment import constant_environment, sample_environment
from .lattice import build_box, l1_norm

E_INV = math.exp(-1.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    @property
    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


_warmed = False


def warm_up():
    """Compile and touch every hot kernel on a toy instance."""
    global _warmed
    if _warmed:
        return
    box = build_box(1, 1)
    env = constant_environment(box, 0)
    sv.solve_travel_field(box, env, (1,))
    ly.quenched_cost_samples(1, 0.5, 0.0, (1,), 1, 2, 0)
    an.annealed_cost_path_mc(box, 0.5, (1,), replicates=4, seed=0)
    _warmed = True


def _timed(fn, repeats=3):
    best = math.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def check_closed_form_solves() -> CheckResult:
    """d=1, N=1 fields with flat potentials against the hand solutions."""
    warm_up()
    box = build_box(1, 1)
    want = {0: 2.0 / 3.0, 1: (E_INV / 2.0) / (1.0 - math.exp(-2.0) / 4.0)}
    worst_rel, worst_ms = 0.0, 0.0
    for value, target in want.items():
        env = constant_environment(box, value)
        field, secs = _timed(lambda: sv.solve_travel_field(box, env, (1,)))
        rel = abs(field.value_at((0,)) - target) / target
        worst_rel = max(worst_rel, rel)
        worst_ms = max(worst_ms, secs * 1e3)
    ok = worst_rel <= 1e-10 and worst_ms < 1.0
    return CheckResult(
        "closed form solves",
        ok,
        f"max rel err {worst_rel:.2e} (tol 1e-10), max time {worst_ms:.3f} ms (limit 1 ms)",
    )


_SMALL_GRID = (
    (1, 1, (1,)),
    (1, 2, (2,)),
    (2, 1, (1, 0)),
)


def check_russo_identity() -> CheckResult:
    """Flip-sum derivative equals the analytic d/dr of the enumerated mean cost."""
    worst = 0.0
    for d, N, y in _SMALL_GRID:
        box = build_box(d, N)
        for r in (0.2, 0.5, 0.8):
            _, deriv = sv.expected_quenched_cost(box, y, r)
            rhs = sv.russo_rhs(box, r, y, estimator="exact")
            worst = max(worst, abs(rhs + deriv) / abs(rhs))
    ok = worst <= 1e-8
    return CheckResult(
        "russo identity", ok, f"max rel mismatch {worst:.2e} over 9 cells (tol 1e-8)"
    )


def check_quenched_lower_bound_grid() -> CheckResult:
    """Pre-limit mean-cost differences against (1 - e^{-1})(q - p) l1(y)."""
    ps = (0.1, 0.3, 0.5, 0.7, 0.9)
    worst = math.inf
    cells = 0
    for d, N, y in _SMALL_GRID:
        box = build_box(d, N)
        means = {r: sv.expected_quenched_cost(box, y, r)[0] for r in ps}
        for i, p in enumerate(ps):
            for q in ps[i + 1 :]:
                margin = (means[p] - means[q]) - (1.0 - E_INV) * (q - p) * l1_norm(y)
                worst = min(worst, margin)
                cells += 1
    ok = worst >= -1e-10
    return CheckResult(
        "quenched lower bound grid",
        ok,
        f"worst margin {worst:.3e} over {cells} exact cells (floor -1e-10)",
    )


def check_annealed_derivative_identity() -> CheckResult:
    """-db/dr: flip sum vs finite difference vs the local-time path estimator."""
    warm_up()
    worst_rel = 0.0
    worst_z = 0.0
    for d, N, y in _SMALL_GRID:
        box = build_box(d, N)
        for r in (0.2, 0.5, 0.8):
            rep = an.derivative_report(box, r, y, replicates=10**5, seed=11)
            rel = abs(rep.flip_value - rep.fd_value) / abs(rep.flip_value)
            z = abs(rep.formula_value - rep.flip_value) / rep.formula_se
            worst_rel = max(worst_rel, rel)
            worst_z = max(worst_z, z)
    ok = worst_rel <= 1e-6 and worst_z <= 3.0
    return CheckResult(
        "annealed derivative identity",
        ok,
        f"flip-vs-fd rel {worst_rel:.2e} (tol 1e-6), path-MC worst z {worst_z:.2f} (limit 3)",
    )


def check_estimator_triangle() -> CheckResult:
    """All three annealed-cost estimators agree pairwise within 3 errors."""
    warm_up()
    box = build_box(1, 2)
    y = (2,)
    worst = 0.0
    for r in (0.2, 0.5, 0.8):
        exact = an.annealed_cost_exact(box, r, y)
        env = an.annealed_cost_env_mc(box, r, y, replicates=10**5, seed=5)
        path = an.annealed_cost_path_mc(box, r, y, replicates=10**5, seed=5)
        for a, b in ((exact, env), (exact, path), (env, path)):
            se = math.hypot(a.std_error, b.std_error)
            worst = max(worst, abs(a.value - b.value) / se)
    ok = worst <= 3.0
    return CheckResult(
        "estimator triangle", ok, f"worst pairwise z {worst:.2f} over 9 pairs (limit 3)"
    )


def check_expected_range_bounds() -> CheckResult:
    """Average tilted-walk range per unit distance sits in [1, envelope]."""
    warm_up()
    d, N, y = 2, 6, (3, 0)
    box = build_box(d, N)
    norm = l1_norm(y)
    status = []
    ok = True
    for r in (0.3, 0.6):
        vals = np.array(
            [
                sv.expected_range(box, sample_environment(box, r, stream_seed(21, i)), y) / norm
                for i in range(200)
            ]
        )
        mean = vals.mean()
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        upper = sv.range_upper_bound_constant(d, r)
        ok = ok and mean >= 1.0 - 3.0 * se and mean <= upper + 3.0 * se
        status.append(f"r={r}: 1 <= {mean:.3f} (se {se:.3f}) <= {upper:.3f}")
    return CheckResult("expected range bounds", ok, "; ".join(status))


def check_flip_ratio_bound() -> CheckResult:
    """|log cost ratio of a one-site flip| <= 4 psi P(hit z before y)."""
    d, N, y, r = 2, 5, (3, 0), 0.5
    box = build_box(d, N)
    violations = []
    pairs = 0
    for i in range(20):
        seed = stream_seed(33, i)
        env = sample_environment(box, r, seed)
        rng = np.random.default_rng(i)
        zs = []
        while len(zs) < 5:
            z = tuple(int(c) for c in rng.integers(-N, N + 1, size=d))
            if z != y and z not in zs:
                zs.append(z)
        for row in sv.flip_ratio_table(box, env, y, zs, psi_box_radius=15):
            pairs += 1
            if abs(row["log_ratio"]) > row["bound_rhs"] + 1e-9:
                violations.append(f"seed={seed} z={row['z']}")
    ok = not violations and pairs >= 100
    detail = f"{pairs} (environment, z) pairs, {len(violations)} violations"
    if violations:
        detail += "; reproduce with " + ", ".join(violations[:5])
    return CheckResult("flip ratio bound", ok, detail)


def check_monotone_coupling() -> CheckResult:
    """Coupled potentials at p < q give pointwise-ordered costs, all trials."""
    warm_up()
    p, q = 0.3, 0.7
    a_p = ly.quenched_cost_samples(1, p, 0.0, (2,), 3, 1000, 17)
    a_q = ly.quenched_cost_samples(1, q, 0.0, (2,), 3, 1000, 17)
    bad = int((a_p < a_q - 1e-12).sum())
    return CheckResult(
        "monotone coupling", bad == 0, f"{1000 - bad}/1000 trials ordered (need all)"
    )


def check_lyapunov_schedule() -> CheckResult:
    """Normalized costs shrink with distance; the estimate lands in (0, 1 + log 2d]."""
    warm_up()
    pt = ly.estimate_quenched_lyapunov(2, 0.5, 0.0, (1, 0), (2, 4, 8), replicates=100, seed=3)
    mono = all(
        e2.value <= e1.value + 3.0 * math.hypot(e1.std_error, e2.std_error)
        for e1, e2 in zip(pt.entries, pt.entries[1:])
    )
    envelope = 1.0 + math.log(4.0)
    in_range = 0.0 < pt.extrapolated <= envelope
    ok = mono and in_range
    seq = ", ".join(f"{e.value:.4f}" for e in pt.entries)
    return CheckResult(
        "lyapunov schedule",
        ok,
        f"normalized costs [{seq}] non-increasing={mono}, extrapolated {pt.extrapolated:.4f} in (0, {envelope:.4f}]",
    )


def check_rate_function_transfer() -> CheckResult:
    """Zero at the origin, tight bracket, and the rate-difference lower bound."""
    zero = bd.rate_function(1, 0.5, (0.0,))
    backend = bd.ExactBackend(1)
    x = (0.5,)
    rp = bd.rate_function(1, 0.3, x, backend=backend)
    rq = bd.rate_function(1, 0.6, x, backend=backend)
    margin = (rp.value - rq.value) / 0.5 - (1.0 - E_INV) * 0.3
    evals = max(rp.evaluations, rq.evaluations)
    ok = zero.value == 0.0 and evals <= 60 and margin >= -1e-8
    return CheckResult(
        "rate function transfer",
        ok,
        f"I(0)={zero.value}, max evaluations {evals} (limit 60), margin {margin:.3e} (floor -1e-8)",
    )


def check_determinism() -> CheckResult:
    """Same seed, different worker counts: bit-identical estimates."""
    warm_up()
    box = build_box(2, 5)
    y = (2, 0)
    runs = [
        an.annealed_cost_env_mc(box, 0.5, y, replicates=500, seed=9, workers=w)
        for w in (1, 8)
    ]
    paths = [an.annealed_cost_path_mc(box, 0.5, y, replicates=2000, seed=9) for _ in range(2)]
    ok = (
        runs[0].value == runs[1].value
        and runs[0].std_error == runs[1].std_error
        and paths[0].value == paths[1].value
    )
    return CheckResult(
        "determinism",
        ok,
        f"env-mc 1 vs 8 workers equal={runs[0].value == runs[1].value}, "
        f"path-mc rerun equal={paths[0].value == paths[1].value}",
    )


def check_performance_floor() -> CheckResult:
    """One big quenched solve under a second; a 10^4-replicate batch under 5 min."""
    warm_up()
    box = build_box(3, 15)
    env = sample_environment(box, 0.5, 123)
    _, solve_secs = _timed(lambda: sv.solve_travel_field(box, env, (15, 0, 0), tol=1e-10), repeats=1)
    t0 = time.perf_counter()
    an.annealed_cost_env_mc(build_box(2, 20), 0.5, (5, 0), replicates=10**4, seed=2, workers=8)
    batch_secs = time.perf_counter() - t0
    ok = solve_secs < 1.0 and batch_secs < 300.0
    return CheckResult(
        "performance floor",
        ok,
        f"d=3 N=15 solve {solve_secs * 1e3:.0f} ms (limit 1000), "
        f"10^4 env-mc replicates {batch_secs:.1f} s (limit 300)",
    )


CHECKS = (
    check_closed_form_solves,
    check_russo_identity,
    check_quenched_lower_bound_grid,
    check_annealed_derivative_identity,
    check_estimator_triangle,
    check_expected_range_bounds,
    check_flip_ratio_bound,
    check_monotone_coupling,
    check_lyapunov_schedule,
    check_rate_function_transfer,
    check_determinism,
    check_performance_floor,
)


def run_all(profile: str = "desk"):
    """Run every check in order; `desk` is the only profile so far."""
    if profile != "desk":
        raise ValueError(f"unknown profile {profile!r}")
    warm_up()
    return [check() for check in CHECKS]

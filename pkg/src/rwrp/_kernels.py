"""Numba kernels: Gauss-Seidel sweeps, batched solves and killed-walk sampling.

All randomness inside kernels reproduces rwrp.rng bit for bit (splitmix64
finalizer on key + counter * GAMMA, or key XOR site hash).  Batched kernels
write one output slot per replicate, so results are independent of the
numba thread count.
"""

import warnings

# the system TBB is one minor version too old for numba's optional layer;
# the workqueue fallback is fine for these kernels
warnings.filterwarnings("ignore", message=".*TBB.*", append=True)

import numba as nb
import numpy as np

U64 = np.uint64
_GAMMA = U64(0x9E3779B97F4A7C15)
_RES_FLOOR = 1e-300


@nb.njit(cache=True, inline="always")
def _mix64(z):
    z ^= z >> U64(30)
    z *= U64(0xBF58476D1CE4E5B9)
    z ^= z >> U64(27)
    z *= U64(0x94D049BB133111EB)
    return z ^ (z >> U64(31))


@nb.njit(cache=True, inline="always")
def _uniform(key, counter):
    return (_mix64(key + counter * _GAMMA) >> U64(11)) * 2.0**-53


@nb.njit(cache=True, inline="always")
def _site_uniform(key, site_hash):
    return (_mix64(key ^ site_hash) >> U64(11)) * 2.0**-53


@nb.njit(cache=True, nogil=True)
def gauss_seidel(factor, nbr, fixed_idx, fixed_val, tol, max_sweeps, relax):
    """Solve u(x) = factor(x) * mean of u over neighbors, with fixed sites.

    Sweeps run in flat-index order; the relative residual uses the floor
    1e-300 in the denominator.  Returns (u, residual, sweeps); the caller
    decides whether residual <= tol counts as convergence.
    """
    n = factor.shape[0]
    deg = nbr.shape[1]
    inv_deg = 1.0 / deg
    u = np.zeros(n)
    fixed = np.zeros(n, np.bool_)
    for t in range(fixed_idx.shape[0]):
        fixed[fixed_idx[t]] = True
        u[fixed_idx[t]] = fixed_val[t]
    res = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        for i in range(n):
            if fixed[i]:
                continue
            s = 0.0
            for k in range(deg):
                j = nbr[i, k]
                if j >= 0:
                    s += u[j]
            new = factor[i] * s * inv_deg
            if relax != 1.0:
                new = u[i] + relax * (new - u[i])
            u[i] = new
        res = 0.0
        for i in range(n):
            if fixed[i]:
                continue
            s = 0.0
            for k in range(deg):
                j = nbr[i, k]
                if j >= 0:
                    s += u[j]
            den = u[i] if u[i] > _RES_FLOOR else _RES_FLOOR
            r = abs(u[i] - factor[i] * s * inv_deg) / den
            if r > res:
                res = r
        if res <= tol:
            break
    return u, res, sweeps


@nb.njit(cache=True, parallel=True)
def solve_field_batch(env_keys, site_hashes, r, lam, nbr, y_idx, probe_idx, tol, max_sweeps):
    """Sample one Bernoulli environment per key and solve the travel field.

    Returns (u at probe site, residual, sweeps) per replicate.
    """
    n_rep = env_keys.shape[0]
    n = site_hashes.shape[0]
    out = np.empty(n_rep)
    resid = np.empty(n_rep)
    sweeps = np.empty(n_rep, np.int64)
    fixed_idx = np.empty(1, np.int64)
    fixed_idx[0] = y_idx
    fixed_val = np.ones(1)
    for i in nb.prange(n_rep):
        factor = np.empty(n)
        for s in range(n):
            omega = 0.0 if _site_uniform(env_keys[i], site_hashes[s]) < r else 1.0
            factor[s] = np.exp(-(omega + lam))
        u, res, sw = gauss_seidel(factor, nbr, fixed_idx, fixed_val, tol, max_sweeps, 1.0)
        out[i] = u[probe_idx]
        resid[i] = res
        sweeps[i] = sw
    return out, resid, sweeps


@nb.njit(cache=True, parallel=True)
def path_mc_batch(walk_keys, r, lam, nbr, origin_idx, y_idx, step_cap):
    """Killed-walk samples of the local-time product weight.

    phi = prod over visited z of (r + (1-r) e^{-visits(z)}) * e^{-lam * steps}
    on hitting trajectories, 0 otherwise.  phi_deriv = phi * sum over visited
    z of (1 - e^{-l}) / (r + e^{-l} (1-r)), the exact r-derivative of phi.
    Returns (phi, phi_deriv, hit flags, steps, capped flags).
    """
    n_rep = walk_keys.shape[0]
    n = nbr.shape[0]
    deg = U64(nbr.shape[1])
    phi = np.zeros(n_rep)
    phi_deriv = np.zeros(n_rep)
    hit = np.zeros(n_rep, np.bool_)
    steps_out = np.zeros(n_rep, np.int64)
    capped = np.zeros(n_rep, np.bool_)
    for i in nb.prange(n_rep):
        counts = np.zeros(n, np.int64)
        visited = np.empty(step_cap, np.int64)
        n_vis = 0
        pos = origin_idx
        steps = 0
        ctr = U64(0)
        reached = False
        killed = False
        while steps < step_cap:
            if counts[pos] == 0:
                visited[n_vis] = pos
                n_vis += 1
            counts[pos] += 1
            direction = _mix64(walk_keys[i] + ctr * _GAMMA) % deg
            ctr += U64(1)
            nxt = nbr[pos, direction]
            steps += 1
            if nxt < 0:
                killed = True
                break
            if nxt == y_idx:
                reached = True
                break
            pos = nxt
        capped[i] = not reached and not killed
        steps_out[i] = steps
        hit[i] = reached
        if reached:
            p = np.exp(-lam * steps)
            fsum = 0.0
            for k in range(n_vis):
                el = np.exp(-float(counts[visited[k]]))
                p *= r + (1.0 - r) * el
                fsum += (1.0 - el) / (r + el * (1.0 - r))
            phi[i] = p
            phi_deriv[i] = p * fsum
    return phi, phi_deriv, hit, steps_out, capped


@nb.njit(cache=True, parallel=True)
def escape_probability_mc(d, walk_keys, step_cap):
    """Fraction of free simple random walks not returning to 0 within step_cap."""
    n_rep = walk_keys.shape[0]
    deg = U64(2 * d)
    escaped = np.zeros(n_rep, np.bool_)
    for i in nb.prange(n_rep):
        pos = np.zeros(d, np.int64)
        returned = False
        for step in range(step_cap):
            raw = _mix64(walk_keys[i] + U64(step) * _GAMMA) % deg
            axis = raw // U64(2)
            sign = 1 if raw % U64(2) == U64(0) else -1
            pos[axis] += sign
            at_origin = True
            for a in range(d):
                if pos[a] != 0:
                    at_origin = False
                    break
            if at_origin:
                returned = True
                break
        escaped[i] = not returned
    return escaped

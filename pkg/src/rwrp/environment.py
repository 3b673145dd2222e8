"""Bernoulli potentials on a box: sampling, coupling, flips and enumeration.

A potential takes values in {0, 1}; the parameter r is the probability of a
zero.  Sampled environments retain their per-site uniforms, so the whole
family of parameters can be realized from one draw (monotone coupling:
value = 1 iff uniform >= r, hence p < q gives pointwise larger potentials
at p).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GuardError, ValidationError
from .lattice import BoxGeometry
from .rng import site_uniforms, stream_key

ENUMERATION_GUARD = 24


@dataclass(frozen=True)
class Environment:
    """A {0,1}-valued potential on a box.

    ``uniforms`` are present iff the environment was sampled (or coupled),
    in which case values[x] = 1 iff uniforms[x] >= parameter_r.
    """

    box: BoxGeometry
    values: np.ndarray
    uniforms: np.ndarray | None = None
    parameter_r: float | None = None
    seed: int | None = None

    def value_at(self, site) -> int:
        return int(self.values[self.box.index_of(site)])

    def __eq__(self, other):
        if not isinstance(other, Environment):
            return NotImplemented
        return (
            self.box.dimension == other.box.dimension
            and self.box.radius == other.box.radius
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class WeightedEnvironment:
    environment: Environment
    weight: float


def sample_environment(box: BoxGeometry, r: float, seed: int) -> Environment:
    """Draw an i.i.d. potential with P(value = 0) = r, keeping the uniforms."""
    if not 0.0 <= r <= 1.0:
        raise ValidationError(f"parameter r must lie in [0, 1], got {r}")
    key = stream_key(0x454E56, seed)
    uniforms = site_uniforms(key, box.site_hashes())
    values = (uniforms >= r).astype(np.int8)
    return Environment(box=box, values=values, uniforms=uniforms, parameter_r=float(r), seed=int(seed))


def environment_key(seed: int) -> int:
    """The RNG key under which :func:`sample_environment` draws its uniforms."""
    return stream_key(0x454E56, seed)


def couple(env: Environment, r_new: float) -> Environment:
    """Re-threshold the retained uniforms at a new parameter."""
    if env.uniforms is None:
        raise ValidationError("environment has no uniforms; it was not sampled")
    if not 0.0 <= r_new <= 1.0:
        raise ValidationError(f"parameter r must lie in [0, 1], got {r_new}")
    values = (env.uniforms >= r_new).astype(np.int8)
    return Environment(
        box=env.box, values=values, uniforms=env.uniforms, parameter_r=float(r_new), seed=env.seed
    )


def flip_site(env: Environment, z, v: int) -> Environment:
    """Copy of ``env`` with the value at ``z`` set to ``v``; uniforms dropped."""
    if v not in (0, 1):
        raise ValidationError(f"flip value must be 0 or 1, got {v}")
    idx = env.box.index_of(z)
    values = env.values.copy()
    values[idx] = v
    return Environment(box=env.box, values=values)


def from_values(box: BoxGeometry, values) -> Environment:
    """Explicitly constructed environment (no uniforms, no parameter)."""
    arr = np.asarray(values, dtype=np.int8)
    if arr.shape != (box.site_count,):
        raise ValidationError(f"values must have shape ({box.site_count},), got {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValidationError("potential values must be 0 or 1")
    return Environment(box=box, values=arr)


def constant_environment(box: BoxGeometry, value: int) -> Environment:
    return from_values(box, np.full(box.site_count, value, dtype=np.int8))


def enumerate_environments(box, relevant_sites, r, guard=ENUMERATION_GUARD):
    """Yield all 2^k potentials over ``relevant_sites`` with their weights.

    Sites outside ``relevant_sites`` are fixed to 0.  Weights are
    r^{#zeros} (1-r)^{#ones} over the relevant set and sum to 1.
    """
    if not 0.0 <= r <= 1.0:
        raise ValidationError(f"parameter r must lie in [0, 1], got {r}")
    idx = [box.index_of(s) for s in relevant_sites]
    k = len(idx)
    if k > guard:
        raise GuardError(
            f"{k} relevant sites exceed the enumeration guard of {guard} "
            f"(2^{k} environments); pass a larger guard explicitly to override"
        )
    for mask in range(1 << k):
        values = np.zeros(box.site_count, dtype=np.int8)
        ones = 0
        for bit, site_idx in enumerate(idx):
            if mask >> bit & 1:
                values[site_idx] = 1
                ones += 1
        weight = r ** (k - ones) * (1.0 - r) ** ones
        yield WeightedEnvironment(Environment(box=box, values=values), weight)


def mask_weights(k: int, masks: np.ndarray, r: float) -> np.ndarray:
    """Vectorized r^{#zeros} (1-r)^{#ones} for an array of k-bit masks."""
    ones = np.bitwise_count(masks.astype(np.uint64)).astype(np.int64)
    return r ** (k - ones) * (1.0 - r) ** ones


def mask_weight_derivatives(k: int, masks: np.ndarray, r: float) -> np.ndarray:
    """d/dr of :func:`mask_weights`, valid for 0 < r < 1."""
    ones = np.bitwise_count(masks.astype(np.uint64)).astype(np.int64)
    zeros = k - ones
    w = r**zeros * (1.0 - r) ** ones
    return w * (zeros / r - ones / (1.0 - r))


def save_environment(env: Environment, path) -> None:
    """ASCII dump: header ``d N r seed``, then ``index value`` per site."""
    r_txt = repr(env.parameter_r) if env.parameter_r is not None else "-"
    seed_txt = str(env.seed) if env.seed is not None else "-"
    with open(path, "w") as fh:
        fh.write(f"{env.box.dimension} {env.box.radius} {r_txt} {seed_txt}\n")
        for i, v in enumerate(env.values):
            fh.write(f"{i} {int(v)}\n")


def load_environment(path) -> Environment:
    """Inverse of :func:`save_environment`; bit-exact round trip.

    Environments whose header carries both r and seed are re-sampled so the
    coupling uniforms are restored as well.
    """
    from .lattice import build_box

    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 4:
            raise ValidationError(f"malformed environment header in {path}")
        d, N = int(head[0]), int(head[1])
        r = None if head[2] == "-" else float(head[2])
        seed = None if head[3] == "-" else int(head[3])
        box = build_box(d, N)
        values = np.zeros(box.site_count, dtype=np.int8)
        for line in fh:
            idx_txt, val_txt = line.split()
            values[int(idx_txt)] = int(val_txt)
    if r is not None and seed is not None:
        env = sample_environment(box, r, seed)
        if not np.array_equal(env.values, values):
            raise ValidationError(f"environment file {path} is inconsistent with its seed")
        return env
    return Environment(box=box, values=values, parameter_r=r, seed=seed)

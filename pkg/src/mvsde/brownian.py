"""Counter-based Gaussian increments with exact coarse/fine coupling.

Every fine-grid increment is addressable as a pure function of
(seed, path, particle, component, fine_step_index), so coarse and reference
runs can consume the same Brownian path without storing it, and any degree of
parallelism sees identical noise.

Seed-to-output mapping (stable across releases)
-----------------------------------------------
Keys are folded into a 64-bit state by the splitmix64 finalizer ``mix``:

    state0 = seed mod 2^64
    state_{i+1} = mix(state_i + 0x9E3779B97F4A7C15 + key_i)   (mod 2^64)

with the keys absorbed in the fixed order path, particle, component,
fine_step_index, and

    mix(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
            z *= 0x94D049BB133111EB; z ^= z >> 31          (all mod 2^64)

Two output words come from the final state s:

    w1 = mix(s + PHI), w2 = mix(s + 2*PHI)       PHI = 0x9E3779B97F4A7C15

and the standard-normal variate is Box-Muller from the top 53 bits:

    u1 = ((w1 >> 11) + 1) * 2^-53  in (0, 1],  u2 = (w2 >> 11) * 2^-53
    gaussian = sqrt(-2 ln u1) * cos(2 pi u2)

A level-k increment over coarse index i is the sum of its 2^k constituent
fine increments sqrt(h_ref) * gaussian(..., j), accumulated in ascending j
order after scaling, so the aggregation identity holds bit-exactly, not just
in distribution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["BrownianDriver", "gaussian", "increment", "IncrementStream"]

_PHI = 0x9E3779B97F4A7C15
_PHI2 = (2 * _PHI) % (1 << 64)
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_TWO53 = float(1 << 53)
_U64 = np.uint64


def _mix(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer; bijective on 64-bit words. Expects uint64 arrays."""
    z = z ^ (z >> _U64(30))
    z = z * _U64(_MUL1)
    z = z ^ (z >> _U64(27))
    z = z * _U64(_MUL2)
    return z ^ (z >> _U64(31))


def _fold(state: np.ndarray, key) -> np.ndarray:
    """Absorb one key field; the golden-ratio offset separates zero keys."""
    return _mix(state + _U64(_PHI) + key)


def _seed_key(seed) -> np.uint64:
    return _U64(int(seed) % (1 << 64))


def _index_key(value, name: str) -> np.uint64:
    v = int(value)
    if v != value or v < 0:
        raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
    return _U64(v)


def _normals(state: np.ndarray) -> np.ndarray:
    """Box-Muller N(0,1) array from a fully folded uint64 state array."""
    w1 = _mix(state + _U64(_PHI))
    w2 = _mix(state + _U64(_PHI2))
    u1 = ((w1 >> _U64(11)).astype(float) + 1.0) / _TWO53
    u2 = (w2 >> _U64(11)).astype(float) / _TWO53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class BrownianDriver:
    """Addressable noise source for one simulation family.

    seed: 64-bit key shared by every run of a study.
    h_ref: finest (reference) step; every served step is h_ref * 2^k.
    m: Wiener dimension.
    path_id: default Monte Carlo replica index for runs bound to this driver.
    """

    seed: int
    h_ref: float
    m: int = 1
    path_id: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.h_ref <= 1:
            raise ValueError(f"h_ref must lie in (0, 1], got {self.h_ref}")
        if self.m < 1:
            raise ValueError(f"Wiener dimension must be >= 1, got {self.m}")

    def level_of(self, h: float) -> int:
        """Integer k >= 0 with h == h_ref * 2^k exactly; error if misaligned."""
        if not 0 < h <= 1:
            raise ValueError(f"step size must lie in (0, 1], got {h}")
        k = round(math.log2(h / self.h_ref))
        if k < 0 or k > 62 or self.h_ref * float(1 << max(k, 0)) != h:
            raise ValueError(
                f"step {h} is not h_ref*2^k for h_ref={self.h_ref}; "
                "served steps must be dyadic multiples of the reference step"
            )
        return k


def gaussian(seed, path, particle, component, fine_step_index) -> float:
    """Standard-normal variate, a pure function of its five arguments."""
    state = np.full(1, _seed_key(seed))
    state = _fold(state, _index_key(path, "path"))
    state = _fold(state, _index_key(particle, "particle"))
    state = _fold(state, _index_key(component, "component"))
    state = _fold(state, _index_key(fine_step_index, "fine_step_index"))
    return float(_normals(state)[0])


def increment(driver: BrownianDriver, path, particle, component, coarse_index, level_k) -> float:
    """Level-k Brownian increment: exact ascending-order sum of 2^k fine pieces."""
    if int(level_k) != level_k or level_k < 0:
        raise ValueError(f"level_k must be a non-negative integer, got {level_k}")
    if int(coarse_index) != coarse_index or coarse_index < 0:
        raise ValueError(f"coarse_index must be a non-negative integer, got {coarse_index}")
    k = int(level_k)
    width = 1 << k
    start = int(coarse_index) * width
    state = np.full(width, _seed_key(driver.seed))
    state = _fold(state, _index_key(path, "path"))
    state = _fold(state, _index_key(particle, "particle"))
    state = _fold(state, _index_key(component, "component"))
    state = _fold(state, np.arange(start, start + width, dtype=np.uint64))
    scaled = math.sqrt(driver.h_ref) * _normals(state)
    return float(np.cumsum(scaled)[-1])


class IncrementStream:
    """Per-run view of a driver: (seed, path) and the particle/component grid
    folded once, one (N, m) block of level-k increments served per step.

    Stateless after construction; any number of threads may call step()
    concurrently and request steps in any order.
    """

    def __init__(self, driver: BrownianDriver, path, n_particles: int) -> None:
        if n_particles < 1:
            raise ValueError(f"need at least one particle, got {n_particles}")
        self.driver = driver
        self.path = int(path)
        self.n = int(n_particles)
        state = np.full((self.n, driver.m, 1), _seed_key(driver.seed))
        state = _fold(state, _index_key(path, "path"))
        state = _fold(state, np.arange(self.n, dtype=np.uint64)[:, None, None])
        state = _fold(state, np.arange(driver.m, dtype=np.uint64)[None, :, None])
        self._prefix = state  # (N, m, 1) uint64
        self._sqrt_href = math.sqrt(driver.h_ref)

    def step(self, coarse_index: int, level_k: int) -> np.ndarray:
        """(N, m) increments for one coarse step of size h_ref * 2^level_k."""
        if level_k < 0:
            raise ValueError(f"level_k must be >= 0, got {level_k}")
        width = 1 << int(level_k)
        start = int(coarse_index) * width
        fine = np.arange(start, start + width, dtype=np.uint64)
        state = _fold(self._prefix, fine[None, None, :])
        scaled = self._sqrt_href * _normals(state)
        if width == 1:
            return scaled[:, :, 0]
        return np.cumsum(scaled, axis=-1)[:, :, -1]

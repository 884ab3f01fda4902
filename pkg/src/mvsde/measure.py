"""Empirical measures over particle clouds and exact 1-d Wasserstein-2 distance."""
from __future__ import annotations

import itertools
import math

import numpy as np

__all__ = [
    "EmpiricalMeasure",
    "from_particles",
    "moment",
    "wasserstein2_1d",
    "wasserstein2_bruteforce",
]


class EmpiricalMeasure:
    """Uniform-weight atomic measure (1/N) * sum of point masses at the atoms.

    Snapshot view over an (N, d) particle array; the wrapped array is exposed
    read-only and callers must not mutate the underlying buffer while the
    measure is alive (the engine never does: state arrays are replaced, not
    written in place).

    ``mean_abs`` and the sorted atom norms are computed eagerly at
    construction so concurrent readers never race on a lazy cache. Every
    reduction runs over the *sorted* norms, which makes the cached values
    bit-identical under any permutation of the particles -- the schemes rely
    on this for exact exchangeability. Higher moments are memoized per order
    on first request.
    """

    __slots__ = ("atoms", "n", "d", "mean_abs", "_norms_sorted", "_moments")

    def __init__(self, atoms) -> None:
        arr = np.asarray(atoms, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("empirical measure needs a non-empty (N, d) atom array")
        if not np.isfinite(arr).all():
            raise ValueError("empirical measure rejects non-finite atoms")
        view = arr.view()
        view.flags.writeable = False
        self.atoms = view
        self.n, self.d = arr.shape
        if self.d == 1:
            norms = np.abs(arr[:, 0])
        else:
            norms = np.sqrt(np.einsum("nd,nd->n", arr, arr))
        self._norms_sorted = np.sort(norms)
        self.mean_abs = float(np.sum(self._norms_sorted) / self.n)
        self._moments: dict[float, float] = {2.0: float(np.sum(self._norms_sorted**2) / self.n)}

    def __repr__(self) -> str:  # diagnostic only
        return f"EmpiricalMeasure(n={self.n}, d={self.d}, mean_abs={self.mean_abs:.6g})"


def from_particles(states) -> EmpiricalMeasure:
    """Wrap an (N, d) state array (or length-N vector, read as d = 1)."""
    return EmpiricalMeasure(states)


def moment(mu: EmpiricalMeasure, q: float) -> float:
    """(1/N) * sum_i |x_i|^q for q >= 1."""
    if q < 1:
        raise ValueError(f"moment order must be >= 1, got {q}")
    key = float(q)
    cached = mu._moments.get(key)
    if cached is None:
        cached = float(np.sum(mu._norms_sorted**key) / mu.n)
        mu._moments[key] = cached
    return cached


def _check_1d_pair(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> None:
    if mu.d != 1 or nu.d != 1:
        raise ValueError("Wasserstein-2 by sorted pairing supports d = 1 atoms only")
    if mu.n != nu.n:
        raise ValueError(f"Wasserstein-2 needs equal atom counts, got {mu.n} and {nu.n}")


def wasserstein2_1d(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """W2 between two equal-size 1-d empirical measures.

    The optimal coupling of two uniform atomic measures on the line pairs
    the order statistics, so the distance is the root mean square gap of the
    sorted atoms.
    """
    _check_1d_pair(mu, nu)
    dx = np.sort(mu.atoms[:, 0]) - np.sort(nu.atoms[:, 0])
    return math.sqrt(float(np.sum(dx * dx)) / mu.n)


def wasserstein2_bruteforce(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Exact W2 by minimizing over all N! atom pairings. Test oracle, N <= 8."""
    _check_1d_pair(mu, nu)
    if mu.n > 8:
        raise ValueError("brute-force Wasserstein is limited to N <= 8 atoms")
    x = mu.atoms[:, 0]
    y = nu.atoms[:, 0]
    best = math.inf
    for perm in itertools.permutations(range(mu.n)):
        cost = 0.0
        for i, j in enumerate(perm):
            gap = x[i] - y[j]
            cost += gap * gap
        if cost < best:
            best = cost
    return math.sqrt(best / mu.n)

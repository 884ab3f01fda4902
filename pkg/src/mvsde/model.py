"""Model definitions: coefficient evaluators, constants, and spot-checks.

A model bundles the drift b(x, mu), diffusion sigma(x, mu), an optional
analytic Jacobian of the drift in x, and the constants under which the
long-time theory applies. Two concrete one-dimensional models ship with the
package; both feed the measure into the coefficients only through
mean_abs(mu) = (1/N) * sum |x_i|.

Evaluators are pure and must broadcast over a leading particle axis: x of
shape (d,) or (N, d), returning (d,)/(N, d) for the drift, (d, m)/(N, d, m)
for the diffusion, and (d, d)/(N, d, d) for the Jacobian.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .measure import EmpiricalMeasure, from_particles, moment, wasserstein2_1d

__all__ = [
    "AssumptionConstants",
    "ModelSpec",
    "AssumptionCheck",
    "AssumptionReport",
    "drift",
    "diffusion",
    "drift_jacobian",
    "make_example_4_1",
    "make_example_4_2",
    "make_model",
    "max_step",
    "check_assumptions",
]

_BUILTIN_NAMES = ("example-4.1", "example-4.2")


@dataclass(frozen=True)
class AssumptionConstants:
    """Constants of the dissipativity/regularity conditions the schemes need.

    K1 > K2 >= 0 drive contraction of coupled solutions; L1, kappa bound the
    drift's polynomial Lipschitz growth; L2 bounds |b(0, delta_0)|; a1 > a2,
    q_star, C make the radial drift dominate the diffusion; L_sigma, when
    present, is the squared-form global Lipschitz constant of the diffusion.
    poc_mode additionally demands K1 > 2*K2 (the regime in which the
    large-N proxy argument applies).
    """

    K1: float
    K2: float
    L1: float
    kappa: float
    L2: float
    q0: float
    a1: float
    a2: float
    C: float
    q_star: float
    L_sigma: Optional[float] = None
    poc_mode: bool = False

    def __post_init__(self) -> None:
        if not self.K1 > self.K2 >= 0:
            raise ValueError(f"need K1 > K2 >= 0, got K1={self.K1}, K2={self.K2}")
        if self.poc_mode and not self.K1 > 2 * self.K2:
            raise ValueError(f"poc_mode needs K1 > 2*K2, got K1={self.K1}, K2={self.K2}")
        if self.L1 <= 0:
            raise ValueError(f"need L1 > 0, got {self.L1}")
        if self.kappa < 1:
            raise ValueError(f"need kappa >= 1, got {self.kappa}")
        if self.L2 <= 0:
            raise ValueError(f"need L2 > 0, got {self.L2}")
        if self.q0 < 20:
            raise ValueError(f"need q0 >= 20, got {self.q0}")
        if not self.a1 > self.a2 >= 0:
            raise ValueError(f"need a1 > a2 >= 0, got a1={self.a1}, a2={self.a2}")
        if self.C < 0:
            raise ValueError(f"need C >= 0, got {self.C}")
        if self.q_star < 4 * self.q0 - 2:
            raise ValueError(f"need q_star >= 4*q0 - 2, got q_star={self.q_star}, q0={self.q0}")
        if self.L_sigma is not None:
            bound = (self.a1 - self.a2) / (5.0 * (2.0 * self.q0 - 1.0))
            if not 0 < self.L_sigma < bound:
                raise ValueError(
                    f"need 0 < L_sigma < (a1-a2)/(5(2q0-1)) = {bound}, got {self.L_sigma}"
                )

    def as_table(self) -> str:
        """Printable diagnostic table of the stored constants."""
        rows = [("K1", self.K1), ("K2", self.K2), ("L1", self.L1), ("kappa", self.kappa),
                ("L2", self.L2), ("q0", self.q0), ("a1", self.a1), ("a2", self.a2),
                ("C", self.C), ("q_star", self.q_star)]
        if self.L_sigma is not None:
            rows.append(("L_sigma", self.L_sigma))
        width = max(len(k) for k, _ in rows)
        lines = [f"  {k:<{width}}  {v:.17g}" for k, v in rows]
        lines.append(f"  {'poc_mode':<{width}}  {self.poc_mode}")
        return "\n".join(lines)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Immutable model bundle; safe to share across worker threads."""

    name: str
    d: int
    m: int
    constants: AssumptionConstants
    drift: Callable[[np.ndarray, EmpiricalMeasure], np.ndarray]
    diffusion: Callable[[np.ndarray, EmpiricalMeasure], np.ndarray]
    drift_jacobian: Optional[Callable[[np.ndarray, EmpiricalMeasure], np.ndarray]]
    initial_value: np.ndarray

    def __post_init__(self) -> None:
        if self.d < 1 or self.m < 1:
            raise ValueError(f"need d >= 1 and m >= 1, got d={self.d}, m={self.m}")
        x0 = np.array(self.initial_value, dtype=float).reshape(self.d).copy()
        x0.flags.writeable = False
        object.__setattr__(self, "initial_value", x0)
        origin = np.zeros(self.d)
        b0 = float(np.linalg.norm(self.drift(origin, from_particles(origin[None, :]))))
        if b0 > self.constants.L2:
            raise ValueError(f"|drift(0, delta_0)| = {b0} exceeds L2 = {self.constants.L2}")


def _require_finite(x: np.ndarray, label: str) -> None:
    if not np.isfinite(x).all():
        bad = np.argwhere(~np.isfinite(np.atleast_1d(x)))
        raise ValueError(f"{label}: non-finite component at index {tuple(bad[0])}")


def drift(model: ModelSpec, x, mu: EmpiricalMeasure) -> np.ndarray:
    """b(x, mu) for a single d-vector x."""
    x = np.asarray(x, dtype=float)
    _require_finite(x, "drift input")
    return np.asarray(model.drift(x, mu), dtype=float)


def diffusion(model: ModelSpec, x, mu: EmpiricalMeasure) -> np.ndarray:
    """sigma(x, mu), a d x m matrix, for a single d-vector x."""
    x = np.asarray(x, dtype=float)
    _require_finite(x, "diffusion input")
    return np.asarray(model.diffusion(x, mu), dtype=float)


def drift_jacobian(model: ModelSpec, x, mu: EmpiricalMeasure) -> np.ndarray:
    """d(b)/dx with the measure held fixed; central differences as fallback."""
    x = np.asarray(x, dtype=float)
    _require_finite(x, "jacobian input")
    if model.drift_jacobian is not None:
        return np.asarray(model.drift_jacobian(x, mu), dtype=float)
    return _fd_jacobian(model.drift, x, mu)


def _fd_jacobian(b: Callable, x: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
    """Central finite differences, step sqrt(machine eps) * max(1, |x|)."""
    x = np.asarray(x, dtype=float)
    batched = x.ndim > 1
    pts = x if batched else x[None, :]
    n, d = pts.shape
    delta = np.sqrt(np.finfo(float).eps) * np.maximum(1.0, np.sqrt(np.sum(pts * pts, axis=-1)))
    jac = np.empty((n, d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        hi = b(pts + delta[:, None] * e, mu)
        lo = b(pts - delta[:, None] * e, mu)
        jac[:, :, j] = (hi - lo) / (2.0 * delta[:, None])
    return jac if batched else jac[0]


# Built-in model 1: quadratic-decay drift 5x(-2-|x|) + measure coupling, linear diffusion x/8.

def _drift_ex1(x: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
    s = x[..., 0]
    return (5.0 * s * (-2.0 - np.abs(s)) + 0.25 * mu.mean_abs)[..., None]


def _diffusion_ex1(x: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
    return (x[..., 0] / 8.0)[..., None, None]


def _jacobian_ex1(x: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
    return (-10.0 - 10.0 * np.abs(x[..., 0]))[..., None, None]


# Built-in model 2: cubic drift with trigonometric and measure terms.

def _drift_ex2(x: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
    s = x[..., 0]
    out = -20.0 * s**3 - 20.0 * s * np.abs(s) - 5.0 * s + 0.25 * np.sin(s) + 0.1 * mu.mean_abs
    return out[..., None]


def _diffusion_ex2(x: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
    return (0.1 * x[..., 0] + 0.05 * mu.mean_abs)[..., None, None]


def _jacobian_ex2(x: np.ndarray, mu: EmpiricalMeasure) -> np.ndarray:
    s = x[..., 0]
    return (-60.0 * s**2 - 40.0 * np.abs(s) - 5.0 + 0.25 * np.cos(s))[..., None, None]


def make_example_4_1() -> ModelSpec:
    """One-dimensional model with drift 5x(-2-|x|) + 0.25*mean_abs, diffusion x/8."""
    constants = AssumptionConstants(
        K1=303.0 / 16.0,
        K2=1.0,
        L1=600.0,
        kappa=2.0,
        L2=1.0,
        q0=40.0,
        a1=12.0,
        a2=4.0,
        C=0.0,
        q_star=512.0,
        L_sigma=1.0 / 50.0,
        poc_mode=True,
    )
    return ModelSpec(
        name="example-4.1",
        d=1,
        m=1,
        constants=constants,
        drift=_drift_ex1,
        diffusion=_diffusion_ex1,
        drift_jacobian=_jacobian_ex1,
        initial_value=np.array([1.0]),
    )


def make_example_4_2() -> ModelSpec:
    """One-dimensional model with cubic drift, sine term, and measure-coupled diffusion."""
    constants = AssumptionConstants(
        K1=9.0,
        K2=3.0 / 20.0,
        L1=30000.0,
        kappa=3.0,
        L2=1.0,
        q0=40.0,
        a1=651.0 / 100.0,
        a2=177.0 / 200.0,
        C=0.25,
        q_star=158.0,
        L_sigma=1.0 / 80.0,
        poc_mode=True,
    )
    return ModelSpec(
        name="example-4.2",
        d=1,
        m=1,
        constants=constants,
        drift=_drift_ex2,
        diffusion=_diffusion_ex2,
        drift_jacobian=_jacobian_ex2,
        initial_value=np.array([1.0]),
    )


def make_model(name: str) -> ModelSpec:
    """Look up a built-in model by its config/CLI name."""
    if name == "example-4.1":
        return make_example_4_1()
    if name == "example-4.2":
        return make_example_4_2()
    raise ValueError(f"unknown model {name!r}; built-ins: {', '.join(_BUILTIN_NAMES)}")


def max_step(model: ModelSpec, p: float = 1.0) -> float:
    """Largest admissible step for moment order p: min of the contraction and
    dissipativity ceilings. Non-increasing in p and independent of N."""
    if p < 1:
        raise ValueError(f"need p >= 1, got {p}")
    c = model.constants
    h1 = min(1.0 / (2.0 * (c.K1 - c.K2)), 1.0)
    return min(h1, 1.0 / (p * (c.a1 - c.a2)))


@dataclass
class AssumptionCheck:
    """Outcome of one spot-checked inequality over all sampled tuples."""

    name: str
    samples: int
    worst_slack: float  # min over samples of RHS - LHS; negative beyond tolerance = violated
    passed: bool
    witness: Optional[dict] = None  # populated for the worst sample when failed

    def describe(self) -> str:
        status = "pass" if self.passed else "FAIL"
        line = f"{self.name}: {status} (worst slack {self.worst_slack:.6g} over {self.samples} samples)"
        if not self.passed and self.witness is not None:
            w = self.witness
            line += f"\n    witness x={w['x']}, y={w['y']}, lhs={w['lhs']:.6g}, rhs={w['rhs']:.6g}"
        return line


@dataclass
class AssumptionReport:
    model: str
    checks: list[AssumptionCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def describe(self) -> str:
        lines = [c.describe() for c in self.checks]
        lines.append("all checks passed" if self.passed else "ASSUMPTION CHECK FAILED")
        return "\n".join(lines)


# Sampling strata for the spot check. Pure uniform draws on the box almost
# never land in the small-|x| region where a too-large K1 actually breaks the
# monotonicity inequality, so scales cycle down to box/100, and measure pairs
# cycle through independent / identical / shifted / jittered constructions.
_SCALES = (1.0, 1.0, 1.0, 0.1, 0.01)


def check_assumptions(model: ModelSpec, sample_count: int = 10_000, seed: int = 0,
                      box: float = 10.0) -> AssumptionReport:
    """Randomized spot-check of the four coefficient inequalities.

    A pass is evidence, not proof; a violated inequality is reported with the
    witness tuple rather than raised. Supports d = 1 models (the exact
    Wasserstein distance used in the bounds is one-dimensional).
    """
    if sample_count < 1:
        raise ValueError(f"need sample_count >= 1, got {sample_count}")
    if model.d != 1:
        raise ValueError("assumption spot-check supports d = 1 models only")
    c = model.constants
    rng = np.random.default_rng(seed)
    names = ("contractive_monotonicity", "polynomial_lipschitz", "dissipativity")
    track: dict[str, dict] = {n: {"slack": np.inf, "witness": None} for n in names}
    if c.L_sigma is not None:
        track["diffusion_lipschitz"] = {"slack": np.inf, "witness": None}

    def record(name: str, lhs: float, rhs: float, x, y, mu_atoms, nu_atoms) -> None:
        slack = rhs - lhs
        t = track[name]
        if slack < t["slack"]:
            t["slack"] = slack
            t["witness"] = {
                "x": float(x), "y": (None if y is None else float(y)),
                "mu": np.asarray(mu_atoms).ravel().tolist(),
                "nu": (None if nu_atoms is None else np.asarray(nu_atoms).ravel().tolist()),
                "lhs": lhs, "rhs": rhs,
            }

    for i in range(sample_count):
        scale = box * _SCALES[i % len(_SCALES)]
        x = rng.uniform(-scale, scale, size=1)
        y = rng.uniform(-scale, scale, size=1)
        n_atoms = int(rng.integers(1, 9))
        mu_atoms = rng.uniform(-scale, scale, size=(n_atoms, 1))
        mode = i % 4
        if mode == 0:
            nu_atoms = rng.uniform(-scale, scale, size=(n_atoms, 1))
        elif mode == 1:
            nu_atoms = mu_atoms.copy()
        elif mode == 2:
            nu_atoms = mu_atoms + rng.uniform(-scale, scale)
        else:
            nu_atoms = mu_atoms + rng.uniform(-scale / 10, scale / 10, size=(n_atoms, 1))
        mu = from_particles(mu_atoms)
        nu = from_particles(nu_atoms)
        w2 = wasserstein2_1d(mu, nu)

        bx = model.drift(x, mu)
        by = model.drift(y, nu)
        sx = model.diffusion(x, mu)
        sy = model.diffusion(y, nu)
        diff = x - y
        dist2 = float(diff @ diff)
        dsig2 = float(np.sum((sx - sy) ** 2))

        lhs = 2.0 * float(diff @ (bx - by)) + dsig2
        rhs = -c.K1 * dist2 + c.K2 * w2**2
        record("contractive_monotonicity", lhs, rhs, x[0], y[0], mu_atoms, nu_atoms)

        lhs = float(np.sum((bx - by) ** 2))
        poly = 1.0 + abs(x[0]) ** (2 * c.kappa - 2) + abs(y[0]) ** (2 * c.kappa - 2)
        rhs = c.L1 * (poly * dist2 + w2**2)
        record("polynomial_lipschitz", lhs, rhs, x[0], y[0], mu_atoms, nu_atoms)

        lhs = 2.0 * float(x @ bx) + (c.q_star - 1.0) * float(np.sum(sx**2))
        rhs = -c.a1 * float(x @ x) + c.a2 * moment(mu, 2) + c.C
        record("dissipativity", lhs, rhs, x[0], None, mu_atoms, None)

        if c.L_sigma is not None:
            lhs = dsig2
            rhs = c.L_sigma * (dist2 + w2**2)
            record("diffusion_lipschitz", lhs, rhs, x[0], y[0], mu_atoms, nu_atoms)

    checks = []
    for name, t in track.items():
        w = t["witness"]
        # tolerance absorbs rounding on inequalities the constants make exactly tight
        tol = 1e-12 * (1.0 + abs(w["lhs"]) + abs(w["rhs"]))
        passed = t["slack"] >= -tol
        checks.append(AssumptionCheck(
            name=name,
            samples=sample_count,
            worst_slack=float(t["slack"]),
            passed=passed,
            witness=None if passed else w,
        ))
    return AssumptionReport(model=model.name, checks=checks)


def with_constants(model: ModelSpec, **overrides) -> ModelSpec:
    """Copy of a model with some assumption constants replaced (diagnostics)."""
    return dataclasses.replace(model, constants=dataclasses.replace(model.constants, **overrides))

"""One-step maps for the interacting particle system.

Three variants: pem (explicit Euler from radially projected states, measure
built from the projected cloud), bem (drift-implicit Euler, measure frozen at
the pre-step cloud so the N Newton solves decouple), and em (plain explicit
Euler, intentionally unguarded -- it exists to exhibit moment blow-up).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .measure import EmpiricalMeasure, from_particles
from .model import ModelSpec, drift_jacobian as _model_jacobian

__all__ = [
    "SchemeConfig",
    "StepWorkspace",
    "NewtonError",
    "NewtonResult",
    "project",
    "pem_step",
    "bem_step",
    "em_step",
    "newton_solve",
    "VARIANTS",
]

VARIANTS = ("pem", "bem", "em")


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme selection plus the Newton stopping policy for bem."""

    variant: str
    newton_tol: float = 1e-12
    newton_max_iter: int = 25
    enforce_step_guard: bool = True

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown scheme variant {self.variant!r}; expected one of {VARIANTS}")
        if not self.newton_tol > 0:
            raise ValueError(f"newton_tol must be > 0, got {self.newton_tol}")
        if self.newton_max_iter < 1:
            raise ValueError(f"newton_max_iter must be >= 1, got {self.newton_max_iter}")


@dataclass
class StepWorkspace:
    """Mutable bundle for one step of one particle system.

    The step functions fill in the measure snapshot (and, for pem, the
    projected states) so callers can inspect exactly what the update used.
    """

    states: np.ndarray          # (N, d) pre-step states
    dw: np.ndarray              # (N, m) Brownian increments for this step
    step_index: int = 0
    projected: Optional[np.ndarray] = None
    mu: Optional[EmpiricalMeasure] = None
    newton_iterations: Optional[np.ndarray] = None  # (N,) iteration counts, bem only
    newton_max_residual: float = 0.0


class NewtonError(RuntimeError):
    """Newton solve failed: not converged within max_iter or singular slope."""

    def __init__(self, message: str, particle: Optional[int] = None,
                 residual: Optional[float] = None, iterations: Optional[int] = None):
        detail = message
        if particle is not None:
            detail += f" (particle {particle}"
            if residual is not None:
                detail += f", residual {residual:.3e}"
            if iterations is not None:
                detail += f", {iterations} iterations"
            detail += ")"
        super().__init__(detail)
        self.particle = particle
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class NewtonResult:
    """Root plus the iteration count the solve actually spent."""

    z: np.ndarray
    iterations: int
    residual: float


def project(x, h: float, kappa: float):
    """Radial truncation onto the ball of radius h^(-1/(2(kappa+2))).

    Identity inside the ball, rescale onto the sphere outside; 0 maps to 0.
    For d = 1 this is an exact clamp (pure comparisons, no rounding), which
    keeps the contraction and radius inequalities exact in floating point.
    """
    if not 0 < h <= 1:
        raise ValueError(f"projection needs 0 < h <= 1, got h={h}")
    if kappa < 1:
        raise ValueError(f"projection needs kappa >= 1, got {kappa}")
    x = np.asarray(x, dtype=float)
    radius = h ** (-1.0 / (2.0 * (kappa + 2.0)))
    if x.ndim >= 1 and x.shape[-1] == 1:
        return np.clip(x, -radius, radius)
    norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.minimum(1.0, radius / norm)
    factor = np.where(norm == 0.0, 1.0, factor)
    return x * factor


def pem_step(ws: StepWorkspace, model: ModelSpec, h: float) -> np.ndarray:
    """Projected Euler: project, rebuild the measure, explicit update."""
    bar = project(ws.states, h, model.constants.kappa)
    mu = from_particles(bar)
    ws.projected = bar
    ws.mu = mu
    b = model.drift(bar, mu)
    sig = model.diffusion(bar, mu)
    return bar + h * b + np.einsum("ndm,nm->nd", sig, ws.dw)


def em_step(ws: StepWorkspace, model: ModelSpec, h: float) -> np.ndarray:
    """Plain explicit Euler from the raw states."""
    mu = from_particles(ws.states)
    ws.mu = mu
    b = model.drift(ws.states, mu)
    sig = model.diffusion(ws.states, mu)
    return ws.states + h * b + np.einsum("ndm,nm->nd", sig, ws.dw)


def bem_step(ws: StepWorkspace, model: ModelSpec, h: float, cfg: SchemeConfig) -> np.ndarray:
    """Drift-implicit Euler with the measure frozen at the pre-step cloud.

    Per particle j, solves F(z) = z - h*b(z, mu_k) - r_j = 0 with
    r_j = x_j + sigma(x_j, mu_k) dW_j, starting from the explicit predictor.
    """
    mu = from_particles(ws.states)
    ws.mu = mu
    b0 = model.drift(ws.states, mu)
    sig = model.diffusion(ws.states, mu)
    r = ws.states + np.einsum("ndm,nm->nd", sig, ws.dw)
    z0 = r + h * b0
    if model.d == 1:
        z, iters, max_res = _newton_batch_1d(model, mu, h, r, z0, cfg)
    else:
        z, iters, max_res = _newton_batch_nd(model, mu, h, r, z0, cfg)
    ws.newton_iterations = iters
    ws.newton_max_residual = max_res
    return z


def _newton_batch_1d(model: ModelSpec, mu: EmpiricalMeasure, h: float,
                     r: np.ndarray, z0: np.ndarray, cfg: SchemeConfig):
    """Vectorized damped Newton across the particle axis for d = 1.

    For the built-in models F'(z) = 1 - h*b'(z) >= 1 + 10h > 0, so each
    scalar equation has a unique root and undamped Newton is safe except far
    from it, where up to 8 step-halvings restore residual decrease.

    The stopping tolerance is newton_tol at unit scale and shrinks with the
    particle's own magnitude: contractive models drive the cloud through
    many orders of magnitude, and an absolute 1e-12 would silently accept
    the explicit predictor once states fall below it, changing the scheme.
    The 1e-290 floor keeps denormal-collapsed particles from iterating
    against rounding noise.
    """
    n = r.shape[0]
    z = z0.copy()
    f = z - h * model.drift(z, mu) - r
    res = np.abs(f[:, 0])
    iters = np.zeros(n, dtype=np.int64)
    unit = np.minimum(1.0, np.maximum(np.abs(r[:, 0]), np.abs(z0[:, 0])))
    tol = np.maximum(cfg.newton_tol * unit, 1e-290)
    for _ in range(cfg.newton_max_iter):
        active = res > tol
        if not active.any():
            break
        slope = 1.0 - h * _model_jacobian(model, z, mu)[:, 0, 0]
        if np.any(np.abs(slope[active]) < 1e-300):
            j = int(np.argmax(active & (np.abs(slope) < 1e-300)))
            raise NewtonError("singular Newton slope", particle=j,
                              residual=float(res[j]), iterations=int(iters[j]))
        dz = f[:, 0] / slope
        scale = np.where(active, 1.0, 0.0)
        z_new = z - (scale * dz)[:, None]
        f_new = z_new - h * model.drift(z_new, mu) - r
        res_new = np.abs(f_new[:, 0])
        # halve the step where the residual failed to decrease
        for _halving in range(8):
            stuck = active & (res_new >= res)
            if not stuck.any():
                break
            scale = np.where(stuck, scale * 0.5, scale)
            z_new = z - (scale * dz)[:, None]
            f_new = z_new - h * model.drift(z_new, mu) - r
            res_new = np.abs(f_new[:, 0])
        stuck = active & (res_new >= res)
        if stuck.any():
            j = int(np.argmax(stuck))
            raise NewtonError("Newton stagnated after 8 halvings", particle=j,
                              residual=float(res[j]), iterations=int(iters[j]))
        z = np.where(active[:, None], z_new, z)
        f = np.where(active[:, None], f_new, f)
        res = np.where(active, res_new, res)
        iters = iters + active
    if (res > tol).any():
        j = int(np.argmax(res > tol))
        raise NewtonError("Newton did not converge within max_iter", particle=j,
                          residual=float(res[j]), iterations=int(iters[j]))
    return z, iters, float(res.max(initial=0.0))


def _newton_batch_nd(model: ModelSpec, mu: EmpiricalMeasure, h: float,
                     r: np.ndarray, z0: np.ndarray, cfg: SchemeConfig):
    """Per-particle Newton solves for d > 1 (decoupled, so a plain loop)."""
    n, d = r.shape
    z = np.empty_like(r)
    iters = np.zeros(n, dtype=np.int64)
    max_res = 0.0
    for j in range(n):
        rj = r[j]

        def residual(v, _rj=rj):
            return v - h * model.drift(v, mu) - _rj

        def jacobian(v):
            return np.eye(d) - h * _model_jacobian(model, v, mu)

        # same scale-aware tolerance as the 1-d fast path
        unit = min(1.0, max(float(np.max(np.abs(rj))), float(np.max(np.abs(z0[j])))))
        tol_j = max(cfg.newton_tol * unit, 1e-290)
        try:
            out = newton_solve(residual, jacobian, z0[j], tol_j, cfg.newton_max_iter)
        except NewtonError as err:
            raise NewtonError(str(err), particle=j, residual=err.residual,
                              iterations=err.iterations) from None
        z[j] = out.z
        iters[j] = out.iterations
        max_res = max(max_res, out.residual)
    return z, iters, max_res


def newton_solve(residual: Callable, jacobian: Callable, z0, tol: float = 1e-12,
                 max_iter: int = 25) -> NewtonResult:
    """Damped Newton for F(z) = 0 from z0; returns the root and its cost.

    Full steps while the residual norm decreases; otherwise up to 8 halvings
    along the Newton direction before the solve is declared failed.
    """
    z = np.atleast_1d(np.asarray(z0, dtype=float)).copy()
    f = np.atleast_1d(np.asarray(residual(z), dtype=float))
    res = float(np.linalg.norm(f))
    for it in range(max_iter):
        if res <= tol:
            return NewtonResult(z=z, iterations=it, residual=res)
        jac = np.atleast_2d(np.asarray(jacobian(z), dtype=float))
        try:
            dz = np.linalg.solve(jac, f)
        except np.linalg.LinAlgError:
            raise NewtonError("singular Newton slope", residual=res, iterations=it) from None
        scale = 1.0
        for _halving in range(9):
            z_new = z - scale * dz
            f_new = np.atleast_1d(np.asarray(residual(z_new), dtype=float))
            res_new = float(np.linalg.norm(f_new))
            if res_new < res:
                break
            scale *= 0.5
        else:
            raise NewtonError("Newton stagnated after 8 halvings", residual=res, iterations=it)
        z, f, res = z_new, f_new, res_new
    if res <= tol:
        return NewtonResult(z=z, iterations=max_iter, residual=res)
    raise NewtonError("Newton did not converge within max_iter", residual=res, iterations=max_iter)

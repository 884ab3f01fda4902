"""Time-stepping engine for N-particle systems over [0, T].

Runs are pure functions of (model, scheme config, sim config, seed, path id):
noise comes from the counter-based driver, so identical inputs give
bit-identical outputs regardless of thread count or call order. Coupled
coarse/reference runs share one driver and therefore one Brownian path.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .brownian import BrownianDriver, IncrementStream
from .measure import from_particles, moment
from .model import ModelSpec, max_step
from .schemes import NewtonError, SchemeConfig, StepWorkspace, bem_step, em_step, pem_step

__all__ = [
    "SimConfig",
    "RunOutput",
    "NewtonStats",
    "BlowupError",
    "SimulationError",
    "BLOWUP_THRESHOLD",
    "run",
    "coupled_pair_run",
    "rmse",
    "mean_square_distance",
]

BLOWUP_THRESHOLD = 1e10


class SimulationError(RuntimeError):
    """A run could not produce valid output."""


class BlowupError(SimulationError):
    """A particle left the finite range; carries the offending step index."""

    def __init__(self, step: int, detail: str):
        super().__init__(f"blow-up at step {step}: {detail}")
        self.step = step
        self.detail = detail


@dataclass(frozen=True)
class SimConfig:
    """Static description of one particle-system run."""

    N: int
    h: float
    T: float
    record_moments: tuple[int, ...] = ()
    record_stride: int = 64

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError(f"need N >= 1 particles, got {self.N}")
        if not 0 < self.h <= 1:
            raise ValueError(f"need step 0 < h <= 1, got {self.h}")
        if self.T < 0:
            raise ValueError(f"need T >= 0, got {self.T}")
        steps = self.T / self.h
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"horizon T={self.T} is not an integer multiple of h={self.h}")
        for order in self.record_moments:
            if order < 2 or order % 2 != 0:
                raise ValueError(f"recorded moment orders must be even and >= 2, got {order}")
        if self.record_stride < 1:
            raise ValueError(f"record_stride must be >= 1, got {self.record_stride}")

    @property
    def steps(self) -> int:
        return round(self.T / self.h)


@dataclass
class NewtonStats:
    """Aggregated implicit-solver cost for one run (bem only).

    Iteration counts are kept as a histogram (index = iterations for one
    particle in one step) so long horizons stay O(max_iter) in memory.
    """

    counts: np.ndarray
    max_residual: float = 0.0

    @property
    def solves(self) -> int:
        return int(self.counts.sum())

    @property
    def median_iterations(self) -> float:
        total = self.solves
        if total == 0:
            return 0.0
        half = (total + 1) // 2
        cum = np.cumsum(self.counts)
        lo = int(np.searchsorted(cum, half))
        if total % 2 == 1:
            return float(lo)
        hi = int(np.searchsorted(cum, half + 1))
        return 0.5 * (lo + hi)


@dataclass
class RunOutput:
    """Terminal states plus whatever the run was asked to record."""

    final_states: np.ndarray                      # (N, d)
    moments: list[tuple[float, int, float]]       # (t, order, value) triples
    newton: Optional[NewtonStats]
    wall_time: float
    steps_taken: int
    blowup_step: Optional[int] = None             # set only in corruption mode
    final_moment2: Optional[float] = None         # second moment at exit, saturated if non-finite


def _check_alignment(driver: BrownianDriver, sim: SimConfig) -> int:
    level = driver.level_of(sim.h)
    return level


def run(model: ModelSpec, scheme_cfg: SchemeConfig, sim_cfg: SimConfig,
        driver: BrownianDriver, path_id: Optional[int] = None, *,
        corruption_mode: bool = False,
        state_callback: Optional[Callable[[int, np.ndarray], None]] = None) -> RunOutput:
    """Advance N particles from the model's initial value over T/h steps.

    corruption_mode turns blow-up from a fatal error into a flagged result:
    the run stops at the first offending step, records it, and reports the
    second moment there (saturated at the threshold if non-finite).
    state_callback(step_index, states) is invoked after every step with the
    freshly computed states; it must not mutate them.
    """
    if driver.m != model.m:
        raise ValueError(f"driver has m={driver.m} but model needs m={model.m}")
    if scheme_cfg.enforce_step_guard and scheme_cfg.variant in ("pem", "bem"):
        ceiling = max_step(model, 1.0)
        if sim_cfg.h > ceiling:
            raise ValueError(
                f"step h={sim_cfg.h} exceeds the admissible ceiling {ceiling:.6g} "
                f"for model {model.name}; pass a smaller h or disable the guard"
            )
    level = _check_alignment(driver, sim_cfg)
    path = driver.path_id if path_id is None else int(path_id)
    started = time.perf_counter()

    states = np.tile(model.initial_value, (sim_cfg.N, 1))
    stream = IncrementStream(driver, path, sim_cfg.N)
    variant = scheme_cfg.variant
    want_newton = variant == "bem"
    newton = NewtonStats(counts=np.zeros(scheme_cfg.newton_max_iter + 1, dtype=np.int64)) \
        if want_newton else None

    moments: list[tuple[float, int, float]] = []

    def record(step_count: int, cloud: np.ndarray) -> None:
        if not sim_cfg.record_moments:
            return
        mu = from_particles(cloud)
        t = step_count * sim_cfg.h
        for order in sim_cfg.record_moments:
            moments.append((t, order, moment(mu, order)))

    record(0, states)
    blowup_step: Optional[int] = None
    final_m2: Optional[float] = None
    steps_done = 0

    for k in range(sim_cfg.steps):
        dw = stream.step(k, level)
        ws = StepWorkspace(states=states, dw=dw, step_index=k)
        if variant == "pem":
            new_states = pem_step(ws, model, sim_cfg.h)
        elif variant == "bem":
            new_states = bem_step(ws, model, sim_cfg.h, scheme_cfg)
            counts = np.bincount(ws.newton_iterations,
                                 minlength=scheme_cfg.newton_max_iter + 1)
            newton.counts += counts
            newton.max_residual = max(newton.max_residual, ws.newton_max_residual)
        else:
            new_states = em_step(ws, model, sim_cfg.h)
        states = new_states
        steps_done = k + 1

        finite = np.isfinite(states).all()
        if not finite or np.abs(states).max() > BLOWUP_THRESHOLD:
            detail = "non-finite state" if not finite else f"|state| > {BLOWUP_THRESHOLD:g}"
            if not corruption_mode:
                raise BlowupError(steps_done, detail)
            blowup_step = steps_done
            with np.errstate(over="ignore", invalid="ignore"):
                m2 = float(np.mean(np.sum(states * states, axis=1)))
            final_m2 = m2 if np.isfinite(m2) else BLOWUP_THRESHOLD
            break

        if state_callback is not None:
            state_callback(k, states)
        if steps_done % sim_cfg.record_stride == 0 or steps_done == sim_cfg.steps:
            record(steps_done, states)

    if final_m2 is None and blowup_step is None:
        final_m2 = float(np.mean(np.sum(states * states, axis=1)))

    return RunOutput(
        final_states=states,
        moments=moments,
        newton=newton,
        wall_time=time.perf_counter() - started,
        steps_taken=steps_done,
        blowup_step=blowup_step,
        final_moment2=final_m2,
    )


def coupled_pair_run(model: ModelSpec, scheme_cfg: SchemeConfig, sim_cfg_coarse: SimConfig,
                     h_ref: float, driver: BrownianDriver,
                     path_id: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Coarse run plus a same-scheme reference run at h_ref on shared noise.

    Returns (coarse final states, reference final states). The coarse step
    must be h_ref * 2^k; both runs then consume the same underlying fine
    increments through the driver's aggregation identity.
    """
    if driver.h_ref != h_ref:
        raise ValueError(f"driver h_ref={driver.h_ref} does not match requested h_ref={h_ref}")
    driver.level_of(sim_cfg_coarse.h)  # reject misalignment before any work
    ref_cfg = replace(sim_cfg_coarse, h=h_ref, record_moments=())
    coarse = run(model, scheme_cfg, sim_cfg_coarse, driver, path_id)
    reference = run(model, scheme_cfg, ref_cfg, driver, path_id)
    return coarse.final_states, reference.final_states


def mean_square_distance(a: np.ndarray, b: np.ndarray) -> float:
    """(1/N) * sum_j |a_j - b_j|^2 over matching particle rows."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    if diff.ndim == 1:
        diff = diff[:, None]
    return float(np.mean(np.sum(diff * diff, axis=1)))


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    """Root mean square terminal gap over particles: sqrt of mean_square_distance."""
    return float(np.sqrt(mean_square_distance(a, b)))

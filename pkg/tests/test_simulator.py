"""Run loop composition, recording, blow-up handling, coupled runs."""

import dataclasses
import math

import numpy as np
import pytest

from mvsde import (
    BLOWUP_THRESHOLD,
    BlowupError,
    BrownianDriver,
    IncrementStream,
    SchemeConfig,
    SimConfig,
    StepWorkspace,
    bem_step,
    coupled_pair_run,
    em_step,
    make_model,
    mean_square_distance,
    pem_step,
    rmse,
    run,
)

M41 = make_model("example-4.1")
M42 = make_model("example-4.2")


def driver_of(h_ref=2.0**-8, seed=11, path_id=0):
    return BrownianDriver(seed=seed, h_ref=h_ref, path_id=path_id)


class TestSimConfig:
    def test_valid(self):
        cfg = SimConfig(N=4, h=2.0**-6, T=0.125)
        assert cfg.steps == 8

    def test_validation(self):
        with pytest.raises(ValueError, match="N >= 1"):
            SimConfig(N=0, h=0.5, T=1.0)
        with pytest.raises(ValueError, match="0 < h <= 1"):
            SimConfig(N=1, h=0.0, T=1.0)
        with pytest.raises(ValueError, match="0 < h <= 1"):
            SimConfig(N=1, h=2.0, T=2.0)
        with pytest.raises(ValueError, match="T >= 0"):
            SimConfig(N=1, h=0.5, T=-1.0)
        with pytest.raises(ValueError, match="integer multiple"):
            SimConfig(N=1, h=0.5, T=0.3)
        with pytest.raises(ValueError, match="even"):
            SimConfig(N=1, h=0.5, T=1.0, record_moments=(3,))
        with pytest.raises(ValueError, match="even"):
            SimConfig(N=1, h=0.5, T=1.0, record_moments=(0,))
        with pytest.raises(ValueError, match="record_stride"):
            SimConfig(N=1, h=0.5, T=1.0, record_stride=0)


class TestComposition:
    H = 2.0**-6
    LEVEL = 2  # against h_ref = 2^-8

    def manual(self, variant, steps, n=6, path=3):
        driver = driver_of()
        stream = IncrementStream(driver, path, n)
        states = np.tile(M41.initial_value, (n, 1))
        cfg = SchemeConfig(variant=variant)
        for k in range(steps):
            ws = StepWorkspace(states=states, dw=stream.step(k, self.LEVEL),
                               step_index=k)
            if variant == "pem":
                states = pem_step(ws, M41, self.H)
            elif variant == "bem":
                states = bem_step(ws, M41, self.H, cfg)
            else:
                states = em_step(ws, M41, self.H)
        return states

    @pytest.mark.parametrize("variant", ["pem", "bem", "em"])
    def test_run_equals_manual_steps(self, variant):
        steps = 4
        out = run(M41, SchemeConfig(variant=variant),
                  SimConfig(N=6, h=self.H, T=steps * self.H), driver_of(), path_id=3)
        assert out.final_states.tolist() == self.manual(variant, steps).tolist()
        assert out.steps_taken == steps

    def test_determinism_and_path_separation(self):
        sim = SimConfig(N=6, h=self.H, T=0.125)
        a = run(M41, SchemeConfig(variant="pem"), sim, driver_of(), path_id=5)
        b = run(M41, SchemeConfig(variant="pem"), sim, driver_of(), path_id=5)
        c = run(M41, SchemeConfig(variant="pem"), sim, driver_of(), path_id=6)
        assert a.final_states.tolist() == b.final_states.tolist()
        assert a.final_states.tolist() != c.final_states.tolist()

    def test_default_path_comes_from_driver(self):
        sim = SimConfig(N=4, h=self.H, T=0.125)
        drv = BrownianDriver(seed=11, h_ref=2.0**-8, path_id=7)
        a = run(M41, SchemeConfig(variant="pem"), sim, drv)
        b = run(M41, SchemeConfig(variant="pem"), sim, driver_of(), path_id=7)
        assert a.final_states.tolist() == b.final_states.tolist()

    def test_driver_model_width_mismatch(self):
        drv = BrownianDriver(seed=1, h_ref=2.0**-8, m=2)
        with pytest.raises(ValueError, match="m="):
            run(M41, SchemeConfig(variant="pem"), SimConfig(N=2, h=self.H, T=self.H), drv)


class TestRecording:
    def test_moment_series_times_and_values(self):
        sim = SimConfig(N=5, h=2.0**-6, T=0.125, record_moments=(2, 4),
                        record_stride=2)
        out = run(M41, SchemeConfig(variant="pem"), sim, driver_of(), path_id=1)
        times = [t for t, order, _ in out.moments if order == 2]
        assert times == [k * sim.h for k in (0, 2, 4, 6, 8)]
        by_pair = {(t, order) for t, order, _ in out.moments}
        assert len(by_pair) == len(out.moments) == 10
        t0 = [v for t, order, v in out.moments if t == 0.0]
        assert t0 == [1.0, 1.0]  # delta at 1: second and fourth moments

    def test_final_step_recorded_off_stride(self):
        sim = SimConfig(N=3, h=2.0**-6, T=0.125, record_moments=(2,),
                        record_stride=3)
        out = run(M41, SchemeConfig(variant="pem"), sim, driver_of())
        steps = [round(t / sim.h) for t, _, _ in out.moments]
        assert steps == [0, 3, 6, 8]

    def test_zero_horizon(self):
        sim = SimConfig(N=3, h=0.5, T=0.0, record_moments=(2,))
        out = run(M41, SchemeConfig(variant="em"), sim,
                  BrownianDriver(seed=0, h_ref=0.5))
        assert out.steps_taken == 0
        assert out.final_states.tolist() == [[1.0]] * 3
        assert out.moments == [(0.0, 2, 1.0)]
        assert out.final_moment2 == 1.0

    def test_state_callback_sees_every_step(self):
        seen = []
        sim = SimConfig(N=2, h=2.0**-6, T=0.125)
        run(M41, SchemeConfig(variant="pem"), sim, driver_of(),
            state_callback=lambda k, s: seen.append((k, s.shape)))
        assert seen == [(k, (2, 1)) for k in range(8)]


class TestBlowup:
    X10 = dataclasses.replace(M41, initial_value=np.array([10.0]))

    def test_explicit_euler_raises(self):
        sim = SimConfig(N=3, h=0.25, T=10.0)
        with pytest.raises(BlowupError) as exc_info:
            run(self.X10, SchemeConfig(variant="em"), sim,
                BrownianDriver(seed=2, h_ref=0.25))
        assert exc_info.value.step >= 1

    def test_corruption_mode_flags_instead(self):
        sim = SimConfig(N=3, h=0.25, T=10.0)
        out = run(self.X10, SchemeConfig(variant="em"), sim,
                  BrownianDriver(seed=2, h_ref=0.25), corruption_mode=True)
        assert out.blowup_step is not None and out.blowup_step <= 50
        assert out.final_moment2 >= BLOWUP_THRESHOLD
        assert out.steps_taken == out.blowup_step

    def test_step_guard(self):
        sim = SimConfig(N=2, h=2.0**-5, T=2.0**-5)  # 0.03125 > 8/287
        drv = BrownianDriver(seed=0, h_ref=2.0**-5)
        with pytest.raises(ValueError, match="ceiling"):
            run(M41, SchemeConfig(variant="pem"), sim, drv)
        with pytest.raises(ValueError, match="ceiling"):
            run(M41, SchemeConfig(variant="bem"), sim, drv)
        # em carries no guarantee, so no guard; disabled guard also passes
        run(M41, SchemeConfig(variant="em"), sim, drv)
        run(M41, SchemeConfig(variant="pem", enforce_step_guard=False), sim, drv)


class TestNewtonAccounting:
    def test_solves_cover_every_particle_step(self):
        sim = SimConfig(N=7, h=2.0**-6, T=0.125)
        out = run(M42, SchemeConfig(variant="bem"), sim, driver_of(), path_id=2)
        assert out.newton is not None
        assert out.newton.solves == 7 * 8
        assert out.newton.median_iterations >= 1.0
        assert 0 < out.newton.max_residual <= 1e-12

    def test_explicit_runs_report_none(self):
        sim = SimConfig(N=2, h=2.0**-6, T=2.0**-6)
        out = run(M41, SchemeConfig(variant="pem"), sim, driver_of())
        assert out.newton is None


class TestCoupledRuns:
    def test_identical_grids_have_zero_gap(self):
        sim = SimConfig(N=5, h=2.0**-8, T=2.0**-4)
        coarse, ref = coupled_pair_run(M41, SchemeConfig(variant="pem"), sim,
                                       2.0**-8, driver_of(), path_id=4)
        assert rmse(coarse, ref) == 0.0

    def test_coarse_and_reference_share_noise(self):
        sim = SimConfig(N=5, h=2.0**-6, T=2.0**-4)
        coarse, ref = coupled_pair_run(M41, SchemeConfig(variant="pem"), sim,
                                       2.0**-8, driver_of(), path_id=4)
        direct = run(M41, SchemeConfig(variant="pem"),
                     dataclasses.replace(sim, h=2.0**-8), driver_of(), path_id=4)
        assert ref.tolist() == direct.final_states.tolist()
        assert rmse(coarse, ref) > 0.0

    def test_href_mismatch_rejected(self):
        sim = SimConfig(N=2, h=2.0**-6, T=2.0**-4)
        with pytest.raises(ValueError, match="h_ref"):
            coupled_pair_run(M41, SchemeConfig(variant="pem"), sim,
                             2.0**-9, driver_of(h_ref=2.0**-8))

    def test_misaligned_coarse_step_rejected(self):
        sim = SimConfig(N=2, h=0.1875, T=0.375)
        with pytest.raises(ValueError):
            coupled_pair_run(M41, SchemeConfig(variant="em"), sim,
                             2.0**-8, driver_of())


class TestDistances:
    def test_frozen_values(self):
        a = np.array([[1.0], [2.0]])
        b = np.zeros((2, 1))
        assert mean_square_distance(a, b) == 2.5
        assert rmse(a, b) == math.sqrt(2.5)

    def test_vector_inputs(self):
        assert mean_square_distance(np.array([3.0]), np.array([0.0])) == 9.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            mean_square_distance(np.zeros((2, 1)), np.zeros((3, 1)))

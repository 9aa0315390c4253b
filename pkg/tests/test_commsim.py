from dataclasses import replace

import numpy as np
import pytest

from curato import commsim as cs
from curato.errors import ValidationError


def simple_cfg(**kw):
    base = dict(workers=4, grad_bytes=(1e6, 2e6, 4e6), backward_seconds=(0.01, 0.01, 0.02),
                bandwidth=1e9, latency=1e-5, scheduler=cs.STATIC)
    base.update(kw)
    return cs.CommModelConfig(**base)


class TestAllreduceTime:
    def test_single_worker_free(self):
        assert cs.allreduce_time(1e9, 1, 1e9, 1e-3) == 0.0

    def test_latency_only(self):
        assert cs.allreduce_time(0, 5, 1e9, 1e-4) == pytest.approx(2 * 4 * 1e-4)

    def test_formula(self):
        # 2(K-1) * (a + bytes/(K*B))
        assert cs.allreduce_time(4e6, 4, 1e9, 1e-5) == pytest.approx(6.06e-3)


class TestSimulateStep:
    def test_zero_sizes_pure_compute(self):
        for sched in (cs.STATIC, cs.DYNAMIC):
            cfg = simple_cfg(grad_bytes=(0.0, 0.0, 0.0), scheduler=sched, cycle_time=1e-3)
            trace = cs.simulate_step(cfg)
            assert trace.step_time == pytest.approx(0.04)
            assert trace.exposed_comm == pytest.approx(0.0)

    def test_single_layer_closed_form(self):
        cfg = cs.CommModelConfig(workers=8, grad_bytes=(5e6,), backward_seconds=(0.02,),
                                 bandwidth=1e9, latency=1e-5, scheduler=cs.STATIC)
        trace = cs.simulate_step(cfg)
        expected = 0.02 + cs.allreduce_time(5e6, 8, 1e9, 1e-5)
        assert trace.step_time == pytest.approx(expected)

    def test_two_layer_hand_schedule(self):
        # equal layers, bucket = one layer, allreduce shorter than t_b:
        # the first reduction hides under the second layer's backward
        t_b, size = 0.01, 1e6
        cfg = cs.CommModelConfig(workers=2, grad_bytes=(size, size),
                                 backward_seconds=(t_b, t_b), bandwidth=1e9,
                                 latency=0.0, scheduler=cs.STATIC, bucket_bytes=size)
        d = cs.allreduce_time(size, 2, 1e9, 0.0)
        assert d < t_b
        trace = cs.simulate_step(cfg)
        assert trace.step_time == pytest.approx(2 * t_b + d)
        assert trace.exposed_comm == pytest.approx(d)
        starts = [e for e in trace.events if e.kind == cs.ALLREDUCE_START]
        assert starts[0].time == pytest.approx(t_b)
        assert starts[1].time == pytest.approx(2 * t_b)

    def test_conservation_both_schedulers(self):
        gen = np.random.default_rng(0)
        sizes = tuple(float(s) for s in gen.uniform(0, 3e6, 12))
        times = tuple(float(t) for t in gen.uniform(1e-3, 4e-3, 12))
        for sched in (cs.STATIC, cs.DYNAMIC):
            cfg = cs.CommModelConfig(workers=16, grad_bytes=sizes, backward_seconds=times,
                                     bandwidth=1e9, latency=1e-5, scheduler=sched,
                                     cycle_time=1e-3, negotiation_cost_per_cycle=1e-4)
            trace = cs.simulate_step(cfg)
            assert trace.reduced_bytes() == pytest.approx(sum(sizes))

    def test_events_time_ordered(self):
        trace = cs.simulate_step(simple_cfg())
        times = [e.time for e in trace.events]
        assert times == sorted(times)

    def test_exposed_comm_nonnegative(self):
        gen = np.random.default_rng(1)
        for seed in range(20):
            g = np.random.default_rng(seed)
            n = int(g.integers(2, 20))
            cfg = cs.CommModelConfig(
                workers=int(g.integers(1, 64)),
                grad_bytes=tuple(float(x) for x in g.uniform(0, 5e6, n)),
                backward_seconds=tuple(float(x) for x in g.uniform(1e-4, 5e-3, n)),
                bandwidth=1e9, latency=1e-5,
                scheduler=cs.DYNAMIC if seed % 2 else cs.STATIC,
                cycle_time=2e-3, negotiation_cost_per_cycle=1e-4)
            trace = cs.simulate_step(cfg)
            assert trace.exposed_comm >= -1e-15
            assert trace.step_time >= trace.compute_time

    def test_static_ignores_dynamic_params(self):
        a = simple_cfg(cycle_time=1e-3, negotiation_cost_per_cycle=1e-3, fusion_bytes=1e6)
        b = simple_cfg(cycle_time=7e-3, negotiation_cost_per_cycle=5e-2, fusion_bytes=9e9)
        assert cs.simulate_step(a).step_time == cs.simulate_step(b).step_time

    def test_dynamic_ignores_bucket_bytes(self):
        a = simple_cfg(scheduler=cs.DYNAMIC, cycle_time=1e-3, bucket_bytes=1e5)
        b = simple_cfg(scheduler=cs.DYNAMIC, cycle_time=1e-3, bucket_bytes=9e9)
        assert cs.simulate_step(a).step_time == cs.simulate_step(b).step_time

    def test_determinism(self):
        cfg = simple_cfg(scheduler=cs.DYNAMIC, cycle_time=1.3e-3,
                         negotiation_cost_per_cycle=2e-4)
        assert cs.simulate_step(cfg) == cs.simulate_step(cfg)

    def test_validation(self):
        with pytest.raises(ValidationError):
            simple_cfg(workers=0)
        with pytest.raises(ValidationError):
            simple_cfg(scheduler="unknown")
        with pytest.raises(ValidationError):
            simple_cfg(scheduler=cs.DYNAMIC, cycle_time=0.0)
        with pytest.raises(ValidationError):
            simple_cfg(grad_bytes=(1.0,))  # misaligned with backward_seconds


class TestScalingCurve:
    def test_free_communication_perfect_efficiency(self):
        sizes, times = cs.default_layer_profile(n_layers=10)
        cfg = cs.CommModelConfig(workers=1, grad_bytes=sizes, backward_seconds=times,
                                 bandwidth=1e30, latency=0.0, scheduler=cs.STATIC)
        rows = cs.scaling_curve(cfg, [1, 2, 8, 64, 1024], 32)
        for row in rows:
            assert row.efficiency == pytest.approx(1.0, abs=1e-9)

    def test_zero_negotiation_model_equivalence(self):
        static_cfg, dynamic_cfg = cs.reference_scenario(negotiation_cost_per_cycle=0.0)
        static_cfg = replace(static_cfg, latency=0.0)
        dynamic_cfg = replace(dynamic_cfg, latency=0.0, cycle_time=2.5e-4)
        for k in (2, 8, 64, 256, 1024):
            st = cs.simulate_step(replace(static_cfg, workers=k)).step_time
            dy = cs.simulate_step(replace(dynamic_cfg, workers=k)).step_time
            assert abs(st - dy) / st < 0.01, f"K={k}"

    def test_negotiation_overhead_crossover(self):
        static_cfg, dynamic_cfg = cs.reference_scenario()
        ks = [64, 128, 256, 512, 1024]
        st = cs.scaling_curve(static_cfg, ks, 32)
        dy = cs.scaling_curve(dynamic_cfg, ks, 32)
        gaps = [s.efficiency - d.efficiency for s, d in zip(st, dy)]
        assert dy[-1].efficiency < st[-1].efficiency
        assert all(b >= a - 1e-12 for a, b in zip(gaps, gaps[1:]))

    def test_descending_counts_rejected(self):
        with pytest.raises(ValidationError):
            cs.scaling_curve(simple_cfg(), [8, 4], 32)


class TestProfilesAndIo:
    def test_default_profile_sums(self):
        sizes, times = cs.default_layer_profile(n_layers=50, total_bytes=100e6,
                                                total_backward_seconds=0.06)
        assert sum(sizes) == pytest.approx(100e6)
        assert sum(times) == pytest.approx(0.06)
        assert len(sizes) == 50
        assert sizes[-1] > sizes[0]  # deep layers dominate

    def test_trace_csv(self, tmp_path):
        trace = cs.simulate_step(simple_cfg())
        path = tmp_path / "trace.csv"
        cs.write_trace_csv(trace, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "time,kind,bytes"
        assert len(lines) == len(trace.events) + 1

    def test_efficiency_csv_round_trip(self, tmp_path):
        rows = cs.scaling_curve(simple_cfg(workers=1), [1, 2, 4], 16)
        path = tmp_path / "eff.csv"
        cs.write_efficiency_csv(rows, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "K,throughput,efficiency"
        parsed = [line.split(",") for line in lines[1:]]
        for row, (k, thr, eff) in zip(rows, parsed):
            assert int(k) == row.workers
            assert float(thr) == row.throughput  # repr round-trip
            assert float(eff) == row.efficiency

    def test_config_from_dict_defaults(self):
        cfg = cs.config_from_dict({"workers": 8, "scheduler": "dynamic_queue"})
        assert cfg.workers == 8
        assert len(cfg.grad_bytes) == 50
        assert cfg.scheduler == cs.DYNAMIC

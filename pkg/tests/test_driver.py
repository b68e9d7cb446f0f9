import numpy as np
import pytest
from conftest import AffineSolver, FailingSolver

from gesbo import driver as drv
from gesbo.design_space import ParameterSpace
from gesbo.driver import DoeSpec, OptimizationAborted, OptimizerConfig, initialize, iterate, new_state, run
from gesbo.global_model import EiResult
from gesbo.spectrum import FrequencyGrid, ObjectiveSpec
from gesbo.testbed import instance


class Counting:
    def __init__(self, inner):
        self.inner, self.space, self.grid, self.calls = inner, inner.space, inner.grid, 0

    def respond(self, x):
        self.calls += 1
        return self.inner.respond(x)


def test_initialize_sizes():
    m9 = instance("dual-band-9d")
    h = initialize(OptimizerConfig(doe=DoeSpec("lhs", 20)), m9.space, m9, m9.objective_spec)
    assert len(h) == 20 and {e.origin for e in h.entries} == {"doe"}
    m2 = instance("dual-band-2d")
    h = initialize(OptimizerConfig(doe=DoeSpec("full_factorial", levels=[3, 3])), m2.space, m2,
                   m2.objective_spec)
    assert len(h) == 9


def test_initialize_two_points_picks_lower():
    m = instance("single-band-1d")
    h = initialize(OptimizerConfig(doe=DoeSpec("lhs", 2)), m.space, m, m.objective_spec)
    assert len(h) == 2
    assert h.best.objective_value == min(h.objectives)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(max_iterations=0).validate(2)
    with pytest.raises(ValueError):
        OptimizerConfig(stagnation_limit=0).validate(2)
    with pytest.raises(ValueError):
        OptimizerConfig(doe=DoeSpec("lhs", 1)).validate(2)


def test_initialize_failure_reports_point():
    m = instance("single-band-1d")
    cfg = OptimizerConfig(doe=DoeSpec("lhs", 4))
    with pytest.raises(OptimizationAborted) as info:
        initialize(cfg, m.space, FailingSolver(m, {3}), m.objective_spec)
    np.testing.assert_array_equal(info.value.cause.x, cfg.doe.points(m.space, cfg.doe_seed)[2])
    # the evaluations that succeeded before the failure are kept
    assert len(info.value.history) == 2


def test_run_accounting_and_invariants():
    m = instance("dual-band-2d")
    solver = Counting(m)
    cfg = OptimizerConfig(doe=DoeSpec("full_factorial", levels=[3, 3]), max_iterations=8, stagnation_limit=8)
    result = run(cfg, m.space, solver, m.objective_spec)
    h = result.history
    assert solver.calls == len(h) <= 9 + 2 * cfg.max_iterations
    assert np.all(np.diff(h.best_so_far()) <= 0)
    assert h.best.objective_value == h.objectives.min()
    assert h.entries[h.best_index].evaluation is result.best
    origins = [e.origin for e in h.entries]
    assert set(origins) <= {"doe", "global", "local"}
    n_doe = origins.count("doe")
    assert origins[:n_doe] == ["doe"] * n_doe and "doe" not in origins[n_doe:]
    for it in range(1, len(h.reports) + 1):
        assert sum(e.iteration == it for e in h.entries) <= 2
    assert [r.iteration for r in h.reports] == list(range(1, len(h.reports) + 1))


def test_flat_solver_stops_after_one_iteration(unit_space2):
    grid = FrequencyGrid([1.0, 2.0])
    flat = AffineSolver(unit_space2, grid, [0.4, 0.4], np.zeros((2, 2)))
    cfg = OptimizerConfig(doe=DoeSpec("lhs", 4), max_iterations=10, stagnation_limit=1)
    result = run(cfg, unit_space2, flat, ObjectiveSpec((1.5,)))
    assert len(result.history.reports) == 1
    assert result.converged
    assert result.history.reports[0].global_exhausted


def test_determinism_and_parallel_equivalence():
    m = instance("dual-band-2d")
    cfg = OptimizerConfig(doe=DoeSpec("lhs", 6), max_iterations=5, stagnation_limit=5, ei_seed=4)
    a = run(cfg, m.space, m, m.objective_spec).history
    b = run(cfg, m.space, m, m.objective_spec).history
    cfg.parallel_evals = True
    c = run(cfg, m.space, m, m.objective_spec).history
    for other in (b, c):
        assert [e.origin for e in a.entries] == [e.origin for e in other.entries]
        np.testing.assert_array_equal([e.evaluation.x for e in a.entries],
                                      [e.evaluation.x for e in other.entries])
        np.testing.assert_array_equal(a.objectives, other.objectives)


def test_global_candidate_on_anchor_is_skipped(monkeypatch):
    m = instance("dual-band-2d")
    cfg = OptimizerConfig(doe=DoeSpec("full_factorial", levels=[3, 3]))
    h = initialize(cfg, m.space, m, m.objective_spec)
    state = new_state(cfg, h)
    anchor = h.entries[4].evaluation.x

    def fake(*args, **kwargs):
        return EiResult(anchor.copy(), 1.0, -5.0, 1.0)

    monkeypatch.setattr(drv, "propose_global_candidate", fake)
    report = iterate(h, state, cfg, m.space, m, m.objective_spec)
    assert report.evaluated == ("local",)
    assert len(h) == 10


def test_trust_region_resets_on_new_best_and_shrinks_otherwise():
    m = instance("single-band-2d")
    cfg = OptimizerConfig(doe=DoeSpec("lhs", 5), max_iterations=10, stagnation_limit=10)
    h = initialize(cfg, m.space, m, m.objective_spec)
    state = new_state(cfg, h)
    for _ in range(8):
        best_before = h.best
        width_before = float(np.max(state.region.half_width))
        report = iterate(h, state, cfg, m.space, m, m.objective_spec)
        np.testing.assert_array_equal(state.region.center, h.best.x)
        if h.best is not best_before:
            assert report.half_width == cfg.initial_half_width
        else:
            assert report.half_width == max(width_before * cfg.shrink_factor, cfg.min_half_width)


def test_improvement_resets_stagnation():
    m = instance("dual-band-2d")
    cfg = OptimizerConfig(doe=DoeSpec("lhs", 4), max_iterations=12, stagnation_limit=12)
    h = initialize(cfg, m.space, m, m.objective_spec)
    state = new_state(cfg, h)
    for _ in range(12):
        before = state.stagnant
        r = iterate(h, state, cfg, m.space, m, m.objective_spec)
        if r.improved:
            assert state.stagnant == 0
        else:
            assert state.stagnant == before + 1
    assert any(r.improved for r in h.reports)


def test_single_failure_continues_double_failure_aborts():
    m = instance("dual-band-2d")
    cfg = OptimizerConfig(doe=DoeSpec("lhs", 4), max_iterations=3, stagnation_limit=3)
    # call 5 is the first global candidate
    flaky = FailingSolver(m, fail_on={5})
    result = run(cfg, m.space, flaky, m.objective_spec)
    assert result.history.reports[0].failures == ("global",)
    assert len(result.history.failures) == 1

    both = FailingSolver(m, fail_on={5, 6})
    with pytest.raises(OptimizationAborted) as info:
        run(cfg, m.space, both, m.objective_spec)
    assert len(info.value.history) == 4
    assert info.value.cause is not None


def test_doe_spec_counts():
    s = ParameterSpace([("a", 0, 1), ("b", 0, 1)])
    assert DoeSpec("full_factorial", levels=[3, 4]).count(2) == 12
    assert len(DoeSpec("full_factorial", levels=[3, 4]).points(s, 0)) == 12
    assert DoeSpec("lhs", 7).count(2) == 7
    with pytest.raises(ValueError):
        DoeSpec("sobol", 4).points(s, 0)

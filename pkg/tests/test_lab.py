"""Experiment plans: grid sizing, study runs, reports, serialization."""

import json
import math
from dataclasses import replace

import numpy as np
import pytest

from thinlab.lab import (
    CSV_COLUMNS,
    ExperimentPlan,
    StudyError,
    default_regime_plan,
    default_study_plan,
    emit_report,
    make_data_function,
    plan_from_dict,
    plan_to_dict,
    run_convergence_study,
    run_regime_suite,
)
from thinlab.shapes import interval
from thinlab.stochastic import (
    LatticeConfig,
    Realization,
    build_obstacle_config,
    constant_process,
    iid_bernoulli,
    iid_uniform,
    periodic_process,
)


def tiny_plan(**overrides):
    """Two-level critical plan small enough for unit tests.

    The reference capacity is pinned so no precompute runs; its exact
    value only sets patch sizes here.
    """
    lattice = LatticeConfig(
        dimension=2, p=2.0, a=0.5, regime="critical", Lambda=1.0, M=6.0,
        reference_shape=interval(0.0, 1.0), epsilons=(1 / 4, 1 / 6),
        window=((0.0, 1.0),))
    base = dict(
        lattice=lattice,
        process=constant_process(1.0, seed=3),
        height=0.5,
        realizations=1,
        resolve_factor=5.0,
        reference_capacity=1.0,
        psi={"name": "constant", "value": 0.5},
        sigma_faces=("top",),
        sigma_data={"name": "cosine", "offset": 0.25, "amplitude": 0.25,
                    "frequency": 1.0},
        witness={"name": "constant", "value": 0.5},
        seed=11,
    )
    base.update(overrides)
    return ExperimentPlan(**base)


class TestDataFunctions:
    def test_none_scalar_callable_pass_through(self):
        assert make_data_function(None) is None
        assert make_data_function(0.75) == 0.75
        fn = lambda *c: c[0]
        assert make_data_function(fn) is fn

    def test_named_specs(self):
        assert make_data_function({"name": "zero"}) == 0.0
        assert make_data_function({"name": "constant", "value": 2.0}) == 2.0
        cos = make_data_function({"name": "cosine", "offset": 0.25,
                                  "amplitude": 0.25, "frequency": 1.0})
        y = np.array([0.0, 0.25, 0.5])
        np.testing.assert_allclose(cos(y), [0.5, 0.25, 0.0], atol=1e-15)

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError, match="unknown data function"):
            make_data_function({"name": "sawtooth"})


class TestPlanValidation:
    def test_levels_default_to_full_ladder(self):
        assert tiny_plan().levels == (0, 1)
        assert tiny_plan(levels=(1,)).levels == (1,)

    def test_negative_realizations_rejected(self):
        with pytest.raises(ValueError, match="realizations"):
            tiny_plan(realizations=-1)

    def test_gamma_floor_constant_and_periodic(self):
        assert tiny_plan().gamma_floor() == 1.0
        plan = tiny_plan(process=periodic_process([0.0, 2.0, 0.5]))
        assert plan.gamma_floor() == 0.5

    def test_gamma_floor_iid(self):
        assert tiny_plan(process=iid_uniform(0.2, 0.8)).gamma_floor() == 0.2
        assert tiny_plan(process=iid_bernoulli(3.0, 0.5)).gamma_floor() == 3.0

    def test_gamma_floor_rejects_vanishing_gamma(self):
        with pytest.raises(StudyError, match="arbitrarily small"):
            tiny_plan(process=iid_uniform(0.0, 1.0)).gamma_floor()
        with pytest.raises(StudyError, match="arbitrarily small"):
            tiny_plan(process=periodic_process([0.0])).gamma_floor()

    def test_patch_radius_needs_reference_capacity(self):
        plan = tiny_plan(reference_capacity=None)
        with pytest.raises(StudyError, match="reference capacity"):
            plan.patch_radius(0, 1.0)

    def test_sigma_requires_faces(self):
        assert tiny_plan(sigma_faces=()).sigma() is None
        bc = tiny_plan().sigma()
        assert bc is not None and bc.faces == ("top",)


class TestLevelGrids:
    def test_mesh_resolves_patches_and_tiles_box(self):
        plan = tiny_plan()
        for j in plan.levels:
            grid = plan.level_grid(j)
            eps = plan.lattice.epsilon(j)
            h = max(grid.spacings)
            ratio = eps / h
            assert abs(ratio - round(ratio)) < 1e-9
            r_min = build_obstacle_config(
                plan.lattice, plan.process, j, Realization(omega_id=0),
                plan.reference_capacity).min_patch_radius()
            assert r_min / h >= plan.resolve_factor * (1 - 1e-9)
            for n, span in zip(grid.shape, grid.extent + (grid.height,)):
                assert abs((n - 1) * grid.spacings[0] - span) < 1e-12

    def test_patch_centers_land_on_nodes(self):
        plan = tiny_plan()
        config = build_obstacle_config(
            plan.lattice, plan.process, 1, Realization(omega_id=0),
            plan.reference_capacity)
        grid = plan.level_grid(1)
        h = grid.spacings[0]
        for patch in config.patches:
            frac = patch.center[0] / h
            assert abs(frac - round(frac)) < 1e-9

    def test_tiling_search_refines_upward(self):
        # height 0.37 never tiles with eps = 1/4 at any cell count, since
        # 0.37 * c * 4 is integral only when c is a multiple of 25
        plan = tiny_plan(height=0.37)
        grid = plan.level_grid(0)
        eps = plan.lattice.epsilon(0)
        c = round(eps / max(grid.spacings))
        assert c % 25 == 0
        assert c >= plan.resolve_factor * eps / plan.patch_radius(
            0, plan.gamma_floor()) - 1e-6

    def test_untileable_box_reported(self):
        plan = tiny_plan(height=math.pi / 4)
        with pytest.raises(StudyError, match="tiles the box"):
            plan.level_grid(0)

    def test_finest_grid_is_smallest_epsilon(self):
        plan = tiny_plan()
        assert plan.finest_grid() == plan.level_grid(1)

    def test_resolution_guard_aborts_coarse_meshes(self):
        plan = tiny_plan(resolve_factor=2.0, levels=(0,))
        with pytest.raises(StudyError, match="resolution guard"):
            run_convergence_study(plan)


class TestStudyRuns:
    def test_one_row_per_level_and_realization(self):
        plan = tiny_plan(realizations=2)
        report = run_convergence_study(plan)
        assert len(report.rows) == 4
        assert [(r.j, r.omega_id) for r in report.rows] == [
            (0, 0), (0, 1), (1, 0), (1, 1)]
        assert all(r.eps_energy > 0 for r in report.rows)
        assert all(r.residual <= 1e-5 for r in report.rows)
        assert report.limit_energy > 0
        assert len(report.level_stats) == 2

    def test_constant_process_realizations_agree(self):
        report = run_convergence_study(tiny_plan(realizations=2))
        by_level = {}
        for row in report.rows:
            by_level.setdefault(row.j, []).append(row.eps_energy)
        for energies in by_level.values():
            assert energies[0] == energies[1]

    def test_level_restriction(self):
        report = run_convergence_study(tiny_plan(levels=(1,)))
        assert {r.j for r in report.rows} == {1}
        assert len(report.level_stats) == 1
        assert report.slack_spearman is None

    def test_zero_realizations_still_solves_limit(self):
        report = run_convergence_study(tiny_plan(realizations=0))
        assert report.rows == ()
        assert report.level_stats == ()
        assert report.limit_energy > 0

    def test_eps_energy_dominates_its_own_limit(self):
        # patches only add constraints, so each constrained energy sits
        # at or above the unconstrained limit energy of the same data
        report = run_convergence_study(tiny_plan())
        for row in report.rows:
            assert row.eps_energy >= report.limit_energy - 1e-10

    def test_regime_suite_requires_critical_base(self):
        plan = tiny_plan()
        zero = replace(plan, lattice=replace(plan.lattice, regime="zero",
                                             Lambda=0.0))
        with pytest.raises(StudyError, match="must be critical"):
            run_regime_suite(zero)


class TestReports:
    def test_csv_layout_and_float_round_trip(self, tmp_path):
        report = run_convergence_study(tiny_plan())
        paths = emit_report(report, out_dir=str(tmp_path))
        lines = open(paths["csv"]).read().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + len(report.rows)
        first = lines[1].split(",")
        assert float(first[4]) == report.rows[0].eps_energy
        payload = json.load(open(paths["json"]))
        assert payload["limit_energy"] == report.limit_energy
        assert len(payload["rows"]) == len(report.rows)
        assert payload["plan"]["seed"] == 11

    def test_zero_realizations_gives_header_only_csv(self, tmp_path):
        report = run_convergence_study(tiny_plan(realizations=0))
        paths = emit_report(report, out_dir=str(tmp_path))
        assert open(paths["csv"]).read() == ",".join(CSV_COLUMNS) + "\n"

    def test_deterministic_mode_zeroes_wall_clock(self, tmp_path):
        report = run_convergence_study(tiny_plan())
        paths = emit_report(report, out_dir=str(tmp_path),
                            deterministic=True)
        lines = open(paths["csv"]).read().splitlines()
        assert all(line.rsplit(",", 1)[1] == "0.0" for line in lines[1:])
        payload = json.load(open(paths["json"]))
        assert payload["wall_ms"] == 0.0

    def test_repeated_runs_are_byte_identical(self, tmp_path):
        plan = tiny_plan(process=iid_uniform(0.5, 1.0, seed=7))
        blobs = []
        for tag in ("one", "two"):
            report = run_convergence_study(plan)
            paths = emit_report(report, out_dir=str(tmp_path / tag),
                                deterministic=True)
            blobs.append((open(paths["csv"], "rb").read(),
                          open(paths["json"], "rb").read()))
        assert blobs[0] == blobs[1]


class TestPlanSerialization:
    def test_round_trip_preserves_every_field(self):
        plan = tiny_plan(process=iid_uniform(0.25, 0.75, seed=5))
        d = json.loads(json.dumps(plan_to_dict(plan)))
        again = plan_from_dict(d)
        assert plan_to_dict(again) == plan_to_dict(plan)
        assert again.lattice == plan.lattice
        assert again.process == plan.process

    def test_infinite_lambda_survives_json(self):
        plan = tiny_plan()
        lattice = replace(plan.lattice, regime="infinity", Lambda=math.inf)
        plan = replace(plan, lattice=lattice)
        d = json.loads(json.dumps(plan_to_dict(plan)))
        assert d["Lambda"] == "infinity"
        assert math.isinf(plan_from_dict(d).lattice.Lambda)

    def test_callable_data_cannot_serialize(self):
        plan = tiny_plan(psi=lambda *c: c[0])
        with pytest.raises(ValueError, match="named spec"):
            plan_to_dict(plan)

    def test_default_presets_round_trip(self):
        for preset in (default_study_plan, default_regime_plan):
            plan = preset(realizations=1)
            d = json.loads(json.dumps(plan_to_dict(plan)))
            assert plan_to_dict(plan_from_dict(d)) == plan_to_dict(plan)


class TestDefaultPresets:
    def test_study_preset_shape(self):
        plan = default_study_plan(realizations=1)
        lat = plan.lattice
        assert (lat.dimension, lat.p, lat.a) == (2, 2.0, 0.5)
        assert lat.regime == "critical"
        assert plan.reference_capacity == pytest.approx(1.2309, rel=1e-3)
        assert lat.Lambda == pytest.approx(math.sqrt(2) *
                                           plan.reference_capacity)
        # Lambda calibration makes every patch radius exactly 2 * eps^2
        for j in plan.levels:
            eps = lat.epsilon(j)
            assert plan.patch_radius(j, 1.0) == pytest.approx(2 * eps * eps)

    def test_regime_preset_has_level_independent_stencil(self):
        plan = default_regime_plan(realizations=1)
        lattice = replace(plan.lattice, regime="infinity", Lambda=math.inf)
        plan = replace(plan, lattice=lattice)
        cells = set()
        for j in plan.levels:
            eps = plan.lattice.epsilon(j)
            grid = plan.level_grid(j)
            cells.add(round(eps / max(grid.spacings)))
            r = plan.patch_radius(j, plan.gamma_floor())
            assert r / eps == pytest.approx(
                (0.3 / plan.reference_capacity) ** (4.0 / 3.0))
        assert len(cells) == 1

"""Acceptance suite: eleven numbered end-to-end checks.

Each check prints one `criterion N: PASS/FAIL - detail` line; the block
is echoed again by the terminal-summary hook in conftest.py so a plain
pytest run shows the verdicts even with capture enabled.  Tolerances,
sizes, and wall-clock budgets are part of the checks themselves.
"""

import math
import time

import numpy as np

from thinlab import (
    BoundaryCondition,
    GridSpec,
    LimitProblem,
    ObstacleProblem,
    ball,
    box,
    check_potential_monotonicity,
    check_scaling,
    disk,
    global_capacity,
    interval,
    muckenhoupt_check,
    solve_eps_problem,
    solve_limit_problem,
    union,
)
from thinlab.lab import (
    ExperimentPlan,
    default_regime_plan,
    default_study_plan,
    emit_report,
    run_convergence_study,
    run_regime_suite,
)
from thinlab.stochastic import (
    LatticeConfig,
    Realization,
    cells_inside,
    empirical_mean,
    iid_uniform,
    weak_star_test,
)

SEED = 20260819
_RESULTS: list[tuple[int, bool, str]] = []


def report(num: int, ok: bool, detail: str) -> None:
    _RESULTS.append((num, ok, detail))
    line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    assert ok, line


def test_criterion_01_capacity_scale_covariance():
    """cap(lam E, B_lam n)/cap(E, B_n) matches lam^(N-p+a) within 2%."""
    cases = [
        (ball((0.0, 0.0), 0.5), 3, 0.0),
        (interval(0.0, 0.5), 2, 0.5),
    ]
    worst = 0.0
    for shape, dim, a in cases:
        t0 = time.perf_counter()
        for lam in (2.0, 4.0):
            ratio = check_scaling(shape, lam, n=2.0, a=a, p=2.0,
                                  dimension=dim)
            expect = lam ** (dim - 2.0 + a)
            worst = max(worst, abs(ratio - expect) / expect)
        elapsed = time.perf_counter() - t0
        assert elapsed < 120.0, f"case took {elapsed:.1f}s"
    report(1, worst < 0.02,
           f"max covariance error {worst:.2e} over 4 cases (tol 2e-02)")


def test_criterion_02_whole_space_closed_forms():
    """Extrapolated capacities: solid ball 4*pi*r, flat disk 8*r (5%)."""
    t0 = time.perf_counter()
    got_ball = global_capacity(ball((0.0, 0.0), 0.5), n0=1.5,
                               resolution=1 / 16, a=0.0, p=2.0,
                               dimension=3, h_levels=2).extrapolated
    got_disk = global_capacity(disk((0.0, 0.0), 0.5), n0=1.5,
                               resolution=1 / 16, a=0.0, p=2.0,
                               dimension=3, h_levels=2).extrapolated
    elapsed = time.perf_counter() - t0
    err_ball = abs(got_ball - 2.0 * math.pi) / (2.0 * math.pi)
    err_disk = abs(got_disk - 4.0) / 4.0
    assert elapsed < 600.0, f"took {elapsed:.0f}s"
    report(2, err_ball < 0.05 and err_disk < 0.05,
           f"ball {got_ball:.6f} vs {2 * math.pi:.6f} ({err_ball:.1%}), "
           f"disk {got_disk:.6f} vs 4.0 ({err_disk:.1%}), "
           f"{elapsed:.0f}s")


def _random_shape(rng):
    kind = int(rng.integers(0, 4))
    cx, cy = rng.uniform(-0.2, 0.2, size=2)
    r = float(rng.uniform(0.15, 0.35))
    if kind == 0:
        return ball((cx, cy), r)
    if kind == 1:
        return disk((cx, cy), r)
    if kind == 2:
        return box((cx, cy), (r, float(rng.uniform(0.1, 0.3))))
    return union(disk((cx - 0.25, cy), float(rng.uniform(0.1, 0.2))),
                 ball((cx + 0.25, cy), float(rng.uniform(0.1, 0.2))))


def test_criterion_03_window_monotonicity():
    """capacity(E, n) never increases along n in {n0, 2n0, 4n0}."""
    rng = np.random.default_rng(SEED)
    violations = 0
    for _ in range(10):
        shape = _random_shape(rng)
        res = global_capacity(shape, n0=1.0, resolution=1 / 8,
                              a=0.0, p=2.0, dimension=3, h_levels=1)
        vals = [v for _, v in res.ladder]
        violations += sum(1 for a_, b_ in zip(vals, vals[1:]) if b_ > a_)
        violations += ("non-monotone-ladder" in res.flags)
    report(3, violations == 0,
           f"{violations} violations over 10 random shapes x 3 windows")


def _nested_pair(rng):
    kind = int(rng.integers(0, 4))
    cx, cy = rng.uniform(-0.15, 0.15, size=2)
    r_out = float(rng.uniform(0.3, 0.4))
    f = float(rng.uniform(0.5, 0.85))
    if kind == 0:
        return ball((cx, cy), f * r_out), ball((cx, cy), r_out)
    if kind == 1:
        return disk((cx, cy), f * r_out), disk((cx, cy), r_out)
    if kind == 2:
        return (box((cx, cy), (f * r_out, f * 0.3)),
                box((cx, cy), (r_out, 0.3)))
    return (disk((cx, cy), f * r_out),
            union(disk((cx, cy), r_out), ball((cx + 0.5, cy), 0.15)))


def test_criterion_04_potential_monotonicity():
    """u^E <= u^F + 1e-8 nodewise for 10 random nested pairs E in F."""
    rng = np.random.default_rng(SEED + 1)
    worst = 0.0
    failures = 0
    for _ in range(10):
        inner, outer = _nested_pair(rng)
        ok, violation = check_potential_monotonicity(
            inner, outer, n=1.5, resolution=1 / 8, a=0.0, p=2.0,
            dimension=3, tol=1e-8)
        worst = max(worst, violation)
        failures += not ok
    report(4, failures == 0,
           f"{failures} failures over 10 nested pairs, "
           f"max nodewise excess {worst:.2e} (tol 1e-08)")


def test_criterion_05_ergodic_means_and_weak_star():
    """iid uniform[0,1]: cell means inside 3-sigma CLT bands on levels
    with at least 10^4 cells, and exact-overlap integrals against five
    rational rectangles."""
    process = iid_uniform(0.0, 1.0, seed=SEED)
    V = ((0.0, 1.0), (0.0, 1.0))
    sigma = math.sqrt(1.0 / 12.0)
    worst_pull = 0.0
    n_means = 0
    for j, n_omega in ((7, 12), (8, 4)):
        eps = 2.0 ** (-j)
        window = cells_inside(V, eps)
        n_cells = int(np.prod([hi - lo for lo, hi in window]))
        assert n_cells >= 10 ** 4, f"level {j} has only {n_cells} cells"
        band = 3.0 * sigma / math.sqrt(n_cells)
        for w in range(n_omega):
            mean = empirical_mean(process, V, j, Realization(omega_id=w))
            worst_pull = max(worst_pull, abs(mean - 0.5) / band)
            n_means += 1
    cubes = [
        ((0.25, 0.75), (0.25, 0.75)),
        ((1 / 3, 2 / 3), (1 / 3, 2 / 3)),
        ((0.125, 0.375), (0.5, 0.875)),
        ((0.25, 0.5), (0.25, 0.5)),
        ((0.375, 0.625), (0.125, 0.875)),
    ]
    j = 7
    eps = 2.0 ** (-j)
    worst_ws = 0.0
    for q in cubes:
        area = float(np.prod([hi - lo for lo, hi in q]))
        band = 3.0 * sigma * eps * math.sqrt(area)
        for w in range(4):
            got = weak_star_test(process, V, j, Realization(omega_id=w), q)
            worst_ws = max(worst_ws, abs(got - 0.5 * area) / band)
    ok = worst_pull <= 1.0 and worst_ws <= 1.0
    report(5, ok,
           f"{n_means} means worst at {worst_pull:.2f} sigma-band, "
           f"5 rectangles x 4 draws worst at {worst_ws:.2f} band")


def test_criterion_06_full_bottom_exact_solve():
    """Obstacle on the whole bottom face: energy 1 and field 1-z (1%)."""
    grid = GridSpec(dimension=3, extent=(1.0, 1.0), height=1.0,
                    shape=(17, 17, 17), weight_exponent=0.0,
                    energy_exponent=2.0)
    prob = ObstacleProblem(grid=grid, obstacles="all", psi=1.0,
                           sigma=BoundaryCondition(("top",), 0.0))
    rep = solve_eps_problem(prob)
    z = grid.axis(2)
    exact = np.broadcast_to(1.0 - z, grid.shape)
    field_err = float(np.abs(rep.field.values - exact).max())
    energy_err = abs(rep.total_energy - 1.0)
    report(6, energy_err < 0.01 and field_err < 0.01,
           f"energy 1{energy_err:+.2e}, max field error {field_err:.2e}")


def test_criterion_07_penalized_column_closed_form():
    """Penalty c on the bottom trace of a column: value c/(c+2) (1%)."""
    grid = GridSpec(dimension=3, extent=(1.0, 1.0), height=1.0,
                    shape=(2, 2, 256), weight_exponent=0.0,
                    energy_exponent=2.0)
    worst = 0.0
    slowest = 0.0
    for c in (0.5, 1.0, 2.0, 4.0):
        prob = LimitProblem.from_regime(grid, lam=c, mean_gamma=1.0,
                                        psi=1.0,
                                        sigma=BoundaryCondition(("top",),
                                                                0.0))
        t0 = time.perf_counter()
        rep = solve_limit_problem(prob)
        slowest = max(slowest, time.perf_counter() - t0)
        expect = c / (c + 2.0)
        worst = max(worst, abs(rep.total_energy - expect) / expect)
    report(7, worst < 0.01 and slowest < 1.0,
           f"max value error {worst:.2e} over c in (0.5,1,2,4), "
           f"slowest solve {slowest * 1e3:.0f}ms")


def test_criterion_08_default_study_convergence():
    """Stock critical-regime study: energy gaps shrink level by level,
    the finest gap is below 10%, and distances to the limit shrink."""
    t0 = time.perf_counter()
    plan = default_study_plan(seed=SEED)
    rep = run_convergence_study(plan)
    elapsed = time.perf_counter() - t0
    gaps = [s.rel_gap for s in rep.level_stats]
    dists = [s.mean_distance for s in rep.level_stats]
    gaps_down = all(b < a for a, b in zip(gaps, gaps[1:]))
    dists_down = all(b < a for a, b in zip(dists, dists[1:]))
    assert elapsed < 1800.0, f"took {elapsed:.0f}s"
    report(8, gaps_down and gaps[-1] < 0.10 and dists_down,
           "gaps " + "/".join(f"{g:.2%}" for g in gaps)
           + f", distance rho {rep.distance_spearman}, {elapsed:.0f}s")


def test_criterion_09_regime_dichotomy():
    """Vanishing and exploding scaling both converge level by level and
    the three limit energies are strictly sandwiched."""
    plan = default_regime_plan(seed=SEED)
    suite = run_regime_suite(plan)
    sandwich = suite["sandwich"]
    strict = (sandwich["unconstrained"] < sandwich["penalized"]
              < sandwich["hard"])
    details = [f"free {sandwich['unconstrained']:.6f} < "
               f"pen {sandwich['penalized']:.6f} < "
               f"hard {sandwich['hard']:.6f}"]
    mono = {}
    for regime in ("zero", "infinity"):
        gaps = [s.rel_gap for s in suite["reports"][regime].level_stats]
        mono[regime] = all(b < a for a, b in zip(gaps, gaps[1:]))
        details.append(regime + " gaps "
                       + "/".join(f"{g:.2%}" for g in gaps))
    report(9, strict and mono["zero"] and mono["infinity"],
           "; ".join(details))


def test_criterion_10_weight_class_verdicts():
    """A_p verdicts for |z|^a at the corner exponents, p = 2."""
    expected = {-1.0: False, -0.5: True, 0.0: True, 0.5: True,
                1.0: False, 2.0: False}
    mismatches = []
    for a, want in expected.items():
        got = muckenhoupt_check(a, 2.0).admissible
        if got is not want:
            mismatches.append((a, got))
    report(10, not mismatches,
           f"{len(mismatches)} mismatches over exponents "
           f"{sorted(expected)} (p = 2)")


def test_criterion_11_deterministic_reruns(tmp_path):
    """Same plan, same seed, one thread: byte-identical CSV reports."""
    lattice = LatticeConfig(
        dimension=2, p=2.0, a=0.5, regime="critical", Lambda=1.0, M=6.0,
        reference_shape=interval(0.0, 1.0), epsilons=(1 / 4, 1 / 6),
        window=((0.0, 1.0),))
    plan = ExperimentPlan(
        lattice=lattice,
        process=iid_uniform(0.5, 1.0, seed=SEED),
        height=0.5,
        realizations=3,
        resolve_factor=5.0,
        reference_capacity=1.0,
        psi={"name": "constant", "value": 0.5},
        sigma_faces=("top",),
        sigma_data={"name": "cosine", "offset": 0.25, "amplitude": 0.25,
                    "frequency": 1.0},
        witness={"name": "constant", "value": 0.5},
        seed=SEED,
    )
    blobs = []
    for tag in ("one", "two"):
        rep = run_convergence_study(plan, threads=1)
        paths = emit_report(rep, out_dir=str(tmp_path / tag),
                            deterministic=True)
        blobs.append(open(paths["csv"], "rb").read())
    n_rows = blobs[0].count(b"\n") - 1
    report(11, blobs[0] == blobs[1] and n_rows == 6,
           f"two runs, {n_rows} rows each, byte-identical = "
           f"{blobs[0] == blobs[1]}")

import math

import numpy as np
import pytest

from conewatch import get_model
from conewatch.classifier import ClassifierParams, OmegaKind
from conewatch.errors import EmptySweep, ValidationError
from conewatch.prevalence import (SweepConfig, mix64, pb_check, point_seed, probe_scan,
                                  sample_point, sweep, write_sweep)


def test_splitmix_reference_values():
    # first outputs of the reference SplitMix64 generator seeded with 0
    state = 0
    out = []
    for _ in range(3):
        state = (state + 0x9E3779B97F4A7C15) & (2**64 - 1)
        out.append(mix64(state))
    assert out == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_point_seeds_distinct_and_stable():
    seeds = {point_seed(7, i) for i in range(10_000)}
    assert len(seeds) == 10_000
    assert point_seed(7, 3) == point_seed(7, 3) != point_seed(8, 3)
    assert all(0 <= s < 2**64 for s in seeds)


def test_sample_points_uniform(linear_diag):
    box = linear_diag.default_box
    pts = np.array([sample_point(box, 1, i) for i in range(4000)])
    assert np.all(pts >= -2) and np.all(pts <= 2)
    np.testing.assert_allclose(pts.mean(axis=0), 0.0, atol=0.1)


def test_sweep_linear_diag(linear_diag):
    rep = sweep(linear_diag.model, linear_diag.recommended_cone,
                SweepConfig(linear_diag.default_box, 100, master_seed=3))
    assert rep.counts[OmegaKind.CONVERGES.value] == 100
    assert sum(rep.counts.values()) == 100
    assert rep.fraction_Q_union_S == 1.0 and rep.n_in_S == 100
    pb = pb_check(rep)
    assert pb.eligible == 0 and pb.violations == []


def test_sweep_limit_cycle(limit_cycle):
    rep = sweep(limit_cycle.model, limit_cycle.recommended_cone,
                SweepConfig(limit_cycle.default_box, 60, master_seed=11))
    assert rep.fraction_Q_union_S == 1.0
    assert rep.periodic_fraction(2 * math.pi, 1e-2) == 1.0
    pb = pb_check(rep)
    assert pb.eligible == 60 and pb.periodic == 60 and not pb.violations


def test_single_point_reproducible(limit_cycle):
    cfg = SweepConfig(limit_cycle.default_box, 1, master_seed=99)
    a = sweep(limit_cycle.model, limit_cycle.recommended_cone, cfg)
    b = sweep(limit_cycle.model, limit_cycle.recommended_cone, cfg)
    assert len(a.records) == 1 and a.records[0].same_as(b.records[0])
    assert a.records_csv() == b.records_csv()


def test_subset_recomputable(limit_cycle):
    full = sweep(limit_cycle.model, limit_cycle.recommended_cone,
                 SweepConfig(limit_cycle.default_box, 5, master_seed=4))
    np.testing.assert_array_equal(full.records[3].x0,
                                  sample_point(limit_cycle.default_box, 4, 3))


def test_worker_count_invariance(limit_cycle):
    base = SweepConfig(limit_cycle.default_box, 24, master_seed=5)
    one = sweep(limit_cycle.model, limit_cycle.recommended_cone, base)
    three = sweep(limit_cycle.model, limit_cycle.recommended_cone,
                  SweepConfig(base.box, 24, master_seed=5, workers=3))
    assert one.records_csv() == three.records_csv()
    assert one.summary() == three.summary()


def test_empty_sweep(linear_diag):
    with pytest.raises(EmptySweep):
        sweep(linear_diag.model, linear_diag.recommended_cone,
              SweepConfig(linear_diag.default_box, 0))
    with pytest.raises(ValidationError):
        SweepConfig(linear_diag.default_box, -1)
    with pytest.raises(ValidationError):
        SweepConfig([[1.0, 1.0], [0.0, 1.0], [0.0, 1.0]], 3)


def test_non_dissipative_sweep_warns():
    from conewatch.cone import build_cone
    from conewatch.models import polynomial_model
    model = polynomial_model("riccati2", [[2, 0], [0, 1]], [[1.0, 0.0], [0.0, -1.0]])
    params = ClassifierParams(transient=5.0, tail_window=5.0)
    rep = sweep(model, build_cone([-1.0, 1.0]), SweepConfig([[0.5, 1.0], [-1.0, 1.0]], 8,
                                                            params=params))
    assert rep.warnings and not rep.dissipativity.bounded
    assert rep.counts[OmegaKind.UNRESOLVED.value] == 8
    # failed integrations are not counted as Poincare-Bendixson violations
    assert pb_check(rep).eligible == 0


def test_may_leonard_long_integration(may_leonard):
    params = ClassifierParams(transient=200.0, tail_window=200.0)
    rep = sweep(may_leonard.model, may_leonard.recommended_cone,
                SweepConfig(may_leonard.default_box, 20, master_seed=1, params=params))
    pb = pb_check(rep, params=params)
    assert pb.eligible == 0 and pb.periodic == 0
    assert rep.counts[OmegaKind.PERIODIC.value] == 0


def test_pb_check_with_other_equilibria(limit_cycle):
    rep = sweep(limit_cycle.model, limit_cycle.recommended_cone,
                SweepConfig(limit_cycle.default_box, 5, master_seed=2))
    # a fake equilibrium on the cycle makes every tail ineligible
    assert pb_check(rep, equilibria=[[1.0, 0.0, 0.0]], eps_eq=0.2).eligible == 0
    assert pb_check(rep, equilibria=[]).eligible == 5


def test_probe_scan_limit_cycle(limit_cycle):
    res = probe_scan(limit_cycle.model, limit_cycle.recommended_cone, [0.0, 0.0, 1.0], 0.1, 30,
                     box=limit_cycle.default_box)
    assert res.fraction_in_Q == 1.0 and len(res.per_point) == 30
    assert "diagnostic" in res.note


def test_probe_scan_linear_diag(linear_diag):
    for x in ([0.0, 0.0, 1.0], [1.0, -0.5, 0.2]):
        res = probe_scan(linear_diag.model, linear_diag.recommended_cone, x, 0.1, 20)
        assert res.fraction_in_Q == 1.0


def test_probe_scan_reproducible(limit_cycle):
    a = probe_scan(limit_cycle.model, limit_cycle.recommended_cone, [0, 0, 1], 0.1, 1, rng_seed=4)
    b = probe_scan(limit_cycle.model, limit_cycle.recommended_cone, [0, 0, 1], 0.1, 1, rng_seed=4)
    assert a.per_point[0].same_as(b.per_point[0])
    with pytest.raises(ValidationError):
        probe_scan(limit_cycle.model, limit_cycle.recommended_cone, [0, 0, 1], 0.0, 1)


def test_write_sweep(tmp_path, linear_diag):
    import json
    rep = sweep(linear_diag.model, linear_diag.recommended_cone,
                SweepConfig(linear_diag.default_box, 4, master_seed=21))
    jpath, cpath = write_sweep(rep, tmp_path)
    assert jpath.name == "sweep_linear_diag_seed21.json"
    assert cpath.name == "sweep_linear_diag_seed21.csv"
    assert json.loads(jpath.read_text())["n_points"] == 4
    assert len(cpath.read_text().splitlines()) == 5

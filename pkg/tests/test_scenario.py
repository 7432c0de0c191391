import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdilab.attack import AttackSpec, RandomGaussian, ReplayEvent, Stealthy
from fdilab.errors import ContractError
from fdilab.estimation import static_detect
from fdilab.grid import NoiseModel, dc_power_flow
from fdilab.netfeatures import default_profile, synthesize
from fdilab.scenario import (
    GeneratorTrip,
    ScenarioConfig,
    inject,
    operating_point,
    simulate,
    trip_shift,
)
from fdilab.trace import (
    Trace,
    concatenate,
    feature_path,
    read_trace,
    split_bounds,
    split_chronological,
    write_trace,
)


def sim(case39, h39, noise39, seed=0, **kw):
    kw.setdefault("duration", 10)
    return simulate(ScenarioConfig(**kw), case39, h39, noise39, np.random.default_rng(seed))


def test_ten_seconds_at_ten_hz(case39, h39, noise39):
    tr = sim(case39, h39, noise39)
    assert len(tr) == 100
    assert tr.z.shape == (100, 85)
    assert tr.states.shape == (100, 38)
    assert not tr.labels.any()


def test_frozen_dynamics(case39, h39, noise39):
    tr = sim(case39, h39, noise39, load_walk_sigma=0.0)
    assert (tr.states == tr.states[0]).all()
    np.testing.assert_allclose(tr.states[0], operating_point(case39), atol=1e-15)
    resid = tr.z - tr.states @ h39.h.T
    assert resid.std() == pytest.approx(0.01, rel=0.05)


def test_trip_step_matches_dc_resolve(case39, h39):
    quiet = NoiseModel.uniform(85, 1e-12)
    tr = sim(case39, h39, quiet, load_walk_sigma=0.0, events=(GeneratorTrip(33, 5.0),))
    row = 46 + case39.buses.index(33)
    step = tr.z[50, row] - tr.z[49, row]
    assert step == pytest.approx(-case39.gen_mw[33] / case39.base_mva, abs=1e-8)
    # oracle: direct DC solves before and after removing the unit
    before = dc_power_flow(case39, case39.injections_pu())
    after = dc_power_flow(case39, case39.injections_pu(frozenset({33})))
    np.testing.assert_allclose(after - before, trip_shift(case39, 33), atol=1e-12)
    np.testing.assert_allclose(tr.states[50] - tr.states[49], after - before, atol=1e-12)


def test_trip_errors(case39, h39, noise39):
    with pytest.raises(ContractError):
        trip_shift(case39, 5)
    with pytest.raises(ContractError):
        trip_shift(case39, 31)
    with pytest.raises(ContractError):
        sim(case39, h39, noise39, events=(GeneratorTrip(33, 50.0),))


def test_config_validation():
    with pytest.raises(ContractError):
        ScenarioConfig(0)
    with pytest.raises(ContractError):
        ScenarioConfig(1, reversion=1.5)
    with pytest.raises(ContractError):
        ScenarioConfig(1, load_walk_sigma=-1)


def test_seeded_determinism(case39, h39, noise39):
    a = sim(case39, h39, noise39, seed=3)
    b = sim(case39, h39, noise39, seed=3)
    assert a.z.tobytes() == b.z.tobytes()
    assert a.states.tobytes() == b.states.tobytes()
    c = inject(a, AttackSpec(RandomGaussian(10), (20, 40)), h39, np.random.default_rng(1))
    d = inject(b, AttackSpec(RandomGaussian(10), (20, 40)), h39, np.random.default_rng(1))
    assert c.z.tobytes() == d.z.tobytes()


def test_inject_empty_window(case39, h39, noise39):
    tr = sim(case39, h39, noise39)
    out = inject(tr, AttackSpec(RandomGaussian(85), (30, 30)), h39, np.random.default_rng(0))
    assert np.array_equal(out.z, tr.z)
    assert not out.labels.any()


def test_inject_random_labels(case39, h39, noise39):
    tr = sim(case39, h39, noise39)
    out = inject(tr, AttackSpec(RandomGaussian(85), (30, 60)), h39, np.random.default_rng(0))
    assert out.labels.sum() == 30
    assert out.labels[30:60].all()
    assert np.array_equal(out.states, tr.states)
    assert np.array_equal(out.z[:30], tr.z[:30])
    assert np.array_equal(out.z[60:], tr.z[60:])
    assert out.attack_meta is not None


def test_label_soundness_with_tiny_attack(case39, h39, noise39):
    tr = sim(case39, h39, noise39)
    out = inject(tr, AttackSpec(Stealthy(np.zeros(38)), (10, 20)), h39, np.random.default_rng(0))
    # a zero perturbation is still an attack window
    assert out.labels.sum() == 10
    assert np.array_equal(out.z, tr.z)


def test_inject_stealthy_full_trace_passes_static(case39, h39, noise39):
    tr = sim(case39, h39, noise39, load_walk_sigma=0.0)
    c = np.random.default_rng(2).normal(0, 0.05, 38)
    out = inject(tr, AttackSpec(Stealthy(c), (0, len(tr))), h39, np.random.default_rng(0))
    assert out.labels.all()
    before = static_detect(tr.z, h39, noise39)
    after = static_detect(out.z, h39, noise39)
    np.testing.assert_allclose(after.statistic, before.statistic, atol=1e-9)
    assert np.array_equal(after.is_bad, before.is_bad)


def test_inject_errors(case39, h39, noise39):
    tr = sim(case39, h39, noise39)
    with pytest.raises(ContractError):
        inject(tr, AttackSpec(RandomGaussian(3), (50, 101)), h39, np.random.default_rng(0))
    with pytest.raises(ContractError):
        inject(tr, AttackSpec(ReplayEvent("missing"), (0, 5)), h39, np.random.default_rng(0))


def test_inject_replay(case39, h39, noise39):
    victim = sim(case39, h39, noise39, seed=1)
    recorded = sim(case39, h39, noise39, seed=2, events=(GeneratorTrip(35, 1.0),))
    out = inject(victim, AttackSpec(ReplayEvent("r", 5), (40, 80)), h39, np.random.default_rng(0), {"r": recorded})
    np.testing.assert_allclose(out.z[40:80], recorded.z[5:45], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=3, max_value=400))
def test_split_reconstructs(n):
    tr = Trace(np.arange(n), np.zeros((n, 1)), np.arange(n, dtype=float)[:, None], np.zeros(n, bool))
    parts = split_chronological(tr)
    assert [len(p) for p in parts] == [b - a for a, b in split_bounds(n)]
    back = concatenate(parts)
    assert np.array_equal(back.timestamps, tr.timestamps)
    assert np.array_equal(back.z, tr.z)
    bounds = split_bounds(n)
    assert bounds[0][0] == 0 and bounds[-1][1] == n
    assert all(bounds[i][1] == bounds[i + 1][0] for i in range(2))


def test_split_rejects_bad_fractions():
    with pytest.raises(ContractError):
        split_bounds(10, (0.5, 0.6, -0.1))
    with pytest.raises(ContractError):
        split_bounds(10, (0.5, 0.2, 0.2))


def test_trace_round_trip_is_bit_exact(tmp_path, case39, h39, noise39):
    tr = sim(case39, h39, noise39, seed=5)
    tr = inject(tr, AttackSpec(RandomGaussian(7, 0.5), (10, 30)), h39, np.random.default_rng(6))
    f, w = synthesize(len(tr), tr.sample_rate, [(10, 30)], default_profile(), np.random.default_rng(7))
    tr = tr.with_features(f, w)
    path = tmp_path / "run.trace.csv"
    write_trace(tr, path)
    assert feature_path(path).name == "run.features.csv"
    back = read_trace(path)
    assert back.z.tobytes() == tr.z.tobytes()
    assert back.states.tobytes() == tr.states.tobytes()
    assert np.array_equal(back.labels, tr.labels)
    assert back.features.tobytes() == tr.features.tobytes()
    assert np.array_equal(back.window_ids, tr.window_ids)
    assert back.attack_meta.to_dict() == tr.attack_meta.to_dict()
    write_trace(back, tmp_path / "again.trace.csv")
    assert (tmp_path / "again.trace.csv").read_bytes() == path.read_bytes()


def test_trace_schema_checked(tmp_path):
    p = tmp_path / "x.trace.csv"
    p.write_text("# schema=other/9\nt,label\n")
    with pytest.raises(ContractError, match="schema"):
        read_trace(p)


def test_trace_length_contract():
    with pytest.raises(ContractError):
        Trace(np.arange(3), np.zeros((3, 1)), np.zeros((2, 1)), np.zeros(3, bool))

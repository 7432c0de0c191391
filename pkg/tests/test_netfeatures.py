import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdilab.errors import ContractError
from fdilab.netfeatures import (
    CATEGORICAL,
    FEATURES,
    HI,
    LO,
    N_FEATURES,
    SHIFTED,
    TRAFFIC,
    ModeParams,
    TrafficProfile,
    default_profile,
    encode_normalize,
    synthesize,
    window_length,
)


def test_feature_table_shape():
    assert N_FEATURES == 41
    cats = [f[1] for f in FEATURES]
    assert cats.count("basic") == 9
    assert cats.count("content") == 13
    assert cats.count("traffic") == 19
    assert len(SHIFTED) == 6
    assert all(TRAFFIC[i] for i in SHIFTED)


def test_window_ids_at_ten_hz():
    assert window_length(10) == 20
    _, w = synthesize(100, 10, [], default_profile(), np.random.default_rng(0))
    np.testing.assert_array_equal(np.unique(w), np.arange(5))
    np.testing.assert_array_equal(np.bincount(w), [20] * 5)


def test_encode_endpoints_and_affine():
    np.testing.assert_array_equal(encode_normalize(LO), np.zeros(41))
    np.testing.assert_array_equal(encode_normalize(HI), np.ones(41))
    idx = next(i for i, f in enumerate(FEATURES) if f[2] == 0 and f[3] == 0.0 and f[4] == 10.0)
    raw = LO.copy()
    raw[idx] = 2.5
    assert encode_normalize(raw)[idx] == pytest.approx(0.25)


def test_encode_rejects_out_of_range_with_index():
    raw = LO.copy()
    raw[7] = HI[7] + 1
    with pytest.raises(ContractError, match="feature 7"):
        encode_normalize(raw)
    raw = LO.copy()
    cat = int(np.flatnonzero(CATEGORICAL)[0])
    raw[cat] = 0.5
    with pytest.raises(ContractError, match=f"feature {cat}"):
        encode_normalize(raw)


def test_benign_means_match_profile():
    prof = default_profile()
    f, _ = synthesize(10_000, 10, [], prof, np.random.default_rng(11))
    # per-sample numeric features have 1e4 independent draws
    cols = np.flatnonzero(~TRAFFIC & ~CATEGORICAL)
    width = HI - LO
    expected = (prof.benign.mean - LO) / width
    se = prof.benign.std / width / np.sqrt(10_000)
    assert np.all(np.abs(f[:, cols].mean(axis=0) - expected[cols]) < 3 * se[cols] + 1e-12)
    # traffic features: 500 window draws
    tcols = np.flatnonzero(TRAFFIC)
    se_w = prof.benign.std / width / np.sqrt(500)
    assert np.all(np.abs(f[::20, tcols].mean(axis=0) - expected[tcols]) < 3 * se_w[tcols] + 1e-12)


def test_zero_variance_profile_is_constant():
    base = default_profile()
    weights = {}
    for i, w in base.benign.weights.items():
        one = np.zeros_like(w)
        one[0] = 1.0
        weights[i] = one
    flat = ModeParams(base.benign.mean, np.zeros(41), weights)
    f, _ = synthesize(200, 10, [], TrafficProfile(flat, flat), np.random.default_rng(0))
    assert (f == f[0]).all()


def test_profile_validation():
    base = default_profile().benign
    with pytest.raises(ContractError):
        ModeParams(base.mean, -np.ones(41), base.weights)
    with pytest.raises(ContractError):
        ModeParams(base.mean, base.std, {})


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 400), st.integers(0, 2**31 - 1), st.integers(0, 399), st.integers(0, 60))
def test_window_constancy(n, seed, t0, span):
    t0 = min(t0, n)
    t1 = min(n, t0 + span)
    f, w = synthesize(n, 10, [(t0, t1)], default_profile(), np.random.default_rng(seed))
    assert f.shape == (n, 41)
    assert ((f >= 0) & (f <= 1)).all()
    for wid in np.unique(w):
        block = f[w == wid][:, TRAFFIC]
        assert (block == block[0]).all()


def test_distribution_separation():
    prof = default_profile()
    n = 10_000
    half = n // 2
    f, w = synthesize(n, 10, [(half, n)], prof, np.random.default_rng(21))
    labels = np.arange(n) >= half
    for idx in SHIFTED:
        x = f[:, idx]
        thr = (prof.benign.mean[idx] + prof.attack.mean[idx]) / 2
        pred = x > (thr - LO[idx]) / (HI[idx] - LO[idx])
        bal = 0.5 * (pred[labels].mean() + (~pred[~labels]).mean())
        assert bal > 0.5


def test_synthesis_is_seeded():
    a = synthesize(300, 10, [(40, 80)], default_profile(), np.random.default_rng(5))
    b = synthesize(300, 10, [(40, 80)], default_profile(), np.random.default_rng(5))
    assert a[0].tobytes() == b[0].tobytes()


def test_attack_window_validation():
    with pytest.raises(ContractError):
        synthesize(50, 10, [(40, 60)], default_profile(), np.random.default_rng(0))

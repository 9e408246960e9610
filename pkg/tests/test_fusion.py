import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fuselab import data, fusion, nn
from fuselab.errors import ShapeError

from reference_tables import REFERENCE_ALPHA, REFERENCE_BETA, REFERENCE_CONFUSION


def prediction_vectors(n=5):
    return st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n).map(
        lambda v: (np.array(v) / np.sum(v)).astype(np.float64)
    )


# --- build_model ------------------------------------------------------------------


def test_early_first_conv_spans_both_modalities():
    m = fusion.build_model("early", 16, 16, 2, 13, 5, seed=0, conv_channels=(4, 8, 8), dense_units=16)
    first = m.nets[0].layers[0]
    assert isinstance(first, nn.Conv) and first.cin == 15


def test_joint_final_dense_outputs_n_classes():
    m = fusion.build_model("joint", 16, 16, 2, 3, 5, seed=0, conv_channels=(4, 8, 8), dense_units=16)
    head_dense = [l for l in m.nets[0].head if isinstance(l, nn.Dense)]
    assert head_dense[-1].nout == 5
    assert isinstance(m.nets[0].head[-1], nn.Softmax)


def test_build_model_seed_determinism():
    a = fusion.build_model("late-mean", 16, 16, 2, 3, 5, seed=9, conv_channels=(4, 8, 8), dense_units=16)
    b = fusion.build_model("late-mean", 16, 16, 2, 3, 5, seed=9, conv_channels=(4, 8, 8), dense_units=16)
    for na, nb in zip(a.nets, b.nets):
        for p, q in zip(nn.parameters(na), nn.parameters(nb)):
            assert np.array_equal(p, q)


def test_build_model_rejects_tiny_chips():
    with pytest.raises(ShapeError):
        fusion.build_model("early", 4, 4, 2, 3, 5, seed=0)


def test_build_model_rejects_unknown_paradigm():
    with pytest.raises(ValueError, match="single-a"):
        fusion.build_model("mid", 16, 16, 2, 3, 5, seed=0)


def test_parameter_count_ordering():
    kw = dict(seed=0, conv_channels=(4, 8, 8), dense_units=16)
    singles = [fusion.build_model(p, 16, 16, 2, 13, 5, **kw) for p in ("single-a", "single-b")]
    early = fusion.build_model("early", 16, 16, 2, 13, 5, **kw)
    joint = fusion.build_model("joint", 16, 16, 2, 13, 5, **kw)
    late = fusion.build_model("late-mean", 16, 16, 2, 13, 5, **kw)
    early_n = nn.n_params(early.nets[0])
    for s in singles:
        assert early_n > nn.n_params(s.nets[0])
    late_total = sum(nn.n_params(net) for net in late.nets)
    assert nn.n_params(joint.nets[0]) < late_total


def test_late_holds_two_independent_networks():
    m = fusion.build_model("late-weighted", 16, 16, 2, 3, 5, seed=1, conv_channels=(4, 8, 8), dense_units=16)
    assert len(m.nets) == 2
    assert m.nets[0] is not m.nets[1]


# --- aggregation -----------------------------------------------------------------


def test_mean_idempotent_on_equal_predictions():
    p = np.array([0.3, 0.3, 0.2, 0.1, 0.1])
    assert np.allclose(fusion.late_aggregate_mean(p, p), p)


def test_mean_analytic_case():
    a = np.array([1.0, 0, 0, 0, 0])
    b = np.array([0, 1.0, 0, 0, 0])
    assert np.allclose(fusion.late_aggregate_mean(a, b), [0.5, 0.5, 0, 0, 0])


def test_mean_length_mismatch():
    with pytest.raises(ShapeError):
        fusion.late_aggregate_mean(np.full(5, 0.2), np.full(4, 0.25))


def test_mean_argmax_equals_sum_argmax_1000_pairs():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        a = rng.dirichlet(np.ones(5))
        b = rng.dirichlet(np.ones(5))
        assert np.argmax(fusion.late_aggregate_mean(a, b)) == np.argmax(a + b)


@given(pa=prediction_vectors(), pb=prediction_vectors())
@settings(max_examples=100, deadline=None)
def test_mean_argmax_equals_sum_argmax_property(pa, pb):
    assert np.argmax(fusion.late_aggregate_mean(pa, pb)) == np.argmax(pa + pb)
    out = fusion.late_aggregate_mean(pa, pb)
    assert abs(out.sum() - 1.0) < 1e-9


def test_weighted_identity_weights_returns_pred_a():
    a = np.array([0.1, 0.6, 0.1, 0.1, 0.1])
    b = np.array([0.7, 0.1, 0.05, 0.05, 0.1])
    out = fusion.late_aggregate_weighted(a, b, np.ones(5), np.zeros(5))
    assert np.array_equal(out, a)


def test_weighted_reference_case():
    alpha = np.array([0, 1, 1, 1, 0.0])
    beta = np.array([1, 0, 0, 0, 1.0])
    pred_a = np.array([0.1, 0.6, 0.1, 0.1, 0.1])
    pred_b = np.array([0.7, 0.1, 0.05, 0.05, 0.1])
    out = fusion.late_aggregate_weighted(pred_a, pred_b, alpha, beta)
    assert np.allclose(out, [0.7, 0.6, 0.1, 0.1, 0.1])
    assert np.argmax(out) == 0


def test_weighted_equal_predictions_unchanged():
    p = np.array([0.25, 0.25, 0.2, 0.2, 0.1])
    out = fusion.late_aggregate_weighted(p, p, np.array([0, 1, 0, 1, 1.0]), np.array([1, 0, 1, 0, 0.0]))
    assert np.allclose(out, p)


def test_weighted_rejects_bad_weights():
    p = np.full(5, 0.2)
    with pytest.raises(ValueError):
        fusion.late_aggregate_weighted(p, p, np.ones(5), np.ones(5))
    with pytest.raises(ValueError):
        fusion.late_aggregate_weighted(p, p, np.full(5, 0.5), np.full(5, 0.5))


@given(pa=prediction_vectors(), pb=prediction_vectors(), mask=st.lists(st.booleans(), min_size=5, max_size=5))
@settings(max_examples=100, deadline=None)
def test_weighted_binary_equals_componentwise_select(pa, pb, mask):
    alpha = np.array(mask, dtype=float)
    beta = 1.0 - alpha
    out = fusion.late_aggregate_weighted(pa, pb, alpha, beta)
    select = np.where(alpha == 1.0, pa, pb)  # component-wise selection oracle
    assert np.array_equal(out, select)


# --- derive_weights ----------------------------------------------------------------


def test_derive_weights_reproduces_reference_values():
    recall_a = np.diag(REFERENCE_CONFUSION["single-a"])
    recall_b = np.diag(REFERENCE_CONFUSION["single-b"])
    alpha, beta = fusion.derive_weights(recall_a, recall_b)
    assert np.array_equal(alpha, REFERENCE_ALPHA)
    assert np.array_equal(beta, REFERENCE_BETA)


def test_derive_weights_ties_go_to_b():
    alpha, beta = fusion.derive_weights(np.full(5, 0.7), np.full(5, 0.7))
    assert np.array_equal(alpha, np.zeros(5))
    assert np.array_equal(beta, np.ones(5))


def test_derive_weights_extremes():
    alpha, beta = fusion.derive_weights(np.ones(5), np.zeros(5))
    assert np.array_equal(alpha, np.ones(5))
    assert np.array_equal(beta, np.zeros(5))


def test_derive_weights_rejects_out_of_range():
    with pytest.raises(ValueError):
        fusion.derive_weights(np.array([1.1, 0, 0]), np.zeros(3))


@given(
    ra=st.lists(st.floats(0, 1, allow_nan=False), min_size=5, max_size=5),
    rb=st.lists(st.floats(0, 1, allow_nan=False), min_size=5, max_size=5),
)
@settings(max_examples=100, deadline=None)
def test_derive_weights_always_binary_complementary(ra, rb):
    alpha, beta = fusion.derive_weights(np.array(ra), np.array(rb))
    assert np.all((alpha == 0) | (alpha == 1))
    assert np.all(alpha + beta == 1.0)


# --- predict routing -----------------------------------------------------------------


def _tiny_models(seed=0):
    kw = dict(seed=seed, conv_channels=(2, 3, 4), dense_units=8)
    return {p: fusion.build_model(p, 8, 8, 2, 3, 5, **kw) for p in fusion.PARADIGMS}


def test_predict_shapes_and_normalization(rng):
    sample = data.SamplePair(
        "s", 0.0, 0.0, 1,
        rng.normal(size=(8, 8, 2)).astype(np.float32),
        rng.normal(size=(8, 8, 3)).astype(np.float32),
        data.one_hot(1, 5),
    )
    for paradigm, model in _tiny_models().items():
        if paradigm == "late-weighted":
            model.set_fusion_weights(np.array([0, 1, 1, 1, 0.0]), np.array([1, 0, 0, 0, 1.0]))
        out = fusion.predict(model, sample)
        assert out.shape == (5,)
        if paradigm != "late-weighted":  # weighted output is deliberately not renormalized
            assert abs(out.sum() - 1.0) < 1e-5


def test_predict_rejects_wrong_chip_shape(rng):
    model = _tiny_models()["early"]
    sample = data.SamplePair(
        "s", 0.0, 0.0, 0,
        rng.normal(size=(8, 8, 3)).astype(np.float32),  # wrong channel count for A
        rng.normal(size=(8, 8, 3)).astype(np.float32),
        data.one_hot(0, 5),
    )
    with pytest.raises(ShapeError):
        fusion.predict(model, sample)


def test_late_weighted_predict_requires_weights(rng):
    model = _tiny_models()["late-weighted"]
    chips_a = rng.normal(size=(1, 8, 8, 2)).astype(np.float32)
    chips_b = rng.normal(size=(1, 8, 8, 3)).astype(np.float32)
    with pytest.raises(ValueError):
        fusion.predict_batch(model, chips_a, chips_b)


def test_late_mean_of_identical_nets_returns_their_output(rng):
    model = fusion.build_model("late-mean", 8, 8, 2, 2, 5, seed=3, conv_channels=(2, 3, 4), dense_units=8)
    model.nets[1] = model.nets[0]  # same network on both modalities
    chip = rng.normal(size=(1, 8, 8, 2)).astype(np.float32)
    single = model.nets[0].forward_batch([chip])
    out = fusion.predict_batch(model, chip, chip)
    assert np.allclose(out, single, atol=1e-7)


def test_late_weighted_predict_is_componentwise_select(rng):
    model = _tiny_models(seed=5)["late-weighted"]
    alpha = np.array([0, 1, 1, 1, 0.0])
    model.set_fusion_weights(alpha, 1.0 - alpha)
    chips_a = rng.normal(size=(3, 8, 8, 2)).astype(np.float32)
    chips_b = rng.normal(size=(3, 8, 8, 3)).astype(np.float32)
    pred_a = model.nets[0].forward_batch([chips_a])
    pred_b = model.nets[1].forward_batch([chips_b])
    out = fusion.predict_batch(model, chips_a, chips_b)
    assert np.array_equal(out, np.where(alpha == 1.0, pred_a, pred_b))


# --- model bundle round trip ------------------------------------------------------------


def test_model_save_load_round_trip(tmp_path, rng):
    model = _tiny_models(seed=8)["late-weighted"]
    model.set_fusion_weights(np.array([1, 0, 0, 1, 0.0]), np.array([0, 1, 1, 0, 1.0]))
    chips_a = rng.normal(size=(2, 8, 8, 2)).astype(np.float32)
    chips_b = rng.normal(size=(2, 8, 8, 3)).astype(np.float32)
    before = fusion.predict_batch(model, chips_a, chips_b)
    fusion.save_model(tmp_path, model)
    loaded = fusion.load_model(tmp_path)
    assert loaded.paradigm == "late-weighted"
    assert np.array_equal(loaded.alpha, model.alpha)
    after = fusion.predict_batch(loaded, chips_a, chips_b)
    assert np.array_equal(before, after)


def test_joint_model_round_trip(tmp_path, rng):
    model = _tiny_models(seed=2)["joint"]
    chips_a = rng.normal(size=(2, 8, 8, 2)).astype(np.float32)
    chips_b = rng.normal(size=(2, 8, 8, 3)).astype(np.float32)
    before = fusion.predict_batch(model, chips_a, chips_b)
    fusion.save_model(tmp_path, model)
    after = fusion.predict_batch(fusion.load_model(tmp_path), chips_a, chips_b)
    assert np.array_equal(before, after)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from tinyadv import attacks as A
from tinyadv import metrics, models
from tinyadv.errors import InvalidArgument, UndefinedSimilarity
from tinyadv.attacks.base import failed
from tinyadv.oracles import GradientOracle

vectors = hnp.arrays(np.float64, st.integers(1, 30), elements=st.floats(-10, 10))


def test_distortion_examples():
    assert metrics.distortion([0, 0, 1], [0, 1, 1], "l0") == 1
    assert metrics.distortion([0, 0], [3, 4], "l2") == 5
    assert metrics.distortion([0, 0], [3, -4], "l1") == 7
    assert metrics.distortion([0, 0], [3, -4], "linf") == 4
    with pytest.raises(InvalidArgument):
        metrics.distortion([0, 0], [0, 0, 0], "l2")
    with pytest.raises(InvalidArgument):
        metrics.distortion([0], [0], "l3")


def test_l0_threshold():
    assert metrics.distortion([0.0, 0.0], [1e-10, 2e-9], "l0") == 1


@settings(max_examples=100, deadline=None)
@given(vectors, st.data())
def test_norm_properties(a, data):
    b = data.draw(hnp.arrays(np.float64, a.shape, elements=st.floats(-10, 10)))
    d = metrics.distortions(a, b)
    assert all(v == 0 for v in metrics.distortions(a, a).values())
    for n in ("l1", "l2", "linf"):
        assert metrics.distortion(b, a, n) == pytest.approx(d[n], rel=1e-12, abs=1e-12)
    assert d["linf"] <= d["l2"] * (1 + 1e-12) + 1e-12
    assert d["l2"] <= d["l1"] * (1 + 1e-12) + 1e-12


class _Fixed:
    """Oracle that classifies by the first feature being > 0.5."""

    def predict(self, x):
        x = np.asarray(x)
        return (x.reshape(len(x), -1)[:, 0] > 0.5).astype(int)


def _res(adv, label):
    adv = np.asarray(adv, np.float32)
    return A.AdversarialResult(original=adv, adversarial=adv, original_label=label, predicted_label=label,
                               success=False, queries=0, iterations=0,
                               distortions=metrics.distortions(adv, adv), attack="test")


def test_adversarial_accuracy_counting():
    o = _Fixed()
    # 3 of 4 fooled
    rs = [_res([0.9], 0), _res([0.1], 1), _res([0.7], 0), _res([0.8], 1)]
    assert metrics.adversarial_accuracy(o, rs) == 0.25
    assert metrics.adversarial_accuracy(o, rs[:3]) == 0.0
    with pytest.raises(InvalidArgument):
        metrics.adversarial_accuracy(o, [])


def test_failed_attacks_give_clean_accuracy(small_model, small_splits):
    test = small_splits["test"]
    rs = [failed(small_model.predict, x, int(y), "pgd") for x, y in zip(test.images, test.labels)]
    assert metrics.adversarial_accuracy(small_model, rs) == models.evaluate_accuracy(small_model, test)


def test_recomputed_accuracy_matches_attack_time(small_model, small_splits):
    g = GradientOracle(small_model)
    test = small_splits["test"]
    rs = [A.fgsm(g, x, int(y), eps=0.05) for x, y in zip(test.images[:20], test.labels[:20])]
    at_attack = np.mean([r.predicted_label == r.original_label for r in rs])
    assert metrics.adversarial_accuracy(small_model, rs) == at_attack


def test_distortion_stats():
    rs = [_res([0.9], 0), _res([0.1], 1)]
    rs[0].success = True
    rs[0].distortions = {"l0": 1.0, "l1": 2.0, "l2": 2.0, "linf": 2.0}
    s = metrics.DistortionStats.from_results(rs)
    assert s.n == 2 and s.n_success == 1
    assert s.mean_all["l1"] == 1.0 and s.mean_success["l1"] == 2.0
    empty = metrics.DistortionStats.from_results([rs[1]])
    assert empty.mean_success["l2"] is None


def test_zero_density_trivial_functions():
    xs = [np.random.default_rng(i).random(12) for i in range(3)]
    assert metrics.gradient_zero_density(lambda p: np.zeros(len(p)), xs) == 1.0
    assert metrics.gradient_zero_density(lambda p: p.sum(axis=1), xs) == 0.0
    half = metrics.gradient_zero_density(lambda p: p[:, :6].sum(axis=1), xs)
    assert half == 0.5


def test_zero_density_of_quantized_model_in_range(small_model, small_splits):
    from tinyadv import quant
    qm = quant.quantize_model(small_model, small_splits["calibration"].images, 8)
    x = small_splits["test"].images[:2]
    d = metrics.gradient_zero_density(metrics.loss_function(qm, 0), x)
    assert 0.0 <= d <= 1.0


def test_cosine_self_similarity_is_one(small_model, small_splits):
    g = GradientOracle(small_model)
    r = metrics.gradient_cosine_similarity(g, g, small_splits["test"].images[:10], small_splits["test"].labels[:10])
    assert abs(r.mean - 1.0) <= 1e-6 and r.n_used == 10


def test_cosine_orthogonal_gradients():
    a = GradientOracle(models.linear_classifier(np.array([[1.0, -1.0], [0.0, 0.0]]), np.zeros(2)))
    b = GradientOracle(models.linear_classifier(np.array([[0.0, 0.0], [1.0, -1.0]]), np.zeros(2)))
    x = np.random.default_rng(0).random((5, 2)).astype(np.float32)
    assert metrics.gradient_cosine_similarity(a, b, x, np.zeros(5, int)).mean == pytest.approx(0.0, abs=1e-7)


def test_cosine_negated_binary_model():
    model = models.build_toy_resnet((8, 8, 3), 2, width=4, seed=3)
    neg = model.copy()
    head = neg.layers[-1]
    head.params = {k: -v for k, v in head.params.items()}
    x = np.random.default_rng(1).random((6, 8, 8, 3)).astype(np.float32)
    y = np.array([0, 1, 0, 1, 1, 0])
    r = metrics.gradient_cosine_similarity(GradientOracle(model), GradientOracle(neg), x, y)
    assert r.mean == pytest.approx(-1.0, abs=1e-5)


def test_cosine_all_zero_is_undefined():
    g = GradientOracle(models.linear_classifier(np.zeros((2, 2)), np.zeros(2)))
    with pytest.raises(UndefinedSimilarity):
        metrics.gradient_cosine_similarity(g, g, np.zeros((3, 2), np.float32), np.zeros(3, int))


def test_cosine_skips_and_counts_zero_gradients():
    a = GradientOracle(models.linear_classifier(np.array([[1.0, -1.0], [0.0, 0.0]]), np.zeros(2)))
    z = GradientOracle(models.linear_classifier(np.zeros((2, 2)), np.zeros(2)))
    with pytest.raises(UndefinedSimilarity):
        metrics.gradient_cosine_similarity(a, z, np.ones((2, 2), np.float32), np.zeros(2, int))


def test_boundary_distance_linear_oracle():
    rng = np.random.default_rng(4)
    xs = []
    # one hyperplane, every point placed at distance 0.6 from it
    w = rng.normal(size=5)
    w /= np.linalg.norm(w)
    b = -float(w @ np.full(5, 0.5))
    g = GradientOracle(models.linear_classifier(np.stack([np.zeros(5), w], 1), np.array([0.0, b])))
    for _ in range(10):
        u = rng.normal(size=5)
        u -= (u @ w) * w
        u *= 0.05 / np.linalg.norm(u)
        xs.append(np.full(5, 0.5) + u - 0.6 * w)
    bd = metrics.boundary_distance(g, np.array(xs), np.zeros(10, int), A.DeepFoolConfig(clip=None))
    assert bd.n_used == 10 and bd.n_skipped == 0
    assert abs(bd.mean - 0.6) <= 0.05 * 0.6


def test_boundary_distance_all_misclassified():
    g = GradientOracle(models.linear_classifier(np.array([[0.0, 1.0]]), np.array([0.0, 1.0])))
    bd = metrics.boundary_distance(g, np.zeros((4, 1), np.float32), np.zeros(4, int))
    assert not bd.defined and bd.n_skipped == 4 and bd.n_used == 0

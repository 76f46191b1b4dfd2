import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tinyadv import attacks as A
from tinyadv import autodiff as ad, metrics, models
from tinyadv.errors import BoundaryNotBracketed, GradientDegenerate, InitFailed, InvalidArgument
from tinyadv.oracles import DecisionOracle, GradientOracle, ScoreOracle


def linear(w, b):
    return models.linear_classifier(np.asarray(w, np.float64), np.asarray(b, np.float64))


def image_linear(weights, bias):
    """Flatten + dense over an (H, W, C) input."""
    weights = np.asarray(weights, np.float32)
    h, w, c, k = weights.shape
    layers = [models.Layer("flat", "flatten", (-1,)),
              models.Layer("head", "dense", (0,), {"activation": None},
                           {"kernel": weights.reshape(h * w * c, k), "bias": np.asarray(bias, np.float32)})]
    return models.ModelGraph((h, w, c), k, layers)


FAST = {
    "fgsm": lambda g, s, d, x, y, i: A.fgsm(g, x, y, eps=0.05),
    "deepfool": lambda g, s, d, x, y, i: A.deepfool(g, x, y),
    "jsma": lambda g, s, d, x, y, i: A.jsma(g, x, y, A.JSMAConfig(gamma=0.2)),
    "cw-l2": lambda g, s, d, x, y, i: A.cw(g, x, y, "l2", A.CWConfig(bs_steps=3, lr=0.05)),
    "cw-linf": lambda g, s, d, x, y, i: A.cw(g, x, y, "linf", A.CWConfig(lr=0.05, linf_max_rounds=4)),
    "pgd": lambda g, s, d, x, y, i: A.pgd(g, x, y, A.PGDConfig(eps=0.05, step=0.01, max_iter=5, restarts=3), i),
    "ead": lambda g, s, d, x, y, i: A.ead(g, x, y, A.EADConfig(bs_steps=3, lr=0.05)),
    "autoattack": lambda g, s, d, x, y, i: A.autoattack(g, s, x, y, A.AutoAttackConfig(eps=0.05, apgd_iter=10,
                                                                                      square_iter=30), i),
    "zoo": lambda g, s, d, x, y, i: A.zoo(s, x, y, A.ZOOConfig(max_iter=3, bs_steps=2, batch_coords=32), i),
    "square-linf": lambda g, s, d, x, y, i: A.square_attack(s, x, y, A.SquareConfig(eps=0.05, max_iter=60), i),
    "square-l2": lambda g, s, d, x, y, i: A.square_attack(s, x, y, A.SquareConfig.l2(max_iter=60), i),
    "boundary": lambda g, s, d, x, y, i: A.boundary_attack(d, x, y, A.BoundaryConfig(max_iter=10), i),
    "geoda": lambda g, s, d, x, y, i: A.geoda(d, x, y, A.GeoDAConfig(n_iter=2, probes=40, dct_dim=20), i),
}


def test_every_attack_has_a_contract_case():
    assert set(FAST) == set(A.ALL_ATTACKS)


@pytest.mark.parametrize("name", sorted(FAST))
def test_result_contract(name, small_model, small_splits):
    g = GradientOracle(small_model)
    score = ScoreOracle(g.probs, g.input_shape)
    dec = DecisionOracle(g.predict, g.input_shape)
    test = small_splits["test"]
    for i in range(2):
        x, y = test.images[i], int(test.labels[i])
        grads_before = g.grad_calls
        r = FAST[name](g, score, dec, x, y, i)
        assert r.attack == name
        assert r.success == (r.predicted_label != r.original_label)
        assert r.predicted_label == int(small_model.predict(r.adversarial))
        assert r.adversarial.dtype == np.float32 and r.adversarial.shape == x.shape
        assert 0.0 <= r.adversarial.min() and r.adversarial.max() <= 1.0
        assert r.distortions == metrics.distortions(r.original, r.adversarial)
        d = r.distortions
        assert d["linf"] <= d["l2"] + 1e-12 and d["l2"] <= d["l1"] + 1e-9
        if A.tier(name) != "white":
            assert g.grad_calls == grads_before, "score/decision attacks must not touch gradients"


def test_tiers():
    assert A.tier("pgd") == "white" and A.tier("zoo") == "gray" and A.tier("geoda") == "black"
    with pytest.raises(KeyError):
        A.tier("nope")


# -- FGSM / PGD ---------------------------------------------------------------

def test_fgsm_closed_form_on_linear_model():
    g = GradientOracle(linear([[1.0, -1.0], [-2.0, 2.0], [0.0, 0.0]], [0.0, 0.0]))
    x = np.array([0.5, 0.5, 0.5], np.float32)
    # label 0: loss gradient sign is -(w0 - w1) = (-1, +1, 0) up to sign of softmax weight
    r = A.fgsm(g, x, 0, eps=0.1)
    np.testing.assert_allclose(r.adversarial, [0.4, 0.6, 0.5], atol=1e-7)
    r0 = A.fgsm(g, x, 1, eps=0.0)
    np.testing.assert_array_equal(r0.adversarial, x)


def test_fgsm_equals_one_step_pgd(small_model, small_splits):
    g = GradientOracle(small_model)
    for x, y in zip(small_splits["test"].images[:4], small_splits["test"].labels[:4]):
        a = A.fgsm(g, x, int(y), eps=0.03).adversarial
        b = A.pgd(g, x, int(y), A.PGDConfig(eps=0.03, step=0.03, max_iter=1, restarts=1, random_init=False)).adversarial
        np.testing.assert_array_equal(a, b)


@settings(max_examples=20, deadline=None)
@given(eps=st.floats(1e-4, 0.3), seed=st.integers(0, 1000), frac=st.floats(0.05, 1.0))
def test_pgd_linf_bound(eps, seed, frac):
    rng = np.random.default_rng(seed)
    g = GradientOracle(linear(rng.normal(size=(6, 3)), rng.normal(size=3)))
    x = rng.random(6).astype(np.float32)
    r = A.pgd(g, x, int(g.predict(x)), A.PGDConfig(eps=eps, step=eps * frac, max_iter=4, restarts=3, seed=seed))
    assert r.distortions["linf"] <= eps + 1e-7


@pytest.mark.parametrize("eps", [0.02, 0.05, 0.09, 0.11, 0.15, 0.3])
def test_pgd_matches_corner_and_grid_oracle(eps):
    # 2-pixel model: class 1 iff 2*x0 + x1 > 1.27; clean point (0.4, 0.3) is class 0
    w = np.array([[0.0, 2.0], [0.0, 1.0]])
    b = np.array([0.0, -1.27])
    g = GradientOracle(linear(w, b))
    x = np.array([0.4, 0.3], np.float32)
    grid = np.linspace(-eps, eps, 41)
    cands = [x + np.array(c) for c in itertools.product(grid, grid)]
    cands = np.clip(np.array(cands), 0, 1)
    brute = bool((cands @ w[:, 1] + b[1] > 0).any())
    r = A.pgd(g, x, 0, A.PGDConfig(eps=eps, step=eps / 4, max_iter=10, restarts=2))
    assert r.success == brute


def test_pgd_sweep_is_monotone(small_model, small_splits):
    test = small_splits["test"]
    g = GradientOracle(small_model)
    accs = []
    for eps in (0.0002, 0.0004, 0.0006, 0.0008, 0.02, 0.04, 0.08):
        cfg = A.PGDConfig(eps=eps, step=eps / 10, max_iter=10, restarts=2)
        res = [A.pgd(g, x, int(y), cfg, i) for i, (x, y) in enumerate(zip(test.images[:20], test.labels[:20]))]
        accs.append(metrics.adversarial_accuracy(small_model, res))
    assert all(a >= b for a, b in zip(accs, accs[1:]))
    assert accs[-1] < accs[0]


# -- DeepFool -----------------------------------------------------------------

def test_deepfool_analytic_distance():
    g = GradientOracle(linear([[0.0, 3.0], [0.0, 4.0]], [0.0, 0.0]))
    r = A.deepfool(g, np.array([1.0, 0.0], np.float32), 1, A.DeepFoolConfig(clip=None))
    assert r.success
    assert 0.6 <= r.distortions["l2"] <= 0.6 * 1.008 + 1e-7


def test_deepfool_misclassified_input_is_untouched():
    g = GradientOracle(linear([[0.0, 3.0], [0.0, 4.0]], [0.0, 0.0]))
    x = np.array([1.0, 0.0], np.float32)
    r = A.deepfool(g, x, 0)
    assert r.iterations == 0 and r.distortions["l2"] == 0.0


def test_deepfool_degenerate_gradient():
    g = GradientOracle(linear(np.zeros((2, 2)), [1.0, 0.0]))
    with pytest.raises(GradientDegenerate):
        A.deepfool(g, np.array([0.5, 0.5], np.float32), 0)


# -- JSMA ---------------------------------------------------------------------

def test_saliency_branches():
    assert A.saliency_map(0.5, -0.2) == pytest.approx(0.1)
    assert A.saliency_map(-0.1, -0.2) == 0.0
    assert A.saliency_map(0.3, 0.2) == 0.0


def test_jsma_respects_feature_budget(small_model, small_splits):
    g = GradientOracle(small_model)
    x, y = small_splits["test"].images[0], int(small_splits["test"].labels[0])
    r = A.jsma(g, x, y, A.JSMAConfig(gamma=0.05))
    assert r.distortions["l0"] <= int(0.05 * x.size)


# -- C&W / EAD ----------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
def test_tanh_space_stays_in_box(w):
    out = A.from_tanh_space(np.array(w))
    assert (out >= 0).all() and (out <= 1).all()


def test_tanh_origin_is_half():
    assert A.from_tanh_space(np.zeros(3)).tolist() == [0.5, 0.5, 0.5]
    x = np.array([0.1, 0.5, 0.9])
    np.testing.assert_allclose(A.from_tanh_space(A.to_tanh_space(x)), x, atol=1e-12)


class _NanOracle:
    num_classes = 2
    input_shape = (2,)

    def predict(self, x):
        return 0

    def logits(self, x):
        return np.array([1.0, 0.0], np.float32)

    def logits_vjp(self, x, g):
        return self.logits(x), np.full(2, np.nan, np.float32)


@pytest.mark.parametrize("norm", ["l2", "linf"])
def test_cw_divergence_gives_failed_record(norm):
    r = A.cw(_NanOracle(), np.array([0.2, 0.3], np.float32), 0, norm)
    assert not r.success and "error" in r.extras


def test_cw_finds_small_l2_on_linear_model():
    g = GradientOracle(linear([[0.0, 1.0], [0.0, 1.0]], [0.0, -1.0]))
    x = np.array([0.4, 0.4], np.float32)  # distance to boundary 0.2 / sqrt(2)
    r = A.cw(g, x, 0, "l2", A.CWConfig(max_iter=100, lr=0.05, initial_const=10.0))
    assert r.success and r.distortions["l2"] < 0.2


def test_ead_objective_reduces_to_cw():
    d = np.array([0.1, -0.2, 0.3])
    assert A.ead_objective(2.0, 0.5, d, 0.0) == A.cw_l2_objective(2.0, 0.5, d)


def test_soft_threshold():
    assert A.soft_threshold(0.5, 0.0, 0.2) == pytest.approx(0.3)
    assert A.soft_threshold(-0.5, 0.0, 0.2) == pytest.approx(-0.3)
    assert A.soft_threshold(0.1, 0.0, 0.2) == 0.0


def test_paper_defaults():
    assert (A.DeepFoolConfig().max_iter, A.DeepFoolConfig().overshoot) == (100, 0.008)
    assert (A.JSMAConfig().theta, A.JSMAConfig().gamma) == (0.08, 1.0)
    c = A.CWConfig()
    assert (c.max_iter, c.bs_steps, c.initial_const, c.lr) == (10, 10, 0.01, 0.01)
    e = A.EADConfig()
    assert (e.max_iter, e.bs_steps, e.initial_const) == (10, 10, 0.01)
    assert A.PGDConfig().restarts == 20 and A.FGSMConfig().eps == 0.008
    assert A.AutoAttackConfig().eps == 0.004
    s = A.SquareConfig()
    assert (s.eps, s.max_iter, s.init_fraction) == (0.015, 1000, 0.05)
    b = A.BoundaryConfig()
    assert (b.eps, b.delta, b.max_iter) == (1.0, 0.1, 500)
    gd = A.GeoDAConfig()
    assert (gd.bs_tol, gd.dct_dim) == (0.0001, 75)
    assert A.ZOOConfig().initial_const == 0.01


@pytest.mark.parametrize("make", [
    lambda: A.PGDConfig(eps=0.01, step=0.02), lambda: A.DeepFoolConfig(max_iter=0),
    lambda: A.JSMAConfig(gamma=0.0), lambda: A.JSMAConfig(theta=0.0), lambda: A.CWConfig(clip=None),
    lambda: A.EADConfig(beta=-1), lambda: A.ZOOConfig(h=0), lambda: A.SquareConfig(init_fraction=0),
    lambda: A.BoundaryConfig(init_size=0), lambda: A.GeoDAConfig(bs_tol=0), lambda: A.AutoAttackConfig(eps=0),
])
def test_config_validation(make):
    with pytest.raises(InvalidArgument):
        make()


# -- APGD / AutoAttack --------------------------------------------------------

def crafted_losses():
    L = list(range(23))                                           # 0..22 rising
    L += [21.5 if k % 2 else 21.0 for k in range(23, 42)]         # oscillating
    L += [100.0 + k for k in range(42, 58)]                       # rising, new best
    L += [50.0] * 13                                              # 58..70 flat
    L += [60.0 + k for k in range(71, 81)]                        # rising below best
    L += [60.0 + k for k in range(81, 88)]                        # rising, still below best
    L += [200.0 + k for k in range(88, 94)]                       # rising, new best
    L += [10.0] * 6                                               # 94..99 flat
    return [float(v) for v in L]


def test_apgd_checkpoints():
    assert A.apgd_checkpoints(100) == [22, 41, 57, 70, 80, 87, 93, 99]


def test_apgd_step_size_rule_replay():
    losses = crafted_losses()
    assert len(losses) == 100
    trace = A.step_size_trace(losses, 100, 1.0)
    # expected step after each observation, derived by hand:
    # 22 keep (22/22 rises), 41 halve (9/19 < 75%), 57 keep, 70 halve (no rises),
    # 80 keep (10/10 rises, halved at 70), 87 halve (best unchanged since 80 and
    # no halving there), 93 keep, 99 halve (no rises)
    want = [1.0] * 41 + [0.5] * 29 + [0.25] * 17 + [0.125] * 12 + [0.0625]
    assert trace == want


def test_autoattack_short_circuits_on_apgd_ce():
    g = GradientOracle(linear([[0.0, 1.0], [0.0, 1.0], [0.0, 0.0]], [0.0, -0.9]))
    score = ScoreOracle(g.probs, g.input_shape)
    r = A.autoattack(g, score, np.array([0.4, 0.4, 0.5], np.float32), 0, A.AutoAttackConfig(eps=0.2))
    assert r.success and r.extras["member"] == "apgd-ce"
    assert score.queries == 0


def test_autoattack_falls_through_to_failure():
    w = np.zeros((3, 3, 1, 2), np.float32)
    w[..., 1] = 1.0
    g = GradientOracle(image_linear(w, [0.0, -9.0]))
    score = ScoreOracle(g.probs, g.input_shape)
    r = A.autoattack(g, score, np.full((3, 3, 1), 0.5, np.float32), 0,
                     A.AutoAttackConfig(eps=0.01, apgd_iter=5, square_iter=5))
    assert not r.success and score.queries == 5 + 1  # square iterations plus its final re-query


def test_square_rejects_non_images():
    score = ScoreOracle(lambda xb: np.tile([0.7, 0.3], (len(xb), 1)), (4,))
    with pytest.raises(InvalidArgument):
        A.square_attack(score, np.zeros(4, np.float32), 0)


# -- ZOO ----------------------------------------------------------------------

def test_coordinate_estimator_exact_on_quadratic():
    f = lambda pts: (pts ** 2).sum(axis=1)
    assert A.coordinate_gradient(f, np.array([1.0]), [0], 0.1)[0] == pytest.approx(2.0, abs=1e-12)
    est = A.coordinate_gradient(f, np.array([1.0, -3.0, 0.5]), [2, 0, 1], 0.37)
    np.testing.assert_allclose(est, [1.0, 2.0, -6.0], atol=1e-12)


def test_coordinate_estimator_matches_autodiff(small_model, small_splits):
    # float64 forward (float32 weights) so the difference quotient is not swamped by rounding
    for i in range(3):
        x = small_splits["test"].images[i].astype(np.float64)
        y = (int(small_splits["test"].labels[i]) + 1) % small_model.num_classes  # wrong label: non-vanishing gradient

        def loss(p):
            z = small_model.forward(p.reshape((-1,) + x.shape)).astype(np.float64)
            z = z - z.max(axis=1, keepdims=True)
            return np.log(np.exp(z).sum(axis=1)) - z[:, y]

        idx = np.arange(0, x.size, 3)
        est = A.coordinate_gradient(loss, x, idx, 1e-5)
        tape = ad.Tape()
        xv = tape.watch(x[None], "x")
        exact = ad.backward(tape, ad.cross_entropy(small_model.forward(xv), np.array([y])))["x"].ravel()[idx]
        assert np.abs(est - exact).max() < 1e-3


def test_zoo_query_audit(small_model, small_splits):
    score = ScoreOracle.from_model(small_model)
    x, y = small_splits["test"].images[1], int(small_splits["test"].labels[1])
    r = A.zoo(score, x, y, A.ZOOConfig(max_iter=4, bs_steps=2, batch_coords=16))
    assert r.queries == 2 * r.extras["probes"] + r.extras["evaluations"]
    assert score.queries == r.queries + 1  # plus the final re-query of the stored tensor


# -- Square -------------------------------------------------------------------

def test_square_schedule():
    assert A.square_fraction(0.8, 0, 1000) == 0.8
    assert A.square_fraction(0.8, 5, 10000) == 0.8
    assert A.square_fraction(0.8, 30, 10000) == 0.4
    assert A.square_fraction(0.8, 100, 1000) == 0.8 / 16
    assert A.square_fraction(0.8, 9999, 10000) == 0.8 / 512


def test_square_trace_monotone_and_linf_bounded(small_model, small_splits):
    score = ScoreOracle.from_model(small_model)
    for i in range(3):
        x, y = small_splits["test"].images[i], int(small_splits["test"].labels[i])
        r = A.square_attack(score, x, y, A.SquareConfig(eps=0.02, max_iter=150), i)
        t = r.extras["loss_trace"]
        assert all(b >= a for a, b in zip(t, t[1:]))
        assert r.distortions["linf"] <= 0.02 + 1e-7
        r2 = A.square_attack(score, x, y, A.SquareConfig.l2(eps=0.5, max_iter=150), i)
        t2 = r2.extras["loss_trace"]
        assert all(b >= a for a, b in zip(t2, t2[1:]))
        assert r2.distortions["l2"] <= 0.5 + 1e-5


def test_rejected_candidate_leaves_iterate_unchanged():
    # constant-probability oracle: no candidate ever raises the loss
    score = ScoreOracle(lambda xb: np.tile([0.7, 0.3], (len(xb), 1)), (4, 4, 1))
    x = np.full((4, 4, 1), 0.5, np.float32)
    r = A.square_attack(score, x, 0, A.SquareConfig(eps=0.1, max_iter=20))
    assert len(set(r.extras["loss_trace"])) == 1 and r.iterations == 19


def patch_model(eps, need):
    """Class 1 iff the 2x2 patch at rows/cols 2-3 rises by more than ``need * eps`` in total."""
    w = np.zeros((6, 6, 1, 2), np.float32)
    w[2:4, 2:4, 0, 1] = 1.0
    return image_linear(w, [0.0, -(2.0 + need * eps)])


def exhaustive_square_flip(model, x, eps, side):
    h, w, _ = x.shape
    for r in range(h - side + 1):
        for c in range(w - side + 1):
            for sgn in (-1.0, 1.0):
                d = np.zeros_like(x)
                d[r:r + side, c:c + side] = sgn * eps
                if model.predict(np.clip(x + d, 0, 1)) != 0:
                    return True
    return False


@pytest.mark.parametrize("need,flippable", [(3.5, True), (4.5, False)])
def test_square_agrees_with_exhaustive_placement(need, flippable):
    eps = 0.05
    model = patch_model(eps, need)
    x = np.full((6, 6, 1), 0.5, np.float32)
    assert model.predict(x) == 0
    assert exhaustive_square_flip(model, x, eps, 2) == flippable
    r = A.square_attack(ScoreOracle.from_model(model), x, 0, A.SquareConfig(eps=eps, max_iter=300, init_fraction=0.15))
    assert r.success == flippable


# -- Boundary / GeoDA -------------------------------------------------------------

def test_boundary_linear_2d_distance():
    model = linear([[0.0, 1.0], [0.0, 1.0]], [0.0, -1.0])
    x = np.array([0.3, 0.3], np.float32)
    r = A.boundary_attack(DecisionOracle.from_model(model), x, 0, A.BoundaryConfig(max_iter=500))
    analytic = 0.4 / np.sqrt(2)
    assert r.success and abs(r.distortions["l2"] - analytic) <= 0.1 * analytic
    d = r.extras["accepted_distances"]
    assert all(b <= a for a, b in zip(d, d[1:]))


def test_boundary_accepted_distances_monotone(small_model, small_splits):
    dec = DecisionOracle.from_model(small_model)
    x, y = small_splits["test"].images[2], int(small_splits["test"].labels[2])
    r = A.boundary_attack(dec, x, y, A.BoundaryConfig(max_iter=40), 2)
    d = r.extras["accepted_distances"]
    assert len(d) > 1 and all(b <= a for a, b in zip(d, d[1:]))
    assert r.success and r.distortions["l2"] <= d[0] + 1e-5


def test_init_failure():
    dec = DecisionOracle(lambda xb: np.zeros(len(xb), int), (3,))
    with pytest.raises(InitFailed):
        A.boundary_attack(dec, np.full(3, 0.5, np.float32), 0, A.BoundaryConfig(init_size=5))
    with pytest.raises(InitFailed):
        A.geoda(dec, np.full(3, 0.5, np.float32), 0, A.GeoDAConfig(init_size=5, dct_dim=2))


def test_bisection_contract():
    model = linear([[0.0, 1.0], [0.0, 1.0]], [0.0, -1.0])
    dec = DecisionOracle.from_model(model)
    adv, cln = A.boundary_bisect(dec, np.array([0.2, 0.2]), np.array([0.9, 0.9]), 0, 1e-4)
    assert np.linalg.norm(adv - cln) <= 1e-4
    assert dec(adv) == 1 and dec(cln) == 0
    with pytest.raises(BoundaryNotBracketed):
        A.boundary_bisect(dec, np.array([0.2, 0.2]), np.array([0.3, 0.3]), 0, 1e-4)


def test_geoda_normal_estimate_aligns_with_true_normal():
    shape = (8, 8, 1)
    basis = A.dct_basis(shape, 20)
    np.testing.assert_allclose(basis @ basis.T, np.eye(20), atol=1e-12)
    rng = np.random.default_rng(0)
    w = rng.normal(size=20) @ basis
    w /= np.linalg.norm(w)
    kern = np.zeros((64, 2), np.float32)
    kern[:, 1] = w
    x = np.full(shape, 0.5)
    model = image_linear(kern.reshape(8, 8, 1, 2), [0.0, -float(w @ x.ravel())])
    dec = DecisionOracle.from_model(model)
    normal = A.estimate_normal(dec, x, 0, basis, 1000, 1e-3, np.random.default_rng(1))
    assert float(normal.ravel() @ w) >= 0.9


def test_geoda_reaches_boundary_on_linear_model():
    model = linear([[0.0, 1.0], [0.0, 1.0]], [0.0, -1.0])
    r = A.geoda(DecisionOracle.from_model(model), np.array([0.3, 0.3], np.float32), 0,
                A.GeoDAConfig(dct_dim=2, probes=100))
    assert r.success and r.distortions["l2"] <= 0.4 / np.sqrt(2) * 1.1
    with pytest.raises(InvalidArgument):
        A.dct_basis((2,), 3)


# -- determinism --------------------------------------------------------------

def test_randomised_attacks_are_reproducible(small_model, small_splits):
    score = ScoreOracle.from_model(small_model)
    dec = DecisionOracle.from_model(small_model)
    g = GradientOracle(small_model)
    x, y = small_splits["test"].images[3], int(small_splits["test"].labels[3])
    for run in (lambda i: A.pgd(g, x, y, A.PGDConfig(eps=0.02, step=0.005, restarts=3), i),
                lambda i: A.square_attack(score, x, y, A.SquareConfig(eps=0.02, max_iter=40), i),
                lambda i: A.boundary_attack(dec, x, y, A.BoundaryConfig(max_iter=5), i)):
        a, b, c = run(0), run(0), run(1)
        np.testing.assert_array_equal(a.adversarial, b.adversarial)
        assert not np.array_equal(a.adversarial, c.adversarial)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dfmx import attacks as A
from dfmx import model as M
from oracles import log_softmax_ce


def small_cnn(seed=0):
    m = M.small_cnn((1, 8, 8), 3, seed=seed, widths=(3, 4))
    gen = np.random.default_rng(seed)
    for p in m.params:
        if "b" in p:
            p["b"] = gen.normal(0, 0.1, size=p["b"].shape)
    return m


def data(n=12, seed=0, shape=(1, 8, 8), k=3):
    gen = np.random.default_rng(seed)
    return gen.random((n,) + shape), gen.integers(0, k, size=n)


def check_contract(adv, x, eps):
    assert np.max(np.abs(adv - x)) <= eps + 1e-12
    assert adv.min() >= 0.0 and adv.max() <= 1.0


def test_step_size_for_eight_is_exactly_two():
    assert A.AttackConfig(8 / 255).step_size == 2 / 255


def test_default_step_size_rule():
    for k in range(1, 11):
        cfg = A.AttackConfig(k / 255)
        assert cfg.step_size == pytest.approx(2.5 * (k / 255) / 10, rel=1e-15)
        assert cfg.steps == 10 and cfg.init == "zero"


@pytest.mark.parametrize("kwargs", [dict(epsilon=0), dict(epsilon=0.1, steps=0),
                                    dict(epsilon=0.1, step_size=-1), dict(epsilon=0.1, init="x")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        A.AttackConfig(**kwargs)


def test_epsilon_grid():
    assert A.EPSILON_GRID == tuple(k / 255 for k in range(1, 11))


def test_fgsm_zero_eps_is_identity():
    x, y = data()
    np.testing.assert_array_equal(A.fgsm(small_cnn(), x, y, 0.0), x)


@pytest.mark.parametrize("eps", [1 / 255, 8 / 255, 0.3])
def test_fgsm_and_pgd_contracts(eps):
    m = small_cnn(1)
    x, y = data(seed=1)
    check_contract(A.fgsm(m, x, y, eps), x, eps)
    for init in ("zero", "random"):
        adv = A.pgd(m, x, y, A.AttackConfig(eps, init=init), rng=np.random.default_rng(0))
        check_contract(adv, x, eps)


def test_one_step_pgd_equals_fgsm_bitwise():
    m = small_cnn(2)
    x, y = data(seed=2)
    for eps in (2 / 255, 8 / 255):
        a = A.fgsm(m, x, y, eps)
        b = A.pgd(m, x, y, A.AttackConfig(eps, steps=1, step_size=eps))
        assert a.tobytes() == b.tobytes()


def test_sign_zero_convention():
    # zero weights: the gradient vanishes and FGSM leaves every pixel in place
    m = M.linear_model(np.zeros((64, 3)), np.array([0.0, 1.0, 2.0]), (1, 8, 8))
    x, y = data()
    np.testing.assert_array_equal(A.fgsm(m, x, y, 0.1), x)


def test_fgsm_increases_linear_loss():
    gen = np.random.default_rng(5)
    W, b = gen.normal(size=(64, 4)), gen.normal(size=4)
    m = M.linear_model(W, b, (1, 8, 8))
    x = gen.random((20, 1, 8, 8)) * 0.8 + 0.1      # interior: no clipping at eps = 0.05
    y = gen.integers(0, 4, size=20)
    adv = A.fgsm(m, x, y, 0.05)
    before = log_softmax_ce(M.forward(m, x), y)
    after = log_softmax_ce(M.forward(m, adv), y)
    assert np.all(after >= before)


def test_constant_logit_model_is_attack_proof():
    m = M.linear_model(np.zeros((64, 3)), np.array([0.0, 1.0, 0.0]), (1, 8, 8))
    x, y = data(20)
    rep = A.attack_accuracy(m, x, y, epsilons=(0.0, 2 / 255, 10 / 255))
    for accs in rep.accuracy.values():
        assert len(set(accs)) == 1


def test_epsilon_zero_column_is_sa():
    m = small_cnn(3)
    x, y = data(30, seed=3)
    rep = A.attack_accuracy(m, x, y, epsilons=(0.0, 4 / 255))
    sa = M.evaluate(m, x, y)
    assert rep.accuracy["fgsm"][0] == sa and rep.accuracy["pgd"][0] == sa


def test_linear_fixture_closed_form_accuracy():
    # two classes on four pixels; for softmax regression the FGSM direction is
    # sign(w_other - w_true) whatever the probabilities
    W = np.array([[1.0, -1.0], [0.5, 0.5], [-2.0, 1.0], [0.0, 0.3]])
    b = np.array([0.1, -0.1])
    m = M.linear_model(W, b, (1, 2, 2))
    gen = np.random.default_rng(11)
    x = gen.random((10, 4))
    y = (x @ W + b).argmax(axis=1)
    y[[2, 7]] = 1 - y[[2, 7]]                        # two already misclassified
    eps = 0.15
    correct = 0
    for xi, yi in zip(x, y):
        direction = np.sign(W[:, 1 - yi] - W[:, yi])
        adv = np.clip(xi + eps * direction, 0, 1)
        correct += int((adv @ W + b).argmax() == yi)
    rep = A.attack_accuracy(m, x.reshape(10, 1, 2, 2), y, attacks=("fgsm",), epsilons=(eps,))
    assert rep.accuracy["fgsm"] == [correct / 10]


def test_attack_accuracy_deterministic_and_in_range():
    m = small_cnn(4)
    x, y = data(16, seed=4)
    a = A.attack_accuracy(m, x, y, epsilons=(2 / 255, 8 / 255), init="random", seed=3)
    b = A.attack_accuracy(m, x, y, epsilons=(2 / 255, 8 / 255), init="random", seed=3)
    assert a.accuracy == b.accuracy
    assert all(0 <= v <= 1 for accs in a.accuracy.values() for v in accs)


def test_pgd_not_weaker_than_fgsm():
    m = small_cnn(5)
    x, y = data(60, seed=5)
    rep = A.attack_accuracy(m, x, y, epsilons=(2 / 255, 8 / 255, 0.1))
    for f, p in zip(rep.accuracy["fgsm"], rep.accuracy["pgd"]):
        assert p <= f + 0.01


def test_unknown_attack():
    m = small_cnn()
    x, y = data(2)
    with pytest.raises(ValueError):
        A.attack_accuracy(m, x, y, attacks=("cw",), epsilons=(0.1,))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 10), st.integers(1, 5), st.integers(0, 1000))
def test_property_pgd_projection(k, steps, seed):
    m = small_cnn(seed % 3)
    x, y = data(4, seed=seed)
    eps = k / 255
    adv = A.pgd(m, x, y, A.AttackConfig(eps, steps=steps, init="random"),
                rng=np.random.default_rng(seed))
    check_contract(adv, x, eps)

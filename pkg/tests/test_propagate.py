import numpy as np
import pytest

from tgg.propagate import (
    ConfigError,
    EpisodeError,
    LabelMatrix,
    balance_classes,
    dual_propagation_loss,
    predict,
    propagate_closed_form,
    propagate_iterative,
)
from tgg.tensor import Tensor, gradcheck


def random_graph(rng, n):
    A = rng.random((n, n))
    return (A + A.T) / 2


def random_labels(rng, n, c, frac=0.4):
    labeled = rng.random(n) < frac
    labeled[0] = True
    return LabelMatrix.from_labels(rng.integers(0, c, size=n), c, labeled)


def test_mu_near_zero_returns_labels():
    rng = np.random.default_rng(0)
    Y = random_labels(rng, 10, 3)
    out = propagate_closed_form(random_graph(rng, 10), Y, mu=1e-12).data
    assert np.abs(out - Y.Y).max() <= 1e-9


@pytest.mark.parametrize("mu", [0.0, 1.0, -0.2, 1.5])
def test_mu_out_of_range(mu):
    with pytest.raises(ConfigError):
        propagate_closed_form(np.zeros((2, 2)), np.eye(2), mu)


@pytest.mark.parametrize("mu", [0.1, 0.5, 0.9])
def test_matches_iterative_fixed_point(mu):
    rng = np.random.default_rng(int(mu * 10))
    for _ in range(20):
        A = random_graph(rng, 50)
        Y = random_labels(rng, 50, 4).Y
        closed = propagate_closed_form(A, Y, mu).data
        assert np.abs(closed - propagate_iterative(A, Y, mu)).max() <= 1e-8


def test_unlabeled_component_stays_zero():
    rng = np.random.default_rng(1)
    A = np.zeros((6, 6))
    A[:3, :3] = random_graph(rng, 3)
    A[3:, 3:] = random_graph(rng, 3)
    Y = LabelMatrix.from_labels(np.array([0, 1, 0, 0, 0, 0]), 2, np.array([1, 1, 0, 0, 0, 0], bool))
    out = propagate_closed_form(A, Y).data
    np.testing.assert_array_equal(out[3:], 0.0)
    assert np.all(out[:3].sum(1) > 0)


def test_label_matrix_contract():
    with pytest.raises(ValueError):
        LabelMatrix(np.array([[0.5, 0.5]]), np.array([True]))
    with pytest.raises(ValueError):
        LabelMatrix(np.array([[1.0, 0.0]]), np.array([False]))


def test_dual_loss_identical_sets_zero():
    rng = np.random.default_rng(2)
    Y = LabelMatrix.from_labels(rng.integers(0, 3, 8), 3)
    mask = np.ones(8, bool)
    assert dual_propagation_loss(random_graph(rng, 8), Y, mask, mask).item() == 0.0


def test_dual_loss_symmetric_and_nonnegative():
    rng = np.random.default_rng(3)
    for _ in range(10):
        A = random_graph(rng, 8)
        Y = LabelMatrix.from_labels(rng.integers(0, 3, 8), 3)
        seen = rng.random(8) < 0.5
        seen[0], seen[1] = True, False
        a = dual_propagation_loss(A, Y, seen, ~seen).item()
        b = dual_propagation_loss(A, Y, ~seen, seen).item()
        assert a >= 0
        assert a == pytest.approx(b, rel=1e-14)


def test_dual_loss_needs_both_masks():
    Y = LabelMatrix.from_labels(np.array([0, 1]), 2)
    with pytest.raises(EpisodeError):
        dual_propagation_loss(np.zeros((2, 2)), Y, np.array([True, True]), np.array([False, False]))


def test_dual_loss_gradient_through_solve():
    rng = np.random.default_rng(4)
    A = Tensor(random_graph(rng, 8), requires_grad=True)
    Y = LabelMatrix.from_labels(rng.integers(0, 3, 8), 3)
    seen = np.arange(8) < 4
    assert gradcheck(lambda: dual_propagation_loss(A, Y, seen, ~seen), [A]) <= 1e-4


def test_propagation_gradient():
    rng = np.random.default_rng(5)
    A = Tensor(random_graph(rng, 6), requires_grad=True)
    Y = random_labels(rng, 6, 2, 0.5)
    probe = rng.normal(size=(6, 2))
    assert gradcheck(lambda: (propagate_closed_form(A, Y, 0.7) * Tensor(probe)).sum(), [A]) <= 1e-4


def test_uniform_row_uniform_probabilities():
    np.testing.assert_allclose(predict(np.full((1, 4), 0.3)), 0.25)


def test_softmax_value():
    p = predict(np.array([[5.0, 0.0, 0.0]]))
    assert p.argmax() == 0
    assert p[0, 0] == pytest.approx(np.exp(5) / (np.exp(5) + 2), abs=1e-12)
    assert p[0, 0] == pytest.approx(0.987, abs=5e-4)


def test_probabilities_sum_and_scale_invariant_argmax():
    rng = np.random.default_rng(6)
    Y = rng.normal(size=(30, 5))
    p = predict(Y, rows=np.arange(0, 30, 2))
    np.testing.assert_allclose(p.sum(1), 1.0, atol=1e-12)
    for c in (0.01, 3.0, 1e3):
        np.testing.assert_array_equal(predict(Y * c).argmax(1), predict(Y).argmax(1))


def test_shared_form_reduces_to_full_propagation_norm():
    rng = np.random.default_rng(7)
    A = random_graph(rng, 9)
    labels = np.array([0, 0, 1, 1, 2, 2, 3, 3, 4])
    Y = LabelMatrix.from_labels(labels, 5)
    seen = labels < 3
    full = propagate_closed_form(A, Y).data
    loss = dual_propagation_loss(A, Y, seen, ~seen, form="shared").item()
    assert loss == pytest.approx((full**2).sum(), rel=1e-12)


def test_subgraph_form_oracle():
    rng = np.random.default_rng(8)
    A = random_graph(rng, 7)
    Y = LabelMatrix.from_labels(rng.integers(0, 3, 7), 3)
    seen = np.array([1, 1, 1, 0, 0, 0, 0], bool)

    def solve(mask):
        B = A * np.outer(mask, mask) + np.eye(7)
        d = 1 / np.sqrt(B.sum(1))
        return np.linalg.solve(np.eye(7) - 0.5 * d[:, None] * B * d[None], Y.Y)

    expected = ((solve(seen) - solve(~seen)) ** 2).sum()
    assert dual_propagation_loss(A, Y, seen, ~seen).item() == pytest.approx(expected, rel=1e-12)


def test_unknown_dual_form():
    Y = LabelMatrix.from_labels(np.array([0, 1]), 2)
    with pytest.raises(ConfigError):
        dual_propagation_loss(np.ones((2, 2)), Y, np.array([True, False]), np.array([False, True]), form="other")


def test_balance_equals_mass_normalized_propagation():
    rng = np.random.default_rng(9)
    A = random_graph(rng, 10)
    labels = np.array([0, 0, 0, 0, 1, 2, 2, 0, 1, 2])
    labeled = np.arange(10) < 7
    Y = LabelMatrix.from_labels(labels, 3, labeled)
    out = balance_classes(propagate_closed_form(A, Y), Y).data
    counts = Y.Y.sum(0)
    expected = propagate_closed_form(A, Y.Y * (counts.min() / counts)).data
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_balance_is_identity_for_equal_counts():
    rng = np.random.default_rng(10)
    A = random_graph(rng, 6)
    Y = LabelMatrix.from_labels(np.array([0, 1, 2, 0, 1, 2]), 3)
    Ys = propagate_closed_form(A, Y)
    np.testing.assert_array_equal(balance_classes(Ys, Y).data, Ys.data)


def test_balance_leaves_unlabeled_class_alone():
    Y = LabelMatrix.from_labels(np.array([0, 0, 1]), 3)
    out = balance_classes(np.ones((3, 3)), Y).data
    np.testing.assert_allclose(out[0], [0.5, 1.0, 1.0])

import math

import numpy as np
import pytest

from helpers import finite_difference_grad
from sascribe.objective import (
    LogitsBatch,
    TokenClass,
    TokenClassWeights,
    hier_ce,
    hier_ce_grad,
)

FLAT = TokenClassWeights(1.0, 1.0, 1.0)


def batch_of(logits, targets, classes):
    return LogitsBatch(np.asarray(logits, dtype=float), tuple(targets), tuple(classes))


def random_batch(rng, positions=None, vocab=None):
    p = positions or int(rng.integers(1, 9))
    v = vocab or int(rng.integers(2, 12))
    classes = [list(TokenClass)[i] for i in rng.integers(0, 3, size=p)]
    return batch_of(
        rng.standard_normal((p, v)),
        [int(t) for t in rng.integers(0, v, size=p)],
        classes,
    )


def test_uniform_logits_give_log_vocab():
    b = batch_of([[0.0] * 4], [2], [TokenClass.TEXT])
    loss, per_class = hier_ce(b, FLAT)
    assert loss == pytest.approx(math.log(4), abs=1e-12)
    assert per_class[TokenClass.TEXT] == pytest.approx(math.log(4), abs=1e-12)


def test_class_weights_scale_the_loss():
    b = batch_of([[0.0] * 4], [0], [TokenClass.SPEAKER])
    loss, _ = hier_ce(b)
    assert loss == pytest.approx(2.0 * math.log(4), abs=1e-12)
    b = batch_of([[0.0] * 4], [0], [TokenClass.TIMESTAMP])
    loss, _ = hier_ce(b)
    assert loss == pytest.approx(1.5 * math.log(4), abs=1e-12)


def test_default_weights():
    w = TokenClassWeights()
    assert (w.text, w.timestamp, w.speaker) == (1.0, 1.5, 2.0)
    with pytest.raises(ValueError):
        TokenClassWeights(0.0, 1.0, 1.0)


def test_loss_decomposes_over_per_class_sums():
    rng = np.random.default_rng(51)
    weights = TokenClassWeights()
    for _ in range(30):
        b = random_batch(rng)
        loss, per_class = hier_ce(b, weights)
        recombined = sum(
            weights.weight_for(c) * per_class[c] for c in TokenClass
        ) / b.positions
        assert loss == pytest.approx(recombined, rel=1e-12)


def test_certain_prediction_has_near_zero_loss():
    b = batch_of([[100.0, 0.0]], [0], [TokenClass.TEXT])
    loss, _ = hier_ce(b, FLAT)
    assert 0.0 <= loss < 1e-8


def test_flat_weights_reduce_to_mean_ce():
    rng = np.random.default_rng(52)
    for _ in range(20):
        b = random_batch(rng)
        loss, _ = hier_ce(b, FLAT)
        logits = b.logits
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        plain = -np.mean([log_probs[i, t] for i, t in enumerate(b.targets)])
        assert loss == pytest.approx(plain, abs=1e-12)


def test_loss_is_stable_for_large_logits():
    b = batch_of([[1000.0, 999.0]], [1], [TokenClass.TEXT])
    loss, _ = hier_ce(b, FLAT)
    assert math.isfinite(loss)
    assert loss == pytest.approx(math.log(1 + math.e), abs=1e-9)


def test_weighted_loss_is_additive_over_positions():
    rng = np.random.default_rng(53)
    b1 = random_batch(rng, positions=3, vocab=5)
    b2 = random_batch(rng, positions=4, vocab=5)
    cat = batch_of(
        np.vstack([b1.logits, b2.logits]),
        np.concatenate([b1.targets, b2.targets]),
        b1.classes + b2.classes,
    )
    l1, _ = hier_ce(b1)
    l2, _ = hier_ce(b2)
    lc, _ = hier_ce(cat)
    assert lc * cat.positions == pytest.approx(l1 * 3 + l2 * 4, rel=1e-12)


# --- gradient ---------------------------------------------------------------


def test_gradient_closed_form_two_way_uniform():
    b = batch_of([[0.0, 0.0]], [0], [TokenClass.TEXT])
    grad = hier_ce_grad(b, FLAT)
    np.testing.assert_allclose(grad, [[-0.5, 0.5]], atol=1e-15)


def test_gradient_rows_sum_to_zero():
    rng = np.random.default_rng(54)
    for _ in range(20):
        b = random_batch(rng)
        grad = hier_ce_grad(b)
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)


def test_doubling_a_weight_doubles_its_rows():
    b = batch_of(
        [[0.2, -0.1, 0.4], [1.0, 0.0, -1.0]],
        [1, 2],
        [TokenClass.SPEAKER, TokenClass.TEXT],
    )
    g1 = hier_ce_grad(b, TokenClassWeights(1.0, 1.0, 1.0))
    g2 = hier_ce_grad(b, TokenClassWeights(1.0, 1.0, 2.0))
    np.testing.assert_allclose(g2[0], 2.0 * g1[0], rtol=1e-15)
    np.testing.assert_allclose(g2[1], g1[1], rtol=1e-15)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(55)
    weights = TokenClassWeights()
    worst = 0.0
    for _ in range(25):
        b = random_batch(rng)
        analytic = hier_ce_grad(b, weights)
        numeric = finite_difference_grad(b, weights)
        denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    assert worst < 1e-6


# --- batch validation -------------------------------------------------------


def test_batch_validation():
    with pytest.raises(ValueError, match="2-D"):
        LogitsBatch(np.zeros(3), (0,), (TokenClass.TEXT,))
    with pytest.raises(ValueError, match="at least"):
        LogitsBatch(np.zeros((0, 4)), (), ())
    with pytest.raises(ValueError):
        LogitsBatch(np.zeros((1, 1)), (0,), (TokenClass.TEXT,))
    with pytest.raises(ValueError, match="target"):
        LogitsBatch(np.zeros((1, 4)), (4,), (TokenClass.TEXT,))
    with pytest.raises(ValueError):
        LogitsBatch(np.zeros((1, 4)), (0,), ("text",))
    with pytest.raises(ValueError, match="token class"):
        LogitsBatch(np.zeros((2, 4)), (0, 1), (TokenClass.TEXT,))
    with pytest.raises(ValueError, match="finite"):
        LogitsBatch(np.array([[np.inf, 0.0]]), (0,), (TokenClass.TEXT,))

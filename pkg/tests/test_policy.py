import math

import numpy as np
import pytest

from sarplan.policy import (
    Adam,
    PolicyModel,
    TrainConfig,
    entropy,
    extract_features,
    load_model,
    loss_and_grads,
    make_samples,
    policy_forward,
    predict_angle,
    predict_segment,
    save_model,
    train,
    train_step,
    write_metrics_csv,
)
from sarplan.segment import sweep_best_segment
from sarplan.terrain import GeoPoint
from sarplan.visibility import VisibilityMap

TRAIN_LR = 0.05  # Adam step used for the convergence checks


def const_map(value, res=60, extent=3000.0, alt=1000.0):
    return VisibilityMap(0, alt, extent, res, np.full((res, res), value, np.uint8), 0.0, 0.0)


def pi_line_map():
    """Only the cells under the alpha = pi tangent line are visible."""
    res = 300
    v = np.zeros((res, res), np.uint8)
    v[135:166, 135] = 1  # x in [-1500, -1400), |y| <= 1500
    return VisibilityMap(0, 1000.0, 15_000.0, res, v, 0.0, 0.0)


def test_features_constant_maps():
    assert np.all(extract_features([const_map(1)], 8) == 1.0)
    assert np.all(extract_features([const_map(0)], 8) == 0.0)
    assert extract_features([const_map(1), const_map(0, alt=2000.0)], 5).shape == (10,)


def test_features_east_half():
    res = 100
    v = np.zeros((res, res), np.uint8)
    v[:, res // 2 :] = 1
    f = extract_features([VisibilityMap(0, 1000.0, 5000.0, res, v, 0.0, 0.0)], 4)
    # independent count per quadrant sector centered on 0, pi/2, pi, 3pi/2
    offs = (np.arange(res) + 0.5) * 100.0 - 5000.0
    X, Y = np.meshgrid(offs, offs)
    ang = np.mod(np.arctan2(Y, X) + math.pi / 4, 2 * math.pi)
    expected = [v[(ang >= k * math.pi / 2) & (ang < (k + 1) * math.pi / 2)].mean() for k in range(4)]
    assert np.allclose(f, expected)
    assert np.allclose(f, [1.0, 0.5, 0.0, 0.5], atol=0.02)


def test_features_empty_stack():
    with pytest.raises(ValueError):
        extract_features([])


def test_zero_model_uniform():
    m = PolicyModel.zeros(6, 72)
    probs, value = policy_forward(m, np.ones(6))
    assert np.allclose(probs, 1 / 72)
    assert value == 0.0
    assert entropy(probs) == pytest.approx(math.log(72))


def test_forward_normalized_and_dim_check():
    rng = np.random.default_rng(1)
    m = PolicyModel.random(5, 9, rng, scale=3.0)
    probs, _ = policy_forward(m, rng.random((20, 5)))
    assert np.all(probs >= 0)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    with pytest.raises(ValueError):
        policy_forward(m, np.ones(4))
    assert m.action_angle(3) == pytest.approx(2 * math.pi * 3 / 9)


def numeric_grad(fn, params, step=1e-6):
    g = np.zeros_like(params)
    for i in range(params.size):
        hi, lo = params.copy(), params.copy()
        hi[i] += step
        lo[i] -= step
        g[i] = (fn(hi) - fn(lo)) / (2 * step)
    return g


def flat(grads):
    gw, gb, gc, gc0 = grads
    return np.concatenate([gw.ravel(), gb, gc, [gc0]])


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


def random_batch(seed, k=5, d=4, n=6):
    rng = np.random.default_rng(seed)
    m = PolicyModel.random(d, k, rng, scale=0.5)
    f = rng.random((n, d))
    a = rng.integers(0, k, n)
    r = rng.random(n)
    return m, f, a, r


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("lam", [0.0, 0.01, 1.0])
def test_gradients_match_finite_differences(seed, lam):
    m, f, a, r = random_batch(seed)
    terms, grads = loss_and_grads(m, f, a, r, lam)
    adv = terms.advantage.copy()  # held fixed: the actor term treats A as a constant

    def loss(p):
        return loss_and_grads(m.with_params(p), f, a, r, lam, advantage=adv)[0].total

    assert rel_err(flat(grads), numeric_grad(loss, m.params())) < 1e-5


def test_entropy_gradient_alone():
    m, f, a, r = random_batch(7)
    _, grads = loss_and_grads(m, f, a, r, 1.0, advantage=np.zeros(len(a)))
    k, d = m.k_actions, m.feature_dim

    def neg_h(p):
        probs, _ = policy_forward(m.with_params(p), f)
        return -float(np.mean(entropy(probs)))

    num = numeric_grad(neg_h, m.params())
    assert rel_err(flat(grads)[: k * d + k], num[: k * d + k]) < 1e-5


def test_zero_advantage_leaves_only_entropy_term():
    m, f, a, _ = random_batch(3)
    _, value = policy_forward(m, f)
    lam = 0.01
    _, grads = loss_and_grads(m, f, a, value, lam)
    k, d = m.k_actions, m.feature_dim

    def neg_h(p):
        probs, _ = policy_forward(m.with_params(p), f)
        return -lam * float(np.mean(entropy(probs)))

    num = numeric_grad(neg_h, m.params())
    assert rel_err(flat(grads)[: k * d + k], num[: k * d + k]) < 1e-5
    # critic already exact: no critic gradient
    assert np.allclose(flat(grads)[k * d + k :], 0.0)


def test_non_finite_reward_rejected():
    m, f, a, r = random_batch(0)
    r[2] = np.nan
    with pytest.raises(ValueError):
        loss_and_grads(m, f, a, r, 0.01)


def test_critic_converges_to_constant_reward():
    rng = np.random.default_rng(0)
    feats = rng.random((50, 8))
    m = PolicyModel.zeros(8, 12)
    cfg = TrainConfig(learning_rate=0.05)
    opt = Adam(cfg.learning_rate)
    for _ in range(2000):
        idx = rng.integers(0, 50, 6)
        m = train_step(m, feats[idx], rng.integers(0, 12, 6), np.full(6, 0.7), cfg, opt).model
    _, values = policy_forward(m, feats)
    assert np.all(np.abs(values - 0.7) < 0.01)


def test_softmax_normalized_after_updates():
    m, f, a, r = random_batch(2)
    cfg = TrainConfig(learning_rate=0.5)
    for _ in range(20):
        m = train_step(m, f, a, r, cfg).model
        probs, _ = policy_forward(m, f)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_pi_line_map_learned():
    vis = pi_line_map()
    samples = make_samples([[vis]], [GeoPoint(0.0, 0.0)])
    oracle = sweep_best_segment([vis], GeoPoint(0.0, 0.0))
    assert oracle.angle_alpha == pytest.approx(math.pi)
    model, log = train(samples, TrainConfig(learning_rate=TRAIN_LR, episodes=300, seed=0))
    k = int(np.argmax(policy_forward(model, samples[0].features)[0]))
    width = 2 * math.pi / model.k_actions
    assert k * width - width / 2 <= math.pi <= k * width + width / 2
    assert predict_angle(model, vis) == pytest.approx(math.pi)
    # entropy falls from ln K
    assert log[0]["entropy"] == pytest.approx(math.log(72))
    first = np.mean([r["entropy"] for r in log[:20]])
    last = np.mean([r["entropy"] for r in log[-20:]])
    assert last < first
    assert np.mean([r["mean_reward"] for r in log[-20:]]) > 0.9


def test_training_deterministic():
    samples = make_samples([[pi_line_map()]], [GeoPoint(0.0, 0.0)])
    cfg = TrainConfig(learning_rate=TRAIN_LR, episodes=40, seed=5)
    m1, log1 = train(samples, cfg)
    m2, log2 = train(samples, cfg)
    assert log1 == log2
    assert np.array_equal(m1.params(), m2.params())
    with pytest.raises(ValueError):
        train([], cfg)


def test_bandit_best_action_probability_grows():
    k, best = 8, 3
    reward = np.full(k, 0.2)
    reward[best] = 1.0
    f = np.ones((6, 1))
    improved = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        m = PolicyModel.random(1, k, rng, scale=0.1)
        cfg = TrainConfig(learning_rate=0.5, entropy_weight=0.0, seed=seed)
        p0 = policy_forward(m, f[0])[0][best]
        for _ in range(60):
            probs, _ = policy_forward(m, f)
            actions = np.array([rng.choice(k, p=p) for p in probs])
            m = train_step(m, f, actions, reward[actions], cfg).model
        improved += policy_forward(m, f[0])[0][best] > p0
    assert improved >= 19


def test_predict_segment_uses_lowest_best_altitude():
    stack = [const_map(1, alt=1000.0), const_map(1, alt=2000.0)]
    model = PolicyModel.zeros(16, 72)
    seg = predict_segment(model, stack, GeoPoint(0.0, 0.0))
    assert seg.altitude_agl == 1000.0
    assert seg.angle_alpha == 0.0


def test_model_and_metrics_files(tmp_path):
    rng = np.random.default_rng(4)
    m = PolicyModel.random(6, 10, rng)
    save_model(m, tmp_path / "model.txt")
    back = load_model(tmp_path / "model.txt")
    assert np.array_equal(back.params(), m.params())
    log = [{"episode": 0, "mean_reward": 0.5, "actor_loss": 0.1, "critic_loss": 0.2, "entropy": 1.0}]
    write_metrics_csv(log, tmp_path / "metrics.csv")
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0] == "episode,mean_reward,actor_loss,critic_loss,entropy"
    assert len(lines) == 2

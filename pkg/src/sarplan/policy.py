"""Linear actor-critic over angular-sector visibility features.

The actor is a categorical distribution over ``K_actions`` angle bins
(bin k -> alpha = 2 pi k / K). The critic regresses the normalized segment reward.
The loss per batch is

    L = -mean(A * log pi(a)) + mean((V - r)^2) - lambda * mean(H)

with the advantage A = r - V held constant inside the actor term.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .segment import SegmentConfig, segment_accuracy, segment_from_angle
from .terrain import GeoPoint
from .visibility import VisibilityMap

DEFAULT_SECTORS = 16
DEFAULT_ACTIONS = 72


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    entropy_weight: float = 0.01
    batch_size: int = 6
    episodes: int = 500
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.entropy_weight < 0:
            raise ValueError("entropy_weight must be nonnegative")
        if self.batch_size < 1 or self.episodes < 0:
            raise ValueError("batch_size must be >= 1 and episodes >= 0")


@dataclass
class PolicyModel:
    actor_weights: np.ndarray
    actor_bias: np.ndarray
    critic_weights: np.ndarray
    critic_bias: float = 0.0

    def __post_init__(self):
        self.actor_weights = np.asarray(self.actor_weights, dtype=np.float64)
        self.actor_bias = np.asarray(self.actor_bias, dtype=np.float64)
        self.critic_weights = np.asarray(self.critic_weights, dtype=np.float64)
        self.critic_bias = float(self.critic_bias)
        k, d = self.actor_weights.shape
        if k < 4:
            raise ValueError("K_actions must be >= 4")
        if self.actor_bias.shape != (k,) or self.critic_weights.shape != (d,):
            raise ValueError("inconsistent policy dimensions")

    @classmethod
    def zeros(cls, feature_dim: int, k_actions: int = DEFAULT_ACTIONS) -> "PolicyModel":
        return cls(np.zeros((k_actions, feature_dim)), np.zeros(k_actions), np.zeros(feature_dim), 0.0)

    @classmethod
    def random(cls, feature_dim: int, k_actions: int, rng: np.random.Generator, scale=0.1):
        return cls(
            rng.normal(0, scale, (k_actions, feature_dim)),
            rng.normal(0, scale, k_actions),
            rng.normal(0, scale, feature_dim),
            float(rng.normal(0, scale)),
        )

    @property
    def k_actions(self) -> int:
        return self.actor_weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.actor_weights.shape[1]

    def action_angle(self, k) -> float:
        return 2 * math.pi * k / self.k_actions

    def params(self) -> np.ndarray:
        """Flat parameter vector (actor W, actor b, critic w, critic b)."""
        return np.concatenate([
            self.actor_weights.ravel(), self.actor_bias, self.critic_weights, [self.critic_bias]
        ])

    def with_params(self, flat: np.ndarray) -> "PolicyModel":
        k, d = self.k_actions, self.feature_dim
        i = k * d
        return PolicyModel(
            flat[:i].reshape(k, d).copy(), flat[i : i + k].copy(), flat[i + k : i + k + d].copy(), flat[-1]
        )


def extract_features(stack: Sequence[VisibilityMap], k_sectors: int = DEFAULT_SECTORS) -> np.ndarray:
    """Visible fraction per angular sector, concatenated over altitudes.

    Sector k is centered on angle 2 pi k / K around the target.
    """
    if not stack:
        raise ValueError("empty visibility stack")
    feats = []
    for vis in stack:
        xs, ys = vis.cell_centers()
        ang = np.arctan2(ys - vis.center_y, xs - vis.center_x)
        width = 2 * math.pi / k_sectors
        sector = np.floor(np.mod(ang + width / 2, 2 * math.pi) / width).astype(np.intp) % k_sectors
        counts = np.bincount(sector.ravel(), minlength=k_sectors)
        visible = np.bincount(sector.ravel(), weights=vis.values.ravel().astype(np.float64), minlength=k_sectors)
        feats.append(np.divide(visible, counts, out=np.zeros(k_sectors), where=counts > 0))
    return np.concatenate(feats)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def policy_forward(model: PolicyModel, features: np.ndarray) -> tuple[np.ndarray, np.ndarray | float]:
    """Action distribution and critic value; accepts one feature vector or a batch."""
    f = np.asarray(features, dtype=np.float64)
    if f.shape[-1] != model.feature_dim:
        raise ValueError(f"feature length {f.shape[-1]} != model dimension {model.feature_dim}")
    probs = _softmax(f @ model.actor_weights.T + model.actor_bias)
    value = f @ model.critic_weights + model.critic_bias
    return probs, (float(value) if np.ndim(value) == 0 else value)


def entropy(probs: np.ndarray) -> np.ndarray:
    return -np.sum(probs * np.log(np.clip(probs, 1e-300, None)), axis=-1)


@dataclass
class LossTerms:
    actor: float
    critic: float
    entropy: float
    total: float
    advantage: np.ndarray


def loss_and_grads(model, features, actions, rewards, entropy_weight, advantage=None):
    """Loss terms and gradients (as a PolicyModel-shaped tuple).

    ``advantage`` defaults to ``rewards - V`` at the current parameters; pass it
    explicitly to hold it fixed (e.g. for finite differences).
    """
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    a = np.asarray(actions, dtype=np.intp)
    r = np.asarray(rewards, dtype=np.float64)
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite reward")
    n = f.shape[0]
    probs, value = policy_forward(model, f)
    value = np.atleast_1d(value)
    adv = r - value if advantage is None else np.asarray(advantage, dtype=np.float64)
    logp = np.log(np.clip(probs[np.arange(n), a], 1e-300, None))
    ent = entropy(probs)

    actor = -np.mean(adv * logp)
    critic = np.mean((value - r) ** 2)
    h = np.mean(ent)
    total = actor + critic - entropy_weight * h

    onehot = np.zeros_like(probs)
    onehot[np.arange(n), a] = 1.0
    # d(actor)/dz = -A (onehot - p) / n ; d(-lambda H)/dz = lambda p (log p + H) / n
    logp_all = np.log(np.clip(probs, 1e-300, None))
    dz = (-adv[:, None] * (onehot - probs) + entropy_weight * probs * (logp_all + ent[:, None])) / n
    dv = 2 * (value - r) / n
    grads = (dz.T @ f, dz.sum(axis=0), f.T @ dv, float(dv.sum()))
    return LossTerms(float(actor), float(critic), float(h), float(total), adv), grads


class Adam:
    """Adam optimizer state over a flat parameter vector."""

    def __init__(self, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _flat_grad(grads) -> np.ndarray:
    gw, gb, gc, gc0 = grads
    return np.concatenate([gw.ravel(), gb, gc, [gc0]])


@dataclass
class StepResult:
    model: PolicyModel
    actor_loss: float
    critic_loss: float
    entropy: float


def train_step(model, features, actions, rewards, config: TrainConfig, optimizer: Adam | None = None) -> StepResult:
    """One gradient step on a batch; plain SGD when no optimizer is given."""
    terms, grads = loss_and_grads(model, features, actions, rewards, config.entropy_weight)
    g = _flat_grad(grads)
    p = model.params()
    new = optimizer.step(p, g) if optimizer is not None else p - config.learning_rate * g
    return StepResult(model.with_params(new), terms.actor, terms.critic, terms.entropy)


@dataclass
class TrainingSample:
    """One visibility map and its target: the unit the policy acts on."""

    vis: VisibilityMap
    target: GeoPoint
    features: np.ndarray = field(default=None)


METRIC_FIELDS = ("episode", "mean_reward", "actor_loss", "critic_loss", "entropy")


def make_samples(stacks: Sequence[Sequence[VisibilityMap]], targets: Sequence[GeoPoint], k_sectors=DEFAULT_SECTORS):
    """Flatten per-target stacks into per-altitude training samples."""
    out = []
    for stack, target in zip(stacks, targets):
        for vis in stack:
            out.append(TrainingSample(vis, target, extract_features([vis], k_sectors)))
    return out


def train(
    samples: Sequence[TrainingSample],
    config: TrainConfig = TrainConfig(),
    seg_config: SegmentConfig = SegmentConfig(),
    k_actions: int = DEFAULT_ACTIONS,
) -> tuple[PolicyModel, list[dict]]:
    """Sample angles from the policy, score them, and update; returns model and metrics log."""
    if not samples:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(config.seed)
    model = PolicyModel.zeros(samples[0].features.size, k_actions)
    opt = Adam(config.learning_rate)
    feats = np.stack([s.features for s in samples])
    log = []
    for episode in range(config.episodes):
        idx = rng.integers(0, len(samples), config.batch_size)
        probs, _ = policy_forward(model, feats[idx])
        u = rng.random(config.batch_size)
        actions = np.minimum((probs.cumsum(axis=1) < u[:, None]).sum(axis=1), k_actions - 1)
        rewards = np.empty(config.batch_size)
        for j, (i, a) in enumerate(zip(idx, actions)):
            s = samples[i]
            seg = segment_from_angle(s.target, model.action_angle(a), s.vis.altitude_agl, seg_config, s.vis.target_id)
            rewards[j] = segment_accuracy(s.vis, seg)
        step = train_step(model, feats[idx], actions, rewards, config, opt)
        model = step.model
        log.append({
            "episode": episode,
            "mean_reward": float(rewards.mean()),
            "actor_loss": step.actor_loss,
            "critic_loss": step.critic_loss,
            "entropy": step.entropy,
        })
    return model, log


def predict_angle(model: PolicyModel, vis: VisibilityMap, k_sectors: int = DEFAULT_SECTORS) -> float:
    probs, _ = policy_forward(model, extract_features([vis], k_sectors))
    return model.action_angle(int(np.argmax(probs)))


def predict_segment(model, stack, target, seg_config: SegmentConfig = SegmentConfig(), k_sectors=DEFAULT_SECTORS):
    """Greedy angle per altitude, then the lowest altitude with the best reward."""
    best = None
    best_acc = -1.0
    for vis in stack:
        seg = segment_from_angle(target, predict_angle(model, vis, k_sectors), vis.altitude_agl, seg_config, vis.target_id)
        acc = segment_accuracy(vis, seg)
        if acc > best_acc:
            best, best_acc = seg, acc
    return best


def save_model(model: PolicyModel, path) -> None:
    lines = [f"{model.k_actions} {model.feature_dim}"]
    for row in model.actor_weights:
        lines.append(" ".join(repr(float(v)) for v in row))
    lines.append(" ".join(repr(float(v)) for v in model.actor_bias))
    lines.append(" ".join(repr(float(v)) for v in model.critic_weights))
    lines.append(repr(float(model.critic_bias)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> PolicyModel:
    lines = Path(path).read_text().split("\n")
    k, d = (int(v) for v in lines[0].split())
    rows = [[float(v) for v in line.split()] for line in lines[1 : 1 + k]]
    bias = [float(v) for v in lines[1 + k].split()]
    critic = [float(v) for v in lines[2 + k].split()]
    return PolicyModel(np.array(rows).reshape(k, d), np.array(bias), np.array(critic), float(lines[3 + k]))


def write_metrics_csv(log: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
        w.writeheader()
        for row in log:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})

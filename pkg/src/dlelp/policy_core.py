"""Small tanh MLPs with hand-written backprop, PPO-clip and value losses, Adam.

Parameters live in one flat float64 vector; ``ApproximatorParams.layers()`` returns
``(W, b)`` views into it, with ``W`` shaped ``(in, out)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, InvalidInputError, NumericalDegeneracyError

CHECKPOINT_VERSION = 1


@dataclass
class ApproximatorParams:
    sizes: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or any(s < 1 for s in self.sizes):
            raise ConfigError(f"invalid layer sizes {self.sizes}: every layer needs >= 1 unit")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (param_count(self.sizes),):
            raise ConfigError(f"expected {param_count(self.sizes)} parameters, got {self.values.shape}")

    @property
    def layout(self) -> list[tuple[int, int]]:
        return list(zip(self.sizes[:-1], self.sizes[1:]))

    def layers(self, values: np.ndarray | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
        v = self.values if values is None else values
        out, k = [], 0
        for i, o in self.layout:
            w = v[k : k + i * o].reshape(i, o)
            k += i * o
            out.append((w, v[k : k + o]))
            k += o
        return out

    def copy(self) -> "ApproximatorParams":
        return ApproximatorParams(self.sizes, self.values.copy())

    def with_values(self, values: np.ndarray) -> "ApproximatorParams":
        return ApproximatorParams(self.sizes, values)

    @classmethod
    def zeros(cls, sizes: Sequence[int]) -> "ApproximatorParams":
        return cls(tuple(sizes), np.zeros(param_count(sizes)))

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator, out_scale: float = 0.01) -> "ApproximatorParams":
        """Scaled-normal weights, zero biases; the output layer is shrunk so the
        initial policy is close to uniform."""
        p = cls.zeros(sizes)
        layers = p.layers()
        for idx, (w, _) in enumerate(layers):
            scale = 1.0 / np.sqrt(w.shape[0])
            if idx == len(layers) - 1:
                scale *= out_scale
            w[...] = rng.normal(0.0, scale, size=w.shape)
        return p

    def to_dict(self) -> dict:
        return {"sizes": list(self.sizes), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ApproximatorParams":
        return cls(tuple(d["sizes"]), np.array(d["values"], dtype=np.float64))


def param_count(sizes: Sequence[int]) -> int:
    return sum((i + 1) * o for i, o in zip(sizes[:-1], sizes[1:]))


def _forward(params: ApproximatorParams, x: np.ndarray, values: np.ndarray | None = None):
    """Returns output and activations cache for backprop. ``x`` is (B, in)."""
    acts = [x]
    h = x
    layers = params.layers(values)
    for idx, (w, b) in enumerate(layers):
        z = h @ w + b
        h = np.tanh(z) if idx < len(layers) - 1 else z
        acts.append(h)
    return h, acts


def _backward(params: ApproximatorParams, acts: list[np.ndarray], dout: np.ndarray, values=None) -> np.ndarray:
    """Gradient of ``sum(dout * output)`` w.r.t. the flat parameter vector."""
    layers = params.layers(values)
    grads = []
    delta = dout
    for idx in range(len(layers) - 1, -1, -1):
        w, _ = layers[idx]
        h_in = acts[idx]
        grads.append((h_in.T @ delta, delta.sum(axis=0)))
        if idx > 0:
            delta = (delta @ w.T) * (1.0 - h_in**2)
    flat = []
    for gw, gb in reversed(grads):
        flat.append(gw.ravel())
        flat.append(gb)
    return np.concatenate(flat)


def _as_batch(states) -> tuple[np.ndarray, bool]:
    x = np.asarray(states, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def _masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = np.where(mask, logits, -np.inf)
    zmax = z.max(axis=-1, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return shifted - lse


def _check_masks(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise InvalidInputError("action mask must allow at least one action")
    return mask


def policy_logits(params: ApproximatorParams, state) -> np.ndarray:
    x, single = _as_batch(state)
    out, _ = _forward(params, x)
    return out[0] if single else out


def forward_policy(params: ApproximatorParams, state, mask) -> np.ndarray:
    """Masked softmax over concepts; exact zeros on masked entries."""
    x, single = _as_batch(state)
    if x.shape[1] != params.sizes[0]:
        raise InvalidInputError(f"state length {x.shape[1]} != network input {params.sizes[0]}")
    m = _check_masks(np.broadcast_to(mask, (x.shape[0], params.sizes[-1])))
    logits, _ = _forward(params, x)
    probs = np.exp(_masked_log_softmax(logits, m))
    probs[~m] = 0.0
    return probs[0] if single else probs


def forward_value(params: ApproximatorParams, state):
    x, single = _as_batch(state)
    if x.shape[1] != params.sizes[0]:
        raise InvalidInputError(f"state length {x.shape[1]} != network input {params.sizes[0]}")
    out, _ = _forward(params, x)
    v = out[:, 0]
    return float(v[0]) if single else v


# -- trajectories ------------------------------------------------------------


@dataclass
class Trajectory:
    """P-agent decisions; one or more episodes concatenated, ``dones`` marks episode ends."""

    states: np.ndarray
    actions: np.ndarray
    masks: np.ndarray
    behavior_logprob: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray = field(default=None)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.masks = np.asarray(self.masks, dtype=bool)
        self.behavior_logprob = np.asarray(self.behavior_logprob, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.dones is None:
            self.dones = np.zeros(len(self.actions), dtype=bool)
            if len(self.dones):
                self.dones[-1] = True
        self.dones = np.asarray(self.dones, dtype=bool)
        if len(self.actions) and not self.masks[np.arange(len(self.actions)), self.actions].all():
            raise InvalidInputError("trajectory contains a masked-out action")

    def __len__(self):
        return len(self.actions)

    @classmethod
    def concat(cls, trajs: Sequence["Trajectory"]) -> "Trajectory":
        trajs = [t for t in trajs if len(t)]
        if not trajs:
            raise InvalidInputError("no steps to concatenate")
        return cls(
            np.concatenate([t.states for t in trajs]),
            np.concatenate([t.actions for t in trajs]),
            np.concatenate([t.masks for t in trajs]),
            np.concatenate([t.behavior_logprob for t in trajs]),
            np.concatenate([t.rewards for t in trajs]),
            np.concatenate([t.values for t in trajs]),
            np.concatenate([t.dones for t in trajs]),
        )

    def to_dict(self) -> dict:
        return {
            "states": self.states.tolist(),
            "actions": self.actions.tolist(),
            "masks": self.masks.tolist(),
            "behavior_logprob": self.behavior_logprob.tolist(),
            "rewards": self.rewards.tolist(),
            "values": self.values.tolist(),
            "dones": self.dones.tolist(),
        }


def discounted_returns(rewards: Sequence[float], gamma: float, dones: Sequence[bool] | None = None) -> np.ndarray:
    if not 0.0 < gamma <= 1.0:
        raise InvalidInputError("gamma must lie in (0, 1]")
    r = np.asarray(rewards, dtype=np.float64)
    out = np.zeros_like(r)
    running = 0.0
    for t in range(len(r) - 1, -1, -1):
        if dones is not None and dones[t]:
            running = 0.0
        running = r[t] + gamma * running
        out[t] = running
    return out


def advantages(traj: Trajectory, params_value: ApproximatorParams, gamma: float) -> np.ndarray:
    """Return minus baseline; the value after a terminal step is taken as zero."""
    if len(traj) == 0:
        raise InvalidInputError("empty trajectory")
    returns = discounted_returns(traj.rewards, gamma, traj.dones)
    return returns - forward_value(params_value, traj.states)


def ppo_clip_loss(
    traj: Trajectory,
    params_new: ApproximatorParams,
    params_old: ApproximatorParams,
    epsilon: float,
    adv: np.ndarray,
    entropy_coef: float = 0.0,
) -> tuple[float, np.ndarray]:
    """Negated clipped surrogate (minimised) and its gradient w.r.t. ``params_new``."""
    if epsilon <= 0:
        raise InvalidInputError("epsilon must be > 0")
    adv = np.asarray(adv, dtype=np.float64)
    T = len(traj)
    idx = np.arange(T)
    old_logits, _ = _forward(params_old, traj.states)
    old_logp = _masked_log_softmax(old_logits, traj.masks)[idx, traj.actions]
    if not np.all(np.isfinite(old_logp)) or np.any(np.exp(old_logp) == 0.0):
        raise NumericalDegeneracyError("old policy assigns zero probability to a taken action")

    logits, acts = _forward(params_new, traj.states)
    logp_all = _masked_log_softmax(logits, traj.masks)
    probs = np.exp(logp_all)
    probs[~traj.masks] = 0.0
    ratio = np.exp(logp_all[idx, traj.actions] - old_logp)
    clipped = np.clip(ratio, 1.0 - epsilon, 1.0 + epsilon)
    surr1, surr2 = ratio * adv, clipped * adv
    use_unclipped = surr1 <= surr2
    objective = np.where(use_unclipped, surr1, surr2)
    loss = -objective.mean()

    # d objective / d log pi(a) = ratio * adv on the unclipped branch, 0 otherwise
    coef = np.where(use_unclipped, ratio * adv, 0.0)
    onehot = np.zeros_like(probs)
    onehot[idx, traj.actions] = 1.0
    dlogits = coef[:, None] * (onehot - probs)

    if entropy_coef:
        plogp = np.where(traj.masks, probs * np.where(traj.masks, logp_all, 0.0), 0.0)
        ent = -plogp.sum(axis=1)
        loss -= entropy_coef * ent.mean()
        logp_safe = np.where(traj.masks, logp_all, 0.0)
        dent = -probs * (logp_safe + ent[:, None])
        dlogits = dlogits + entropy_coef * dent

    grad = _backward(params_new, acts, -dlogits / T)
    return float(loss), grad


def value_loss(traj: Trajectory, params_value: ApproximatorParams, gamma: float) -> tuple[float, np.ndarray]:
    returns = discounted_returns(traj.rewards, gamma, traj.dones)
    out, acts = _forward(params_value, traj.states)
    err = returns - out[:, 0]
    T = len(err)
    loss = float(np.mean(err**2))
    grad = _backward(params_value, acts, (-2.0 * err / T)[:, None])
    return loss, grad


# -- optimisation ------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ApproximatorParams | np.ndarray, **kw) -> "AdamState":
        n = len(params.values if isinstance(params, ApproximatorParams) else params)
        return cls(np.zeros(n), np.zeros(n), **kw)

    def to_dict(self) -> dict:
        return {
            "m": self.m.tolist(),
            "v": self.v.tolist(),
            "t": self.t,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdamState":
        d = dict(d)
        return cls(np.array(d.pop("m"), dtype=np.float64), np.array(d.pop("v"), dtype=np.float64), **d)


def optimizer_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise InvalidInputError(f"length mismatch: params {params.shape}, grads {grads.shape}, moments {state.m.shape}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps)


def gradient_check(
    loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
    params: np.ndarray,
    probe_count: int = 20,
    h: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference partials on random coordinates."""
    if h <= 0:
        raise InvalidInputError("h must be > 0")
    rng = rng or np.random.default_rng(0)
    x = np.array(params, dtype=np.float64)
    _, g = loss_fn(x)
    coords = rng.choice(len(x), size=min(probe_count, len(x)), replace=False)
    worst = 0.0
    for i in coords:
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fd = (loss_fn(xp)[0] - loss_fn(xm)[0]) / (2 * h)
        err = abs(g[i] - fd) / max(1e-8, abs(g[i]) + abs(fd))
        worst = max(worst, err)
    return worst


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(path, policy, value, policy_opt, value_opt, seed, step, extra=None) -> None:
    blob = {
        "version": CHECKPOINT_VERSION,
        "policy": policy.to_dict(),
        "value": value.to_dict(),
        "policy_opt": policy_opt.to_dict(),
        "value_opt": value_opt.to_dict(),
        "seed": int(seed),
        "step": int(step),
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(blob, sort_keys=True), encoding="utf-8")


def load_checkpoint(path) -> dict:
    blob = json.loads(Path(path).read_text(encoding="utf-8"))
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {blob.get('version')}")
    return {
        "policy": ApproximatorParams.from_dict(blob["policy"]),
        "value": ApproximatorParams.from_dict(blob["value"]),
        "policy_opt": AdamState.from_dict(blob["policy_opt"]),
        "value_opt": AdamState.from_dict(blob["value_opt"]),
        "seed": blob["seed"],
        "step": blob["step"],
        "extra": blob.get("extra", {}),
    }

r"""From-scratch actor-critic PPO: networks, losses, manual backprop, updates.

No autodiff framework anywhere: forward passes cache activations and every
gradient is written out by hand (tanh MLPs make that short). The policy is a
diagonal Gaussian over the raw action vector with a state-independent learned
log-std; feasibility projection happens in the environment, so log-probs stay
exact.

Losses follow the sum convention:
    L^CLIP = sum_t min(ratio_t * A_t, clip(ratio_t, 1-eps, 1+eps) * A_t)
    L^VF   = sum_t (V(s_t) - J_t)^2
and the optimizer minimizes -L^CLIP and +L^VF. Rewards-to-go are the
suffix-discounted sums J_t = r_t + gamma * J_{t+1}; advantages are J - V,
optionally standardized per batch.
"""

from dataclasses import dataclass, field

import numpy as np

LOG_STD_MIN = float(np.log(1e-4))
LOG_STD_MAX = float(np.log(10.0))
LOG_2PI = float(np.log(2.0 * np.pi))


class NonFiniteGradientError(RuntimeError):
    pass


class ShapeMismatchError(ValueError):
    pass


@dataclass
class PpoHyperParams:
    hidden: tuple = (128, 128)
    lr_actor: float = 3e-4
    lr_critic: float = 1e-3
    gamma: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    minibatch: int = 64
    buffer_episodes: int = 4
    adv_standardize: bool = True
    log_std_init: float = 0.0
    entropy_coef: float = 0.0
    optimizer: str = "adam"
    lr_decay: str = "linear"

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must lie in (0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if self.lr_decay not in ("linear", "none"):
            raise ValueError("lr_decay must be 'linear' or 'none'")


# ------------------------------------------------------------------ networks

class Mlp:
    """Tanh MLP with a linear output head and hand-written backprop."""

    def __init__(self, sizes, rng, out_scale: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            w = rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in)
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))
        self.weights[-1] *= out_scale

    def forward(self, x):
        """Batch forward; returns (output (B, out), cache of activations)."""
        a = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cache = [a]
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            a = z if layer == last else np.tanh(z)
            cache.append(a)
        return a, cache

    def backward(self, cache, dout):
        """Gradients of sum(dout * output) w.r.t. all weights and biases."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = np.asarray(dout, dtype=np.float64)
        for layer in range(len(self.weights) - 1, -1, -1):
            a_prev = cache[layer]
            grads_w[layer] = delta.T @ a_prev
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer]) * (1.0 - cache[layer] ** 2)
        return grads_w, grads_b

    # flat-vector views used by finite-difference checks and checkpoints
    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in zip(self.weights, self.biases) for p in pair])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        offset = 0
        for i in range(len(self.weights)):
            for attr in (self.weights, self.biases):
                size = attr[i].size
                attr[i] = flat[offset:offset + size].reshape(attr[i].shape).copy()
                offset += size
        if offset != flat.size:
            raise ShapeMismatchError("flat parameter vector has the wrong length")


class GaussianPolicy:
    """Diagonal Gaussian over raw actions: mean from an MLP, learned log-std."""

    def __init__(self, state_dim, action_dim, hidden, rng, log_std_init=0.0):
        self.mlp = Mlp((state_dim,) + tuple(hidden) + (action_dim,), rng, out_scale=0.01)
        self.log_std = np.full(action_dim, float(log_std_init))

    @property
    def action_dim(self) -> int:
        return self.log_std.shape[0]

    def std(self) -> np.ndarray:
        return np.exp(np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX))

    def mean(self, states):
        out, _ = self.mlp.forward(states)
        return out

    def sample(self, state, rng):
        """One action plus its log-probability under the current parameters."""
        mu = self.mean(state[None, :])[0]
        sigma = self.std()
        action = mu + sigma * rng.standard_normal(self.action_dim)
        return action, float(self._log_prob_single(mu, sigma, action))

    @staticmethod
    def _log_prob_single(mu, sigma, action):
        z = (action - mu) / sigma
        return -0.5 * np.sum(z**2) - np.sum(np.log(sigma)) - 0.5 * LOG_2PI * len(mu)

    def log_prob(self, states, actions):
        """Batch log-probs; returns (logp (B,), cache for backprop)."""
        mu, cache = self.mlp.forward(states)
        sigma = self.std()
        z = (np.atleast_2d(actions) - mu) / sigma
        logp = -0.5 * np.sum(z**2, axis=1) - np.sum(np.log(sigma)) \
            - 0.5 * LOG_2PI * self.action_dim
        return logp, (cache, z, sigma)

    def log_prob_grads(self, lp_cache, dlogp):
        """Gradients of sum(dlogp * logp) w.r.t. (mlp params, log_std).

        dlogp/dmu = z / sigma; dlogp/dlog_std = z^2 - 1 (masked where the
        log-std clamp is active so gradients match the clamped loss).
        """
        cache, z, sigma = lp_cache
        dlogp = np.asarray(dlogp, dtype=np.float64)[:, None]
        dmu = dlogp * z / sigma
        grads_w, grads_b = self.mlp.backward(cache, dmu)
        active = (self.log_std > LOG_STD_MIN) & (self.log_std < LOG_STD_MAX)
        dlog_std = np.sum(dlogp * (z**2 - 1.0), axis=0) * active
        return grads_w, grads_b, dlog_std

    def get_flat(self):
        return np.concatenate([self.mlp.get_flat(), self.log_std])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        self.mlp.set_flat(flat[:-self.action_dim])
        self.log_std = flat[-self.action_dim:].copy()


# -------------------------------------------------------------------- losses

def rewards_to_go(rewards, gamma: float):
    """Suffix-discounted returns J_t = r_t + gamma * J_{t+1} for one episode."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.zeros_like(rewards)
    acc = 0.0
    for t in range(rewards.shape[0] - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def rewards_to_go_segments(rewards, dones, gamma: float):
    """Per-episode rewards-to-go over a buffer with episode-end flags."""
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    if rewards.shape != dones.shape:
        raise ValueError("rewards and dones must have equal length")
    out = np.zeros_like(rewards)
    acc = 0.0
    for t in range(rewards.shape[0] - 1, -1, -1):
        if dones[t]:
            acc = 0.0
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def advantages(j, values, standardize: bool = False):
    """A = J - V, optionally standardized to zero mean / unit variance."""
    j = np.asarray(j, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if j.shape != values.shape:
        raise ValueError("rewards-to-go and values must have equal length")
    adv = j - values
    if standardize:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv


def clip_loss(policy: GaussianPolicy, states, actions, logp_old, adv, eps: float) -> float:
    """Negative clipped surrogate (minimization form of L^CLIP)."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    logp, _ = policy.log_prob(states, actions)
    ratio = np.exp(logp - np.asarray(logp_old, dtype=np.float64))
    adv = np.asarray(adv, dtype=np.float64)
    surrogate = np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)
    return float(-np.sum(surrogate))


def clip_loss_and_grads(policy: GaussianPolicy, states, actions, logp_old, adv, eps: float):
    """Loss plus analytic gradients w.r.t. (mlp weights, biases, log_std).

    The min picks the unclipped branch wherever it is not strictly worse, so
    the per-sample gradient w.r.t. logp is -ratio*A there and zero where the
    clipped branch saturates.
    """
    logp, lp_cache = policy.log_prob(states, actions)
    ratio = np.exp(logp - np.asarray(logp_old, dtype=np.float64))
    adv = np.asarray(adv, dtype=np.float64)
    surr_raw = ratio * adv
    surr_clip = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    loss = float(-np.sum(np.minimum(surr_raw, surr_clip)))
    dlogp = np.where(surr_raw <= surr_clip, -surr_raw, 0.0)
    grads_w, grads_b, dlog_std = policy.log_prob_grads(lp_cache, dlogp)
    return loss, (grads_w, grads_b, dlog_std)


def value_loss(critic: Mlp, states, targets) -> float:
    """Sum of squared residuals L^VF = sum (V(s) - J)^2."""
    v, _ = critic.forward(states)
    residual = v[:, 0] - np.asarray(targets, dtype=np.float64)
    return float(np.sum(residual**2))


def value_loss_and_grads(critic: Mlp, states, targets):
    v, cache = critic.forward(states)
    residual = v[:, 0] - np.asarray(targets, dtype=np.float64)
    loss = float(np.sum(residual**2))
    grads_w, grads_b = critic.backward(cache, 2.0 * residual[:, None])
    return loss, (grads_w, grads_b)


def entropy_bonus_grads(policy: GaussianPolicy, batch_size: int, coef: float):
    """Gradient of -coef * sum_b H(pi) w.r.t. log_std (mean head untouched)."""
    active = (policy.log_std > LOG_STD_MIN) & (policy.log_std < LOG_STD_MAX)
    return -coef * batch_size * active.astype(np.float64)


# ----------------------------------------------------------------- optimizer

class Adam:
    """Standard Adam on a list of parameter arrays, written out by hand."""

    def __init__(self, params, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads, lr_scale: float = 1.0):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g**2
            p -= self.lr * lr_scale * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


class Sgd:
    """Plain gradient descent with a fixed step size."""

    def __init__(self, params, lr: float):
        self.params = params
        self.lr = lr

    def step(self, grads, lr_scale: float = 1.0):
        for p, g in zip(self.params, grads):
            p -= self.lr * lr_scale * g


def _make_optimizer(kind, params, lr):
    return Adam(params, lr) if kind == "adam" else Sgd(params, lr)


# ------------------------------------------------------------------- buffers

@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    logp: float
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class RolloutBuffer:
    capacity: int
    items: list = field(default_factory=list)

    def add(self, transition: Transition):
        self.items.append(transition)

    def __len__(self):
        return len(self.items)

    @property
    def full(self) -> bool:
        return len(self.items) >= self.capacity

    def clear(self):
        self.items.clear()

    def arrays(self):
        states = np.stack([t.state for t in self.items])
        actions = np.stack([t.action for t in self.items])
        logp = np.array([t.logp for t in self.items])
        rewards = np.array([t.reward for t in self.items])
        dones = np.array([t.done for t in self.items])
        return states, actions, logp, rewards, dones


# --------------------------------------------------------------------- agent

class PpoAgent:
    """One coalition's actor-critic pair plus its update rule."""

    def __init__(self, state_dim: int, act_dim: int, hp: PpoHyperParams, rng):
        self.hp = hp
        self.state_dim = state_dim
        self.act_dim = act_dim
        self.policy = GaussianPolicy(state_dim, act_dim, hp.hidden, rng, hp.log_std_init)
        self.critic = Mlp((state_dim,) + tuple(hp.hidden) + (1,), rng)
        self._actor_opt = _make_optimizer(
            hp.optimizer, self.policy.mlp.weights + self.policy.mlp.biases + [self.policy.log_std],
            hp.lr_actor)
        self._critic_opt = _make_optimizer(
            hp.optimizer, self.critic.weights + self.critic.biases, hp.lr_critic)
        self.updates_done = 0

    def act(self, state, rng):
        return self.policy.sample(np.asarray(state, dtype=np.float64), rng)

    def act_deterministic(self, state):
        return self.policy.mean(np.asarray(state, dtype=np.float64)[None, :])[0]

    def value(self, state) -> float:
        v, _ = self.critic.forward(np.asarray(state, dtype=np.float64)[None, :])
        return float(v[0, 0])

    def update(self, buffer: RolloutBuffer, rng, lr_scale: float = 1.0) -> dict:
        """E epochs of minibatch descent on the clip and value losses.

        ``lr_scale`` implements the training-length learning-rate schedule
        (linear annealing by default at the pipeline level).
        """
        if not buffer.full:
            raise ValueError("update requires a full rollout buffer")
        states, actions, logp_old, rewards, dones = buffer.arrays()
        if not (np.all(np.isfinite(rewards)) and np.all(np.isfinite(states))):
            raise NonFiniteGradientError("non-finite rollout data; update aborted")
        j = rewards_to_go_segments(rewards, dones, self.hp.gamma)
        v, _ = self.critic.forward(states)
        adv = advantages(j, v[:, 0], standardize=self.hp.adv_standardize)

        n = states.shape[0]
        batch = min(self.hp.minibatch, n)
        actor_losses, critic_losses = [], []
        for _ in range(self.hp.epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch):
                idx = order[start:start + batch]
                loss_a, (gw, gb, gls) = clip_loss_and_grads(
                    self.policy, states[idx], actions[idx], logp_old[idx], adv[idx],
                    self.hp.clip_eps)
                if self.hp.entropy_coef > 0.0:
                    gls = gls + entropy_bonus_grads(self.policy, idx.size, self.hp.entropy_coef)
                actor_grads = gw + gb + [gls]
                loss_c, (cw, cb) = value_loss_and_grads(self.critic, states[idx], j[idx])
                critic_grads = cw + cb
                for g in actor_grads + critic_grads:
                    if not np.all(np.isfinite(g)):
                        raise NonFiniteGradientError("non-finite gradient; update aborted")
                self._actor_opt.step(actor_grads, lr_scale)
                np.clip(self.policy.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.policy.log_std)
                self._critic_opt.step(critic_grads, lr_scale)
                actor_losses.append(loss_a)
                critic_losses.append(loss_c)
        self.updates_done += 1
        return {
            "actor_loss": float(np.mean(actor_losses)),
            "critic_loss": float(np.mean(critic_losses)),
            "mean_abs_adv": float(np.mean(np.abs(adv))),
            "log_std_mean": float(np.mean(self.policy.log_std)),
        }


# -------------------------------------------------------------- checkpoints

CHECKPOINT_VERSION = 1


def save_agent(path, agent: PpoAgent, config_hash: str):
    """Versioned npz checkpoint with explicit shape metadata."""
    payload = {
        "version": np.array(CHECKPOINT_VERSION),
        "config_hash": np.array(config_hash),
        "state_dim": np.array(agent.state_dim),
        "act_dim": np.array(agent.act_dim),
        "hidden": np.array(agent.hp.hidden),
        "log_std": agent.policy.log_std,
    }
    for i, (w, b) in enumerate(zip(agent.policy.mlp.weights, agent.policy.mlp.biases)):
        payload[f"actor_w{i}"] = w
        payload[f"actor_b{i}"] = b
    for i, (w, b) in enumerate(zip(agent.critic.weights, agent.critic.biases)):
        payload[f"critic_w{i}"] = w
        payload[f"critic_b{i}"] = b
    np.savez(path, **payload)


def load_agent(path, state_dim: int, act_dim: int, hp: PpoHyperParams,
               expected_config_hash: str = None) -> PpoAgent:
    """Rebuild an agent, rejecting any checkpoint with mismatched shapes."""
    data = np.load(path, allow_pickle=False)
    if int(data["version"]) != CHECKPOINT_VERSION:
        raise ShapeMismatchError(f"unsupported checkpoint version {int(data['version'])}")
    if int(data["state_dim"]) != state_dim or int(data["act_dim"]) != act_dim:
        raise ShapeMismatchError(
            f"checkpoint dims ({int(data['state_dim'])}, {int(data['act_dim'])}) "
            f"do not match requested ({state_dim}, {act_dim})")
    if tuple(int(h) for h in data["hidden"]) != tuple(hp.hidden):
        raise ShapeMismatchError("checkpoint hidden sizes do not match configuration")
    if expected_config_hash is not None and str(data["config_hash"]) != expected_config_hash:
        raise ShapeMismatchError("checkpoint was produced under a different configuration")
    agent = PpoAgent(state_dim, act_dim, hp, np.random.default_rng(0))
    # copy into the existing arrays so the optimizers keep their references
    for i in range(len(agent.policy.mlp.weights)):
        w, b = data[f"actor_w{i}"], data[f"actor_b{i}"]
        if w.shape != agent.policy.mlp.weights[i].shape:
            raise ShapeMismatchError(f"actor layer {i} shape mismatch")
        agent.policy.mlp.weights[i][...] = w
        agent.policy.mlp.biases[i][...] = b
    agent.policy.log_std[...] = data["log_std"]
    for i in range(len(agent.critic.weights)):
        w, b = data[f"critic_w{i}"], data[f"critic_b{i}"]
        if w.shape != agent.critic.weights[i].shape:
            raise ShapeMismatchError(f"critic layer {i} shape mismatch")
        agent.critic.weights[i][...] = w
        agent.critic.biases[i][...] = b
    return agent


# --------------------------------------------------- finite-difference check

def finite_difference_grad(loss_fn, flat_params: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of loss_fn(flat) at flat_params."""
    grad = np.zeros_like(flat_params)
    for i in range(flat_params.size):
        bumped = flat_params.copy()
        bumped[i] += h
        hi = loss_fn(bumped)
        bumped[i] -= 2 * h
        lo = loss_fn(bumped)
        grad[i] = (hi - lo) / (2.0 * h)
    return grad

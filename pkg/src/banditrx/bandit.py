"""Mixed-action soft-actor-critic contextual bandit.

The policy factorizes as pi(a|s) = pi(d1|s) pi(d2|s) pi(x|s): two
Bernoulli factors for the binary lifestyle flags and 11 unsquashed
Gaussians for the continuous prescriptions, all heads fed by one trunk
MLP over the encoded state. Two critics regress Q(s, a) to the one-step
target, which is exactly the reward because the discount is pinned to 0;
target copies are kept and soft-updated even though the zero discount
makes them inert. The actor descends E[alpha * log pi - min(Q1, Q2)].

Gradient estimation is pathwise throughout: continuous dimensions are
reparameterized (x = mu + sigma * eps), and the Bernoulli dimensions use
a temperature-1 logistic relaxation for every differentiable path while
the reported log-probabilities always use the exact hard-sample mass.
The hard sample d = [relaxed >= 1/2] is exactly Bernoulli(p) because the
relaxation shares the same uniform draw.

The policy's Gaussian heads live in encoder-standardized action
coordinates; raw units appear only at the recommend boundary.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .aggregate import Sample, sample_matrices
from .core import FeatureSchema
from .envmodel import Encoder, EnvModel, predict_from_encoded
from .errors import BanditrxError, ConfigError, NumericError
from .numeric import (Gradients, MlpModel, backward, forward_cache, mlp_forward,
                      mlp_gradient, mlp_init, model_from_dict, model_to_dict,
                      optimizer_init, optimizer_step)
from .reward import DOMAIN_FLOOR, MagniParams, magni_risk

log = logging.getLogger(__name__)

LOGSTD_MIN, LOGSTD_MAX = -5.0, 2.0
RELAX_TEMPERATURE = 1.0
LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SacConfig:
    alpha: float = 0.2
    gamma: float = 0.0
    batch_size: int = 256
    iterations: int = 1000
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    tau: float = 0.005
    seed: int = 0
    runs: int = 100
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if self.gamma != 0.0:
            raise ConfigError(
                "discount must be 0: the one-step bandit has no successor state")
        if self.alpha < 0:
            raise ConfigError(f"entropy temperature must be >= 0, got {self.alpha}")
        if self.batch_size < 1 or self.iterations < 0 or self.runs < 1:
            raise ConfigError("batch_size >= 1, iterations >= 0, runs >= 1 required")
        if not 0 < self.tau <= 1:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "gamma": self.gamma, "batch_size": self.batch_size,
                "iterations": self.iterations, "lr_actor": self.lr_actor,
                "lr_critic": self.lr_critic, "tau": self.tau, "seed": self.seed,
                "runs": self.runs, "hidden": list(self.hidden)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SacConfig":
        kwargs = dict(d)
        if "hidden" in kwargs:
            kwargs["hidden"] = tuple(int(h) for h in kwargs["hidden"])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "SacConfig":
        with open(path) as f:
            doc = json.load(f)
        return cls.from_dict(doc.get("sac", doc))


# ---------------------------------------------------------------------------
# Policy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActorPolicy:
    """Trunk MLP plus the mixed head layout.

    Head vector order: [two logits per binary dim] [means] [log-stddevs].
    Continuous bounds are the schema action ranges transformed into the
    encoder's standardized coordinates.
    """

    mlp: MlpModel
    binary_names: tuple[str, ...]
    cont_names: tuple[str, ...]
    binary_slots: tuple[int, ...]      # positions inside the encoded action vector
    cont_slots: tuple[int, ...]
    clamp_lo: np.ndarray               # (n_cont,) standardized
    clamp_hi: np.ndarray
    schema_fingerprint: str

    @property
    def n_binary(self) -> int:
        return len(self.binary_names)

    @property
    def n_cont(self) -> int:
        return len(self.cont_names)

    @property
    def action_dim(self) -> int:
        return self.n_binary + self.n_cont


def init_actor(encoder: Encoder, schema: FeatureSchema,
               hidden: tuple[int, ...] = (64, 64), seed: int = 0) -> ActorPolicy:
    binary_names, cont_names = [], []
    binary_slots, cont_slots = [], []
    clamp_lo, clamp_hi = [], []
    for slot, codec in enumerate(encoder.action_codecs):
        feat = schema.feature(codec.name)
        if codec.mode == "binary":
            binary_names.append(codec.name)
            binary_slots.append(slot)
        elif codec.mode == "continuous":
            cont_names.append(codec.name)
            cont_slots.append(slot)
            clamp_lo.append((feat.kind.low - codec.mean) / codec.std)
            clamp_hi.append((feat.kind.high - codec.mean) / codec.std)
        else:
            raise ConfigError(
                f"policy supports binary and continuous action features only; "
                f"{codec.name!r} is {codec.mode}")
    n_heads = 2 * len(binary_names) + 2 * len(cont_names)
    sizes = (encoder.state_dim, *hidden, n_heads)
    activations = tuple(["relu"] * len(hidden) + ["identity"])
    return ActorPolicy(mlp_init(sizes, activations, seed=seed),
                       tuple(binary_names), tuple(cont_names),
                       tuple(binary_slots), tuple(cont_slots),
                       np.array(clamp_lo), np.array(clamp_hi),
                       encoder.schema_fingerprint)


@dataclass(frozen=True)
class ActorForward:
    p: np.ndarray          # (B, nb) probability of d = 1
    delta: np.ndarray      # (B, nb) logit difference z1 - z0
    mu: np.ndarray         # (B, nc)
    sigma: np.ndarray      # (B, nc)
    logstd: np.ndarray     # (B, nc) after clamping
    logstd_mask: np.ndarray  # True where the clamp is inactive
    cache: tuple           # trunk forward cache for backprop


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def actor_forward(policy: ActorPolicy, state_enc: np.ndarray) -> ActorForward:
    """Head parameters for a batch of encoded states.

    The two logits per binary dimension pass through a two-way softmax,
    which reduces to a sigmoid of the logit difference.
    """
    state_enc = np.atleast_2d(state_enc)
    out, cache = forward_cache(policy.mlp, state_enc)
    if not np.all(np.isfinite(out)):
        raise NumericError("actor network produced non-finite head outputs")
    nb, nc = policy.n_binary, policy.n_cont
    z = out[:, :2 * nb].reshape(out.shape[0], nb, 2)
    delta = z[:, :, 1] - z[:, :, 0]
    p = _sigmoid(delta)
    mu = out[:, 2 * nb:2 * nb + nc]
    raw = out[:, 2 * nb + nc:]
    logstd = np.clip(raw, LOGSTD_MIN, LOGSTD_MAX)
    mask = (raw > LOGSTD_MIN) & (raw < LOGSTD_MAX)
    return ActorForward(p, delta, mu, np.exp(logstd), logstd, mask, cache)


@dataclass(frozen=True)
class ActorNoise:
    u: np.ndarray      # (B, nb) uniforms for the Bernoulli/logistic path
    eps: np.ndarray    # (B, nc) standard normals


def draw_actor_noise(rng: np.random.Generator, batch: int, n_binary: int,
                     n_cont: int) -> ActorNoise:
    u = np.clip(rng.uniform(size=(batch, n_binary)), 1e-12, 1 - 1e-12)
    eps = rng.standard_normal((batch, n_cont))
    return ActorNoise(u, eps)


def _bernoulli_log_mass(delta: np.ndarray, d: np.ndarray) -> np.ndarray:
    # log p = -softplus(-delta), log(1-p) = -softplus(delta)
    return -(d * np.logaddexp(0.0, -delta) + (1.0 - d) * np.logaddexp(0.0, delta))


@dataclass(frozen=True)
class SampledAction:
    d: np.ndarray              # (B, nb) hard {0,1} samples
    d_relaxed: np.ndarray      # (B, nb) logistic relaxation in (0,1)
    x: np.ndarray              # (B, nc) pre-clamp Gaussian draws (standardized)
    x_clamped: np.ndarray      # (B, nc) range-clamped draws
    factor_log_probs: np.ndarray  # (B, nb + nc) per-dimension factors
    log_prob: np.ndarray       # (B,) sum of the factors
    encoded: np.ndarray        # (B, action_dim) critic/env action encoding


def _assemble_encoded(policy: ActorPolicy, cont: np.ndarray, binary: np.ndarray
                      ) -> np.ndarray:
    out = np.empty((cont.shape[0], policy.action_dim))
    out[:, list(policy.cont_slots)] = cont
    out[:, list(policy.binary_slots)] = binary
    return out


def _factors_and_total(delta, d, x, mu, sigma, logstd):
    bern = _bernoulli_log_mass(delta, d)
    gauss = -0.5 * ((x - mu) / sigma) ** 2 - logstd - 0.5 * LOG_2PI
    factors = np.concatenate([bern, gauss], axis=1)
    return factors, factors.sum(axis=1)


def sample_action(policy: ActorPolicy, state_enc: np.ndarray,
                  rng: np.random.Generator) -> SampledAction:
    """Draw one action per state.

    The logistic noise L = log u - log(1-u) drives both the relaxed value
    sigmoid(delta + L) and the hard sample [relaxed >= 1/2]; the threshold
    event has probability exactly sigmoid(delta) = p. Log-probabilities
    are the exact Bernoulli masses plus the pre-clamp Gaussian densities.
    """
    state_enc = np.atleast_2d(state_enc)
    fw = actor_forward(policy, state_enc)
    noise = draw_actor_noise(rng, state_enc.shape[0], policy.n_binary, policy.n_cont)
    return _sample_with_noise(policy, fw, noise)


def _sample_with_noise(policy: ActorPolicy, fw: ActorForward,
                       noise: ActorNoise) -> SampledAction:
    ell = np.log(noise.u) - np.log1p(-noise.u)
    d_relaxed = _sigmoid((fw.delta + ell) / RELAX_TEMPERATURE)
    d = (d_relaxed >= 0.5).astype(np.float64)
    x = fw.mu + fw.sigma * noise.eps
    x_clamped = np.clip(x, policy.clamp_lo[None, :], policy.clamp_hi[None, :])
    factors, total = _factors_and_total(fw.delta, d, x, fw.mu, fw.sigma, fw.logstd)
    encoded = _assemble_encoded(policy, x_clamped, d)
    return SampledAction(d, d_relaxed, x, x_clamped, factors, total, encoded)


def log_prob(policy: ActorPolicy, state_enc: np.ndarray, d: np.ndarray,
             x: np.ndarray) -> np.ndarray:
    """Log-probability of hard binary samples d and pre-clamp continuous
    draws x; bitwise identical to the sum sample_action reports because it
    shares the factor computation."""
    fw = actor_forward(policy, np.atleast_2d(state_enc))
    _, total = _factors_and_total(fw.delta, np.atleast_2d(d), np.atleast_2d(x),
                                  fw.mu, fw.sigma, fw.logstd)
    return total


def log_prob_factors(policy: ActorPolicy, state_enc: np.ndarray, d: np.ndarray,
                     x: np.ndarray) -> np.ndarray:
    fw = actor_forward(policy, np.atleast_2d(state_enc))
    factors, _ = _factors_and_total(fw.delta, np.atleast_2d(d), np.atleast_2d(x),
                                    fw.mu, fw.sigma, fw.logstd)
    return factors


# ---------------------------------------------------------------------------
# Critics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CriticPair:
    q1: MlpModel
    q2: MlpModel
    target1: MlpModel
    target2: MlpModel
    tau: float = 0.005

    def __post_init__(self):
        for live, tgt in ((self.q1, self.target1), (self.q2, self.target2)):
            if live.sizes != tgt.sizes:
                raise ConfigError("target critic must be shape-identical to its live critic")


def init_critics(encoder: Encoder, hidden: tuple[int, ...] = (64, 64),
                 seed: int = 0, tau: float = 0.005) -> CriticPair:
    in_dim = encoder.state_dim + encoder.action_dim
    sizes = (in_dim, *hidden, 1)
    activations = tuple(["relu"] * len(hidden) + ["identity"])
    ss = np.random.SeedSequence(seed)
    s1, s2 = (int(c.generate_state(1)[0]) for c in ss.spawn(2))
    q1 = mlp_init(sizes, activations, seed=s1)
    q2 = mlp_init(sizes, activations, seed=s2)
    return CriticPair(q1, q2, q1, q2, tau)


def one_step_target(r: np.ndarray | float, gamma: float,
                    next_min_q: np.ndarray | float = 0.0,
                    next_log_pi: np.ndarray | float = 0.0,
                    alpha: float = 0.2) -> np.ndarray | float:
    """y = r + gamma * (min target-Q - alpha * log pi) at the successor.

    With gamma = 0 every successor term vanishes and y = r exactly,
    whatever dummy next-state values are supplied.
    """
    return r + gamma * (next_min_q - alpha * next_log_pi)


def critic_values(critics: CriticPair, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return mlp_forward(critics.q1, x)[:, 0], mlp_forward(critics.q2, x)[:, 0]


def critic_loss(critics: CriticPair, x: np.ndarray, r: np.ndarray
                ) -> tuple[float, float]:
    """L_i = mean over the batch of (1/2)(Q_i(s,a) - r)^2 with y = r."""
    q1, q2 = critic_values(critics, x)
    return (float(np.mean(0.5 * (q1 - r) ** 2)),
            float(np.mean(0.5 * (q2 - r) ** 2)))


def _critic_gradients(model: MlpModel, x: np.ndarray, r: np.ndarray
                      ) -> tuple[Gradients, float]:
    grads, sq = mlp_gradient(model, x, r[:, None])
    return grads.scaled(0.5), 0.5 * sq


def soft_update(critics: CriticPair) -> CriticPair:
    """theta_bar <- tau * theta + (1 - tau) * theta_bar (inert under gamma=0
    but retained so the structure matches the two-critic template)."""
    def blend(live: MlpModel, tgt: MlpModel) -> MlpModel:
        tau = critics.tau
        weights = tuple(tau * w + (1 - tau) * tw for w, tw in zip(live.weights, tgt.weights))
        biases = tuple(tau * b + (1 - tau) * tb for b, tb in zip(live.biases, tgt.biases))
        return replace(live, weights=weights, biases=biases)
    return replace(critics, target1=blend(critics.q1, critics.target1),
                   target2=blend(critics.q2, critics.target2))


# ---------------------------------------------------------------------------
# Actor loss
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActorLossParts:
    value: float            # mean(alpha * exact log pi - min Q) as reported
    relaxed_value: float    # same with the relaxed Bernoulli mass (gradient target)
    mean_log_prob: float    # batch mean of the exact log pi
    mean_min_q: float
    grads: Gradients        # d(relaxed_value)/d(policy parameters)


def actor_loss_parts(policy: ActorPolicy, critics: CriticPair, state_enc: np.ndarray,
                     alpha: float, noise: ActorNoise) -> ActorLossParts:
    """One fused actor evaluation: loss values and the pathwise gradient.

    The critics consume the clamped continuous draws and the relaxed binary
    values, so every input is differentiable in the policy parameters. The
    reported loss swaps in the exact Bernoulli mass; the Q term is shared,
    which is what makes the loss exactly linear in alpha at fixed draws.
    """
    state_enc = np.atleast_2d(state_enc)
    batch = state_enc.shape[0]
    fw = actor_forward(policy, state_enc)
    sa = _sample_with_noise(policy, fw, noise)
    nb, nc = policy.n_binary, policy.n_cont

    critic_in = np.concatenate(
        [state_enc, _assemble_encoded(policy, sa.x_clamped, sa.d_relaxed)], axis=1)
    q1, cache1 = forward_cache(critics.q1, critic_in)
    q2, cache2 = forward_cache(critics.q2, critic_in)
    q1, q2 = q1[:, 0], q2[:, 0]
    use_q1 = q1 <= q2                      # ties resolve to the first critic
    qmin = np.where(use_q1, q1, q2)

    exact_logp = sa.log_prob
    relaxed_mass = (sa.d_relaxed * -np.logaddexp(0.0, -fw.delta)
                    + (1.0 - sa.d_relaxed) * -np.logaddexp(0.0, fw.delta))
    gauss_logp = sa.factor_log_probs[:, nb:].sum(axis=1) if nc else np.zeros(batch)
    relaxed_logp = relaxed_mass.sum(axis=1) + gauss_logp

    value = float(np.mean(alpha * exact_logp - qmin))
    relaxed_value = float(np.mean(alpha * relaxed_logp - qmin))
    if not (np.isfinite(value) and np.isfinite(relaxed_value)):
        raise NumericError("non-finite actor loss")

    # dL/dQmin = -1/B through whichever critic attains the minimum.
    go1 = (-(use_q1.astype(np.float64)) / batch)[:, None]
    go2 = (-((~use_q1).astype(np.float64)) / batch)[:, None]
    _, gi1 = backward(critics.q1, cache1, go1)
    _, gi2 = backward(critics.q2, cache2, go2)
    g_action = (gi1 + gi2)[:, state_enc.shape[1]:]

    # Route the action-input gradient into the head outputs.
    g_x = g_action[:, list(policy.cont_slots)]
    clamp_pass = (sa.x > policy.clamp_lo[None, :]) & (sa.x < policy.clamp_hi[None, :])
    g_x = g_x * clamp_pass
    g_mu = g_x
    g_logstd = g_x * fw.sigma * noise.eps
    # Entropy term: reparameterized Gaussian log-density has total derivative
    # 0 in mu and -1 in log-sigma, so only log-sigma picks up alpha.
    g_logstd = g_logstd - alpha / batch
    g_logstd = g_logstd * fw.logstd_mask

    g_drelaxed = g_action[:, list(policy.binary_slots)]
    relax_slope = sa.d_relaxed * (1.0 - sa.d_relaxed) / RELAX_TEMPERATURE
    # d(relaxed mass)/d(delta) = (d_relaxed - p) + slope * delta
    g_delta = (alpha / batch) * ((sa.d_relaxed - fw.p) + relax_slope * fw.delta) \
        + g_drelaxed * relax_slope

    head = np.zeros((batch, policy.mlp.sizes[-1]))
    z_grad = np.stack([-g_delta, g_delta], axis=2).reshape(batch, 2 * nb)
    head[:, :2 * nb] = z_grad
    head[:, 2 * nb:2 * nb + nc] = g_mu
    head[:, 2 * nb + nc:] = g_logstd

    grads, _ = backward(policy.mlp, fw.cache, head)
    return ActorLossParts(value, relaxed_value, float(exact_logp.mean()),
                          float(qmin.mean()), grads)


def actor_loss(policy: ActorPolicy, critics: CriticPair, state_enc: np.ndarray,
               alpha: float, rng: np.random.Generator) -> float:
    """Reported actor loss mean(alpha * log pi - min Q) on fresh draws."""
    state_enc = np.atleast_2d(state_enc)
    noise = draw_actor_noise(rng, state_enc.shape[0], policy.n_binary, policy.n_cont)
    return actor_loss_parts(policy, critics, state_enc, alpha, noise).value


def actor_relaxed_value(policy: ActorPolicy, critics: CriticPair, state_enc: np.ndarray,
                        alpha: float, noise: ActorNoise) -> float:
    """The differentiable surrogate scalar whose analytic gradient
    actor_loss_parts returns; finite-difference checks target this."""
    return actor_loss_parts(policy, critics, state_enc, alpha, noise).relaxed_value


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainHistory:
    critic1: list[float] = field(default_factory=list)
    critic2: list[float] = field(default_factory=list)
    actor: list[float] = field(default_factory=list)
    mean_reward: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.mean_reward)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "critic1", "critic2", "actor", "mean_reward"])
        for i in range(len(self)):
            w.writerow([i, repr(float(self.critic1[i])), repr(float(self.critic2[i])),
                        repr(float(self.actor[i])), repr(float(self.mean_reward[i]))])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


def _reward_of_glucose(glucose: np.ndarray, params: MagniParams) -> np.ndarray:
    # an untrained simulator can emit non-physical glucose; floor it at the
    # reward domain floor instead of erroring out mid-run
    return -magni_risk(np.maximum(glucose, DOMAIN_FLOOR), params)


def train(samples: Sequence[Sample], env: EnvModel, cfg: SacConfig,
          schema: FeatureSchema | None = None,
          reward_params: MagniParams | None = None,
          ) -> tuple[ActorPolicy, CriticPair, TrainHistory]:
    """Offline SAC loop: states come from the sample set, actions from the
    actor, glucose from the environment model, and rewards from the risk
    score. Critics regress to r; the actor ascends min-Q plus entropy.
    Fully deterministic for a given config seed.
    """
    if not samples:
        raise ValueError("training needs a non-empty sample set")
    if schema is None:
        from .core import default_schema
        schema = default_schema()
    if schema.fingerprint() != env.schema_fingerprint:
        raise ConfigError("environment model was trained under a different schema")
    params = reward_params or MagniParams()
    states, _, _ = sample_matrices(samples)
    encoder = env.encoder
    state_enc = encoder.encode_state(states)

    ss = np.random.SeedSequence(cfg.seed)
    s_actor, s_critic, s_loop = ss.spawn(3)
    policy = init_actor(encoder, schema, cfg.hidden, seed=int(s_actor.generate_state(1)[0]))
    critics = init_critics(encoder, cfg.hidden, seed=int(s_critic.generate_state(1)[0]),
                           tau=cfg.tau)
    rng = np.random.default_rng(s_loop)

    opt_actor = optimizer_init(policy.mlp, lr=cfg.lr_actor)
    opt_q1 = optimizer_init(critics.q1, lr=cfg.lr_critic)
    opt_q2 = optimizer_init(critics.q2, lr=cfg.lr_critic)
    history = TrainHistory()
    n = state_enc.shape[0]

    for it in range(cfg.iterations):
        idx = rng.integers(0, n, size=cfg.batch_size)
        sb = state_enc[idx]

        # actor proposes; environment predicts; reward scores
        sa = sample_action(policy, sb, rng)
        x_env = np.concatenate([sb, sa.encoded], axis=1)
        glucose = predict_from_encoded(env, x_env)
        r = _reward_of_glucose(glucose, params)

        # critics regress to the one-step target y = r
        y = one_step_target(r, cfg.gamma)
        g1, l1 = _critic_gradients(critics.q1, x_env, y)
        g2, l2 = _critic_gradients(critics.q2, x_env, y)
        if not (np.isfinite(l1) and np.isfinite(l2)):
            raise NumericError(f"non-finite critic loss at iteration {it}")
        new_q1, opt_q1 = optimizer_step(critics.q1, g1, opt_q1)
        new_q2, opt_q2 = optimizer_step(critics.q2, g2, opt_q2)
        critics = replace(critics, q1=new_q1, q2=new_q2)

        # actor ascends min-Q plus entropy on a fresh draw
        noise = draw_actor_noise(rng, cfg.batch_size, policy.n_binary, policy.n_cont)
        parts = actor_loss_parts(policy, critics, sb, cfg.alpha, noise)
        new_mlp, opt_actor = optimizer_step(policy.mlp, parts.grads, opt_actor)
        policy = replace(policy, mlp=new_mlp)

        critics = soft_update(critics)
        history.critic1.append(l1)
        history.critic2.append(l2)
        history.actor.append(parts.value)
        history.mean_reward.append(float(r.mean()))

    return policy, critics, history


# ---------------------------------------------------------------------------
# Recommendation and evaluation
# ---------------------------------------------------------------------------

def recommend(policy: ActorPolicy, encoder: Encoder, schema: FeatureSchema,
              state: np.ndarray, mode: str = "deterministic",
              rng: np.random.Generator | None = None) -> dict[str, float | int]:
    """Schema-valid action for one raw state.

    deterministic: d_i = [p_i >= 1/2], x_j = clamp(mu_j). stochastic:
    a fresh sample. Values come back in raw feature units keyed by name.
    """
    if encoder.schema_fingerprint != policy.schema_fingerprint:
        raise ConfigError("policy and encoder come from different schemas")
    if mode not in ("deterministic", "stochastic"):
        raise ValueError(f"unknown recommendation mode {mode!r}")
    state_enc = encoder.encode_state(np.atleast_2d(np.asarray(state, dtype=np.float64)))
    if mode == "deterministic":
        fw = actor_forward(policy, state_enc)
        x = np.clip(fw.mu, policy.clamp_lo[None, :], policy.clamp_hi[None, :])
        d = (fw.p >= 0.5).astype(np.float64)
        encoded = _assemble_encoded(policy, x, d)
    else:
        if rng is None:
            raise ValueError("stochastic mode needs an rng")
        encoded = sample_action(policy, state_enc, rng).encoded
    raw = encoder.decode_action(encoded)[0]
    out: dict[str, float | int] = {}
    for j, feat in enumerate(schema.action_features):
        if feat.kind.is_continuous:
            out[feat.name] = float(np.clip(raw[j], feat.kind.low, feat.kind.high))
        else:
            out[feat.name] = int(round(raw[j]))
    return out


@dataclass(frozen=True)
class EvalSummary:
    mean_reward: float
    std_reward: float
    min_reward: float
    max_reward: float
    n_states: int
    draws: int


def evaluate_policy(policy: ActorPolicy, env: EnvModel, states: np.ndarray,
                    reward_params: MagniParams | None = None,
                    rng: np.random.Generator | None = None,
                    draws: int = 16) -> EvalSummary:
    """Monte-Carlo policy value under the environment model."""
    if draws < 1:
        raise ValueError(f"draws must be >= 1, got {draws}")
    params = reward_params or MagniParams()
    rng = rng or np.random.default_rng(0)
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    state_enc = env.encoder.encode_state(states)
    rep = np.repeat(state_enc, draws, axis=0)
    sa = sample_action(policy, rep, rng)
    glucose = predict_from_encoded(env, np.concatenate([rep, sa.encoded], axis=1))
    rewards = _reward_of_glucose(glucose, params)
    return EvalSummary(float(rewards.mean()), float(rewards.std(ddof=0)),
                       float(rewards.min()), float(rewards.max()),
                       states.shape[0], draws)


# ---------------------------------------------------------------------------
# Multi-run bands
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiRunResult:
    histories: tuple[TrainHistory, ...]
    band_mean: np.ndarray
    band_min: np.ndarray
    band_max: np.ndarray

    def band_width(self, start: int, stop: int) -> float:
        """Mean max-min reward spread over the iteration window [start, stop)."""
        return float((self.band_max[start:stop] - self.band_min[start:stop]).mean())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "mean", "min", "max"])
        for i in range(self.band_mean.shape[0]):
            w.writerow([i, repr(float(self.band_mean[i])), repr(float(self.band_min[i])),
                        repr(float(self.band_max[i]))])
        return buf.getvalue()


def multi_run(samples: Sequence[Sample], env: EnvModel, cfg: SacConfig,
              runs: int | None = None, schema: FeatureSchema | None = None,
              reward_params: MagniParams | None = None) -> MultiRunResult:
    """Independent training runs under seeds spawned from the base seed,
    with per-iteration mean/min/max reward bands across runs."""
    n_runs = cfg.runs if runs is None else runs
    if n_runs < 1:
        raise ValueError(f"runs must be >= 1, got {n_runs}")
    children = np.random.SeedSequence(cfg.seed).spawn(n_runs)
    histories = []
    for i, child in enumerate(children):
        run_cfg = replace(cfg, seed=int(child.generate_state(1)[0]))
        try:
            _, _, hist = train(samples, env, run_cfg, schema=schema,
                               reward_params=reward_params)
        except BanditrxError as e:
            raise type(e)(f"run {i}: {e}") from e
        histories.append(hist)
    rewards = np.array([h.mean_reward for h in histories])  # (runs, iters)
    return MultiRunResult(tuple(histories), rewards.mean(axis=0),
                          rewards.min(axis=0), rewards.max(axis=0))


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_policy(policy: ActorPolicy, path: str | Path) -> None:
    doc = {"format": "banditrx-policy", "version": 1,
           "mlp": model_to_dict(policy.mlp),
           "binary_names": list(policy.binary_names),
           "cont_names": list(policy.cont_names),
           "binary_slots": list(policy.binary_slots),
           "cont_slots": list(policy.cont_slots),
           "clamp_lo": policy.clamp_lo.tolist(),
           "clamp_hi": policy.clamp_hi.tolist(),
           "schema_fingerprint": policy.schema_fingerprint}
    Path(path).write_text(json.dumps(doc))


def load_policy(path: str | Path) -> ActorPolicy:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"policy checkpoint not found: {p}")
    doc = json.loads(p.read_text())
    if doc.get("format") != "banditrx-policy":
        raise ConfigError(f"{p}: not a policy checkpoint")
    return ActorPolicy(model_from_dict(doc["mlp"]),
                       tuple(doc["binary_names"]), tuple(doc["cont_names"]),
                       tuple(int(s) for s in doc["binary_slots"]),
                       tuple(int(s) for s in doc["cont_slots"]),
                       np.array(doc["clamp_lo"]), np.array(doc["clamp_hi"]),
                       doc["schema_fingerprint"])


def save_critics(critics: CriticPair, path: str | Path) -> None:
    doc = {"format": "banditrx-critics", "version": 1, "tau": critics.tau,
           "q1": model_to_dict(critics.q1), "q2": model_to_dict(critics.q2),
           "target1": model_to_dict(critics.target1),
           "target2": model_to_dict(critics.target2)}
    Path(path).write_text(json.dumps(doc))


def load_critics(path: str | Path) -> CriticPair:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"critic checkpoint not found: {p}")
    doc = json.loads(p.read_text())
    if doc.get("format") != "banditrx-critics":
        raise ConfigError(f"{p}: not a critic checkpoint")
    return CriticPair(model_from_dict(doc["q1"]), model_from_dict(doc["q2"]),
                      model_from_dict(doc["target1"]), model_from_dict(doc["target2"]),
                      float(doc["tau"]))

"""Dense feed-forward networks with hand-written backpropagation.

Everything is float64. An Mlp caches its forward activations so a backward
call can produce exact reverse-mode gradients for all parameters plus the
gradient with respect to the input (needed to push value gradients through
actions). The policy network adds a squashed-Gaussian head pair on top of a
shared trunk: it emits a mean and a clamped log standard deviation, samples
with reparameterized noise, and squashes through a sigmoid so actions stay
in (0, 1).
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K

RELU = "relu"
LINEAR = "linear"
ACTIVATIONS = (RELU, LINEAR)

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0

# Additive floor inside the squash-correction logarithm; keeps log
# probabilities finite when the sigmoid saturates.
SQUASH_PROB_FLOOR = 3e-6


@dataclass
class Layer:
    # Weights are held transposed, (in, out), because this BLAS runs
    # batch @ wt far faster than batch @ weight.T at these sizes.
    wt: np.ndarray  # (in, out)
    bias: np.ndarray  # (out,)
    activation: str

    @property
    def weight(self):
        """The conventional (out, in) view of the weight matrix."""
        return self.wt.T


class Mlp:
    """Fully connected stack; forward caches activations for one backward."""

    def __init__(self, layers):
        self.layers = layers
        self._cache = None
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.wt.shape[0] != prev.wt.shape[1]:
                raise ValueError("layer dimensions do not chain")

    @property
    def widths(self):
        return [self.layers[0].wt.shape[0]] + [l.wt.shape[1] for l in self.layers]

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        a = x[None, :] if single else x
        cache = []
        for layer in self.layers:
            z = a @ layer.wt + layer.bias
            cache.append((a, z))
            a = K.relu(z) if layer.activation == RELU else z
        self._cache = cache
        return a[0] if single else a

    def backward(self, output_grad):
        """Gradients of a scalar objective given d(objective)/d(output).

        Returns ([(dW, db) per layer], d(objective)/d(input)), with dW in
        the stored (in, out) layout. Requires a preceding forward call;
        consumes its cache.
        """
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        g = np.asarray(output_grad, dtype=float)
        single = g.ndim == 1
        if single:
            g = g[None, :]
        grads = [None] * len(self.layers)
        for k in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[k]
            x, z = self._cache[k]
            if layer.activation == RELU:
                g = K.relu_backward(g, z)
            grads[k] = (x.T @ g, g.sum(axis=0))
            g = g @ np.ascontiguousarray(layer.wt.T)
        self._cache = None
        return grads, (g[0] if single else g)

    def parameters(self):
        out = []
        for layer in self.layers:
            out.append(layer.wt)
            out.append(layer.bias)
        return out

    def export_params(self):
        """Layers as (weight (out, in), bias, activation) tuples."""
        return [
            (np.ascontiguousarray(layer.wt.T), layer.bias.copy(), layer.activation)
            for layer in self.layers
        ]

    def import_params(self, params):
        if len(params) != len(self.layers):
            raise ValueError("layer count mismatch")
        for layer, (weight, bias, activation) in zip(self.layers, params):
            weight = np.asarray(weight, dtype=float)
            bias = np.asarray(bias, dtype=float)
            if weight.shape != layer.weight.shape or bias.shape != layer.bias.shape:
                raise ValueError("parameter shape mismatch")
            layer.wt[...] = weight.T
            layer.bias[...] = bias
            layer.activation = activation

    def copy(self):
        return Mlp([Layer(l.wt.copy(), l.bias.copy(), l.activation) for l in self.layers])


def layer_from_weight(weight, bias, activation):
    """Build a Layer from a conventional (out, in) weight matrix."""
    weight = np.asarray(weight, dtype=float)
    bias = np.asarray(bias, dtype=float)
    if weight.ndim != 2 or bias.ndim != 1 or weight.shape[0] != bias.shape[0]:
        raise ValueError("weight must be (out, in) with a matching bias")
    return Layer(np.ascontiguousarray(weight.T), bias.copy(), activation)


def mlp_init(widths, activations, rng, final_layer_bound=3e-3):
    """Build an Mlp with uniform init.

    Hidden layers draw from U[-1/sqrt(fan_in), 1/sqrt(fan_in)]; the final
    layer from U[-final_layer_bound, final_layer_bound]. Pass
    final_layer_bound=None to use fan-in scaling everywhere (used for the
    policy trunk, which has no output layer of its own).
    """
    if len(widths) < 2 or any(w <= 0 for w in widths):
        raise ValueError("widths must have >= 2 positive entries")
    if len(activations) != len(widths) - 1:
        raise ValueError("need one activation per layer")
    if any(a not in ACTIVATIONS for a in activations):
        raise ValueError(f"activations must be among {ACTIVATIONS}")
    layers = []
    last = len(widths) - 2
    for k, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        if k == last and final_layer_bound is not None:
            bound = final_layer_bound
        else:
            bound = 1.0 / np.sqrt(fan_in)
        wt = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        bias = rng.uniform(-bound, bound, size=fan_out)
        layers.append(Layer(wt, bias, activations[k]))
    return Mlp(layers)


class RmspropState:
    """Per-parameter squared-gradient accumulators for one network."""

    def __init__(self, params, rho=0.99, eps=1e-8):
        self.rho = rho
        self.eps = eps
        self.acc = [np.zeros_like(p) for p in params]

    def export(self):
        return [a.copy() for a in self.acc]

    def load(self, accumulators):
        if len(accumulators) != len(self.acc):
            raise ValueError("accumulator count mismatch")
        for mine, theirs in zip(self.acc, accumulators):
            theirs = np.asarray(theirs, dtype=float)
            if theirs.shape != mine.shape:
                raise ValueError("accumulator shape mismatch")
            mine[...] = theirs


def rmsprop_step(params, grads, state, lr):
    """In-place RMSprop update: acc <- rho*acc + (1-rho)*g^2, p -= lr*g/(sqrt(acc)+eps)."""
    if len(params) != len(grads) or len(params) != len(state.acc):
        raise ValueError("params/grads/state length mismatch")
    for p, g, a in zip(params, grads, state.acc):
        if p.ndim == 2:
            K.rmsprop2d(p, g, a, lr, state.rho, state.eps)
        else:
            K.rmsprop1d(p, g, a, lr, state.rho, state.eps)


def flat_grads(layer_grads):
    """Flatten [(dW, db), ...] into the parameters() ordering."""
    out = []
    for dw, db in layer_grads:
        out.append(dw)
        out.append(db)
    return out


def squashed_log_prob(mean, log_std, action, prob_floor=SQUASH_PROB_FLOOR):
    """Log density at `action` of sigmoid(Normal(mean, exp(log_std))).

    Includes the same additive floor as the sampler, so integrating
    exp(log_prob) over (0, 1) is 1 up to the floor's tiny deficit.
    """
    action = np.asarray(action, dtype=float)
    z = np.log(action) - np.log1p(-action)
    std = np.exp(log_std)
    u = (z - mean) / std
    return (
        -0.5 * u * u
        - log_std
        - 0.5 * K.LOG_2PI
        - np.log(action * (1.0 - action) + prob_floor)
    )


class PolicyNet:
    """Squashed-Gaussian policy: relu trunk, linear mean and log-std heads."""

    def __init__(self, trunk, mean_head, log_std_head,
                 log_std_min=LOG_STD_MIN, log_std_max=LOG_STD_MAX,
                 prob_floor=SQUASH_PROB_FLOOR):
        self.trunk = trunk
        self.mean_head = mean_head
        self.log_std_head = log_std_head
        self.log_std_min = log_std_min
        self.log_std_max = log_std_max
        self.prob_floor = prob_floor
        self._sample_cache = None
        self._clamp_mask = None

    @classmethod
    def init(cls, obs_dim, hidden_width, rng, head_bound=3e-3, **kwargs):
        trunk = mlp_init(
            [obs_dim, hidden_width, hidden_width], [RELU, RELU], rng,
            final_layer_bound=None,
        )
        mean_head = mlp_init([hidden_width, 1], [LINEAR], rng, final_layer_bound=head_bound)
        log_std_head = mlp_init([hidden_width, 1], [LINEAR], rng, final_layer_bound=head_bound)
        return cls(trunk, mean_head, log_std_head, **kwargs)

    def forward(self, obs):
        """Return (mean, log_std) with log_std clamped to the sane region."""
        obs = np.asarray(obs, dtype=float)
        single = obs.ndim == 1
        h = self.trunk.forward(obs[None, :] if single else obs)
        mean = self.mean_head.forward(h)[:, 0]
        raw = self.log_std_head.forward(h)[:, 0]
        log_std = np.clip(raw, self.log_std_min, self.log_std_max)
        self._clamp_mask = (raw >= self.log_std_min) & (raw <= self.log_std_max)
        if single:
            return float(mean[0]), float(log_std[0])
        return mean, log_std

    def sample(self, obs, rng):
        """Reparameterized draw: (action, log_prob, pre_squash).

        action = sigmoid(mean + std * eps) with eps ~ N(0, 1); log_prob is
        the Gaussian density of the pre-squash value corrected for the
        sigmoid change of variables (with the probability floor).
        """
        obs = np.asarray(obs, dtype=float)
        single = obs.ndim == 1
        mean, log_std = self.forward(obs[None, :] if single else obs)
        noise = rng.standard_normal(mean.shape[0])
        action, log_prob, z = K.squash_sample(mean, log_std, noise, self.prob_floor)
        self._sample_cache = (action, np.exp(log_std), noise)
        if single:
            return float(action[0]), float(log_prob[0]), float(z[0])
        return action, log_prob, z

    def mean_action(self, obs):
        """Deterministic action: the squashed mean, no sampling noise."""
        obs = np.asarray(obs, dtype=float)
        single = obs.ndim == 1
        mean, _ = self.forward(obs[None, :] if single else obs)
        action = K.squash_sample(mean, np.zeros_like(mean), np.zeros_like(mean),
                                 self.prob_floor)[0]
        return float(action[0]) if single else action

    def backward_heads(self, g_mean, g_log_std):
        """Backprop given gradients on the two head outputs."""
        g_mean = np.asarray(g_mean, dtype=float)
        g_log_std = np.asarray(g_log_std, dtype=float) * self._clamp_mask
        mean_grads, dh_mean = self.mean_head.backward(g_mean[:, None])
        ls_grads, dh_ls = self.log_std_head.backward(g_log_std[:, None])
        trunk_grads, dobs = self.trunk.backward(dh_mean + dh_ls)
        return trunk_grads, mean_grads, ls_grads, dobs

    def backward_sample(self, g_action, g_log_prob):
        """Backprop through the most recent sample() call.

        Takes gradients with respect to the sampled action and its log
        probability; routes them through the reparameterization (noise held
        fixed) into trunk and head parameters.
        """
        if self._sample_cache is None:
            raise RuntimeError("backward_sample called without a cached sample")
        action, std, noise = self._sample_cache
        self._sample_cache = None
        g_mean, g_log_std = K.squash_backward(
            np.asarray(g_action, dtype=float),
            np.asarray(g_log_prob, dtype=float),
            action, std, noise, self.prob_floor,
        )
        return self.backward_heads(g_mean, g_log_std)

    def parameters(self):
        return (
            self.trunk.parameters()
            + self.mean_head.parameters()
            + self.log_std_head.parameters()
        )

    def export_params(self):
        return {
            "trunk": self.trunk.export_params(),
            "mean_head": self.mean_head.export_params(),
            "log_std_head": self.log_std_head.export_params(),
        }

    def import_params(self, params):
        self.trunk.import_params(params["trunk"])
        self.mean_head.import_params(params["mean_head"])
        self.log_std_head.import_params(params["log_std_head"])

"""Stochastic Gaussian policy with an MLP state-dependent mean.

The mean comes from a fully-connected network; the log standard deviation
is a separate state-independent trainable vector. All operations are
functions of an explicit flat parameter vector so optimization steps,
rollbacks, and checkpointing stay trivial.

Flat parameter layout (canonical, documented for checkpoints): for each
layer in order, the weight matrix W (out x in, row-major) followed by the
bias b (out); after all layers, the log-std vector (output_dim). Layer
sizes run input -> hidden_sizes... -> output.
"""

import base64
import json
from dataclasses import dataclass

import numpy as np

_LOG_2PI = float(np.log(2.0 * np.pi))

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PolicySpec:
    input_dim: int
    output_dim: int
    hidden_sizes: tuple
    activation: str = "relu"
    init_logstd: float = 0.0
    # Fixed affine input conditioning (state - loc) / scale applied ahead
    # of the first layer. State dimensions can differ by orders of
    # magnitude (e.g. position vs velocity); without this the network
    # needs correspondingly large weights before it can react to the
    # small-scale dimensions at all. Not trainable, stored in checkpoints.
    obs_loc: tuple = ()
    obs_scale: tuple = ()

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if not self.hidden_sizes:
            raise ValueError("hidden_sizes must be non-empty")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        for field_name in ("obs_loc", "obs_scale"):
            value = tuple(float(v) for v in getattr(self, field_name))
            if value and len(value) != self.input_dim:
                raise ValueError(f"{field_name} must have input_dim entries")
            object.__setattr__(self, field_name, value)
        if any(s <= 0 for s in self.obs_scale):
            raise ValueError("obs_scale entries must be positive")


@dataclass
class ForwardCache:
    """Intermediates of one mean-network forward pass over a state batch."""

    mu: np.ndarray
    zs: list
    hs: list


class GaussianPolicy:
    """Diagonal-Gaussian policy over a flat parameter vector."""

    def __init__(self, spec: PolicySpec, dtype=np.float64):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        sizes = [spec.input_dim, *spec.hidden_sizes, spec.output_dim]
        self.layer_shapes = [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]
        self.n_params = sum(o * i + o for o, i in self.layer_shapes) + spec.output_dim
        self._obs_loc = (np.asarray(spec.obs_loc, dtype=self.dtype)
                         if spec.obs_loc else None)
        self._obs_scale = (np.asarray(spec.obs_scale, dtype=self.dtype)
                           if spec.obs_scale else None)

    # -- parameter handling -------------------------------------------------

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        """Orthogonal-style init: scaled orthogonal weights, zero biases."""
        gain = np.sqrt(2.0) if self.spec.activation == "relu" else 1.0
        chunks = []
        last = len(self.layer_shapes) - 1
        for li, (out, inp) in enumerate(self.layer_shapes):
            a = rng.standard_normal((out, inp))
            q, r = np.linalg.qr(a if out >= inp else a.T)
            q = q * np.sign(np.diag(r))
            if out < inp:
                q = q.T
            w = (1.0 if li == last else gain) * q[:out, :inp]
            chunks.append(w.ravel())
            chunks.append(np.zeros(out))
        chunks.append(np.full(self.spec.output_dim, self.spec.init_logstd))
        return np.concatenate(chunks).astype(self.dtype)

    def unpack(self, params: np.ndarray):
        """Zero-copy views (Ws, bs, log_std) into the flat vector."""
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {params.shape}")
        ws, bs, ofs = [], [], 0
        for out, inp in self.layer_shapes:
            ws.append(params[ofs:ofs + out * inp].reshape(out, inp))
            ofs += out * inp
            bs.append(params[ofs:ofs + out])
            ofs += out
        return ws, bs, params[ofs:]

    # -- forward ------------------------------------------------------------

    def _act_fn(self, z):
        return np.maximum(z, 0.0) if self.spec.activation == "relu" else np.tanh(z)

    def _forward(self, params, states):
        """Returns (mu, pre-activations, activations incl. input)."""
        ws, bs, _ = self.unpack(params)
        h = np.asarray(states, dtype=self.dtype)
        if self._obs_loc is not None:
            h = h - self._obs_loc
        if self._obs_scale is not None:
            h = h / self._obs_scale
        hs, zs = [h], []
        for w, b in zip(ws[:-1], bs[:-1]):
            z = h @ w.T + b
            zs.append(z)
            h = self._act_fn(z)
            hs.append(h)
        mu = h @ ws[-1].T + bs[-1]
        return mu, zs, hs

    def forward_cache(self, params, states) -> "ForwardCache":
        """One forward pass whose intermediates can feed both log-prob
        evaluation and the backward pass, so optimization loops do not
        recompute activations."""
        mu, zs, hs = self._forward(params, states)
        return ForwardCache(mu=mu, zs=zs, hs=hs)

    def mean_batch(self, params, states) -> np.ndarray:
        mu, _, _ = self._forward(params, states)
        return mu

    def act_batch(self, params, states, noise) -> np.ndarray:
        """mu(state) + sigma * noise, unclipped (environments clip)."""
        mu = self.mean_batch(params, states)
        if not np.isfinite(mu).all():
            raise FloatingPointError("policy mean is non-finite")
        _, _, log_std = self.unpack(params)
        return mu + np.exp(log_std) * np.asarray(noise, dtype=self.dtype)

    def act(self, params, state, rng: np.random.Generator) -> np.ndarray:
        noise = rng.standard_normal(self.spec.output_dim)
        return self.act_batch(params, np.asarray(state)[None, :], noise[None, :])[0]

    def log_prob_from_cache(self, cache: "ForwardCache", params,
                            actions) -> np.ndarray:
        _, _, log_std = self.unpack(params)
        z = (np.asarray(actions, dtype=self.dtype) - cache.mu) * np.exp(-log_std)
        return (-0.5 * (z * z).sum(axis=1) - log_std.sum()
                - 0.5 * self.spec.output_dim * self.dtype.type(_LOG_2PI))

    def log_prob_batch(self, params, states, actions) -> np.ndarray:
        return self.log_prob_from_cache(self.forward_cache(params, states),
                                        params, actions)

    def log_prob(self, params, state, action) -> float:
        return float(self.log_prob_batch(
            params, np.asarray(state)[None, :], np.asarray(action)[None, :])[0])

    # -- reverse mode -------------------------------------------------------

    def _act_deriv(self, z, h):
        if self.spec.activation == "relu":
            return (z > 0.0).astype(self.dtype)
        return 1.0 - h * h

    def weighted_score_sum_from_cache(self, cache: "ForwardCache", params,
                                      actions, coeffs) -> np.ndarray:
        ws, bs, log_std = self.unpack(params)
        a = np.asarray(actions, dtype=self.dtype)
        c = np.asarray(coeffs, dtype=self.dtype)[:, None]
        inv_var = np.exp(-2.0 * log_std)
        resid = a - cache.mu
        d_mu = c * resid * inv_var
        d_logstd = (c * (resid * resid * inv_var - 1.0)).sum(axis=0)

        grad = np.empty(self.n_params, dtype=self.dtype)
        gws, gbs, glog = self.unpack(grad)
        d_out = d_mu
        for li in range(len(ws) - 1, -1, -1):
            gws[li][...] = d_out.T @ cache.hs[li]
            gbs[li][...] = d_out.sum(axis=0)
            if li > 0:
                d_out = (d_out @ ws[li]) * self._act_deriv(cache.zs[li - 1],
                                                           cache.hs[li])
        glog[...] = d_logstd
        return grad

    def weighted_score_sum(self, params, states, actions, coeffs) -> np.ndarray:
        """Gradient of sum_b coeffs[b] * log pi(actions[b] | states[b]).

        One batched backward pass; the coefficients are treated as
        constants. This is the workhorse for assembling estimator
        gradients without per-sample parameter-sized intermediates.
        """
        return self.weighted_score_sum_from_cache(
            self.forward_cache(params, states), params, actions, coeffs)

    def log_prob_grad(self, params, state, action) -> np.ndarray:
        """Exact gradient of log_prob w.r.t. all parameters."""
        return self.weighted_score_sum(
            params, np.asarray(state)[None, :], np.asarray(action)[None, :],
            np.ones(1))

    def log_prob_grad_batch(self, params, states, actions) -> np.ndarray:
        """Per-sample score gradients, shape (B, n_params).

        Materializes B parameter-sized rows; intended for small batches
        (tests and reference paths), not production-sized datasets.
        """
        ws, bs, log_std = self.unpack(params)
        mu, zs, hs = self._forward(params, states)
        a = np.asarray(actions, dtype=self.dtype)
        n = a.shape[0]
        inv_var = np.exp(-2.0 * log_std)
        resid = a - mu

        grads = np.empty((n, self.n_params), dtype=self.dtype)
        ofs_w, ofs_b = [], []
        ofs = 0
        for out, inp in self.layer_shapes:
            ofs_w.append(ofs)
            ofs += out * inp
            ofs_b.append(ofs)
            ofs += out
        d_out = resid * inv_var
        for li in range(len(ws) - 1, -1, -1):
            out, inp = self.layer_shapes[li]
            gw = np.einsum("bo,bi->boi", d_out, hs[li]).reshape(n, out * inp)
            grads[:, ofs_w[li]:ofs_w[li] + out * inp] = gw
            grads[:, ofs_b[li]:ofs_b[li] + out] = d_out
            if li > 0:
                d_out = (d_out @ ws[li]) * self._act_deriv(zs[li - 1], hs[li])
        grads[:, ofs:] = resid * resid * inv_var - 1.0
        return grads


def zero_mean_pretrain(policy: GaussianPolicy, params, states,
                       tol: float = 1e-2, max_iters: int = 5000):
    """Drive the mean network output to zero over a sample of states.

    Least-squares regression of mu(state) to 0 restricted to the final
    linear layer (a convex problem), with a fixed step size 1/L where L
    is the largest eigenvalue of the feature Gram matrix. Hidden layers
    and the log-std vector are untouched.
    """
    states = np.asarray(states, dtype=policy.dtype)
    if states.ndim != 2 or states.shape[0] == 0:
        raise ValueError("states must be a non-empty (M, input_dim) sample")
    params = params.copy()

    def residual(p):
        mu = policy.mean_batch(p, states)
        return float(np.mean(np.linalg.norm(np.asarray(mu, np.float64), axis=1)))

    if residual(params) <= tol:
        return params

    ws, bs, _ = policy.unpack(params)
    _, _, hs = policy._forward(params, states)
    feats = np.asarray(hs[-1], dtype=np.float64)  # final hidden activations
    m = states.shape[0]
    gram = np.concatenate([feats, np.ones((m, 1))], axis=1)
    gram = gram.T @ gram / m
    lr = 1.0 / max(float(np.linalg.eigvalsh(gram)[-1]), 1e-12)

    # Hidden layers are fixed, so the feature matrix never changes and the
    # residual can be tracked without re-running the network.
    w = np.asarray(ws[-1], dtype=np.float64)
    b = np.asarray(bs[-1], dtype=np.float64)
    for _ in range(max_iters):
        mu = feats @ w.T + b
        if float(np.mean(np.linalg.norm(mu, axis=1))) <= 0.9 * tol:
            break
        w = w - lr * (mu.T @ feats) / m
        b = b - lr * mu.sum(axis=0) / m
    ws[-1][...] = w.astype(policy.dtype)
    bs[-1][...] = b.astype(policy.dtype)
    res = residual(params)
    if res <= tol:
        return params
    raise RuntimeError(
        f"zero-mean pretraining did not reach {tol} in {max_iters} iterations "
        f"(residual {res:.3e})")


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, spec: PolicySpec, params, seed=None, epoch=None):
    """Lossless JSON checkpoint: spec, layout descriptor, parameters."""
    policy = GaussianPolicy(spec)
    layout = [{"weight": list(s)} for s in policy.layer_shapes]
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "spec": {
            "input_dim": spec.input_dim,
            "output_dim": spec.output_dim,
            "hidden_sizes": list(spec.hidden_sizes),
            "activation": spec.activation,
            "init_logstd": spec.init_logstd,
            "obs_loc": list(spec.obs_loc),
            "obs_scale": list(spec.obs_scale),
        },
        "layout": layout,
        "param_dtype": "float64",
        "params_b64": base64.b64encode(
            np.asarray(params, dtype="<f8").tobytes()).decode("ascii"),
        "seed": seed,
        "epoch": epoch,
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path):
    """Returns (spec, params, seed, epoch)."""
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format: {doc.get('format_version')}")
    s = doc["spec"]
    spec = PolicySpec(
        input_dim=s["input_dim"], output_dim=s["output_dim"],
        hidden_sizes=tuple(s["hidden_sizes"]), activation=s["activation"],
        init_logstd=s["init_logstd"],
        obs_loc=tuple(s.get("obs_loc", ())),
        obs_scale=tuple(s.get("obs_scale", ())))
    params = np.frombuffer(
        base64.b64decode(doc["params_b64"]), dtype="<f8").copy()
    expected = GaussianPolicy(spec).n_params
    if params.shape != (expected,):
        raise ValueError(f"checkpoint has {params.size} params, spec wants {expected}")
    return spec, params, doc.get("seed"), doc.get("epoch")

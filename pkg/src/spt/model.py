"""Tiny pre-norm decoder-only transformer with an extended output head.

Everything is plain numpy with hand-written backward passes. The output
distribution covers the base vocabulary plus the extension rows
``W_S* = [W_S; w_rej; w_gen]``:

    logits_i = concat(head @ h_i, W_S* @ h_i)

Extension tokens never enter the input, with one exception: positions
holding the ``<Gen>`` id read the ``w_gen`` row as a soft prompt instead of
a token embedding.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NumericalError, SeqTooLong, ShapeError

GROUPS = ("base", "W_S", "rej", "gen")
EXT_GROUPS = ("W_S", "rej", "gen")
LN_EPS = 1e-5
_GELU_C = float(np.sqrt(2.0 / np.pi))


@dataclass
class ModelConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_seq_len: int = 256
    tie_embeddings: bool = False
    dtype: str = "float32"
    init_std: float = 0.02
    seed: int = 7

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


@dataclass
class ModelParams:
    config: ModelConfig
    base: dict[str, np.ndarray]
    ext: np.ndarray
    frozen: set[str] = field(default_factory=set)
    phases_done: list[str] = field(default_factory=list)

    @property
    def n_schemas(self) -> int:
        return self.ext.shape[0] - 2

    @property
    def n_base(self) -> int:
        return self.base["tok_emb"].shape[0]

    @property
    def gen_id(self) -> int:
        return self.n_base + self.n_schemas + 1

    @property
    def head(self) -> np.ndarray:
        return self.base["tok_emb"] if self.config.tie_embeddings else self.base["head"]

    def group_view(self, group: str) -> np.ndarray:
        """Writable view of an extension group (``W_S``, ``rej`` or ``gen``)."""
        s = self.n_schemas
        if group == "W_S":
            return self.ext[:s]
        if group == "rej":
            return self.ext[s]
        if group == "gen":
            return self.ext[s + 1]
        raise KeyError(group)

    def tensor(self, key: str) -> np.ndarray:
        return self.group_view(key) if key in EXT_GROUPS else self.base[key]

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)

    def astype(self, dtype: str) -> "ModelParams":
        out = self.copy()
        out.config.dtype = dtype
        out.base = {k: v.astype(dtype) for k, v in out.base.items()}
        out.ext = out.ext.astype(dtype)
        return out


def base_tensor_names(config: ModelConfig) -> list[str]:
    names = ["tok_emb", "pos_emb"]
    for l in range(config.n_layers):
        p = f"h{l}."
        names += [p + "ln1.g", p + "ln1.b", p + "attn.wqkv", p + "attn.bqkv",
                  p + "attn.wo", p + "attn.bo", p + "ln2.g", p + "ln2.b",
                  p + "mlp.w1", p + "mlp.b1", p + "mlp.w2", p + "mlp.b2"]
    names += ["lnf.g", "lnf.b"]
    if not config.tie_embeddings:
        names.append("head")
    return names


def init_params(config: ModelConfig, n_base: int, n_schemas: int,
                ext_noise: float = 0.0, ext_seed: int | None = None) -> ModelParams:
    """Random N(0, init_std^2) weights; extension rows start at the mean head row.

    ``ext_noise`` adds Gaussian jitter to the extension rows (seeded by
    ``ext_seed``) and exists for restart-sensitivity experiments.
    """
    rng = np.random.default_rng(config.seed)
    d, ff, dt = config.d_model, config.d_ff, config.dtype
    std = config.init_std

    def normal(*shape):
        return (rng.standard_normal(shape) * std).astype(dt)

    base: dict[str, np.ndarray] = {}
    for name in base_tensor_names(config):
        leaf = name.rsplit(".", 1)[-1]
        if name == "tok_emb":
            base[name] = normal(n_base, d)
        elif name == "pos_emb":
            base[name] = normal(config.max_seq_len, d)
        elif name == "head":
            base[name] = normal(n_base, d)
        elif leaf == "g":
            base[name] = np.ones(d, dtype=dt)
        elif leaf == "b":
            base[name] = np.zeros(d, dtype=dt)
        elif leaf == "wqkv":
            base[name] = normal(d, 3 * d)
        elif leaf == "bqkv":
            base[name] = np.zeros(3 * d, dtype=dt)
        elif leaf == "wo":
            base[name] = normal(d, d)
        elif leaf == "w1":
            base[name] = normal(d, ff)
        elif leaf == "b1":
            base[name] = np.zeros(ff, dtype=dt)
        elif leaf == "w2":
            base[name] = normal(ff, d)
        elif leaf in ("bo", "b2"):
            base[name] = np.zeros(d, dtype=dt)
        else:  # pragma: no cover
            raise KeyError(name)
    params = ModelParams(config, base, np.zeros((n_schemas + 2, d), dtype=dt))
    reset_extension(params, noise=ext_noise, seed=ext_seed)
    return params


def reset_extension(params: ModelParams, noise: float = 0.0, seed: int | None = None) -> None:
    mean_row = params.head.mean(axis=0)
    params.ext[:] = mean_row
    if noise:
        rng = np.random.default_rng(seed)
        params.ext += (rng.standard_normal(params.ext.shape) * noise).astype(params.ext.dtype)


def extension_parameter_count(n_schemas: int, d_model: int) -> int:
    """Trainable parameters of the extended head: (|S| + 2) * d."""
    return (n_schemas + 2) * d_model


def trainable_parameter_count(params: ModelParams, groups=EXT_GROUPS) -> int:
    total = 0
    for g in groups:
        if g == "base":
            total += sum(v.size for v in params.base.values())
        else:
            total += params.group_view(g).size
    return total


# ---------------------------------------------------------------- primitives

def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _layernorm(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(-1, keepdims=True) + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd)


def _layernorm_back(dy, g, cache):
    xhat, rstd = cache
    dxhat = dy * g
    dx = rstd * (dxhat - dxhat.mean(-1, keepdims=True)
                 - xhat * (dxhat * xhat).mean(-1, keepdims=True))
    red = tuple(range(dy.ndim - 1))
    return dx, (dy * xhat).sum(red), dy.sum(red)


def _gelu(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * (x * x * x)))
    return 0.5 * x * (1.0 + t), t


def _gelu_back(dy, x, t):
    dt = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dt)


# ------------------------------------------------------------------- forward

def _check_ids(params: ModelParams, ids: np.ndarray) -> None:
    if ids.shape[-1] > params.config.max_seq_len:
        raise SeqTooLong(f"sequence length {ids.shape[-1]} > {params.config.max_seq_len}")
    bad = (ids >= params.n_base) & (ids != params.gen_id)
    if bad.any() or (ids < 0).any():
        raise ValueError("input ids must be base tokens or the <Gen> soft-prompt marker")


def _forward(params: ModelParams, ids: np.ndarray):
    cfg = params.config
    B, T = ids.shape
    H = cfg.n_heads
    dh = cfg.d_model // H
    P = params.base
    gen_mask = ids == params.gen_id
    x = P["tok_emb"][np.where(gen_mask, 0, ids)]
    if gen_mask.any():
        x[gen_mask] = params.ext[-1]
    x = x + P["pos_emb"][:T]
    causal = np.triu(np.full((T, T), -np.inf, dtype=x.dtype), k=1)
    scale = 1.0 / float(np.sqrt(dh))
    layers = []
    for l in range(cfg.n_layers):
        p = f"h{l}."
        a, ln1 = _layernorm(x, P[p + "ln1.g"], P[p + "ln1.b"])
        qkv = a @ P[p + "attn.wqkv"] + P[p + "attn.bqkv"]
        qkv = qkv.reshape(B, T, 3, H, dh).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        att = softmax(q @ k.transpose(0, 1, 3, 2) * scale + causal)
        y = (att @ v).transpose(0, 2, 1, 3).reshape(B, T, cfg.d_model)
        x = x + y @ P[p + "attn.wo"] + P[p + "attn.bo"]
        m, ln2 = _layernorm(x, P[p + "ln2.g"], P[p + "ln2.b"])
        u = m @ P[p + "mlp.w1"] + P[p + "mlp.b1"]
        g, t = _gelu(u)
        x = x + g @ P[p + "mlp.w2"] + P[p + "mlp.b2"]
        layers.append((a, ln1, q, k, v, att, y, m, ln2, u, g, t))
    h, lnf = _layernorm(x, P["lnf.g"], P["lnf.b"])
    cache = dict(ids=ids, gen_mask=gen_mask, layers=layers, lnf=lnf, scale=scale)
    return h, cache


def full_head(params: ModelParams) -> np.ndarray:
    return np.concatenate([params.head, params.ext], axis=0)


def forward(params: ModelParams, seq) -> tuple[np.ndarray, np.ndarray]:
    """Hidden states and logits over ``|V| + |S| + 2`` for every position.

    ``seq`` is a 1-D or 2-D integer array. Positions holding the ``<Gen>`` id
    take the ``w_gen`` row as their input embedding.
    """
    ids = np.asarray(seq, dtype=np.int64)
    single = ids.ndim == 1
    if single:
        ids = ids[None]
    _check_ids(params, ids)
    h, _ = _forward(params, ids)
    with np.errstate(invalid="ignore", over="ignore"):
        logits = h @ full_head(params).T
    if not np.all(np.isfinite(logits)):
        raise NumericalError("non-finite logits")
    if single:
        return h[0], logits[0]
    return h, logits


def last_hidden(params: ModelParams, seq) -> np.ndarray:
    """Hidden state at the final position of a single sequence."""
    ids = np.asarray(seq, dtype=np.int64)[None]
    _check_ids(params, ids)
    h, _ = _forward(params, ids)
    return h[0, -1]


# ------------------------------------------------------------------ backward

def _backward(params: ModelParams, cache, dh, weight_grads: bool):
    cfg = params.config
    P = params.base
    ids = cache["ids"]
    B, T = ids.shape
    H = cfg.n_heads
    dh_ = cfg.d_model // H
    scale = cache["scale"]
    grads: dict[str, np.ndarray] = {}

    dx, dg, db = _layernorm_back(dh, P["lnf.g"], cache["lnf"])
    if weight_grads:
        grads["lnf.g"], grads["lnf.b"] = dg, db
    for l in reversed(range(cfg.n_layers)):
        p = f"h{l}."
        a, ln1, q, k, v, att, y, m, ln2, u, g, t = cache["layers"][l]
        # MLP
        dgl = dx @ P[p + "mlp.w2"].T
        if weight_grads:
            grads[p + "mlp.w2"] = g.reshape(-1, g.shape[-1]).T @ dx.reshape(-1, dx.shape[-1])
            grads[p + "mlp.b2"] = dx.sum((0, 1))
        du = _gelu_back(dgl, u, t)
        dm = du @ P[p + "mlp.w1"].T
        if weight_grads:
            grads[p + "mlp.w1"] = m.reshape(-1, m.shape[-1]).T @ du.reshape(-1, du.shape[-1])
            grads[p + "mlp.b1"] = du.sum((0, 1))
        dxl, dg2, db2 = _layernorm_back(dm, P[p + "ln2.g"], ln2)
        dx = dx + dxl
        if weight_grads:
            grads[p + "ln2.g"], grads[p + "ln2.b"] = dg2, db2
        # attention
        dy = dx @ P[p + "attn.wo"].T
        if weight_grads:
            grads[p + "attn.wo"] = y.reshape(-1, cfg.d_model).T @ dx.reshape(-1, cfg.d_model)
            grads[p + "attn.bo"] = dx.sum((0, 1))
        dy = dy.reshape(B, T, H, dh_).transpose(0, 2, 1, 3)
        datt = dy @ v.transpose(0, 1, 3, 2)
        dv = att.transpose(0, 1, 3, 2) @ dy
        ds = att * (datt - (datt * att).sum(-1, keepdims=True)) * scale
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        dqkv = np.stack([dq, dk, dv]).transpose(1, 3, 0, 2, 4).reshape(B, T, 3 * cfg.d_model)
        da = dqkv @ P[p + "attn.wqkv"].T
        if weight_grads:
            grads[p + "attn.wqkv"] = a.reshape(-1, cfg.d_model).T @ dqkv.reshape(-1, 3 * cfg.d_model)
            grads[p + "attn.bqkv"] = dqkv.sum((0, 1))
        dxl, dg1, db1 = _layernorm_back(da, P[p + "ln1.g"], ln1)
        dx = dx + dxl
        if weight_grads:
            grads[p + "ln1.g"], grads[p + "ln1.b"] = dg1, db1
    # dx is now the gradient w.r.t. the summed input embeddings
    if weight_grads:
        dpos = np.zeros_like(P["pos_emb"])
        dpos[:T] = dx.sum(0)
        grads["pos_emb"] = dpos
        dtok = np.zeros_like(P["tok_emb"])
        keep = ~cache["gen_mask"]
        np.add.at(dtok, ids[keep], dx[keep])
        grads["tok_emb"] = dtok
    dgen = dx[cache["gen_mask"]].sum(0) if cache["gen_mask"].any() else None
    return grads, dgen


def loss_and_grads(params: ModelParams, ids, targets, trainable=EXT_GROUPS,
                   batch_index: int | None = None, return_logits: bool = False):
    """Mean next-token NLL over supervised positions and its gradients.

    ``targets`` has the shape of ``ids``; entries ``< 0`` are ignored.
    Gradients are returned only for the groups in ``trainable`` and only if
    they are not frozen. Keys are base tensor names plus ``W_S``, ``rej`` and
    ``gen``.
    """
    ids = np.asarray(ids, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if ids.ndim == 1:
        ids, targets = ids[None], targets[None]
    if ids.shape != targets.shape:
        raise ShapeError(f"ids {ids.shape} vs targets {targets.shape}")
    _check_ids(params, ids)
    trainable = [g for g in trainable if g not in params.frozen]

    h, cache = _forward(params, ids)
    sel = targets >= 0
    n = int(sel.sum())
    if n == 0:
        raise ValueError("batch has no supervised positions")
    hs = h[sel]
    W = full_head(params)
    with np.errstate(invalid="ignore", over="ignore"):
        z = hs @ W.T
    if not np.all(np.isfinite(z)):
        raise NumericalError("non-finite logits in batch", batch_index=batch_index)
    tgt = targets[sel]
    zmax = z.max(-1, keepdims=True)
    e = np.exp(z - zmax)
    sumexp = e.sum(-1, keepdims=True)
    logp_t = (z[np.arange(n), tgt] - zmax[:, 0]) - np.log(sumexp[:, 0])
    loss = float(-logp_t.mean())
    if not np.isfinite(loss):
        raise NumericalError("non-finite loss", batch_index=batch_index)

    dz = e / sumexp
    dz[np.arange(n), tgt] -= 1.0
    dz /= n
    dW = dz.T @ hs
    grads: dict[str, np.ndarray] = {}
    s, vb = params.n_schemas, params.n_base
    if "W_S" in trainable:
        grads["W_S"] = dW[vb:vb + s]
    if "rej" in trainable:
        grads["rej"] = dW[vb + s]
    if "gen" in trainable:
        grads["gen"] = dW[vb + s + 1].copy()

    need_base = "base" in trainable
    need_gen = "gen" in trainable and cache["gen_mask"].any()
    if need_base or need_gen:
        dh = np.zeros_like(h)
        dh[sel] = dz @ W
        bgrads, dgen = _backward(params, cache, dh, weight_grads=need_base)
        if need_base:
            if params.config.tie_embeddings:
                bgrads["tok_emb"] = bgrads["tok_emb"] + dW[:vb]
            else:
                bgrads["head"] = dW[:vb]
            grads.update(bgrads)
        if need_gen and dgen is not None:
            grads["gen"] += dgen
    if return_logits:
        return loss, grads, z
    return loss, grads


# ---------------------------------------------------------------- optimizers

def _check_grads(params: ModelParams, grads: dict) -> None:
    for key, g in grads.items():
        group = key if key in EXT_GROUPS else "base"
        if group in params.frozen:
            raise ValueError(f"gradient supplied for frozen group {group!r}")
        if params.tensor(key).shape != np.shape(g):
            raise ShapeError(f"{key}: param {params.tensor(key).shape} vs grad {np.shape(g)}")


def sgd_step(params: ModelParams, grads: dict, lr: float) -> ModelParams:
    """In-place ``theta <- theta - lr * g`` on the supplied groups."""
    _check_grads(params, grads)
    for key in sorted(grads):
        view = params.tensor(key)
        view -= (lr * grads[key]).astype(view.dtype)
    return params


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: ModelParams, grads: dict) -> ModelParams:
        return sgd_step(params, grads, self.lr)


class Adam:
    """Adam with bias correction; state is keyed by gradient name."""

    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: dict) -> ModelParams:
        _check_grads(params, grads)
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for key in sorted(grads):
            g = np.asarray(grads[key], dtype=np.float64)
            m = self.m.get(key)
            if m is None:
                m = self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            v = self.v[key]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            view = params.tensor(key)
            upd = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay and key not in EXT_GROUPS and view.ndim == 2:
                upd = upd + self.lr * self.weight_decay * view
            view -= upd.astype(view.dtype)
        return params


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {name!r}")

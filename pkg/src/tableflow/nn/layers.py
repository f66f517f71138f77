"""Parameter containers and the standard differentiable blocks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Parameter(Tensor):
    def __init__(self, data):
        super().__init__(data, requires_grad=True, op="param")


class Module:
    """Attribute-registered parameter tree; paths are dot-separated names."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            path = f"{prefix}{name}" if not prefix else f"{prefix}.{name}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        if missing:
            raise KeyError(f"checkpoint missing parameters: {sorted(missing)[:5]}...")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.copy()

    def set_trainable(self, flag):
        for p in self.parameters():
            p.requires_grad = bool(flag)


class Linear(Module):
    def __init__(self, in_dim, out_dim, rng, bias=True, scale=None):
        std = scale if scale is not None else 1.0 / np.sqrt(in_dim)
        self.weight = Parameter(rng.normal(0.0, std, size=(in_dim, out_dim)))
        self.bias = Parameter(np.zeros(out_dim)) if bias else None

    def __call__(self, x):
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x):
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class Embedding(Module):
    def __init__(self, count, dim, rng, std=0.02):
        self.table = Parameter(rng.normal(0.0, std, size=(count, dim)))

    def __call__(self, ids):
        return T.embedding(self.table, ids)


class LoraAdapter(Module):
    """Low-rank delta for a frozen base linear; up-projection starts at 0,
    so a fresh adapter leaves the base output untouched."""

    def __init__(self, in_dim, out_dim, rank, rng):
        if rank >= min(in_dim, out_dim):
            raise ValueError(f"lora rank {rank} must be < min({in_dim}, {out_dim})")
        if rank < 1:
            raise ValueError("lora rank must be >= 1")
        self.rank = rank
        self.down = Parameter(rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, rank)))
        self.up = Parameter(np.zeros((rank, out_dim)))

    def __call__(self, x):
        return (x @ self.down) @ self.up


class LoRALinear(Module):
    """Linear with an optional low-rank adapter added to its output."""

    def __init__(self, in_dim, out_dim, rng, bias=True):
        self.base = Linear(in_dim, out_dim, rng, bias=bias)
        self.adapter = None
        self._dims = (in_dim, out_dim)

    def enable_adapter(self, rank, rng):
        self.adapter = LoraAdapter(self._dims[0], self._dims[1], rank, rng)

    def __call__(self, x):
        out = self.base(x)
        if self.adapter is not None:
            out = out + self.adapter(x)
        return out


@dataclass
class AttentionMask:
    """Boolean (query x key) visibility; every query needs >= 1 allowed key."""

    allow: np.ndarray

    def __post_init__(self):
        self.allow = np.asarray(self.allow, dtype=bool)
        if self.allow.ndim != 2:
            raise ValueError(f"mask must be 2D, got shape {self.allow.shape}")
        rows = self.allow.any(axis=1)
        if not rows.all():
            bad = int(np.nonzero(~rows)[0][0])
            raise ValueError(f"mask row {bad} allows no keys")

    @property
    def shape(self):
        return self.allow.shape


def masked_attention(queries, keys, values, mask, head_count):
    """Multi-head scaled dot-product attention restricted by `mask`.

    queries/keys/values: Tensor (T, d) or (B, T, d); mask: AttentionMask
    or boolean ndarray broadcastable to (B, heads, Tq, Tk).  Disallowed
    logits are excluded from the softmax normalization, so outputs are
    bitwise independent of masked keys/values.
    """
    allow = mask.allow if isinstance(mask, AttentionMask) else np.asarray(mask, dtype=bool)
    squeeze = queries.ndim == 2
    if squeeze:
        queries, keys, values = (t.reshape((1,) + t.shape) for t in (queries, keys, values))
    b, tq, d = queries.shape
    tk = keys.shape[1]
    if d % head_count:
        raise ValueError(f"head_count {head_count} must divide embedding dim {d}")
    if allow.shape[-2:] != (tq, tk):
        raise ValueError(f"mask shape {allow.shape} does not match ({tq}, {tk})")
    hd = d // head_count

    def split(t, length):
        return t.reshape(b, length, head_count, hd).swapaxes(1, 2)

    q, k, v = split(queries, tq), split(keys, tk), split(values, tk)
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(hd))
    if allow.ndim == 2:
        allow = allow[None, None]
    elif allow.ndim == 3:
        allow = allow[:, None]
    probs = T.masked_softmax(scores, allow)
    out = (probs @ v).swapaxes(1, 2).reshape(b, tq, d)
    return out.reshape((tq, d)) if squeeze else out


class SelfAttention(Module):
    def __init__(self, dim, heads, rng):
        self.heads = heads
        self.q = LoRALinear(dim, dim, rng)
        self.k = LoRALinear(dim, dim, rng)
        self.v = LoRALinear(dim, dim, rng)
        self.out = LoRALinear(dim, dim, rng)

    def __call__(self, x, allow):
        attended = masked_attention(self.q(x), self.k(x), self.v(x), allow, self.heads)
        return self.out(attended)


class Mlp(Module):
    def __init__(self, dim, hidden, rng):
        self.fc1 = LoRALinear(dim, hidden, rng)
        self.fc2 = LoRALinear(hidden, dim, rng)

    def __call__(self, x):
        return self.fc2(self.fc1(x).gelu())


class TransformerBlock(Module):
    """Pre-norm residual block with a pluggable attention mask."""

    def __init__(self, dim, heads, rng, mlp_ratio=2):
        self.ln1 = LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim)
        self.mlp = Mlp(dim, dim * mlp_ratio, rng)

    def __call__(self, x, allow):
        x = x + self.attn(self.ln1(x), allow)
        return x + self.mlp(self.ln2(x))


def enable_lora(module, rank, rng, prefix=""):
    """Attach adapters to every LoRALinear below `module`; returns paths."""
    added = []
    for name, value in vars(module).items():
        path = f"{prefix}{name}" if not prefix else f"{prefix}.{name}"
        if isinstance(value, LoRALinear):
            value.enable_adapter(rank, rng)
            added.append(path)
        elif isinstance(value, Module):
            added.extend(enable_lora(value, rank, rng, path))
        elif isinstance(value, (list, tuple)):
            for i, item in enumerate(value):
                if isinstance(item, Module):
                    added.extend(enable_lora(item, rank, rng, f"{path}.{i}"))
    return added

"""Model configuration, parameter layout and deterministic initialization."""
from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..autodiff import Tensor
from ..errors import InvalidArgument

PATCH_GRID = (1, 50, 100, 150, 200)


class Arch(str, enum.Enum):
    MLP = "MLP"
    DLINEAR = "DLinear"
    NHITS = "NHITS"
    PATCHTST = "PatchTST"


# fixed registry order used for every table and report
ARCH_ORDER = (Arch.MLP, Arch.DLINEAR, Arch.NHITS, Arch.PATCHTST)
ARCH_SLUGS = {a.value.lower(): a for a in ARCH_ORDER}


@dataclass(frozen=True)
class ModelConfig:
    arch: Arch
    input_size: int = 200
    horizon: int = 200
    hidden_size: int = 128
    n_layers: int = 3
    dropout: float = 0.0
    seed: int = 0
    # DLinear
    ma_kernel: int = 25
    # NHITS: one block per stack, n_layers stacks
    pool_kernels: tuple[int, ...] = (8, 4, 1)
    interp_factors: tuple[int, ...] = (4, 2, 1)
    mlp_depth: int = 2
    # PatchTST
    patch_length: int = 50
    n_heads: int = 4
    ff_dim: int = 256

    def __post_init__(self):
        object.__setattr__(self, "arch", Arch(self.arch))
        object.__setattr__(self, "pool_kernels", tuple(int(k) for k in self.pool_kernels))
        object.__setattr__(self, "interp_factors", tuple(int(r) for r in self.interp_factors))
        if self.input_size <= 0 or self.horizon <= 0:
            raise InvalidArgument("input_size and horizon must be positive")
        if self.dropout != 0.0:
            raise InvalidArgument("dropout must be 0.0")
        if self.hidden_size <= 0 or self.n_layers <= 0:
            raise InvalidArgument("hidden_size and n_layers must be positive")
        if self.arch is Arch.DLINEAR and (self.ma_kernel % 2 == 0 or not 1 <= self.ma_kernel <= self.input_size):
            raise InvalidArgument(f"ma_kernel must be odd and <= input_size, got {self.ma_kernel}")
        if self.arch is Arch.NHITS:
            if len(self.pool_kernels) != self.n_layers or len(self.interp_factors) != self.n_layers:
                raise InvalidArgument("NHITS needs one pool kernel and one interpolation factor per stack")
            if min(self.pool_kernels) < 1 or min(self.interp_factors) < 1:
                raise InvalidArgument("pool kernels and interpolation factors must be >= 1")
        if self.arch is Arch.PATCHTST:
            if not 1 <= self.patch_length <= self.input_size:
                raise InvalidArgument(
                    f"patch_length {self.patch_length} outside [1, {self.input_size}]"
                )
            if self.hidden_size % self.n_heads:
                raise InvalidArgument("hidden_size must be divisible by n_heads")

    @property
    def n_patches(self) -> int:
        return math.ceil(self.input_size / self.patch_length)

    def to_json(self) -> dict:
        d = asdict(self)
        d["arch"] = self.arch.value
        d["pool_kernels"] = list(self.pool_kernels)
        d["interp_factors"] = list(self.interp_factors)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class ParamSpec:
    shape: tuple[int, ...]
    init: str  # "uniform" (scaled by fan_in), "zeros" or "ones"
    fan_in: int = 1


def _lin(prefix: str, n_in: int, n_out: int) -> dict[str, ParamSpec]:
    return {
        f"{prefix}.weight": ParamSpec((n_in, n_out), "uniform", n_in),
        f"{prefix}.bias": ParamSpec((n_out,), "zeros"),
    }


def _norm(prefix: str, d: int) -> dict[str, ParamSpec]:
    return {f"{prefix}.gain": ParamSpec((d,), "ones"), f"{prefix}.shift": ParamSpec((d,), "zeros")}


def param_layout(cfg: ModelConfig) -> dict[str, ParamSpec]:
    L, H, d = cfg.input_size, cfg.horizon, cfg.hidden_size
    out: dict[str, ParamSpec] = {}
    if cfg.arch is Arch.MLP:
        width = L
        for i in range(cfg.n_layers):
            out |= _lin(f"hidden{i}", width, d)
            width = d
        out |= _lin("head", d, H)
    elif cfg.arch is Arch.DLINEAR:
        out |= _lin("trend", L, H) | _lin("seasonal", L, H)
    elif cfg.arch is Arch.NHITS:
        for s, (k, r) in enumerate(zip(cfg.pool_kernels, cfg.interp_factors)):
            width = math.ceil(L / k)
            for j in range(cfg.mlp_depth):
                out |= _lin(f"stack{s}.fc{j}", width, d)
                width = d
            out |= _lin(f"stack{s}.theta", d, math.ceil(L / r) + math.ceil(H / r))
    elif cfg.arch is Arch.PATCHTST:
        n = cfg.n_patches
        out |= _lin("embed", cfg.patch_length, d)
        out["pos"] = ParamSpec((n, d), "uniform", d)
        for i in range(cfg.n_layers):
            p = f"layer{i}"
            out |= _norm(f"{p}.ln1", d)
            for proj in "qvo":
                out |= _lin(f"{p}.attn.{proj}", d, d)
            # a key bias shifts every score in a row equally, which softmax ignores
            out[f"{p}.attn.k.weight"] = ParamSpec((d, d), "uniform", d)
            out |= _norm(f"{p}.ln2", d)
            out |= _lin(f"{p}.ff1", d, cfg.ff_dim) | _lin(f"{p}.ff2", cfg.ff_dim, d)
        out |= _norm("final_ln", d)
        out |= _lin("head", n * d, H)
    return out


def _rng_for(seed: int, name: str) -> np.random.Generator:
    # counter-based generator keyed by (seed, parameter name)
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def fingerprint(params: dict[str, Tensor]) -> str:
    h = hashlib.sha256()
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name].data, dtype="<f8")
        h.update(name.encode())
        h.update(json.dumps(list(arr.shape)).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


@dataclass
class ModelInstance:
    config: ModelConfig
    params: dict[str, Tensor]
    init_fingerprint: str = ""
    trained: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def fingerprint(self) -> str:
        return fingerprint(self.params)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.data for k, p in self.params.items()}

    def load(self, arrays: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            if arrays[k].shape != p.shape:
                raise InvalidArgument(f"shape mismatch loading {k}")
            p.data = np.array(arrays[k], dtype=np.float64)


def init_params(config: ModelConfig) -> ModelInstance:
    """Weights uniform in +-1/sqrt(fan_in) from a per-name generator; biases zero."""
    params = {}
    for name, spec in param_layout(config).items():
        if spec.init == "uniform":
            bound = 1.0 / math.sqrt(spec.fan_in)
            arr = _rng_for(config.seed, name).uniform(-bound, bound, size=spec.shape)
        elif spec.init == "ones":
            arr = np.ones(spec.shape)
        else:
            arr = np.zeros(spec.shape)
        params[name] = Tensor(arr, requires_grad=True, name=name)
    return ModelInstance(config, params, init_fingerprint=fingerprint(params))


def prepare_context(m: ModelInstance, context, arch: Arch) -> tuple[np.ndarray, bool]:
    """Validate architecture and length; return a 2-D (batch, L) array and a squeeze flag."""
    if m.config.arch is not arch:
        raise InvalidArgument(f"model is {m.config.arch.value}, not {arch.value}")
    ctx = context.data if isinstance(context, Tensor) else np.asarray(context, dtype=np.float64)
    squeeze = ctx.ndim == 1
    if squeeze:
        ctx = ctx[None, :]
    if ctx.ndim != 2 or ctx.shape[1] != m.config.input_size:
        raise InvalidArgument(
            f"context must have length {m.config.input_size}, got shape {np.shape(context)}"
        )
    return ctx, squeeze

"""LLM training workloads: model catalog, parallelism configs and traffic volumes.

Volumes follow Megatron-style accounting per NPU and per training iteration.
With ``T`` tokens per micro-batch on one sequence-parallel rank and hidden
size ``h``, the activation buffer is ``act = T * h * bytes_per_elem``:

* TP: four all-reduces of ``act`` per layer per micro-batch (two forward,
  two backward).
* SP: four all-gathers of ``act / 2`` (K and V, forward and backward) plus
  one all-gather of ``act`` per layer per micro-batch.
* EP: four all-to-alls per MoE layer per micro-batch, each moving
  ``act * top_k / (ep * tp)`` to every peer.
* PP: one activation or gradient send per micro-batch per stage boundary,
  averaged over stages.
* DP: one all-reduce of the local gradients, split into ``dp`` shards.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

from .errors import InvalidConfigError

KINDS = ("TP", "SP", "EP", "PP", "DP")
PATTERNS = {"TP": "AllReduce", "SP": "AllGather", "EP": "AlltoAll", "PP": "P2P", "DP": "AllReduce"}


@dataclass(frozen=True)
class ModelSpec:
    """Transformer model description.

    Attributes:
        experts: number of experts per MoE layer, 0 for dense models.
        seq_len: tokens per sequence.
        global_batch: sequences per iteration.
        micro_batch: sequences per micro-batch.
    """

    name: str
    layers: int
    heads: int
    head_size: int
    hidden: int
    experts: int = 0
    seq_len: int = 8192
    global_batch: int = 1024
    micro_batch: int = 1
    top_k: int = 2
    ffn_mult: int = 4
    bytes_per_elem: int = 2

    def __post_init__(self):
        for name in ("layers", "heads", "head_size", "hidden", "seq_len", "global_batch", "micro_batch",
                     "top_k", "ffn_mult", "bytes_per_elem"):
            if getattr(self, name) <= 0:
                raise InvalidConfigError(f"{self.name}: {name} must be positive")
        if self.experts < 0:
            raise InvalidConfigError(f"{self.name}: experts must be >= 0")

    @property
    def is_moe(self) -> bool:
        return self.experts > 0

    @property
    def attn_params_per_layer(self) -> int:
        return 4 * self.hidden * self.hidden

    @property
    def mlp_params_per_layer(self) -> int:
        """Parameters of one dense MLP (or one expert)."""
        return 2 * self.ffn_mult * self.hidden * self.hidden

    @property
    def params(self) -> int:
        mlp = self.mlp_params_per_layer * max(1, self.experts)
        return self.layers * (self.attn_params_per_layer + mlp)

    @property
    def active_params(self) -> int:
        mlp = self.mlp_params_per_layer * (min(self.top_k, self.experts) if self.is_moe else 1)
        return self.layers * (self.attn_params_per_layer + mlp)

    def with_(self, **kw) -> "ModelSpec":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


_CATALOG = (
    ModelSpec("LLAMA-70B", 80, 64, 128, 8192),
    ModelSpec("GPT3-175B", 96, 96, 128, 12288),
    ModelSpec("Dense-1T", 128, 128, 192, 24576),
    ModelSpec("GPT4-2T", 96, 96, 128, 12288, experts=16),
    ModelSpec("MoE-10T", 128, 144, 128, 18432, experts=32),
)


def catalog() -> list[ModelSpec]:
    """The five benchmark models."""
    return list(_CATALOG)


def get_model(name: str) -> ModelSpec:
    for m in _CATALOG:
        if m.name.lower() == name.lower():
            return m
    if name.lower() == REFERENCE_MOE.name.lower():
        return REFERENCE_MOE
    known = ", ".join(m.name for m in _CATALOG)
    raise InvalidConfigError(f"unknown model {name!r}; known: {known}")


@dataclass(frozen=True, order=True)
class ParallelismConfig:
    tp: int = 1
    sp: int = 1
    ep: int = 1
    pp: int = 1
    dp: int = 1

    @property
    def npus(self) -> int:
        return self.tp * self.sp * self.pp * self.dp

    def as_tuple(self) -> tuple[int, ...]:
        return (self.tp, self.sp, self.ep, self.pp, self.dp)

    def to_dict(self) -> dict:
        return asdict(self)

    def violations(self, model: ModelSpec | None = None, npus: int | None = None) -> list[str]:
        """Every constraint this config breaks; empty when valid."""
        bad = []
        for k, v in asdict(self).items():
            if v < 1:
                bad.append(f"{k} must be >= 1")
        if bad:
            return bad
        if npus is not None and self.npus != npus:
            bad.append(f"tp*sp*pp*dp = {self.npus} != {npus} NPUs")
        if (self.sp * self.dp) % self.ep:
            bad.append(f"sp*dp = {self.sp * self.dp} is not a multiple of ep = {self.ep}")
        if model is not None:
            if model.heads % self.tp:
                bad.append(f"tp = {self.tp} does not divide {model.heads} heads")
            if self.pp > model.layers:
                bad.append(f"pp = {self.pp} exceeds {model.layers} layers")
            if model.is_moe:
                if model.experts % self.ep:
                    bad.append(f"ep = {self.ep} does not divide {model.experts} experts")
            elif self.ep != 1:
                bad.append("dense model requires ep = 1")
            if model.global_batch % (self.dp * model.micro_batch):
                bad.append(f"global batch {model.global_batch} not divisible by dp*micro_batch")
            if model.seq_len % self.sp:
                bad.append(f"sp = {self.sp} does not divide sequence length {model.seq_len}")
        return bad

    def validate(self, model: ModelSpec | None = None, npus: int | None = None) -> "ParallelismConfig":
        bad = self.violations(model, npus)
        if bad:
            raise InvalidConfigError("; ".join(bad), violations=bad)
        return self


@dataclass(frozen=True)
class TrafficEntry:
    kind: str
    pattern: str
    transfers: tuple[tuple[float, int], ...]  # (bytes per transfer, count)

    @property
    def volume(self) -> float:
        return sum(v * c for v, c in self.transfers)

    @property
    def count(self) -> int:
        return sum(c for _, c in self.transfers)


@dataclass
class TrafficProfile:
    model: str
    config: ParallelismConfig
    entries: dict[str, TrafficEntry] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return sum(e.volume for e in self.entries.values())

    def fractions(self) -> dict[str, float]:
        """Percent of total traffic per parallelism kind (0 when there is no traffic)."""
        tot = self.total
        return {k: (100.0 * e.volume / tot if tot else 0.0) for k, e in self.entries.items()}

    def rows(self) -> list[dict]:
        frac = self.fractions()
        mib = float(1 << 20)
        out = []
        for k, e in self.entries.items():
            out.append({
                "parallelism": k,
                "pattern": e.pattern,
                "volume_per_transfer_mib": "/".join(f"{v / mib:.2f}" for v, _ in e.transfers),
                "transfers": "/".join(str(c) for _, c in e.transfers),
                "total_gib": round(e.volume / (1 << 30), 4),
                "traffic_pct": round(frac[k], 2),
            })
        return out

    def to_dict(self) -> dict:
        return {"model": self.model, "config": self.config.to_dict(), "rows": self.rows()}


def microbatches(model: ModelSpec, p: ParallelismConfig) -> int:
    return model.global_batch // (p.dp * model.micro_batch)


def activation_bytes(model: ModelSpec, p: ParallelismConfig) -> float:
    tokens = model.seq_len * model.micro_batch / p.sp
    return tokens * model.hidden * model.bytes_per_elem


def gradient_bytes(model: ModelSpec, p: ParallelismConfig) -> float:
    """Bytes of gradients held by one NPU."""
    layers = model.layers / p.pp
    attn = model.attn_params_per_layer / p.tp
    if model.is_moe:
        mlp = model.mlp_params_per_layer * model.experts / (p.ep * p.tp)
    else:
        mlp = model.mlp_params_per_layer / p.tp
    return layers * (attn + mlp) * model.bytes_per_elem


def traffic(model: ModelSpec, p: ParallelismConfig) -> TrafficProfile:
    """Per-NPU, per-iteration traffic of each parallelism kind."""
    p.validate(model)
    m = microbatches(model, p)
    layers = model.layers / p.pp
    act = activation_bytes(model, p)
    per_layer = int(round(4 * layers * m))
    entries = {}
    entries["TP"] = ((act, per_layer),) if p.tp > 1 else ()
    if p.sp > 1:
        entries["SP"] = ((act / 2, per_layer), (act, int(round(layers * m))))
    else:
        entries["SP"] = ()
    if model.is_moe and p.ep > 1:
        entries["EP"] = ((act * model.top_k / (p.ep * p.tp), per_layer),)
    else:
        entries["EP"] = ()
    if p.pp > 1:
        sends = 2 * m * (p.pp - 1) / p.pp
        entries["PP"] = ((act, int(math.ceil(sends))),)
    else:
        entries["PP"] = ()
    entries["DP"] = ((gradient_bytes(model, p) / p.dp, p.dp),) if p.dp > 1 else ()
    prof = TrafficProfile(model.name, p)
    for k in KINDS:
        prof.entries[k] = TrafficEntry(k, PATTERNS[k], tuple(x for x in entries[k] if x[1] > 0))
    return prof


@dataclass(frozen=True)
class CommOp:
    """One collective in an iteration trace, repeated ``count`` times."""

    kind: str
    pattern: str
    bytes: float
    count: int


def iteration_trace(model: ModelSpec, p: ParallelismConfig) -> list[CommOp]:
    """Flattened communication trace of one iteration, in kind order."""
    prof = traffic(model, p)
    return [CommOp(k, e.pattern, v, c) for k, e in prof.entries.items() for v, c in e.transfers]


def compute_time_ns(model: ModelSpec, p: ParallelismConfig, npu_tflops: float = 400.0, mfu: float = 0.5) -> float:
    """Per-iteration compute time on one NPU (6 FLOPs per active parameter per token)."""
    if npu_tflops <= 0 or not 0 < mfu <= 1:
        raise InvalidConfigError("npu_tflops must be positive and mfu in (0, 1]")
    tokens = model.global_batch * model.seq_len
    flops = 6.0 * model.active_params * tokens / p.npus
    return flops / (npu_tflops * 1e12 * mfu) * 1e9


# calibration target for the traffic split of a 2T-parameter MoE at 8K NPUs;
# the exact production config is not public, this one matches the split within a few points
REFERENCE_MOE = ModelSpec("MoE-2T-ref", 96, 96, 128, 12288, experts=16, seq_len=131072, global_batch=1664)
REFERENCE_MOE_CONFIG = ParallelismConfig(tp=8, sp=8, ep=8, pp=2, dp=64)

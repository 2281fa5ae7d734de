"""Inlier-scoring network for putative correspondences.

The forward pipeline, all built on the autodiff Tensor:

1. contextual embedding: lift each pair (p_s, p_t) to d channels and mix
   rows through the length-consistency matrix,
2. orthogonal integration: split features into the component parallel to
   a pooled global descriptor and the residual orthogonal to it,
3. gestalt attention: correspondence-level and channel-level attention
   maps exchanged through cross attention,
4. multi-granularity mixing: channel-pyramid aggregation of the two
   attention outputs,
5. classification head: per-pair inlier probability.

Every block can be ablated to an identity pass-through, which keeps the
surrounding pipeline runnable for ablation studies. All math is float64;
forwards are deterministic for a fixed parameter seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .autodiff import Tensor, concat_cols, no_grad
from .errors import ConfigurationError, DegenerateInputError
from .geometry import CorrespondenceSet
from .nn import BatchNorm, InstanceNorm, Linear, flatten_tensors
from .nn import assign_parameters, load_parameters, save_parameters

POOLED_NORM_FLOOR = 1e-12  # below this, projection onto the pooled vector is a zero map


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 32          # feature width d
    granularities: int = 3      # pyramid depth T (levels 0..T)
    bottleneck_ratio: int = 4
    shuffle_groups: int = 2
    sc_sigma: float = 0.10      # meters; length-consistency scale in the embedding
    top_down_include_finest: bool = False

    def __post_init__(self):
        d, t = self.channels, self.granularities
        if t < 1:
            raise ConfigurationError(f"ModelConfig: granularities must be >= 1, got {t}")
        if d < 2 or d % (2 ** t) != 0:
            raise ConfigurationError(
                f"ModelConfig: channels {d} not divisible by 2^granularities = {2 ** t}"
            )
        if d % self.bottleneck_ratio != 0:
            raise ConfigurationError(
                f"ModelConfig: channels {d} not divisible by bottleneck_ratio "
                f"{self.bottleneck_ratio}"
            )
        if d % self.shuffle_groups != 0:
            raise ConfigurationError(
                f"ModelConfig: channels {d} not divisible by shuffle_groups "
                f"{self.shuffle_groups}"
            )
        if self.sc_sigma <= 0.0:
            raise ConfigurationError(
                f"ModelConfig: sc_sigma must be positive, got {self.sc_sigma}"
            )

    def to_dict(self) -> dict:
        return {
            "channels": self.channels,
            "granularities": self.granularities,
            "bottleneck_ratio": self.bottleneck_ratio,
            "shuffle_groups": self.shuffle_groups,
            "sc_sigma": self.sc_sigma,
            "top_down_include_finest": self.top_down_include_finest,
        }

    @staticmethod
    def from_dict(doc: dict) -> "ModelConfig":
        return ModelConfig(**doc)


@dataclass(frozen=True)
class Ablation:
    """True disables the named block (identity pass-through)."""

    oi: bool = False
    gfa: bool = False
    dmg: bool = False

    BLOCKS = ("oi", "gfa", "dmg")

    @staticmethod
    def from_names(names) -> "Ablation":
        names = list(names)
        bad = sorted(set(names) - set(Ablation.BLOCKS))
        if bad:
            raise ConfigurationError(
                f"unknown ablation flags {bad}, expected subset of {Ablation.BLOCKS}"
            )
        return Ablation(**{b: b in names for b in Ablation.BLOCKS})

    def disabled(self) -> tuple[str, ...]:
        return tuple(b for b in self.BLOCKS if getattr(self, b))

    def tag(self) -> str:
        off = self.disabled()
        return "full" if not off else "no_" + "_".join(off)


def pyramid_widths(channels: int, granularities: int) -> list[int]:
    """Channel widths of pyramid levels 0..T: d, d/2, ..., d/2^T."""
    return [channels // (2 ** t) for t in range(granularities + 1)]


def fused_width(channels: int, granularities: int) -> int:
    """Width of the pre-fusion concatenation: d * (2 - 2^-T)."""
    return sum(pyramid_widths(channels, granularities))


def halving_pool_matrix(width: int) -> np.ndarray:
    """Constant (width, width/2) matrix averaging adjacent channel pairs."""
    half = width // 2
    p = np.zeros((width, half))
    for j in range(half):
        p[2 * j, j] = 0.5
        p[2 * j + 1, j] = 0.5
    return p


class ContextualEmbedding:
    """(p_s, p_t) 6-vectors -> d channels, mixed by length consistency.

    After the two linear lifts, each row is augmented with the
    consistency-weighted average of all rows: F <- F + SC F / N.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        d = cfg.channels
        self.sc_sigma = cfg.sc_sigma
        self.lift = Linear(6, d, rng)
        self.norm = InstanceNorm()
        self.mix = Linear(d, d, rng)

    def __call__(self, c: CorrespondenceSet) -> Tensor:
        n = len(c)
        if n < 4:
            raise DegenerateInputError(f"ContextualEmbedding: needs N >= 4, got {n}")
        raw = Tensor(np.concatenate([c.source, c.target], axis=1))
        feats = self.mix(self.norm(self.lift(raw)).relu())
        # The reference (backend-independent) kernel keeps model outputs and
        # training trajectories bit-identical with or without numba.
        sc = kernels.consistency_matrix_reference(c.source, c.target, self.sc_sigma)
        return feats + Tensor(sc).matmul(feats) * (1.0 / n)

    def tensors(self):
        return {"lift": self.lift.tensors(), "mix": self.mix.tensors()}


class OrthogonalIntegration:
    """Decompose features against a learned pooled descriptor.

    A per-row inlier weight (linear + sigmoid) pools the features into a
    global descriptor, a two-layer bottleneck refines it, every row is
    split into its projection onto the refined descriptor plus the
    orthogonal residual, and residual and descriptor are fused back with
    a skip connection.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        d = cfg.channels
        self.weigh = Linear(d, 1, rng)
        self.squeeze = Linear(d, d // cfg.bottleneck_ratio, rng)
        self.expand = Linear(d // cfg.bottleneck_ratio, d, rng)
        self.fuse = Linear(2 * d, d, rng)

    @staticmethod
    def project_onto(feats: Tensor, direction: Tensor) -> Tensor:
        """Row-wise projection of (N, d) features onto a (1, d) direction."""
        norm_sq = (direction * direction).sum()
        coef = feats.matmul(direction.T) / norm_sq           # (N, 1)
        return coef.matmul(direction)                        # (N, d)

    def decompose(self, feats: Tensor) -> dict:
        """Pooled descriptor, refined direction, and the row-wise split."""
        w = self.weigh(feats).sigmoid()                      # (N, 1)
        pooled = w.T.matmul(feats) / w.sum()                 # (1, d) weighted average
        refined = self.expand(self.squeeze(pooled).relu())   # (1, d)
        norm_sq = float((refined * refined).sum().value.reshape(()))
        degenerate = norm_sq < POOLED_NORM_FLOOR ** 2
        if degenerate:
            projection = Tensor(np.zeros(feats.shape))
        else:
            projection = self.project_onto(feats, refined)
        return {
            "weights": w,
            "pooled": pooled,
            "refined": refined,
            "projection": projection,
            "degenerate": degenerate,
        }

    def __call__(self, feats: Tensor) -> tuple[Tensor, dict]:
        n = feats.shape[0]
        parts = self.decompose(feats)
        residual = feats - parts["projection"]
        rows_of_refined = Tensor(np.ones((n, 1))).matmul(parts["refined"])
        out = self.fuse(concat_cols([residual, rows_of_refined])) + feats
        return out, {"pooled_vector_near_zero": parts["degenerate"]}

    def tensors(self):
        return {
            "weigh": self.weigh.tensors(),
            "squeeze": self.squeeze.tensors(),
            "expand": self.expand.tensors(),
            "fuse": self.fuse.tensors(),
        }


class GestaltAttention:
    """Row-level and channel-level self attention plus cross exchange.

    The two self-attention maps are unscaled; the cross attention between
    their outputs uses the standard 1/sqrt(d) scaling. Each attention
    output passes through its own pointwise linear layer and adds a skip
    from its query-side input.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        d = cfg.channels
        self.d = d
        self.to_query = Linear(d, d, rng)
        self.to_key = Linear(d, d, rng)
        self.to_value = Linear(d, d, rng)
        self.pw_rows = Linear(d, d, rng)
        self.pw_channels = Linear(d, d, rng)
        self.pw_cross_rows = Linear(d, d, rng)
        self.pw_cross_channels = Linear(d, d, rng)

    def __call__(self, feats: Tensor) -> tuple[Tensor, Tensor]:
        q = self.to_query(feats)
        k = self.to_key(feats)
        v = self.to_value(feats)

        row_map = q.matmul(k.T).softmax_rows()               # (N, N)
        at_rows = self.pw_rows(row_map.matmul(v)) + feats

        chan_map = q.T.matmul(k).softmax_rows()              # (d, d)
        at_channels = self.pw_channels(chan_map.matmul(v.T).T) + feats

        scale = 1.0 / np.sqrt(self.d)
        cross_rows = (at_rows.matmul(at_channels.T) * scale).softmax_rows()
        out_rows = self.pw_cross_rows(cross_rows.matmul(at_channels)) + at_rows
        cross_channels = (at_channels.matmul(at_rows.T) * scale).softmax_rows()
        out_channels = self.pw_cross_channels(cross_channels.matmul(at_rows)) + at_channels
        return out_rows, out_channels

    def tensors(self):
        return {
            "to_query": self.to_query.tensors(),
            "to_key": self.to_key.tensors(),
            "to_value": self.to_value.tensors(),
            "pw_rows": self.pw_rows.tensors(),
            "pw_channels": self.pw_channels.tensors(),
            "pw_cross_rows": self.pw_cross_rows.tensors(),
            "pw_cross_channels": self.pw_cross_channels.tensors(),
        }


class MixUnit:
    """InstanceNorm -> BatchNorm -> ReLU -> pointwise linear."""

    def __init__(self, w_in: int, w_out: int, rng: np.random.Generator):
        self.inorm = InstanceNorm()
        self.bnorm = BatchNorm(w_in)
        self.lin = Linear(w_in, w_out, rng)

    def __call__(self, x: Tensor, mode: str) -> Tensor:
        return self.lin(self.bnorm(self.inorm(x), mode).relu())

    def tensors(self):
        return {"bnorm": self.bnorm.tensors(), "lin": self.lin.tensors()}

    def buffers(self):
        return {"bnorm": self.bnorm.buffers()}


class MultiGranularityMixer:
    """Channel-pyramid aggregation of the two attention outputs.

    Level t of a pyramid averages disjoint groups of 2^t adjacent
    channels (widths d/2^t for t = 0..T). The first pyramid is refined
    bottom-up (t = 1..T, each level reads the already-updated finer
    neighbor), the second top-down (t = T-1..1, reading the
    already-updated coarser neighbor; level T stays as pooled, and the
    finest level joins only when configured). Matching levels are summed,
    concatenated (width d * (2 - 2^-T)) and fused back to d channels,
    ending in a channel shuffle.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        d, t_max = cfg.channels, cfg.granularities
        self.t_max = t_max
        self.shuffle_groups = cfg.shuffle_groups
        widths = pyramid_widths(d, t_max)
        self.widths = widths
        self.pools = [Tensor(halving_pool_matrix(w)) for w in widths[:-1]]
        self.bottom_up = {t: MixUnit(widths[t - 1], widths[t], rng) for t in range(1, t_max + 1)}
        td_levels = list(range(t_max - 1, -1 if cfg.top_down_include_finest else 0, -1))
        self.top_down = {t: MixUnit(widths[t + 1], widths[t], rng) for t in td_levels}
        self.fusion = MixUnit(fused_width(d, t_max), d, rng)
        self.last_concat_width: int | None = None

    def build_pyramid(self, feats: Tensor) -> list[Tensor]:
        levels = [feats]
        for pool in self.pools:
            levels.append(levels[-1].matmul(pool))
        return levels

    def __call__(self, fine: Tensor, coarse_src: Tensor, mode: str) -> Tensor:
        f = self.build_pyramid(fine)
        g = self.build_pyramid(coarse_src)
        for t in range(1, self.t_max + 1):
            f[t] = f[t] + self.bottom_up[t](f[t - 1], mode)
        for t in sorted(self.top_down, reverse=True):
            g[t] = g[t] + self.top_down[t](g[t + 1], mode)
        stacked = concat_cols([f[t] + g[t] for t in range(self.t_max + 1)])
        self.last_concat_width = stacked.shape[1]
        fusedv = self.fusion(stacked, mode)
        return fusedv.channel_shuffle(self.shuffle_groups)

    def tensors(self):
        tree = {"fusion": self.fusion.tensors()}
        for t, unit in self.bottom_up.items():
            tree[f"bottom_up_{t}"] = unit.tensors()
        for t, unit in self.top_down.items():
            tree[f"top_down_{t}"] = unit.tensors()
        return tree

    def buffers(self):
        tree = {"fusion": self.fusion.buffers()}
        for t, unit in self.bottom_up.items():
            tree[f"bottom_up_{t}"] = unit.buffers()
        for t, unit in self.top_down.items():
            tree[f"top_down_{t}"] = unit.buffers()
        return tree


class ClassificationHead:
    """Linear d -> 1 plus sigmoid: per-correspondence inlier probability."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.lin = Linear(cfg.channels, 1, rng)

    def __call__(self, feats: Tensor) -> Tensor:
        return self.lin(feats).sigmoid()

    def tensors(self):
        return {"lin": self.lin.tensors()}


class GPINet:
    """Full correspondence classifier; see the module docstring."""

    def __init__(self, config: ModelConfig | None = None, seed: int = 0):
        self.config = config or ModelConfig()
        rng = np.random.Generator(np.random.PCG64(seed))
        self.embedding = ContextualEmbedding(self.config, rng)
        self.oi = OrthogonalIntegration(self.config, rng)
        self.gfa = GestaltAttention(self.config, rng)
        self.dmg = MultiGranularityMixer(self.config, rng)
        self.head = ClassificationHead(self.config, rng)

    def forward(
        self,
        c: CorrespondenceSet,
        ablation: Ablation = Ablation(),
        mode: str = "frozen",
    ) -> tuple[Tensor, dict]:
        """Probabilities as an (N, 1) Tensor plus diagnostics.

        ``mode`` controls batch-norm statistics: "train" updates running
        stats, "frozen" (default) normalizes from the current set without
        touching them, "eval" requires populated running stats.
        """
        diagnostics: dict = {"ablation": ablation.tag()}
        feats = self.embedding(c)
        if ablation.oi:
            integrated = feats
        else:
            integrated, oi_diag = self.oi(feats)
            diagnostics.update(oi_diag)
        if ablation.gfa:
            at_rows, at_channels = integrated, integrated
        else:
            at_rows, at_channels = self.gfa(integrated)
        if ablation.dmg:
            # A two-input identity: keep the row-attention path.
            fusedv = at_rows
        else:
            fusedv = self.dmg(at_rows, at_channels, mode)
            diagnostics["concat_width"] = self.dmg.last_concat_width
        probs = self.head(fusedv)
        return probs, diagnostics

    def predict(self, c: CorrespondenceSet, ablation: Ablation = Ablation()) -> np.ndarray:
        """Inference-only probabilities as a flat (N,) array."""
        with no_grad():
            probs, _ = self.forward(c, ablation, mode="frozen")
        return probs.value.ravel().copy()

    # -- parameter plumbing -------------------------------------------------

    def tensor_tree(self) -> dict:
        return {
            "embedding": self.embedding.tensors(),
            "oi": self.oi.tensors(),
            "gfa": self.gfa.tensors(),
            "dmg": self.dmg.tensors(),
            "head": self.head.tensors(),
        }

    def parameters(self) -> dict[str, Tensor]:
        return flatten_tensors(self.tensor_tree())

    def buffers(self) -> dict[str, np.ndarray]:
        flat: dict[str, np.ndarray] = {}

        def walk(tree: dict, prefix: str):
            for key, node in tree.items():
                name = f"{prefix}{key}"
                if isinstance(node, dict):
                    walk(node, f"{name}.")
                elif node is not None:
                    flat[name] = node

        walk({"dmg": self.dmg.buffers()}, "")
        return flat

    def batch_norms(self) -> dict[str, BatchNorm]:
        named = {f"dmg.bottom_up_{t}.bnorm": u.bnorm for t, u in self.dmg.bottom_up.items()}
        named.update({f"dmg.top_down_{t}.bnorm": u.bnorm for t, u in self.dmg.top_down.items()})
        named["dmg.fusion.bnorm"] = self.dmg.fusion.bnorm
        return named

    def save(self, path) -> None:
        save_parameters(path, self.parameters(), self.buffers(), self.config.to_dict())

    @staticmethod
    def load(path) -> "GPINet":
        config_doc, arrays = load_parameters(path)
        config = ModelConfig.from_dict(config_doc) if config_doc else ModelConfig()
        model = GPINet(config, seed=0)
        params = model.parameters()
        param_arrays = {k: v for k, v in arrays.items() if k in params}
        assign_parameters(params, param_arrays)
        for name, layer in model.batch_norms().items():
            loaded = {}
            for stat in ("running_mean", "running_var"):
                key = f"{name}.{stat}"
                if key in arrays:
                    loaded[stat] = arrays[key]
            if loaded:
                layer.load_buffers(loaded)
        return model


def gpinet_forward(
    c: CorrespondenceSet,
    model: GPINet,
    ablation: Ablation = Ablation(),
) -> np.ndarray:
    """Inlier probabilities in [0, 1], one per correspondence."""
    return model.predict(c, ablation)


def bce_loss(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross entropy between (N, 1) probabilities and labels."""
    y = Tensor(np.asarray(labels, dtype=np.float64).reshape(-1, 1))
    p = probs.clip(1e-12, 1.0 - 1e-12)
    return -(y * p.log() + (1.0 - y) * (1.0 - p).log()).mean()

"""PTT block: local vector self-attention over seed features.

Given seeds (3D coordinate + D-dim feature), the block embeds features to an
M-dim space, encodes relative coordinates of each seed's K nearest neighbors
through a small MLP, computes channel-wise attention weights

    w_ij = softmax_j( attn_mlp( alpha(g_i) - beta(g_j) + p_ij ) )

(the softmax normalizing every channel independently across the K
neighbors), aggregates a_i = sum_j w_ij * (gamma(g_j) + p_ij), and returns
the input features plus a closing projection of the aggregate, so output
width equals input width. Coordinates pass through untouched; only relative
coordinates enter, making the block exactly translation-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape
from .nn import LinearLayer, Mlp2, Parameter
from .sampling import knn
from .tape import Tensor


@dataclass(frozen=True)
class PTTConfig:
    """Dimensions of one attention block."""

    d_feat: int = 32  # input/output feature width D
    m_embed: int = 64  # embedding width M
    k_neighbors: int = 8  # local neighborhood size K

    def __post_init__(self):
        if min(self.d_feat, self.m_embed, self.k_neighbors) < 1:
            raise ValueError("all PTT dimensions must be >= 1")


@dataclass(frozen=True)
class SeedSet:
    """Seed coordinates (N, 3) paired with features (N, D)."""

    coords: np.ndarray
    feats: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))
        object.__setattr__(self, "feats", np.asarray(self.feats, dtype=float))
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise ValueError("seed coords must be (N, 3)")
        if self.feats.ndim != 2 or len(self.feats) != len(self.coords):
            raise ValueError("seed feats must be (N, D) aligned with coords")
        if len(self.coords) < 1:
            raise ValueError("a seed set needs at least one seed")
        if not (np.all(np.isfinite(self.coords)) and np.all(np.isfinite(self.feats))):
            raise ValueError("seeds must be finite")

    def __len__(self) -> int:
        return len(self.coords)


class PTTModule:
    """One attention block with its trainable state."""

    def __init__(self, name: str, config: PTTConfig, seed: int):
        d, m = config.d_feat, config.m_embed
        self.config = config
        self.embed = LinearLayer.create(f"{name}.embed", d, m, seed)
        self.eta = Mlp2.create(f"{name}.eta", 3, m, m, seed)
        self.alpha = LinearLayer.create(f"{name}.alpha", m, m, seed)
        self.beta = LinearLayer.create(f"{name}.beta", m, m, seed)
        self.gamma_proj = LinearLayer.create(f"{name}.gamma", m, m, seed)
        self.attn_mlp = Mlp2.create(f"{name}.attn_mlp", m, m, m, seed)
        self.out = LinearLayer.create(f"{name}.out", m, d, seed)
        # populated by forward(record_weights=True), consumed by dump_attention
        self.last_weights: np.ndarray | None = None  # (N, K, M)
        self.last_neighbors: np.ndarray | None = None  # (N, K)

    def parameters(self) -> list[Parameter]:
        return (
            self.embed.parameters()
            + self.eta.parameters()
            + self.alpha.parameters()
            + self.beta.parameters()
            + self.gamma_proj.parameters()
            + self.attn_mlp.parameters()
            + self.out.parameters()
        )

    def feature_embed(self, feats: Tensor) -> Tensor:
        """Point-wise map of input features into the embedding space (N, M)."""
        if feats.data.shape[-1] != self.config.d_feat:
            raise ValueError(
                f"feature width {feats.data.shape[-1]} != configured {self.config.d_feat}"
            )
        return self.embed(feats)

    def position_encode(self, coords: Tensor, neighbors: np.ndarray) -> Tensor:
        """Encode relative neighbor coordinates: (N, K, 3) -> (N, K, M)."""
        n, k = neighbors.shape
        if neighbors.min() < 0 or neighbors.max() >= len(coords.data):
            raise IndexError("neighbor index out of range")
        gathered = tape.gather(coords, neighbors)  # (N, K, 3)
        rel = tape.sub(tape.reshape(coords, (n, 1, 3)), gathered)
        return self.eta(rel)

    def self_attention(
        self, g: Tensor, p: Tensor, neighbors: np.ndarray, record_weights: bool = False
    ) -> Tensor:
        """Aggregate neighborhood values with channel-wise softmax weights.

        Returns the residual correction in input width D (after the closing
        projection). ``record_weights`` stashes the (N, K, M) weights on
        ``last_weights`` for the attention dump.
        """
        n, k = neighbors.shape
        if k < 1:
            raise ValueError("neighborhoods must contain at least one point")
        q = self.alpha(g)  # (N, M)
        key = tape.gather(self.beta(g), neighbors)  # (N, K, M)
        val = tape.gather(self.gamma_proj(g), neighbors)  # (N, K, M)
        m = self.config.m_embed
        scores = self.attn_mlp(tape.sub(tape.reshape(q, (n, 1, m)), key) + p)
        weights = tape.softmax(scores, axis=1)  # per-channel over the K neighbors
        if record_weights:
            self.last_weights = weights.data.copy()
        agg = tape.reduce_sum(tape.mul(weights, val + p), axis=1)  # (N, M)
        return self.out(agg)

    def forward(self, coords: Tensor, feats: Tensor, record_weights: bool = False) -> Tensor:
        """Refined features: input plus the attention correction, width D."""
        n = len(coords.data)
        k = self.config.k_neighbors
        if n < k:
            raise ValueError(f"need at least K={k} seeds for attention, got {n}")
        g = self.feature_embed(feats)
        neighbors = knn(coords.data, coords.data, k)
        if record_weights:
            self.last_neighbors = neighbors.copy()
        p = self.position_encode(coords, neighbors)
        correction = self.self_attention(g, p, neighbors, record_weights=record_weights)
        return feats + correction

    def refine(self, seeds: SeedSet, record_weights: bool = False) -> SeedSet:
        """Array-in, array-out convenience wrapper around :meth:`forward`."""
        out = self.forward(
            Tensor(seeds.coords), Tensor(seeds.feats), record_weights=record_weights
        )
        return SeedSet(coords=seeds.coords.copy(), feats=out.data)


def dump_attention(path, neighbors: np.ndarray, weights: np.ndarray) -> None:
    """Write one line per (seed, neighbor): seed index, neighbor index,
    channel-averaged attention weight."""
    mean_w = weights.mean(axis=2)
    with open(path, "w", encoding="utf-8") as fp:
        for i in range(neighbors.shape[0]):
            for j in range(neighbors.shape[1]):
                fp.write(f"{i} {int(neighbors[i, j])} {mean_w[i, j]:.9f}\n")

"""Backend boundary: what a latent diffusion model must expose, plus a toy one.

A backend provides encode/decode, a noise schedule, a catalog of hookable
self-attention layers, and a ``denoise`` call that runs both branches through
the network in one batch while routing every layer's attention through an
optional hook.

The toy backend is a miniature deterministic denoiser for desk-scale tests:
identity VAE, genuine multi-head QKV self-attention with seeded random
projections, and a DDIM-style update whose clean-image prediction is a fixed
"prior" field plus an attention-derived residual. Because the prediction is
anchored to the prior field, the edited branch drifts toward that field over
the run and its attention descriptors drift with it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .attention import AttentionLogits, AttentionMap, Branch, row_softmax
from .errors import BackendError, InvalidInputError
from .latent import LatentState, NoiseSchedule, cosine_schedule

AttentionHook = Callable[[str, int, Mapping[Branch, AttentionLogits]], Mapping[Branch, AttentionMap]]
"""Receives branch-separated logits for one layer, returns the maps to use.

Hooks must return row-stochastic maps of unchanged shape and must not mutate
the logits. Raising aborts the denoising step.
"""


@dataclass(frozen=True)
class LayerInfo:
    """Catalog entry for one hookable self-attention layer."""

    layer_id: str
    grid: tuple[int, int]
    head_count: int

    @property
    def num_tokens(self) -> int:
        return self.grid[0] * self.grid[1]


@dataclass(frozen=True)
class BackendDescriptor:
    backend_id: str
    latent_shape: tuple[int, int, int]
    layers: tuple[LayerInfo, ...]
    schedule: NoiseSchedule
    noise_scale: float = 1.0
    supports_empty_prompt: bool = True
    supports_batch_concat: bool = True

    def __post_init__(self):
        if not self.layers:
            raise InvalidInputError("layer catalog must be nonempty")

    def layer(self, layer_id: str) -> LayerInfo:
        for info in self.layers:
            if info.layer_id == layer_id:
                return info
        raise BackendError(f"unknown layer {layer_id!r}")


class DiffusionBackend:
    """Interface every adapter implements. See ToyBackend for the contract."""

    descriptor: BackendDescriptor

    def encode(self, image: np.ndarray) -> LatentState:
        raise NotImplementedError

    def decode(self, latent: LatentState) -> np.ndarray:
        raise NotImplementedError

    def denoise(
        self,
        latents: Sequence[LatentState],
        t: int,
        hook: Optional[AttentionHook] = None,
    ) -> dict[Branch, LatentState]:
        raise NotImplementedError


def _positional_features(grid: tuple[int, int]) -> np.ndarray:
    """Fixed sin/cos position code per token, shape (num_tokens, 4)."""
    h, w = grid
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    ys = ys.reshape(-1) / max(h - 1, 1)
    xs = xs.reshape(-1) / max(w - 1, 1)
    return np.stack(
        [np.sin(np.pi * ys), np.cos(np.pi * ys), np.sin(np.pi * xs), np.cos(np.pi * xs)],
        axis=1,
    )


def _pool(latent: np.ndarray, grid: tuple[int, int]) -> np.ndarray:
    """Average-pool (c, H, W) onto a coarser (c, h, w) grid; exact divisors only."""
    c, big_h, big_w = latent.shape
    h, w = grid
    if big_h % h or big_w % w:
        raise BackendError(f"grid {grid} does not divide latent {(big_h, big_w)}")
    fh, fw = big_h // h, big_w // w
    return latent.reshape(c, h, fh, w, fw).mean(axis=(2, 4))

def _unpool(values: np.ndarray, grid: tuple[int, int], full: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor upsample (c, h, w) back onto the latent grid."""
    h, w = grid
    fh, fw = full[0] // h, full[1] // w
    return np.kron(values, np.ones((1, fh, fw)))


class _ToyAttentionLayer:
    """One self-attention block with fixed random projections."""

    def __init__(
        self,
        info: LayerInfo,
        feature_dim: int,
        head_dim: int,
        rng: np.random.Generator,
        sharpness: float,
    ):
        self.info = info
        self.heads = info.head_count
        self.head_dim = head_dim
        self.sharpness = sharpness
        d = self.heads * head_dim
        scale = 1.0 / np.sqrt(feature_dim)
        self.w_q = rng.standard_normal((feature_dim, d)) * scale
        self.w_k = rng.standard_normal((feature_dim, d)) * scale
        # One value projection per head, each mapping back to channel space.
        self.w_v = rng.standard_normal((self.heads, feature_dim, feature_dim - 4)) * scale
        self.positions = _positional_features(info.grid)

    def logits(self, latent: np.ndarray, timestep: int) -> tuple[AttentionLogits, np.ndarray]:
        """Per-head attention scores and the token feature matrix."""
        c = latent.shape[0]
        pooled = _pool(latent, self.info.grid)
        tokens = pooled.reshape(c, -1).T / 127.5 - 1.0
        feats = np.concatenate([tokens, self.positions], axis=1)
        n = feats.shape[0]
        q = (feats @ self.w_q).reshape(n, self.heads, self.head_dim).transpose(1, 0, 2)
        k = (feats @ self.w_k).reshape(n, self.heads, self.head_dim).transpose(1, 0, 2)
        scores = self.sharpness * (q @ k.transpose(0, 2, 1)) / np.sqrt(self.head_dim)
        logits = AttentionLogits(
            values=scores,
            head_count=self.heads,
            layer_id=self.info.layer_id,
            timestep=timestep,
        )
        return logits, feats

    def aggregate(self, attn: AttentionMap, feats: np.ndarray) -> np.ndarray:
        """Head-averaged attention output in channel space, shape (c, h, w)."""
        values = np.einsum("hfc,nf->hnc", self.w_v, feats)
        maps = attn.values if attn.values.ndim == 3 else attn.values[None]
        out = np.einsum("hqk,hkc->qc", maps, values) / self.heads
        h, w = self.info.grid
        return out.T.reshape(-1, h, w)


class ToyBackend(DiffusionBackend):
    """Deterministic miniature denoiser with real QKV self-attention.

    The latent space is the image itself (identity VAE, float64). Each
    denoise step forms a clean-image prediction
    ``x0_hat = prior_field + attn_gain * attention_residual`` and applies the
    deterministic DDIM update between consecutive schedule points. Everything
    is a pure function of (constructor arguments, inputs).
    """

    SPATIAL_FACTOR = 1

    def __init__(
        self,
        layers: int = 2,
        grid: tuple[int, int] = (8, 8),
        seed: int = 0,
        steps: int = 50,
        channels: int = 3,
        heads: int = 2,
        head_dim: int = 4,
        attn_gain: float = 6.0,
        sharpness: float = 6.0,
        target_field: Optional[np.ndarray] = None,
    ):
        if layers < 1:
            raise InvalidInputError("toy backend needs at least one layer")
        if grid[0] < 2 or grid[1] < 2:
            raise InvalidInputError("toy grid must be at least 2x2")
        self.grid = (int(grid[0]), int(grid[1]))
        self.channels = channels
        self.attn_gain = attn_gain
        self.seed = seed

        rng = np.random.default_rng(seed)
        infos = []
        for i in range(layers):
            layer_grid = self.grid
            if i % 2 == 1 and self.grid[0] % 2 == 0 and self.grid[1] % 2 == 0:
                half = (self.grid[0] // 2, self.grid[1] // 2)
                if half[0] >= 2 and half[1] >= 2:
                    layer_grid = half
            infos.append(LayerInfo(layer_id=f"attn{i}", grid=layer_grid, head_count=heads))
        feature_dim = channels + 4
        self._layers = [
            _ToyAttentionLayer(info, feature_dim, head_dim, rng, sharpness) for info in infos
        ]

        if target_field is None:
            target_field = self._default_field(rng)
        field = np.asarray(target_field, dtype=np.float64)
        expected = (channels, self.grid[0], self.grid[1])
        if field.shape != expected:
            raise InvalidInputError(f"target field shape {field.shape} != latent {expected}")
        self.target_field = field

        # Latents live on the 0..255 image scale, so unit-variance noise would
        # be invisible; 64 makes x_T properly noise-dominated.
        self.descriptor = BackendDescriptor(
            backend_id="toy",
            latent_shape=expected,
            layers=tuple(infos),
            schedule=cosine_schedule(steps),
            noise_scale=64.0,
        )

    def _default_field(self, rng: np.random.Generator) -> np.ndarray:
        """Smooth random field in image range, the toy's generative prior."""
        coarse = rng.uniform(40.0, 215.0, size=(self.channels, 2, 2))
        return _unpool(coarse, (2, 2), self.grid)

    def encode(self, image: np.ndarray) -> LatentState:
        arr = np.asarray(image, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise InvalidInputError(f"image must be (h, w[, c]), got shape {arr.shape}")
        h, w, c = arr.shape
        if (h, w) != self.grid or c != self.channels:
            raise InvalidInputError(
                f"image {(h, w, c)} does not match backend latent {self.descriptor.latent_shape}"
            )
        return LatentState(tensor=arr.transpose(2, 0, 1), timestep=0, branch=Branch.SOURCE)

    def decode(self, latent: LatentState) -> np.ndarray:
        arr = latent.tensor
        if arr.shape != self.descriptor.latent_shape:
            raise InvalidInputError(
                f"latent {arr.shape} does not match backend latent {self.descriptor.latent_shape}"
            )
        img = np.clip(np.rint(arr.transpose(1, 2, 0)), 0, 255).astype(np.uint8)
        if img.shape[2] == 1:
            return img[:, :, 0]
        return img

    def _attention_residual(
        self,
        latents: dict[Branch, np.ndarray],
        t: int,
        hook: Optional[AttentionHook],
    ) -> dict[Branch, np.ndarray]:
        residual = {b: np.zeros_like(x) for b, x in latents.items()}
        for layer in self._layers:
            per_branch = {b: layer.logits(x, t) for b, x in latents.items()}
            logits = {b: pair[0] for b, pair in per_branch.items()}
            if hook is not None:
                try:
                    maps = hook(layer.info.layer_id, t, logits)
                except Exception as exc:
                    raise BackendError(
                        f"attention hook failed at layer {layer.info.layer_id!r}, t={t}: {exc}"
                    ) from exc
                for b in latents:
                    got = maps[b]
                    if got.values.shape != logits[b].values.shape:
                        raise BackendError(
                            f"hook changed map shape at layer {layer.info.layer_id!r}"
                        )
            else:
                maps = {b: row_softmax(logits[b], branch=b) for b in latents}
            for b in latents:
                out = layer.aggregate(maps[b], per_branch[b][1])
                residual[b] += _unpool(out, layer.info.grid, self.grid)
        return residual

    def denoise(
        self,
        latents: Sequence[LatentState],
        t: int,
        hook: Optional[AttentionHook] = None,
    ) -> dict[Branch, LatentState]:
        schedule = self.descriptor.schedule
        if not 1 <= t <= schedule.total_steps:
            raise BackendError(f"timestep {t} outside [1, {schedule.total_steps}]")
        by_branch: dict[Branch, np.ndarray] = {}
        for state in latents:
            if state.branch in by_branch:
                raise BackendError(f"duplicate branch {state.branch.value} in batch")
            if state.tensor.shape != self.descriptor.latent_shape:
                raise BackendError(
                    f"latent {state.tensor.shape} != backend latent {self.descriptor.latent_shape}"
                )
            by_branch[state.branch] = state.tensor
        if not by_branch:
            raise BackendError("denoise needs at least one latent")

        residual = self._attention_residual(by_branch, t, hook)
        abar_t = schedule.abar(t)
        abar_prev = schedule.abar(t - 1)
        out: dict[Branch, LatentState] = {}
        for b, x_t in by_branch.items():
            x0_hat = self.target_field + self.attn_gain * residual[b]
            eps_hat = (x_t - np.sqrt(abar_t) * x0_hat) / np.sqrt(1.0 - abar_t)
            x_prev = np.sqrt(abar_prev) * x0_hat + np.sqrt(1.0 - abar_prev) * eps_hat
            out[b] = LatentState(tensor=x_prev, timestep=t - 1, branch=b)
        return out


def create_backend(
    backend_id: str,
    steps: int,
    seed: int = 0,
    image_shape: Optional[tuple[int, ...]] = None,
    **kwargs,
) -> DiffusionBackend:
    """Instantiate a backend by id. Only the desk-scale 'toy' ships built in.

    The toy sizes its latent space to ``image_shape`` (h, w[, c]) when given;
    real adapters have fixed geometry and ignore it. Adapters for pretrained
    checkpoints register here; they are expected to read their native
    schedule rather than re-deriving it, and to document where their weights
    live.
    """
    if backend_id == "toy":
        if image_shape is not None:
            kwargs.setdefault("grid", (image_shape[0], image_shape[1]))
            kwargs.setdefault("channels", image_shape[2] if len(image_shape) == 3 else 1)
        return ToyBackend(steps=steps, seed=seed, **kwargs)
    raise BackendError(f"unknown backend {backend_id!r} (available: toy)")

"""Dual-branch removal loop: reference noising, hooked denoising, blending.

Per step t = T..1 the clean source latent is re-noised to the reference
level, both branches run through the backend in one batch, the hook scores
presence and gates the target branch's self-attention, and the denoised
target is blended against the source path so the background never moves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .attention import (
    AttentionLogits,
    AttentionMap,
    Branch,
    modulated_softmax,
    row_softmax,
)
from .backend import DiffusionBackend, LayerInfo, create_backend
from .errors import ConfigError, InvalidInputError
from .latent import (
    BlendSource,
    LatentState,
    RemovalConfig,
    TokenMask,
    blend,
    dilate_pixel_mask,
    forward_diffuse,
    init_target,
    rasterize_mask,
    reference_latent,
)
from .strategies import StrategyContext, StrategyKind, compute_eta_with_presence

REGION_TOKEN = "region"

AttentionObserver = Callable[[str, int, Branch, AttentionLogits, AttentionMap], None]
"""Diagnostic callback invoked with the final maps used at every hooked layer."""


@dataclass(frozen=True)
class CurvePoint:
    """One presence sample: a (job, timestep, layer, token) measurement."""

    job_id: str
    timestep: int
    layer_id: str
    token_index: int | str
    presence: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "job_id": self.job_id,
                "timestep": self.timestep,
                "layer_id": self.layer_id,
                "token_index": self.token_index,
                "presence": self.presence,
            },
            separators=(",", ":"),
        )


def curves_to_jsonl(points: list[CurvePoint]) -> str:
    return "".join(p.to_json() + "\n" for p in points)


@dataclass
class StepTrace:
    """Per-step latents kept when tracing is enabled (tests, debugging)."""

    timestep: int
    reference: LatentState
    blend_reference: LatentState
    target_raw: LatentState
    target_blended: LatentState


@dataclass
class RemovalResult:
    image: np.ndarray
    curves: list[CurvePoint]
    noise: np.ndarray
    config: RemovalConfig
    trace: Optional[list[StepTrace]] = None

    def curves_jsonl(self) -> str:
        return curves_to_jsonl(self.curves)


def _selected_layers(backend: DiffusionBackend, config: RemovalConfig) -> list[LayerInfo]:
    wanted = config.layer_resolution_filter()
    layers = [
        info
        for info in backend.descriptor.layers
        if wanted is None or info.grid[0] == wanted
    ]
    if not layers:
        raise ConfigError(f"layer filter {config.layers!r} selects no layers")
    return layers


class _SuppressionHook:
    """Stateful attention hook for one removal job.

    Scores presence against the reference branch at every selected layer,
    gates the target branch's softmax, and accumulates curve records. The
    source branch always passes through unmodulated.
    """

    def __init__(
        self,
        strategy: StrategyKind,
        config: RemovalConfig,
        total_steps: int,
        token_masks: dict[str, TokenMask],
        job_id: str,
        observer: Optional[AttentionObserver] = None,
    ):
        self.strategy = strategy
        self.config = config
        self.total_steps = total_steps
        self.token_masks = token_masks
        self.job_id = job_id
        self.observer = observer
        self.curves: list[CurvePoint] = []

    def _record(self, layer_id: str, timestep: int, presence) -> None:
        if presence is None or not presence.scores:
            return
        per_token = (
            self.strategy is StrategyKind.TOKEN_WISE
            and len(presence.scores) <= self.config.curve_token_cap
        )
        if per_token:
            for idx in sorted(presence.scores):
                self.curves.append(
                    CurvePoint(self.job_id, timestep, layer_id, idx, presence.scores[idx])
                )
        mean = float(np.mean(list(presence.scores.values())))
        self.curves.append(CurvePoint(self.job_id, timestep, layer_id, REGION_TOKEN, mean))

    def __call__(
        self, layer_id: str, timestep: int, logits: dict[Branch, AttentionLogits]
    ) -> dict[Branch, AttentionMap]:
        out: dict[Branch, AttentionMap] = {}
        if Branch.SOURCE in logits:
            out[Branch.SOURCE] = row_softmax(logits[Branch.SOURCE], branch=Branch.SOURCE)
        tgt_logits = logits.get(Branch.TARGET)
        if tgt_logits is not None:
            tgt_logits.require_square()
            mask = self.token_masks.get(layer_id)
            tgt_raw = row_softmax(tgt_logits, branch=Branch.TARGET)
            if mask is None or not mask.flags.any():
                out[Branch.TARGET] = tgt_raw
            else:
                ctx = StrategyContext(
                    timestep=timestep,
                    total_steps=self.total_steps,
                    layer_id=layer_id,
                    masked_indices=mask.indices(),
                    num_tokens=mask.num_tokens,
                    src_map=out.get(Branch.SOURCE),
                    tgt_map=tgt_raw,
                    axis=self.config.axis,
                )
                eta, presence = compute_eta_with_presence(self.strategy, ctx)
                out[Branch.TARGET] = modulated_softmax(tgt_logits, eta, branch=Branch.TARGET)
                self._record(layer_id, timestep, presence)
        if self.observer is not None:
            for b, attn in out.items():
                self.observer(layer_id, timestep, b, logits[b], attn)
        return out


def build_token_masks(
    backend: DiffusionBackend, config: RemovalConfig, pixel_mask: np.ndarray
) -> dict[str, TokenMask]:
    """Rasterize the pixel mask onto every selected layer's token grid."""
    masks: dict[str, TokenMask] = {}
    for info in _selected_layers(backend, config):
        masks[info.layer_id] = rasterize_mask(pixel_mask, info.grid)
    return masks


def denoise_step(
    backend: DiffusionBackend,
    src_t: LatentState,
    tgt_t: LatentState,
    hook: _SuppressionHook,
) -> tuple[LatentState, LatentState]:
    """One concatenated-batch network pass; returns (target, source) at t - 1."""
    if src_t.timestep != tgt_t.timestep:
        raise InvalidInputError(
            f"branch timesteps differ: {src_t.timestep} vs {tgt_t.timestep}"
        )
    out = backend.denoise([src_t, tgt_t], src_t.timestep, hook)
    return out[Branch.TARGET], out[Branch.SOURCE]


def run_removal(
    image: np.ndarray,
    pixel_mask: np.ndarray,
    config: RemovalConfig,
    backend: Optional[DiffusionBackend] = None,
    *,
    job_id: str = "run",
    keep_trace: bool = False,
    observer: Optional[AttentionObserver] = None,
) -> RemovalResult:
    """Remove the masked region from the image. Deterministic per (inputs, config).

    ``pixel_mask`` is boolean or uint8 (>= 128 means remove) and must match
    the image's pixel dimensions.
    """
    img = np.asarray(image)
    mask = np.asarray(pixel_mask)
    if mask.dtype != bool:
        if not np.issubdtype(mask.dtype, np.integer):
            raise InvalidInputError(
                f"mask must be boolean or 8-bit integer (>= 128 removes), got {mask.dtype}"
            )
        mask = mask >= 128
    if mask.shape != img.shape[:2]:
        raise InvalidInputError(
            f"mask shape {mask.shape} does not match image {img.shape[:2]}"
        )
    if config.dilate_px:
        mask = dilate_pixel_mask(mask, config.dilate_px)

    if backend is None:
        backend = create_backend(
            config.backend, steps=config.steps, seed=config.seed, image_shape=img.shape
        )
    schedule = backend.descriptor.schedule
    if schedule.total_steps != config.steps:
        raise ConfigError(
            f"backend schedule has {schedule.total_steps} steps, config wants {config.steps}"
        )

    strategy = StrategyKind.parse(config.strategy)
    x0_src = backend.encode(img)
    _, lat_h, lat_w = x0_src.shape
    latent_mask = rasterize_mask(mask, (lat_h, lat_w))
    token_masks = build_token_masks(backend, config, mask)

    rng = np.random.default_rng(config.seed)
    eps = rng.standard_normal(x0_src.shape) * backend.descriptor.noise_scale

    hook = _SuppressionHook(
        strategy=strategy,
        config=config,
        total_steps=schedule.total_steps,
        token_masks=token_masks,
        job_id=job_id,
        observer=observer,
    )

    tgt = init_target(x0_src, schedule, eps)
    trace: list[StepTrace] = []
    for t in range(schedule.total_steps, 0, -1):
        src_t = reference_latent(x0_src, t, config.reference, schedule, eps)
        # The reference branch enters the network at the target's timestep
        # even when its noise level is pinned by the scheme.
        src_in = LatentState(tensor=src_t.tensor, timestep=t, branch=Branch.SOURCE)
        tgt_raw, src_out = denoise_step(backend, src_in, tgt, hook)
        if config.blend_source is BlendSource.FORWARD:
            blend_ref = forward_diffuse(x0_src, t - 1, eps, schedule)
        else:
            blend_ref = src_out
        tgt = blend(tgt_raw, blend_ref, latent_mask)
        if keep_trace:
            trace.append(
                StepTrace(
                    timestep=t,
                    reference=src_t,
                    blend_reference=blend_ref,
                    target_raw=tgt_raw,
                    target_blended=tgt,
                )
            )

    out_image = backend.decode(tgt)
    return RemovalResult(
        image=out_image,
        curves=hook.curves,
        noise=eps,
        config=config,
        trace=trace if keep_trace else None,
    )

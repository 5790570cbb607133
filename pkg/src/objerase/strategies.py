"""Suppression policies: how strongly each masked key token is gated per step.

``token`` is the adaptive per-token policy; ``region`` and ``timestep`` are
the coarser ablation variants, ``full`` hard-zeroes the mask and ``none``
leaves attention untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .attention import (
    AttentionMap,
    DescriptorAxis,
    PresenceField,
    SuppressionVector,
    presence_scores,
    suppression_vector,
)
from .errors import ConfigError, InvalidInputError


class StrategyKind(str, Enum):
    TOKEN_WISE = "token"
    REGION_BASED = "region"
    TIMESTEP_BASED = "timestep"
    FULL = "full"
    NONE = "none"

    @classmethod
    def parse(cls, name: str) -> "StrategyKind":
        try:
            return cls(name)
        except ValueError as exc:
            valid = ", ".join(k.value for k in cls)
            raise ConfigError(f"unknown strategy {name!r} (expected one of: {valid})") from exc

    @property
    def uses_presence(self) -> bool:
        return self in (StrategyKind.TOKEN_WISE, StrategyKind.REGION_BASED)


@dataclass
class StrategyContext:
    """Inputs a policy may consult at one (timestep, layer)."""

    timestep: int
    total_steps: int
    layer_id: str
    masked_indices: np.ndarray
    num_tokens: int
    src_map: Optional[AttentionMap] = None
    tgt_map: Optional[AttentionMap] = None
    axis: DescriptorAxis = DescriptorAxis.KEY_COLUMN

    def __post_init__(self):
        if not 1 <= self.timestep <= self.total_steps:
            raise InvalidInputError(
                f"timestep {self.timestep} outside [1, {self.total_steps}]"
            )
        idx = np.asarray(self.masked_indices, dtype=np.int64).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= self.num_tokens):
            raise InvalidInputError("masked index out of range")
        self.masked_indices = idx


def _require_maps(ctx: StrategyContext, kind: StrategyKind) -> tuple[AttentionMap, AttentionMap]:
    if ctx.src_map is None or ctx.tgt_map is None:
        raise ConfigError(f"strategy {kind.value!r} needs source and target attention maps")
    return ctx.src_map, ctx.tgt_map


def _uniform_field(ctx: StrategyContext, score: float) -> PresenceField:
    return PresenceField(
        scores={int(i): score for i in ctx.masked_indices},
        layer_id=ctx.layer_id,
        timestep=ctx.timestep,
    )


def compute_eta_with_presence(
    kind: StrategyKind, ctx: StrategyContext
) -> tuple[SuppressionVector, Optional[PresenceField]]:
    """Suppression coefficients plus the presence field that produced them.

    The presence field is None for policies that never score presence
    (timestep, full, none), which is also the signal that no curve records
    should be emitted for the step.
    """
    if kind is StrategyKind.NONE:
        return SuppressionVector(np.ones(ctx.num_tokens)), None

    if kind is StrategyKind.FULL:
        coeff = np.ones(ctx.num_tokens)
        coeff[ctx.masked_indices] = 0.0
        return SuppressionVector(coeff), None

    if kind is StrategyKind.TIMESTEP_BASED:
        # Presence proxy t/T: strongest suppression at the first denoising
        # step (t = T), fading to 1/T by t = 1.
        p = ctx.timestep / ctx.total_steps
        coeff = np.ones(ctx.num_tokens)
        coeff[ctx.masked_indices] = 1.0 - p
        return SuppressionVector(np.clip(coeff, 0.0, 1.0)), None

    src_map, tgt_map = _require_maps(ctx, kind)
    field = presence_scores(src_map, tgt_map, ctx.masked_indices, ctx.axis)

    if kind is StrategyKind.REGION_BASED:
        if field.scores:
            mean_p = float(np.mean(list(field.scores.values())))
            field = _uniform_field(ctx, mean_p)

    eta = suppression_vector(field, ctx.masked_indices, ctx.num_tokens)
    return eta, field


def compute_eta(kind: StrategyKind, ctx: StrategyContext) -> SuppressionVector:
    """Suppression coefficients for the given policy and context."""
    eta, _ = compute_eta_with_presence(kind, ctx)
    return eta

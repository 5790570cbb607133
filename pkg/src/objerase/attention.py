"""Self-attention math: softmax, token descriptors, presence scores, gated softmax.

All operations are pure functions over numpy arrays. Attention weight
matrices may carry an optional leading head axis; every row (the key axis of
one query) is a probability distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from .errors import InvalidInputError

ROW_SUM_TOL = 1e-6
ZERO_NORM_EPS = 1e-12
DEGENERATE_ROW_MASS = 1e-20


class Branch(str, Enum):
    SOURCE = "source"
    TARGET = "target"


class DescriptorAxis(str, Enum):
    """Which slice of the attention matrix describes a token.

    KEY_COLUMN is the attention a token receives from every query (the
    default: the suppressed object sits on the key side). QUERY_ROW is the
    attention a token pays to every key.
    """

    KEY_COLUMN = "key_column"
    QUERY_ROW = "query_row"


def _as_weight_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise InvalidInputError(f"{name} must be 2-D or 3-D (heads first), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class AttentionLogits:
    """Pre-softmax attention scores (Q.K^T / sqrt(d)) for one layer and timestep.

    ``values`` has shape (num_queries, num_keys) or (head_count, num_queries,
    num_keys). Entries must be finite.
    """

    values: np.ndarray
    head_count: int = 1
    layer_id: str = ""
    timestep: int = 0

    def __post_init__(self):
        arr = _as_weight_array(self.values, "logits")
        if arr.ndim == 3 and arr.shape[0] != self.head_count:
            raise InvalidInputError(
                f"head axis {arr.shape[0]} != head_count {self.head_count}"
            )
        if self.head_count < 1:
            raise InvalidInputError("head_count must be positive")
        object.__setattr__(self, "values", arr)

    @property
    def num_queries(self) -> int:
        return self.values.shape[-2]

    @property
    def num_keys(self) -> int:
        return self.values.shape[-1]

    def require_square(self) -> None:
        if self.num_queries != self.num_keys:
            raise InvalidInputError(
                f"self-attention logits must be square, got {self.num_queries}x{self.num_keys}"
            )


@dataclass(frozen=True)
class AttentionMap:
    """Row-stochastic attention weights for one layer, timestep and branch."""

    values: np.ndarray
    branch: Optional[Branch] = None
    layer_id: str = ""
    timestep: int = 0

    def __post_init__(self):
        arr = _as_weight_array(self.values, "attention map")
        if arr.min() < 0.0 or arr.max() > 1.0 + ROW_SUM_TOL:
            raise InvalidInputError("attention weights must lie in [0, 1]")
        row_sums = arr.sum(axis=-1)
        if not np.allclose(row_sums, 1.0, atol=ROW_SUM_TOL):
            worst = float(np.abs(row_sums - 1.0).max())
            raise InvalidInputError(f"attention rows must sum to 1 (worst error {worst:.3e})")
        object.__setattr__(self, "values", arr)

    @property
    def head_count(self) -> int:
        return self.values.shape[0] if self.values.ndim == 3 else 1

    @property
    def num_queries(self) -> int:
        return self.values.shape[-2]

    @property
    def num_keys(self) -> int:
        return self.values.shape[-1]


@dataclass(frozen=True)
class TokenDescriptor:
    """Per-token attention signature: one column (or row), averaged over heads."""

    values: np.ndarray
    token_index: int
    axis: DescriptorAxis

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise InvalidInputError("descriptor must be a vector")
        if arr.min() < 0.0:
            raise InvalidInputError("descriptor entries must be nonnegative")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class PresenceField:
    """Presence score per masked token at one (timestep, layer), each in [0, 1]."""

    scores: dict[int, float]
    layer_id: str = ""
    timestep: int = 0

    def __post_init__(self):
        for idx, score in self.scores.items():
            if not (0.0 <= score <= 1.0):
                raise InvalidInputError(f"presence score {score} for token {idx} outside [0, 1]")

    def indices(self) -> set[int]:
        return set(self.scores)


@dataclass(frozen=True)
class SuppressionVector:
    """Per-key gating coefficients: 1 off the mask, 1 - presence on it."""

    coefficients: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coefficients, dtype=np.float64)
        if arr.ndim != 1:
            raise InvalidInputError("suppression coefficients must be a vector")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InvalidInputError("suppression coefficients must lie in [0, 1]")
        object.__setattr__(self, "coefficients", arr)

    def __len__(self) -> int:
        return self.coefficients.shape[0]


def _gated_exp(logits: np.ndarray, eta: Optional[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Return (numerator, row sums) of eta(j) * exp(a_ij - rowmax)."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    num = np.exp(shifted)
    if eta is not None:
        num = num * eta
    return num, num.sum(axis=-1, keepdims=True)


def row_softmax(logits: AttentionLogits, branch: Optional[Branch] = None) -> AttentionMap:
    """Numerically stabilized per-row softmax of the attention scores."""
    num, denom = _gated_exp(logits.values, None)
    return AttentionMap(
        values=num / denom,
        branch=branch,
        layer_id=logits.layer_id,
        timestep=logits.timestep,
    )


def modulated_softmax(
    logits: AttentionLogits,
    eta: SuppressionVector,
    branch: Optional[Branch] = None,
) -> AttentionMap:
    """Softmax with each key's exponential scaled by its suppression coefficient.

    Row i gets weight eta(j) * exp(a_ij) / sum_k eta(k) * exp(a_ik) on key j.
    With eta identically 1 this is bitwise equal to :func:`row_softmax`. Rows
    whose gated mass underflows fall back to the uniform distribution over
    keys with positive eta.
    """
    coeff = eta.coefficients
    if coeff.shape[0] != logits.num_keys:
        raise InvalidInputError(
            f"eta length {coeff.shape[0]} != num_keys {logits.num_keys}"
        )
    alive = coeff > 0.0
    if not alive.any():
        raise InvalidInputError("at least one suppression coefficient must be positive")

    num, denom = _gated_exp(logits.values, coeff)
    degenerate = denom < DEGENERATE_ROW_MASS
    if degenerate.any():
        uniform = alive.astype(np.float64) / alive.sum()
        num = np.where(degenerate, uniform, num)
        denom = np.where(degenerate, 1.0, denom)
    return AttentionMap(
        values=num / denom,
        branch=branch,
        layer_id=logits.layer_id,
        timestep=logits.timestep,
    )


def logit_shift_softmax(
    logits: AttentionLogits,
    eta: SuppressionVector,
    branch: Optional[Branch] = None,
) -> AttentionMap:
    """Equivalent gating expressed as an additive log-eta bias on the logits.

    Requires strictly positive coefficients (log of zero is undefined);
    callers needing hard zeros use :func:`modulated_softmax`.
    """
    coeff = eta.coefficients
    if coeff.shape[0] != logits.num_keys:
        raise InvalidInputError(
            f"eta length {coeff.shape[0]} != num_keys {logits.num_keys}"
        )
    if coeff.min() <= 0.0:
        raise InvalidInputError("logit-shift gating requires strictly positive eta")
    shifted = AttentionLogits(
        values=logits.values + np.log(coeff),
        head_count=logits.head_count,
        layer_id=logits.layer_id,
        timestep=logits.timestep,
    )
    return row_softmax(shifted, branch=branch)


def extract_descriptor(
    attn: AttentionMap,
    token_index: int,
    axis: DescriptorAxis = DescriptorAxis.KEY_COLUMN,
) -> TokenDescriptor:
    """Pull one token's attention vector, averaging over heads when present."""
    n = attn.num_keys if axis is DescriptorAxis.KEY_COLUMN else attn.num_queries
    if not 0 <= token_index < n:
        raise InvalidInputError(f"token index {token_index} out of range for {n} tokens")
    if axis is DescriptorAxis.KEY_COLUMN:
        vec = attn.values[..., :, token_index]
    else:
        vec = attn.values[..., token_index, :]
    if vec.ndim == 2:
        vec = vec.mean(axis=0)
    return TokenDescriptor(values=vec, token_index=token_index, axis=axis)


def cosine_similarity(u: TokenDescriptor, v: TokenDescriptor) -> float:
    """Cosine of two nonnegative descriptors, clamped to [0, 1].

    Degenerate inputs (norm below 1e-12) score 0: an all-zero descriptor
    carries no evidence of the object, so suppression fails open.
    """
    if len(u) != len(v):
        raise InvalidInputError(f"descriptor lengths differ: {len(u)} vs {len(v)}")
    nu = float(np.linalg.norm(u.values))
    nv = float(np.linalg.norm(v.values))
    if nu < ZERO_NORM_EPS or nv < ZERO_NORM_EPS:
        return 0.0
    cos = float(np.dot(u.values, v.values) / (nu * nv))
    return min(max(cos, 0.0), 1.0)


def presence_scores(
    src_map: AttentionMap,
    tgt_map: AttentionMap,
    masked_indices: Iterable[int],
    axis: DescriptorAxis = DescriptorAxis.KEY_COLUMN,
) -> PresenceField:
    """Cosine similarity of target vs source descriptors for every masked token.

    High scores mean the masked token still attends like it did in the source
    image, i.e. the object is still present there.
    """
    if src_map.values.shape != tgt_map.values.shape:
        raise InvalidInputError(
            f"map shapes differ: {src_map.values.shape} vs {tgt_map.values.shape}"
        )
    if src_map.branch is not Branch.SOURCE or tgt_map.branch is not Branch.TARGET:
        raise InvalidInputError("presence_scores expects (source, target) branch maps")
    if (src_map.layer_id, src_map.timestep) != (tgt_map.layer_id, tgt_map.timestep):
        raise InvalidInputError("presence_scores expects maps from the same layer and timestep")
    scores: dict[int, float] = {}
    for idx in masked_indices:
        s = extract_descriptor(src_map, idx, axis)
        t = extract_descriptor(tgt_map, idx, axis)
        scores[int(idx)] = cosine_similarity(t, s)
    return PresenceField(scores=scores, layer_id=src_map.layer_id, timestep=src_map.timestep)


def suppression_vector(
    presence: PresenceField,
    masked_indices: Iterable[int],
    num_keys: int,
) -> SuppressionVector:
    """Turn presence scores into key gates: eta = 1 - p on the mask, 1 elsewhere."""
    masked = {int(i) for i in masked_indices}
    if presence.indices() != masked:
        raise InvalidInputError("presence field domain must equal the masked index set")
    coeff = np.ones(num_keys, dtype=np.float64)
    for idx, p in presence.scores.items():
        if not 0 <= idx < num_keys:
            raise InvalidInputError(f"masked index {idx} out of range for {num_keys} keys")
        coeff[idx] = 1.0 - p
    np.clip(coeff, 0.0, 1.0, out=coeff)
    return SuppressionVector(coefficients=coeff)

"""Latent-space plumbing: noise schedules, latent states, token masks, run config.

The forward process is the usual variance-preserving mixing
``sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps``; timestep t runs from T (most
noise) down to 1, and t = 0 denotes the clean latent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np
from scipy import ndimage

from .attention import Branch, DescriptorAxis
from .errors import ConfigError, InvalidInputError


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal-retention coefficients abar_t for t in [1, T].

    ``alpha_bar[i]`` stores abar_{i+1}. Values must lie in (0, 1] and be
    non-increasing in t.
    """

    alpha_bar: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.alpha_bar, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise InvalidInputError("alpha_bar must be a nonempty vector")
        if arr.min() <= 0.0 or arr.max() > 1.0:
            raise InvalidInputError("alpha_bar entries must lie in (0, 1]")
        if np.any(np.diff(arr) > 0.0):
            raise InvalidInputError("alpha_bar must be non-increasing in t")
        object.__setattr__(self, "alpha_bar", arr)

    @property
    def total_steps(self) -> int:
        return self.alpha_bar.shape[0]

    def abar(self, t: int) -> float:
        """abar_t, extended with abar_0 = 1 for the clean endpoint."""
        if t == 0:
            return 1.0
        if not 1 <= t <= self.total_steps:
            raise InvalidInputError(f"timestep {t} outside [0, {self.total_steps}]")
        return float(self.alpha_bar[t - 1])


def cosine_schedule(total_steps: int) -> NoiseSchedule:
    """Squared-cosine abar curve, strictly inside (0, 1) for t in [1, T]."""
    if total_steps < 1:
        raise InvalidInputError("total_steps must be >= 1")
    t = np.arange(1, total_steps + 1, dtype=np.float64)
    abar = np.cos(0.5 * np.pi * t / (total_steps + 1)) ** 2
    return NoiseSchedule(alpha_bar=abar)


class ReferenceScheme(str, Enum):
    """Which noise level the reference (source) branch is diffused to."""

    MATCHED = "matched"
    FIRST = "first"
    LAST = "last"
    MID = "mid"


class BlendSource(str, Enum):
    """Where the background latent for per-step blending comes from."""

    FORWARD = "forward"
    DENOISED = "denoised"


@dataclass(frozen=True)
class LatentState:
    """A latent tensor (channels, h, w) tagged with its timestep and branch."""

    tensor: np.ndarray
    timestep: int
    branch: Branch

    def __post_init__(self):
        arr = np.asarray(self.tensor, dtype=np.float64)
        if arr.ndim != 3:
            raise InvalidInputError(f"latent must be (channels, h, w), got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("latent contains non-finite entries")
        object.__setattr__(self, "tensor", arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.tensor.shape


@dataclass(frozen=True)
class TokenMask:
    """The pixel mask rasterized onto one spatial token grid.

    A token is masked iff any pixel in its receptive cell is masked
    (max-pooling), so a nonempty pixel mask stays nonempty at every
    resolution.
    """

    flags: np.ndarray
    grid: tuple[int, int]
    pixel_shape: tuple[int, int]

    def __post_init__(self):
        arr = np.asarray(self.flags, dtype=bool)
        if arr.shape != (self.grid[0] * self.grid[1],):
            raise InvalidInputError(
                f"flags length {arr.shape} does not match grid {self.grid}"
            )
        object.__setattr__(self, "flags", arr)

    @property
    def num_tokens(self) -> int:
        return self.flags.shape[0]

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.flags)

    def as_grid(self) -> np.ndarray:
        return self.flags.reshape(self.grid)


def mix_signal_noise(x0: np.ndarray, abar_t: float, eps: np.ndarray) -> np.ndarray:
    """sqrt(abar) * x0 + sqrt(1 - abar) * eps for a single scalar abar."""
    if x0.shape != eps.shape:
        raise InvalidInputError(f"noise shape {eps.shape} != latent shape {x0.shape}")
    if not 0.0 <= abar_t <= 1.0:
        raise InvalidInputError("abar must lie in [0, 1]")
    return np.sqrt(abar_t) * x0 + np.sqrt(1.0 - abar_t) * eps


def forward_diffuse(
    x0: LatentState, t: int, eps: np.ndarray, schedule: NoiseSchedule
) -> LatentState:
    """Noise the clean latent to timestep t (t = 0 returns x0 unchanged)."""
    if t == 0:
        return replace(x0, timestep=0)
    mixed = mix_signal_noise(x0.tensor, schedule.abar(t), np.asarray(eps, dtype=np.float64))
    return LatentState(tensor=mixed, timestep=t, branch=x0.branch)


def init_target(x0_src: LatentState, schedule: NoiseSchedule, eps: np.ndarray) -> LatentState:
    """Starting point for the edited branch: the source fully noised to t = T.

    Uses the same eps realization that later builds every reference latent,
    keeping the two branches' perturbations correlated.
    """
    noised = forward_diffuse(x0_src, schedule.total_steps, eps, schedule)
    return LatentState(tensor=noised.tensor, timestep=noised.timestep, branch=Branch.TARGET)


def reference_timestep(t: int, scheme: ReferenceScheme, total_steps: int) -> int:
    if scheme is ReferenceScheme.MATCHED:
        return t
    if scheme is ReferenceScheme.FIRST:
        return 1
    if scheme is ReferenceScheme.LAST:
        return total_steps
    return max(1, total_steps // 2)


def reference_latent(
    x0_src: LatentState,
    t: int,
    scheme: ReferenceScheme,
    schedule: NoiseSchedule,
    eps: np.ndarray,
) -> LatentState:
    """Source-branch latent fed to the denoiser at step t under the scheme.

    MATCHED diffuses to the target's current noise level; the other schemes
    pin the reference at a fixed level for the whole run.
    """
    if not 1 <= t <= schedule.total_steps:
        raise InvalidInputError(f"timestep {t} outside [1, {schedule.total_steps}]")
    t_ref = reference_timestep(t, scheme, schedule.total_steps)
    return forward_diffuse(x0_src, t_ref, eps, schedule)


def blend(tgt: LatentState, src_ref: LatentState, mask: TokenMask) -> LatentState:
    """Exact per-cell selection: target inside the mask, source outside."""
    if tgt.tensor.shape != src_ref.tensor.shape:
        raise InvalidInputError(
            f"blend shapes differ: {tgt.tensor.shape} vs {src_ref.tensor.shape}"
        )
    if tgt.timestep != src_ref.timestep:
        raise InvalidInputError("blend requires latents at the same timestep")
    _, h, w = tgt.tensor.shape
    if mask.grid != (h, w):
        raise InvalidInputError(f"mask grid {mask.grid} != latent grid {(h, w)}")
    keep = mask.as_grid()[None, :, :]
    merged = np.where(keep, tgt.tensor, src_ref.tensor)
    return LatentState(tensor=merged, timestep=tgt.timestep, branch=tgt.branch)


def dilate_pixel_mask(mask: np.ndarray, radius_px: int) -> np.ndarray:
    """Grow the binary mask by a euclidean disk of the given pixel radius."""
    arr = np.asarray(mask, dtype=bool)
    if radius_px < 0:
        raise InvalidInputError("dilation radius must be >= 0")
    if radius_px == 0 or not arr.any():
        return arr.copy()
    span = np.arange(-radius_px, radius_px + 1)
    yy, xx = np.meshgrid(span, span, indexing="ij")
    disk = (yy**2 + xx**2) <= radius_px**2
    return ndimage.binary_dilation(arr, structure=disk)


def rasterize_mask(pixel_mask: np.ndarray, grid: tuple[int, int]) -> TokenMask:
    """Downsample a binary pixel mask to a token grid with the any-pixel rule."""
    arr = np.asarray(pixel_mask, dtype=bool)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidInputError("pixel mask must be a nonempty 2-D array")
    gh, gw = grid
    if gh < 1 or gw < 1:
        raise InvalidInputError(f"token grid {grid} must be at least 1x1")
    h, w = arr.shape
    if gh > h or gw > w:
        raise InvalidInputError(f"token grid {grid} exceeds pixel grid {(h, w)}")
    row_edges = (np.arange(gh + 1) * h) // gh
    col_edges = (np.arange(gw + 1) * w) // gw
    flags = np.zeros((gh, gw), dtype=bool)
    for r in range(gh):
        rows = arr[row_edges[r] : row_edges[r + 1]]
        if not rows.any():
            continue
        for c in range(gw):
            flags[r, c] = rows[:, col_edges[c] : col_edges[c + 1]].any()
    return TokenMask(flags=flags.reshape(-1), grid=(gh, gw), pixel_shape=(h, w))


@dataclass(frozen=True)
class RemovalConfig:
    """Everything that parameterizes one removal run."""

    steps: int = 50
    seed: int = 0
    strategy: str = "token"
    reference: ReferenceScheme = ReferenceScheme.MATCHED
    axis: DescriptorAxis = DescriptorAxis.KEY_COLUMN
    layers: str = "all"
    dilate_px: int = 0
    blend_source: BlendSource = BlendSource.FORWARD
    backend: str = "toy"
    prompt: str = ""
    use_cfg: bool = False
    curve_token_cap: int = 4096

    def __post_init__(self):
        try:
            object.__setattr__(self, "reference", ReferenceScheme(self.reference))
            object.__setattr__(self, "axis", DescriptorAxis(self.axis))
            object.__setattr__(self, "blend_source", BlendSource(self.blend_source))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.dilate_px < 0:
            raise ConfigError("dilation radius must be >= 0")
        if self.curve_token_cap < 0:
            raise ConfigError("curve token cap must be >= 0")
        if self.layers != "all" and not self.layers.startswith("res:"):
            raise ConfigError("layers must be 'all' or 'res:<n>'")
        if self.layers.startswith("res:"):
            try:
                int(self.layers[4:])
            except ValueError as exc:
                raise ConfigError(f"bad layer filter {self.layers!r}") from exc

    def layer_resolution_filter(self) -> Optional[int]:
        if self.layers == "all":
            return None
        return int(self.layers[4:])

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "seed": self.seed,
            "strategy": self.strategy,
            "reference": self.reference.value,
            "axis": self.axis.value,
            "layers": self.layers,
            "dilate_px": self.dilate_px,
            "blend_source": self.blend_source.value,
            "backend": self.backend,
            "prompt": self.prompt,
            "use_cfg": self.use_cfg,
            "curve_token_cap": self.curve_token_cap,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RemovalConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {
            "steps",
            "seed",
            "strategy",
            "reference",
            "axis",
            "layers",
            "dilate_px",
            "blend_source",
            "backend",
            "prompt",
            "use_cfg",
            "curve_token_cap",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        try:
            if "reference" in kwargs:
                kwargs["reference"] = ReferenceScheme(kwargs["reference"])
            if "axis" in kwargs:
                kwargs["axis"] = DescriptorAxis(kwargs["axis"])
            if "blend_source" in kwargs:
                kwargs["blend_source"] = BlendSource(kwargs["blend_source"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "RemovalConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

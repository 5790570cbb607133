"""Training-free object removal via presence-driven self-attention suppression."""

from .attention import (
    AttentionLogits,
    AttentionMap,
    Branch,
    DescriptorAxis,
    PresenceField,
    SuppressionVector,
    TokenDescriptor,
    cosine_similarity,
    extract_descriptor,
    logit_shift_softmax,
    modulated_softmax,
    presence_scores,
    row_softmax,
    suppression_vector,
)
from .backend import (
    AttentionHook,
    BackendDescriptor,
    DiffusionBackend,
    LayerInfo,
    ToyBackend,
    create_backend,
)
from .errors import BackendError, ConfigError, InvalidInputError, ObjEraseError
from .latent import (
    BlendSource,
    LatentState,
    NoiseSchedule,
    ReferenceScheme,
    RemovalConfig,
    TokenMask,
    blend,
    cosine_schedule,
    dilate_pixel_mask,
    forward_diffuse,
    init_target,
    rasterize_mask,
    reference_latent,
)
from .metrics import EvalReport, EvalRow, psnr
from .pipeline import CurvePoint, RemovalResult, run_removal
from .strategies import StrategyContext, StrategyKind, compute_eta
from .theory import (
    MixtureSpec,
    NoiseSpec,
    empirical_presence,
    g_theory,
    gating_consistency,
    kl_optimal_row,
    noisy_presence_formula,
    noisy_presence_mc,
    presence_curve_experiment,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

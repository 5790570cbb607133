"""Executable checks for the analytical story behind presence-driven gating.

Four groups: the mixture model behind the presence score (closed form vs an
explicit vector construction), its robustness under correlated Gaussian
noise (Monte Carlo vs the expectation ratio), the KL-regularized reweighting
that the gated softmax solves, and a toy end-to-end reproduction of the
declining presence-curve regime.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
import numpy as np

from .backend import ToyBackend
from .errors import InvalidInputError
from .latent import RemovalConfig
from .pipeline import REGION_TOKEN, run_removal


@dataclass(frozen=True)
class MixtureSpec:
    """Parameters of the two-component descriptor mixture."""

    pi: float
    l_s: float = 1.0
    l_b: float = 1.0
    kappa: float = 0.0
    dim: int = 64

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0:
            raise InvalidInputError("pi must lie in [0, 1]")
        if self.l_s <= 0.0 or self.l_b <= 0.0:
            raise InvalidInputError("descriptor norms must be positive")
        if not 0.0 <= self.kappa <= 1.0:
            raise InvalidInputError("kappa must lie in [0, 1]")
        if self.dim < 2:
            raise InvalidInputError("dim must be >= 2")


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian perturbation model for a descriptor pair."""

    sigma: float
    rho: float
    dim: int
    trials: int

    def __post_init__(self):
        if self.sigma < 0.0:
            raise InvalidInputError("sigma must be >= 0")
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidInputError("rho must lie in [0, 1]")
        if self.dim < 1 or self.trials < 1:
            raise InvalidInputError("dim and trials must be positive")


def g_theory(spec: MixtureSpec) -> float:
    """Presence predicted by the mixture model: pi*Ls / sqrt(pi^2 Ls^2 + (1-pi)^2 Lb^2).

    Strictly increasing in pi, 0 at pi = 0 and 1 at pi = 1 for any norms.
    """
    num = spec.pi * spec.l_s
    denom = np.sqrt((spec.pi * spec.l_s) ** 2 + ((1.0 - spec.pi) * spec.l_b) ** 2)
    if denom == 0.0:
        return 0.0
    return float(num / denom)


def _plain_cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def empirical_presence(spec: MixtureSpec, seed: int = 0) -> float:
    """Presence measured on an explicit mixture of concrete vectors.

    Builds object and background descriptors with the requested norms and
    correlation kappa in a random (seeded) orthonormal frame, mixes them, and
    returns the cosine against the object descriptor. Matches :func:`g_theory`
    exactly when kappa = 0.
    """
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((spec.dim, 2)))
    u1, u2 = basis[:, 0], basis[:, 1]
    s = spec.l_s * u1
    b = spec.l_b * (spec.kappa * u1 + np.sqrt(1.0 - spec.kappa**2) * u2)
    mixture = spec.pi * s + (1.0 - spec.pi) * b
    return _plain_cosine(mixture, s)


def noisy_presence_formula(
    clean_src: np.ndarray, clean_tgt: np.ndarray, noise: NoiseSpec
) -> float:
    """Expectation-ratio approximation of the noisy cosine.

    (<S_tgt, S_src> + rho sigma^2 D) / sqrt((|S_tgt|^2 + sigma^2 D)(|S_src|^2 + sigma^2 D))
    """
    var = noise.sigma**2 * noise.dim
    num = float(np.dot(clean_tgt, clean_src)) + noise.rho * var
    denom = np.sqrt(
        (float(np.dot(clean_tgt, clean_tgt)) + var)
        * (float(np.dot(clean_src, clean_src)) + var)
    )
    return float(num / denom)


def noisy_presence_mc(
    clean_src: np.ndarray,
    clean_tgt: np.ndarray,
    noise: NoiseSpec,
    seed: int = 0,
    chunk: int = 500,
) -> float:
    """Monte Carlo mean cosine between the descriptors under correlated noise.

    Both perturbations are N(0, sigma^2 I) with cross-correlation rho. The
    concentration argument this is checked against needs trials >= 1000 and
    dim >= 1024, so those floors are enforced.
    """
    if noise.trials < 1000 or noise.dim < 1024:
        raise InvalidInputError("concentration regime needs trials >= 1000 and dim >= 1024")
    src = np.asarray(clean_src, dtype=np.float64)
    tgt = np.asarray(clean_tgt, dtype=np.float64)
    if src.shape != (noise.dim,) or tgt.shape != (noise.dim,):
        raise InvalidInputError("descriptor length must equal noise.dim")
    rng = np.random.default_rng(seed)
    mix = np.sqrt(1.0 - noise.rho**2)
    total = 0.0
    done = 0
    while done < noise.trials:
        n = min(chunk, noise.trials - done)
        z1 = rng.standard_normal((n, noise.dim))
        z2 = rng.standard_normal((n, noise.dim))
        a = src + noise.sigma * z1
        b = tgt + noise.sigma * (noise.rho * z1 + mix * z2)
        dots = np.einsum("ij,ij->i", a, b)
        norms = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
        total += float((dots / norms).sum())
        done += n
    return total / noise.trials


def kl_optimal_row(attention_row: np.ndarray, p: np.ndarray, beta: float) -> np.ndarray:
    """Minimizer of KL(w || row) + beta * <w, p> over the simplex.

    The solution reweights the row by exp(-beta * p) and renormalizes; beta = 0
    returns the row unchanged, and any constant shift of p cancels.
    """
    row = np.asarray(attention_row, dtype=np.float64)
    pv = np.asarray(p, dtype=np.float64)
    if row.ndim != 1 or row.shape != pv.shape:
        raise InvalidInputError("row and p must be vectors of equal length")
    if row.min() < 0.0 or not np.isclose(row.sum(), 1.0, atol=1e-6):
        raise InvalidInputError("attention_row must be a probability vector")
    if pv.min() < 0.0 or pv.max() > 1.0:
        raise InvalidInputError("p entries must lie in [0, 1]")
    if beta < 0.0:
        raise InvalidInputError("beta must be >= 0")
    if beta == 0.0:
        return row.copy()
    weights = row * np.exp(-beta * (pv - pv.min()))
    return weights / weights.sum()


@dataclass(frozen=True)
class GatingReport:
    """Comparison of the linear gate 1 - p against the exponential exp(-beta p)."""

    beta: float
    ordering_violations: int
    max_gap: float
    gap_argmax: float


def gating_consistency(p: np.ndarray, beta: float = 1.0) -> GatingReport:
    """Check that both gates rank tokens identically and measure their gap.

    Both gates are strictly decreasing in p, so for any p(a) < p(b) each must
    assign gate(a) > gate(b); violations are counted over the sorted distinct
    values. The gap is max |(1 - p) - exp(-beta p)| over the given entries.
    """
    pv = np.asarray(p, dtype=np.float64).reshape(-1)
    if pv.size == 0:
        raise InvalidInputError("p must be nonempty")
    if pv.min() < 0.0 or pv.max() > 1.0:
        raise InvalidInputError("p entries must lie in [0, 1]")
    if beta <= 0.0:
        raise InvalidInputError("beta must be positive")
    linear = 1.0 - pv
    expo = np.exp(-beta * pv)
    order = np.argsort(pv, kind="stable")
    violations = 0
    for a, b in zip(order[:-1], order[1:]):
        if pv[a] == pv[b]:
            continue
        if not (linear[a] > linear[b] and expo[a] > expo[b]):
            violations += 1
    gaps = np.abs(linear - expo)
    worst = int(np.argmax(gaps))
    return GatingReport(
        beta=beta,
        ordering_violations=violations,
        max_gap=float(gaps[worst]),
        gap_argmax=float(pv[worst]),
    )


@dataclass
class CurveSeries:
    """Region-mean and per-token presence over the run for one layer."""

    layer_id: str
    timesteps: list[int] = field(default_factory=list)
    region: list[float] = field(default_factory=list)
    tokens: dict[int, list[float]] = field(default_factory=dict)


def make_toy_scene(
    grid: tuple[int, int] = (12, 12), channels: int = 3
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic test scene: gradient background, bright center object.

    Returns (image, mask, background) as uint8 arrays; ``background`` is the
    same gradient without the object, i.e. what a perfect removal would show.
    """
    h, w = grid
    cols = np.linspace(30.0, 180.0, w)
    bg = np.zeros((h, w, channels))
    for c in range(channels):
        bg[:, :, c] = cols[None, :] + 18.0 * c
    image = bg.copy()
    r0, r1 = h // 4, (3 * h) // 4
    c0, c1 = w // 4, (3 * w) // 4
    for c in range(channels):
        image[r0:r1, c0:c1, c] = 235.0 - 12.0 * c
    mask = np.zeros((h, w), dtype=bool)
    mask[r0:r1, c0:c1] = True
    return image.astype(np.uint8), mask, bg.astype(np.uint8)


def presence_curve_experiment(
    layers: int = 2,
    grid: tuple[int, int] = (12, 12),
    steps: int = 24,
    seed: int = 0,
    control: bool = False,
) -> dict[str, CurveSeries]:
    """Run a token-wise toy removal and collect presence curves per layer.

    With ``control=True`` the toy's prior field is the source image itself,
    so nothing changes and presence stays near 1; otherwise the prior is the
    object-free background and presence falls as the object dissolves.
    """
    image, mask, background = make_toy_scene(grid)
    field_img = image if control else background
    backend = ToyBackend(
        layers=layers,
        grid=grid,
        seed=seed,
        steps=steps,
        channels=image.shape[2],
        target_field=field_img.astype(np.float64).transpose(2, 0, 1),
    )
    config = RemovalConfig(steps=steps, seed=seed, strategy="token", backend="toy")
    result = run_removal(image, mask, config, backend, job_id="curve-exp")

    series: dict[str, CurveSeries] = {}
    for point in result.curves:
        s = series.setdefault(point.layer_id, CurveSeries(layer_id=point.layer_id))
        if point.token_index == REGION_TOKEN:
            s.timesteps.append(point.timestep)
            s.region.append(point.presence)
        else:
            s.tokens.setdefault(int(point.token_index), []).append(point.presence)
    return series


def region_nonincreasing_prefix(series: CurveSeries, fraction: float = 0.5, tol: float = 1e-9) -> bool:
    """True if the region-mean curve never rises over the leading fraction of steps."""
    n = max(2, int(np.ceil(len(series.region) * fraction)))
    head = series.region[:n]
    return all(b <= a + tol for a, b in zip(head[:-1], head[1:]))


def curves_distinguishable(series: dict[str, CurveSeries], min_gap: float = 1e-3) -> bool:
    """True if some pair of layers differs by more than min_gap at some step."""
    ids = sorted(series)
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            ra, rb = np.asarray(series[a].region), np.asarray(series[b].region)
            n = min(ra.size, rb.size)
            if n and float(np.abs(ra[:n] - rb[:n]).max()) > min_gap:
                return True
    return False


@dataclass
class CheckResult:
    name: str
    passed: bool
    error: float
    detail: str

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.error = float(self.error)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: err={self.error:.3e} ({self.detail})"


def run_verification(seed: int = 0, fast: bool = False) -> list[CheckResult]:
    """Execute every analytical check and return one result per item.

    ``fast`` shrinks the Monte Carlo and toy-run sizes for smoke use; the
    reported tolerances are unchanged.
    """
    checks: list[CheckResult] = []

    # Mixture model: strict monotonicity and agreement with the construction.
    grid = np.linspace(0.0, 1.0, 10_000)
    worst_slope = np.inf
    for ratio in (0.5, 1.0, 2.0):
        vals = np.array([g_theory(MixtureSpec(pi=p, l_s=ratio, l_b=1.0)) for p in grid])
        worst_slope = min(worst_slope, float(np.diff(vals).min()))
    checks.append(
        CheckResult(
            name="mixture-monotone",
            passed=worst_slope > 0.0,
            error=max(0.0, -worst_slope),
            detail="min finite-difference slope over 1e4-point grids, Ls/Lb in {0.5,1,2}",
        )
    )

    max_err = 0.0
    for pi in np.linspace(0.0, 1.0, 21):
        for ratio in (0.5, 1.0, 2.0):
            spec = MixtureSpec(pi=float(pi), l_s=ratio, l_b=1.0, dim=256)
            max_err = max(max_err, abs(empirical_presence(spec, seed) - g_theory(spec)))
    checks.append(
        CheckResult(
            name="mixture-construction",
            passed=max_err <= 1e-9,
            error=max_err,
            detail="empirical mixture vs closed form at kappa=0",
        )
    )

    halfway = abs(g_theory(MixtureSpec(pi=0.5)) - 1.0 / np.sqrt(2.0))
    checks.append(
        CheckResult(
            name="mixture-halfway",
            passed=halfway <= 1e-9,
            error=halfway,
            detail="pi=0.5 equal norms equals 1/sqrt(2)",
        )
    )

    # Noise robustness: Monte Carlo against the expectation ratio.
    dim = 2048 if fast else 8192
    trials = 1000 if fast else 4000
    rng = np.random.default_rng(seed)
    s_src = rng.standard_normal(dim)
    s_tgt = 0.7 * s_src + np.sqrt(1.0 - 0.7**2) * rng.standard_normal(dim)
    mc_err = 0.0
    for sigma in (0.0, 0.5, 2.0):
        for rho in (0.0, 0.5, 1.0):
            noise = NoiseSpec(sigma=sigma, rho=rho, dim=dim, trials=trials)
            mc = noisy_presence_mc(s_src, s_tgt, noise, seed)
            ref = noisy_presence_formula(s_src, s_tgt, noise)
            mc_err = max(mc_err, abs(mc - ref))
    checks.append(
        CheckResult(
            name="noise-robustness",
            passed=mc_err <= 0.02,
            error=mc_err,
            detail=f"MC vs expectation ratio, D={dim}, trials={trials}, sigma/rho grid",
        )
    )

    # KL-regularized reweighting.
    row = np.array([0.5, 0.5])
    worked = kl_optimal_row(row, np.array([1.0, 0.0]), float(np.log(4.0)))
    kl_err = float(np.abs(worked - np.array([0.2, 0.8])).max())
    checks.append(
        CheckResult(
            name="kl-worked-example",
            passed=kl_err <= 1e-12,
            error=kl_err,
            detail="uniform row, p=[1,0], beta=ln4 gives [1/5, 4/5]",
        )
    )

    ident_err = float(np.abs(kl_optimal_row(row, np.array([0.3, 0.9]), 0.0) - row).max())
    const_err = float(np.abs(kl_optimal_row(row, np.array([0.4, 0.4]), 2.0) - row).max())
    checks.append(
        CheckResult(
            name="kl-invariances",
            passed=max(ident_err, const_err) <= 1e-12,
            error=max(ident_err, const_err),
            detail="beta=0 identity and constant-p invariance",
        )
    )

    report = gating_consistency(np.linspace(0.0, 1.0, 101), beta=1.0)
    checks.append(
        CheckResult(
            name="gating-ordering",
            passed=report.ordering_violations == 0,
            error=float(report.ordering_violations),
            detail=f"max |(1-p) - exp(-p)| = {report.max_gap:.4f} at p = {report.gap_argmax:.3f}",
        )
    )

    # Toy presence-curve regimes.
    steps = 12 if fast else 24
    decline = presence_curve_experiment(steps=steps, seed=seed, control=False)
    flat = presence_curve_experiment(steps=steps, seed=seed, control=True)
    decline_ok = all(region_nonincreasing_prefix(s) for s in decline.values())
    flat_floor = min(min(s.region) for s in flat.values())
    checks.append(
        CheckResult(
            name="curve-decline",
            passed=decline_ok and curves_distinguishable(decline),
            error=0.0 if decline_ok else 1.0,
            detail="region mean non-increasing over first half; layers distinguishable",
        )
    )
    checks.append(
        CheckResult(
            name="curve-flat-control",
            passed=flat_floor >= 0.98,
            error=max(0.0, 1.0 - flat_floor),
            detail=f"no-change control floor {flat_floor:.4f} (needs >= 0.98)",
        )
    )
    return checks


def verification_report_json(checks: list[CheckResult]) -> str:
    payload = [
        {"name": c.name, "passed": c.passed, "error": c.error, "detail": c.detail}
        for c in checks
    ]
    return json.dumps({"checks": payload, "passed": all(c.passed for c in checks)}, indent=2)

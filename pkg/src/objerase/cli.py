"""Command line surface: one-shot removal, ablation sweeps, service, checks."""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from .errors import BackendError, ConfigError, InvalidInputError
from .images import load_image, load_mask, save_image
from .latent import BlendSource, DescriptorAxis, ReferenceScheme, RemovalConfig
from .metrics import EvalReport, EvalRow, mask_coverage, psnr
from .pipeline import run_removal
from .strategies import StrategyKind
from .theory import run_verification, verification_report_json

EXIT_IO = 3
EXIT_BACKEND = 4

STRATEGY_NAMES = [k.value for k in StrategyKind]
REFERENCE_NAMES = [s.value for s in ReferenceScheme]


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _build_config(ctx: click.Context, config_path: str | None, **flags) -> RemovalConfig:
    """Start from --config JSON when given; explicit flags override it."""
    base: dict = {}
    if config_path:
        try:
            base = RemovalConfig.from_json(Path(config_path).read_text()).to_dict()
        except OSError as exc:
            _fail(EXIT_IO, f"cannot read config: {exc}")
    merged = dict(base)
    for name, value in flags.items():
        source = ctx.get_parameter_source(name)
        if source is not None and source.name == "COMMANDLINE":
            merged[name] = value
        elif name not in merged:
            merged[name] = value
    try:
        return RemovalConfig.from_dict(merged)
    except ConfigError as exc:
        raise click.UsageError(str(exc))


@click.group()
def main():
    """Training-free object removal via adaptive self-attention suppression."""


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(), help="Input PNG.")
@click.option("--mask", "mask_path", required=True, type=click.Path(), help="Single-channel mask PNG (>=128 removes).")
@click.option("--out", "out_path", required=True, type=click.Path(), help="Output PNG.")
@click.option("--steps", default=50, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--strategy", default="token", show_default=True, type=click.Choice(STRATEGY_NAMES))
@click.option("--reference", default="matched", show_default=True, type=click.Choice(REFERENCE_NAMES))
@click.option("--backend", default="toy", show_default=True)
@click.option("--layers", default="all", show_default=True, help="'all' or 'res:<n>'.")
@click.option("--dilate", "dilate_px", default=0, show_default=True, type=int, help="Mask dilation radius in pixels.")
@click.option("--axis", default="key_column", show_default=True, type=click.Choice([a.value for a in DescriptorAxis]))
@click.option("--blend-source", default="forward", show_default=True, type=click.Choice([b.value for b in BlendSource]))
@click.option("--curves", "curves_path", default=None, type=click.Path(), help="Write presence log (JSONL) here.")
@click.option("--config", "config_path", default=None, type=click.Path(), help="JSON config file; flags override it.")
@click.pass_context
def erase(ctx, image_path, mask_path, out_path, steps, seed, strategy, reference,
          backend, layers, dilate_px, axis, blend_source, curves_path, config_path):
    """Remove the masked object from one image."""
    config = _build_config(
        ctx,
        config_path,
        steps=steps,
        seed=seed,
        strategy=strategy,
        reference=reference,
        backend=backend,
        layers=layers,
        dilate_px=dilate_px,
        axis=axis,
        blend_source=blend_source,
    )
    try:
        image = load_image(image_path)
        mask = load_mask(mask_path)
    except (OSError, InvalidInputError) as exc:
        _fail(EXIT_IO, str(exc))
    try:
        result = run_removal(image, mask, config)
    except BackendError as exc:
        _fail(EXIT_BACKEND, str(exc))
    except (InvalidInputError, ConfigError) as exc:
        _fail(EXIT_IO, str(exc))
    try:
        save_image(result.image, out_path)
        if curves_path and result.curves:
            Path(curves_path).write_text(result.curves_jsonl())
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    click.echo(f"wrote {out_path}")


def _corpus_triples(corpus: Path) -> list[tuple[str, Path, Path, Path | None]]:
    triples = []
    for image_path in sorted(corpus.glob("*.png")):
        name = image_path.name
        if name.endswith(".mask.png") or name.endswith(".ref.png"):
            continue
        stem = name[: -len(".png")]
        mask_path = corpus / f"{stem}.mask.png"
        if not mask_path.is_file():
            continue
        ref_path = corpus / f"{stem}.ref.png"
        triples.append((stem, image_path, mask_path, ref_path if ref_path.is_file() else None))
    return triples


@main.command()
@click.option("--corpus", required=True, type=click.Path(), help="Directory of <stem>.png / <stem>.mask.png (optional <stem>.ref.png).")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--strategies", default="token,region,timestep,full,none", show_default=True)
@click.option("--references", default="matched", show_default=True)
@click.option("--steps", default=50, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--backend", default="toy", show_default=True)
def ablate(corpus, out_dir, strategies, references, steps, seed, backend):
    """Run a strategy x reference sweep over a corpus; write CSV + JSON."""
    corpus_dir = Path(corpus)
    if not corpus_dir.is_dir():
        raise click.UsageError(f"corpus directory {corpus} does not exist")
    triples = _corpus_triples(corpus_dir)
    if not triples:
        raise click.UsageError(f"no (image, mask) pairs found in {corpus}")
    strat_list = [StrategyKind.parse(s.strip()).value for s in strategies.split(",") if s.strip()]
    try:
        ref_list = [ReferenceScheme(r.strip()) for r in references.split(",") if r.strip()]
    except ValueError as exc:
        raise click.UsageError(str(exc))
    if not strat_list or not ref_list:
        raise click.UsageError("need at least one strategy and one reference")

    rows = []
    try:
        for strategy in strat_list:
            for reference in ref_list:
                config = RemovalConfig(
                    steps=steps, seed=seed, strategy=strategy,
                    reference=reference, backend=backend,
                )
                full_scores, bg_scores, coverages = [], [], []
                for _, image_path, mask_path, ref_path in triples:
                    image = load_image(image_path)
                    mask = load_mask(mask_path)
                    result = run_removal(image, mask, config)
                    target = load_image(ref_path) if ref_path else image
                    full_scores.append(psnr(result.image, target))
                    bg_scores.append(psnr(result.image, image, region=~mask) if (~mask).any() else float("inf"))
                    coverages.append(mask_coverage(mask))
                rows.append(
                    EvalRow(
                        strategy=strategy,
                        reference=reference.value,
                        images=len(triples),
                        psnr_full=float(np.mean(full_scores)),
                        psnr_background=float(np.mean(bg_scores)),
                        mask_coverage=float(np.mean(coverages)),
                    )
                )
    except BackendError as exc:
        _fail(EXIT_BACKEND, str(exc))
    except (OSError, InvalidInputError, ConfigError) as exc:
        _fail(EXIT_IO, str(exc))

    report = EvalReport(rows=rows)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.csv").write_text(report.to_csv())
        (out / "ablation.json").write_text(report.to_json())
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    click.echo(report.to_csv(), nl=False)


@main.command()
@click.option("--data", "data_dir", default=None, type=click.Path(), help="Job storage directory (or OBJERASE_DATA_DIR).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(data_dir, host, port):
    """Run the HTTP job service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(data_dir), host=host, port=port, log_level="info")


@main.command()
@click.option("--json", "json_path", default=None, type=click.Path(), help="Also write the report as JSON.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--fast", is_flag=True, help="Smaller Monte Carlo / toy sizes.")
def verify(json_path, seed, fast):
    """Run the analytical verification suite and report pass/fail per check."""
    checks = run_verification(seed=seed, fast=fast)
    for check in checks:
        click.echo(check.line())
    if json_path:
        try:
            Path(json_path).write_text(verification_report_json(checks))
        except OSError as exc:
            _fail(EXIT_IO, str(exc))
    if not all(c.passed for c in checks):
        sys.exit(1)


if __name__ == "__main__":
    main()

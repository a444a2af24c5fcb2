"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data error, 3 scorer error.
The IONMORPH_LOG environment variable sets the logging level.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click

from . import fixtures as fixtures_mod
from .errors import IonmorphError, ScorerError
from .evaluation import DEFAULT_THRESHOLDS, EvalConfig, ground_truth, mscf1
from .io import load_mask, open_dataset
from .ionimage import extract_ion_image, preprocess, to_png_bytes
from .patches import export_patches, extract_patches
from .picking import (
    Exhaustive,
    Explicit,
    MeanSpectrumMaxima,
    enumerate_candidates,
    rank_peaks,
    read_candidate_file,
    read_peaklist_csv,
    select_top_n,
    write_ranked_csv,
)
from .scoring import DEFAULT_TARGETS, parse_scorer_spec, parse_targets

log = logging.getLogger("ionmorph")


def _setup_logging():
    level = os.environ.get("IONMORPH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def _parse_candidates(handle, spec: str):
    spec = spec.strip()
    if spec == "exhaustive":
        return enumerate_candidates(handle, Exhaustive())
    if spec.startswith("exhaustive:"):
        return enumerate_candidates(handle, Exhaustive(stride=int(spec.split(":", 1)[1])))
    if spec.startswith("maxima:"):
        return enumerate_candidates(
            handle, MeanSpectrumMaxima(min_prominence_fraction=float(spec.split(":", 1)[1]))
        )
    if spec == "maxima":
        return enumerate_candidates(handle, MeanSpectrumMaxima())
    if spec.startswith("file:"):
        return enumerate_candidates(handle, Explicit(path=spec.split(":", 1)[1]))
    raise click.UsageError(f"unknown candidate strategy {spec!r}")


@click.group()
def cli():
    """Spatially informed peak picking for mass spectrometry imaging."""
    _setup_logging()


@cli.command()
@click.option("--dataset", required=True, type=click.Path(exists=True))
def info(dataset):
    """Print a JSON summary of an imzML dataset."""
    handle = open_dataset(dataset)
    summary = {
        "dataset_id": handle.dataset_id,
        "mode": handle.mode,
        "width": handle.width,
        "height": handle.height,
        "spectrum_count": handle.spectrum_count,
        "uuid": handle.uuid.hex(),
        "channels": None if handle.mz_axis is None else len(handle.mz_axis),
    }
    click.echo(json.dumps(summary, indent=2))


@cli.command()
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--mz", required=True, type=float)
@click.option("--ppm", default=3.0, show_default=True, type=float)
@click.option("--out", required=True, type=click.Path())
def extract(dataset, mz, ppm, out):
    """Extract one ion image, preprocess it and write an 8-bit PNG."""
    handle = open_dataset(dataset)
    img = preprocess(extract_ion_image(handle, mz, ppm), dataset_id=handle.dataset_id)
    Path(out).write_bytes(to_png_bytes(img))
    click.echo(f"wrote {out}")


@cli.command()
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--scorer", default="pca", show_default=True)
@click.option("--targets", default="structured,negative,localized", show_default=True)
@click.option("--candidates", "candidates_spec", default="maxima:0.01", show_default=True)
@click.option("--n", default=50, show_default=True, type=int)
@click.option("--ppm", default=3.0, show_default=True, type=float)
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
def pick(dataset, scorer, targets, candidates_spec, n, ppm, workers, out):
    """Rank candidate ion images by structure and write the top-n as CSV."""
    try:
        target_set = parse_targets(targets)
        spec = parse_scorer_spec(scorer, targets=target_set)
    except ValueError as e:
        raise click.UsageError(str(e))
    handle = open_dataset(dataset)
    cands = _parse_candidates(handle, candidates_spec)
    ranked = rank_peaks(handle, cands, spec, ppm=ppm, workers=workers)
    write_ranked_csv(ranked, out, n=n)
    click.echo(f"wrote {min(n, len(ranked))} peaks to {out}")


@cli.command(name="eval")
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--peaks", required=True, type=click.Path(exists=True))
@click.option("--mask", required=True, type=click.Path(exists=True))
@click.option("--candidates", "candidates_spec", default="maxima:0.01", show_default=True)
@click.option("--ppm", default=3.0, show_default=True, type=float)
@click.option("--match-ppm", default=3.0, show_default=True, type=float)
@click.option(
    "--thresholds",
    default=",".join(str(t) for t in DEFAULT_THRESHOLDS),
    show_default=True,
)
@click.option("--out", type=click.Path(), default=None)
def eval_cmd(dataset, peaks, mask, candidates_spec, ppm, match_ppm, thresholds, out):
    """Evaluate a peak selection with mSCF1 against a segmentation mask."""
    try:
        config = EvalConfig(
            thresholds=tuple(float(t) for t in thresholds.split(",")),
            match_ppm=match_ppm,
        )
    except ValueError as e:
        raise click.UsageError(str(e))
    handle = open_dataset(dataset)
    mask_obj = load_mask(mask)
    cands = _parse_candidates(handle, candidates_spec)
    selected = read_peaklist_csv(peaks)
    gt = ground_truth(handle, mask_obj, cands, ppm=ppm, region_mode=config.region_mode)
    report = mscf1(selected, gt, config)
    text = report.to_json()
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    click.echo(text)


@cli.command()
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--peaks", required=True, type=click.Path(exists=True))
@click.option("--mask", required=True, type=click.Path(exists=True))
@click.option("--patch-size", default=11, show_default=True, type=int)
@click.option("--ppm", default=3.0, show_default=True, type=float)
@click.option("--out", required=True, type=click.Path())
def patches(dataset, peaks, mask, patch_size, ppm, out):
    """Export labeled spatio-spectral patch cubes to a .iop container."""
    handle = open_dataset(dataset)
    mask_obj = load_mask(mask)
    peaklist = read_peaklist_csv(peaks)
    stream = extract_patches(handle, peaklist, mask_obj, p=patch_size, ppm=ppm)
    counts = export_patches(
        stream, out, peak_mzs=peaklist.mzs, ppm=ppm, dataset_id=handle.dataset_id
    )
    click.echo(json.dumps({"out": str(out), "counts_per_label": counts}))


@cli.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=fixtures_mod.DEFAULT_SEED, show_default=True, type=int)
def fixtures(out_dir, seed):
    """Generate the synthetic 20-channel dataset with 5 planted channels."""
    meta = fixtures_mod.generate_fixture(out_dir, seed=seed)
    click.echo(json.dumps(meta, indent=2))


@cli.command()
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--candidates", "candidates_spec", default="maxima:0.01", show_default=True)
@click.option("--manifest", required=True, type=click.Path())
@click.option("--ppm", default=3.0, show_default=True, type=float)
@click.option("--bind", default="127.0.0.1:8077", show_default=True)
@click.option("--annotator", default="anonymous", show_default=True)
@click.option("--split", default="Train", show_default=True)
@click.option("--ui", "ui_dir", type=click.Path(exists=True), default=None)
def annotate(dataset, candidates_spec, manifest, ppm, bind, annotator, split, ui_dir):
    """Serve the annotation HTTP API (and UI bundle, if provided)."""
    import uvicorn

    from .service import build_tasks, create_app

    handle = open_dataset(dataset)
    cands = _parse_candidates(handle, candidates_spec)
    tasks = build_tasks(handle, cands.mzs, ppm)
    app = create_app(tasks, manifest, annotator=annotator, split=split, ui_dir=ui_dir)
    host, _, port = bind.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8077))


def main():
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as e:
        click.echo(f"usage error: {e.format_message()}", err=True)
        sys.exit(1)
    except click.ClickException as e:
        e.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    except ScorerError as e:
        click.echo(f"scorer error: {e}", err=True)
        sys.exit(3)
    except IonmorphError as e:
        click.echo(f"data error: {e}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()

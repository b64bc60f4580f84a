"""Command line front end: phantom cohorts, dataset curation, training,
evaluation, and the screening service.

Every subcommand writes a provenance.json next to its outputs recording the
effective settings plus content hashes of inputs and outputs, so identical
inputs and seeds reproduce identical artifacts.  Exit status is 0 only when
every case succeeded; partial failures are listed one per line on stderr.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click

from . import annotation as an
from . import curation as cu
from . import geometry as geo
from . import mpv as mv
from . import phantom as ph
from .classifier import (ClassifierError, ModelSpec, TrainConfig, load_model,
                         manifest_hash, save_model, train)
from .service import (ConfigError, ScreeningService, ServiceError,
                      evaluate_cohort, load_cohort_dir, load_config)


# ---------------------------------------------------------------------------
# Provenance
# ---------------------------------------------------------------------------

def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_files(root: Path, paths) -> dict[str, str]:
    """Content hashes keyed by path relative to root (portable provenance)."""
    return {Path(p).relative_to(root).as_posix(): _sha256_file(Path(p))
            for p in sorted(paths, key=lambda p: str(p))}


def _write_provenance(out_dir: Path, command: str, config: dict,
                      inputs: dict, outputs: dict,
                      failures: list[str] | None = None) -> Path:
    record = {"command": command, "config": config,
              "inputs": inputs, "outputs": outputs,
              "failures": sorted(failures or [])}
    path = out_dir / "provenance.json"
    path.write_text(json.dumps(record, indent=1, sort_keys=True))
    return path


def _fail_cases(failures: list[str]) -> None:
    for line in sorted(failures):
        click.echo(line, err=True)
    sys.exit(1)


def _parse_ints(text: str, flag: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise click.UsageError(f"{flag} expects comma-separated integers, got {text!r}")
    if not values:
        raise click.UsageError(f"{flag} must not be empty")
    return values


@click.group()
def main():
    """Synthetic coronary screening toolkit."""


# ---------------------------------------------------------------------------
# phantom
# ---------------------------------------------------------------------------

_PHANTOM_DEFAULTS = {
    "n_cases": 20, "prevalence": 0.3, "obstructive_fraction": 0.6,
    "seed": 0, "noise_sigma": 20.0, "dims": [128, 128, 128],
    "spacing_mm": [0.5, 0.5, 0.5], "template": "standard-left-right",
}


@main.command()
@click.option("--n", "n_cases", type=int, default=None, help="Number of cases.")
@click.option("--prevalence", type=float, default=None,
              help="Diseased fraction of the cohort.")
@click.option("--obstructive-fraction", type=float, default=None,
              help="Obstructive fraction among diseased cases.")
@click.option("--noise-sigma", type=float, default=None,
              help="Additive Gaussian noise level in HU.")
@click.option("--seed", type=int, default=None, help="Cohort seed.")
@click.option("--dims", type=str, default=None, help="Voxel grid as X,Y,Z.")
@click.option("--spacing", type=str, default=None, help="Voxel size in mm as X,Y,Z.")
@click.option("--template", type=str, default=None, help="Vessel tree template name.")
@click.option("--cohort-spec", "spec_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file with the settings above; explicit flags override it.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def phantom(n_cases, prevalence, obstructive_fraction, noise_sigma, seed,
            dims, spacing, template, spec_path, out_dir):
    """Generate a cohort of labeled coronary phantom volumes."""
    settings = dict(_PHANTOM_DEFAULTS)
    inputs: dict[str, str] = {}
    if spec_path:
        loaded = json.loads(Path(spec_path).read_text())
        unknown = set(loaded) - set(settings)
        if unknown:
            raise click.UsageError(
                f"unknown cohort-spec keys: {', '.join(sorted(unknown))}")
        settings.update(loaded)
        inputs["cohort-spec"] = _sha256_file(Path(spec_path))
    try:
        overrides = {
            "n_cases": n_cases, "prevalence": prevalence,
            "obstructive_fraction": obstructive_fraction, "noise_sigma": noise_sigma,
            "seed": seed, "template": template,
            "dims": None if dims is None else [int(v) for v in dims.split(",")],
            "spacing_mm": (None if spacing is None
                           else [float(v) for v in spacing.split(",")]),
        }
    except ValueError:
        raise click.UsageError("--dims and --spacing expect comma-separated numbers")
    settings.update({k: v for k, v in overrides.items() if v is not None})
    if len(settings["dims"]) != 3 or len(settings["spacing_mm"]) != 3:
        raise click.UsageError("--dims and --spacing expect three values")
    try:
        spec = ph.CohortSpec(settings["n_cases"], settings["prevalence"],
                             settings["obstructive_fraction"], settings["seed"],
                             settings["noise_sigma"])
    except ph.PhantomError as exc:
        raise click.UsageError(str(exc))

    out = Path(out_dir)
    (out / "volumes").mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    cases: list[dict] = []
    failures: list[str] = []
    for index, case_class in enumerate(ph.cohort_class_schedule(spec)):
        try:
            rec = ph.generate_case(spec, index, case_class,
                                   tuple(settings["dims"]),
                                   tuple(settings["spacing_mm"]),
                                   settings["template"])
            written.extend(ph.save_volume(rec.volume, out / "volumes" / rec.case_id))
            written.append(ph.save_truth(
                rec.tree, out / "truth" / f"{rec.case_id}.truth.json"))
            cases.append({"case_id": rec.case_id, "case_class": case_class})
        except ph.PhantomError as exc:
            failures.append(f"case{index:04d}: {exc}")
    cases.sort(key=lambda c: c["case_id"])
    summary = {"settings": settings, "cases": cases}
    summary_path = out / "cohort.json"
    summary_path.write_text(json.dumps(summary, indent=1, sort_keys=True))
    written.append(summary_path)
    _write_provenance(out, "phantom", settings, inputs, _hash_files(out, written),
                      failures)
    click.echo(f"wrote {len(cases)} cases under {out}")
    if failures:
        _fail_cases(failures)


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------

@main.command()
@click.option("--cohort", "cohort_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Directory written by the phantom subcommand.")
@click.option("--da-fold", type=int, default=cu.DEFAULT_DA_FOLD, show_default=True,
              help="Permutations generated per training positive.")
@click.option("--n-views", type=int, default=mv.DEFAULT_N_VIEWS, show_default=True,
              help="Projection views per mosaic.")
@click.option("--split-ratio", type=str, default="3,1,1", show_default=True,
              help="Training,validation,testing case ratio.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def dataset(cohort_dir, da_fold, n_views, split_ratio, seed, out_dir):
    """Curate mosaics plus a train/validation/test manifest from a cohort."""
    ratio = _parse_ints(split_ratio, "--split-ratio")
    if len(ratio) != 3:
        raise click.UsageError("--split-ratio expects three integers")
    cohort = Path(cohort_dir)
    truth_paths = sorted((cohort / "truth").glob("*.truth.json"))
    if not truth_paths:
        raise click.ClickException(f"no truth files under {cohort / 'truth'}")
    out = Path(out_dir)
    (out / "mpvs").mkdir(parents=True, exist_ok=True)

    labels: dict[str, list] = {}
    refs: dict[str, str] = {}
    case_pairs: list[tuple[str, str]] = []
    written: list[Path] = []
    inputs: dict[str, str] = {}
    failures: list[str] = []
    for truth_path in truth_paths:
        case_id = truth_path.name[:-len(".truth.json")]
        try:
            tree = ph.load_truth(truth_path)
            volume = ph.load_volume(cohort / "volumes" / f"{case_id}.vol.json")
            case_labels = []
            for extraction in geo.ground_truth_extractions(tree):
                label = an.classify_extraction(tree, tree.plaques, extraction)
                mpr = geo.straighten(volume, extraction)
                mosaic = mv.build_mpv(mpr, extraction_id=extraction.extraction_id,
                                      n_views=n_views)
                png = out / "mpvs" / f"{extraction.extraction_id}.png"
                mv.save_mpv(png, mosaic, extra={"case_id": case_id})
                written.extend([png, png.with_suffix(".json")])
                refs[extraction.extraction_id] = f"mpvs/{extraction.extraction_id}.png"
                case_labels.append(label)
            labels[case_id] = case_labels
            case_pairs.append((case_id, tree.case_class))
            inputs[f"truth/{truth_path.name}"] = _sha256_file(truth_path)
            inputs[f"volumes/{case_id}.vol.raw"] = _sha256_file(
                cohort / "volumes" / f"{case_id}.vol.raw")
        except (ph.PhantomError, geo.GeometryError, an.UnknownSegmentError,
                mv.MosaicError, OSError) as exc:
            failures.append(f"{case_id}: {exc}")
    if not case_pairs:
        raise click.ClickException("every case failed; nothing to curate")

    try:
        assignment = cu.split_cases(case_pairs, ratio, seed)
        assignment = cu.repair_validation_assignment(assignment, labels,
                                                     dict(case_pairs))
        manifest = cu.assemble_vessel_dataset(assignment, labels, refs,
                                              da_fold=da_fold, seed=seed,
                                              n_views=n_views)
    except cu.CurationError as exc:
        raise click.ClickException(str(exc))
    written.append(manifest.save(out / "manifest.json"))
    report_json = out / "report.json"
    report_json.write_text(json.dumps(manifest.counts_summary, indent=1, sort_keys=True))
    report_txt = out / "report.txt"
    report_txt.write_text(_dataset_report_text(manifest.counts_summary))
    written.extend([report_json, report_txt])
    config = {"da_fold": da_fold, "n_views": n_views,
              "split_ratio": list(ratio), "seed": seed}
    _write_provenance(out, "dataset", config, inputs, _hash_files(out, written),
                      failures)
    click.echo(f"curated {len(case_pairs)} cases, "
               f"{len(manifest.vessel_items)} vessel items under {out}")
    if failures:
        _fail_cases(failures)


def _dataset_report_text(grid: dict) -> str:
    """Aligned text rendering of the curation count grid."""
    subsets = cu.SUBSETS
    rows = [("", *subsets)]
    for group in ("Diseased", ph.CLASS_NORMAL):
        rows.append((f"{group} cases",
                     *(str(grid["cases"][s][group]) for s in subsets)))
    for label in (an.LABEL_PLAQUE, an.LABEL_FREE):
        for kind in ("raw", "augmented"):
            rows.append((f"{label} {kind}",
                         *(str(grid["vessel"][s][label][kind]) for s in subsets)))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = ["Curated dataset counts"]
    for r in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    restored = grid["restored"]
    lines.append("")
    lines.append("Restored test cases")
    lines.append(f"  cases: {restored['cases']}")
    lines.append(f"  plaque courses: {restored[an.USAGE_DIRECT]}")
    lines.append(f"  clean courses upstream of plaque: {restored[an.USAGE_UPSTREAM]}")
    lines.append(f"  clean courses in diseased cases: {restored['clean_diseased']}")
    lines.append(f"  clean courses in normal cases: {restored['clean_normal']}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

@main.command(name="train")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--epochs", type=int, default=120, show_default=True)
@click.option("--lr", type=float, default=0.001, show_default=True)
@click.option("--batch", type=int, default=8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--rotate-deg", type=float, default=15.0, show_default=True,
              help="Training-time rotation augmentation range.")
@click.option("--threshold", type=float, default=0.5, show_default=True,
              help="Decision threshold stored with the model.")
@click.option("--input-rows", type=int, default=None,
              help="Model input rows; defaults to 72 per mosaic view, which "
                   "keeps every template course within the 2x resample guard.")
@click.option("--input-cols", type=int, default=15, show_default=True)
@click.option("--conv", "conv_channels", type=str, default="8,16,32",
              show_default=True, help="Channels per convolution block.")
@click.option("--dense", type=int, default=1024, show_default=True)
@click.option("--dropout", type=float, default=0.25, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def train_command(manifest_path, epochs, lr, batch, seed, rotate_deg, threshold,
                  input_rows, input_cols, conv_channels, dense, dropout, out_dir):
    """Train the mosaic classifier from a curated manifest."""
    manifest = cu.DatasetManifest.load(manifest_path)
    base_dir = Path(manifest_path).parent
    refs: dict[str, str] = {}
    for item in manifest.vessel_items:
        if item.subset in (cu.SUBSET_TRAINING, cu.SUBSET_VALIDATION):
            refs[item.extraction_id] = item.mpv_ref
    if not refs:
        raise click.ClickException("manifest has no training or validation items")
    mpvs = {}
    inputs = {"manifest": manifest_hash(manifest)}
    for extraction_id, ref in sorted(refs.items()):
        png = base_dir / ref
        try:
            mosaic, _ = mv.load_mpv(png)
        except (OSError, KeyError) as exc:
            raise click.ClickException(f"cannot load mosaic {ref}: {exc}")
        mpvs[extraction_id] = mosaic
        inputs[ref] = _sha256_file(png)

    rows = input_rows if input_rows else manifest.n_views * 72
    try:
        spec = ModelSpec((rows, input_cols),
                         _parse_ints(conv_channels, "--conv"), dense, dropout)
        cfg = TrainConfig(lr=lr, batch=batch, max_epochs=epochs, seed=seed,
                          rotate_deg=rotate_deg, threshold=threshold)
        model = train(manifest, spec, cfg, mpvs)
    except ClassifierError as exc:
        raise click.ClickException(str(exc))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta_path, npz_path = save_model(model, out / "model")
    log_path = out / "training_log.json"
    log_path.write_text(json.dumps(model.training_log, indent=1, sort_keys=True))
    config = {"spec": spec.to_dict(),
              "train": {"lr": lr, "batch": batch, "max_epochs": epochs,
                        "seed": seed, "rotate_deg": rotate_deg,
                        "threshold": threshold}}
    outputs = _hash_files(out, [meta_path, npz_path, log_path])
    outputs["weight_hash"] = model.weight_hash()
    _write_provenance(out, "train", config, inputs, outputs)
    best = max((e["val_accuracy"] for e in model.training_log), default=None)
    click.echo(f"trained {len(model.training_log)} epochs, "
               f"best validation accuracy {best}, weights {model.weight_hash()[:12]}")


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

@main.command(name="eval")
@click.option("--model", "model_base", required=True, type=click.Path(),
              help="Model base path as written by train (without extension).")
@click.option("--cohort", "cohort_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def eval_command(model_base, cohort_dir, threshold, out_dir):
    """Score a cohort at vessel and restored-case level with a trained model."""
    base = Path(model_base)
    try:
        model = load_model(base)
    except (ClassifierError, OSError, KeyError, ValueError) as exc:
        raise click.ClickException(f"cannot load model {model_base}: {exc}")
    try:
        records = load_cohort_dir(cohort_dir)
    except (ServiceError, ph.PhantomError) as exc:
        raise click.ClickException(str(exc))
    result = evaluate_cohort(records, model, threshold=threshold)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for level in ("vessel", "case"):
        block = result[level]
        txt = out / f"{level}_report.txt"
        txt.write_text(block["report_text"] + "\n")
        js = out / f"{level}_report.json"
        js.write_text(json.dumps(block["report"], indent=1, sort_keys=True))
        written.extend([txt, js])
        if block["roc_csv"] is not None:
            csv = out / f"{level}_roc.csv"
            csv.write_text(block["roc_csv"])
            written.append(csv)
        click.echo(block["report_text"])
    summary = {"completion": result["completion"], "threshold": result["threshold"],
               "model_ref": result["model_ref"],
               "vessel": {"auc": result["vessel"]["auc"],
                          "confusion": result["vessel"]["confusion"]},
               "case": {"auc": result["case"]["auc"],
                        "confusion": result["case"]["confusion"]}}
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=1, sort_keys=True))
    written.append(summary_path)

    cohort = Path(cohort_dir)
    inputs = {"model": model.weight_hash()}
    for truth_path in sorted((cohort / "truth").glob("*.truth.json")):
        case_id = truth_path.name[:-len(".truth.json")]
        inputs[f"truth/{truth_path.name}"] = _sha256_file(truth_path)
        raw_path = cohort / "volumes" / f"{case_id}.vol.raw"
        if raw_path.exists():
            inputs[f"volumes/{raw_path.name}"] = _sha256_file(raw_path)
    config = {"threshold": threshold}
    _write_provenance(out, "eval", config, inputs, _hash_files(out, written),
                      result["completion"]["failed_cases"])
    if result["completion"]["failed_cases"]:
        _fail_cases(result["completion"]["failed_cases"])


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------

@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              default=None, help="Service settings file (.toml or .json).")
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(config_path, host):
    """Run the screening HTTP service."""
    try:
        config = load_config(config_path)
        service = ScreeningService(config)
    except (ConfigError, ClassifierError, OSError) as exc:
        raise click.ClickException(str(exc))
    from .service import create_app
    import uvicorn
    app = create_app(service)
    click.echo(f"serving on {host}:{config.port}, data under {config.data_dir}")
    uvicorn.run(app, host=host, port=config.port)


if __name__ == "__main__":
    main()

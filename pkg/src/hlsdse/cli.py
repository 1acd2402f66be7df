"""Command-line surface for the pipeline.

Subcommands mirror the pipeline stages: ``gen-data`` (oracle model + design
space -> dataset), ``train`` (dataset -> checkpoint + metrics), ``eval``
(checkpoint -> per-target error table), ``explore`` (LLM loop or baselines ->
archive + convergence), ``adrs`` (two fronts -> score), and ``report`` (run
directory -> figures + summary). Settings come from one optional JSON config
document with per-subcommand sections; command-line flags override it, and
every run writes its resolved settings next to its outputs.

Exit codes: 0 ok, 2 validation failure, 3 backend failure, 4 budget spent
without producing any feasible result.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import dataset as ds
from . import designspace as dsp
from . import explore as xp
from . import model as mdl
from . import oracle as orc
from . import pareto as par
from . import report as rpt
from .cdfg import CdfgError
from .docio import SchemaError, dump_document, read_document
from .textembed import HashedTextProvider, PrecomputedDirProvider

EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_NO_OUTPUT = 4

_VALIDATION_ERRORS = (SchemaError, CdfgError, dsp.DesignSpaceError, dsp.MergeError,
                      orc.OracleError, ds.DatasetError, par.ParetoError,
                      xp.PromptError, ValueError, FileNotFoundError)

_SECTION_KEYS = {
    "gen-data": {"model", "space", "count", "seed", "provider", "provider_dir", "d_text"},
    "train": {"manifest", "epochs", "batch_size", "lr", "hidden", "layers", "n_heads",
              "variant", "seed", "rmse_target", "tau_min"},
    "eval": {"checkpoint", "manifest", "split", "seed"},
    "explore": {"space", "model", "checkpoint", "manifest", "backend", "transcript",
                "record", "budget", "batch", "examples", "seed", "mode", "endpoint",
                "llm_model", "key_env", "objectives", "no_reference",
                "exhaustive_limit"},
    "adrs": {"reference", "approx"},
    "report": {"run"},
}


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _resolve_settings(config_path: str | None, section: str, flags: dict) -> dict:
    """Config-file section merged with flag overrides; unknown keys rejected."""
    settings: dict = {}
    if config_path:
        doc = read_document(config_path)
        allowed_top = {"seed", "out_dir"} | set(_SECTION_KEYS)
        unknown = sorted(set(doc) - allowed_top)
        if unknown:
            raise SchemaError(unknown[0], "unknown key in config document")
        section_doc = doc.get(section, {})
        if not isinstance(section_doc, dict):
            raise SchemaError(section, "expected an object")
        unknown = sorted(set(section_doc) - _SECTION_KEYS[section])
        if unknown:
            raise SchemaError(f"{section}.{unknown[0]}", "unknown key in config document")
        settings.update(section_doc)
        if "seed" in doc and "seed" not in settings:
            settings["seed"] = doc["seed"]
    for key, value in flags.items():
        if value is not None:
            settings[key] = value
    return settings


def _write_resolved(out_dir: Path, section: str, settings: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"subcommand": section}
    doc.update({k: settings[k] for k in sorted(settings)})
    (out_dir / "resolved_config.json").write_text(dump_document(doc), encoding="utf-8")


def _require(settings: dict, key: str) -> str:
    if settings.get(key) in (None, ""):
        _fail(EXIT_VALIDATION, f"missing required setting {key!r}")
    return settings[key]


@click.group()
def main() -> None:
    """Desk-scale HLS DSE: multimodal QoR prediction and LLM-driven search."""


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------

@main.command("gen-data")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--model", "model_path", type=click.Path(), default=None)
@click.option("--space", "space_path", type=click.Path(), default=None)
@click.option("--count", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--provider", type=click.Choice(["hashed", "precomputed"]), default=None)
@click.option("--provider-dir", type=click.Path(), default=None)
@click.option("--d-text", "d_text", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def gen_data_cmd(config_path, model_path, space_path, count, seed, provider,
                 provider_dir, d_text, out_dir):
    """Generate a graph-text dataset from an oracle model and a design space."""
    try:
        settings = _resolve_settings(config_path, "gen-data", {
            "model": model_path, "space": space_path, "count": count, "seed": seed,
            "provider": provider, "provider_dir": provider_dir, "d_text": d_text})
        settings.setdefault("seed", 0)
        settings.setdefault("provider", "hashed")
        settings.setdefault("d_text", 768)
        model = orc.read_model(_require(settings, "model"))
        space = dsp.read_space(_require(settings, "space"))
        n = int(_require(settings, "count"))
        if settings["provider"] == "precomputed":
            emb_provider = PrecomputedDirProvider(_require(settings, "provider_dir"))
        else:
            emb_provider = HashedTextProvider(d_text=int(settings["d_text"]))
        data = ds.gen_dataset(model, space, n, int(settings["seed"]), emb_provider)
        out = Path(out_dir)
        manifest = ds.save_dataset(data, out)
        _write_resolved(out, "gen-data", settings)
        click.echo(f"wrote {len(data.samples)} samples to {manifest}")
    except _VALIDATION_ERRORS as exc:
        _fail(EXIT_VALIDATION, str(exc))


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

@main.command("train")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--manifest", type=click.Path(), default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", "batch_size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--hidden", type=int, default=None)
@click.option("--layers", type=int, default=None)
@click.option("--n-heads", "n_heads", type=int, default=None)
@click.option("--variant", type=click.Choice(list(mdl.VARIANTS)), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--rmse-target", "rmse_target", type=float, default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def train_cmd(config_path, manifest, epochs, batch_size, lr, hidden, layers,
              n_heads, variant, seed, rmse_target, out_dir):
    """Train the predictor on a dataset manifest; writes checkpoint + metrics."""
    try:
        settings = _resolve_settings(config_path, "train", {
            "manifest": manifest, "epochs": epochs, "batch_size": batch_size,
            "lr": lr, "hidden": hidden, "layers": layers, "n_heads": n_heads,
            "variant": variant, "seed": seed, "rmse_target": rmse_target})
        data = ds.load_dataset(_require(settings, "manifest"))
        cfg = mdl.TrainConfig(
            batch_size=int(settings.get("batch_size", 64)),
            lr=float(settings.get("lr", 0.001)),
            hidden=int(settings.get("hidden", 128)),
            epochs=int(settings.get("epochs", 500)),
            seed=int(settings.get("seed", 0)),
            layers=int(settings.get("layers", 4)),
            n_heads=int(settings.get("n_heads", 4)),
            variant=settings.get("variant", "mpm"),
            tau_min=float(settings.get("tau_min", 0.1)),
            rmse_target=settings.get("rmse_target"))
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    except _VALIDATION_ERRORS as exc:
        _fail(EXIT_VALIDATION, str(exc))
        return
    try:
        result = mdl.train(data.samples, cfg, d_text=data.d_text)
    except mdl.TrainingDiverged as exc:
        _fail(EXIT_VALIDATION, str(exc))
        return
    result.model.save(out / "checkpoint.bin")
    mdl.write_metrics_csv(result.history, out / "metrics.csv")
    _write_resolved(out, "train", settings)
    click.echo(f"best validation aggregate RMSE {result.best_val_rmse:.6f} "
               f"at epoch {result.best_epoch}")
    click.echo(f"checkpoint: {out / 'checkpoint.bin'}")


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

_EVAL_COLUMNS = ("Latency", "LUT", "DSP", "FF", "BRAM", "All")


@main.command("eval")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--checkpoint", type=click.Path(), default=None)
@click.option("--manifest", type=click.Path(), default=None)
@click.option("--split", type=click.Choice(["test", "val", "train", "all"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def eval_cmd(config_path, checkpoint, manifest, split, seed, out_dir):
    """Per-target RMSE/MAPE of a checkpoint on a dataset split."""
    try:
        settings = _resolve_settings(config_path, "eval", {
            "checkpoint": checkpoint, "manifest": manifest, "split": split,
            "seed": seed})
        settings.setdefault("split", "test")
        settings.setdefault("seed", 0)
        model = mdl.MpmModel.load(_require(settings, "checkpoint"))
        data = ds.load_dataset(_require(settings, "manifest"))
        if settings["split"] == "all":
            subset = data.samples
        else:
            train_s, test_s, val_s = mdl.split_dataset(data.samples,
                                                       int(settings["seed"]))
            subset = {"train": train_s, "test": test_s, "val": val_s}[settings["split"]]
        if not subset:
            raise ValueError(f"split {settings['split']!r} is empty")
        preds = model.predict_batch(subset)
        targets = np.vstack([s.targets for s in subset])
        rmse_row = mdl.per_target_rmse(preds, targets)
        try:
            mape_row = mdl.per_target_mape(preds, targets)
        except ValueError:
            mape_row = None
    except _VALIDATION_ERRORS as exc:
        _fail(EXIT_VALIDATION, str(exc))
        return

    keys = list(ds.TARGET_NAMES) + ["all"]
    header = f"{'Metric':8s}" + "".join(f"{c:>12s}" for c in _EVAL_COLUMNS)
    click.echo(header)
    click.echo(f"{'RMSE':8s}" + "".join(f"{rmse_row[k]:>12.4f}" for k in keys))
    if mape_row is not None:
        click.echo(f"{'MAPE':8s}" + "".join(f"{mape_row[k]:>12.4f}" for k in keys))
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        import csv as _csv
        with open(out / "eval.csv", "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["metric"] + [c.lower() for c in _EVAL_COLUMNS])
            writer.writerow(["rmse"] + [f"{rmse_row[k]:.10g}" for k in keys])
            if mape_row is not None:
                writer.writerow(["mape"] + [f"{mape_row[k]:.10g}" for k in keys])
        _write_resolved(out, "eval", settings)


# ---------------------------------------------------------------------------
# explore
# ---------------------------------------------------------------------------

@main.command("explore")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--space", "space_path", type=click.Path(), default=None)
@click.option("--model", "model_path", type=click.Path(), default=None)
@click.option("--checkpoint", type=click.Path(), default=None,
              help="Use the trained predictor as the evaluator instead of the oracle.")
@click.option("--backend", type=click.Choice(["mutation-mock", "replay", "http-chat",
                                               "sa", "random"]), default=None)
@click.option("--transcript", type=click.Path(), default=None)
@click.option("--record", type=click.Path(), default=None)
@click.option("--budget", type=int, default=None)
@click.option("--batch", type=int, default=None)
@click.option("--examples", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--mode", type=click.Choice(list(xp.PROMPT_MODES)), default=None)
@click.option("--endpoint", type=str, default=None)
@click.option("--llm-model", "llm_model", type=str, default=None)
@click.option("--key-env", "key_env", type=str, default=None)
@click.option("--objectives", type=click.Choice(["2d", "5d"]), default=None)
@click.option("--no-reference", "no_reference", is_flag=True, default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def explore_cmd(config_path, space_path, model_path, checkpoint, backend, transcript,
                record, budget, batch, examples, seed, mode, endpoint, llm_model,
                key_env, objectives, no_reference, out_dir):
    """Run the exploration loop (or a baseline) and write archive + convergence."""
    try:
        settings = _resolve_settings(config_path, "explore", {
            "space": space_path, "model": model_path, "checkpoint": checkpoint,
            "backend": backend, "transcript": transcript, "record": record,
            "budget": budget, "batch": batch, "examples": examples, "seed": seed,
            "mode": mode, "endpoint": endpoint, "llm_model": llm_model,
            "key_env": key_env, "objectives": objectives,
            "no_reference": no_reference})
        for key, default in (("backend", "mutation-mock"), ("budget", 100),
                             ("batch", 5), ("examples", 8), ("seed", 0),
                             ("mode", "peodse"), ("objectives", "2d"),
                             ("no_reference", False), ("exhaustive_limit", 100_000)):
            settings.setdefault(key, default)
        space = dsp.read_space(_require(settings, "space"))
        model = orc.read_model(_require(settings, "model"))
        obj_mode = settings["objectives"]
        if settings.get("checkpoint"):
            predictor = mdl.MpmModel.load(settings["checkpoint"])
            provider = HashedTextProvider(d_text=predictor.d_text)
            evaluator = xp.MpmEvaluator.from_oracle_model(predictor, model, space,
                                                          provider, mode=obj_mode)
        else:
            evaluator = xp.OracleEvaluator(model, space, mode=obj_mode)

        reference = None
        if not settings["no_reference"] and space.size <= int(settings["exhaustive_limit"]):
            reference = par.reference_front(space, xp.OracleEvaluator(model, space,
                                                                      mode=obj_mode))
        cfg = xp.DseConfig(max_evaluations=int(settings["budget"]),
                           batch_size=int(settings["batch"]),
                           example_count=int(settings["examples"]),
                           seed=int(settings["seed"]),
                           prompt_mode=settings["mode"])
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    except _VALIDATION_ERRORS as exc:
        _fail(EXIT_VALIDATION, str(exc))
        return

    recording = None
    aborted = None
    try:
        if settings["backend"] == "sa":
            archive, history = xp.sa_baseline(space, evaluator, cfg, reference)
        elif settings["backend"] == "random":
            archive, history = xp.random_baseline(space, evaluator, cfg, reference)
        else:
            spec_kwargs = {"kind": settings["backend"], "seed": int(settings["seed"])}
            if settings["backend"] == "replay":
                spec_kwargs["transcript_path"] = _require(settings, "transcript")
            if settings["backend"] == "http-chat":
                spec_kwargs.update(endpoint=_require(settings, "endpoint"),
                                   model=_require(settings, "llm_model"),
                                   key_env=_require(settings, "key_env"))
            llm = xp.build_backend(xp.LlmBackendSpec(**spec_kwargs), space,
                                   cfg.batch_size)
            if settings.get("record"):
                llm = recording = xp.RecordingBackend(llm)
            archive, history = xp.run_llm4dse(space, evaluator, llm, cfg, reference)
    except xp.DseAbort as exc:
        archive, history = exc.archive, exc.history
        aborted = exc
    except xp.BackendError as exc:
        _fail(EXIT_BACKEND, str(exc))
        return
    except _VALIDATION_ERRORS as exc:
        _fail(EXIT_VALIDATION, str(exc))
        return

    if reference is not None:
        par.write_front(out / "reference.csv", reference)
    if len(archive) > 0:
        par.write_front(out / "archive.csv", archive)
    xp.emit_convergence(history, out / "convergence.csv")
    if recording is not None:
        recording.save(settings["record"])
    _write_resolved(out, "explore", settings)
    if aborted is not None:
        click.echo(f"aborted with partial results: {aborted.cause}", err=True)
        sys.exit(EXIT_BACKEND)
    if len(archive) == 0:
        _fail(EXIT_NO_OUTPUT, "budget exhausted without any feasible configuration")
    if settings.get("checkpoint") and len(archive) > 0:
        # archive objectives are predictions; re-score the found configurations
        # with the oracle so fronts and ADRS are comparable to ground truth
        oracle_eval = xp.OracleEvaluator(model, space, mode=obj_mode)
        truth = par.ParetoArchive()
        for entry in archive.entries:
            res = oracle_eval(entry.config)
            if res.feasible:
                truth.insert(entry.config, res.objectives)
        if len(truth) > 0:
            par.write_front(out / "archive_oracle.csv", truth)
            if reference is not None:
                click.echo("final ADRS (predictor-chosen configurations re-scored "
                           f"by the oracle): {par.adrs(reference, truth):.6f}")
    if reference is not None:
        click.echo(f"final ADRS: {par.adrs(reference, archive):.6f} "
                   f"({len(archive)} archive points, "
                   f"{history[-1].evaluations if history else 0} evaluations)")
    else:
        click.echo(f"archive holds {len(archive)} non-dominated configurations")


# ---------------------------------------------------------------------------
# adrs
# ---------------------------------------------------------------------------

@main.command("adrs")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--reference", type=click.Path(), default=None)
@click.option("--approx", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def adrs_cmd(config_path, reference, approx, out_dir):
    """Score an approximate front against a reference front."""
    try:
        settings = _resolve_settings(config_path, "adrs", {
            "reference": reference, "approx": approx})
        ref = par.read_front(_require(settings, "reference"))
        apx = par.read_front(_require(settings, "approx"))
        report = par.adrs_report(ref, apx)
    except _VALIDATION_ERRORS as exc:
        _fail(EXIT_VALIDATION, str(exc))
        return
    click.echo(f"ADRS: {report['adrs']:.12g}  (|reference|={report['reference_size']}, "
               f"|approximation|={report['approximation_size']})")
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "adrs.json").write_text(dump_document(report), encoding="utf-8")
        _write_resolved(out, "adrs", settings)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@main.command("report")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--run", "run_dir", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def report_cmd(config_path, run_dir, out_dir):
    """Render figures and a summary table from a run directory."""
    try:
        settings = _resolve_settings(config_path, "report", {"run": run_dir})
        run = Path(_require(settings, "run"))
        if not run.exists():
            raise FileNotFoundError(f"run directory {run} does not exist")
        written = rpt.render_run_report(run, out_dir)
        _write_resolved(Path(out_dir), "report", settings)
    except _VALIDATION_ERRORS as exc:
        _fail(EXIT_VALIDATION, str(exc))
        return
    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()

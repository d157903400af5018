"""Command-line entry point: gen, train, eval, sweep, ablate, selftest."""
from __future__ import annotations

import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import click
import numpy as np

from . import __version__
from .config import ExperimentConfig
from .datasim import clean_twin_spec, degrade, generate, load_corpus, save_corpus
from .model import DualFuseModel
from .numerics import load_checkpoint, save_checkpoint
from .training import (
    TrainingDiverged,
    calibration_diagnostic,
    evaluate,
    train,
)

_FMT = "%.12g"


def _load_config(path):
    if not os.path.exists(path):
        raise click.ClickException(f"config file not found: {path}")
    try:
        return ExperimentConfig.from_json_file(path)
    except (ValueError, TypeError, KeyError) as exc:
        raise click.ClickException(f"bad config {path}: {exc}")


def _write_manifest(out_dir, config, seed, extra=None):
    manifest = {
        "config_hash": config.config_hash(),
        "seed": seed,
        "version": f"dualfuse-{__version__}",
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _apply_overrides(config, seed, ablate):
    if seed is not None:
        config.seed = seed
        config.data = replace(config.data, seed=seed)
    if ablate:
        config = config.with_ablations(ablate.split(","))
    return config


@click.group()
@click.version_option(version=__version__, prog_name="dualfuse")
def main():
    """Train and evaluate the uncertainty-weighted multimodal fusion engine."""


@main.command("gen")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
def cmd_gen(config_path, out_path, seed):
    """Generate a synthetic corpus file."""
    cfg = _apply_overrides(_load_config(config_path), seed, None)
    corpus = generate(cfg.data)
    try:
        save_corpus(out_path, corpus)
    except OSError as exc:
        raise click.ClickException(f"cannot write corpus to {out_path}: {exc}")
    counts = np.bincount(corpus.labels, minlength=cfg.data.n_classes)
    click.echo(f"corpus: {corpus.n} samples, {cfg.data.n_modalities} modalities")
    click.echo("class counts: " + " ".join(str(c) for c in counts))
    click.echo(f"noisy windows: {int((corpus.noise_levels > 0).sum())}")
    click.echo(f"missing windows: {int((~corpus.present).sum())}")
    click.echo(f"wrote {out_path}")


def _require_corpus(path):
    if not os.path.exists(path):
        raise click.ClickException(f"corpus file not found: {path}")
    return load_corpus(path)


def _check_compat(cfg, corpus):
    want = [(m.window, m.channels) for m in cfg.data.modalities]
    have = [(m.window, m.channels) for m in corpus.spec.modalities]
    if want != have or cfg.data.n_classes != corpus.spec.n_classes:
        raise click.ClickException(
            f"config/corpus mismatch: config modalities {want} classes {cfg.data.n_classes}, "
            f"corpus modalities {have} classes {corpus.spec.n_classes}"
        )


def _train_into(cfg, corpus, out_dir, tag=""):
    os.makedirs(out_dir, exist_ok=True)
    suffix = f"_{tag}" if tag else ""
    result = train(cfg, corpus)
    log_path = os.path.join(out_dir, f"train_log{suffix}.csv")
    with open(log_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(result.log_text)
    ckpt_path = os.path.join(out_dir, f"checkpoint{suffix}.bin")
    save_checkpoint(
        ckpt_path,
        result.model.state_dict(),
        meta={"config_hash": cfg.config_hash(), "seed": cfg.seed,
              "ablate": cfg.ablate.active()},
    )
    return result, ckpt_path, log_path


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--ablate", default=None, help="comma-separated switch names")
def cmd_train(config_path, corpus_path, out_dir, seed, ablate):
    """Train on an existing corpus; writes checkpoint and log CSV."""
    cfg = _apply_overrides(_load_config(config_path), seed, ablate)
    corpus = _require_corpus(corpus_path)
    _check_compat(cfg, corpus)
    os.makedirs(out_dir, exist_ok=True)
    _write_manifest(out_dir, cfg, cfg.seed, {"command": "train"})
    try:
        _, ckpt, log = _train_into(cfg, corpus, out_dir)
    except TrainingDiverged as exc:
        click.echo(f"aborted: {exc}", err=True)
        sys.exit(3)
    click.echo(f"wrote {ckpt}")
    click.echo(f"wrote {log}")


def _load_model(cfg, ckpt_path):
    if not os.path.exists(ckpt_path):
        raise click.ClickException(f"checkpoint not found: {ckpt_path}")
    params, _meta = load_checkpoint(ckpt_path)
    model = DualFuseModel(cfg)
    try:
        model.load_state_dict(params)
    except (KeyError, ValueError) as exc:
        raise click.ClickException(f"checkpoint incompatible with config: {exc}")
    return model


def _eval_cell(cfg, model, base_view, noise_rate, missing_rate, missing_modality,
               cell_seed):
    view = degrade(base_view, noise_rate, missing_rate, missing_modality, cell_seed)
    return evaluate(model, view), view


def _write_metrics_csv(path, cell_name, metrics):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cell", "metric", "value"])
        for key in ("accuracy", "precision", "recall", "f1", "auroc"):
            writer.writerow([cell_name, key, _FMT % metrics[key]])


def _write_weight_trace(path, report):
    m = report.r.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["index", "label", "prediction", "fluctuation"]
        for name in ("noise", "present", "r", "s", "w", "unimodal_loss", "p_l"):
            header += [f"{name}_{mi}" for mi in range(m)]
        writer.writerow(header)
        for i in range(len(report.labels)):
            row = [
                str(i),
                str(int(report.labels[i])),
                str(int(report.predictions[i])),
                str(int(report.fluct_flags[i])),
            ]
            row += [_FMT % v for v in report.noise_levels[i]]
            row += [str(int(v)) for v in report.present[i]]
            for mat in (report.r, report.s, report.w, report.unimodal_loss, report.p_l):
                row += [_FMT % v for v in mat[i]]
            writer.writerow(row)


def _write_calibration(path, report):
    stats, _rows = calibration_diagnostic(report)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["modality", "pearson", "spearman"])
        for st in stats:
            writer.writerow([
                str(st.modality),
                "NA" if st.pearson is None else _FMT % st.pearson,
                "NA" if st.spearman is None else _FMT % st.spearman,
            ])


def _cell_name(noise_rate, missing_rate, missing_modality):
    return f"n{int(round(noise_rate * 100))}_m{int(round(missing_rate * 100))}_mod{missing_modality}"


def _cell_seed(base_seed, noise_rate, missing_rate, missing_modality):
    return int(
        np.random.SeedSequence(
            [base_seed, int(round(noise_rate * 1000)),
             int(round(missing_rate * 1000)), missing_modality]
        ).generate_state(1)[0]
    )


@main.command("eval")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path())
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--noise-rate", type=float, default=0.0)
@click.option("--missing-rate", type=float, default=0.0)
@click.option("--missing-modality", type=int, default=None)
@click.option("--seed", type=int, default=None)
def cmd_eval(config_path, ckpt_path, corpus_path, out_dir, noise_rate,
             missing_rate, missing_modality, seed):
    """Evaluate one degradation cell on the corpus test split."""
    cfg = _apply_overrides(_load_config(config_path), seed, None)
    corpus = _require_corpus(corpus_path)
    _check_compat(cfg, corpus)
    model = _load_model(cfg, ckpt_path)
    if missing_modality is None:
        missing_modality = cfg.data.missing_modality
    _, test_idx = corpus.split(cfg.train_frac)
    base_view = corpus.subset(test_idx)
    cell_seed = _cell_seed(cfg.seed, noise_rate, missing_rate, missing_modality)
    result, _view = _eval_cell(cfg, model, base_view, noise_rate, missing_rate,
                               missing_modality, cell_seed)
    os.makedirs(out_dir, exist_ok=True)
    name = _cell_name(noise_rate, missing_rate, missing_modality)
    _write_manifest(out_dir, cfg, cfg.seed, {"command": "eval", "cell": name})
    _write_metrics_csv(os.path.join(out_dir, f"metrics_{name}.csv"), name, result.metrics)
    _write_weight_trace(os.path.join(out_dir, f"weights_{name}.csv"), result.report)
    _write_calibration(os.path.join(out_dir, f"calibration_{name}.csv"), result.report)
    click.echo(
        f"cell {name}: accuracy={result.metrics['accuracy']:.4f} "
        f"f1={result.metrics['f1']:.4f}"
    )


def _sweep_cell_job(args):
    (config_dict, run_seed, ckpt_path, noise_rate, missing_rate,
     missing_modality, out_dir) = args
    cfg = ExperimentConfig.from_dict(config_dict)
    cfg.seed = run_seed
    cfg.data = replace(cfg.data, seed=run_seed)
    name = _cell_name(noise_rate, missing_rate, missing_modality)
    metrics_path = os.path.join(out_dir, f"metrics_{name}_seed{run_seed}.csv")
    if os.path.exists(metrics_path):
        return metrics_path
    eval_corpus = generate(clean_twin_spec(cfg.data))
    _, test_idx = eval_corpus.split(cfg.train_frac)
    base_view = eval_corpus.subset(test_idx)
    model = _load_model(cfg, ckpt_path)
    cell_seed = _cell_seed(run_seed, noise_rate, missing_rate, missing_modality)
    result, _ = _eval_cell(cfg, model, base_view, noise_rate, missing_rate,
                           missing_modality, cell_seed)
    _write_metrics_csv(metrics_path, f"{name}_seed{run_seed}", result.metrics)
    _write_weight_trace(
        os.path.join(out_dir, f"weights_{name}_seed{run_seed}.csv"), result.report
    )
    return metrics_path


def _train_seed_job(args):
    config_dict, run_seed, out_dir = args
    cfg = ExperimentConfig.from_dict(config_dict)
    cfg.seed = run_seed
    cfg.data = replace(cfg.data, seed=run_seed)
    ckpt_path = os.path.join(out_dir, f"checkpoint_seed{run_seed}.bin")
    if os.path.exists(ckpt_path):
        return ckpt_path
    corpus_path = os.path.join(out_dir, f"corpus_seed{run_seed}.bin")
    if os.path.exists(corpus_path):
        corpus = load_corpus(corpus_path)
    else:
        corpus = generate(cfg.data)
        save_corpus(corpus_path, corpus)
    result = train(cfg, corpus)
    with open(os.path.join(out_dir, f"train_log_seed{run_seed}.csv"), "w",
              encoding="utf-8", newline="") as fh:
        fh.write(result.log_text)
    save_checkpoint(ckpt_path, result.model.state_dict(),
                    meta={"config_hash": cfg.config_hash(), "seed": run_seed,
                          "ablate": cfg.ablate.active()})
    return ckpt_path


@main.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--jobs", type=int, default=1)
@click.option("--ablate", default=None, help="comma-separated switch names")
def cmd_sweep(config_path, out_dir, jobs, ablate):
    """Train per seed, then evaluate the full degradation grid."""
    cfg = _apply_overrides(_load_config(config_path), None, ablate)
    os.makedirs(out_dir, exist_ok=True)
    _write_manifest(out_dir, cfg, cfg.seed, {"command": "sweep"})
    config_dict = cfg.to_dict()
    seeds = list(cfg.sweep.seeds)

    train_jobs = [(config_dict, s, out_dir) for s in seeds]
    ckpts = _run_jobs(_train_seed_job, train_jobs, jobs)

    cell_jobs = []
    for seed, ckpt in zip(seeds, ckpts):
        for noise_rate in cfg.sweep.noise_rates:
            for missing_rate in cfg.sweep.missing_rates:
                for mod in cfg.sweep.missing_modalities:
                    cell_jobs.append(
                        (config_dict, seed, ckpt, noise_rate, missing_rate, mod, out_dir)
                    )
    _run_jobs(_sweep_cell_job, cell_jobs, jobs)

    summary = _aggregate_sweep(cfg, out_dir, seeds)
    click.echo(f"wrote {summary}")


def _run_jobs(fn, args_list, jobs):
    if jobs <= 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, args_list))


def _aggregate_sweep(cfg, out_dir, seeds):
    """Mean metrics per (missing, noise) cell across seeds, Table-style rows."""
    path = os.path.join(out_dir, "sweep_summary.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["missing_rate", "noise_rate", "missing_modality",
                         "accuracy", "precision", "recall", "f1"])
        for missing_rate in cfg.sweep.missing_rates:
            for noise_rate in cfg.sweep.noise_rates:
                for mod in cfg.sweep.missing_modalities:
                    name = _cell_name(noise_rate, missing_rate, mod)
                    acc = {k: [] for k in ("accuracy", "precision", "recall", "f1")}
                    for seed in seeds:
                        mpath = os.path.join(out_dir, f"metrics_{name}_seed{seed}.csv")
                        with open(mpath, encoding="utf-8") as mfh:
                            for row in csv.DictReader(mfh):
                                if row["metric"] in acc:
                                    acc[row["metric"]].append(float(row["value"]))
                    writer.writerow(
                        [_FMT % missing_rate, _FMT % noise_rate, str(mod)]
                        + [_FMT % float(np.mean(acc[k]))
                           for k in ("accuracy", "precision", "recall", "f1")]
                    )
    return path


@main.command("ablate")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--ablate", "ablate", required=True, help="comma-separated switch names")
@click.option("--seed", type=int, default=None)
@click.option("--jobs", type=int, default=1)
@click.pass_context
def cmd_ablate(ctx, config_path, out_dir, ablate, seed, jobs):
    """Train and sweep with ablation switches enabled (train+eval alias)."""
    cfg = _apply_overrides(_load_config(config_path), seed, ablate)
    if seed is not None:
        cfg.sweep.seeds = [seed]
    os.makedirs(out_dir, exist_ok=True)
    tmp_cfg = os.path.join(out_dir, "ablate_config.json")
    with open(tmp_cfg, "w", encoding="utf-8") as fh:
        fh.write(cfg.to_json())
        fh.write("\n")
    ctx.invoke(cmd_sweep, config_path=tmp_cfg, out_dir=out_dir, jobs=jobs, ablate=None)


@main.command("selftest")
@click.option("--quick/--full", default=True)
def cmd_selftest(quick):
    """Finite-difference and invariant smoke suite; exits nonzero on failure."""
    from .selftest import run_selftest

    ok = run_selftest(quick=quick, echo=click.echo)
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()

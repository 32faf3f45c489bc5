"""Command-line pipeline driver.

Subcommands: synth, pool, select, train, eval, report. Every command is
deterministic given its inputs and seeds, and writes outputs atomically.
Exit codes: 0 ok, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import baselines, evaluation, nbp, selection, synth
from .clustering import fit_cluster_model, pooled_labels
from .core import ValidationError
from .data import (
    RunConfig,
    atomic_write,
    facebook_preprocess,
    load_config,
    load_corpus,
    load_pooled,
    save_corpus,
    save_pooled,
    split_downsample,
)
from .learner import LearnerConfig, TrainedLearner, train as train_learner
from .mixing import fit_feature_transform, mixed_matrices


@click.group()
def cli():
    """Two-stage pooling + distributional learning over crowd labels."""


def _load_run_config(config_path, seed=None, out=None) -> RunConfig:
    cfg = load_config(config_path) if config_path else RunConfig()
    if seed is not None:
        cfg.split_seed = seed
    if out is not None:
        cfg.out_dir = out
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    return cfg


def _infer_label_names(path):
    names = set()
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            names.update(obj.get("counts", {}).keys())
            names.update(a["label"] for a in obj.get("annotations", []))
    if not names:
        raise ValidationError(f"{path}: no label names found")
    return sorted(names)


def _load_splits(data_path, cfg: RunConfig, preprocess=None):
    label_names = cfg.label_names or _infer_label_names(data_path)
    ds = load_corpus(data_path, label_names)
    if preprocess == "facebook":
        ds = facebook_preprocess(ds)
    return split_downsample(ds, cfg)


common_options = [
    click.option("--config", "config_path", type=click.Path(exists=True),
                 default=None, help="key=value run configuration file"),
    click.option("--seed", type=int, default=None, help="override split seed"),
    click.option("--out", type=click.Path(), default=None,
                 help="override output directory"),
]


def with_common(f):
    for opt in reversed(common_options):
        f = opt(f)
    return f


@cli.command("synth")
@click.option("--n", type=int, default=2000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default="synth.jsonl", show_default=True)
def synth_cmd(n, seed, out):
    """Emit the bundled synthetic planted-cluster dataset."""
    ds = synth.make_synthetic(n=n, seed=seed)
    save_corpus(ds, out)
    click.echo(f"wrote {len(ds)} items to {out}")


@cli.command("pool")
@with_common
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--method", type=click.Choice(["kmeans", "gmm", "fmm", "lda", "nbp"]),
              required=True)
@click.option("--w", type=float, required=True)
@click.option("--p", type=int, default=None, help="cluster count (generative methods)")
@click.option("--r", type=float, default=None, help="KL-ball radius (nbp)")
@click.option("--fit-seed", type=int, default=0, show_default=True)
@click.option("--preprocess", type=click.Choice(["facebook"]), default=None)
def pool_cmd(config_path, seed, out, data_path, method, w, p, r, fit_seed,
             preprocess):
    """Fit one Stage-1 method on the train split; write pooled labels + model."""
    cfg = _load_run_config(config_path, seed, out)
    train, _, _ = _load_splits(data_path, cfg, preprocess)
    t = fit_feature_transform(train)
    out_dir = cfg.out_dir

    if method == "nbp":
        if r is None:
            raise ValidationError("nbp pooling needs --r")
        ncfg = nbp.NbpConfig(r=r, w=w)
        pooled = nbp.nbp_pool(train, ncfg, t)
        score = nbp.nbp_stage1_score(train, ncfg, t)
        model_doc = {
            "format": "cluster-model/v1", "method": "nbp", "p": None,
            "r": r, "w": w, "seed": fit_seed, "stage1_score": score,
            "parameters": {}, "assignments": {},
        }
        atomic_write(f"{out_dir}/model.json", json.dumps(model_doc))
    else:
        if p is None:
            raise ValidationError(f"{method} pooling needs --p")
        raw, simplex = mixed_matrices(train, w, t)
        scale = np.array([it.n_annotations for it in train.items])
        model = fit_cluster_model(method, raw, simplex, p, fit_seed,
                                  w=w, ids=train.ids, scale=scale)
        pooled = pooled_labels(model, train)
        score = selection.cluster_stage1_score(model, train, w, t)
        doc = json.loads(model.to_json())
        doc["stage1_score"] = score
        atomic_write(f"{out_dir}/model.json", json.dumps(doc))

    save_pooled(pooled, f"{out_dir}/pooled.jsonl")
    click.echo(f"stage-1 mean KL: {score:.6f}")
    click.echo(f"wrote {out_dir}/model.json and {out_dir}/pooled.jsonl")


@cli.command("select")
@with_common
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--methods", default="kmeans,gmm,fmm,lda,nbp", show_default=True)
@click.option("--w-grid", default="0,0.25,0.5,0.75,1.0", show_default=True)
@click.option("--mode", type=click.Choice(["stage1", "stage2-dev"]),
              default="stage1", show_default=True)
@click.option("--fit-seed", type=int, default=0, show_default=True)
@click.option("--preprocess", type=click.Choice(["facebook"]), default=None)
def select_cmd(config_path, seed, out, data_path, methods, w_grid, mode,
               fit_seed, preprocess):
    """Run the hyperparameter grids and write the selection report."""
    cfg = _load_run_config(config_path, seed, out)
    train, dev, _ = _load_splits(data_path, cfg, preprocess)
    t = fit_feature_transform(train)
    method_list = [m.strip() for m in methods.split(",") if m.strip()]
    w_list = [float(v) for v in w_grid.split(",")]
    results = selection.select_overall(
        train, method_list, w_list, fit_seed, t, mode=mode,
        dev=dev if mode == "stage2-dev" else None,
        learner_config=cfg.learner if mode == "stage2-dev" else None,
    )
    doc = selection.write_report(results, json_path=f"{cfg.out_dir}/selection.json",
                                 csv_path=f"{cfg.out_dir}/selection.csv")
    best = results[0]
    click.echo(f"winner: {best.method} w={best.w} "
               f"hp={best.best_hyperparameter} score={best.best_score:.6f}")
    click.echo(f"wrote {cfg.out_dir}/selection.json ({len(doc['rows'])} rows)")


@cli.command("train")
@with_common
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--targets", required=True,
              help="'pd', 'sl', 'ds', or 'pooled:<path to pooled.jsonl>'")
@click.option("--arch", type=click.Choice(["linear", "mlp", "conv1d"]),
              default=None, help="override learner architecture")
@click.option("--train-seed", type=int, default=None)
@click.option("--preprocess", type=click.Choice(["facebook"]), default=None)
def train_cmd(config_path, seed, out, data_path, targets, arch, train_seed,
              preprocess):
    """Train the Stage-2 learner on a target source and write a checkpoint."""
    cfg = _load_run_config(config_path, seed, out)
    train, dev, _ = _load_splits(data_path, cfg, preprocess)

    if targets == "pd":
        pooled = baselines.pd_targets(train)
    elif targets == "sl":
        pooled = baselines.sl_targets(train)
    elif targets == "ds":
        pooled = baselines.dawid_skene_fit(train).targets()
    elif targets.startswith("pooled:"):
        pooled = load_pooled(targets[len("pooled:"):])
        pooled.check_covers(train)
    else:
        raise ValidationError(f"unknown target source {targets!r}")

    lcfg = cfg.learner
    if arch is not None:
        lcfg.architecture = arch
    if train_seed is not None:
        lcfg.seed = train_seed

    pairs = [(it.features, pooled[it.id].probs) for it in train.items]
    dev_y = dev.label_matrix()
    dev_pairs = [(it.features, dev_y[i]) for i, it in enumerate(dev.items)]
    model = train_learner(pairs, dev_pairs, lcfg)
    model.save(f"{cfg.out_dir}/checkpoint.npz")
    model.save_curve_csv(f"{cfg.out_dir}/curve.csv")
    best_dev = min(row[2] for row in model.curve)
    click.echo(f"best dev mean KL: {best_dev:.6f}")
    click.echo(f"wrote {cfg.out_dir}/checkpoint.npz")


@cli.command("eval")
@with_common
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--split", type=click.Choice(["train", "dev", "test"]),
              default="test", show_default=True)
@click.option("--preprocess", type=click.Choice(["facebook"]), default=None)
def eval_cmd(config_path, seed, out, data_path, model_path, split, preprocess):
    """Evaluate a checkpoint on a named split (against empirical labels)."""
    cfg = _load_run_config(config_path, seed, out)
    splits = dict(zip(("train", "dev", "test"),
                      _load_splits(data_path, cfg, preprocess)))
    model = TrainedLearner.load(model_path)
    report = evaluation.evaluate(model, splits[split],
                                 fingerprint={"model": model_path,
                                              "split_seed": cfg.split_seed})
    atomic_write(f"{cfg.out_dir}/eval_{split}.json", report.to_json())
    report.write_csv(f"{cfg.out_dir}/eval_{split}.csv")
    click.echo(f"mean KL: {report.mean_kl:.6f}  accuracy: {report.accuracy:.4f}")


@cli.command("report")
@with_common
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--top-k", type=int, default=100, show_default=True)
@click.option("--preprocess", type=click.Choice(["facebook"]), default=None)
def report_cmd(config_path, seed, out, data_path, top_k, preprocess):
    """Entropy histogram and extreme-entropy item lists for a corpus."""
    cfg = _load_run_config(config_path, seed, out)
    label_names = cfg.label_names or _infer_label_names(data_path)
    ds = load_corpus(data_path, label_names)
    if preprocess == "facebook":
        ds = facebook_preprocess(ds)
    rep = evaluation.entropy_report(ds, k=top_k)
    atomic_write(f"{cfg.out_dir}/entropy.json", json.dumps(rep))
    evaluation.write_histogram_data(rep, f"{cfg.out_dir}/entropy.dat")
    from .core import dataset_mean_entropy
    click.echo(f"mean entropy: {dataset_mean_entropy(ds):.4f}")
    click.echo(f"wrote {cfg.out_dir}/entropy.json")


def main():
    try:
        cli(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(2)
    except click.UsageError as err:
        err.show()
        sys.exit(2)
    except click.ClickException as err:
        err.show()
        sys.exit(1)
    except ValidationError as err:
        click.echo(f"validation error: {err}", err=True)
        sys.exit(1)
    except Exception as err:  # noqa: BLE001 - CLI boundary
        click.echo(f"error: {err}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()

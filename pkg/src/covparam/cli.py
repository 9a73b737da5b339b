"""Command-line interface: ``covparam <command> ...``."""
from __future__ import annotations

import json
import logging
import sys
import warnings

import click
import numpy as np

from . import bench as bench_mod
from .io import (FormatError, load_image, load_model, read_reps, rep_header, save_model,
                 write_matrix_csv, format_matrix_csv)
from .metrics import METRICS, pairwise
from .parameterization import EuclidRep, Kind, rep_length, unparameterize
from .pipeline import (ExperimentConfig, PipelineError, extract_descriptors,
                       extract_representations, load_dataset, run_experiment,
                       synthetic_gratings)
from .sparse import classify_batch, lcksvd_train

log = logging.getLogger("covparam")


class Context:
    def __init__(self, config: ExperimentConfig, out: str | None):
        self.config = config
        self.out = out

    def emit(self, text: str, out: str | None = None):
        path = out or self.out
        if path:
            with open(path, "w", newline="\n") as fh:
                fh.write(text)
        else:
            click.echo(text, nl=False)


def _fail(exc: Exception):
    raise click.ClickException(str(exc))


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Experiment config JSON.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", type=click.Path(), default=None, help="Output path (stdout if omitted).")
@click.option("-v", "--verbose", count=True)
@click.pass_context
def main(ctx, config_path, seed, out, verbose):
    """Covariance-descriptor parameterization and LC-KSVD classification."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = ExperimentConfig.from_json(config_path) if config_path else ExperimentConfig()
    except FileNotFoundError:
        _fail(FileNotFoundError(f"config not found: {config_path}"))
    except (ValueError, TypeError) as exc:
        _fail(exc)
    if seed is not None:
        config.seed = seed
    ctx.obj = Context(config, out)


def _run(fn):
    try:
        return fn()
    except (FileNotFoundError, ValueError, FormatError, PipelineError) as exc:
        _fail(exc)


@main.command()
@click.argument("images", nargs=-1, type=click.Path())
@click.option("--dataset", type=click.Path(), default=None,
              help="Class-per-directory dataset; rows get a leading label column.")
@click.option("--emit", type=click.Choice(["rep", "cov"]), default="rep",
              help="Write representations or full covariance matrices.")
@click.pass_obj
def extract(obj: Context, images, dataset, emit):
    """One row per image block."""
    cfg = obj.config

    def rows_for(img):
        if emit == "rep":
            return extract_representations(img, cfg)
        descs = extract_descriptors(img, cfg.block_size, cfg.block_stride, cfg.feature_set,
                                    cfg.eps_scale)
        return np.array([d.C.ravel() for d in descs])

    def go():
        if bool(images) == bool(dataset):
            raise click.UsageError("give either image paths or --dataset")
        blocks, names = [], ()
        if dataset:
            ds = load_dataset(dataset, cfg.resize)
            names = ds.class_names
            for img, lab in zip(ds.images, ds.labels):
                R = rows_for(img)
                blocks.append(np.column_stack((np.full(R.shape[0], lab), R)))
        for path in images:
            blocks.append(rows_for(load_image(path, cfg.resize)))
        M = np.vstack(blocks)
        d = M.shape[1] - bool(dataset)
        if emit == "cov":
            header = {"kind": "cov", "d": int(round(np.sqrt(d)))}
            if dataset:
                header.update(labels="first-column", classes=json.dumps(list(names)))
        else:
            header = rep_header(cfg.param_kind, _feature_dim(cfg), cfg.lam, cfg.fuse_mean,
                                bool(dataset), names)
        obj.emit(format_matrix_csv(M, header))

    _run(go)


def _feature_dim(cfg) -> int:
    from .descriptor import compute_feature_tensor
    return compute_feature_tensor(np.zeros((3, 3)), cfg.feature_set).d


@main.command()
@click.argument("data", type=click.Path())
@click.option("--report", type=click.Path(), default=None,
              help="Write training-set accuracy JSON here.")
@click.pass_obj
def train(obj: Context, data, report):
    """Train an LC-KSVD model on a labeled representation CSV."""
    cfg = obj.config

    def go():
        if not obj.out:
            raise click.UsageError("train needs --out for the model file")
        R, labels, header = read_reps(data)
        if labels is None:
            raise FormatError(f"{data}: training data must be labeled")
        names = tuple(json.loads(header.get("classes", "[]")))
        m = max(len(names), int(labels.max()) + 1)
        K = cfg.K or R.shape[1]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            model = lcksvd_train(R.T, labels, K, cfg.alpha, cfg.beta, cfg.T, cfg.iterations,
                                 cfg.seed, n_classes=m, class_names=names)
        save_model(model, obj.out)
        acc = float(np.mean(classify_batch(model, R.T) == labels))
        click.echo(f"training accuracy: {acc:.6f}", err=True)
        if report:
            with open(report, "w") as fh:
                json.dump({"accuracy": acc, "n_samples": int(R.shape[0]), "K": K}, fh,
                          indent=2, sort_keys=True)
                fh.write("\n")

    _run(go)


@main.command()
@click.argument("data", type=click.Path())
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.pass_obj
def classify(obj: Context, data, model_path):
    """Predict a label per row; prints accuracy when the CSV is labeled."""
    def go():
        model = load_model(model_path)
        R, labels, _ = read_reps(data)
        if R.shape[1] != model.d_rep:
            raise FormatError(f"{data}: rows have {R.shape[1]} values, model expects {model.d_rep}")
        pred = classify_batch(model, R.T)
        obj.emit(format_matrix_csv(pred[:, None], {"column": "predicted label"}))
        if labels is not None:
            click.echo(f"accuracy: {float(np.mean(pred == labels)):.6f}", err=True)

    _run(go)


def _load_items(path, metric):
    R, _, header = read_reps(path)
    kind = header.get("kind", "sphere")
    d = int(header["d"]) if "d" in header else None
    if metric == "euclid":
        if kind == "cov":
            raise FormatError(f"{path}: euclid distance needs a representation file")
        fused = header.get("fused", "false") == "true"
        lam = float(header.get("lambda", "0"))
        return [EuclidRep(Kind(kind), d, row.copy(), fused, lam if fused else 0.0) for row in R]
    if kind == "cov":
        return [row.reshape(d, d) for row in R]
    fused = header.get("fused", "false") == "true"
    if R.shape[1] != rep_length(d, fused):
        raise FormatError(f"{path}: row length does not match d={d}")
    return [unparameterize(EuclidRep(Kind(kind), d, row.copy(), fused, 1.0)) for row in R]


@main.command()
@click.argument("first", type=click.Path())
@click.argument("second", type=click.Path(), required=False)
@click.option("--metric", type=click.Choice(sorted(METRICS)), default="euclid")
@click.pass_obj
def dist(obj: Context, first, second, metric):
    """Pairwise distance matrix between the rows of one or two files."""
    def go():
        a = _load_items(first, metric)
        b = _load_items(second, metric) if second else a
        D = pairwise(a, b, metric)
        obj.emit(format_matrix_csv(D, {"metric": metric, "rows": first,
                                       "columns": second or first}))

    _run(go)


@main.command()
@click.option("--d", "d_list", default="16,32,64,128,256", help="Comma-separated sizes.")
@click.option("--reps", default=bench_mod.MIN_REPS, type=int)
@click.option("--metrics", default=",".join(bench_mod.BENCH_METRICS))
@click.option("--summary", type=click.Path(), default=None,
              help="Slope summary JSON (default: <out>.json).")
@click.pass_obj
def bench(obj: Context, d_list, reps, metrics, summary):
    """Time the similarity measures and fit log-log slopes."""
    def go():
        ds = [int(v) for v in d_list.split(",")]
        records, slopes = bench_mod.bench_metrics(ds, reps, obj.config.seed,
                                                  tuple(metrics.split(",")))
        lines = ["metric,d,reps,median_ns,mad_ns\n"]
        lines += [f"{r.metric},{r.d},{r.reps},{r.median_ns:.1f},{r.mad_ns:.1f}\n"
                  for r in records]
        obj.emit("".join(lines))
        doc = json.dumps({"d_list": ds, "reps": reps, "fit_range": sorted(ds)[len(ds) // 2:],
                          "slopes": slopes}, indent=2, sort_keys=True) + "\n"
        target = summary or (obj.out + ".json" if obj.out else None)
        if target:
            with open(target, "w") as fh:
                fh.write(doc)
        else:
            click.echo(doc, err=True, nl=False)

    _run(go)


@main.command(name="eval")
@click.option("--dataset", type=click.Path(), default=None,
              help="Dataset directory (overrides config paths.dataset).")
@click.option("--synthetic", is_flag=True, help="Use the built-in oriented-grating set.")
@click.option("--timings", is_flag=True, help="Include wall-times in the report.")
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Also write per-repeat accuracies as matrix CSV.")
@click.pass_obj
def evaluate(obj: Context, dataset, synthetic, timings, csv_path):
    """Run the full extract / train / classify protocol."""
    cfg = obj.config

    def go():
        data = None
        if synthetic:
            data = synthetic_gratings(seed=cfg.seed)
        elif dataset:
            cfg.paths = {**cfg.paths, "dataset": dataset}
        report = run_experiment(cfg, data)
        obj.emit(report.to_json(timings))
        if csv_path:
            write_matrix_csv(csv_path, np.array(report.accuracies)[:, None],
                             {"column": "accuracy per repeat", "mean": repr(report.mean)})
        click.echo(f"mean accuracy {report.mean:.4f} (std {report.std:.4f}, "
                   f"max {report.max:.4f})", err=True)

    _run(go)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

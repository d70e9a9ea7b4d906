"""Command-line front end: synthesis, Gram caching, multi-restart training,
classification, and evaluation reports.

Commands: synth, gram, train, classify, eval. Every command takes --config
pointing at a flat key-value file (see the README for the grammar); explicit
flags override file values. Outputs land under the --out directory and are
written atomically; runs are deterministic for a fixed configuration. The
KDICT_CACHE_DIR environment variable enables a DTW distance cache keyed by
dataset content hash.
"""

import argparse
import io
import json
import os
import re
import sys

import numpy as np

from .baselines import (RidgeOneVsRest, kernel_kmeans, kkm_codes, kkm_distances,
                        knn_predict, kpca_project)
from .classifier import classify_rows, load_model, save_model, train_classifier
from .dataset import ROLES, load_dataset, generate_synthetic, save_dataset, split_dataset
from .dtw import cross_distances, pairwise_distances
from .kernels import gram_from_distances, load_distances, save_distances
from .metrics import EvalReport, accuracy, class_sparsity, dictionary_sparseness, \
    reconstruction_error
from .dictionary import TrainConfig


class ConfigError(Exception):
    """Invalid flags, config file, or referenced inputs; exits with code 2."""


# -- option plumbing ---------------------------------------------------------

def _parse_bool(text):
    if text in ("true", "True", "1", "yes"):
        return True
    if text in ("false", "False", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


# per-command option specs: dest -> (type name, default, help)
_COMMON = {"config": ("str", None, "flat key-value config file; flags override")}

_SPECS = {
    "synth": {
        **_COMMON,
        "out": ("str", None, "output directory (required)"),
        "classes": ("int", 3, "number of classes"),
        "per_class": ("int", 20, "samples per class"),
        "channels": ("int", 2, "channels per series"),
        "noise_sd": ("float", 0.1, "additive noise level"),
        "warp": ("bool", True, "random monotone time-warping and length jitter"),
        "seed": ("int", 0, "generator seed"),
        "format": ("str", "jsonl", "dataset format: jsonl or csv_long"),
    },
    "gram": {
        **_COMMON,
        "dataset": ("str", None, "dataset file (required)"),
        "format": ("str", "auto", "dataset format: auto, jsonl, csv_long"),
        "out": ("str", None, "output directory (required)"),
        "sigma": ("float", None, "kernel bandwidth (default: mean sq. distance)"),
    },
    "train": {
        **_COMMON,
        "dataset": ("str", None, "dataset file (required)"),
        "format": ("str", "auto", "dataset format"),
        "out": ("str", None, "output directory (required)"),
        "k": ("str", "2C", "atom count: integer, or 'nC' for n atoms per class"),
        "T": ("int", 4, "sparsity limit per code"),
        "lam": ("float", 0.1, "l1 weight on atoms"),
        "alpha": ("float", 1.0, "atom-assignment similarity weight"),
        "beta": ("float", 5.0, "label similarity weight"),
        "sigma": ("float", None, "kernel bandwidth override"),
        "seed": ("int", 0, "base training seed"),
        "split_seed": ("int", 0, "train/test/validation split seed"),
        "restarts": ("int", 10, "independent trainings; best kept"),
        "epochs": ("int", 50, "outer iteration cap"),
        "rel_tol": ("float", 1e-4, "outer convergence threshold"),
        "eta": ("float", 0.5, "line-search shrink factor"),
        "alpha0": ("float", None, "initial proximal step (default: auto)"),
        "delta": ("float", 1e-6, "atom-update stopping threshold"),
        "fista_max_iter": ("int", 300, "atom-update iteration cap"),
        "patience": ("int", 3, "early-stop patience on test error; 0 disables"),
        "tol": ("float", 1e-10, "coding tolerance"),
    },
    "classify": {
        **_COMMON,
        "model": ("str", None, "model file (required)"),
        "dataset": ("str", None, "dataset file of queries (required)"),
        "format": ("str", "auto", "dataset format"),
        "out": ("str", None, "output directory (required)"),
    },
    "eval": {
        **_COMMON,
        "model": ("str", None, "model file (required)"),
        "dataset": ("str", None, "dataset file (required)"),
        "format": ("str", "auto", "dataset format"),
        "out": ("str", None, "output directory (required)"),
        "role": ("str", "validation", "evaluate on: train, test, validation, all"),
        "split_seed": ("int", None, "split seed (default: from model metadata)"),
        "baselines": ("str", "", "comma list of knn, kkmeans, kpca"),
        "restarts": ("int", 10, "restarts for the kernel k-means baseline"),
        "ridge": ("float", 1e-3, "ridge of the baseline classifier"),
        "knn_k": ("int", 3, "neighbors for the kNN baseline"),
        "plot": ("bool", False, "write an SVG of the training error trace"),
    },
}

_PARSERS = {"int": int, "float": float, "str": str, "bool": _parse_bool}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="kdict",
        description="Nonnegative kernel sparse coding for time series over DTW kernels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, spec in _SPECS.items():
        p = sub.add_parser(command)
        for dest, (_, _, help_text) in spec.items():
            flag = "--" + dest.replace("_", "-")
            p.add_argument(flag, dest=dest, default=None, help=help_text)
    return parser


def _read_config_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if len(value) >= 2 and value[0] == value[-1] == '"':
                value = value[1:-1]
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            values[key] = value
    return values


def _resolve_options(args):
    spec = _SPECS[args.command]
    file_values = {}
    if args.config is not None:
        file_values = _read_config_file(args.config)
        unknown = set(file_values) - (set(spec) - {"config"})
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    options = {}
    for dest, (type_name, default, _) in spec.items():
        if dest == "config":
            continue
        raw = getattr(args, dest)
        if raw is None and dest in file_values:
            raw = file_values[dest]
        if raw is None:
            options[dest] = default
            continue
        try:
            options[dest] = _PARSERS[type_name](raw)
        except ConfigError:
            raise
        except ValueError:
            raise ConfigError(f"--{dest.replace('_', '-')}: expected {type_name}, got {raw!r}") from None
    return options


def _require(options, *keys):
    for key in keys:
        if options.get(key) is None:
            raise ConfigError(f"--{key.replace('_', '-')} is required")


def _ensure_outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write_text(path, text):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_bytes(path, data):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _load_dataset_checked(path, fmt):
    if not os.path.exists(path):
        raise ConfigError(f"dataset file not found: {path}")
    if fmt == "auto":
        if path.endswith(".jsonl"):
            fmt = "jsonl"
        elif path.endswith(".csv"):
            fmt = "csv_long"
        else:
            raise ConfigError(f"cannot infer format of {path}; pass --format")
    if fmt not in ("jsonl", "csv_long"):
        raise ConfigError(f"unknown dataset format {fmt!r}")
    try:
        return load_dataset(path, format=fmt)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _load_model_checked(path):
    if not os.path.exists(path):
        raise ConfigError(f"model file not found: {path}")
    try:
        return load_model(path)
    except (ValueError, KeyError) as e:
        raise ConfigError(f"{path}: {e}") from e


def _resolve_distances(ds):
    """Full pairwise DTW matrix, via KDICT_CACHE_DIR when set."""
    cache_dir = os.environ.get("KDICT_CACHE_DIR")
    if not cache_dir:
        return pairwise_distances(ds.series)
    os.makedirs(cache_dir, exist_ok=True)
    content = ds.content_hash()
    path = os.path.join(cache_dir, f"dtw_{content}.npy")
    cached = load_distances(path, content)
    if cached is not None:
        return cached
    D = pairwise_distances(ds.series)
    save_distances(path, D, content)
    return D


def _parse_atom_count(text, n_classes):
    match = re.fullmatch(r"(\d+)[cC]", text.strip())
    if match:
        return int(match.group(1)) * n_classes
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"--k: expected an integer or 'nC', got {text!r}") from None


# -- commands ----------------------------------------------------------------

def _cmd_synth(options):
    _require(options, "out")
    ds = generate_synthetic(
        classes=options["classes"], per_class=options["per_class"],
        channels=options["channels"], noise_sd=options["noise_sd"],
        warp=options["warp"], rng_seed=options["seed"],
    )
    out = _ensure_outdir(options["out"])
    ext = "jsonl" if options["format"] == "jsonl" else "csv"
    if options["format"] not in ("jsonl", "csv_long"):
        raise ConfigError(f"unknown dataset format {options['format']!r}")
    path = os.path.join(out, f"dataset.{ext}")
    tmp = f"{path}.tmp.{os.getpid()}"
    save_dataset(ds, tmp, format=options["format"])
    os.replace(tmp, path)
    print(path)
    return 0


def _cmd_gram(options):
    _require(options, "dataset", "out")
    ds = _load_dataset_checked(options["dataset"], options["format"])
    out = _ensure_outdir(options["out"])
    D = _resolve_distances(ds)
    gram = gram_from_distances(D, sigma=options["sigma"])
    save_distances(os.path.join(out, "distances.npy"), D, ds.content_hash())
    buf = io.BytesIO()
    np.save(buf, gram.values)
    _write_bytes(os.path.join(out, "gram.npy"), buf.getvalue())
    meta = {"version": 1, "sigma": gram.sigma, "dataset_sha256": ds.content_hash(),
            "n": ds.n_samples}
    _write_text(os.path.join(out, "gram.meta.json"),
                json.dumps(meta, sort_keys=True, indent=2) + "\n")
    print(os.path.join(out, "gram.npy"))
    return 0


def _trace_csv_text(summary):
    lines = ["epoch,objective,rec_error_percent,replacements"]
    for e in range(summary["epochs"]):
        lines.append(
            f"{e + 1},{summary['objective'][e]!r},"
            f"{summary['rec_error_percent'][e]!r},{summary['replacements'][e]}"
        )
    return "\n".join(lines) + "\n"


def _cmd_train(options):
    _require(options, "dataset", "out")
    ds = _load_dataset_checked(options["dataset"], options["format"])
    n_atoms = _parse_atom_count(options["k"], ds.n_classes)
    try:
        split = split_dataset(ds, rng_seed=options["split_seed"])
    except ValueError as e:
        raise ConfigError(str(e)) from e
    D = _resolve_distances(ds)
    patience = options["patience"] if options["patience"] > 0 else None
    train_idx = split.train_indices
    test_idx = split.test_indices

    candidates = []
    for restart in range(options["restarts"]):
        seed = options["seed"] + restart
        try:
            cfg = TrainConfig(
                n_atoms=n_atoms, sparsity=options["T"], lam=options["lam"],
                eta=options["eta"], alpha0=options["alpha0"], delta=options["delta"],
                fista_max_iter=options["fista_max_iter"], epochs=options["epochs"],
                rel_tol=options["rel_tol"], rng_seed=seed, tol=options["tol"],
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e
        model = train_classifier(
            ds, split, cfg, options["alpha"], options["beta"], distances=D,
            patience=patience, sigma=options["sigma"],
        )
        model._base_gram = gram_from_distances(
            D[np.ix_(train_idx, train_idx)], sigma=model.sigma
        ).values
        test_rows = np.exp(-(D[np.ix_(test_idx, train_idx)] ** 2) / model.sigma)
        pred, _, _ = classify_rows(model, test_rows)
        test_acc = accuracy(pred, ds.labels[test_idx])
        rec_err = model.trace_summary["final_error_percent"]
        candidates.append((-test_acc, rec_err, seed, model))

    candidates.sort(key=lambda c: c[:3])
    neg_acc, rec_err, seed, model = candidates[0]
    train_rows = np.exp(-(D[np.ix_(train_idx, train_idx)] ** 2) / model.sigma)
    train_pred, _, _ = classify_rows(model, train_rows)
    model.metadata = {
        "dataset_sha256": ds.content_hash(),
        "split_seed": options["split_seed"],
        "split_fractions": [0.5, 0.25, 0.25],
        "restart_seed": seed,
        "restarts": options["restarts"],
        "test_accuracy_percent": -neg_acc,
        "train_accuracy_percent": accuracy(train_pred, ds.labels[train_idx]),
        "params": {
            key: options[key]
            for key in ("k", "T", "lam", "alpha", "beta", "sigma", "seed",
                        "split_seed", "restarts", "epochs", "rel_tol", "eta",
                        "alpha0", "delta", "fista_max_iter", "patience", "tol")
        },
    }
    out = _ensure_outdir(options["out"])
    model_path = os.path.join(out, "model.json")
    save_model(model, model_path)
    _write_text(os.path.join(out, "trace.csv"), _trace_csv_text(model.trace_summary))
    print(model_path)
    return 0


def _map_labels_to_model(ds, model, indices):
    mapping = {}
    for name in {ds.class_names[ds.labels[i]] for i in indices}:
        if name not in model.class_names:
            return None
        mapping[name] = model.class_names.index(name)
    return np.array([mapping[ds.class_names[ds.labels[i]]] for i in indices],
                    dtype=np.int64)


def _cmd_classify(options):
    _require(options, "model", "dataset", "out")
    model = _load_model_checked(options["model"])
    ds = _load_dataset_checked(options["dataset"], options["format"])
    if ds.n_channels != model.n_channels:
        raise ConfigError(
            f"channel mismatch: dataset has {ds.n_channels}, model expects "
            f"{model.n_channels}"
        )
    rows = np.exp(-(cross_distances(ds.series, model.train_series) ** 2) / model.sigma)
    pred, codes, scores = classify_rows(model, rows)
    truth = _map_labels_to_model(ds, model, np.arange(ds.n_samples))
    predictions = []
    for i in range(ds.n_samples):
        predictions.append({
            "index": i,
            "true_label": ds.class_names[ds.labels[i]],
            "predicted_label": model.class_names[pred[i]],
            "scores": {name: float(scores[c, i])
                       for c, name in enumerate(model.class_names)},
            "code": {str(int(j)): float(codes[j, i])
                     for j in np.flatnonzero(codes[:, i])},
        })
    payload = {
        "accuracy_percent": None if truth is None else accuracy(pred, truth),
        "predictions": predictions,
    }
    out = _ensure_outdir(options["out"])
    path = os.path.join(out, "predictions.json")
    _write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(path)
    return 0


def _write_trace_svg(summary, path):
    import matplotlib
    from matplotlib.figure import Figure

    epochs = list(range(1, summary["epochs"] + 1))
    with matplotlib.rc_context({"svg.hashsalt": "kdict"}):
        fig = Figure(figsize=(6.0, 4.0))
        ax = fig.add_subplot()
        ax.plot(epochs, summary["rec_error_percent"], marker="o", label="after sweep")
        ax.plot(epochs, summary["coding_error_percent"], marker=".", label="after coding")
        ax.set_xlabel("epoch")
        ax.set_ylabel("reconstruction error (%)")
        ax.legend()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    _write_bytes(path, buf.getvalue())


def _run_baselines(names, options, model, ds, D, query_idx, train_idx, truth):
    results = {}
    names = [n for n in names.split(",") if n]
    known = {"knn", "kkmeans", "kpca"}
    unknown = set(names) - known
    if unknown:
        raise ConfigError(f"unknown baselines: {sorted(unknown)}")
    if not names:
        return results
    if train_idx is not None:
        query_dists = D[np.ix_(query_idx, train_idx)]
    else:
        query_dists = cross_distances([ds.series[i] for i in query_idx],
                                      model.train_series)
    K = model.base_gram()
    train_labels = model.train_labels
    n_queries = len(query_idx)
    query_rows = np.exp(-(query_dists ** 2) / model.sigma)
    for name in names:
        if name == "knn":
            pred = knn_predict(query_dists, train_labels, n_neighbors=options["knn_k"])
        elif name == "kkmeans":
            best = None
            for restart in range(max(options["restarts"], 1)):
                result = kernel_kmeans(K, model.A.shape[1], rng_seed=restart)
                inertia = result.inertia_history[-1]
                if best is None or inertia < best[0]:
                    best = (inertia, result)
            clustering = best[1]
            d_train = kkm_distances(K, K, np.diag(K), clustering.assignment)
            train_codes, bandwidth = kkm_codes(d_train, model.sparsity)
            d_query = kkm_distances(K, query_rows, np.ones(n_queries),
                                    clustering.assignment)
            query_codes, _ = kkm_codes(d_query, model.sparsity, bandwidth=bandwidth)
            clf = RidgeOneVsRest(ridge=options["ridge"]).fit(train_codes, train_labels)
            pred = clf.predict(query_codes)
        else:
            train_coords, query_coords = kpca_project(K, query_rows, model.A.shape[1])
            clf = RidgeOneVsRest(ridge=options["ridge"]).fit(train_coords, train_labels)
            pred = clf.predict(query_coords)
        results[name] = accuracy(pred, truth)
    return results


def _cmd_eval(options):
    _require(options, "model", "dataset", "out")
    model = _load_model_checked(options["model"])
    ds = _load_dataset_checked(options["dataset"], options["format"])
    if ds.n_channels != model.n_channels:
        raise ConfigError(
            f"channel mismatch: dataset has {ds.n_channels}, model expects "
            f"{model.n_channels}"
        )
    role = options["role"]
    if role not in ROLES + ("all",):
        raise ConfigError("--role must be one of train, test, validation, all")

    train_idx = None
    if role == "all":
        query_idx = np.arange(ds.n_samples)
        D = None
    else:
        if ds.content_hash() != model.metadata.get("dataset_sha256"):
            raise ConfigError(
                "dataset does not match the one the model was trained on; "
                "role-based evaluation needs the original dataset (or use --role all)"
            )
        split_seed = options["split_seed"]
        if split_seed is None:
            split_seed = model.metadata.get("split_seed")
        if split_seed is None:
            raise ConfigError("no split seed available; pass --split-seed")
        split = split_dataset(ds, rng_seed=int(split_seed))
        query_idx = split.indices(role)
        train_idx = split.train_indices
        D = _resolve_distances(ds)
        model._base_gram = gram_from_distances(
            D[np.ix_(train_idx, train_idx)], sigma=model.sigma
        ).values

    truth = _map_labels_to_model(ds, model, query_idx)
    if truth is None:
        raise ConfigError("dataset labels are not a subset of the model's classes")
    if train_idx is not None:
        query_rows = np.exp(-(D[np.ix_(query_idx, train_idx)] ** 2) / model.sigma)
    else:
        query_rows = np.exp(
            -(cross_distances([ds.series[i] for i in query_idx],
                              model.train_series) ** 2) / model.sigma
        )
    pred, codes, _ = classify_rows(model, query_rows)
    report = EvalReport(
        accuracy_percent=accuracy(pred, truth),
        rec_error_percent=reconstruction_error(
            model.base_gram(), query_rows, np.ones(len(query_idx)), model.A, codes
        ),
        sp_per_class=class_sparsity(codes, truth, model.n_classes).tolist(),
        ds_per_atom=dictionary_sparseness(model.A, model.H).tolist(),
        baselines=_run_baselines(
            options["baselines"], options, model, ds,
            D if D is not None else None, query_idx, train_idx, truth,
        ),
    )
    out = _ensure_outdir(options["out"])
    _write_text(os.path.join(out, "report.json"), report.to_json())
    table = report.to_text_table()
    _write_text(os.path.join(out, "report.txt"), table)
    if options["plot"]:
        trace = model.trace_summary
        if trace.get("epochs"):
            _write_trace_svg(trace, os.path.join(out, "trace.svg"))
    print(table, end="")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "gram": _cmd_gram,
    "train": _cmd_train,
    "classify": _cmd_classify,
    "eval": _cmd_eval,
}


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as e:
        code = e.code
        return int(code) if code is not None else 0
    try:
        options = _resolve_options(args)
        return _COMMANDS[args.command](options)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

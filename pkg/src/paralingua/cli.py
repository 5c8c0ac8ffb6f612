"""Command-line driver.

Every stage reads and writes plain CSV/JSON files so stages can be cached and
recombined. Exit status: 0 on success, 1 on usage errors, 2 on data or format
errors (missing files, malformed inputs).
"""

import argparse
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import boaw, classify, fisher, temporal
from ._io import dump_json, write_text
from .crossval import make_speaker_folds, mean_task_uar, run_cv, run_dev
from .dataset import (
    DEFAULT_FRAME_STEP,
    FeatureTable,
    StandardizerModel,
    apply_standardizer,
    compute_deltas,
    fit_standardizer,
    load_external_features,
    load_feature_table,
    load_frame_matrix,
    load_labels,
    load_manifest,
    load_utterance_frames,
    save_feature_table,
    save_frame_matrix,
)
from .errors import AlignmentError, ParameterError, ParalinguaError
from .evaluation import FusionWeights, confusion_matrix, fuse_posteriors, grid_search_weights, lattice_steps
from .features import boaw_table, fisher_table, prepare_frames

SUBCOMMANDS = ("deltas", "standardize", "boaw-learn", "boaw-encode", "gmm-fit", "fv-encode",
               "temporal", "train", "predict", "fuse", "evaluate", "cv")


@dataclass
class RunConfig:
    seed: int = 42
    jobs: int = 1
    frame_step: float = DEFAULT_FRAME_STEP
    boaw_sizes: tuple = boaw.DEFAULT_SIZES
    gmm_components: tuple = fisher.DEFAULT_COMPONENTS
    assignments: int = boaw.DEFAULT_ASSIGNMENTS
    delta_window: int = 2
    c_grid: tuple = classify.C_GRID
    repeats: int = classify.DEFAULT_REPEATS
    folds: int = 10
    step: float = 0.05
    silent_tokens: tuple = tuple(sorted(temporal.DEFAULT_SILENT_TOKENS))
    filled_tokens: tuple = tuple(sorted(temporal.DEFAULT_FILLED_TOKENS))

    def validate(self):
        for name in ("boaw_sizes", "gmm_components", "c_grid", "silent_tokens", "filled_tokens"):
            if not getattr(self, name):
                raise ParameterError(f"{name} must not be empty")
        lattice_steps(self.step)
        if self.jobs < 1:
            raise ParameterError("--jobs must be >= 1")
        return self


_LIST_KEYS = {"boaw_sizes": int, "gmm_components": int, "c_grid": float, "silent_tokens": str, "filled_tokens": str}
_SCALAR_KEYS = {"seed": int, "jobs": int, "frame_step": float, "assignments": int, "delta_window": int,
                "repeats": int, "folds": int, "step": float}


def read_config(path):
    """Flat ``key = value`` file; list values are comma-separated."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            try:
                if key in _LIST_KEYS:
                    out[key] = tuple(_LIST_KEYS[key](v.strip()) for v in value.split(",") if v.strip())
                elif key in _SCALAR_KEYS:
                    out[key] = _SCALAR_KEYS[key](value)
                else:
                    raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


class UsageError(ParalinguaError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _csv_list(kind):
    def parse(text):
        try:
            return tuple(kind(v) for v in text.split(",") if v)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--config")
    common.add_argument("--frame-step", type=float, dest="frame_step")

    p = _Parser(prog="paralingua", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    s = add("deltas", "first-order regression deltas of frame matrices")
    s.add_argument("--input", help="single frame-matrix CSV")
    s.add_argument("--manifest", help="process every utterance in a manifest")
    s.add_argument("--window", type=int, dest="delta_window")
    s.add_argument("--out", required=True, help="output file (--input) or directory (--manifest)")

    s = add("standardize", "fit a z-scoring model on training frames, or apply one")
    s.add_argument("--manifest")
    s.add_argument("--source", choices=boaw.SOURCES, default="lld")
    s.add_argument("--window", type=int, dest="delta_window")
    s.add_argument("--model", help="apply this standardizer to --input")
    s.add_argument("--input")
    s.add_argument("--out", required=True)

    s = add("boaw-learn", "random-sample BoAW codebook from training frames")
    s.add_argument("--manifest", required=True)
    s.add_argument("--size", type=int, action="append", dest="boaw_sizes")
    s.add_argument("--source", choices=boaw.SOURCES, default="lld")
    s.add_argument("--window", type=int, dest="delta_window")
    s.add_argument("--out", required=True)

    s = add("boaw-encode", "BoAW histograms for every manifest utterance")
    s.add_argument("--manifest", required=True)
    s.add_argument("--codebook", required=True)
    s.add_argument("--delta-codebook")
    s.add_argument("--assignments", type=int)
    s.add_argument("--window", type=int, dest="delta_window")
    s.add_argument("--out", required=True)

    s = add("gmm-fit", "diagonal GMM on training frames")
    s.add_argument("--manifest", required=True)
    s.add_argument("--components", type=int, action="append", dest="gmm_components")
    s.add_argument("--no-deltas", action="store_true")
    s.add_argument("--window", type=int, dest="delta_window")
    s.add_argument("--max-iter", type=int, default=fisher.MAX_ITER)
    s.add_argument("--tol", type=float, default=fisher.TOL)
    s.add_argument("--out", required=True)

    s = add("fv-encode", "Fisher vectors for every manifest utterance")
    s.add_argument("--manifest", required=True)
    s.add_argument("--gmm", required=True)
    s.add_argument("--no-deltas", action="store_true")
    s.add_argument("--window", type=int, dest="delta_window")
    s.add_argument("--out", required=True)

    s = add("temporal", "14 tempo and pause features from an alignment file")
    s.add_argument("--alignments", required=True)
    s.add_argument("--silent-tokens", type=_csv_list(str), dest="silent_tokens")
    s.add_argument("--filled-tokens", type=_csv_list(str), dest="filled_tokens")
    s.add_argument("--out", required=True)

    s = add("train", "downsampled calibrated linear SVM ensemble")
    s.add_argument("--manifest", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--task", required=True)
    s.add_argument("--c", type=float, required=True)
    s.add_argument("--repeats", type=int)
    s.add_argument("--splits", type=_csv_list(str), default=("train",))
    s.add_argument("--out", required=True)

    s = add("predict", "posteriors of a trained ensemble")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--manifest", help="restrict to utterances of --split")
    s.add_argument("--split", choices=("train", "dev", "test"))
    s.add_argument("--out", required=True)

    s = add("fuse", "weighted mean of posterior files")
    s.add_argument("--posteriors", nargs="+", required=True)
    s.add_argument("--weights", type=float, nargs="+")
    s.add_argument("--truth", help="labels CSV; search weights on the lattice when --weights is absent")
    s.add_argument("--step", type=float)
    s.add_argument("--out", required=True)

    s = add("evaluate", "UAR of a posterior file")
    s.add_argument("--truth", required=True)
    s.add_argument("--posteriors", required=True)

    s = add("cv", "speaker-independent cross-validation or train/dev evaluation")
    s.add_argument("--manifest", required=True)
    s.add_argument("--features", action="append", default=[], metavar="NAME=PATH")
    s.add_argument("--task", action="append", required=True)
    s.add_argument("--protocol", choices=("cv", "dev"), default="cv")
    s.add_argument("--folds", type=int)
    s.add_argument("--c", type=float, action="append", dest="c_grid")
    s.add_argument("--repeats", type=int)
    s.add_argument("--step", type=float)
    s.add_argument("--out", required=True)
    return p


def resolve_config(args):
    """Merge flags over the config file over built-in defaults."""
    from_file = read_config(args.config) if args.config else {}
    values = {}
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = tuple(flag) if isinstance(flag, list) else flag
        elif f.name in from_file:
            values[f.name] = from_file[f.name]
    return RunConfig(**values).validate()


def _out_paths(out, values):
    if len(values) == 1:
        return [out]
    stem, ext = os.path.splitext(out)
    return [f"{stem}.{v}{ext}" for v in values]


def _prepared(manifest, cfg):
    mats = load_utterance_frames(manifest.records, cfg.frame_step)
    train = np.array([r.split == "train" for r in manifest.records])
    return prepare_frames(mats, train, cfg.delta_window, cfg.jobs), train


def cmd_deltas(args, cfg):
    if bool(args.input) == bool(args.manifest):
        raise UsageError("deltas: give exactly one of --input or --manifest")
    if args.input:
        m = load_frame_matrix(args.input, cfg.frame_step)
        save_frame_matrix(compute_deltas(m, cfg.delta_window), args.out)
        return
    manifest = load_manifest(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    for m in load_utterance_frames(manifest.records, cfg.frame_step):
        save_frame_matrix(compute_deltas(m, cfg.delta_window), os.path.join(args.out, f"{m.utterance_id}.csv"))


def cmd_standardize(args, cfg):
    if args.model:
        if not args.input:
            raise UsageError("standardize: --model needs --input")
        m = load_frame_matrix(args.input, cfg.frame_step)
        save_frame_matrix(apply_standardizer(StandardizerModel.load(args.model), m), args.out)
        return
    if not args.manifest:
        raise UsageError("standardize: give --manifest (fit) or --model with --input (apply)")
    manifest = load_manifest(args.manifest)
    mats = load_utterance_frames(manifest.by_split("train"), cfg.frame_step)
    if args.source == "delta":
        mats = [compute_deltas(m, cfg.delta_window) for m in mats]
    if not mats:
        raise UsageError("standardize: manifest has no train utterances")
    fit_standardizer(mats).save(args.out)


def cmd_boaw_learn(args, cfg):
    manifest = load_manifest(args.manifest)
    prep, train = _prepared(manifest, cfg)
    frames = prep.lld if args.source == "lld" else prep.deltas
    pool = [frames[i] for i in np.flatnonzero(train)]
    for n, path in zip(cfg.boaw_sizes, _out_paths(args.out, cfg.boaw_sizes)):
        boaw.learn_codebook(pool, n, seed=cfg.seed, source=args.source).save(path)


def cmd_boaw_encode(args, cfg):
    manifest = load_manifest(args.manifest)
    prep, _ = _prepared(manifest, cfg)
    cb = boaw.Codebook.load(args.codebook)
    if args.delta_codebook:
        table = boaw_table(prep, cb, boaw.Codebook.load(args.delta_codebook), cfg.assignments, cfg.jobs)
    else:
        frames = prep.lld if cb.source == "lld" else prep.deltas
        rows = [boaw.encode_boaw(cb, m, cfg.assignments) for m in frames]
        table = FeatureTable(prep.utterance_ids, np.array(rows), "boaw")
    save_feature_table(table, args.out)


def cmd_gmm_fit(args, cfg):
    manifest = load_manifest(args.manifest)
    prep, train = _prepared(manifest, cfg)
    idx = np.flatnonzero(train)
    pooled = np.concatenate([prep.lld[i].frames if args.no_deltas else prep.stacked(i) for i in idx])
    for k, path in zip(cfg.gmm_components, _out_paths(args.out, cfg.gmm_components)):
        fisher.fit_gmm(pooled, k, seed=cfg.seed, max_iter=args.max_iter, tol=args.tol).save(path)


def cmd_fv_encode(args, cfg):
    manifest = load_manifest(args.manifest)
    prep, _ = _prepared(manifest, cfg)
    g = fisher.DiagonalGmm.load(args.gmm)
    save_feature_table(fisher_table(prep, g, use_deltas=not args.no_deltas, jobs=cfg.jobs), args.out)


def cmd_temporal(args, cfg):
    alignments = temporal.parse_alignment(args.alignments, cfg.silent_tokens, cfg.filled_tokens)
    save_feature_table(temporal.temporal_feature_table(alignments), args.out)


def _labelled(manifest, task, splits):
    if task not in manifest.task_names:
        raise UsageError(f"unknown task {task!r}; manifest has {manifest.task_names}")
    return [r for r in manifest.records if r.split in splits and task in r.labels]


def cmd_train(args, cfg):
    manifest = load_manifest(args.manifest)
    recs = _labelled(manifest, args.task, args.splits)
    table = load_feature_table(args.features).select([r.utterance_id for r in recs])
    x = table.vectors
    mean, std = x.mean(axis=0), x.std(axis=0)
    z = np.where(std > 0, (x - mean) / np.where(std > 0, std, 1.0), 0.0)
    ens = classify.train_downsampled_ensemble(z, [r.labels[args.task] for r in recs], args.c,
                                              cfg.repeats, seed=cfg.seed, jobs=cfg.jobs)
    members = [classify.fold_feature_scaling(m, mean, std) for m in ens.members]
    classify.EnsembleModel(members, ens.repeats, ens.seed).save(args.out)


def cmd_predict(args, cfg):
    ens = classify.EnsembleModel.load(args.model)
    table = load_feature_table(args.features)
    if args.manifest:
        manifest = load_manifest(args.manifest)
        recs = manifest.by_split(args.split) if args.split else manifest.records
        table = table.select([r.utterance_id for r in recs])
    classify.save_posteriors(classify.predict_ensemble(ens, table), args.out)


def _truth_for(path, ids):
    labels = load_labels(path)
    missing = [u for u in ids if u not in labels]
    if missing:
        raise AlignmentError(f"{path}: no label for utterance {missing[0]!r}")
    return [labels[u] for u in ids]


def cmd_fuse(args, cfg):
    systems = [classify.load_posteriors(p) for p in args.posteriors]
    ids = systems[0].utterance_ids
    systems = [s.select(ids) for s in systems]
    names = [os.path.splitext(os.path.basename(p))[0] for p in args.posteriors]
    if args.weights:
        w = FusionWeights(names, args.weights, step=None)
    else:
        if not args.truth:
            raise UsageError("fuse: give --weights, or --truth to search them")
        w, u = grid_search_weights(systems, _truth_for(args.truth, ids), cfg.step, system_names=names)
        print("weights " + " ".join(f"{n}={v:g}" for n, v in zip(w.system_names, w.weights)))
        print(f"UAR {u:.4f}")
    classify.save_posteriors(fuse_posteriors(systems, w), args.out)


def cmd_evaluate(args, cfg):
    post = classify.load_posteriors(args.posteriors)
    truth = _truth_for(args.truth, post.utterance_ids)
    cm = confusion_matrix(truth, post.predicted(), sorted(set(truth) | set(post.class_names)))
    print(f"UAR {cm.uar():.4f}")
    for name, row in zip(cm.class_names, cm.counts):
        print(f"  {name:<12} " + " ".join(f"{v:>6d}" for v in row))


def cmd_cv(args, cfg):
    manifest = load_manifest(args.manifest)
    tables = {}
    for item in args.features:
        if "=" not in item:
            raise UsageError(f"--features expects NAME=PATH, got {item!r}")
        name, path = item.split("=", 1)
        tables[name] = load_feature_table(path, name)
    ext = sorted({s for r in manifest.records for s in r.external_feature_paths})
    for name in ext:
        tables.setdefault(name, load_external_features(manifest, name))
    if not tables:
        raise UsageError("cv: no feature sets (use --features or extfeat: manifest columns)")
    reports = []
    for task in args.task:
        if args.protocol == "cv":
            plan = make_speaker_folds(manifest, cfg.folds, cfg.seed)
            rep = run_cv(manifest, tables, task, plan, cfg.c_grid, cfg.repeats, cfg.seed, cfg.step, cfg.jobs)
        else:
            rep = run_dev(manifest, tables, task, cfg.c_grid, cfg.repeats, cfg.seed, cfg.step, cfg.jobs)
        reports.append(rep)
        print(rep.summary())
    if len(reports) == 1:
        write_text(args.out, reports[0].dumps())
    else:
        mean = mean_task_uar(reports)
        print(f"mean UAR over tasks {mean:.4f}")
        dump_json({"tasks": {r.task: r.to_json() for r in reports}, "mean_uar": mean}, args.out)


HANDLERS = {
    "deltas": cmd_deltas,
    "standardize": cmd_standardize,
    "boaw-learn": cmd_boaw_learn,
    "boaw-encode": cmd_boaw_encode,
    "gmm-fit": cmd_gmm_fit,
    "fv-encode": cmd_fv_encode,
    "temporal": cmd_temporal,
    "train": cmd_train,
    "predict": cmd_predict,
    "fuse": cmd_fuse,
    "evaluate": cmd_evaluate,
    "cv": cmd_cv,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if not argv or argv[0] not in SUBCOMMANDS:
            if argv and argv[0] in ("-h", "--help"):
                parser.print_help()
                return 0
            raise UsageError(f"expected a subcommand from: {', '.join(SUBCOMMANDS)}")
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        HANDLERS[args.command](args, cfg)
    except SystemExit as exc:  # --help inside a subcommand
        return 0 if not exc.code else 1
    except (UsageError, ParameterError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: no such file: {exc.filename or exc}", file=sys.stderr)
        return 2
    except ParalinguaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

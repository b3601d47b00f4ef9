"""Pipeline entry point: one subcommand per stage.

Precedence for settings: built-in defaults < --config JSON file < ADIPIPE_*
environment variables < explicit flags. Every command writes a
reproducibility stanza next to its primary output and exits 2 on
configuration errors, 3 on data errors, 4 on numerical failures.
"""

import argparse
import hashlib
import json
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import (
    LinearModel, LinearTrainSettings, TapHead, load_model, predict,
    predict_bags, save_model, train_linear, train_tap,
)
from .curation import (
    BucketThresholds, agreement_report, assemble_selftrain, bucket_by_confidence,
    describe_thresholds, filter_language, fit_thresholds, human_audit_sample,
    retention_line, surrogate_label, write_annotation_sheet,
)
from .errors import ConfigError, DataError, NumericError
from .evaluation import macro_f1, pool_regions, report_table, save_reports
from .featurestore import FeatureMatrix, FeatureStore, Manifest, filter_by_duration, read_features, write_features
from .quantizer import Codebook, assign, load_label_sequence, save_label_sequence, subsample_frames, train_kmeans
from .representation import bag_matrix, bag_of_labels
from .schedules import TrainConfig, batch_size_for_duration, rank_journal, run_search

ENV_PREFIX = "ADIPIPE_"

_PATH_KEYS = {
    "manifest", "features_dir", "codebook", "out", "bags", "labels_dir", "model",
    "pred", "gold", "base", "pool", "journal", "thresholds", "config", "sheet",
}


def _stanza(ns: argparse.Namespace) -> dict:
    cfg = {}
    for key, value in sorted(vars(ns).items()):
        if callable(value):
            continue
        if key in _PATH_KEYS:  # location-independent hash
            if isinstance(value, str):
                value = Path(value).name
            elif isinstance(value, list):
                value = [Path(v).name if isinstance(v, str) else v for v in value]
        cfg[key] = value
    payload = json.dumps(cfg, sort_keys=True, default=str)
    return {
        "command": getattr(ns, "command", ""),
        "seed": getattr(ns, "seed", None),
        "config_hash": hashlib.sha256(payload.encode()).hexdigest()[:16],
        "python": platform.python_version(),
        "numpy": np.__version__,
        "adipipe": __version__,
    }


def _finish(ns: argparse.Namespace, out=None) -> None:
    stanza = _stanza(ns)
    if out:
        Path(f"{out}.run.json").write_text(json.dumps(stanza, sort_keys=True) + "\n", encoding="utf-8")
    print(f"run {stanza['command']} seed={stanza['seed']} config={stanza['config_hash']}", file=sys.stderr)


def _load_bags(stem) -> tuple[np.ndarray, Manifest]:
    matrix = read_features(f"{stem}.fmx").frames.astype(np.float64)
    manifest = Manifest.load(f"{stem}.manifest.jsonl")
    if len(manifest) != len(matrix):
        raise DataError(f"{stem}: {len(matrix)} bag rows but {len(manifest)} manifest records")
    return matrix, manifest


def _maybe_duration_filter(manifest: Manifest, ns: argparse.Namespace) -> Manifest:
    if ns.min_duration is not None or ns.max_duration is not None:
        return filter_by_duration(manifest, ns.min_duration or 0.0, ns.max_duration)
    return manifest


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_quantize_train(ns) -> int:
    manifest = Manifest.load(ns.manifest)
    if ns.split:
        manifest = manifest.subset(lambda r: r.split == ns.split)
    manifest = _maybe_duration_filter(manifest, ns)
    store = FeatureStore(ns.features_dir)
    frames = subsample_frames(store, manifest, ns.fraction, ns.seed)
    codebook = train_kmeans(frames, ns.k, ns.seed, max_iters=ns.max_iters, tol=ns.tol,
                            n_restarts=ns.restarts)
    codebook.save(ns.out)
    print(f"codebook k={codebook.k} dim={codebook.feature_dim} trained on {len(frames)} frames, "
          f"inertia {codebook.train_inertia:.6g} ({len(codebook.inertia_history)} recorded)")
    _finish(ns, ns.out)
    return 0


def cmd_quantize_assign(ns) -> int:
    manifest = Manifest.load(ns.manifest)
    store = FeatureStore(ns.features_dir)
    codebook = Codebook.load(ns.codebook)
    out_dir = Path(ns.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(record):
        try:
            seq = assign(codebook, store.read(record.utterance_id))
        except DataError as exc:
            raise DataError(f"{store.path_for(record.utterance_id)}: {exc}") from exc
        save_label_sequence(seq, out_dir / f"{record.utterance_id}.fmx")
        return record.utterance_id

    if ns.workers > 1:
        with ThreadPoolExecutor(max_workers=ns.workers) as pool:
            done = list(pool.map(one, manifest.records))
    else:
        done = [one(r) for r in manifest.records]
    print(f"assigned {len(done)} utterances with k={codebook.k}")
    _finish(ns, out_dir / "labels")
    return 0


def cmd_bag(ns) -> int:
    manifest = Manifest.load(ns.manifest)
    if ns.codebook:
        k = Codebook.load(ns.codebook).k
    elif ns.k:
        k = ns.k
    else:
        raise ConfigError("bag needs --codebook or --k")
    labels_dir = Path(ns.labels_dir)
    bags = [bag_of_labels(load_label_sequence(labels_dir / f"{r.utterance_id}.fmx", r.utterance_id), k)
            for r in manifest]
    matrix = bag_matrix(bags)
    write_features(FeatureMatrix(Path(ns.out).name, matrix.astype(np.float32)), f"{ns.out}.fmx")
    manifest.save(f"{ns.out}.manifest.jsonl")
    print(f"bagged {len(bags)} utterances into {matrix.shape[0]}x{matrix.shape[1]}")
    _finish(ns, ns.out)
    return 0


def cmd_train(ns) -> int:
    if ns.model_type == "linear":
        if not ns.bags:
            raise ConfigError("linear training needs at least one --bags stem")
        by_id: dict[str, np.ndarray] = {}
        stem_manifests = []
        width = None
        for stem in ns.bags:
            matrix, stem_manifest = _load_bags(stem)
            if width is None:
                width = matrix.shape[1]
            elif matrix.shape[1] != width:
                raise DataError(f"{stem}: bag width {matrix.shape[1]} != {width}")
            stem_manifests.append(stem_manifest)
            for uid, row in zip(stem_manifest.ids(), matrix):
                by_id[uid] = row
        if ns.manifest:
            selection = Manifest.load(ns.manifest)
        elif len(stem_manifests) == 1:
            selection = stem_manifests[0]
        else:
            raise ConfigError("multiple --bags stems need an explicit --manifest selection")

        rows = [r for r in selection if r.label is not None and (not ns.split or r.split == ns.split)]
        if not rows:
            raise DataError("no labeled records match the training selection")
        missing = [r.utterance_id for r in rows if r.utterance_id not in by_id]
        if missing:
            raise DataError(f"no bags for utterances: {missing[:5]}")
        x = np.stack([by_id[r.utterance_id] for r in rows])
        labels = [r.label for r in rows]
        cfg = LinearTrainSettings(batch_size=ns.batch_size, learning_rate=ns.learning_rate,
                                  epochs=ns.epochs, seed=ns.seed)
        result = train_linear(x, labels, cfg, selection.label_set or None)
        save_model(result.model, ns.out)
        print(f"trained linear model on {len(labels)} bags, final loss {result.final_loss:.6f}")
    else:
        manifest = Manifest.load(ns.manifest)
        store = FeatureStore(ns.features_dir)
        rows = [r for r in manifest if r.label is not None and (not ns.split or r.split == ns.split)]
        if not rows:
            raise DataError("no labeled records match the training selection")
        features = [store.read(r.utterance_id) for r in rows]
        labels = [r.label for r in rows]
        batch = ns.batch_size or batch_size_for_duration(ns.duration)
        cfg = TrainConfig(batch_size=batch, freeze_steps=ns.freeze_steps,
                          learning_rate=ns.learning_rate, lna=ns.lna, max_steps=ns.max_steps,
                          duration_s=ns.duration, thaw_depth=ns.thaw_depth, seed=ns.seed)
        result = train_tap(features, labels, cfg, manifest.label_set or None, proj_dim=ns.proj_dim)
        save_model(result.head, ns.out)
        print(f"trained tap head on {len(labels)} utterances, final loss {result.step_losses[-1]:.6f}")
    _finish(ns, ns.out)
    return 0


def cmd_predict(ns) -> int:
    model = load_model(ns.model)
    if isinstance(model, LinearModel):
        matrix, bag_manifest = _load_bags(ns.bags)
        base = Manifest.load(ns.manifest) if ns.manifest else bag_manifest
        rows = bag_manifest.by_id()
        order = {uid: i for i, uid in enumerate(bag_manifest.ids())}
        missing = [r.utterance_id for r in base if r.utterance_id not in rows]
        if missing:
            raise DataError(f"no bags for utterances: {missing[:5]}")
        x = matrix[[order[r.utterance_id] for r in base]]
        predictions = predict_bags(model, x, base.ids())
    elif isinstance(model, TapHead):
        base = Manifest.load(ns.manifest)
        store = FeatureStore(ns.features_dir)
        predictions = [predict(model, store.read(r.utterance_id)) for r in base]
    else:
        raise ConfigError(f"unsupported model kind {type(model).__name__}")

    label_set = tuple(sorted(set(base.label_set) | set(model.label_set)))
    records = [replace(r, label=p.predicted_label, confidence=p.confidence, bucket=None)
               for r, p in zip(base, predictions)]
    Manifest(records, label_set).save(ns.out)
    print(f"predicted {len(records)} utterances")
    _finish(ns, ns.out)
    return 0


def cmd_bucket(ns) -> int:
    manifest = Manifest.load(ns.pred)
    if ns.thresholds:
        th = BucketThresholds.load(ns.thresholds)
    else:
        conf = [r.confidence for r in manifest if r.confidence is not None]
        if len(conf) != len(manifest):
            raise DataError("some records have no confidence; run predict first")
        th = fit_thresholds(conf, fit_on=ns.fit_on)
    bucketed = bucket_by_confidence(manifest, th)
    bucketed.save(ns.out)
    th.save(f"{ns.out}.thresholds.json")
    counts = {name: sum(1 for r in bucketed if r.bucket == name) for name in ("low", "medium", "high")}
    print(describe_thresholds(th))
    print(f"buckets: low={counts['low']} medium={counts['medium']} high={counts['high']}")
    _finish(ns, ns.out)
    return 0


def cmd_assemble(ns) -> int:
    base = Manifest.load(ns.base)
    pool = Manifest.load(ns.pool)
    sts = assemble_selftrain(base, pool, ns.setting)
    combined = sts.combined()
    combined.save(ns.out)
    print(f"assembled {ns.setting}: base {len(base)} + added {len(sts.added)} = {len(combined)}")
    _finish(ns, ns.out)
    return 0


def cmd_eval(ns) -> int:
    gold = Manifest.load(ns.gold)
    if ns.split:
        gold = gold.subset(lambda r: r.split == ns.split)
    pred = Manifest.load(ns.pred)
    pred_by_id = pred.by_id()
    gold_labels, pred_labels = [], []
    for r in gold:
        if r.label is None:
            raise DataError(f"{r.utterance_id}: gold record has no label")
        if r.utterance_id not in pred_by_id:
            raise DataError(f"{r.utterance_id}: no prediction")
        p = pred_by_id[r.utterance_id].label
        if p is None:
            raise DataError(f"{r.utterance_id}: prediction record has no label")
        gold_labels.append(r.label)
        pred_labels.append(p)

    if ns.pool_regions:
        gold_labels = pool_regions(gold_labels, msa_passthrough=ns.msa_passthrough)
        pred_labels = pool_regions(pred_labels, msa_passthrough=ns.msa_passthrough)
        label_set = tuple(sorted(set(gold_labels) | set(pred_labels)))
    else:
        label_set = tuple(sorted(set(gold.label_set) | set(pred_labels)))
    average_over = tuple(ns.average_over.split(",")) if ns.average_over else None
    report = macro_f1(gold_labels, pred_labels, label_set, average_over)
    table = report_table({ns.name: {ns.dataset: report}})
    print(table, end="")
    print(f"macro_f1 {report.macro_f1:.2f} accuracy {report.accuracy:.2f} n {report.n_samples}")
    if ns.out:
        save_reports({ns.name: {ns.dataset: report}}, ns.out)
    _finish(ns, ns.out)
    return 0


def cmd_search(ns) -> int:
    # Built-in objective for journal exercises: prefer learning rates near
    # 1e-3. Real objectives call run_search from Python.
    objective = lambda cfg: -abs(cfg.learning_rate - 1e-3)
    ranked = run_search(objective, ns.budget, ns.seed, journal_path=ns.journal, resume=ns.resume)
    for entry in ranked[:5]:
        print(f"#{entry.index} score={entry.score:.6g} lr={entry.config.learning_rate:.3g} "
              f"batch={entry.config.batch_size} steps={entry.config.max_steps}")
    replay = rank_journal(ns.journal) if ns.journal else ranked
    assert [e.index for e in replay] == [e.index for e in ranked]
    _finish(ns, ns.journal)
    return 0


def cmd_filter(ns) -> int:
    manifest = Manifest.load(ns.manifest)
    n0 = len(manifest)
    out = _maybe_duration_filter(manifest, ns)
    if ns.min_duration is not None or ns.max_duration is not None:
        print(retention_line("duration_filter", n0, len(out)))
    if ns.min_language_score is not None:
        n1 = len(out)
        out = filter_language(out, ns.min_language_score)
        print(retention_line("language_filter", n1, len(out)))
    out.save(ns.out)
    _finish(ns, ns.out)
    return 0


def cmd_surrogate(ns) -> int:
    manifest = Manifest.load(ns.manifest)
    labeled = surrogate_label(manifest)
    labeled.save(ns.out)
    print(f"surrogate-labeled {len(labeled)} records")
    _finish(ns, ns.out)
    return 0


def cmd_agreement(ns) -> int:
    manifest = Manifest.load(ns.manifest)
    print(agreement_report(manifest).format())
    _finish(ns)
    return 0


def cmd_audit(ns) -> int:
    manifest = Manifest.load(ns.manifest)
    labels = ns.labels.split(",") if ns.labels else []
    sample = human_audit_sample(manifest, ns.per_label, labels, ns.seed)
    write_annotation_sheet(sample, ns.sheet)
    print(f"audit sheet with {len(sample)} rows -> {ns.sheet}")
    _finish(ns, ns.sheet)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adipipe", description=__doc__.split("\n")[0])
    parser.add_argument("--config", help="JSON file of default option values")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)

    quantize = sub.add_parser("quantize", help="codebook training and frame labeling")
    qsub = quantize.add_subparsers(dest="subcommand", required=True)

    qt = qsub.add_parser("train")
    common(qt)
    qt.add_argument("--manifest", required=True)
    qt.add_argument("--features-dir", required=True)
    qt.add_argument("--k", type=int, required=True)
    qt.add_argument("--fraction", type=float, default=0.10)
    qt.add_argument("--split", default="")
    qt.add_argument("--min-duration", type=float, default=None)
    qt.add_argument("--max-duration", type=float, default=None)
    qt.add_argument("--max-iters", type=int, default=100)
    qt.add_argument("--tol", type=float, default=1e-4)
    qt.add_argument("--restarts", type=int, default=None,
                    help="k-means restarts; default adapts to instance size")
    qt.add_argument("--out", required=True)
    qt.set_defaults(func=cmd_quantize_train, command="quantize-train")

    qa = qsub.add_parser("assign")
    common(qa)
    qa.add_argument("--manifest", required=True)
    qa.add_argument("--features-dir", required=True)
    qa.add_argument("--codebook", required=True)
    qa.add_argument("--out", required=True, help="directory for label sequences")
    qa.set_defaults(func=cmd_quantize_assign, command="quantize-assign")

    bag = sub.add_parser("bag", help="unigram bags from label sequences")
    common(bag)
    bag.add_argument("--manifest", required=True)
    bag.add_argument("--labels-dir", required=True)
    bag.add_argument("--codebook", default="")
    bag.add_argument("--k", type=int, default=0)
    bag.add_argument("--out", required=True)
    bag.set_defaults(func=cmd_bag, command="bag")

    train = sub.add_parser("train", help="train a classifier")
    common(train)
    train.add_argument("--model-type", choices=("linear", "tap"), default="linear")
    train.add_argument("--bags", action="append", help="bag stem (linear); repeatable")
    train.add_argument("--manifest", help="selection manifest (linear) / training manifest (tap)")
    train.add_argument("--features-dir", help="feature dir (tap)")
    train.add_argument("--split", default="train")
    train.add_argument("--batch-size", type=int, default=256)
    train.add_argument("--learning-rate", type=float, default=1e-2)
    train.add_argument("--epochs", type=int, default=100)
    train.add_argument("--max-steps", type=int, default=20000)
    train.add_argument("--freeze-steps", type=int, default=0)
    train.add_argument("--duration", type=float, default=8.0)
    train.add_argument("--thaw-depth", type=int, default=0)
    train.add_argument("--lna", action="store_true")
    train.add_argument("--proj-dim", type=int, default=256)
    train.add_argument("--out", required=True)
    train.set_defaults(func=cmd_train, command="train")

    pred = sub.add_parser("predict", help="attach predicted labels and confidences")
    common(pred)
    pred.add_argument("--model", required=True)
    pred.add_argument("--bags", help="bag stem (linear model)")
    pred.add_argument("--manifest", help="subset to predict; required for tap")
    pred.add_argument("--features-dir", help="feature dir (tap model)")
    pred.add_argument("--out", required=True)
    pred.set_defaults(func=cmd_predict, command="predict")

    bucket = sub.add_parser("bucket", help="tertile confidence bucketing")
    common(bucket)
    bucket.add_argument("--pred", required=True, help="manifest with confidences")
    bucket.add_argument("--thresholds", default="", help="reuse fitted thresholds")
    bucket.add_argument("--fit-on", default="all")
    bucket.add_argument("--out", required=True)
    bucket.set_defaults(func=cmd_bucket, command="bucket")

    asm = sub.add_parser("assemble", help="build a self-training set")
    common(asm)
    asm.add_argument("--base", required=True)
    asm.add_argument("--pool", required=True)
    asm.add_argument("--setting", choices=("surrogate", "low", "medium", "high"), required=True)
    asm.add_argument("--out", required=True)
    asm.set_defaults(func=cmd_assemble, command="assemble")

    ev = sub.add_parser("eval", help="macro-F1 against gold labels")
    common(ev)
    ev.add_argument("--gold", required=True)
    ev.add_argument("--pred", required=True)
    ev.add_argument("--split", default="")
    ev.add_argument("--pool-regions", action="store_true")
    ev.add_argument("--msa-passthrough", action="store_true")
    ev.add_argument("--average-over", default="")
    ev.add_argument("--name", default="model")
    ev.add_argument("--dataset", default="test")
    ev.add_argument("--out", default="")
    ev.set_defaults(func=cmd_eval, command="eval")

    search = sub.add_parser("search", help="random hyperparameter search (journaled)")
    common(search)
    search.add_argument("--budget", type=int, required=True)
    search.add_argument("--journal", default="")
    search.add_argument("--resume", action="store_true")
    search.set_defaults(func=cmd_search, command="search")

    filt = sub.add_parser("filter", help="duration and language filtering")
    common(filt)
    filt.add_argument("--manifest", required=True)
    filt.add_argument("--min-duration", type=float, default=None)
    filt.add_argument("--max-duration", type=float, default=None)
    filt.add_argument("--min-language-score", type=float, default=None)
    filt.add_argument("--out", required=True)
    filt.set_defaults(func=cmd_filter, command="filter")

    sur = sub.add_parser("surrogate", help="label records by country of origin")
    common(sur)
    sur.add_argument("--manifest", required=True)
    sur.add_argument("--out", required=True)
    sur.set_defaults(func=cmd_surrogate, command="surrogate")

    agr = sub.add_parser("agreement", help="prediction/country agreement statistics")
    common(agr)
    agr.add_argument("--manifest", required=True)
    agr.set_defaults(func=cmd_agreement, command="agreement")

    audit = sub.add_parser("audit", help="sample mismatches for human annotation")
    common(audit)
    audit.add_argument("--manifest", required=True)
    audit.add_argument("--per-label", type=int, required=True)
    audit.add_argument("--labels", required=True, help="comma-separated country codes")
    audit.add_argument("--sheet", required=True)
    audit.set_defaults(func=cmd_audit, command="audit")

    return parser


def _env_defaults() -> dict:
    values = {}
    for key, raw in os.environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        dest = key[len(ENV_PREFIX):].lower()
        try:
            values[dest] = json.loads(raw)
        except json.JSONDecodeError:
            values[dest] = raw
    return values


def _iter_parsers(parser):
    """The parser and every (nested) subcommand parser."""
    yield parser
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for child in action.choices.values():
                yield from _iter_parsers(child)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    defaults = {}
    if known.config:
        path = Path(known.config)
        if not path.exists():
            print(f"error: config file not found: {path}", file=sys.stderr)
            return 2
        try:
            defaults.update(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            print(f"error: bad config file {path}: {exc}", file=sys.stderr)
            return 2
    defaults.update(_env_defaults())
    defaults.pop("command", None)
    defaults.pop("func", None)
    if defaults:
        # subcommands parse into fresh namespaces, so defaults must reach
        # every parser in the tree for flags to keep the last word
        for p in _iter_parsers(parser):
            p.set_defaults(**defaults)

    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

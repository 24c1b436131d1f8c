"""Command-line entry point: one subcommand per stage plus ``run``."""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from pathlib import Path

from .evaluation import balanced_accuracy, confusion_counts, coverage_report, group_by_source, overall_accuracy
from .fixture import FixtureConfig, build_fixture, write_fixture_dir
from .io import DatasetError, load_dataset, load_raw_records, read_labeled_pairs, save_dataset, save_raw_records, write_decided_pairs
from .matcher import BACKENDS, MatchModel, WsaParams, match_all
from .normalization import load_profile, standardize_all
from .pipeline import ConfigError, PipelineConfig, StageError, load_ranking, load_source_config, parse_tile, run_pipeline, train_from_labels
from .procurement import ProcurementError, dedupe_by_id, fetch_area, plan_initial_grid, source_from_config
from .taxonomy import DEFAULT_THRESHOLD, EmbeddingFormatError, TaxonomyMapper, load_embeddings, load_taxonomy, map_dataset
from .unification import unify_dataset
from .verification import AuditLog, VerificationError, apply_resolutions, interactive_review, list_flagged, read_resolutions_csv, replay_audit

log = logging.getLogger("poiconflate")

EXIT_OK, EXIT_STAGE, EXIT_CONFIG = 0, 1, 2
DEFAULT_SEED = 42


def _load_pois(path) -> list:
    pois, errors = load_dataset(path)
    for e in errors:
        log.warning("%s", e)
    return pois


def cmd_procure(args) -> int:
    cfg = load_source_config(args.source)
    area = json.loads(Path(args.area).read_text(encoding="utf-8"))
    w, h = parse_tile(args.tile)
    tiles = plan_initial_grid(area, w, h)
    records = dedupe_by_id(fetch_area(tiles, source_from_config(cfg), cfg, args.min_dim, args.workers))
    save_raw_records(records, args.out)
    print(f"{len(records)} records from {len(tiles)} tiles -> {args.out}")
    return EXIT_OK


def cmd_normalize(args) -> int:
    try:
        profile = load_profile(args.profile)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    date = dt.date.fromisoformat(args.date) if args.date else dt.date.today()
    pois, errors = standardize_all(load_raw_records(args.inp, profile.source_id), profile, date)
    for e in errors:
        log.warning("%s", e)
    save_dataset(pois, args.out)
    print(f"{len(pois)} standardized, {len(errors)} rejected -> {args.out}")
    return EXIT_OK


def cmd_taxonomy_map(args) -> int:
    mapper = TaxonomyMapper(load_taxonomy(args.taxonomy), load_embeddings(args.embeddings, args.subwords), args.threshold)
    mapped = map_dataset(_load_pois(args.inp), mapper, args.passthrough)
    save_dataset(mapped, args.out)
    flagged = sum(p.requires_verification for p in mapped)
    print(f"{len(mapped)} mapped, {flagged} flagged for verification -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    pois = _load_pois(args.pois)
    labeled = read_labeled_pairs(args.pairs)
    model = train_from_labels(pois, labeled, args.algo, args.k, args.seed, args.radius, args.backend)
    model.save(args.out)
    print(f"{model.algorithm} model, hyperparams {model.hyperparams}, {len(model.sub_models)} sub-models -> {args.out}")
    return EXIT_OK


def cmd_match(args) -> int:
    pois = _load_pois(args.pois)
    if args.baseline:
        if None in (args.alpha, args.beta, args.vthreshold):
            raise ConfigError("--baseline needs --alpha, --beta and --vthreshold")
        classifier = WsaParams(args.alpha, args.beta, args.vthreshold)
        backend = args.baseline
    elif args.model:
        classifier = MatchModel.load(args.model)
        backend = classifier.backend
    else:
        raise ConfigError("match needs --model or --baseline")
    decided = match_all(pois, classifier, args.radius, backend)
    write_decided_pairs(decided, args.out)
    n_match = sum(d.pair.is_match for d in decided)
    print(f"{len(decided)} candidate pairs, {n_match} matches -> {args.out}")
    return EXIT_OK


def cmd_unify(args) -> int:
    pois = _load_pois(args.pois)
    matches = [(a, b) for a, b, lab in read_labeled_pairs(args.pairs) if lab == "match"]
    unified = unify_dataset(pois, matches, load_ranking(args.ranking))
    save_dataset(unified, args.out)
    print(f"{len(pois)} POIs, {len(matches)} match pairs -> {len(unified)} unified POIs -> {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    pois = _load_pois(args.inp)
    if args.replay:
        pois = replay_audit(pois, AuditLog(args.replay).read())
    audit = AuditLog(args.audit) if args.audit else None
    if args.resolutions:
        pois = apply_resolutions(pois, read_resolutions_csv(args.resolutions, args.operator), audit)
    if args.interactive:
        mapper = None
        if args.embeddings and args.taxonomy:
            mapper = TaxonomyMapper(load_taxonomy(args.taxonomy), load_embeddings(args.embeddings))
        pois = interactive_review(pois, mapper, audit, args.operator)
    flagged = list_flagged(pois)
    for poi, reasons in flagged:
        print(f"{poi.id}\t{','.join(reasons)}\t{poi.name or ''}\t{'|'.join(sorted(poi.place_types))}")
    print(f"{len(flagged)} flagged POIs remain", file=sys.stderr)
    if args.out:
        save_dataset(pois, args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    predicted = {(a, b): lab for a, b, lab in read_labeled_pairs(args.pairs)}
    labels = read_labeled_pairs(args.labels)
    # labeled pairs that never became candidates count as predicted non-matches
    preds = [predicted.get((a, b), "non_match") for a, b, _ in labels]
    truth = [lab for _, _, lab in labels]
    c = confusion_counts(preds, truth)
    extra = len(set(predicted) - {(a, b) for a, b, _ in labels})
    print(f"tp={c.tp} tn={c.tn} fp={c.fp} fn={c.fn}")
    print(f"overall_accuracy={overall_accuracy(c):.4f}")
    print(f"balanced_accuracy={balanced_accuracy(preds, truth):.4f}")
    if extra:
        print(f"{extra} predicted pairs have no label and were ignored", file=sys.stderr)
    return EXIT_OK


def cmd_coverage(args) -> int:
    pois = [p for path in args.inp for p in _load_pois(path)]
    unified = _load_pois(args.unified) if args.unified else None
    report = coverage_report(group_by_source(pois), unified)
    print(report.to_text(), end="")
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    return EXIT_OK


def cmd_fixture(args) -> int:
    cfg = FixtureConfig(seed=args.seed, n_pois=args.n, n_sources=args.sources, duplicate_rate=args.dup_rate)
    fx = build_fixture(cfg)
    write_fixture_dir(fx, args.out)
    n_match = len(fx.match_pairs)
    print(f"{len(fx.pois)} POIs, {len(fx.pairs)} labeled pairs ({n_match} match) -> {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = PipelineConfig.from_file(args.config, args.seed)
    manifest = run_pipeline(config)
    for stage, info in manifest.stages.items():
        print(f"{stage:10s} {info['duration_ms']:>8d} ms")
    print(f"artifacts in {config.out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 42)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="poiconflate", description="Multi-source POI conflation.")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        sp = sub.add_parser(name, help=help, parents=[common])
        sp.set_defaults(func=func)
        return sp

    sp = add("procure", cmd_procure, "fetch raw records with variable bounding boxes")
    sp.add_argument("--source", required=True, help="source config TOML")
    sp.add_argument("--area", required=True, help="study area polygon (GeoJSON)")
    sp.add_argument("--tile", default="250x250", help="initial tile size in meters, WxH")
    sp.add_argument("--min-dim", type=float, default=25.0, dest="min_dim")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", required=True)

    sp = add("normalize", cmd_normalize, "standardize raw records with a source profile")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--profile", required=True)
    sp.add_argument("--date", help="extraction date (YYYY-MM-DD), default today")
    sp.add_argument("--out", required=True)

    sp = add("taxonomy-map", cmd_taxonomy_map, "map place types onto the target taxonomy")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--subwords", help="character n-gram vectors for out-of-vocabulary words")
    sp.add_argument("--taxonomy", required=True)
    sp.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    sp.add_argument("--passthrough", action="append", default=[], help="source already in the target taxonomy")
    sp.add_argument("--out", required=True)

    sp = add("train", cmd_train, "train a match model on labeled pairs")
    sp.add_argument("--pairs", required=True)
    sp.add_argument("--pois", required=True)
    sp.add_argument("--algo", default="bagging", choices=["bagging", "gb", "gradient_boosting"])
    sp.add_argument("--backend", default="hybrid", choices=sorted(BACKENDS))
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--radius", type=float, default=100.0)
    sp.add_argument("--out", required=True)

    sp = add("match", cmd_match, "decide every candidate pair")
    sp.add_argument("--pois", required=True)
    sp.add_argument("--model")
    sp.add_argument("--baseline", choices=sorted(BACKENDS))
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--vthreshold", type=float)
    sp.add_argument("--radius", type=float, default=100.0)
    sp.add_argument("--out", required=True)

    sp = add("unify", cmd_unify, "merge matched POIs")
    sp.add_argument("--pois", required=True)
    sp.add_argument("--pairs", required=True)
    sp.add_argument("--ranking", required=True)
    sp.add_argument("--out", required=True)

    sp = add("verify", cmd_verify, "list and resolve POIs that need verification")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--resolutions", help="CSV poi_id,action,labels")
    sp.add_argument("--replay", help="audit log to replay before anything else")
    sp.add_argument("--interactive", action="store_true")
    sp.add_argument("--audit", help="append resolutions to this audit log")
    sp.add_argument("--operator", default="")
    sp.add_argument("--embeddings")
    sp.add_argument("--taxonomy")
    sp.add_argument("--out")

    sp = add("evaluate", cmd_evaluate, "overall and balanced accuracy of predicted pairs")
    sp.add_argument("--pairs", required=True)
    sp.add_argument("--labels", required=True)

    sp = add("coverage", cmd_coverage, "attribute coverage per source")
    sp.add_argument("--in", dest="inp", nargs="+", required=True)
    sp.add_argument("--unified")
    sp.add_argument("--csv")

    sp = add("fixture", cmd_fixture, "write a synthetic multi-source corpus")
    sp.add_argument("--n", type=int, default=1227)
    sp.add_argument("--sources", type=int, default=5)
    sp.add_argument("--dup-rate", type=float, default=0.15, dest="dup_rate")
    sp.add_argument("--out", required=True)

    sp = add("run", cmd_run, "run the configured pipeline end to end")
    sp.add_argument("--config", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.seed is None and args.command != "run":
        args.seed = DEFAULT_SEED
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StageError, DatasetError, ProcurementError, VerificationError, EmbeddingFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (OSError, ValueError, KeyError) as exc:
        print(f"error in {args.command}: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())

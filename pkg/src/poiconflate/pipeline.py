"""End-to-end pipeline driven by one TOML document, with a hashed manifest."""

from __future__ import annotations

import datetime as dt
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import __version__
from .evaluation import coverage_report, group_by_source
from .io import load_dataset, load_raw_records, read_labeled_pairs, save_dataset, save_raw_records, sha256_file, write_decided_pairs
from .matcher import DEFAULT_RADIUS_M, MatchModel, PairFeaturizer, WsaParams, match_all, train_model
from .model import SourceRanking, validate_dataset
from .normalization import load_profile, standardize_all
from .procurement import PagedSourceConfig, fetch_area, dedupe_by_id, plan_initial_grid, source_from_config
from .taxonomy import DEFAULT_THRESHOLD, TaxonomyMapper, load_embeddings, load_taxonomy, map_dataset
from .unification import unify_dataset

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

STAGE_VERSION = "1"
STAGES = ("procure", "normalize", "taxonomy", "match", "unify", "coverage")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (CLI exit code 2)."""


class StageError(RuntimeError):
    """A stage failed while running (CLI exit code 1)."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_ranking(path) -> SourceRanking:
    doc = read_toml(path)
    if not isinstance(doc.get("sources"), list):
        raise ConfigError(f"{path}: expected a 'sources' list")
    return SourceRanking(doc["sources"])


def load_source_config(path) -> PagedSourceConfig:
    doc = read_toml(path)
    base = Path(path).parent
    try:
        cfg = PagedSourceConfig(**doc)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if cfg.path and not Path(cfg.path).is_absolute():
        cfg = PagedSourceConfig(**{**doc, "path": str(base / cfg.path)})
    return cfg


def parse_tile(text: str) -> tuple:
    try:
        w, h = text.lower().split("x")
        return float(w), float(h)
    except ValueError:
        raise ConfigError(f"tile size must look like 250x250, got {text!r}") from None


@dataclass
class PipelineConfig:
    root: Path
    seed: int
    out_dir: Path
    sections: dict

    @classmethod
    def from_file(cls, path, seed: Optional[int] = None) -> "PipelineConfig":
        doc = read_toml(path)
        root = Path(path).resolve().parent
        unknown = set(doc) - {"seed", "out_dir", *STAGES}
        if unknown:
            raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
        for stage in ("normalize", "taxonomy", "match", "unify"):
            if stage not in doc:
                raise ConfigError(f"{path}: missing [{stage}] section")
        s = doc.get("seed", 0) if seed is None else seed
        if not isinstance(s, int):
            raise ConfigError(f"{path}: seed must be an integer")
        return cls(root, s, root / doc.get("out_dir", "out"), doc)

    def path(self, stage: str, key: str, required: bool = True) -> Optional[Path]:
        value = self.sections.get(stage, {}).get(key)
        if value is None:
            if required:
                raise ConfigError(f"[{stage}] needs '{key}'")
            return None
        p = Path(value)
        return p if p.is_absolute() else self.root / p

    def get(self, stage: str, key: str, default=None):
        return self.sections.get(stage, {}).get(key, default)


@dataclass
class Manifest:
    seed: int
    root: Path = Path(".")
    stages: dict = field(default_factory=dict)

    def _key(self, p: Path) -> str:
        try:
            return Path(p).resolve().relative_to(self.root.resolve()).as_posix()
        except ValueError:
            return Path(p).name

    def record(self, stage: str, inputs, outputs, started: float) -> None:
        self.stages[stage] = {
            "version": STAGE_VERSION,
            "seed": self.seed,
            "inputs": {self._key(p): sha256_file(p) for p in inputs},
            "outputs": {self._key(p): sha256_file(p) for p in outputs},
            "duration_ms": int(round((time.perf_counter() - started) * 1000)),
        }

    def to_json(self) -> str:
        doc = {"tool": "poiconflate", "version": __version__, "seed": self.seed, "stages": self.stages}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def hashes(self) -> dict:
        return {s: (v["inputs"], v["outputs"]) for s, v in self.stages.items()}


def _require(stage: str, *paths) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise StageError(stage, f"missing input {p}")


def run_pipeline(config: PipelineConfig) -> Manifest:
    """Run every configured stage in order, writing artifacts under out_dir.

    A failing stage raises StageError; outputs of earlier stages stay on disk.
    """
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(config.seed, config.root)

    try:
        raw_dir = _procure(config, manifest)
        std_path = _normalize(config, manifest, raw_dir)
        mapped_path = _taxonomy(config, manifest, std_path)
        pairs_path = _match(config, manifest, mapped_path)
        unified_path = _unify(config, manifest, mapped_path, pairs_path)
        _coverage(config, manifest, std_path, unified_path)
    finally:
        (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return manifest


def _procure(config: PipelineConfig, manifest: Manifest) -> Path:
    if "procure" not in config.sections:
        raw = config.path("normalize", "raw_dir")
        _require("normalize", raw)
        return raw
    t0 = time.perf_counter()
    sec = config.sections["procure"]
    area_path = config.path("procure", "area")
    _require("procure", area_path)
    area = json.loads(area_path.read_text(encoding="utf-8"))
    w, h = parse_tile(sec.get("tile", "250x250"))
    min_dim = float(sec.get("min_dim_m", 25.0))
    raw_dir = config.out_dir / "raw"
    inputs, outputs = [area_path], []
    for src_file in sec.get("sources", []):
        src_path = config.root / src_file
        _require("procure", src_path)
        inputs.append(src_path)
        scfg = load_source_config(src_path)
        try:
            tiles = plan_initial_grid(area, w, h)
            records = dedupe_by_id(fetch_area(tiles, source_from_config(scfg), scfg, min_dim))
        except Exception as exc:
            raise StageError("procure", f"{scfg.source_id}: {exc}") from exc
        path = raw_dir / f"{scfg.source_id}.ndjson"
        save_raw_records(records, path)
        outputs.append(path)
    manifest.record("procure", inputs, outputs, t0)
    return raw_dir


def _extraction_date(config: PipelineConfig, source: str) -> dt.date:
    per_source = config.get("normalize", "extraction_dates", {})
    value = per_source.get(source, config.get("normalize", "extraction_date"))
    if value is None:
        raise ConfigError(f"[normalize] needs extraction_date (or extraction_dates.{source})")
    return value if isinstance(value, dt.date) else dt.date.fromisoformat(str(value))


def _profiles(config: PipelineConfig) -> dict:
    pdir = config.path("normalize", "profiles_dir")
    _require("normalize", pdir)
    profiles = {}
    for p in sorted(pdir.glob("*.toml")):
        try:
            prof = load_profile(p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        profiles[prof.source_id] = (prof, p)
    if not profiles:
        raise StageError("normalize", f"no profiles in {pdir}")
    return profiles


def _normalize(config: PipelineConfig, manifest: Manifest, raw_dir: Path) -> Path:
    t0 = time.perf_counter()
    _require("normalize", raw_dir)
    profiles = _profiles(config)
    pois, inputs = [], []
    for source, (prof, prof_path) in profiles.items():
        raw_path = raw_dir / f"{source}.ndjson"
        _require("normalize", raw_path)
        inputs += [raw_path, prof_path]
        records = load_raw_records(raw_path, source)
        std, errors = standardize_all(records, prof, _extraction_date(config, source))
        for e in errors:
            log.warning("normalize: %s", e)
        pois.extend(std)
    problems = validate_dataset(pois)
    if problems:
        raise StageError("normalize", f"{len(problems)} invalid records, first: {problems[0]}")
    path = config.out_dir / "standardized.ndjson"
    save_dataset(pois, path, "ndjson")
    manifest.record("normalize", inputs, [path], t0)
    return path


def _load(stage: str, path: Path) -> list:
    pois, errors = load_dataset(path)
    if errors:
        raise StageError(stage, f"{len(errors)} unreadable records in {path}, first: {errors[0]}")
    return pois


def _taxonomy(config: PipelineConfig, manifest: Manifest, std_path: Path) -> Path:
    t0 = time.perf_counter()
    targets = config.path("taxonomy", "targets")
    emb = config.path("taxonomy", "embeddings")
    sub = config.path("taxonomy", "subwords", required=False)
    _require("taxonomy", targets, emb, sub)
    threshold = float(config.get("taxonomy", "threshold", DEFAULT_THRESHOLD))
    passthrough = config.get("taxonomy", "passthrough")
    if passthrough is None:
        passthrough = [s for s, (prof, _) in _profiles(config).items() if prof.passthrough]
    mapper = TaxonomyMapper(load_taxonomy(targets), load_embeddings(emb, sub), threshold)
    mapped = map_dataset(_load("taxonomy", std_path), mapper, passthrough)
    path = config.out_dir / "mapped.ndjson"
    save_dataset(mapped, path, "ndjson")
    manifest.record("taxonomy", [std_path, targets, emb] + ([sub] if sub else []), [path], t0)
    return path


def train_from_labels(pois, labeled, algorithm: str, k: int, seed: int, radius_m: float = DEFAULT_RADIUS_M, backend: str = "hybrid") -> MatchModel:
    featurizer = PairFeaturizer(pois, radius_m)
    table = featurizer.table_for([(a, b) for a, b, _ in labeled])
    model = train_model(table.X(backend), [lab for _, _, lab in labeled], algorithm, k=k, seed=seed, backend=backend)
    model.radius_m = radius_m
    return model


def _match(config: PipelineConfig, manifest: Manifest, mapped_path: Path) -> Path:
    t0 = time.perf_counter()
    pois = _load("match", mapped_path)
    radius = float(config.get("match", "radius_m", DEFAULT_RADIUS_M))
    inputs = [mapped_path]
    outputs = []
    baseline = config.get("match", "baseline")
    if baseline is not None:
        classifier = WsaParams(float(config.get("match", "alpha")), float(config.get("match", "beta")), float(config.get("match", "v_threshold")))
        backend = baseline
    else:
        model_path = config.path("match", "model", required=False)
        if model_path is not None:
            _require("match", model_path)
            classifier = MatchModel.load(model_path)
            inputs.append(model_path)
        else:
            labels = config.path("match", "labels")
            _require("match", labels)
            inputs.append(labels)
            try:
                classifier = train_from_labels(
                    pois,
                    read_labeled_pairs(labels),
                    config.get("match", "algorithm", "bagging"),
                    int(config.get("match", "k", 10)),
                    config.seed,
                    radius,
                )
            except (KeyError, ValueError) as exc:
                raise StageError("match", f"training failed: {exc}") from exc
            model_path = config.out_dir / "model.json"
            classifier.save(model_path)
            outputs.append(model_path)
        backend = classifier.backend
    decided = match_all(pois, classifier, radius, backend)
    path = config.out_dir / "pairs.csv"
    write_decided_pairs(decided, path)
    outputs.append(path)
    manifest.record("match", inputs, outputs, t0)
    return path


def _unify(config: PipelineConfig, manifest: Manifest, mapped_path: Path, pairs_path: Path) -> Path:
    t0 = time.perf_counter()
    ranking_path = config.path("unify", "ranking")
    _require("unify", ranking_path)
    ranking = load_ranking(ranking_path)
    pois = _load("unify", mapped_path)
    matches = [(a, b) for a, b, lab in read_labeled_pairs(pairs_path) if lab == "match"]
    try:
        unified = unify_dataset(pois, matches, ranking)
    except KeyError as exc:
        raise StageError("unify", str(exc)) from exc
    path = config.out_dir / "unified.geojson"
    save_dataset(unified, path, "geojson")
    manifest.record("unify", [mapped_path, pairs_path, ranking_path], [path], t0)
    return path


def _coverage(config: PipelineConfig, manifest: Manifest, std_path: Path, unified_path: Path) -> None:
    t0 = time.perf_counter()
    report = coverage_report(group_by_source(_load("coverage", std_path)), _load("coverage", unified_path))
    csv_path = config.out_dir / "coverage.csv"
    txt_path = config.out_dir / "coverage.txt"
    csv_path.write_text(report.to_csv(), encoding="utf-8")
    txt_path.write_text(report.to_text(), encoding="utf-8")
    manifest.record("coverage", [std_path, unified_path], [csv_path, txt_path], t0)

"""Synthetic multi-source POI corpora with known duplicates.

Entities are scattered over a street grid; each is emitted by one source and
optionally re-emitted by others with perturbed names, addresses and
coordinates. Every cross-source pair closer than the matching radius is
labeled, so the fixture doubles as a labeled pair set.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .model import StandardPoi
from .normalization import SourceProfile, standardize
from .procurement import RawRecord

ORIGIN = (1.30, 103.80)
M_PER_DEG = 111_320.0

SOURCES = ("onemap", "sla", "google", "here", "osm")
SOURCE_WEIGHTS = {"onemap": 0.12, "sla": 0.18, "google": 0.30, "here": 0.22, "osm": 0.18}
EXTRACTION_DATES = {
    "onemap": dt.date(2021, 3, 1),
    "sla": dt.date(2020, 12, 31),
    "google": dt.date(2021, 3, 15),
    "here": dt.date(2021, 2, 20),
    "osm": dt.date(2021, 3, 10),
}

# concept -> (target taxonomy label, labels used by each non-passthrough source)
CATEGORIES = {
    "restaurant": ("restaurant", {"onemap": "eating house", "sla": "restaurant", "here": "casual dining", "osm": "restaurant"}),
    "cafe": ("cafe", {"onemap": "coffee shop", "sla": "cafe", "here": "coffee shop", "osm": "cafe"}),
    "bakery": ("bakery", {"onemap": "bakery", "sla": "confectionery", "here": "bakery", "osm": "bakery"}),
    "bar": ("bar", {"onemap": "pub", "sla": "bar", "here": "pub", "osm": "pub"}),
    "supermarket": ("supermarket", {"onemap": "supermarket", "sla": "grocery", "here": "grocery", "osm": "supermarket"}),
    "convenience": ("convenience store", {"onemap": "minimart", "sla": "convenience store", "here": "minimart", "osm": "convenience"}),
    "clothing": ("clothing store", {"onemap": "apparel shop", "sla": "fashion boutique", "here": "apparel shop", "osm": "clothes"}),
    "pharmacy": ("pharmacy", {"onemap": "pharmacy", "sla": "drugstore", "here": "chemist", "osm": "pharmacy"}),
    "bank": ("bank", {"onemap": "bank", "sla": "bank", "here": "bank", "osm": "bank"}),
    "clinic": ("doctor", {"onemap": "clinic", "sla": "medical clinic", "here": "physician", "osm": "doctors"}),
    "dentist": ("dentist", {"onemap": "dental clinic", "sla": "dentist", "here": "dental clinic", "osm": "dentist"}),
    "school": ("school", {"onemap": "school", "sla": "tuition centre", "here": "education", "osm": "school"}),
    "gym": ("gym", {"onemap": "fitness centre", "sla": "gym", "here": "fitness centre", "osm": "fitness"}),
    "salon": ("hair care", {"onemap": "hairdresser", "sla": "barber", "here": "hairdresser", "osm": "hairdresser"}),
    "beauty": ("beauty salon", {"onemap": "beauty parlour", "sla": "beauty salon", "here": "nail salon", "osm": "beauty"}),
    "hotel": ("lodging", {"onemap": "hotel", "sla": "hostel", "here": "hotel", "osm": "hotel"}),
    "books": ("book store", {"onemap": "bookshop", "sla": "book store", "here": "bookshop", "osm": "books"}),
    "electronics": ("electronics store", {"onemap": "electronics shop", "sla": "electronics store", "here": "electronics shop", "osm": "electronics"}),
    "hardware": ("hardware store", {"onemap": "hardware shop", "sla": "hardware store", "here": "hardware shop", "osm": "hardware"}),
    "laundry": ("laundry", {"onemap": "laundromat", "sla": "laundry", "here": "dry cleaner", "osm": "laundry"}),
    "florist": ("florist", {"onemap": "florist", "sla": "flower shop", "here": "florist", "osm": "florist"}),
    "worship": ("place of worship", {"onemap": "void deck shrine", "sla": "temple", "here": "temple", "osm": "place of worship"}),
    "travel": ("travel agency", {"onemap": "travel agent", "sla": "travel agency", "here": "tour operator", "osm": "travel agency"}),
    "realestate": ("real estate agency", {"onemap": "property agent", "sla": "real estate", "here": "property agent", "osm": "estate agent"}),
}
# source labels with no close target label; these exercise the verification step
UNMAPPABLE = ("void deck shrine", "tuition centre", "tour operator", "property agent", "physician")

CATEGORY_WORDS = {
    "restaurant": ["restaurant", "kitchen", "eating house", "seafood"],
    "cafe": ["cafe", "coffee", "kopi"],
    "bakery": ["bakery", "bakehouse", "confectionery"],
    "bar": ["bar", "pub", "tavern"],
    "supermarket": ["supermarket", "mart", "provision"],
    "convenience": ["minimart", "mini mart", "store"],
    "clothing": ["fashion", "boutique", "apparel"],
    "pharmacy": ["pharmacy", "medical hall", "drugstore"],
    "bank": ["bank", "finance", "credit"],
    "clinic": ["clinic", "medical centre", "family clinic"],
    "dentist": ["dental", "dental surgery", "dental centre"],
    "school": ["learning centre", "academy", "education centre"],
    "gym": ["fitness", "gym", "studio"],
    "salon": ["hair studio", "barber", "hair salon"],
    "beauty": ["beauty", "nails", "spa"],
    "hotel": ["hotel", "inn", "lodge"],
    "books": ["books", "bookstore", "stationery"],
    "electronics": ["electronics", "mobile", "digital"],
    "hardware": ["hardware", "trading", "tools"],
    "laundry": ["laundry", "dry cleaning", "laundromat"],
    "florist": ["florist", "flowers", "floral"],
    "worship": ["temple", "church", "mosque"],
    "travel": ["travel", "tours", "holidays"],
    "realestate": ["realty", "properties", "property"],
}
PREFIXES = [
    "golden", "happy", "lucky", "new", "royal", "grand", "little", "great", "eastern", "oriental",
    "prosperity", "jade", "silver", "sunrise", "harmony", "blessed", "evergreen", "crystal", "hong", "tian",
]
CORES = [
    "dragon", "phoenix", "lotus", "garden", "pearl", "bamboo", "orchid", "tiger", "lion", "peony",
    "ah hock", "mei ling", "kim seng", "boon lay", "tan", "lim", "wong", "siti", "ravi", "kumar",
    "hup seng", "soon huat", "chuan", "heng", "fortune", "victory", "unity", "ocean", "riverside", "hilltop",
    "jasmine", "sakura", "nanyang", "tanjong", "kallang", "bedok", "serangoon", "katong", "joo chiat", "bugis",
]
CHAINS = {
    "7-eleven": "convenience", "starbucks coffee": "cafe", "mcdonald's": "restaurant", "kopitiam": "restaurant",
    "guardian pharmacy": "pharmacy", "watsons": "pharmacy", "ntuc fairprice": "supermarket", "cold storage": "supermarket",
    "popular bookstore": "books", "sheng siong": "supermarket", "toast box": "cafe", "ya kun kaya toast": "cafe",
    "old chang kee": "bakery", "subway": "restaurant", "kfc": "restaurant", "anytime fitness": "gym",
    "posb bank": "bank", "ocbc bank": "bank", "bread talk": "bakery", "unity pharmacy": "pharmacy",
}
STREET_STEMS = [
    "ang mo kio", "bedok north", "toa payoh", "jurong west", "tampines", "hougang", "yishun", "clementi",
    "bukit batok", "pasir ris", "serangoon", "woodlands", "choa chu kang", "sengkang", "punggol", "bishan",
    "kallang bahru", "geylang", "marine parade", "queenstown", "redhill", "tiong bahru", "bukit merah", "telok blangah",
]
STREET_KINDS = ["avenue", "street", "road", "drive", "central", "crescent", "lane"]
ABBREV = {
    "avenue": "ave", "street": "st", "road": "rd", "drive": "dr", "central": "ctrl", "crescent": "cres",
    "lane": "ln", "north": "nth", "block": "blk", "restaurant": "rest", "centre": "ctr", "company": "co",
    "and": "&", "coffee": "kopi", "medical": "med", "trading": "trdg", "singapore": "sg", "fitness": "fit",
}


@dataclass(frozen=True)
class Perturbation:
    """Per-record probabilities of each corruption."""

    max_jitter_m: float = 100.0
    jitter_scale_m: float = 12.0
    token_swap: float = 0.08
    abbreviation: float = 0.30
    typo: float = 0.12
    drop_token: float = 0.10
    add_suffix: float = 0.15
    # swap the category word for a synonym ("kitchen" for "restaurant")
    synonym: float = 0.10
    drop_postal: float = 0.20
    drop_block: float = 0.12
    address_typo: float = 0.08
    # a duplicate sometimes sits in a neighboring building (wrong geocode)
    wrong_building: float = 0.08
    # probability that a source omits the address entirely
    missing_address: dict = field(default_factory=lambda: {"onemap": 0.02, "sla": 0.05, "google": 0.04, "here": 0.10, "osm": 0.24})
    missing_name: dict = field(default_factory=lambda: {"onemap": 0.0, "sla": 0.01, "google": 0.0, "here": 0.01, "osm": 0.04})


@dataclass(frozen=True)
class FixtureConfig:
    seed: int = 0
    n_pois: int = 1227
    n_sources: int = 5
    duplicate_rate: float = 0.15
    density_per_km2: float = 540.0
    pois_per_building: float = 2.2
    chain_rate: float = 0.12
    radius_m: float = 100.0
    perturbation: Perturbation = field(default_factory=Perturbation)

    def __post_init__(self):
        if not 0.0 < self.duplicate_rate < 1.0:
            raise ValueError("duplicate_rate must lie in (0, 1)")
        if self.n_pois < 1 or self.n_sources < 1:
            raise ValueError("n_pois and n_sources must be positive")


# desk-scale labeled regime and the full-size throughput regime
ACCURACY_REGIME = FixtureConfig()
THROUGHPUT_REGIME = FixtureConfig(n_pois=12106, duplicate_rate=0.28)


def source_ids(n: int) -> tuple:
    return SOURCES[:n] if n <= len(SOURCES) else SOURCES + tuple(f"source{i}" for i in range(len(SOURCES) + 1, n + 1))


@dataclass
class _Entity:
    key: int
    name: str
    category: str
    lat: float
    lon: float
    building: int
    chain: bool


@dataclass
class _Building:
    lat: float
    lon: float
    block: str
    street: str
    postal: str


@dataclass
class Fixture:
    pois: list
    pairs: list
    records: dict
    entity_of: dict
    config: FixtureConfig

    @property
    def match_pairs(self) -> list:
        return [(a, b) for a, b, lab in self.pairs if lab == "match"]


class _Gen:
    def __init__(self, cfg: FixtureConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.sources = source_ids(cfg.n_sources)

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def chance(self, p: float) -> bool:
        return bool(self.rng.random() < p)

    # layout

    def streets(self, side_m: float) -> list:
        n = max(2, int(side_m // 180) + 1)
        names, used = [], set()
        while len(names) < 2 * n:
            name = f"{self.pick(STREET_STEMS)} {self.pick(STREET_KINDS)}"
            if self.chance(0.5):
                name += f" {int(self.rng.integers(1, 10))}"
            if name not in used:
                used.add(name)
                names.append(name)
        return names

    def buildings(self, n_entities: int, side_m: float) -> list:
        n = max(1, int(round(n_entities / self.cfg.pois_per_building)))
        streets = self.streets(side_m)
        spacing = side_m / (len(streets) // 2)
        blocks_used: dict = {}
        postals = set()
        out = []
        for _ in range(n):
            x, y = self.rng.random(2) * side_m
            # nearest horizontal or vertical street
            row, col = int(y // spacing), int(x // spacing)
            dy, dx = y - row * spacing, x - col * spacing
            street = streets[min(row, len(streets) // 2 - 1)] if dy < dx else streets[len(streets) // 2 + min(col, len(streets) // 2 - 1)]
            taken = blocks_used.setdefault(street, set())
            while True:
                block = str(int(self.rng.integers(1, 999)))
                if self.chance(0.1):
                    block += self.pick("abc")
                if block not in taken:
                    taken.add(block)
                    break
            while True:
                postal = f"{int(self.rng.integers(10, 83)):02d}{int(self.rng.integers(0, 10000)):04d}"
                if postal not in postals:
                    postals.add(postal)
                    break
            lat = ORIGIN[0] + y / M_PER_DEG
            lon = ORIGIN[1] + x / (M_PER_DEG * math.cos(math.radians(ORIGIN[0])))
            out.append(_Building(lat, lon, block, street, postal))
        return out

    def entity_name(self, category: str) -> str:
        word = self.pick(CATEGORY_WORDS[category])
        core = self.pick(CORES)
        if self.chance(0.6):
            core = f"{self.pick(PREFIXES)} {core}"
        return f"{core} {word}"

    def entities(self, n: int, buildings: list) -> list:
        cats = list(CATEGORIES)
        chains = list(CHAINS)
        out = []
        for key in range(n):
            b = int(self.rng.integers(len(buildings)))
            chain = self.chance(self.cfg.chain_rate)
            if chain:
                name = self.pick(chains)
                category = CHAINS[name]
            else:
                category = self.pick(cats)
                name = self.entity_name(category)
            off = self.rng.normal(0.0, 8.0, 2)
            lat = buildings[b].lat + off[0] / M_PER_DEG
            lon = buildings[b].lon + off[1] / (M_PER_DEG * math.cos(math.radians(ORIGIN[0])))
            out.append(_Entity(key, name, category, lat, lon, b, chain))
        return out

    # rendering

    def jitter(self, lat: float, lon: float) -> tuple:
        p = self.cfg.perturbation
        d = min(self.rng.exponential(p.jitter_scale_m), p.max_jitter_m * 0.999)
        theta = self.rng.random() * 2 * math.pi
        return (
            lat + d * math.sin(theta) / M_PER_DEG,
            lon + d * math.cos(theta) / (M_PER_DEG * math.cos(math.radians(ORIGIN[0]))),
        )

    def typo(self, word: str) -> str:
        if len(word) < 4:
            return word
        i = int(self.rng.integers(1, len(word) - 1))
        op = int(self.rng.integers(3))
        if op == 0:
            return word[:i] + word[i + 1 :]
        if op == 1:
            return word[:i] + word[i + 1] + word[i] + word[i + 2 :]
        return word[:i] + self.pick("aeiourstn") + word[i:]

    def perturb_name(self, name: str, chain: bool, category: str) -> str:
        p = self.cfg.perturbation
        if not chain and self.chance(p.synonym):
            for word in sorted(CATEGORY_WORDS[category], key=len, reverse=True):
                if name.endswith(" " + word):
                    name = name[: -len(word)] + self.pick(CATEGORY_WORDS[category])
                    break
        tokens = name.split()
        if self.chance(p.abbreviation):
            tokens = [ABBREV.get(t, t) for t in tokens]
        if not chain and len(tokens) > 2 and self.chance(p.drop_token):
            del tokens[int(self.rng.integers(len(tokens)))]
        if len(tokens) > 1 and self.chance(p.token_swap):
            i = int(self.rng.integers(len(tokens) - 1))
            tokens[i], tokens[i + 1] = tokens[i + 1], tokens[i]
        if self.chance(p.typo):
            i = int(self.rng.integers(len(tokens)))
            tokens[i] = self.typo(tokens[i])
        if self.chance(p.add_suffix):
            tokens += self.pick([["pte", "ltd"], ["singapore"], ["sg"], ["(s)", "pte", "ltd"], ["branch"]])
        return " ".join(tokens)

    def render_name(self, source: str, name: str, chain: bool, category: str) -> Optional[str]:
        if self.chance(self.cfg.perturbation.missing_name.get(source, 0.01)):
            return None
        name = self.perturb_name(name, chain, category)
        if source in ("onemap", "sla"):
            return name.upper()
        if source in ("google", "here"):
            return name.title()
        return name

    def render_address(self, source: str, b: _Building) -> Optional[str]:
        p = self.cfg.perturbation
        if self.chance(p.missing_address.get(source, 0.05)):
            return None
        street = b.street
        if source == "google" or (source == "here" and self.chance(0.5)) or self.chance(p.abbreviation * 0.5):
            street = " ".join(ABBREV.get(t, t) for t in street.split())
        if self.chance(p.address_typo):
            toks = street.split()
            i = int(self.rng.integers(len(toks)))
            toks[i] = self.typo(toks[i])
            street = " ".join(toks)
        block = None if self.chance(p.drop_block) else b.block
        postal = None if self.chance(p.drop_postal) else b.postal
        if source == "osm":
            parts = [block or "", street] + ([postal] if postal and self.chance(0.5) else [])
            return " ".join(x for x in parts if x)
        if source == "sla":
            head = f"blk {block} " if block else ""
            return (head + street + " singapore" + (f" {postal}" if postal else "")).upper()
        if source == "onemap":
            return (f"{block} " if block else "") + street.upper() + " SINGAPORE" + (f" {postal}" if postal else "")
        tail = f", singapore {postal}" if postal else ", singapore"
        return ((f"{block} " if block else "") + street + tail).title()

    def payload(self, source: str, native: str, lat: float, lon: float, name, address, category: str) -> dict:
        target, labels = CATEGORIES[category]
        props = {"native_id": native, "lat": round(lat, 7), "lon": round(lon, 7)}
        if source == "onemap":
            props.update(SEARCHVAL=name, ADDRESS=address, CATEGORY=labels["onemap"])
        elif source == "sla":
            props.update(NAME=name, ADDR=address, TYPE=labels["sla"], LAST_UPDATED="2020-12-31")
        elif source == "here":
            props.update(title=name, address={"label": address} if address else None, categories=[{"name": labels["here"]}])
        elif source == "osm":
            tags = {"name": name, "amenity": labels["osm"], "addr:full": address}
            if self.chance(0.3):
                tags["opening_hours"] = self.pick(["Mo-Su 08:00-22:00", "24/7", "Mo-Fr 09:00-18:00"])
            props.update(tags={k: v for k, v in tags.items() if v is not None})
        else:
            extra = [target]
            if self.chance(0.4):
                extra.append(self.pick(["point of interest", "establishment", "store", "food"]))
            props.update(name=name, formatted_address=address, types=extra, rating=round(float(self.rng.uniform(2.5, 5.0)), 1))
        props = {k: v for k, v in props.items() if v is not None}
        return {"type": "Feature", "geometry": {"type": "Point", "coordinates": [props["lon"], props["lat"]]}, "properties": props}


PROFILES = {
    "onemap": {"native_id": "properties.native_id", "lat": "properties.lat", "lon": "properties.lon", "name": "properties.SEARCHVAL", "address": "properties.ADDRESS", "place_type": "properties.CATEGORY"},
    "sla": {"native_id": "properties.native_id", "lat": "properties.lat", "lon": "properties.lon", "name": "properties.NAME", "address": "properties.ADDR", "place_type": "properties.TYPE", "date": "properties.LAST_UPDATED"},
    "google": {"native_id": "properties.native_id", "lat": "properties.lat", "lon": "properties.lon", "name": "properties.name", "address": "properties.formatted_address", "place_type": "properties.types"},
    "here": {"native_id": "properties.native_id", "lat": "properties.lat", "lon": "properties.lon", "name": "properties.title", "address": "properties.address.label", "place_type": "properties.categories.0.name"},
    "osm": {"native_id": "properties.native_id", "lat": "properties.lat", "lon": "properties.lon", "name": "properties.tags.name", "address": "properties.tags.addr:full", "place_type": "properties.tags.amenity", "tags": "properties.tags"},
}
PASSTHROUGH = {"google"}


def source_profile(source: str) -> SourceProfile:
    paths = PROFILES.get(source, PROFILES["google"])
    return SourceProfile(source, dict(paths), passthrough=source in PASSTHROUGH or source not in PROFILES)


def build_fixture(cfg: FixtureConfig = ACCURACY_REGIME) -> Fixture:
    gen = _Gen(cfg)
    rng = gen.rng
    n_dup = int(round(cfg.duplicate_rate * cfg.n_pois)) if cfg.n_sources > 1 else 0
    n_base = cfg.n_pois - n_dup
    side_m = math.sqrt(cfg.n_pois / cfg.density_per_km2) * 1000.0
    buildings = gen.buildings(n_base, side_m)
    entities = gen.entities(n_base, buildings)

    weights = np.array([SOURCE_WEIGHTS.get(s, 0.2) for s in gen.sources])
    weights = weights / weights.sum()
    home = rng.choice(len(gen.sources), size=n_base, p=weights)
    emitted = [[int(h)] for h in home]
    for _ in range(n_dup):
        while True:
            e = int(rng.integers(n_base))
            free = [i for i in range(len(gen.sources)) if i not in emitted[e]]
            if free:
                break
        w = weights[free] / weights[free].sum()
        emitted[e].append(int(rng.choice(free, p=w)))

    records: dict = {s: [] for s in gen.sources}
    entity_of: dict = {}
    counters = {s: 0 for s in gen.sources}
    for ent in entities:
        for k, si in enumerate(emitted[ent.key]):
            src = gen.sources[si]
            counters[src] += 1
            native = f"{src[:2]}{counters[src]:06d}"
            if k == 0:
                lat, lon = ent.lat, ent.lon
                bld = buildings[ent.building]
            else:
                lat, lon = gen.jitter(ent.lat, ent.lon)
                bld = buildings[ent.building]
                if gen.chance(cfg.perturbation.wrong_building):
                    bld = buildings[int(rng.integers(len(buildings)))]
            name = gen.render_name(src, ent.name, ent.chain, ent.category)
            address = gen.render_address(src, bld)
            payload = gen.payload(src, native, lat, lon, name, address, ent.category)
            records[src].append(RawRecord(src, native, payload))
            entity_of[f"{src}:{native}"] = ent.key

    pois = []
    for src in gen.sources:
        prof = source_profile(src)
        date = EXTRACTION_DATES.get(src, dt.date(2021, 3, 1))
        pois.extend(standardize(r, prof, date) for r in records[src])
    pois.sort(key=lambda p: p.id)
    pairs = label_pairs(pois, entity_of, cfg.radius_m)
    return Fixture(pois, pairs, records, entity_of, cfg)


def label_pairs(pois, entity_of: dict, radius_m: float = 100.0) -> list:
    """Every cross-source pair within ``radius_m``, labeled by shared entity."""
    from .similarity import SpatialGridIndex, neighbors_within

    index = SpatialGridIndex(pois, cell_size_m=radius_m)
    out = []
    for p in pois:
        for q in neighbors_within(index, p, radius_m, cross_source_only=True):
            if q.id > p.id:
                out.append((p.id, q.id, "match" if entity_of[p.id] == entity_of[q.id] else "non_match"))
    out.sort()
    return out


def generate_fixture(seed: int = 0, n_pois: int = 1227, n_sources: int = 5, duplicate_rate: float = 0.15, perturbation: Optional[Perturbation] = None, **kwargs) -> tuple:
    """(pois, labeled pairs) for the given seed; see FixtureConfig for knobs."""
    cfg = FixtureConfig(seed=seed, n_pois=n_pois, n_sources=n_sources, duplicate_rate=duplicate_rate, perturbation=perturbation or Perturbation(), **kwargs)
    fx = build_fixture(cfg)
    return fx.pois, fx.pairs


# taxonomy and embeddings


def target_taxonomy() -> list:
    return sorted({t for t, _ in CATEGORIES.values()} | {"point of interest", "establishment", "store", "food"})


def synthetic_embeddings(dim: int = 48, seed: int = 7) -> dict:
    """Word vectors where synonymous category labels are near-parallel.

    Each concept gets a random direction; every word of every label for that
    concept is that direction plus small noise. Unmappable labels get
    unrelated directions.
    """
    rng = np.random.default_rng(seed)

    def unit(v):
        return v / np.linalg.norm(v)

    vectors: dict = {}

    def put(word, base, noise):
        if word not in vectors:
            vectors[word] = unit(base + rng.normal(0.0, noise, dim))

    for concept, (target, labels) in sorted(CATEGORIES.items()):
        base = unit(rng.normal(size=dim))
        words = set(target.split())
        for label in labels.values():
            if label not in UNMAPPABLE:
                words |= set(label.split())
        # target words first so the concept direction is shared
        for w in sorted(words):
            put(w, base, 0.02)
    for label in UNMAPPABLE:
        for w in label.split():
            put(w, rng.normal(size=dim), 0.0)
    for label in ("point of interest", "establishment", "store", "food"):
        base = rng.normal(size=dim)
        for w in label.split():
            put(w, base, 0.02)
    return vectors


def study_area(pois, pad_m: float = 20.0) -> dict:
    """Rectangle around every POI, padded so that no point sits on an edge."""
    lats = [p.point.lat for p in pois]
    lons = [p.point.lon for p in pois]
    dlat = pad_m / M_PER_DEG
    dlon = pad_m / (M_PER_DEG * math.cos(math.radians(ORIGIN[0])))
    s, n, w, e = min(lats) - dlat, max(lats) + dlat, min(lons) - dlon, max(lons) + dlon
    ring = [[w, s], [e, s], [e, n], [w, n], [w, s]]
    return {"type": "Polygon", "coordinates": [ring]}


def write_fixture_dir(fx: Fixture, out_dir, emb_dim: int = 48) -> dict:
    """Write raw sources, profiles, taxonomy, embeddings, labels and a pipeline config."""
    from .io import save_raw_records, write_labeled_pairs
    from .taxonomy import EmbeddingStore, save_embeddings

    out = Path(out_dir)
    (out / "raw").mkdir(parents=True, exist_ok=True)
    (out / "profiles").mkdir(parents=True, exist_ok=True)
    paths = {}
    for src, recs in fx.records.items():
        save_raw_records(recs, out / "raw" / f"{src}.ndjson")
        prof = source_profile(src)
        lines = [f'source_id = "{src}"', f"passthrough = {str(prof.passthrough).lower()}", "", "[field_paths]"]
        lines += [f'{k} = "{v}"' for k, v in prof.field_paths.items()]
        (out / "profiles" / f"{src}.toml").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "taxonomy.txt").write_text("\n".join(target_taxonomy()) + "\n", encoding="utf-8")
    vecs = synthetic_embeddings(emb_dim)
    save_embeddings(EmbeddingStore(emb_dim, vecs), out / "embeddings.vec")
    ranking = list(source_ids(fx.config.n_sources))
    (out / "ranking.toml").write_text("sources = [" + ", ".join(f'"{s}"' for s in ranking) + "]\n", encoding="utf-8")
    write_labeled_pairs(fx.pairs, out / "labels.csv")
    (out / "entities.json").write_text(json.dumps(fx.entity_of, sort_keys=True) + "\n", encoding="utf-8")
    cfg = asdict(fx.config)
    (out / "fixture.json").write_text(json.dumps(cfg, sort_keys=True, default=str, indent=1) + "\n", encoding="utf-8")
    pipeline = [
        f"seed = {fx.config.seed}",
        'out_dir = "out"',
        "",
        "[normalize]",
        'profiles_dir = "profiles"',
        'raw_dir = "raw"',
        "extraction_dates = { " + ", ".join(f'{s} = "{EXTRACTION_DATES.get(s, dt.date(2021, 3, 1)).isoformat()}"' for s in ranking) + " }",
        "",
        "[taxonomy]",
        'targets = "taxonomy.txt"',
        'embeddings = "embeddings.vec"',
        "threshold = 0.95",
        "",
        "[match]",
        'labels = "labels.csv"',
        'algorithm = "bagging"',
        "k = 10",
        "radius_m = 100.0",
        "",
        "[unify]",
        'ranking = "ranking.toml"',
    ]
    (out / "pipeline.toml").write_text("\n".join(pipeline) + "\n", encoding="utf-8")
    paths["pipeline"] = out / "pipeline.toml"

    # the same corpus behind file-backed paged sources, for the procure stage
    (out / "sources").mkdir(exist_ok=True)
    for src in fx.records:
        (out / "sources" / f"{src}.toml").write_text(f'source_id = "{src}"\npath = "../raw/{src}.ndjson"\n', encoding="utf-8")
    (out / "study_area.geojson").write_text(json.dumps(study_area(fx.pois)) + "\n", encoding="utf-8")
    procure = ["[procure]", 'area = "study_area.geojson"', 'tile = "250x250"', "min_dim_m = 25.0"]
    procure.append("sources = [" + ", ".join(f'"sources/{s}.toml"' for s in fx.records) + "]")
    text = "\n".join(pipeline).replace('raw_dir = "raw"\n', "")
    (out / "pipeline_procure.toml").write_text(text.replace('out_dir = "out"', 'out_dir = "out_procured"') + "\n\n" + "\n".join(procure) + "\n", encoding="utf-8")
    paths["pipeline_procure"] = out / "pipeline_procure.toml"
    return paths

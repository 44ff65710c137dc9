"""The global lookup core: domain registry, pointer index, query engine.

Local directories publish pointer summaries here; clients ask either a
JSON query tree (terms, prefixes, ranges, bool combinators, filtered
wrappers, geo boxes, wildcards) or a service-path pattern, and get back
the domains that can answer, with their directory endpoints.  The core
never serves full records; resolution always goes back to the owning
directory.

Filter caching follows the engine convention: term, prefix and range
filters are cached by default; geo filters, numeric ranges over loaded
field data (the coordinate fields), scripts, and the and/or/not
combinators are not.
"""

from __future__ import annotations

import json
import math
import threading
from bisect import bisect_left, bisect_right
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Union

TERM_FIELDS = ("instance", "service_path", "domain", "rt")
GEO_FIELDS = ("latitude", "longitude")


class DigcoveryError(Exception):
    pass


class DuplicateDomain(DigcoveryError):
    pass


class UnknownDomain(DigcoveryError):
    pass


class MalformedQuery(DigcoveryError):
    pass


class MalformedPattern(DigcoveryError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def distance_km(self, other: GeoPoint) -> float:
        """Equirectangular approximation; plenty for sorting nearby hits."""
        x = math.radians(other.lon - self.lon) * math.cos(math.radians((self.lat + other.lat) / 2))
        y = math.radians(other.lat - self.lat)
        return 6371.0 * math.hypot(x, y)


@dataclass(frozen=True)
class PointerSummary:
    """What a directory publishes per (instance, service path): enough to
    route a query, never the full record set."""

    instance: str
    service_path: str
    domain: str
    rt: str
    geo: GeoPoint | None = None
    revision: int = 0
    removed: bool = False

    def key(self) -> tuple[str, str, str]:
        return (self.domain, self.instance, self.service_path)

    def to_dict(self) -> dict:
        data = {
            "instance": self.instance,
            "service_path": self.service_path,
            "domain": self.domain,
            "rt": self.rt,
            "geo": {"lat": self.geo.lat, "lon": self.geo.lon} if self.geo else None,
            "revision": self.revision,
        }
        if self.removed:
            data["removed"] = True
        return data

    @classmethod
    def from_dict(cls, data: dict) -> PointerSummary:
        geo = data.get("geo")
        return cls(
            instance=data["instance"],
            service_path=data["service_path"],
            domain=data["domain"],
            rt=data.get("rt", ""),
            geo=GeoPoint(geo["lat"], geo["lon"]) if geo else None,
            revision=int(data.get("revision", 0)),
            removed=bool(data.get("removed", False)),
        )


@dataclass(frozen=True)
class DomainRecord:
    """One registered domain and where its directory listens."""

    domain: str
    host: str
    dns_port: int
    http_port: int = 0
    owner: str = ""
    created: float = 0.0


# --- query tree -----------------------------------------------------------------


class Query:
    """Base marker for query tree nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Term(Query):
    field: str
    value: str


@dataclass(frozen=True)
class Prefix(Query):
    field: str
    value: str


@dataclass(frozen=True)
class Range(Query):
    field: str
    from_: Union[str, float]
    to_: Union[str, float]
    include_from: bool = True
    include_to: bool = True

    def __post_init__(self) -> None:
        numeric = isinstance(self.from_, (int, float)) and isinstance(self.to_, (int, float))
        textual = isinstance(self.from_, str) and isinstance(self.to_, str)
        if not numeric and not textual:
            raise MalformedQuery("range bounds must be both numeric or both strings")
        if self.field in GEO_FIELDS and not numeric:
            raise MalformedQuery(f"range over {self.field} needs numeric bounds")
        if self.from_ > self.to_:
            raise MalformedQuery(f"range lower bound {self.from_!r} above upper bound {self.to_!r}")


@dataclass(frozen=True)
class Bool(Query):
    must: tuple[Query, ...] = ()
    should: tuple[Query, ...] = ()
    must_not: tuple[Query, ...] = ()

    def __post_init__(self) -> None:
        for name in ("must", "should", "must_not"):
            value = getattr(self, name)
            if not isinstance(value, tuple):
                object.__setattr__(self, name, tuple(value))


@dataclass(frozen=True)
class Filtered(Query):
    query: Query
    filter: Query


@dataclass(frozen=True)
class GeoRange(Query):
    lat_from: float
    lat_to: float
    lon_from: float
    lon_to: float

    def __post_init__(self) -> None:
        if self.lat_from > self.lat_to or self.lon_from > self.lon_to:
            raise MalformedQuery("geo box bounds inverted")


@dataclass(frozen=True)
class Wildcard(Query):
    pattern: str

    def __post_init__(self) -> None:
        _check_pattern(self.pattern)


def _check_pattern(pattern: str) -> list[str]:
    if not pattern:
        raise MalformedPattern("empty pattern")
    labels = pattern.split(".")
    if any(not label for label in labels):
        raise MalformedPattern(f"empty label in pattern {pattern!r}")
    return labels


def match_service_path(pattern: str, path: str) -> bool:
    """Label-wise pattern match over a dotted service path.

    ``*`` matches exactly one label; a trailing lone ``*`` matches one
    or more labels, so ``*.*`` covers every realistic service path.
    """
    p_labels = _check_pattern(pattern)
    s_labels = path.split(".")
    if p_labels[-1] == "*":
        head = p_labels[:-1]
        if len(s_labels) < len(head) + 1:
            return False
        pairs = zip(head, s_labels)
    else:
        if len(p_labels) != len(s_labels):
            return False
        pairs = zip(p_labels, s_labels)
    return all(p == "*" or p.lower() == s.lower() for p, s in pairs)


# --- cache ---------------------------------------------------------------------------


_CACHED_KINDS = {"term", "prefix", "range"}
_UNCACHED_KINDS = {"bool", "filtered", "geo_range", "wildcard", "script"}


def node_kind(node: Query) -> str:
    return {
        Term: "term",
        Prefix: "prefix",
        Range: "range",
        Bool: "bool",
        Filtered: "filtered",
        GeoRange: "geo_range",
        Wildcard: "wildcard",
    }[type(node)]


def cacheability(node: Query | str) -> bool:
    """Whether a node's result set may live in the filter cache.

    Terms, prefixes and index-backed ranges cache.  Geo boxes, numeric
    ranges over the coordinate fields (loaded field data), scripts,
    wildcards and the bool/filtered combinators do not.
    """
    if isinstance(node, str):
        kind = node
        if kind in _CACHED_KINDS:
            return True
        if kind in _UNCACHED_KINDS:
            return False
        raise MalformedQuery(f"unknown node kind {kind!r}")
    if isinstance(node, Range) and node.field in GEO_FIELDS:
        return False
    return cacheability(node_kind(node))


def canonical_key(node: Query) -> tuple:
    """Stable cache key: kind, field, normalized bounds."""
    if isinstance(node, Term):
        return ("term", node.field, node.value)
    if isinstance(node, Prefix):
        return ("prefix", node.field, node.value)
    if isinstance(node, Range):
        return ("range", node.field, repr(node.from_), repr(node.to_), node.include_from, node.include_to)
    raise MalformedQuery(f"{node_kind(node)} nodes have no cache key")


class FilterCache:
    """LRU map from canonical filter keys to posting sets."""

    def __init__(self, capacity: int = 1024) -> None:
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._entries: OrderedDict[tuple, frozenset[int]] = OrderedDict()
        self._hits: dict[tuple, int] = {}
        self._lock = threading.RLock()

    def get(self, key: tuple) -> frozenset[int] | None:
        with self._lock:
            if key not in self._entries:
                return None
            self._entries.move_to_end(key)
            self._hits[key] = self._hits.get(key, 0) + 1
            return self._entries[key]

    def put(self, key: tuple, ids: frozenset[int]) -> None:
        with self._lock:
            self._entries[key] = ids
            self._entries.move_to_end(key)
            while len(self._entries) > self.capacity:
                evicted, _ = self._entries.popitem(last=False)
                self._hits.pop(evicted, None)

    def invalidate_fields(self, fields: Iterable[str]) -> int:
        """Drop every entry whose key touches one of the fields."""
        targets = set(fields)
        with self._lock:
            doomed = [key for key in self._entries if key[1] in targets]
            for key in doomed:
                del self._entries[key]
                self._hits.pop(key, None)
            return len(doomed)

    def hit_count(self, key: tuple) -> int:
        return self._hits.get(key, 0)

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class ExecutionStats:
    """Per-execution cache events, in evaluation order."""

    events: list[tuple[tuple, bool]] = field(default_factory=list)

    def record(self, key: tuple, hit: bool) -> None:
        self.events.append((key, hit))

    @property
    def hits(self) -> int:
        return sum(1 for _, hit in self.events if hit)

    @property
    def misses(self) -> int:
        return sum(1 for _, hit in self.events if not hit)


# --- index snapshot --------------------------------------------------------------------


class _Snapshot:
    """Immutable inverted index over one generation of summaries."""

    def __init__(self, summaries: dict[int, PointerSummary], generation: int) -> None:
        self.generation = generation
        self.summaries = summaries
        self.universe = frozenset(summaries)
        self.postings: dict[str, dict[str, set[int]]] = {f: {} for f in TERM_FIELDS}
        for sid, s in summaries.items():
            for f in TERM_FIELDS:
                self.postings[f].setdefault(getattr(s, f), set()).add(sid)
        self.sorted_values = {f: sorted(vals) for f, vals in self.postings.items()}
        lat_pairs = sorted((s.geo.lat, sid) for sid, s in summaries.items() if s.geo)
        lon_pairs = sorted((s.geo.lon, sid) for sid, s in summaries.items() if s.geo)
        self.geo_axis = {
            "latitude": ([v for v, _ in lat_pairs], [i for _, i in lat_pairs]),
            "longitude": ([v for v, _ in lon_pairs], [i for _, i in lon_pairs]),
        }

    # -- node evaluation over the index --

    def _term(self, node: Term) -> frozenset[int]:
        if node.field in self.postings:
            return frozenset(self.postings[node.field].get(node.value, ()))
        return frozenset()

    def _prefix(self, node: Prefix) -> frozenset[int]:
        if node.field not in self.postings:
            return frozenset()
        keys = self.sorted_values[node.field]
        lo = bisect_left(keys, node.value)
        result: set[int] = set()
        for i in range(lo, len(keys)):
            if not keys[i].startswith(node.value):
                break
            result |= self.postings[node.field][keys[i]]
        return frozenset(result)

    def _range(self, node: Range) -> frozenset[int]:
        if node.field in GEO_FIELDS:
            values, ids = self.geo_axis[node.field]
            lo = bisect_left(values, node.from_) if node.include_from else bisect_right(values, node.from_)
            hi = bisect_right(values, node.to_) if node.include_to else bisect_left(values, node.to_)
            return frozenset(ids[lo:hi])
        if node.field not in self.postings:
            return frozenset()
        keys = self.sorted_values[node.field]
        lo = bisect_left(keys, node.from_) if node.include_from else bisect_right(keys, node.from_)
        hi = bisect_right(keys, node.to_) if node.include_to else bisect_left(keys, node.to_)
        result: set[int] = set()
        for key in keys[lo:hi]:
            result |= self.postings[node.field][key]
        return frozenset(result)

    def _geo_range(self, node: GeoRange) -> frozenset[int]:
        lat = self._range(Range("latitude", node.lat_from, node.lat_to))
        lon = self._range(Range("longitude", node.lon_from, node.lon_to))
        return lat & lon

    def _wildcard(self, node: Wildcard) -> frozenset[int]:
        result: set[int] = set()
        for path, ids in self.postings["service_path"].items():
            if match_service_path(node.pattern, path):
                result |= ids
        return frozenset(result)

    def evaluate(self, node: Query, cache: FilterCache | None = None, stats: ExecutionStats | None = None) -> frozenset[int]:
        if cache is not None and cacheability(node):
            key = canonical_key(node)
            cached = cache.get(key)
            if cached is not None:
                if stats is not None:
                    stats.record(key, True)
                return cached
            result = self._compute(node, cache, stats)
            cache.put(key, result)
            if stats is not None:
                stats.record(key, False)
            return result
        return self._compute(node, cache, stats)

    def _compute(self, node: Query, cache: FilterCache | None, stats: ExecutionStats | None) -> frozenset[int]:
        if isinstance(node, Term):
            return self._term(node)
        if isinstance(node, Prefix):
            return self._prefix(node)
        if isinstance(node, Range):
            return self._range(node)
        if isinstance(node, GeoRange):
            return self._geo_range(node)
        if isinstance(node, Wildcard):
            return self._wildcard(node)
        if isinstance(node, Bool):
            if node.must:
                result = self.universe
                for sub in node.must:
                    result = result & self.evaluate(sub, cache, stats)
            elif node.should:
                result = frozenset()
                for sub in node.should:
                    result = result | self.evaluate(sub, cache, stats)
            else:
                result = self.universe
            for sub in node.must_not:
                result = result - self.evaluate(sub, cache, stats)
            return result
        if isinstance(node, Filtered):
            return self.evaluate(node.query, cache, stats) & self.evaluate(node.filter, cache, stats)
        raise MalformedQuery(f"cannot evaluate {type(node).__name__}")


# --- the core -------------------------------------------------------------------------


@dataclass(frozen=True)
class QueryHit:
    domain: str
    instance: str
    service_path: str
    geo: GeoPoint | None

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "instance": self.instance,
            "service_path": self.service_path,
            "geo": {"lat": self.geo.lat, "lon": self.geo.lon} if self.geo else None,
        }


def sort_by_distance(hits: Iterable[QueryHit], origin: GeoPoint) -> list[QueryHit]:
    """Optional nearest-first ordering for hits that carry coordinates."""
    return sorted(hits, key=lambda h: origin.distance_km(h.geo) if h.geo else math.inf)


class Digcovery:
    """Domain registry plus pointer index; one writer, many readers.

    Queries run against an immutable snapshot that `ingest` swaps
    atomically, so executors never see a half-applied batch.
    """

    def __init__(self, cache_capacity: int = 1024) -> None:
        self._lock = threading.RLock()
        self._domains: dict[str, DomainRecord] = {}
        self._current: dict[tuple, PointerSummary] = {}
        self._graves: dict[tuple, int] = {}
        self._generation = 0
        self._snapshot = _Snapshot({}, 0)
        self.cache = FilterCache(cache_capacity)

    # -- domains --

    def register_domain(self, record: DomainRecord) -> None:
        with self._lock:
            key = record.domain.lower()
            if key in self._domains:
                raise DuplicateDomain(record.domain)
            self._domains[key] = record

    def domain(self, name: str) -> DomainRecord:
        try:
            return self._domains[name.lower()]
        except KeyError:
            raise UnknownDomain(name) from None

    def domains(self) -> list[DomainRecord]:
        return sorted(self._domains.values(), key=lambda d: d.domain)

    # -- ingest --

    def ingest(self, domain: str, summaries: Iterable[PointerSummary]) -> int:
        """Apply a pointer batch from one domain's directory.

        Revision replay is idempotent: a summary at or below the stored
        revision is ignored.  Removal markers drop the pointer.  Returns
        how many entries changed the index.
        """
        with self._lock:
            if domain.lower() not in self._domains:
                raise UnknownDomain(domain)
            accepted = 0
            touched_fields: set[str] = set()
            for summary in summaries:
                if summary.domain.lower() != domain.lower():
                    raise ValueError(f"summary for {summary.domain!r} in batch for {domain!r}")
                key = summary.key()
                stored = self._current.get(key)
                if summary.removed:
                    newer_than_stored = stored is None or summary.revision > stored.revision
                    if stored is not None and newer_than_stored:
                        del self._current[key]
                        accepted += 1
                        touched_fields.update(TERM_FIELDS)
                        if stored.geo:
                            touched_fields.update(GEO_FIELDS)
                    if newer_than_stored:
                        self._graves[key] = max(self._graves.get(key, -1), summary.revision)
                    continue
                if stored is not None and summary.revision <= stored.revision:
                    continue
                if stored is None and summary.revision <= self._graves.get(key, -1):
                    continue
                self._current[key] = summary
                accepted += 1
                touched_fields.update(TERM_FIELDS)
                if summary.geo or (stored is not None and stored.geo):
                    touched_fields.update(GEO_FIELDS)
            if accepted:
                self._generation += 1
                self._snapshot = _Snapshot(
                    dict(enumerate(self._current.values())), self._generation
                )
                self.cache.invalidate_fields(touched_fields)
            return accepted

    # -- queries --

    def _hits(self, snapshot: _Snapshot, ids: frozenset[int], offset: int, limit: int | None) -> list[QueryHit]:
        rows = sorted(
            (snapshot.summaries[i] for i in ids),
            key=lambda s: (s.domain, s.instance, s.service_path),
        )
        window = rows[offset : offset + limit if limit is not None else None]
        return [QueryHit(s.domain, s.instance, s.service_path, s.geo) for s in window]

    def execute(self, query: Query, *, offset: int = 0, limit: int | None = None) -> list[QueryHit]:
        """Run a query tree; deterministic (domain, instance, service path) order."""
        snapshot = self._snapshot
        return self._hits(snapshot, snapshot.evaluate(query), offset, limit)

    def execute_cached(
        self, query: Query, *, offset: int = 0, limit: int | None = None
    ) -> tuple[list[QueryHit], ExecutionStats]:
        """Same contract as `execute`, with the filter cache engaged."""
        snapshot = self._snapshot
        stats = ExecutionStats()
        ids = snapshot.evaluate(query, self.cache, stats)
        return self._hits(snapshot, ids, offset, limit), stats

    def discover(self, pattern: str) -> list[DomainRecord]:
        """Domains with at least one live pointer matching the path pattern."""
        _check_pattern(pattern)
        snapshot = self._snapshot
        ids = snapshot.evaluate(Wildcard(pattern))
        found = {snapshot.summaries[i].domain.lower() for i in ids}
        return [self._domains[d] for d in sorted(found) if d in self._domains]


# --- JSON query DSL ---------------------------------------------------------------------


def _parse_nodes(body) -> tuple[Query, ...]:
    if isinstance(body, dict):
        return (parse_query(body),)
    if isinstance(body, list):
        return tuple(parse_query(item) for item in body)
    raise MalformedQuery(f"expected a clause or clause list, got {body!r}")


def _coerce_bound(field_name: str, value) -> str | float:
    if field_name in GEO_FIELDS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise MalformedQuery(f"{field_name} bound must be numeric")
        return float(value)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return str(value)
    if isinstance(value, str):
        return value
    raise MalformedQuery(f"bad range bound {value!r}")


def parse_query(obj: Union[str, dict]) -> Query:
    """Build a query tree from its JSON form.

    Accepts the conventional shapes: ``{"query": {...}}`` wrapping,
    ``term``/``prefix``/``range`` leaves, ``bool`` with must/should/
    must_not, ``filtered`` with query+filter, ``geo_range``, and
    ``wildcard``.
    """
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as err:
            raise MalformedQuery(f"bad JSON: {err}") from None
    if not isinstance(obj, dict) or len(obj) != 1:
        raise MalformedQuery("a query node is a single-key object")
    kind, body = next(iter(obj.items()))
    if kind == "query":
        return parse_query(body)
    if kind in ("term", "prefix"):
        if not isinstance(body, dict) or len(body) != 1:
            raise MalformedQuery(f"{kind} wants a single field: value pair")
        fname, value = next(iter(body.items()))
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = str(value)
        if not isinstance(value, str):
            raise MalformedQuery(f"{kind} value must be a string")
        return Term(fname, value) if kind == "term" else Prefix(fname, value)
    if kind == "range":
        if not isinstance(body, dict) or len(body) != 1:
            raise MalformedQuery("range wants a single field")
        fname, bounds = next(iter(body.items()))
        if not isinstance(bounds, dict) or "from" not in bounds or "to" not in bounds:
            raise MalformedQuery("range wants from and to bounds")
        return Range(
            fname,
            _coerce_bound(fname, bounds["from"]),
            _coerce_bound(fname, bounds["to"]),
            include_from=bool(bounds.get("include_from", True)),
            include_to=bool(bounds.get("include_to", True)),
        )
    if kind == "bool":
        if not isinstance(body, dict):
            raise MalformedQuery("bool wants an object")
        unknown = set(body) - {"must", "should", "must_not"}
        if unknown:
            raise MalformedQuery(f"unknown bool clause {sorted(unknown)}")
        return Bool(
            must=_parse_nodes(body.get("must", [])),
            should=_parse_nodes(body.get("should", [])),
            must_not=_parse_nodes(body.get("must_not", [])),
        )
    if kind == "filtered":
        if not isinstance(body, dict):
            raise MalformedQuery("filtered wants an object")
        query = parse_query(body["query"]) if "query" in body else Bool()
        filter_ = parse_query(body["filter"]) if "filter" in body else Bool()
        return Filtered(query, filter_)
    if kind == "geo_range":
        if not isinstance(body, dict) or set(body) != {"latitude", "longitude"}:
            raise MalformedQuery("geo_range wants latitude and longitude bounds")
        lat, lon = body["latitude"], body["longitude"]
        try:
            return GeoRange(float(lat["from"]), float(lat["to"]), float(lon["from"]), float(lon["to"]))
        except (KeyError, TypeError, ValueError):
            raise MalformedQuery("geo_range bounds must be numeric from/to pairs") from None
    if kind == "wildcard":
        if isinstance(body, str):
            return Wildcard(body)
        if isinstance(body, dict) and len(body) == 1:
            (value,) = body.values()
            if isinstance(value, str):
                return Wildcard(value)
        raise MalformedQuery("wildcard wants a pattern string")
    raise MalformedQuery(f"unknown query kind {kind!r}")

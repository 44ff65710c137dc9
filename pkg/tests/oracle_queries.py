"""Brute-force query oracle and randomized corpus builders.

The oracle compiles a query tree into a per-summary predicate and scans
linearly.  It shares no evaluation code with the indexed engine: term
and prefix checks are string compares, wildcards become regexes, geo
checks read the coordinates directly.  Agreement between this scan and
the engine is what the equivalence tests assert.
"""

from __future__ import annotations

import random
import re
from typing import Callable, Optional

from digstack.digcovery import (
    Bool,
    Filtered,
    GeoPoint,
    GeoRange,
    PointerSummary,
    Prefix,
    Query,
    Range,
    Term,
    Wildcard,
)

Predicate = Callable[[PointerSummary], bool]

_TEXT_FIELDS = ("instance", "service_path", "domain", "rt")


def _field_value(summary: PointerSummary, field: str) -> Optional[str]:
    if field in _TEXT_FIELDS:
        return getattr(summary, field)
    return None


def _wildcard_regex(pattern: str) -> re.Pattern:
    labels = pattern.split(".")
    if labels[-1] == "*":
        parts = [re.escape(l) if l != "*" else r"[^.]+" for l in labels[:-1]]
        parts.append(r"[^.]+(?:\.[^.]+)*")
    else:
        parts = [re.escape(l) if l != "*" else r"[^.]+" for l in labels]
    return re.compile(r"\A" + r"\.".join(parts) + r"\Z", re.IGNORECASE)


def compile_oracle(node: Query) -> Predicate:
    """Compile a query tree into a closure over one summary."""
    if isinstance(node, Term):
        field, value = node.field, node.value
        return lambda s: _field_value(s, field) == value
    if isinstance(node, Prefix):
        field, value = node.field, node.value
        return lambda s: (v := _field_value(s, field)) is not None and v.startswith(value)
    if isinstance(node, Range):
        field = node.field
        if field in ("latitude", "longitude"):
            axis = (lambda s: s.geo.lat) if field == "latitude" else (lambda s: s.geo.lon)
            lo_ok = (lambda v: v >= node.from_) if node.include_from else (lambda v: v > node.from_)
            hi_ok = (lambda v: v <= node.to_) if node.include_to else (lambda v: v < node.to_)
            return lambda s: s.geo is not None and lo_ok(axis(s)) and hi_ok(axis(s))
        lo_ok = (lambda v: v >= node.from_) if node.include_from else (lambda v: v > node.from_)
        hi_ok = (lambda v: v <= node.to_) if node.include_to else (lambda v: v < node.to_)
        return lambda s: (v := _field_value(s, field)) is not None and lo_ok(v) and hi_ok(v)
    if isinstance(node, GeoRange):
        return lambda s: (
            s.geo is not None
            and node.lat_from <= s.geo.lat <= node.lat_to
            and node.lon_from <= s.geo.lon <= node.lon_to
        )
    if isinstance(node, Wildcard):
        rx = _wildcard_regex(node.pattern)
        return lambda s: rx.match(s.service_path) is not None
    if isinstance(node, Bool):
        musts = [compile_oracle(n) for n in node.must]
        shoulds = [compile_oracle(n) for n in node.should]
        must_nots = [compile_oracle(n) for n in node.must_not]

        def check(s: PointerSummary) -> bool:
            if musts:
                if not all(p(s) for p in musts):
                    return False
            elif shoulds:
                if not any(p(s) for p in shoulds):
                    return False
            return not any(p(s) for p in must_nots)

        return check
    if isinstance(node, Filtered):
        q = compile_oracle(node.query)
        f = compile_oracle(node.filter)
        return lambda s: q(s) and f(s)
    raise TypeError(f"no oracle for {type(node).__name__}")


def oracle_hits(summaries: list[PointerSummary], node: Query) -> list[tuple[str, str, str]]:
    """Linear scan; same key tuples and order the engine promises."""
    pred = compile_oracle(node)
    rows = [(s.domain, s.instance, s.service_path) for s in summaries if pred(s)]
    return sorted(rows)


# --- corpus and query generators --------------------------------------------------


SERVICE_PATHS = (
    "_lamp._sub._coap._udp",
    "_thermometer._sub._coap._udp",
    "_camera._sub._coap._udp",
    "_fan._coap._udp",
    "_printer._http._tcp",
)

RESOURCE_TYPES = ("light", "temperature-c", "video", "wind-speed", "printer")

WILDCARD_POOL = (
    "*.*",
    "*",
    "*._udp",
    "_lamp.*",
    "_lamp._sub._coap._udp",
    "*._sub.*",
    "_camera.*",
    "*.*.*.*",
    "_fan._coap._udp",
    "*._http._tcp",
)


def random_summaries(rng: random.Random, count: int, domains: tuple[str, ...]) -> list[PointerSummary]:
    """Unique-key corpus with a mix of geo-tagged and bare entries."""
    stems = ("light", "thermo", "cam", "fan", "plug", "printer")
    seen: dict[tuple, PointerSummary] = {}
    while len(seen) < count:
        instance = f"{rng.choice(stems)}_{rng.randrange(count * 2)}"
        summary = PointerSummary(
            instance=instance,
            service_path=rng.choice(SERVICE_PATHS),
            domain=rng.choice(domains),
            rt=rng.choice(RESOURCE_TYPES),
            geo=None
            if rng.random() < 0.3
            else GeoPoint(
                round(rng.uniform(37.990, 38.010), 6),
                round(rng.uniform(-1.150, -1.130), 6),
            ),
            revision=1,
        )
        seen.setdefault(summary.key(), summary)
    return list(seen.values())


def _corpus_value(rng: random.Random, summaries: list[PointerSummary], field: str) -> str:
    if rng.random() < 0.25:
        return rng.choice(("nothing-here", "zz", "_x", ""))
    s = rng.choice(summaries)
    value = _field_value(s, field) or ""
    if rng.random() < 0.4 and value:
        return value[: rng.randrange(1, len(value) + 1)]
    return value


def random_query(rng: random.Random, summaries: list[PointerSummary], depth: int = 0) -> Query:
    """Random tree over the given corpus, biased toward values that hit."""
    leaf_kinds = ("term", "prefix", "range", "geo_range", "wildcard", "georange_as_ranges")
    kinds = leaf_kinds if depth >= 2 else leaf_kinds + ("bool", "bool", "filtered")
    kind = rng.choice(kinds)
    if kind == "term":
        field = rng.choice(_TEXT_FIELDS)
        return Term(field, _corpus_value(rng, summaries, field))
    if kind == "prefix":
        field = rng.choice(_TEXT_FIELDS)
        return Prefix(field, _corpus_value(rng, summaries, field))
    if kind == "range":
        field = rng.choice(_TEXT_FIELDS)
        a = _corpus_value(rng, summaries, field)
        b = _corpus_value(rng, summaries, field)
        lo, hi = min(a, b), max(a, b)
        return Range(field, lo, hi, include_from=rng.random() < 0.8, include_to=rng.random() < 0.8)
    if kind == "georange_as_ranges":
        field = rng.choice(("latitude", "longitude"))
        span = (37.990, 38.010) if field == "latitude" else (-1.150, -1.130)
        a = round(rng.uniform(*span), 4)
        b = round(rng.uniform(*span), 4)
        return Range(field, min(a, b), max(a, b), include_from=rng.random() < 0.8, include_to=rng.random() < 0.8)
    if kind == "geo_range":
        lats = sorted(round(rng.uniform(37.990, 38.010), 4) for _ in range(2))
        lons = sorted(round(rng.uniform(-1.150, -1.130), 4) for _ in range(2))
        return GeoRange(lats[0], lats[1], lons[0], lons[1])
    if kind == "wildcard":
        return Wildcard(rng.choice(WILDCARD_POOL))
    if kind == "bool":
        must = tuple(random_query(rng, summaries, depth + 1) for _ in range(rng.randrange(0, 3)))
        should = tuple(random_query(rng, summaries, depth + 1) for _ in range(rng.randrange(0, 3)))
        must_not = tuple(random_query(rng, summaries, depth + 1) for _ in range(rng.randrange(0, 2)))
        return Bool(must=must, should=should, must_not=must_not)
    return Filtered(
        random_query(rng, summaries, depth + 1),
        random_query(rng, summaries, depth + 1),
    )

"""Spatial denial constraints and the cleaning configuration document.

A configuration is a flat key/value text document made of sections::

    [schema]
    id = id

    [constraint]
    type = range
    d_meters = 1000
    distance = haversine
    n = 2
    lat = lat
    lon = lon
    target = Borough

    [cleaning]
    min_prob = 0.05
    max_prob = 0.95
    formulator = factor
    seed = 0

``[constraint]`` may repeat; ``[schema]`` and ``[cleaning]`` appear at most once.
Blank lines and ``#`` comments are ignored. Unknown keys are errors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence, Union

DISTANCE_FUNCTIONS = ("haversine", "planar")
FORMULATORS = ("violation", "probability", "factor")


class ConfigError(ValueError):
    """Raised for malformed or out-of-range configuration documents."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class Role(str, Enum):
    LATITUDE = "latitude"
    LONGITUDE = "longitude"
    RECORD_ID = "record-id"
    DEPENDENT = "dependent"
    OTHER = "other"


@dataclass(frozen=True)
class ColumnRole:
    name: str
    role: Role


@dataclass(frozen=True)
class Range:
    d: float

    def __post_init__(self):
        if not (isinstance(self.d, (int, float)) and math.isfinite(self.d) and self.d > 0):
            raise ConfigError(f"d_meters must be > 0, got {self.d!r}", field="d_meters")


@dataclass(frozen=True)
class KNN:
    k: int

    def __post_init__(self):
        if isinstance(self.k, bool) or not isinstance(self.k, int) or self.k < 1:
            raise ConfigError(f"k must be an integer >= 1, got {self.k!r}", field="k")


Neighborhood = Union[Range, KNN]


@dataclass(frozen=True)
class SpatialConstraint:
    """``(lat, lon) -> target`` under a range or kNN neighborhood.

    Neighbors are weighted ``(1 - D / d) ** n``; ``n = 1`` is the linear
    weight and ``n = 0`` disables distance weighting.
    """

    neighborhood: Neighborhood
    target: str
    distance_fn: str = "haversine"
    n: float = 2.0
    lat: str = "lat"
    lon: str = "lon"

    def __post_init__(self):
        if not isinstance(self.neighborhood, (Range, KNN)):
            raise ConfigError("neighborhood must be Range or KNN", field="type")
        if self.distance_fn not in DISTANCE_FUNCTIONS:
            raise ConfigError(
                f"distance must be one of {DISTANCE_FUNCTIONS}, got {self.distance_fn!r}",
                field="distance",
            )
        if not (math.isfinite(self.n) and self.n >= 0):
            raise ConfigError(f"n must be >= 0, got {self.n!r}", field="n")
        if not self.target:
            raise ConfigError("target is required", field="target")


@dataclass(frozen=True)
class CleaningConfig:
    constraints: tuple[SpatialConstraint, ...]
    min_prob: float = 0.05
    max_prob: float = 0.95
    formulator: str = "factor"
    default_min_weight: float = 0.01
    minimality_pseudocount: float = 0.1
    rng_seed: int = 0
    id_col: str = "id"

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not self.constraints:
            raise ConfigError("at least one constraint required", field="constraint")
        for name in ("min_prob", "max_prob"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {v!r}", field=name)
        if not self.min_prob < self.max_prob:
            raise ConfigError("min_prob must be < max_prob", field="min_prob")
        if self.formulator not in FORMULATORS:
            raise ConfigError(
                f"formulator must be one of {FORMULATORS}, got {self.formulator!r}",
                field="formulator",
            )
        if not self.default_min_weight > 0:
            raise ConfigError("default_min_weight must be > 0", field="default_min_weight")
        if not 0 < self.minimality_pseudocount < 1:
            raise ConfigError(
                "minimality_pseudocount must lie in (0, 1)", field="minimality_pseudocount"
            )

    @property
    def targets(self) -> list[str]:
        seen: list[str] = []
        for c in self.constraints:
            if c.target not in seen:
                seen.append(c.target)
        return seen


# -- parsing -----------------------------------------------------------------

_CONSTRAINT_KEYS = {"type", "d_meters", "k", "distance", "n", "lat", "lon", "target"}
_CLEANING_KEYS = {
    "min_prob", "max_prob", "formulator", "seed",
    "default_min_weight", "minimality_pseudocount",
}
_SCHEMA_KEYS = {"id"}
_SECTIONS = {"constraint": _CONSTRAINT_KEYS, "cleaning": _CLEANING_KEYS, "schema": _SCHEMA_KEYS}


def _number(raw: str, key: str, line: int, *, integer: bool = False):
    try:
        if integer:
            return int(raw)
        value = float(raw)
    except ValueError:
        kind = "an integer" if integer else "a number"
        raise ConfigError(f"{key} must be {kind}, got {raw!r}", line, key) from None
    if not math.isfinite(value):
        raise ConfigError(f"{key} must be finite, got {raw!r}", line, key)
    return value


def _split_sections(text: str):
    sections: list[tuple[str, int, dict[str, tuple[str, int]]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            name = line[1:-1].strip()
            if name not in _SECTIONS:
                raise ConfigError(f"unknown section [{name}]", lineno, name)
            sections.append((name, lineno, {}))
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if not sections:
            raise ConfigError("key outside of any section", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        name, _, entries = sections[-1]
        if key not in _SECTIONS[name]:
            raise ConfigError(f"unknown field {key!r} in [{name}]", lineno, key)
        if key in entries:
            raise ConfigError(f"duplicate field {key!r}", lineno, key)
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno, key)
        entries[key] = (value, lineno)
    return sections


def _build_constraint(entries: Mapping[str, tuple[str, int]], header_line: int) -> SpatialConstraint:
    if "type" not in entries:
        raise ConfigError("constraint is missing 'type'", header_line, "type")
    kind, kind_line = entries["type"]
    if kind == "range":
        if "k" in entries:
            raise ConfigError("'k' is not valid for a range constraint", entries["k"][1], "k")
        if "d_meters" not in entries:
            raise ConfigError("range constraint requires 'd_meters'", header_line, "d_meters")
        raw, line = entries["d_meters"]
        try:
            hood: Neighborhood = Range(_number(raw, "d_meters", line))
        except ConfigError as exc:
            raise ConfigError(str(exc), line, "d_meters") from None
    elif kind == "knn":
        if "d_meters" in entries:
            raise ConfigError(
                "'d_meters' is not valid for a knn constraint", entries["d_meters"][1], "d_meters"
            )
        if "k" not in entries:
            raise ConfigError("knn constraint requires 'k'", header_line, "k")
        raw, line = entries["k"]
        try:
            hood = KNN(_number(raw, "k", line, integer=True))
        except ConfigError as exc:
            raise ConfigError(str(exc), line, "k") from None
    else:
        raise ConfigError(f"type must be 'range' or 'knn', got {kind!r}", kind_line, "type")

    if "target" not in entries:
        raise ConfigError("constraint is missing 'target'", header_line, "target")
    kwargs: dict = {"target": entries["target"][0]}
    for key in ("lat", "lon"):
        if key in entries:
            kwargs[key] = entries[key][0]
    if "distance" in entries:
        kwargs["distance_fn"] = entries["distance"][0]
    if "n" in entries:
        kwargs["n"] = _number(entries["n"][0], "n", entries["n"][1])
    try:
        return SpatialConstraint(hood, **kwargs)
    except ConfigError as exc:
        line = entries.get(exc.field or "", (None, header_line))[1]
        raise ConfigError(str(exc), line, exc.field) from None


def parse_config(text: str) -> CleaningConfig:
    """Parse and validate a configuration document."""
    sections = _split_sections(text)
    constraints = []
    cleaning: dict = {}
    id_col = "id"
    seen_once: set[str] = set()
    for name, header_line, entries in sections:
        if name == "constraint":
            constraints.append(_build_constraint(entries, header_line))
            continue
        if name in seen_once:
            raise ConfigError(f"section [{name}] given more than once", header_line, name)
        seen_once.add(name)
        if name == "schema":
            if "id" in entries:
                id_col = entries["id"][0]
            continue
        for key, (raw, line) in entries.items():
            if key == "formulator":
                cleaning[key] = raw
            elif key == "seed":
                cleaning["rng_seed"] = _number(raw, key, line, integer=True)
            else:
                cleaning[key] = _number(raw, key, line)
    if not constraints:
        raise ConfigError("at least one constraint required", field="constraint")
    try:
        return CleaningConfig(tuple(constraints), id_col=id_col, **cleaning)
    except ConfigError as exc:
        line = None
        for name, _, entries in sections:
            if name == "cleaning" and exc.field in entries:
                line = entries[exc.field][1]
        raise ConfigError(str(exc), line, exc.field) from None


def render_config(config: CleaningConfig) -> str:
    """Inverse of :func:`parse_config`."""
    out = ["[schema]", f"id = {config.id_col}", ""]
    for c in config.constraints:
        out.append("[constraint]")
        if isinstance(c.neighborhood, Range):
            out += ["type = range", f"d_meters = {float(c.neighborhood.d)!r}"]
        else:
            out += ["type = knn", f"k = {c.neighborhood.k}"]
        out += [
            f"distance = {c.distance_fn}",
            f"n = {float(c.n)!r}",
            f"lat = {c.lat}",
            f"lon = {c.lon}",
            f"target = {c.target}",
            "",
        ]
    out += [
        "[cleaning]",
        f"min_prob = {float(config.min_prob)!r}",
        f"max_prob = {float(config.max_prob)!r}",
        f"formulator = {config.formulator}",
        f"seed = {config.rng_seed}",
        f"default_min_weight = {float(config.default_min_weight)!r}",
        f"minimality_pseudocount = {float(config.minimality_pseudocount)!r}",
    ]
    return "\n".join(out) + "\n"


# -- schema validation ---------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" | "warning"
    message: str
    constraint: int | None = None
    column: str | None = None
    value: float | None = None

    def __str__(self):
        where = f"constraint {self.constraint}: " if self.constraint is not None else ""
        return f"{self.level}: {where}{self.message}"


@dataclass(frozen=True)
class DatasetStats:
    """Sizes needed for the kNN ceiling check: |D| and |A| per target column."""

    n_records: int
    distinct: Mapping[str, int] = field(default_factory=dict)


def schema_for(columns: Iterable[str], config: CleaningConfig) -> list[ColumnRole]:
    """Assign roles to ``columns`` as implied by ``config``."""
    lat = {c.lat for c in config.constraints}
    lon = {c.lon for c in config.constraints}
    targets = set(config.targets)
    roles = []
    for name in columns:
        if name == config.id_col:
            role = Role.RECORD_ID
        elif name in lat:
            role = Role.LATITUDE
        elif name in lon:
            role = Role.LONGITUDE
        elif name in targets:
            role = Role.DEPENDENT
        else:
            role = Role.OTHER
        roles.append(ColumnRole(name, role))
    return roles


def validate_against_schema(
    config: CleaningConfig,
    schema: Sequence[ColumnRole],
    stats: DatasetStats | None = None,
) -> list[Diagnostic]:
    """Check every constraint's columns against ``schema``.

    Never raises. Returns errors for missing or mis-typed columns and a
    warning whenever a kNN ``k`` exceeds ``|D| / |A|`` (requires ``stats``).
    """
    if not schema:
        raise ValueError("schema must be non-empty")
    diags: list[Diagnostic] = []
    by_name = {c.name: c.role for c in schema}
    for role in (Role.LATITUDE, Role.LONGITUDE, Role.RECORD_ID):
        count = sum(1 for c in schema if c.role is role)
        if count != 1:
            diags.append(Diagnostic("error", f"schema needs exactly one {role.value} column, found {count}"))

    expected = (("lat", Role.LATITUDE), ("lon", Role.LONGITUDE), ("target", Role.DEPENDENT))
    for i, c in enumerate(config.constraints):
        for attr, role in expected:
            col = getattr(c, attr)
            if col not in by_name:
                diags.append(Diagnostic("error", f"unknown column {col!r}", i, col))
            elif by_name[col] is not role:
                diags.append(
                    Diagnostic(
                        "error",
                        f"column {col!r} has role {by_name[col].value}, expected {role.value}",
                        i, col,
                    )
                )
        if isinstance(c.neighborhood, KNN) and stats is not None:
            distinct = stats.distinct.get(c.target, 0)
            if distinct > 0:
                ceiling = stats.n_records / distinct
                if c.neighborhood.k > ceiling:
                    diags.append(
                        Diagnostic(
                            "warning",
                            f"k={c.neighborhood.k} exceeds {ceiling:.2f} "
                            f"(|D|={stats.n_records} / |A|={distinct})",
                            i, c.target, ceiling,
                        )
                    )
    return diags

"""Edge feature construction.

A player-game pair is described by a d-dimensional vector whose entries are
cosine similarities between paired slices of the player and game node feature
vectors (attribute-wise aggregation). Optional passthrough columns copy raw
node attributes into the edge vector unchanged; the default schema uses pure
cosine groups.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError

Span = tuple[int, int]  # half-open [start, stop) index range


@dataclass(frozen=True)
class FeatureSchema:
    """Maps node feature vectors to edge feature entries.

    ``groups`` is an ordered list of (player span, game span) pairs; paired
    spans must have equal length. Entry k of the edge vector is the cosine
    similarity of the two slices. ``passthrough_u`` / ``passthrough_v`` name
    raw node columns appended after the cosine groups.
    """

    n_u: int
    n_v: int
    groups: tuple[tuple[Span, Span], ...]
    passthrough_u: tuple[int, ...] = field(default=())
    passthrough_v: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.n_u < 1 or self.n_v < 1:
            raise ConfigError("node feature lengths must be >= 1")
        if self.d < 1:
            raise ConfigError("schema must define at least one edge feature")
        for (us, ue), (vs, ve) in self.groups:
            if not (0 <= us < ue <= self.n_u):
                raise ConfigError(f"player span {(us, ue)} outside [0, {self.n_u})")
            if not (0 <= vs < ve <= self.n_v):
                raise ConfigError(f"game span {(vs, ve)} outside [0, {self.n_v})")
            if ue - us != ve - vs:
                raise ConfigError(f"paired spans {(us, ue)} / {(vs, ve)} differ in length")
        for j in self.passthrough_u:
            if not 0 <= j < self.n_u:
                raise ConfigError(f"passthrough player column {j} out of range")
        for j in self.passthrough_v:
            if not 0 <= j < self.n_v:
                raise ConfigError(f"passthrough game column {j} out of range")

    @property
    def d(self) -> int:
        return len(self.groups) + len(self.passthrough_u) + len(self.passthrough_v)


def tiled_schema(n_u: int, n_v: int, d: int) -> FeatureSchema:
    """Schema with d equal-length groups tiling both node vectors.

    Requires n_u and n_v to be divisible by d.
    """
    if n_u % d or n_v % d:
        raise ConfigError(f"cannot tile {n_u}/{n_v} features into {d} equal groups")
    gu, gv = n_u // d, n_v // d
    groups = tuple(
        (((k * gu, (k + 1) * gu), (k * gv, (k + 1) * gv))) for k in range(d)
    )
    return FeatureSchema(n_u=n_u, n_v=n_v, groups=groups)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors; 0 if either has zero norm."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"cosine needs equal-length vectors, got {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def edge_features(x_u: np.ndarray, x_v: np.ndarray, schema: FeatureSchema) -> np.ndarray:
    """Build the edge feature vector for one (player, game) pair."""
    x_u = np.asarray(x_u, dtype=float)
    x_v = np.asarray(x_v, dtype=float)
    if x_u.shape != (schema.n_u,):
        raise DimensionError(f"player features {x_u.shape} do not match schema n_u={schema.n_u}")
    if x_v.shape != (schema.n_v,):
        raise DimensionError(f"game features {x_v.shape} do not match schema n_v={schema.n_v}")
    out = np.empty(schema.d)
    for k, ((us, ue), (vs, ve)) in enumerate(schema.groups):
        out[k] = cosine_similarity(x_u[us:ue], x_v[vs:ve])
    base = len(schema.groups)
    for j, col in enumerate(schema.passthrough_u):
        out[base + j] = x_u[col]
    base += len(schema.passthrough_u)
    for j, col in enumerate(schema.passthrough_v):
        out[base + j] = x_v[col]
    return out


def edge_features_batch(xu: np.ndarray, xv: np.ndarray, schema: FeatureSchema) -> np.ndarray:
    """Vectorized edge_features over row-aligned feature matrices.

    ``xu`` is (n, n_u), ``xv`` is (n, n_v); returns (n, d).
    """
    xu = np.asarray(xu, dtype=float)
    xv = np.asarray(xv, dtype=float)
    if xu.ndim != 2 or xv.ndim != 2 or xu.shape[0] != xv.shape[0]:
        raise DimensionError("batch inputs must be row-aligned 2-D arrays")
    if xu.shape[1] != schema.n_u or xv.shape[1] != schema.n_v:
        raise DimensionError("batch feature widths do not match schema")
    n = xu.shape[0]
    out = np.empty((n, schema.d))
    for k, ((us, ue), (vs, ve)) in enumerate(schema.groups):
        a = xu[:, us:ue]
        b = xv[:, vs:ve]
        dots = np.einsum("ij,ij->i", a, b)
        norms = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where(norms > 0.0, dots / np.where(norms > 0.0, norms, 1.0), 0.0)
        out[:, k] = np.clip(c, -1.0, 1.0)
    base = len(schema.groups)
    for j, col in enumerate(schema.passthrough_u):
        out[:, base + j] = xu[:, col]
    base += len(schema.passthrough_u)
    for j, col in enumerate(schema.passthrough_v):
        out[:, base + j] = xv[:, col]
    return out


def parse_span(text: str) -> Span:
    start, _, stop = text.partition(":")
    try:
        return int(start), int(stop)
    except ValueError as exc:
        raise ConfigError(f"bad span {text!r}, expected start:stop") from exc


def schema_from_config(section: dict[str, str]) -> FeatureSchema:
    """Build a schema from a config-file section.

    Expected keys: ``n_u``, ``n_v``, ``groups`` (whitespace-separated items of
    the form ``u0:u1|v0:v1``), optional ``passthrough_u`` / ``passthrough_v``
    (whitespace-separated column indices).
    """
    try:
        n_u = int(section["n_u"])
        n_v = int(section["n_v"])
        raw_groups = section["groups"].split()
    except KeyError as exc:
        raise ConfigError(f"[features] section missing key {exc}") from exc
    groups = []
    for item in raw_groups:
        u_part, sep, v_part = item.partition("|")
        if not sep:
            raise ConfigError(f"bad group {item!r}, expected u0:u1|v0:v1")
        groups.append((parse_span(u_part), parse_span(v_part)))
    pu = tuple(int(x) for x in section.get("passthrough_u", "").split())
    pv = tuple(int(x) for x in section.get("passthrough_v", "").split())
    return FeatureSchema(n_u=n_u, n_v=n_v, groups=tuple(groups),
                         passthrough_u=pu, passthrough_v=pv)


def schema_to_config(schema: FeatureSchema) -> dict[str, str]:
    """Inverse of schema_from_config."""
    groups = " ".join(
        f"{us}:{ue}|{vs}:{ve}" for (us, ue), (vs, ve) in schema.groups
    )
    out = {"n_u": str(schema.n_u), "n_v": str(schema.n_v), "groups": groups}
    if schema.passthrough_u:
        out["passthrough_u"] = " ".join(str(j) for j in schema.passthrough_u)
    if schema.passthrough_v:
        out["passthrough_v"] = " ".join(str(j) for j in schema.passthrough_v)
    return out

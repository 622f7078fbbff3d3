"""Sparse longitudinal data containers, CSV ingestion and evaluation grids."""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DomainError, EmptyDatasetError, ParseError, SchemaError

DEFAULT_GRID_SIZE = 51
DEFAULT_COLUMNS = {"id": "id", "time": "time", "value": "value", "response": "y"}


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SubjectRecord:
    id: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        values = np.asarray(self.values, dtype=float).ravel()
        if times.shape != values.shape:
            raise ValueError(f"subject {self.id!r}: times and values differ in length")
        if times.size == 0:
            raise ValueError(f"subject {self.id!r} has no observations")
        order = np.argsort(times, kind="stable")
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "times", _frozen(times[order]))
        object.__setattr__(self, "values", _frozen(values[order]))

    @property
    def n_obs(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class SparseFunctionalDataset:
    """Irregularly sampled noisy trajectories on a common interval.

    ``rescaled_from`` records the original interval after
    :func:`rescale_domain` so the map can be inverted.
    """

    subjects: tuple
    domain: tuple
    responses: Optional[Mapping[str, float]] = None
    rescaled_from: Optional[tuple] = None

    def __post_init__(self):
        subjects = tuple(self.subjects)
        a, b = (float(v) for v in self.domain)
        if not a <= b:
            raise DomainError(f"invalid domain [{a}, {b}]")
        ids = [s.id for s in subjects]
        if len(set(ids)) != len(ids):
            raise ValueError("subject ids must be unique")
        tol = 1e-12 * max(1.0, abs(a), abs(b))
        for s in subjects:
            if s.times[0] < a - tol or s.times[-1] > b + tol:
                raise DomainError(f"subject {s.id!r} has times outside [{a}, {b}]")
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "domain", (a, b))
        if self.responses is not None:
            object.__setattr__(self, "responses", {str(k): float(v) for k, v in self.responses.items()})

    def __len__(self):
        return len(self.subjects)

    def __iter__(self):
        return iter(self.subjects)

    @property
    def ids(self):
        return [s.id for s in self.subjects]

    def counts(self) -> np.ndarray:
        return np.array([s.n_obs for s in self.subjects], dtype=int)

    def pooled(self):
        """All (times, values, subject index) triples concatenated."""
        if not self.subjects:
            return np.empty(0), np.empty(0), np.empty(0, dtype=int)
        t = np.concatenate([s.times for s in self.subjects])
        x = np.concatenate([s.values for s in self.subjects])
        idx = np.repeat(np.arange(len(self.subjects)), self.counts())
        return t, x, idx

    def response_vector(self, ids=None) -> np.ndarray:
        """Responses in subject order; ``nan`` where missing."""
        if self.responses is None:
            raise ValueError("dataset carries no responses")
        ids = self.ids if ids is None else ids
        return np.array([self.responses.get(i, np.nan) for i in ids], dtype=float)

    def subject(self, sid):
        for s in self.subjects:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def with_responses(self, responses):
        return SparseFunctionalDataset(self.subjects, self.domain, responses, self.rescaled_from)


@dataclass(frozen=True)
class Grid:
    points: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if pts.size < 2:
            raise ValueError("a grid needs at least 2 points")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        w = trapezoid_weights(pts) if self.weights is None else np.asarray(self.weights, dtype=float).ravel()
        if w.shape != pts.shape or np.any(w <= 0):
            raise ValueError("quadrature weights must be positive, one per point")
        span = pts[-1] - pts[0]
        if abs(w.sum() - span) > 1e-10 * span:
            raise ValueError("quadrature weights must sum to the domain length")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def uniform(cls, a, b, size=DEFAULT_GRID_SIZE):
        return cls(np.linspace(a, b, int(size)))

    @property
    def domain(self):
        return float(self.points[0]), float(self.points[-1])

    def __len__(self):
        return self.points.size

    def integrate(self, values, axis=-1):
        return np.tensordot(np.asarray(values, dtype=float), self.weights, axes=([axis], [0]))

    def inner(self, f, g):
        return float(np.sum(self.weights * np.asarray(f) * np.asarray(g)))

    def same_as(self, other) -> bool:
        return (
            self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )


def trapezoid_weights(points):
    pts = np.asarray(points, dtype=float)
    d = np.diff(pts)
    w = np.zeros_like(pts)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


def _read_schema(schema):
    if schema is None:
        return {}
    if isinstance(schema, (str, Path)):
        with open(schema, encoding="utf-8") as fh:
            schema = json.load(fh)
    return dict(schema)


def load_csv(path, schema=None) -> SparseFunctionalDataset:
    """Read ``id,time,value[,y]`` rows into a dataset.

    Parameters
    ----------
    path : path-like
        UTF-8 CSV with a header row.
    schema : mapping or path to a JSON file, optional
        Column renames under ``id``, ``time``, ``value``, ``response`` and an
        optional ``domain`` ``[a, b]`` overriding the observed time range.
    """
    schema = _read_schema(schema)
    cols = {**DEFAULT_COLUMNS, **{k: v for k, v in schema.items() if k in DEFAULT_COLUMNS}}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise EmptyDatasetError(f"{path}: empty file")
        header = [h.strip() for h in header]
        reader.fieldnames = header
        for key in ("id", "time", "value"):
            if cols[key] not in header:
                raise SchemaError(f"{path}: missing column {cols[key]!r} (for {key})")
        has_y = cols["response"] in header

        groups = {}
        responses = {}
        for row_no, row in enumerate(reader, start=1):
            sid = (row[cols["id"]] or "").strip()
            if not sid:
                raise ParseError(f"{path}: row {row_no}: empty subject id")
            try:
                t = float(row[cols["time"]])
                x = float(row[cols["value"]])
            except (TypeError, ValueError):
                raise ParseError(
                    f"{path}: row {row_no}: non-numeric time/value "
                    f"({row[cols['time']]!r}, {row[cols['value']]!r})"
                ) from None
            if not (math.isfinite(t) and math.isfinite(x)):
                raise ParseError(f"{path}: row {row_no}: non-finite time/value")
            groups.setdefault(sid, ([], []))
            groups[sid][0].append(t)
            groups[sid][1].append(x)
            if has_y:
                cell = (row[cols["response"]] or "").strip()
                if cell:
                    try:
                        yv = float(cell)
                    except ValueError:
                        raise ParseError(f"{path}: row {row_no}: non-numeric response {cell!r}") from None
                    if sid in responses and responses[sid] != yv:
                        raise ParseError(f"{path}: row {row_no}: conflicting responses for subject {sid!r}")
                    responses[sid] = yv
    if not groups:
        raise EmptyDatasetError(f"{path}: no data rows")
    subjects = [SubjectRecord(sid, t, x) for sid, (t, x) in groups.items()]
    if "domain" in schema:
        domain = tuple(float(v) for v in schema["domain"])
    else:
        all_t = np.concatenate([s.times for s in subjects])
        domain = (float(all_t.min()), float(all_t.max()))
    return SparseFunctionalDataset(subjects, domain, responses if has_y else None)


def write_csv(dataset: SparseFunctionalDataset, path) -> None:
    """Inverse of :func:`load_csv` with default column names."""
    has_y = dataset.responses is not None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "time", "value"] + (["y"] if has_y else []))
        for s in dataset.subjects:
            y = dataset.responses.get(s.id) if has_y else None
            for t, x in zip(s.times, s.values):
                row = [s.id, repr(float(t)), repr(float(x))]
                if has_y:
                    row.append("" if y is None else repr(float(y)))
                w.writerow(row)


def rescale_domain(dataset: SparseFunctionalDataset, target=(0.0, 1.0)) -> SparseFunctionalDataset:
    """Affinely map all times onto ``target``; values are untouched.

    The source interval is kept in ``rescaled_from``;
    :func:`restore_domain` undoes the map.
    """
    a, b = dataset.domain
    c, d = (float(v) for v in target)
    if not a < b:
        raise DomainError(f"cannot rescale a degenerate domain [{a}, {b}]")
    if not c < d:
        raise DomainError(f"degenerate target interval [{c}, {d}]")
    if (a, b) == (c, d):
        return dataset
    scale = (d - c) / (b - a)
    subjects = [
        SubjectRecord(s.id, np.clip(c + (s.times - a) * scale, c, d), s.values) for s in dataset.subjects
    ]
    origin = dataset.rescaled_from if dataset.rescaled_from is not None else (a, b)
    return SparseFunctionalDataset(subjects, (c, d), dataset.responses, origin)


def restore_domain(dataset: SparseFunctionalDataset) -> SparseFunctionalDataset:
    if dataset.rescaled_from is None:
        return dataset
    a, b = dataset.rescaled_from
    out = rescale_domain(SparseFunctionalDataset(dataset.subjects, dataset.domain, dataset.responses), (a, b))
    return SparseFunctionalDataset(out.subjects, out.domain, out.responses, None)


def map_times(times, source: Sequence[float], target: Sequence[float]) -> np.ndarray:
    a, b = source
    c, d = target
    return c + (np.asarray(times, dtype=float) - a) * (d - c) / (b - a)

"""Track, annotation, and model-bank file handling.

Tracks are line-oriented CSV ``frame,person,x,y,w,h`` with ``#`` comments.
Annotations are JSON records, one per line.  Model banks are versioned JSON
documents whose floats round-trip exactly.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .taxonomy import SINGLE, SYMMETRIC, Taxonomy, TaxonomyError, default_taxonomy

MODEL_FORMAT_VERSION = 1


class ParseError(ValueError):
    """Malformed input data; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class MbbSample:
    """One minimum-bounding-box observation of a person at a frame."""

    frame: int
    person: int
    x: float
    y: float
    w: float
    h: float


class TrackSet:
    """Per-person box samples, sorted by frame, with explicit gaps.

    Immutable after construction; lookups by (person, frame) are O(1).
    """

    def __init__(self, samples: Iterable[MbbSample], warnings: Iterable[str] = ()):
        by_person: dict[int, list[MbbSample]] = {}
        for s in samples:
            if s.frame < 0:
                raise ParseError(f"negative frame {s.frame}")
            if s.w <= 0 or s.h <= 0:
                raise ParseError(f"non-positive box for person {s.person} at frame {s.frame}")
            by_person.setdefault(s.person, []).append(s)
        self._index: dict[int, dict[int, MbbSample]] = {}
        self._arrays: dict[int, dict[str, np.ndarray]] = {}
        for person, rows in by_person.items():
            rows.sort(key=lambda s: s.frame)
            frames = {}
            for s in rows:
                if s.frame in frames:
                    raise ParseError(f"duplicate sample for person {person} at frame {s.frame}")
                frames[s.frame] = s
            self._index[person] = frames
        self._persons = tuple(sorted(self._index))
        self.warnings = tuple(warnings)
        all_frames = [f for idx in self._index.values() for f in idx]
        self._frame_range = (min(all_frames), max(all_frames)) if all_frames else None

    @property
    def persons(self) -> tuple[int, ...]:
        return self._persons

    @property
    def frame_range(self) -> tuple[int, int] | None:
        return self._frame_range

    def __len__(self) -> int:
        return sum(len(v) for v in self._index.values())

    def sample(self, person: int, frame: int) -> MbbSample | None:
        return self._index.get(person, {}).get(frame)

    def has(self, person: int, frame: int) -> bool:
        return frame in self._index.get(person, {})

    def observable(self, person: int, frame: int) -> bool:
        """True when features at ``frame`` exist (sample here and one frame back)."""
        return self.has(person, frame) and self.has(person, frame - 1)

    def persons_at(self, frame: int) -> tuple[int, ...]:
        return tuple(p for p in self._persons if self.has(p, frame))

    def observable_persons(self, frame: int) -> tuple[int, ...]:
        return tuple(p for p in self._persons if self.observable(p, frame))

    def person_arrays(self, person: int) -> dict[str, np.ndarray]:
        """Dense per-frame arrays over the set frame range with a validity mask."""
        if person in self._arrays:
            return self._arrays[person]
        if self._frame_range is None or person not in self._index:
            raise KeyError(f"unknown person {person}")
        t0, t1 = self._frame_range
        n = t1 - t0 + 1
        out = {k: np.zeros(n) for k in ("x", "y", "w", "h")}
        valid = np.zeros(n, dtype=bool)
        for f, s in self._index[person].items():
            i = f - t0
            out["x"][i], out["y"][i], out["w"][i], out["h"][i] = s.x, s.y, s.w, s.h
            valid[i] = True
        out["valid"] = valid
        out["t0"] = t0  # type: ignore[assignment]
        self._arrays[person] = out
        return out

    def iter_samples(self) -> Iterator[MbbSample]:
        for person in self._persons:
            for frame in sorted(self._index[person]):
                yield self._index[person][frame]


def _lines(text) -> Iterator[tuple[int, str]]:
    if isinstance(text, str):
        stream: Iterable[str] = io.StringIO(text)
    else:
        stream = text
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def parse_tracks(text, strict: bool = True) -> TrackSet:
    """Parse ``frame,person,x,y,w,h`` lines into a validated TrackSet.

    Strict mode raises on the first malformed line; lenient mode skips bad
    lines and reports them in ``TrackSet.warnings``.
    """
    samples: list[MbbSample] = []
    seen: set[tuple[int, int]] = set()
    warnings: list[str] = []

    def fail(msg: str, lineno: int) -> None:
        if strict:
            raise ParseError(msg, line=lineno)
        warnings.append(f"line {lineno}: {msg}")

    for lineno, line in _lines(text):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 6:
            fail(f"expected 6 fields, got {len(parts)}", lineno)
            continue
        try:
            frame = int(parts[0])
            person = int(parts[1])
            x, y, w, h = (float(v) for v in parts[2:])
        except ValueError:
            fail(f"malformed numeric field in {line!r}", lineno)
            continue
        if frame < 0:
            fail(f"negative frame {frame}", lineno)
            continue
        if not all(math.isfinite(v) for v in (x, y, w, h)):
            fail("non-finite coordinate", lineno)
            continue
        if w <= 0 or h <= 0:
            fail(f"non-positive box ({w} x {h}) for person {person} at frame {frame}", lineno)
            continue
        if (frame, person) in seen:
            fail(f"duplicate sample for person {person} at frame {frame}", lineno)
            continue
        seen.add((frame, person))
        samples.append(MbbSample(frame, person, x, y, w, h))
    return TrackSet(samples, warnings=warnings)


def write_tracks(tracks: TrackSet, fp) -> None:
    for s in sorted(tracks.iter_samples(), key=lambda s: (s.frame, s.person)):
        fp.write(f"{s.frame},{s.person},{s.x!r},{s.y!r},{s.w!r},{s.h!r}\n")


@dataclass(frozen=True)
class AnnotationRecord:
    """One labelled interval: a symmetric group or an inter-group relation."""

    kind: str  # "sym" | "asym"
    label: str
    start: int
    end: int
    members: tuple[int, ...] | None = None
    groups: tuple[str, str] | None = None
    group_id: str | None = None

    def active_at(self, frame: int) -> bool:
        return self.start <= frame <= self.end


class AnnotationSet:
    """Validated collection of annotation records."""

    def __init__(self, records: Iterable[AnnotationRecord], taxonomy: Taxonomy | None = None):
        self.taxonomy = taxonomy or default_taxonomy()
        recs = tuple(records)
        declared: set[str] = set()
        for i, r in enumerate(recs):
            where = f"record {i}"
            self.taxonomy.validate_label(r.label)
            if r.kind == "sym":
                if not r.members:
                    raise ParseError(f"{where}: symmetric record needs members")
                if r.group_id is not None:
                    declared.add(r.group_id)
            elif r.kind == "asym":
                if not r.groups or len(r.groups) != 2:
                    raise ParseError(f"{where}: asymmetric record needs exactly two groups")
                for g in r.groups:
                    if g not in declared:
                        raise ParseError(f"{where}: reference to undeclared group {g!r}")
            else:
                raise ParseError(f"{where}: unknown record kind {r.kind!r}")
            if r.end < r.start:
                raise ParseError(f"{where}: empty interval [{r.start}, {r.end}]")
        self.records = recs

    def __len__(self) -> int:
        return len(self.records)

    def sym_records(self) -> tuple[AnnotationRecord, ...]:
        return tuple(r for r in self.records if r.kind == "sym")

    def asym_records(self) -> tuple[AnnotationRecord, ...]:
        return tuple(r for r in self.records if r.kind == "asym")

    def group_members(self, group_id: str, frame: int) -> tuple[int, ...] | None:
        for r in self.records:
            if r.kind == "sym" and r.group_id == group_id and r.active_at(frame):
                return r.members
        return None

    def frame_range(self) -> tuple[int, int] | None:
        if not self.records:
            return None
        return (min(r.start for r in self.records), max(r.end for r in self.records))


def parse_annotations(text, taxonomy: Taxonomy | None = None) -> AnnotationSet:
    """Parse one-JSON-record-per-line annotations.

    Record fields: ``kind`` (sym|asym), ``label``, ``frames`` ([start, end],
    inclusive), and ``members``+``group_id`` (sym) or ``groups`` (asym).
    """
    records = []
    for lineno, line in _lines(text):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", line=lineno) from None
        try:
            kind = obj["kind"]
            label = obj["label"]
            start, end = (int(v) for v in obj["frames"])
            members = tuple(int(m) for m in obj["members"]) if "members" in obj else None
            groups = tuple(obj["groups"]) if "groups" in obj else None
            group_id = obj.get("group_id")
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad record structure: {exc}", line=lineno) from None
        records.append(
            AnnotationRecord(
                kind=kind, label=label, start=start, end=end,
                members=members, groups=groups, group_id=group_id,
            )
        )
    try:
        return AnnotationSet(records, taxonomy=taxonomy)
    except TaxonomyError as exc:
        raise ParseError(str(exc)) from None


def write_annotations(annotations: AnnotationSet, fp) -> None:
    for r in annotations.records:
        obj: dict = {"kind": r.kind, "label": r.label, "frames": [r.start, r.end]}
        if r.members is not None:
            obj["members"] = list(r.members)
        if r.group_id is not None:
            obj["group_id"] = r.group_id
        if r.groups is not None:
            obj["groups"] = list(r.groups)
        fp.write(json.dumps(obj) + "\n")


def save_model(bank, fp) -> None:
    """Serialise a model bank as versioned JSON with exact float round-trip."""
    from .seqmodel import bank_to_payload

    doc = {"format_version": MODEL_FORMAT_VERSION, "bank": bank_to_payload(bank)}
    json.dump(doc, fp, allow_nan=False, indent=1)
    fp.write("\n")


def load_model(fp):
    """Load a model bank, rejecting unknown versions and corrupt numerics."""
    from .seqmodel import bank_from_payload

    try:
        doc = json.load(fp)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"unparseable model file: {exc}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFormatError("missing format_version")
    version = doc["format_version"]
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {version!r} (expected {MODEL_FORMAT_VERSION})"
        )
    try:
        return bank_from_payload(doc["bank"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"corrupt model file: {exc}") from None

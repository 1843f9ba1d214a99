"""Manifest records and the in-memory dataset model.

A dataset is a flat list of face records, each naming its putative subject
(folder) and a row in a sidecar embedding file. Manifests are JSON lines,
one record per line, UTF-8; embeddings live in the EMB1 binary format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

VALID_GENDERS = ("Male", "Female")
VALID_RACES = ("Caucasian", "EastAsian", "African", "Others")
VALID_SCENARIOS = ("Controlled", "Wild")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Attributes:
    age: int
    gender: str
    race: str
    scenario: str

    def validate(self, face_id: str) -> None:
        if self.age < 0:
            raise ManifestError(f"face {face_id}: negative age {self.age}")
        if self.gender not in VALID_GENDERS:
            raise ManifestError(f"face {face_id}: unknown gender {self.gender!r}")
        if self.race not in VALID_RACES:
            raise ManifestError(f"face {face_id}: unknown race {self.race!r}")
        if self.scenario not in VALID_SCENARIOS:
            raise ManifestError(f"face {face_id}: unknown scenario {self.scenario!r}")

    def to_dict(self) -> dict:
        return {
            "age": self.age,
            "gender": self.gender,
            "race": self.race,
            "scenario": self.scenario,
        }


@dataclass(frozen=True)
class FaceRecord:
    face_id: str
    subject_id: str
    embedding_row: int
    attributes: Attributes | None = None


class Dataset:
    """Immutable-by-convention collection of face records."""

    def __init__(self, records: Iterable[FaceRecord]):
        self.records = list(records)
        seen = set()
        for rec in self.records:
            if rec.face_id in seen:
                raise ManifestError(f"duplicate face_id {rec.face_id!r}")
            seen.add(rec.face_id)
        self._by_subject: dict[str, list[FaceRecord]] | None = None

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        key = lambda r: r.face_id
        return sorted(self.records, key=key) == sorted(other.records, key=key)

    @property
    def by_subject(self) -> dict[str, list[FaceRecord]]:
        """Records grouped by subject, subjects and members sorted by id."""
        if self._by_subject is None:
            groups: dict[str, list[FaceRecord]] = {}
            for rec in self.records:
                groups.setdefault(rec.subject_id, []).append(rec)
            self._by_subject = {
                sid: sorted(groups[sid], key=lambda r: r.face_id)
                for sid in sorted(groups)
            }
        return self._by_subject

    @property
    def face_count(self) -> int:
        return len(self.records)

    @property
    def subject_count(self) -> int:
        return len(self.by_subject)

    def face_ids(self) -> list[str]:
        return [rec.face_id for rec in self.records]

    def row_of(self) -> dict[str, int]:
        return {rec.face_id: rec.embedding_row for rec in self.records}

    def record_of(self) -> dict[str, FaceRecord]:
        return {rec.face_id: rec for rec in self.records}

    def restrict(self, keep_faces: set[str]) -> "Dataset":
        return Dataset([r for r in self.records if r.face_id in keep_faces])

    def reassign_subjects(self, new_subject: dict[str, str]) -> "Dataset":
        """Remap subject ids (face_id -> new subject); faces absent from the
        map keep their subject, faces mapped to None are dropped."""
        out = []
        for rec in self.records:
            sid = new_subject.get(rec.face_id, rec.subject_id)
            if sid is None:
                continue
            out.append(
                FaceRecord(rec.face_id, sid, rec.embedding_row, rec.attributes)
            )
        return Dataset(out)


def _record_from_obj(obj: dict, lineno: int) -> FaceRecord:
    try:
        face_id = obj["face_id"]
        subject_id = obj["subject_id"]
        row = obj["embedding_row"]
    except KeyError as exc:
        raise ManifestError(f"line {lineno}: missing field {exc.args[0]!r}") from None
    if not isinstance(face_id, str) or not isinstance(subject_id, str):
        raise ManifestError(f"line {lineno}: face_id and subject_id must be strings")
    if not isinstance(row, int) or row < 0:
        raise ManifestError(f"line {lineno}: bad embedding_row {row!r}")
    attrs = None
    if obj.get("attributes") is not None:
        a = obj["attributes"]
        try:
            attrs = Attributes(
                age=int(a["age"]),
                gender=a["gender"],
                race=a["race"],
                scenario=a["scenario"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"line {lineno}: bad attributes ({exc})") from None
        attrs.validate(face_id)
    return FaceRecord(face_id, subject_id, row, attrs)


def read_manifest(path, embedding_count: int | None = None) -> Dataset:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise ManifestError(f"line {lineno}: expected an object")
            records.append(_record_from_obj(obj, lineno))
    ds = Dataset(records)
    if embedding_count is not None:
        for rec in ds.records:
            if rec.embedding_row >= embedding_count:
                raise ManifestError(
                    f"face {rec.face_id}: embedding_row {rec.embedding_row} out of "
                    f"bounds (file has {embedding_count} rows)"
                )
    return ds


def write_manifest(dataset: Dataset, path) -> None:
    """Write records in canonical (subject_id, face_id) order."""
    ordered = sorted(dataset.records, key=lambda r: (r.subject_id, r.face_id))
    with open(path, "w", encoding="utf-8") as fh:
        for rec in ordered:
            obj = {
                "face_id": rec.face_id,
                "subject_id": rec.subject_id,
                "embedding_row": rec.embedding_row,
            }
            if rec.attributes is not None:
                obj["attributes"] = rec.attributes.to_dict()
            fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")

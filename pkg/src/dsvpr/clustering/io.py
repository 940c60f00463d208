"""Manifest CSV ingestion and partition JSON serialization."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

from dsvpr.clustering.pipeline import DIRECTIONS, Partition, PartitionConfig, UtmLocation
from dsvpr.errors import ConfigurationError, DataError

MANIFEST_HEADER = ("id", "path", "easting", "northing", "heading", "frame_index")
PARTITION_FORMAT = "dsvpr-partition/1"


@dataclass(frozen=True)
class ManifestEntry:
    location: UtmLocation
    path: str

    @property
    def id(self) -> str:
        return self.location.id


def _optional(value: str, kind, line: int, column: str):
    value = value.strip()
    if value == "":
        return None
    try:
        out = kind(value)
    except ValueError:
        raise DataError(f"line {line}: bad {column} value {value!r}") from None
    if kind is float and not math.isfinite(out):
        raise DataError(f"line {line}: non-finite {column}")
    return out


def read_manifest(path: str | os.PathLike) -> list[ManifestEntry]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty manifest") from None
        if tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise DataError(f"line 1: expected header {','.join(MANIFEST_HEADER)}, got {','.join(header)}")
        entries: list[ManifestEntry] = []
        seen: set[str] = set()
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise DataError(f"line {line}: expected {len(MANIFEST_HEADER)} fields, got {len(row)}")
            rid, rpath = row[0].strip(), row[1].strip()
            if not rid:
                raise DataError(f"line {line}: empty id")
            if rid in seen:
                raise DataError(f"line {line}: duplicate id {rid!r}")
            seen.add(rid)
            east = _optional(row[2], float, line, "easting")
            north = _optional(row[3], float, line, "northing")
            if east is None or north is None:
                raise DataError(f"line {line}: easting and northing are required")
            heading = _optional(row[4], float, line, "heading")
            if heading is not None and not 0.0 <= heading < 360.0:
                raise DataError(f"line {line}: heading {heading} outside [0, 360)")
            frame = _optional(row[5], int, line, "frame_index")
            entries.append(ManifestEntry(UtmLocation(rid, east, north, heading, frame), rpath))
    if not entries:
        raise DataError(f"{path}: manifest has no rows")
    return entries


def _fmt(x: float | int | None) -> str:
    if x is None:
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_manifest(path: str | os.PathLike, entries: Sequence[ManifestEntry]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for e in entries:
            loc = e.location
            w.writerow([loc.id, e.path, _fmt(loc.easting), _fmt(loc.northing), _fmt(loc.heading), _fmt(loc.frame_index)])


def resolve_image_path(manifest_path: str | os.PathLike, entry: ManifestEntry) -> Path:
    p = Path(entry.path)
    return p if p.is_absolute() else Path(manifest_path).parent / p


# ------------------------------------------------------------------- partition
def partition_to_dict(part: Partition, manifest: str | None = None) -> dict:
    groups = []
    for (j, direction), classes in zip(part.group_keys, part.groups):
        groups.append({
            "group_index": j,
            "direction": direction,
            "classes": [
                {
                    "class_id": c.class_id,
                    "source": c.source,
                    "peak": {"id": c.peak.id, "e": c.peak.easting, "n": c.peak.northing},
                    "centroid": list(c.centroid),
                    "directions": [list(v) for v in c.directions],
                    "focal_points": [list(f) for f in c.focal_points],
                    "member_ids": [m.id for m in c.members],
                    "selected_image_ids": {d: list(c.selected[d]) for d in DIRECTIONS},
                }
                for c in classes
            ],
        })
    return {
        "format": PARTITION_FORMAT,
        "manifest": manifest,
        "config": asdict(part.config),
        "groups": groups,
        "stats": part.stats,
    }


def write_partition(path: str | os.PathLike, part: Partition, manifest_path: str | os.PathLike | None = None) -> None:
    rel = None
    if manifest_path is not None:
        rel = os.path.relpath(Path(manifest_path).resolve(), Path(path).resolve().parent)
    text = json.dumps(partition_to_dict(part, rel), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


@dataclass
class TrainingGroup:
    """One of the 2N groups as seen by the trainer: per class, the usable image ids."""

    group_index: int
    direction: str
    class_ids: list[str]
    images: list[list[str]]

    @property
    def key(self) -> tuple[int, str]:
        return (self.group_index, self.direction)

    @property
    def num_classes(self) -> int:
        return len(self.class_ids)


@dataclass
class PartitionFile:
    config: PartitionConfig
    groups: list[TrainingGroup]
    stats: dict
    manifest: Path | None


def load_partition(path: str | os.PathLike) -> PartitionFile:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    validate_partition_dict(raw)
    groups = []
    for g in raw["groups"]:
        d = g["direction"]
        groups.append(TrainingGroup(
            group_index=int(g["group_index"]),
            direction=d,
            class_ids=[c["class_id"] for c in g["classes"]],
            images=[list(c["selected_image_ids"][d]) for c in g["classes"]],
        ))
    manifest = None if raw["manifest"] is None else (path.parent / raw["manifest"])
    return PartitionFile(PartitionConfig(**raw["config"]), groups, raw["stats"], manifest)


def validate_partition_dict(raw: dict) -> None:
    """Structural schema check; raises DataError on the first violation."""

    def need(cond: bool, what: str) -> None:
        if not cond:
            raise DataError(f"partition schema: {what}")

    need(isinstance(raw, dict), "top level must be an object")
    need(raw.get("format") == PARTITION_FORMAT, f"format must be {PARTITION_FORMAT!r}")
    for key in ("config", "groups", "stats", "manifest"):
        need(key in raw, f"missing key {key!r}")
    try:
        cfg = PartitionConfig(**raw["config"])
    except (TypeError, ConfigurationError) as exc:
        raise DataError(f"partition schema: bad config ({exc})") from None
    need(isinstance(raw["groups"], list), "groups must be a list")
    need(len(raw["groups"]) == 2 * cfg.groups_per_direction, "expected 2N groups")
    for g in raw["groups"]:
        need(g.get("direction") in DIRECTIONS, "direction must be road or roadside")
        need(isinstance(g.get("group_index"), int) and 1 <= g["group_index"] <= cfg.groups_per_direction,
             "group_index out of range")
        for c in g.get("classes", []):
            for key in ("class_id", "peak", "centroid", "directions", "focal_points",
                        "member_ids", "selected_image_ids"):
                need(key in c, f"class missing {key!r}")
            need(len(c["member_ids"]) > 0, "class with no members")
            need(len(c["directions"]) == 2 and len(c["focal_points"]) == 2, "two directions and focals per class")

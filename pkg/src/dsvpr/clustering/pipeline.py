"""Block-clustering partition of geo-tagged locations into 2N training groups.

Stages, per axis (east, north):
    strip groups -> density clusters -> peak + radius retention -> separation prune
then, per group index: merge both axes -> prune again -> principal directions
and focal points -> per-direction image selection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from dsvpr.clustering.hdbscan import NOISE, hdbscan
from dsvpr.errors import ConfigurationError, DegenerateGeometryError

log = logging.getLogger(__name__)

AXES = ("east", "north")
DIRECTIONS = ("road", "roadside")


@dataclass(frozen=True)
class UtmLocation:
    id: str
    easting: float
    northing: float
    heading: float | None = None
    frame_index: int | None = None

    def __post_init__(self):
        if not (math.isfinite(self.easting) and math.isfinite(self.northing)):
            raise ValueError(f"location {self.id!r} has non-finite coordinates")

    @property
    def xy(self) -> tuple[float, float]:
        return (self.easting, self.northing)


@dataclass(frozen=True)
class PartitionConfig:
    block_width: float = 10.0
    groups_per_direction: int = 5
    retain_radius: float = 7.5
    min_separation: float = 40.0
    focal_distance: float = 15.0
    min_cluster_size: int = 10
    density_radius: float | None = None
    orientation_half_angle: float = 45.0
    seed: int = 0

    def __post_init__(self):
        positive = {
            "block_width": self.block_width,
            "groups_per_direction": self.groups_per_direction,
            "retain_radius": self.retain_radius,
            "min_separation": self.min_separation,
            "focal_distance": self.focal_distance,
            "min_cluster_size": self.min_cluster_size,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ConfigurationError(f"{name} must be positive, got {value}")
        if self.density_radius is not None and not self.density_radius > 0:
            raise ConfigurationError("density_radius must be positive")
        if not 0 < self.orientation_half_angle <= 180:
            raise ConfigurationError("orientation_half_angle must lie in (0, 180]")

    @property
    def effective_density_radius(self) -> float:
        return self.retain_radius if self.density_radius is None else self.density_radius


@dataclass
class ClassCluster:
    members: list[UtmLocation]
    peak: UtmLocation
    source: str
    group_index: int
    centroid: tuple[float, float] | None = None
    directions: tuple[tuple[float, float], tuple[float, float]] | None = None
    focal_points: tuple[tuple[float, float], tuple[float, float]] | None = None
    selected: dict[str, list[str]] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def class_id(self) -> str:
        return f"g{self.group_index}-{self.source}-{self.peak.id}"


@dataclass
class Partition:
    groups: list[list[ClassCluster]]
    group_keys: list[tuple[int, str]]
    config: PartitionConfig
    stats: dict


# --------------------------------------------------------------------- stages
def group_indices(values: Sequence[float], block_width: float, num_groups: int) -> np.ndarray:
    """1-based strip index ``floor(((x - min x) mod (M N)) / M) + 1`` per coordinate."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ConfigurationError("group_indices needs at least one coordinate")
    offset = np.mod(x - x.min(), block_width * num_groups)
    j = np.floor(offset / block_width).astype(np.int64) + 1
    # float mod can land exactly on M*N
    return np.clip(j, 1, num_groups)


def assign_groups(locs: Sequence[UtmLocation], axis: str, block_width: float, num_groups: int) -> list[list[UtmLocation]]:
    """Split locations into ``num_groups`` periodic strips along ``axis``."""
    if axis not in AXES:
        raise ConfigurationError(f"axis must be one of {AXES}, got {axis!r}")
    coord = [l.easting if axis == "east" else l.northing for l in locs]
    j = group_indices(coord, block_width, num_groups)
    groups: list[list[UtmLocation]] = [[] for _ in range(num_groups)]
    for loc, g in zip(locs, j):
        groups[g - 1].append(loc)
    return groups


def _xy(locs: Sequence[UtmLocation]) -> np.ndarray:
    return np.array([l.xy for l in locs], dtype=np.float64).reshape(-1, 2)


def density_cluster(group: Sequence[UtmLocation], min_cluster_size: int) -> tuple[list[list[UtmLocation]], list[UtmLocation]]:
    """Clusters (ordered by label) and the noise set."""
    if len(group) == 0:
        return [], []
    labels = hdbscan(_xy(group), min_cluster_size)
    clusters: list[list[UtmLocation]] = [[] for _ in range(int(labels.max()) + 1)]
    noise: list[UtmLocation] = []
    for loc, lab in zip(group, labels):
        (noise if lab == NOISE else clusters[lab]).append(loc)
    return clusters, noise


def peak_density(cluster: Sequence[UtmLocation], density_radius: float) -> UtmLocation:
    """Member with the most members (itself included) within ``density_radius``; ties -> smallest id."""
    if not cluster:
        raise ConfigurationError("peak_density of an empty cluster")
    pts = _xy(cluster)
    counts = cKDTree(pts).query_ball_point(pts, r=density_radius, return_length=True)
    best = max(range(len(cluster)), key=lambda i: (counts[i], _neg_id(cluster[i].id)))
    return cluster[best]


class _neg_id:
    """Orders ids descending so that ``max`` picks the lexicographically smallest."""

    __slots__ = ("s",)

    def __init__(self, s: str):
        self.s = s

    def __lt__(self, other: "_neg_id") -> bool:
        return self.s > other.s

    def __eq__(self, other) -> bool:
        return self.s == other.s


def radius_retain(cluster: Sequence[UtmLocation], peak: UtmLocation, r: float) -> list[UtmLocation]:
    """Members within the closed ball of radius ``r`` around ``peak``."""
    return [l for l in cluster if math.hypot(l.easting - peak.easting, l.northing - peak.northing) <= r]


def prune_close(classes: Iterable[ClassCluster], l: float) -> list[ClassCluster]:
    """Greedy size-descending acceptance; a class survives iff its peak is >= l from all accepted peaks."""
    ordered = sorted(classes, key=lambda c: (-c.size, c.peak.id))
    accepted: list[ClassCluster] = []
    for c in ordered:
        if all(math.hypot(c.peak.easting - a.peak.easting, c.peak.northing - a.peak.northing) >= l for a in accepted):
            accepted.append(c)
    return accepted


def merge_directions(east_groups: Sequence[Sequence[ClassCluster]], north_groups: Sequence[Sequence[ClassCluster]], l: float) -> list[list[ClassCluster]]:
    if len(east_groups) != len(north_groups):
        raise ConfigurationError(f"group counts differ: east {len(east_groups)}, north {len(north_groups)}")
    return [prune_close(list(e) + list(n), l) for e, n in zip(east_groups, north_groups)]


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    for comp in v:
        if abs(comp) > 1e-12:
            return v if comp > 0 else -v
    return v


def principal_directions(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centroid, dominant direction and its orthogonal complement of an (n, 2) point set."""
    pts = np.asarray(points, dtype=np.float64)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    if len(pts) < 2 or not np.any(np.abs(centered) > 1e-12 * max(1.0, np.abs(pts).max())):
        raise DegenerateGeometryError("all member positions coincide")
    _, _, vt = np.linalg.svd(centered, full_matrices=True)
    v1 = _canonical_sign(vt[0] / np.linalg.norm(vt[0]))
    v2 = _canonical_sign(np.array([-v1[1], v1[0]]))
    return centroid, v1, v2


def principal_directions_and_focals(cls: ClassCluster, focal_distance: float) -> ClassCluster:
    centroid, v1, v2 = principal_directions(_xy(cls.members))
    f1 = centroid + focal_distance * v1
    f2 = centroid + focal_distance * v2
    return replace(
        cls,
        centroid=(float(centroid[0]), float(centroid[1])),
        directions=((float(v1[0]), float(v1[1])), (float(v2[0]), float(v2[1]))),
        focal_points=((float(f1[0]), float(f1[1])), (float(f2[0]), float(f2[1]))),
    )


def bearing_deg(origin: tuple[float, float], target: tuple[float, float]) -> float:
    """Compass bearing (0 = north, 90 = east) from origin to target, in [0, 360)."""
    de = target[0] - origin[0]
    dn = target[1] - origin[1]
    return math.degrees(math.atan2(de, dn)) % 360.0


def angular_difference(a: float, b: float) -> float:
    """Absolute wrapped difference of two angles in degrees, in [0, 180]."""
    d = (a - b) % 360.0
    return min(d, 360.0 - d)


def select_images_toward_focal(cls: ClassCluster, direction: str, half_angle: float) -> list[UtmLocation]:
    if cls.focal_points is None:
        raise ConfigurationError("class has no focal points yet")
    focal = cls.focal_points[DIRECTIONS.index(direction)]
    out = []
    for loc in cls.members:
        if loc.heading is None:
            out.append(loc)
            continue
        if angular_difference(loc.heading, bearing_deg(loc.xy, focal)) <= half_angle:
            out.append(loc)
    return out


# ------------------------------------------------------------------- pipeline
def _axis_pass(locs: Sequence[UtmLocation], axis: str, cfg: PartitionConfig, stats: dict) -> list[list[ClassCluster]]:
    n_groups = cfg.groups_per_direction
    strips = assign_groups(locs, axis, cfg.block_width, n_groups)
    per_group: list[list[ClassCluster]] = []
    s = {"group_sizes": [len(g) for g in strips], "clustered": 0, "noise": 0,
         "classes_found": 0, "retained_members": 0, "classes_after_prune": 0}
    for j, group in enumerate(strips, start=1):
        clusters, noise = density_cluster(group, cfg.min_cluster_size)
        s["noise"] += len(noise)
        s["clustered"] += sum(len(c) for c in clusters)
        s["classes_found"] += len(clusters)
        classes = []
        for members in clusters:
            peak = peak_density(members, cfg.effective_density_radius)
            kept = radius_retain(members, peak, cfg.retain_radius)
            s["retained_members"] += len(kept)
            classes.append(ClassCluster(members=kept, peak=peak, source=axis, group_index=j))
        pruned = prune_close(classes, cfg.min_separation)
        s["classes_after_prune"] += len(pruned)
        per_group.append(pruned)
    stats[axis] = s
    return per_group


def build_partition(locs: Sequence[UtmLocation], cfg: PartitionConfig = PartitionConfig()) -> Partition:
    if not locs:
        raise ConfigurationError("build_partition needs at least one location")
    ids = [l.id for l in locs]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("location ids must be unique")
    ordered = sorted(locs, key=lambda l: l.id)
    stats: dict = {"input_locations": len(ordered)}

    east = _axis_pass(ordered, "east", cfg, stats)
    north = _axis_pass(ordered, "north", cfg, stats)
    before = sum(len(e) + len(n) for e, n in zip(east, north))
    merged = merge_directions(east, north, cfg.min_separation)
    stats["merge"] = {"classes_before": before, "classes_after": sum(len(g) for g in merged)}

    groups: list[list[ClassCluster]] = []
    keys: list[tuple[int, str]] = []
    dropped = 0
    final_by_j: list[list[ClassCluster]] = []
    for j, classes in enumerate(merged, start=1):
        done = []
        for c in classes:
            try:
                done.append(principal_directions_and_focals(c, cfg.focal_distance))
            except DegenerateGeometryError:
                log.warning("dropping class %s: members coincide", c.class_id)
                dropped += 1
        for c in done:
            c.selected = {
                d: [l.id for l in select_images_toward_focal(c, d, cfg.orientation_half_angle)]
                for d in DIRECTIONS
            }
        done.sort(key=lambda c: (c.peak.id, c.source))
        final_by_j.append(done)
    for j, classes in enumerate(final_by_j, start=1):
        for d in DIRECTIONS:
            keys.append((j, d))
            groups.append(classes)

    n_classes = sum(len(g) for g in final_by_j)
    if n_classes == 0:
        raise ConfigurationError("no class survived the partition pipeline")
    members = {l.id for g in final_by_j for c in g for l in c.members}
    selected = {d: sum(len(c.selected[d]) for g in final_by_j for c in g) for d in DIRECTIONS}
    stats["degenerate_dropped"] = dropped
    stats["final_classes"] = n_classes
    stats["retained_locations"] = len(members)
    stats["retained_fraction"] = len(members) / len(ordered)
    stats["selected_images"] = selected
    return Partition(groups=groups, group_keys=keys, config=cfg, stats=stats)

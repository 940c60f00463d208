"""Procedural geo-tagged datasets usable without any external imagery.

Locations come from a Manhattan street grid or a single straight street.
Images are top-down crops of a smooth random "world" texture, taken ahead
of the camera along its heading. Nearby poses therefore see similar
pixels while places tens of meters apart look different. Viewpoint jitter
and per-channel affine colour noise stand in for real appearance change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from dsvpr.clustering.io import ManifestEntry, write_manifest
from dsvpr.clustering.pipeline import UtmLocation

ORIGIN = (500_000.0, 4_180_000.0)


def manhattan_grid(
    extent: float = 700.0,
    street_spacing: float = 50.0,
    step: float = 2.0,
    origin: tuple[float, float] = ORIGIN,
    seed: int = 0,
) -> list[UtmLocation]:
    """Sample points every ``step`` m along a square grid of streets.

    Each point gets a heading along or across its street, chosen at random.
    Intersections are emitted once.
    """
    rng = np.random.default_rng(seed)
    n_streets = int(math.floor(extent / street_spacing)) + 1
    n_steps = int(math.floor(extent / step)) + 1
    seen: set[tuple[int, int]] = set()
    out: list[UtmLocation] = []
    for axis in ("ew", "ns"):
        for s in range(n_streets):
            for t in range(n_steps):
                along, across = t * step, s * street_spacing
                e, n = (along, across) if axis == "ew" else (across, along)
                key = (round(e * 1000), round(n * 1000))
                if key in seen:
                    continue
                seen.add(key)
                base = 90.0 if axis == "ew" else 0.0
                heading = (base + 90.0 * rng.integers(4) + rng.normal(0, 5.0)) % 360.0
                out.append(UtmLocation(f"{axis}{s:03d}-{t:04d}", origin[0] + e, origin[1] + n, heading, None))
    return out


def street_segment(
    length: float = 200.0,
    angle_deg: float = 0.0,
    step: float = 2.0,
    origin: tuple[float, float] = ORIGIN,
    seed: int = 0,
) -> list[UtmLocation]:
    """Points along one straight street; ``angle_deg`` is measured from the east axis.

    Frame indices follow travel order, which makes the sequence usable for
    frame-tolerance evaluation.
    """
    rng = np.random.default_rng(seed)
    a = math.radians(angle_deg)
    ux, uy = math.cos(a), math.sin(a)
    travel = math.degrees(math.atan2(ux, uy)) % 360.0
    out = []
    for t in range(int(math.floor(length / step)) + 1):
        d = t * step
        heading = (travel + 90.0 * rng.integers(4) + rng.normal(0, 5.0)) % 360.0
        out.append(UtmLocation(f"st-{t:05d}", origin[0] + d * ux, origin[1] + d * uy, heading, t))
    return out


def place_locations(n_places: int, spacing: float = 100.0, origin: tuple[float, float] = ORIGIN) -> list[UtmLocation]:
    """Well separated place centres on a square lattice, all facing north."""
    cols = int(math.ceil(math.sqrt(n_places)))
    return [
        UtmLocation(f"place-{k:03d}", origin[0] + spacing * (k % cols), origin[1] + spacing * (k // cols), 0.0, k)
        for k in range(n_places)
    ]


@dataclass(frozen=True)
class Jitter:
    position: float = 1.0
    heading: float = 5.0
    gain: float = 0.1
    bias: float = 0.05


class WorldTexture:
    """Smooth 3-channel field over UTM coordinates built from random plane waves."""

    def __init__(self, seed: int = 0, waves: int = 12, min_wavelength: float = 4.0, max_wavelength: float = 40.0):
        rng = np.random.default_rng(seed)
        wl = np.exp(rng.uniform(math.log(min_wavelength), math.log(max_wavelength), size=(3, waves)))
        theta = rng.uniform(0, 2 * math.pi, size=(3, waves))
        self.kx = 2 * math.pi / wl * np.cos(theta)
        self.ky = 2 * math.pi / wl * np.sin(theta)
        self.phase = rng.uniform(0, 2 * math.pi, size=(3, waves))
        self.amp = rng.uniform(0.5, 1.0, size=(3, waves)) / math.sqrt(waves)

    def sample(self, e: np.ndarray, n: np.ndarray) -> np.ndarray:
        """(3, *e.shape) values in (0, 1)."""
        e = e - ORIGIN[0]
        n = n - ORIGIN[1]
        arg = self.kx[..., None] * e.reshape(-1) + self.ky[..., None] * n.reshape(-1) + self.phase[..., None]
        field = (self.amp[..., None] * np.sin(arg)).sum(axis=1)
        return (0.5 + 0.5 * np.tanh(1.5 * field)).reshape((3,) + e.shape)

    def render(
        self,
        loc: UtmLocation,
        side: int = 64,
        span: float = 16.0,
        ahead: float = 8.0,
        rng: np.random.Generator | None = None,
        jitter: Jitter = Jitter(),
    ) -> np.ndarray:
        """(3, side, side) float32 view ahead of ``loc`` along its heading."""
        heading = 0.0 if loc.heading is None else loc.heading
        e0, n0 = loc.easting, loc.northing
        gain = np.ones((3, 1, 1))
        bias = np.zeros((3, 1, 1))
        if rng is not None:
            e0 += rng.normal(0, jitter.position)
            n0 += rng.normal(0, jitter.position)
            heading += rng.normal(0, jitter.heading)
            gain = 1.0 + rng.uniform(-jitter.gain, jitter.gain, size=(3, 1, 1))
            bias = rng.uniform(-jitter.bias, jitter.bias, size=(3, 1, 1))
        h = math.radians(heading)
        fwd = np.array([math.sin(h), math.cos(h)])
        right = np.array([math.cos(h), -math.sin(h)])
        u = (np.arange(side) + 0.5) / side - 0.5
        rows, cols = np.meshgrid(u, u, indexing="ij")
        depth = ahead - span * rows  # top rows are farther away
        lateral = span * cols
        e = e0 + depth * fwd[0] + lateral * right[0]
        n = n0 + depth * fwd[1] + lateral * right[1]
        img = self.sample(e, n) * gain + bias
        return np.clip(img, 0.0, 1.0).astype(np.float32)


def render_views(
    world: WorldTexture,
    locs: Sequence[UtmLocation],
    side: int = 64,
    seed: int = 0,
    jitter: Jitter | None = Jitter(),
) -> np.ndarray:
    rng = np.random.default_rng(seed) if jitter is not None else None
    out = np.empty((len(locs), 3, side, side), dtype=np.float32)
    for i, loc in enumerate(locs):
        out[i] = world.render(loc, side, rng=rng, jitter=jitter or Jitter())
    return out


def separable_places(
    n_classes: int,
    per_class: int,
    side: int = 32,
    seed: int = 0,
    spacing: float = 100.0,
    jitter: Jitter = Jitter(),
) -> tuple[np.ndarray, np.ndarray, list[UtmLocation]]:
    """Jittered views of ``n_classes`` distant places: images, labels, per-image poses."""
    world = WorldTexture(seed)
    places = place_locations(n_classes, spacing)
    locs = [p for p in places for _ in range(per_class)]
    labels = np.repeat(np.arange(n_classes), per_class)
    return render_views(world, locs, side, seed + 1, jitter), labels, locs


# ---------------------------------------------------------------------- disk
def save_image(path: str | Path, image: np.ndarray) -> None:
    arr = np.clip(np.rint(np.transpose(image, (1, 2, 0)) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_image(path: str | Path) -> np.ndarray:
    """(3, H, W) float32 in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(np.transpose(arr, (2, 0, 1)))


def write_dataset(
    out_dir: str | Path,
    locs: Sequence[UtmLocation],
    name: str = "manifest",
    side: int = 64,
    seed: int = 0,
    world_seed: int = 0,
    jitter: Jitter | None = Jitter(),
) -> Path:
    """Render every location to ``out_dir/images/<name>/<id>.png`` and write ``out_dir/<name>.csv``."""
    out_dir = Path(out_dir)
    img_dir = out_dir / "images" / name
    img_dir.mkdir(parents=True, exist_ok=True)
    world = WorldTexture(world_seed)
    rng = np.random.default_rng(seed) if jitter is not None else None
    entries = []
    for loc in locs:
        rel = Path("images") / name / f"{loc.id}.png"
        save_image(out_dir / rel, world.render(loc, side, rng=rng, jitter=jitter or Jitter()))
        entries.append(ManifestEntry(loc, rel.as_posix()))
    manifest = out_dir / f"{name}.csv"
    write_manifest(manifest, entries)
    return manifest


def synthetic_locations(kind: str, seed: int = 0, **kwargs) -> list[UtmLocation]:
    if kind == "grid":
        return manhattan_grid(seed=seed, **kwargs)
    if kind == "street":
        return street_segment(seed=seed, **kwargs)
    raise ValueError(f"unknown synthetic kind {kind!r}; expected 'grid' or 'street'")

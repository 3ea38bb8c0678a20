"""Synthetic tracklet generation and the on-disk tracklet format.

A tracklet is an ordered sequence of (point cloud, ground-truth box) frames
for one object. The generator places points on the surface of a moving box
shell (rigid category) or a per-frame jittered shell (nonrigid), immersed in
uniform background clutter, optionally with a second distractor shell nearby.
The crowded clutter level adds dense compact point clusters riding alongside
the target, so point count share and spatial share diverge sharply.

Determinism: every tracklet derives from one 64-bit seed through named
substreams; bulk coordinate draws use numpy's PCG64 seeded from those
substreams. The same seed always yields byte-identical tracklet files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .geometry import Box3D, crop_points, wrap_angle
from .rng import SplitMix64, substream_seed

TRACKLET_FORMAT = "ptttrk1"

CATEGORIES = ("rigid", "nonrigid")
DENSITY_LEVELS = ("dense", "medium", "sparse", "zero")
CLUTTER_LEVELS = ("none", "light", "heavy", "crowded")

# first-frame on-target point count range per density level
_DENSITY_RANGES = {
    "dense": (120, 200),
    "medium": (50, 119),
    "sparse": (3, 19),
    "zero": (0, 0),
}

_BACKGROUND_COUNTS = {"none": 0, "light": 30, "heavy": 80, "crowded": 60}
# crowded adds dense compact clusters (parked cars, poles, wall fragments)
# that ride alongside the target: (cluster count, points each, sigma)
_CLUSTER_SPECS = {"crowded": (6, 90, 0.45)}


@dataclass
class Tracklet:
    """One object's frame sequence with metadata."""

    frames: list  # list of (points float32 (P, 3), Box3D)
    category: str = "rigid"
    density: str = "medium"
    clutter: str = "light"
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if len(self.frames) < 1:
            raise DataError("a tracklet needs at least one frame")
        if self.category not in CATEGORIES:
            raise DataError(f"unknown category {self.category!r}")
        if self.density not in DENSITY_LEVELS:
            raise DataError(f"unknown density {self.density!r}")

    def __len__(self) -> int:
        return len(self.frames)

    def first_frame_in_box_count(self) -> int:
        points, box = self.frames[0]
        if len(points) == 0:
            return 0
        _, idx = crop_points(np.asarray(points, dtype=float), box, margin=0.0)
        return int(len(idx))


def _rng_for(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(substream_seed(seed, label))


def _sample_shell(rng: np.random.Generator, box: Box3D, count: int) -> np.ndarray:
    """Uniform, area-weighted samples on the box surface, world frame."""
    if count == 0:
        return np.empty((0, 3))
    w, h, l = box.w, box.h, box.l
    # local frame: x spans l, y spans w, z spans h; six faces
    areas = np.array([w * h, w * h, l * h, l * h, l * w, l * w])
    faces = rng.choice(6, size=count, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, count)
    v = rng.uniform(-0.5, 0.5, count)
    local = np.empty((count, 3))
    for f in range(6):
        mask = faces == f
        if not np.any(mask):
            continue
        uu, vv = u[mask], v[mask]
        if f in (0, 1):  # x = +-l/2 faces
            local[mask] = np.stack(
                [np.full(uu.shape, (l / 2) if f == 0 else (-l / 2)), uu * w, vv * h], axis=1
            )
        elif f in (2, 3):  # y = +-w/2 faces
            local[mask] = np.stack(
                [uu * l, np.full(uu.shape, (w / 2) if f == 2 else (-w / 2)), vv * h], axis=1
            )
        else:  # z = +-h/2 faces
            local[mask] = np.stack(
                [uu * l, vv * w, np.full(uu.shape, (h / 2) if f == 4 else (-h / 2))], axis=1
            )
    # pull points slightly inside the surface so float32 storage and frame
    # round-trips cannot push an exact-boundary point out of the box
    local *= 0.995
    c, s = np.cos(box.ry), np.sin(box.ry)
    world = np.empty_like(local)
    world[:, 0] = c * local[:, 0] - s * local[:, 1]
    world[:, 1] = s * local[:, 0] + c * local[:, 1]
    world[:, 2] = local[:, 2]
    return world + box.center


def _simulate_boxes(seed: int, label: str, start: Box3D, n_frames: int) -> list[Box3D]:
    """Constant velocity plus yaw rate plus small per-frame noise."""
    rng = _rng_for(seed, label)
    speed = rng.uniform(0.18, 0.45)
    yaw_rate = rng.uniform(-0.06, 0.06)
    boxes = [start]
    heading = start.ry
    center = start.center.copy()
    for _ in range(1, n_frames):
        heading = wrap_angle(heading + yaw_rate + rng.normal(0.0, 0.01))
        step = speed + rng.normal(0.0, 0.02)
        center = center + np.array(
            [step * np.cos(heading), step * np.sin(heading), rng.normal(0.0, 0.01)]
        )
        boxes.append(Box3D(center=center.copy(), size=start.size.copy(), ry=heading))
    return boxes


def gen_tracklet(
    category: str,
    n_frames: int,
    density: str,
    clutter: str,
    seed: int,
    name: str = "",
) -> Tracklet:
    """Generate one deterministic synthetic tracklet."""
    if n_frames < 1:
        raise DataError("frame count must be >= 1")
    if category not in CATEGORIES:
        raise DataError(f"unknown category {category!r}")
    if density not in DENSITY_LEVELS:
        raise DataError(f"unknown density {density!r}")
    if clutter not in CLUTTER_LEVELS:
        raise DataError(f"unknown clutter {clutter!r}")

    shape_rng = _rng_for(seed, "shape")
    size = np.array([1.8, 1.5, 4.2]) * shape_rng.uniform(0.9, 1.1, 3)
    start = Box3D(
        center=shape_rng.uniform(-2.0, 2.0, 3) * np.array([1.0, 1.0, 0.2]),
        size=size,
        ry=shape_rng.uniform(-np.pi, np.pi),
    )
    boxes = _simulate_boxes(seed, "motion", start, n_frames)

    lo, hi = _DENSITY_RANGES[density]
    first_count = 0 if density == "zero" else int(shape_rng.integers(lo, hi + 1))

    has_distractor = clutter in ("heavy", "crowded")
    if has_distractor:
        drng = _rng_for(seed, "distractor")
        angle = drng.uniform(-np.pi, np.pi)
        dist = drng.uniform(2.5, 4.0)
        d_start = Box3D(
            center=start.center + [dist * np.cos(angle), dist * np.sin(angle), 0.0],
            size=size * drng.uniform(0.8, 1.2, 3),
            ry=drng.uniform(-np.pi, np.pi),
        )
        d_boxes = _simulate_boxes(seed, "distractor-motion", d_start, n_frames)
        d_count = max(15, int(round(first_count * drng.uniform(0.6, 1.2))))

    n_bg = _BACKGROUND_COUNTS[clutter]
    cluster_spec = _CLUSTER_SPECS.get(clutter)
    if cluster_spec is not None:
        n_cl, _, _ = cluster_spec
        crng = _rng_for(seed, "clutter-clusters")
        # offsets from the target center, kept outside the box so cluster
        # points cannot inflate in-box counts
        radius = crng.uniform(3.4, 5.5, n_cl)
        theta = crng.uniform(-np.pi, np.pi, n_cl)
        cluster_offsets = np.stack(
            [radius * np.cos(theta), radius * np.sin(theta), crng.normal(0.0, 0.3, n_cl)],
            axis=1,
        )
    jitter_sigma = 0.08 if category == "nonrigid" else 0.0

    frames = []
    for t, box in enumerate(boxes):
        rng = _rng_for(seed, f"frame/{t}")
        count = first_count if t == 0 else int(round(first_count * rng.uniform(0.8, 1.2)))
        target = _sample_shell(rng, box, count)
        if jitter_sigma > 0 and len(target):
            target = target + rng.normal(0.0, jitter_sigma, target.shape)
        parts = [target]
        if has_distractor:
            d_pts = _sample_shell(rng, d_boxes[t], d_count)
            if jitter_sigma > 0 and len(d_pts):
                d_pts = d_pts + rng.normal(0.0, jitter_sigma, d_pts.shape)
            parts.append(d_pts)
        if cluster_spec is not None:
            _, n_pts, sigma = cluster_spec
            for off in cluster_offsets:
                parts.append(box.center + off + rng.normal(0.0, sigma, (n_pts, 3)))
        if n_bg > 0:
            bg = np.stack(
                [
                    rng.uniform(box.center[0] - 6.0, box.center[0] + 6.0, n_bg),
                    rng.uniform(box.center[1] - 6.0, box.center[1] + 6.0, n_bg),
                    rng.uniform(box.center[2] - 1.5, box.center[2] + 1.5, n_bg),
                ],
                axis=1,
            )
            parts.append(bg)
        cloud = np.concatenate([p for p in parts if len(p)], axis=0) if any(
            len(p) for p in parts
        ) else np.empty((0, 3))
        frames.append((cloud.astype(np.float32), box))
    return Tracklet(
        frames=frames, category=category, density=density, clutter=clutter,
        seed=seed, name=name,
    )


# ---------------------------------------------------------------- file format


def write_tracklet(path, tracklet: Tracklet) -> None:
    """Header JSON line, then per frame: index, box 7-tuple, count, xyz f32."""
    header = {
        "format": TRACKLET_FORMAT,
        "frames": len(tracklet),
        "category": tracklet.category,
        "density": tracklet.density,
        "clutter": tracklet.clutter,
        "seed": tracklet.seed,
        "name": tracklet.name,
    }
    with open(path, "wb") as fp:
        fp.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for t, (points, box) in enumerate(tracklet.frames):
            points = np.asarray(points, dtype="<f4").reshape(-1, 3)
            fp.write(struct.pack("<I", t))
            fp.write(struct.pack("<7d", *box.as_seven()))
            fp.write(struct.pack("<I", len(points)))
            fp.write(points.tobytes())


def read_tracklet(path) -> Tracklet:
    """Inverse of :func:`write_tracklet`."""
    with open(path, "rb") as fp:
        header_line = fp.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise DataError(f"{path}: not a tracklet file")
        if header.get("format") != TRACKLET_FORMAT:
            raise DataError(f"{path}: unsupported tracklet format")

        def read(n: int) -> bytes:
            buf = fp.read(n)
            if len(buf) != n:
                raise DataError(f"{path}: truncated tracklet")
            return buf

        frames = []
        for t in range(int(header["frames"])):
            (idx,) = struct.unpack("<I", read(4))
            if idx != t:
                raise DataError(f"{path}: frame index mismatch at {t}")
            box = Box3D.from_seven(struct.unpack("<7d", read(56)))
            (count,) = struct.unpack("<I", read(4))
            pts = np.frombuffer(read(12 * count), dtype="<f4").reshape(count, 3)
            frames.append((pts.copy(), box))
        if fp.read(1):
            raise DataError(f"{path}: trailing bytes after last frame")
    return Tracklet(
        frames=frames,
        category=header["category"],
        density=header["density"],
        clutter=header.get("clutter", "light"),
        seed=int(header["seed"]),
        name=header.get("name", ""),
    )


# ---------------------------------------------------------------- corpora


@dataclass
class CorpusEntry:
    name: str
    category: str
    density: str
    clutter: str
    seed: int
    frames: int
    first_count: int


@dataclass
class Corpus:
    """A directory of tracklet files plus split lists and per-file metadata."""

    root: str
    entries: list = field(default_factory=list)
    splits: dict = field(default_factory=dict)  # split name -> list of names


def density_mix_plan(count: int, mix: str) -> list[str]:
    """Per-index density levels for a corpus. Every 50th tracklet has zero
    points; the rest follow: balanced = even thirds, sparse-heavy = 70%
    sparse with the remainder split between medium and dense."""
    if mix not in ("balanced", "sparse-heavy"):
        raise DataError(f"unknown density mix {mix!r}")
    plan = []
    for i in range(count):
        if i % 50 == 49:
            plan.append("zero")
        elif mix == "balanced":
            plan.append(("dense", "medium", "sparse")[i % 3])
        else:
            plan.append("sparse" if i % 10 < 7 else ("medium", "dense")[i % 2])
    return plan


def split_names(entries: list, seed: int) -> dict:
    """Stratified 60/10/30 split by density; zero-density goes to test."""
    by_level: dict[str, list[str]] = {}
    for e in entries:
        by_level.setdefault(e.density, []).append(e.name)
    splits = {"train": [], "val": [], "test": []}
    for level in sorted(by_level):
        names = sorted(by_level[level])
        stream = SplitMix64(substream_seed(seed, f"split/{level}"))
        stream.shuffle(names)
        if level == "zero":
            splits["test"].extend(names)
            continue
        n = len(names)
        n_val = n // 10
        n_test = (3 * n) // 10
        splits["test"].extend(names[:n_test])
        splits["val"].extend(names[n_test:n_test + n_val])
        splits["train"].extend(names[n_test + n_val:])
    for key in splits:
        splits[key].sort()
    return splits


def generate_corpus(
    out_dir,
    count: int,
    n_frames: int,
    categories: list[str],
    density_mix: str,
    clutter: str,
    seed: int,
) -> Corpus:
    """Write ``count`` tracklets plus split lists and corpus metadata."""
    import os

    if count < 0:
        raise DataError("count must be >= 0")
    if not categories:
        raise DataError("need at least one category")
    for cat in categories:
        if cat not in CATEGORIES:
            raise DataError(f"unknown category {cat!r}")

    tracklet_dir = os.path.join(out_dir, "tracklets")
    os.makedirs(tracklet_dir, exist_ok=True)
    plan = density_mix_plan(count, density_mix)
    entries = []
    for i in range(count):
        name = f"trk_{i:04d}"
        trk = gen_tracklet(
            category=categories[i % len(categories)],
            n_frames=n_frames,
            density=plan[i],
            # zero-density tracklets stay fully empty so the empty-template
            # carry-forward path is exercised without stray background hits
            clutter="none" if plan[i] == "zero" else clutter,
            seed=substream_seed(seed, f"tracklet/{i}"),
            name=name,
        )
        write_tracklet(os.path.join(tracklet_dir, name + ".bin"), trk)
        entries.append(
            CorpusEntry(
                name=name,
                category=trk.category,
                density=trk.density,
                clutter=trk.clutter,
                seed=trk.seed,
                frames=len(trk),
                first_count=trk.first_frame_in_box_count(),
            )
        )
    splits = split_names(entries, seed)
    corpus_meta = {
        "count": count,
        "frames": n_frames,
        "categories": list(categories),
        "density_mix": density_mix,
        "clutter": clutter,
        "seed": seed,
        "entries": [vars(e) for e in entries],
        "splits": splits,
    }
    with open(os.path.join(out_dir, "corpus.json"), "w", encoding="utf-8") as fp:
        json.dump(corpus_meta, fp, indent=2, sort_keys=True)
        fp.write("\n")
    for split, names in splits.items():
        with open(os.path.join(out_dir, f"{split}.txt"), "w", encoding="utf-8") as fp:
            fp.writelines(name + "\n" for name in names)
    return Corpus(root=str(out_dir), entries=entries, splits=splits)


def load_corpus(root) -> Corpus:
    import os

    meta_path = os.path.join(root, "corpus.json")
    try:
        with open(meta_path, "r", encoding="utf-8") as fp:
            meta = json.load(fp)
    except OSError as exc:
        raise DataError(f"cannot read corpus metadata: {exc}")
    except json.JSONDecodeError:
        raise DataError(f"{meta_path}: corrupt corpus metadata")
    entries = [CorpusEntry(**e) for e in meta["entries"]]
    return Corpus(root=str(root), entries=entries, splits=meta["splits"])


def load_split(corpus: Corpus, split: str) -> list[Tracklet]:
    import os

    if split not in corpus.splits:
        raise DataError(f"unknown split {split!r}")
    return [
        read_tracklet(os.path.join(corpus.root, "tracklets", name + ".bin"))
        for name in corpus.splits[split]
    ]

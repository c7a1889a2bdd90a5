"""Condition-labeled image datasets with optional pose ground truth.

Images are stored as float32 arrays in [-1, 1] (HWC). Datasets are immutable
after load and safe to share across readers.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImageTensor:
    """H x W x C image with values in [-1, 1]."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim == 2:
            object.__setattr__(self, "data", self.data[:, :, None])
        if self.data.ndim != 3:
            raise ValueError(f"expected HWC array, got shape {self.data.shape}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ConditionLabel:
    """Condition name plus domain assignment ('A' with subdomain index, or 'B')."""

    name: str
    domain: str = ""  # "A" or "B", empty until split_domains assigns it
    subdomain: int = -1  # 1-based index within domain A


@dataclass(frozen=True)
class PoseTrack:
    """Ordered (frame_id, position, quaternion wxyz) ground truth."""

    frame_ids: np.ndarray  # (N,) int
    positions: np.ndarray  # (N, 3) float, meters
    quaternions: np.ndarray  # (N, 4) float, unit, wxyz

    def __len__(self) -> int:
        return len(self.frame_ids)

    def entry(self, frame_id: int) -> tuple[np.ndarray, np.ndarray]:
        idx = int(np.searchsorted(self.frame_ids, frame_id))
        if idx >= len(self.frame_ids) or self.frame_ids[idx] != frame_id:
            raise KeyError(f"frame {frame_id} not in track")
        return self.positions[idx], self.quaternions[idx]


@dataclass(frozen=True)
class CorrespondenceSet:
    """Ground-truth (query_frame, db_frame) pairs with a frame-index tolerance."""

    pairs: tuple[tuple[int, int], ...]
    tolerance: int = 0

    def __post_init__(self):
        if self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")

    def is_match(self, q_index: int, db_index: int) -> bool:
        """True if the index pair counts as a ground-truth match."""
        return abs(q_index - db_index) <= self.tolerance


@dataclass
class MultiDomainDataset:
    """Images grouped by condition; frame_ids unique within a condition."""

    images: list[tuple[ImageTensor, ConditionLabel, int]]
    root: Path | None = None
    manifest: dict[str, list[str]] = field(default_factory=dict)

    @property
    def conditions(self) -> list[str]:
        seen: dict[str, None] = {}
        for _, label, _ in self.images:
            seen.setdefault(label.name, None)
        return list(seen)

    def condition_images(self, name: str) -> list[tuple[ImageTensor, int]]:
        out = [(img, fid) for img, lbl, fid in self.images if lbl.name == name]
        if not out:
            raise KeyError(f"no images for condition {name!r}")
        return out

    def __len__(self) -> int:
        return len(self.images)


# ---------------------------------------------------------------------------
# pixel range helpers
# ---------------------------------------------------------------------------

def normalize_pixels(img_u8: np.ndarray) -> np.ndarray:
    """Map uint8 [0, 255] linearly to float32 [-1, 1]."""
    return (img_u8.astype(np.float32) / 127.5) - 1.0


def denormalize_pixels(img: np.ndarray) -> np.ndarray:
    """Map [-1, 1] back to uint8 [0, 255] with rounding."""
    return np.clip(np.round((img + 1.0) * 127.5), 0, 255).astype(np.uint8)


def _resize(img: np.ndarray, size: int) -> np.ndarray:
    if img.shape[0] == size and img.shape[1] == size:
        return img
    return cv2.resize(img, (size, size), interpolation=cv2.INTER_LINEAR)


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def load_image_dir(root: Path | str, layout: str = "per_condition",
                   target_size: int = 256) -> MultiDomainDataset:
    """Load a directory of images into a normalized dataset.

    layout "per_condition" expects one subdirectory per condition; "flat"
    treats the whole directory as a single condition named after it.
    Undecodable files are skipped with a warning; an empty condition is fatal.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} does not exist")

    if layout == "per_condition":
        groups = sorted(p for p in root.iterdir() if p.is_dir())
        if not groups:
            raise FileNotFoundError(f"{root} contains no condition subdirectories")
    elif layout == "flat":
        groups = [root]
    else:
        raise ValueError(f"unknown layout {layout!r}")

    images: list[tuple[ImageTensor, ConditionLabel, int]] = []
    manifest: dict[str, list[str]] = {}
    for group in groups:
        condition = group.name
        files = sorted(p for p in group.iterdir()
                       if p.suffix.lower() in IMAGE_EXTENSIONS)
        loaded: list[str] = []
        frame_id = 0
        for path in files:
            raw = cv2.imread(str(path), cv2.IMREAD_COLOR)
            if raw is None:
                log.warning("skipping undecodable file %s", path)
                continue
            raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
            img = normalize_pixels(_resize(raw, target_size))
            images.append((ImageTensor(img), ConditionLabel(condition), frame_id))
            loaded.append(str(path.relative_to(root)))
            frame_id += 1
        if not loaded:
            raise ValueError(f"condition {condition!r} has no decodable images")
        manifest[condition] = loaded

    return MultiDomainDataset(images=images, root=root, manifest=manifest)


def write_manifest(ds: MultiDomainDataset, path: Path | str) -> None:
    Path(path).write_text(json.dumps(ds.manifest, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# domain split
# ---------------------------------------------------------------------------

def split_domains(ds: MultiDomainDataset, a_conditions: list[str],
                  b_condition: str
                  ) -> tuple[list[list[tuple[ImageTensor, int]]],
                             list[tuple[ImageTensor, int]]]:
    """Partition conditions into domain-A subdomains and the single domain B."""
    if b_condition in a_conditions:
        raise ValueError(f"condition {b_condition!r} in both domains")
    available = set(ds.conditions)
    missing = [c for c in [*a_conditions, b_condition] if c not in available]
    if missing:
        raise ValueError(f"conditions not in dataset: {missing}")

    domain_a = [ds.condition_images(name) for name in a_conditions]
    domain_b = ds.condition_images(b_condition)
    return domain_a, domain_b


# ---------------------------------------------------------------------------
# pose files
# ---------------------------------------------------------------------------

POSE_HEADER = "frame,x,y,z,qw,qx,qy,qz"


def load_pose_file(path: Path | str) -> PoseTrack:
    """Parse the pose CSV (header frame,x,y,z,qw,qx,qy,qz), renormalizing
    quaternions and sorting by frame id."""
    path = Path(path)
    rows: list[tuple[int, list[float], list[float]]] = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.replace(" ", "") == POSE_HEADER:
                continue
            parts = line.split(",")
            if len(parts) != 8:
                raise ValueError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
            try:
                frame = int(parts[0])
                vals = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            rows.append((frame, vals[:3], vals[3:]))

    if not rows:
        raise ValueError(f"{path}: no pose rows")

    rows.sort(key=lambda r: r[0])
    frames = np.array([r[0] for r in rows], dtype=np.int64)
    positions = np.array([r[1] for r in rows], dtype=np.float64)
    quats = np.array([r[2] for r in rows], dtype=np.float64)

    norms = np.linalg.norm(quats, axis=1)
    if np.any(norms == 0):
        raise ValueError(f"{path}: zero-norm quaternion")
    if np.any(np.abs(norms - 1.0) > 1e-3):
        warnings.warn(f"{path}: renormalizing non-unit quaternions "
                      f"(worst |q| = {norms[np.argmax(np.abs(norms - 1))]:.4f})")
    quats = quats / norms[:, None]
    return PoseTrack(frame_ids=frames, positions=positions, quaternions=quats)


def save_pose_file(track: PoseTrack, path: Path | str) -> None:
    lines = [POSE_HEADER]
    for fid, pos, q in zip(track.frame_ids, track.positions, track.quaternions):
        lines.append(f"{int(fid)},{pos[0]:.9g},{pos[1]:.9g},{pos[2]:.9g},"
                     f"{q[0]:.9g},{q[1]:.9g},{q[2]:.9g},{q[3]:.9g}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# alignment
# ---------------------------------------------------------------------------

def align_by_pose(track_a: PoseTrack, track_b: PoseTrack,
                  max_dist: float) -> CorrespondenceSet:
    """Greedy one-to-one nearest-position matching within max_dist.

    Candidate pairs are taken by ascending distance so every returned pair is
    the closest still-available match for both frames.
    """
    if len(track_a) == 0 or len(track_b) == 0:
        raise ValueError("both tracks must be non-empty")

    diff = track_a.positions[:, None, :] - track_b.positions[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    ai, bi = np.nonzero(dist <= max_dist)
    order = np.argsort(dist[ai, bi], kind="stable")

    used_a: set[int] = set()
    used_b: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for k in order:
        i, j = int(ai[k]), int(bi[k])
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((int(track_a.frame_ids[i]), int(track_b.frame_ids[j])))

    if not pairs:
        log.warning("align_by_pose: no frame pairs within %.3g m", max_dist)
    pairs.sort()
    return CorrespondenceSet(pairs=tuple(pairs), tolerance=0)


# ---------------------------------------------------------------------------
# correspondences on disk
# ---------------------------------------------------------------------------

def save_correspondences(cs: CorrespondenceSet, path: Path | str) -> None:
    lines = ["query_frame,db_frame"]
    lines += [f"{q},{d}" for q, d in cs.pairs]
    Path(path).write_text("\n".join(lines) + "\n")


def load_correspondences(path: Path | str, tolerance: int = 0) -> CorrespondenceSet:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("query_frame"):
            continue
        q, d = line.split(",")
        pairs.append((int(q), int(d)))
    return CorrespondenceSet(pairs=tuple(pairs), tolerance=tolerance)

"""Procedural multi-season dataset: one scene, one camera path, several
photometric conditions.

The scene is a textured ground plane plus vertical billboard landmarks,
rendered with a pinhole camera driven along a smooth arc. Every condition
re-renders the same geometry and then applies a fixed photometric transform
(hue/saturation shift, brightness/contrast, optional snow speckle), so
structure is shared across conditions while appearance is not. All
randomness flows from the single seed; identical seeds give bit-identical
pixels.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .datasets import (
    ConditionLabel,
    CorrespondenceSet,
    ImageTensor,
    MultiDomainDataset,
    PoseTrack,
    normalize_pixels,
    denormalize_pixels,
    save_correspondences,
    save_pose_file,
    write_manifest,
)

WORLD_EXTENT = 100.0  # meters covered by one texture tile
TEXTURE_SIZE = 512
CAMERA_HEIGHT = 1.6
CAMERA_PITCH = np.deg2rad(12.0)  # downward tilt
PATH_RADIUS = 24.0
N_LANDMARKS = 28


@dataclass(frozen=True)
class ConditionSpec:
    """Photometric recipe applied on top of the shared rendering."""

    name: str
    hue_shift: float = 0.0      # degrees on the OpenCV 0..180 hue wheel
    saturation: float = 1.0
    brightness: float = 0.0     # additive, on 0..255
    contrast: float = 1.0
    speckle_density: float = 0.0  # fraction of pixels hit by snow dots


CONDITION_SPECS = {
    "spring": ConditionSpec("spring", hue_shift=8.0, saturation=1.1),
    "summer": ConditionSpec("summer", hue_shift=-6.0, saturation=1.25,
                            brightness=18.0, contrast=1.1),
    "fall": ConditionSpec("fall", hue_shift=22.0, saturation=0.9,
                          brightness=-12.0, contrast=0.95),
    "winter": ConditionSpec("winter", saturation=0.35, brightness=40.0,
                            contrast=0.8, speckle_density=0.004),
    "morning": ConditionSpec("morning", hue_shift=-4.0, brightness=25.0,
                             contrast=0.9),
    "overcast": ConditionSpec("overcast", saturation=0.6, brightness=-8.0,
                              contrast=0.85),
    "rain": ConditionSpec("rain", saturation=0.5, brightness=-25.0,
                          contrast=0.9, speckle_density=0.002),
}


# ---------------------------------------------------------------------------
# scene construction
# ---------------------------------------------------------------------------

def _make_ground_texture(rng: np.random.Generator) -> np.ndarray:
    """Low-frequency colored noise with geometric road/field markings."""
    coarse = rng.uniform(40, 180, size=(32, 32, 3)).astype(np.float32)
    tex = cv2.resize(coarse, (TEXTURE_SIZE, TEXTURE_SIZE),
                     interpolation=cv2.INTER_CUBIC)
    grain = rng.normal(0, 12, size=(TEXTURE_SIZE, TEXTURE_SIZE, 1)).astype(np.float32)
    tex = tex + grain

    # geometric patches: fields, plazas, a ring road under the camera path
    for _ in range(24):
        color = rng.uniform(30, 200, size=3).tolist()
        cx, cy = rng.integers(0, TEXTURE_SIZE, size=2)
        if rng.random() < 0.5:
            w, h = rng.integers(20, 120, size=2)
            ang = rng.uniform(0, 180)
            box = cv2.boxPoints(((float(cx), float(cy)), (float(w), float(h)), ang))
            cv2.fillPoly(tex, [box.astype(np.int32)], color)
        else:
            cv2.circle(tex, (int(cx), int(cy)), int(rng.integers(12, 70)), color, -1)
    ring_r = int(PATH_RADIUS / WORLD_EXTENT * TEXTURE_SIZE)
    center = (TEXTURE_SIZE // 2, TEXTURE_SIZE // 2)
    cv2.circle(tex, center, ring_r, (70, 70, 75), thickness=10)
    return np.clip(tex, 0, 255).astype(np.uint8)


def _make_landmarks(rng: np.random.Generator) -> list[dict]:
    """Vertical billboards scattered around the camera ring."""
    landmarks = []
    for _ in range(N_LANDMARKS):
        ang = rng.uniform(0, 2 * np.pi)
        radius = PATH_RADIUS + rng.uniform(-14.0, 16.0)
        if abs(radius - PATH_RADIUS) < 2.5:
            radius += 5.0  # keep the path itself clear
        landmarks.append({
            "pos": np.array([radius * np.cos(ang), radius * np.sin(ang), 0.0]),
            "width": float(rng.uniform(1.5, 4.0)),
            "height": float(rng.uniform(3.0, 9.0)),
            "color": rng.uniform(40, 220, size=3),
        })
    return landmarks


# ---------------------------------------------------------------------------
# camera model
# ---------------------------------------------------------------------------

def _camera_rotation(yaw: float, pitch: float) -> np.ndarray:
    """World-from-camera rotation; camera axes are (right, down, forward)."""
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    forward = np.array([cp * cy, cp * sy, -sp])
    right = np.array([sy, -cy, 0.0])
    down = np.cross(forward, right)
    return np.stack([right, down, forward], axis=1)


def _rotmat_to_quat(r: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (w, x, y, z), w >= 0."""
    t = np.trace(r)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array([0.25 * s, (r[2, 1] - r[1, 2]) / s,
                      (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(r[i, i] - r[j, j] - r[k, k] + 1.0) * 2
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[i + 1] = 0.25 * s
        q[j + 1] = (r[j, i] + r[i, j]) / s
        q[k + 1] = (r[k, i] + r[i, k]) / s
    q = q / np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def _camera_path(n_frames: int) -> tuple[np.ndarray, np.ndarray]:
    """Positions and yaws along a three-quarter arc of the ring road."""
    t = np.linspace(0.0, 1.5 * np.pi, n_frames)
    x = PATH_RADIUS * np.cos(t)
    y = PATH_RADIUS * np.sin(t)
    z = np.full_like(t, CAMERA_HEIGHT)
    yaw = t + np.pi / 2  # tangent heading, counter-clockwise travel
    return np.stack([x, y, z], axis=1), yaw


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def _render_frame(texture: np.ndarray, landmarks: list[dict],
                  position: np.ndarray, yaw: float, size: int) -> np.ndarray:
    focal = 0.9 * size
    cx = cy = (size - 1) / 2.0
    rot = _camera_rotation(yaw, CAMERA_PITCH)

    # sky gradient
    v = np.linspace(0, 1, size, dtype=np.float32)[:, None]
    sky = np.empty((size, size, 3), dtype=np.float32)
    sky[..., 0] = 120 + 60 * v
    sky[..., 1] = 150 + 40 * v
    sky[..., 2] = 200 + 30 * v
    frame = sky

    # ground plane via per-pixel ray casting into the wrapped texture
    us, vs = np.meshgrid(np.arange(size, dtype=np.float32),
                         np.arange(size, dtype=np.float32))
    rays_cam = np.stack([(us - cx) / focal, (vs - cy) / focal,
                         np.ones_like(us)], axis=-1)
    rays_world = rays_cam @ rot.T
    dz = rays_world[..., 2]
    hit = dz < -1e-6
    t_hit = np.where(hit, -position[2] / np.where(hit, dz, -1.0), 0.0)
    gx = position[0] + t_hit * rays_world[..., 0]
    gy = position[1] + t_hit * rays_world[..., 1]
    scale = TEXTURE_SIZE / WORLD_EXTENT
    map_x = ((gx + WORLD_EXTENT / 2) * scale) % TEXTURE_SIZE
    map_y = ((gy + WORLD_EXTENT / 2) * scale) % TEXTURE_SIZE
    ground = cv2.remap(texture, map_x.astype(np.float32),
                       map_y.astype(np.float32), cv2.INTER_LINEAR,
                       borderMode=cv2.BORDER_WRAP).astype(np.float32)
    # distance haze keeps the horizon from aliasing into noise
    haze = np.clip(t_hit / 60.0, 0, 1)[..., None].astype(np.float32)
    ground = ground * (1 - haze) + sky * haze
    frame = np.where(hit[..., None], ground, frame)

    # billboards, far to near
    cam_from_world = rot.T
    order = sorted(landmarks, key=lambda lm: -np.linalg.norm(lm["pos"][:2] - position[:2]))
    for lm in order:
        base = lm["pos"]
        along = np.array([-np.sin(np.arctan2(base[1] - position[1],
                                             base[0] - position[0])),
                          np.cos(np.arctan2(base[1] - position[1],
                                            base[0] - position[0])), 0.0])
        half = 0.5 * lm["width"] * along
        corners = np.stack([base - half, base + half,
                            base + half + [0, 0, lm["height"]],
                            base - half + [0, 0, lm["height"]]])
        cam_pts = (corners - position) @ cam_from_world.T
        if np.any(cam_pts[:, 2] < 0.5):
            continue
        px = focal * cam_pts[:, 0] / cam_pts[:, 2] + cx
        py = focal * cam_pts[:, 1] / cam_pts[:, 2] + cy
        if np.all(px < 0) or np.all(px >= size) or np.all(py < 0) or np.all(py >= size):
            continue
        dist = np.linalg.norm(base[:2] - position[:2])
        shade = np.clip(1.0 - dist / 90.0, 0.3, 1.0)
        poly = np.stack([px, py], axis=1).astype(np.int32)
        cv2.fillPoly(frame, [poly], (lm["color"] * shade).tolist())
        cv2.polylines(frame, [poly], True,
                      (lm["color"] * shade * 0.5).tolist(), 1)

    return np.clip(frame, 0, 255).astype(np.uint8)


def _apply_condition(frame: np.ndarray, spec: ConditionSpec,
                     rng: np.random.Generator) -> np.ndarray:
    hsv = cv2.cvtColor(frame, cv2.COLOR_RGB2HSV).astype(np.float32)
    hsv[..., 0] = (hsv[..., 0] + spec.hue_shift) % 180.0
    hsv[..., 1] = np.clip(hsv[..., 1] * spec.saturation, 0, 255)
    out = cv2.cvtColor(np.clip(hsv, 0, 255).astype(np.uint8),
                       cv2.COLOR_HSV2RGB).astype(np.float32)
    out = (out - 128.0) * spec.contrast + 128.0 + spec.brightness
    out = np.clip(out, 0, 255).astype(np.uint8)

    if spec.speckle_density > 0:
        h, w = out.shape[:2]
        n_dots = int(spec.speckle_density * h * w)
        ys = rng.integers(0, h, size=n_dots)
        xs = rng.integers(0, w, size=n_dots)
        out[ys, xs] = (235, 235, 240)
    return out


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def make_synthetic_seasons(seed: int, n_per_condition: int,
                           conditions: list[str], size: int = 128
                           ) -> tuple[MultiDomainDataset, PoseTrack, CorrespondenceSet]:
    """Render the shared camera path under each named condition."""
    if n_per_condition < 2:
        raise ValueError("need at least 2 frames per condition")
    if size not in (64, 128, 256):
        raise ValueError(f"size must be 64, 128 or 256, got {size}")
    unknown = [c for c in conditions if c not in CONDITION_SPECS]
    if unknown:
        raise ValueError(f"unknown condition spec(s): {unknown}; "
                         f"known: {sorted(CONDITION_SPECS)}")

    scene_rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    texture = _make_ground_texture(scene_rng)
    landmarks = _make_landmarks(scene_rng)
    positions, yaws = _camera_path(n_per_condition)

    base_frames = [_render_frame(texture, landmarks, positions[k], yaws[k], size)
                   for k in range(n_per_condition)]
    quats = np.stack([_rotmat_to_quat(_camera_rotation(yaw, CAMERA_PITCH))
                      for yaw in yaws])
    track = PoseTrack(frame_ids=np.arange(n_per_condition),
                      positions=positions.astype(np.float64),
                      quaternions=quats)

    images: list[tuple[ImageTensor, ConditionLabel, int]] = []
    for ci, cond in enumerate(conditions):
        spec = CONDITION_SPECS[cond]
        for k, base in enumerate(base_frames):
            rng = np.random.default_rng(np.random.SeedSequence([seed, 1, ci, k]))
            pixels = _apply_condition(base, spec, rng)
            images.append((ImageTensor(normalize_pixels(pixels)),
                           ConditionLabel(cond), k))

    ds = MultiDomainDataset(
        images=images,
        manifest={c: [f"{c}/{k:05d}.png" for k in range(n_per_condition)]
                  for c in conditions},
    )
    cs = CorrespondenceSet(pairs=tuple((k, k) for k in range(n_per_condition)),
                           tolerance=0)
    return ds, track, cs


def save_synthetic(ds: MultiDomainDataset, track: PoseTrack,
                   cs: CorrespondenceSet, out_dir: Path | str) -> None:
    """Persist per-condition PNG subdirectories plus pose and match CSVs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for cond in ds.conditions:
        cond_dir = out_dir / cond
        cond_dir.mkdir(exist_ok=True)
        for img, fid in ds.condition_images(cond):
            bgr = cv2.cvtColor(denormalize_pixels(img.data), cv2.COLOR_RGB2BGR)
            cv2.imwrite(str(cond_dir / f"{fid:05d}.png"), bgr)
    save_pose_file(track, out_dir / "poses.csv")
    save_correspondences(cs, out_dir / "correspondences.csv")
    write_manifest(ds, out_dir / "manifest.json")


def dataset_hash(ds: MultiDomainDataset) -> str:
    """SHA-256 over every image's bytes plus its label, loader-order stable."""
    h = hashlib.sha256()
    for img, label, fid in ds.images:
        h.update(f"{label.name}:{fid}".encode())
        h.update(np.ascontiguousarray(img.data).tobytes())
    return h.hexdigest()

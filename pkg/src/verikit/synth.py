"""Synthetic shape-counting videos: randomized circles/squares/triangles
composited onto background frames, with a ground-truth manifest.

Rendering is exact point-in-shape geometry at pixel centers (no
anti-aliasing), so an independent connected-component recount can audit the
ground truth. Shapes are static over their lifetime; a shape is active on the
frame at time t iff start_s <= t < end_s with t = k / fps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from ._version import __version__
from .core import SHAPE_KINDS
from .prompts import COUNTING_USER_PROMPT

DIFFICULTY_LEVELS = ("easy", "medium", "hard", "super_hard")

# Minimum pixel gap between shape bounding discs in non-overlapping mode,
# so the component recount can never merge two shapes.
_MIN_GAP_PX = 2.0

_PALETTE: tuple[tuple[int, int, int], ...] = (
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 212),
    (0, 128, 128),
    (220, 190, 255),
)

_MIN_COLOR_DISTANCE = 60.0


@dataclass(frozen=True)
class DifficultyPreset:
    size_range_px: tuple[float, float]
    duration_range_s: tuple[float, float]

    def __post_init__(self) -> None:
        for lo, hi in (self.size_range_px, self.duration_range_s):
            if not (0 < lo < hi):
                raise ValueError(f"range ({lo}, {hi}) must satisfy 0 < lo < hi")


_PRESETS: dict[str, DifficultyPreset] = {
    "easy": DifficultyPreset(size_range_px=(120.0, 240.0), duration_range_s=(3.0, 5.0)),
    "medium": DifficultyPreset(size_range_px=(40.0, 120.0), duration_range_s=(2.0, 4.0)),
    "hard": DifficultyPreset(size_range_px=(20.0, 40.0), duration_range_s=(1.0, 3.0)),
    "super_hard": DifficultyPreset(size_range_px=(15.0, 20.0), duration_range_s=(0.2, 1.0)),
}


def difficulty_preset(level: str) -> DifficultyPreset:
    try:
        return _PRESETS[level]
    except KeyError:
        raise ValueError(f"unknown difficulty {level!r}; expected one of {DIFFICULTY_LEVELS}") from None


def circumradius(kind: str, side_px: float) -> float:
    """Radius of the smallest disc containing the shape, for any rotation."""
    if kind == "circle":
        return side_px / 2.0
    if kind == "square":
        return side_px * math.sqrt(2.0) / 2.0
    if kind == "triangle":
        return side_px / math.sqrt(3.0)
    raise ValueError(f"unknown shape kind {kind!r}")


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    side_px: float  # circle diameter, square side, triangle side
    center: tuple[float, float]
    rotation_deg: float
    color: tuple[int, int, int]
    start_s: float
    end_s: float

    def __post_init__(self) -> None:
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.side_px <= 0:
            raise ValueError("side_px must be > 0")
        if self.end_s <= self.start_s:
            raise ValueError("shape lifetime must have end_s > start_s")
        if len(self.color) != 3 or any(not (0 <= c <= 255) for c in self.color):
            raise ValueError(f"color must be three 8-bit channels, got {self.color}")


def tally_counts(shapes: Sequence[ShapeSpec]) -> tuple[int, int, int]:
    return (
        sum(1 for s in shapes if s.kind == "circle"),
        sum(1 for s in shapes if s.kind == "square"),
        sum(1 for s in shapes if s.kind == "triangle"),
    )


@dataclass(frozen=True)
class ShapePlan:
    shapes: tuple[ShapeSpec, ...]
    gt_counts: tuple[int, int, int]
    seed: int
    difficulty: str
    video_duration_s: float
    fps: float
    frame_size: tuple[int, int]  # (width, height)
    non_overlapping: bool = False

    def __post_init__(self) -> None:
        if self.gt_counts != tally_counts(self.shapes):
            raise ValueError(
                f"gt_counts {self.gt_counts} != per-kind tally {tally_counts(self.shapes)}"
            )
        width, height = self.frame_size
        for spec in self.shapes:
            if spec.start_s < 0 or spec.end_s > self.video_duration_s:
                raise ValueError(
                    f"shape lifetime [{spec.start_s}, {spec.end_s}] outside video"
                )
            rc = circumradius(spec.kind, spec.side_px)
            cx, cy = spec.center
            if cx - rc < 0 or cy - rc < 0 or cx + rc > width or cy + rc > height:
                raise ValueError(f"shape at {spec.center} not fully inside {self.frame_size}")


@dataclass(frozen=True)
class SynthConfig:
    difficulty: str = "hard"
    shapes_per_video_range: tuple[int, int] = (3, 12)
    frame_size: tuple[int, int] = (640, 480)
    duration_s: float = 5.0
    fps: float = 3.0
    non_overlapping: bool = False
    background_rgb: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self) -> None:
        lo, hi = self.shapes_per_video_range
        if lo < 0 or hi < lo:
            raise ValueError(f"bad shapes_per_video_range {self.shapes_per_video_range}")
        if self.fps <= 0 or self.duration_s <= 0:
            raise ValueError("fps and duration_s must be > 0")


def frame_count(fps: float, duration_s: float) -> int:
    n = int(round(fps * duration_s))
    if n < 1:
        raise ValueError(f"fps {fps} x duration {duration_s} yields no frames")
    return n


def frame_timestamps(fps: float, duration_s: float) -> list[float]:
    return [k / fps for k in range(frame_count(fps, duration_s))]


def _visible_on_some_frame(start: float, end: float, fps: float, n_frames: int) -> bool:
    first = math.ceil(start * fps - 1e-9)
    return first < n_frames and first / fps < end


def _draw_color(
    rng: np.random.Generator, background_rgb: tuple[int, int, int]
) -> tuple[int, int, int]:
    """Palette draw, re-drawn while too close to the background mean color."""
    best: tuple[int, int, int] | None = None
    best_dist = -1.0
    for _ in range(64):
        color = _PALETTE[int(rng.integers(0, len(_PALETTE)))]
        dist = math.dist(color, background_rgb)
        if dist >= _MIN_COLOR_DISTANCE:
            return color
        if dist > best_dist:
            best, best_dist = color, dist
    return best if best is not None else _PALETTE[0]


def _place_center(
    rng: np.random.Generator,
    rc: float,
    frame_size: tuple[int, int],
    placed: list[tuple[float, float, float]],
    non_overlapping: bool,
    max_tries: int = 10_000,
) -> tuple[float, float]:
    width, height = frame_size
    if 2 * rc >= min(width, height):
        raise ValueError(f"frame {frame_size} too small for shape radius {rc:.1f}")
    for _ in range(max_tries):
        cx = float(rng.uniform(rc, width - rc))
        cy = float(rng.uniform(rc, height - rc))
        if not non_overlapping:
            return cx, cy
        if all(
            math.hypot(cx - px, cy - py) > rc + prc + _MIN_GAP_PX for px, py, prc in placed
        ):
            return cx, cy
    raise ValueError(
        "could not place a non-overlapping shape; enlarge the frame or reduce shape count"
    )


def _sample_timing(
    rng: np.random.Generator,
    duration_range: tuple[float, float],
    video_duration_s: float,
    fps: float,
    max_tries: int = 1000,
) -> tuple[float, float]:
    """Uniform (start, duration) with the shape visible on at least one frame.

    Lifetimes shorter than a frame period can fall between timestamps; such
    draws are resampled, with a frame-anchored fallback so the sampler always
    terminates.
    """
    n_frames = frame_count(fps, video_duration_s)
    dur_lo, dur_hi = duration_range
    dur_hi = min(dur_hi, video_duration_s)
    if dur_hi < dur_lo:
        raise ValueError(
            f"duration range {duration_range} does not fit video of {video_duration_s}s"
        )
    for _ in range(max_tries):
        d = float(rng.uniform(dur_lo, dur_hi))
        start = float(rng.uniform(0.0, video_duration_s - d))
        while start + d > video_duration_s:
            start = math.nextafter(start, 0.0)
        if _visible_on_some_frame(start, start + d, fps, n_frames):
            return start, start + d
    d = float(rng.uniform(dur_lo, dur_hi))
    k_max = max(0, math.floor((video_duration_s - d) * fps))
    k = int(rng.integers(0, min(k_max, n_frames - 1) + 1))
    start = k / fps
    return start, start + d


def sample_plan(config: SynthConfig, seed: int) -> ShapePlan:
    """Deterministic plan for one episode; all randomness comes from seed."""
    preset = difficulty_preset(config.difficulty)
    max_rc = max(circumradius(kind, preset.size_range_px[1]) for kind in SHAPE_KINDS)
    if 2 * max_rc + 2 > min(config.frame_size):
        raise ValueError(
            f"frame {config.frame_size} too small for {config.difficulty} preset "
            f"(needs at least {int(2 * max_rc + 2)}px per side)"
        )
    rng = np.random.default_rng(seed)
    lo, hi = config.shapes_per_video_range
    n_shapes = int(rng.integers(lo, hi + 1))
    shapes: list[ShapeSpec] = []
    placed: list[tuple[float, float, float]] = []
    for _ in range(n_shapes):
        kind = SHAPE_KINDS[int(rng.integers(0, len(SHAPE_KINDS)))]
        side = float(rng.uniform(*preset.size_range_px))
        rotation = float(rng.uniform(0.0, 360.0))
        color = _draw_color(rng, config.background_rgb)
        rc = circumradius(kind, side)
        cx, cy = _place_center(rng, rc, config.frame_size, placed, config.non_overlapping)
        start, end = _sample_timing(
            rng, preset.duration_range_s, config.duration_s, config.fps
        )
        shapes.append(
            ShapeSpec(
                kind=kind,
                side_px=side,
                center=(cx, cy),
                rotation_deg=rotation,
                color=color,
                start_s=start,
                end_s=end,
            )
        )
        placed.append((cx, cy, rc))
    return ShapePlan(
        shapes=tuple(shapes),
        gt_counts=tally_counts(shapes),
        seed=int(seed),
        difficulty=config.difficulty,
        video_duration_s=config.duration_s,
        fps=config.fps,
        frame_size=config.frame_size,
        non_overlapping=config.non_overlapping,
    )


def _polygon_vertices(spec: ShapeSpec) -> list[tuple[float, float]]:
    if spec.kind == "square":
        h = spec.side_px / 2.0
        base = [(-h, -h), (h, -h), (h, h), (-h, h)]
    elif spec.kind == "triangle":
        rc = circumradius("triangle", spec.side_px)
        base = [
            (rc * math.cos(a), rc * math.sin(a))
            for a in (math.pi / 2, math.pi / 2 + 2 * math.pi / 3, math.pi / 2 + 4 * math.pi / 3)
        ]
    else:
        raise ValueError(f"{spec.kind} is not a polygon")
    theta = math.radians(spec.rotation_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cx, cy = spec.center
    return [(cx + x * cos_t - y * sin_t, cy + x * sin_t + y * cos_t) for x, y in base]


def _paint_shape(img: np.ndarray, spec: ShapeSpec) -> None:
    """Opaque fill of all pixels whose centers lie inside the shape."""
    height, width = img.shape[:2]
    rc = circumradius(spec.kind, spec.side_px)
    cx, cy = spec.center
    x0 = max(0, int(math.floor(cx - rc)) - 1)
    x1 = min(width, int(math.ceil(cx + rc)) + 1)
    y0 = max(0, int(math.floor(cy - rc)) - 1)
    y1 = min(height, int(math.ceil(cy + rc)) + 1)
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    px = xs + 0.5
    py = ys + 0.5
    if spec.kind == "circle":
        r = spec.side_px / 2.0
        mask = (px - cx) ** 2 + (py - cy) ** 2 <= r * r
    else:
        verts = _polygon_vertices(spec)
        area2 = sum(
            ax * by - bx * ay
            for (ax, ay), (bx, by) in zip(verts, verts[1:] + verts[:1])
        )
        sign = 1.0 if area2 >= 0 else -1.0
        mask = np.ones(px.shape, dtype=bool)
        for (ax, ay), (bx, by) in zip(verts, verts[1:] + verts[:1]):
            cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
            mask &= sign * cross >= 0.0
    img[y0:y1, x0:x1][mask] = spec.color


def rasterize_frame(background: np.ndarray, active: Sequence[ShapeSpec]) -> np.ndarray:
    """Composite the active shapes onto a copy of the background, in order."""
    img = np.ascontiguousarray(background, dtype=np.uint8).copy()
    for spec in active:
        _paint_shape(img, spec)
    return img


def active_shapes(plan: ShapePlan, t: float) -> list[ShapeSpec]:
    return [s for s in plan.shapes if s.start_s <= t < s.end_s]


def render_frames(plan: ShapePlan, background: "BackgroundSource") -> list[np.ndarray]:
    frames = []
    for k, t in enumerate(frame_timestamps(plan.fps, plan.video_duration_s)):
        bg = background.frame(k, plan.frame_size)
        frames.append(rasterize_frame(bg, active_shapes(plan, t)))
    return frames


class SolidBackground:
    def __init__(self, rgb: tuple[int, int, int]):
        self.rgb = tuple(int(c) for c in rgb)
        if len(self.rgb) != 3 or any(not (0 <= c <= 255) for c in self.rgb):
            raise ValueError(f"bad background color {rgb}")

    def frame(self, index: int, size: tuple[int, int]) -> np.ndarray:
        width, height = size
        return np.full((height, width, 3), self.rgb, dtype=np.uint8)

    def describe(self) -> dict:
        return {"type": "solid", "rgb": list(self.rgb)}


class FrameDirBackground:
    """Cycles through the image files of a directory, in sorted-name order."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.files = sorted(
            p for p in self.path.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
        )
        if not self.files:
            raise ValueError(f"no background frames under {path}")

    def frame(self, index: int, size: tuple[int, int]) -> np.ndarray:
        src = self.files[index % len(self.files)]
        img = np.asarray(Image.open(src).convert("RGB"))
        width, height = size
        if img.shape != (height, width, 3):
            raise ValueError(
                f"background frame {src.name} is {img.shape[1]}x{img.shape[0]}, "
                f"expected {width}x{height}"
            )
        return img

    def describe(self) -> dict:
        return {"type": "frames", "path": str(self.path)}


BackgroundSource = SolidBackground | FrameDirBackground


def background_from_description(desc: Mapping) -> BackgroundSource | None:
    if desc.get("type") == "solid":
        return SolidBackground(tuple(desc["rgb"]))
    if desc.get("type") == "frames":
        path = Path(desc["path"])
        if path.is_dir():
            return FrameDirBackground(path)
    return None


def plan_to_dict(plan: ShapePlan) -> dict:
    return {
        "seed": plan.seed,
        "difficulty": plan.difficulty,
        "video_duration_s": plan.video_duration_s,
        "fps": plan.fps,
        "frame_size": list(plan.frame_size),
        "non_overlapping": plan.non_overlapping,
        "gt_counts": list(plan.gt_counts),
        "shapes": [
            {
                "kind": s.kind,
                "side_px": s.side_px,
                "center": list(s.center),
                "rotation_deg": s.rotation_deg,
                "color": list(s.color),
                "start_s": s.start_s,
                "end_s": s.end_s,
            }
            for s in plan.shapes
        ],
    }


def plan_from_dict(obj: Mapping) -> ShapePlan:
    shapes = tuple(
        ShapeSpec(
            kind=s["kind"],
            side_px=float(s["side_px"]),
            center=tuple(float(v) for v in s["center"]),
            rotation_deg=float(s["rotation_deg"]),
            color=tuple(int(v) for v in s["color"]),
            start_s=float(s["start_s"]),
            end_s=float(s["end_s"]),
        )
        for s in obj["shapes"]
    )
    return ShapePlan(
        shapes=shapes,
        gt_counts=tuple(int(v) for v in obj["gt_counts"]),
        seed=int(obj["seed"]),
        difficulty=obj["difficulty"],
        video_duration_s=float(obj["video_duration_s"]),
        fps=float(obj["fps"]),
        frame_size=tuple(int(v) for v in obj["frame_size"]),
        non_overlapping=bool(obj.get("non_overlapping", False)),
    )


def synthesize(plan: ShapePlan, background: BackgroundSource, out_dir: str | Path) -> Path:
    """Write frames/frame_*.png plus manifest.json; byte-identical per (plan, background)."""
    out = Path(out_dir)
    frames_dir = out / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    for k, frame in enumerate(render_frames(plan, background)):
        Image.fromarray(frame).save(frames_dir / f"frame_{k:05d}.png")
    manifest = {
        "version": __version__,
        "prompt": COUNTING_USER_PROMPT,
        "gt_counts": list(plan.gt_counts),
        "background": background.describe(),
        "plan": plan_to_dict(plan),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return out


def _classify_component(xs: np.ndarray, ys: np.ndarray) -> str:
    """Kind of a filled component from its pixel coordinates alone.

    Uses the area to bounding-disc ratio: ~1.0 for a disc, 2/pi for a square,
    3*sqrt(3)/(4*pi) for an equilateral triangle, at any rotation.
    """
    px = xs + 0.5
    py = ys + 0.5
    cx = px.mean()
    cy = py.mean()
    # Pixel-center sampling clips up to ~half a pixel off the true radius.
    radius = math.sqrt(((px - cx) ** 2 + (py - cy) ** 2).max()) + 0.5
    ratio = len(xs) / (math.pi * radius * radius)
    if ratio > 0.80:
        return "circle"
    if ratio > 0.51:
        return "square"
    return "triangle"


def count_components(
    frames: Sequence[np.ndarray], background_rgb: tuple[int, int, int]
) -> tuple[int, int, int]:
    """Recount shapes from pixels only: colored connected components,
    deduplicated across frames by (color, bounding box).

    Sound only when shapes never overlap (spatially disjoint for the whole
    video, with a pixel gap) and the background is a solid color: then every
    component is one single-colored shape.
    """
    bg = np.asarray(background_rgb, dtype=np.uint8)
    eight_connected = np.ones((3, 3), dtype=int)
    seen: dict[tuple, str] = {}
    for frame in frames:
        fg = np.any(frame != bg, axis=-1)
        if not fg.any():
            continue
        labels, n_labels = ndimage.label(fg, structure=eight_connected)
        for lab, region in enumerate(ndimage.find_objects(labels), start=1):
            if region is None:
                continue
            sub_ys, sub_xs = np.nonzero(labels[region] == lab)
            ys = sub_ys + region[0].start
            xs = sub_xs + region[1].start
            color = frame[ys[0], xs[0]]
            key = (
                int(color[0]),
                int(color[1]),
                int(color[2]),
                int(xs.min()),
                int(xs.max()),
                int(ys.min()),
                int(ys.max()),
            )
            if key not in seen:
                seen[key] = _classify_component(xs.astype(float), ys.astype(float))
    kinds = list(seen.values())
    return (kinds.count("circle"), kinds.count("square"), kinds.count("triangle"))


@dataclass(frozen=True)
class VerifyReport:
    ok: bool
    issues: tuple[str, ...]
    gt_counts: tuple[int, int, int]
    spec_tally: tuple[int, int, int]
    component_counts: tuple[int, int, int] | None

    def __str__(self) -> str:
        status = "OK" if self.ok else "MISMATCH"
        lines = [f"{status}: gt={self.gt_counts} spec_tally={self.spec_tally} "
                 f"components={self.component_counts}"]
        lines.extend(f"  - {issue}" for issue in self.issues)
        return "\n".join(lines)


def verify_dataset(dataset_dir: str | Path) -> VerifyReport:
    """Audit one synthesized episode directory against its own manifest."""
    root = Path(dataset_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise FileNotFoundError(f"missing manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    raw_plan = dict(manifest["plan"])
    gt_counts = tuple(int(v) for v in manifest["gt_counts"])

    issues: list[str] = []
    # Rebuild the plan from its shape list alone so a tampered count is a
    # reported mismatch, not a load failure.
    raw_plan["gt_counts"] = None
    shapes = tuple(
        ShapeSpec(
            kind=s["kind"],
            side_px=float(s["side_px"]),
            center=tuple(float(v) for v in s["center"]),
            rotation_deg=float(s["rotation_deg"]),
            color=tuple(int(v) for v in s["color"]),
            start_s=float(s["start_s"]),
            end_s=float(s["end_s"]),
        )
        for s in raw_plan["shapes"]
    )
    spec_tally = tally_counts(shapes)
    plan = ShapePlan(
        shapes=shapes,
        gt_counts=spec_tally,
        seed=int(raw_plan["seed"]),
        difficulty=raw_plan["difficulty"],
        video_duration_s=float(raw_plan["video_duration_s"]),
        fps=float(raw_plan["fps"]),
        frame_size=tuple(int(v) for v in raw_plan["frame_size"]),
        non_overlapping=bool(raw_plan.get("non_overlapping", False)),
    )
    if spec_tally != gt_counts:
        issues.append(f"manifest gt_counts {gt_counts} != per-kind spec tally {spec_tally}")

    n_expected = frame_count(plan.fps, plan.video_duration_s)
    frame_paths = [root / "frames" / f"frame_{k:05d}.png" for k in range(n_expected)]
    missing = [p.name for p in frame_paths if not p.is_file()]
    if missing:
        raise FileNotFoundError(f"missing frames: {missing[:3]}{'...' if len(missing) > 3 else ''}")
    frames = [np.asarray(Image.open(p).convert("RGB")) for p in frame_paths]

    background = background_from_description(manifest.get("background", {}))
    if background is not None:
        for k, (frame, rendered) in enumerate(zip(frames, render_frames(plan, background))):
            if not np.array_equal(frame, rendered):
                issues.append(f"frame {k}: stored pixels differ from re-render")

    component_counts: tuple[int, int, int] | None = None
    if plan.non_overlapping and isinstance(background, SolidBackground):
        component_counts = count_components(frames, background.rgb)
        if component_counts != gt_counts:
            issues.append(
                f"component recount {component_counts} != manifest gt_counts {gt_counts}"
            )

    return VerifyReport(
        ok=not issues,
        issues=tuple(issues),
        gt_counts=gt_counts,
        spec_tally=spec_tally,
        component_counts=component_counts,
    )


def episode_seed(base_seed: int, episode_index: int) -> int:
    """Per-episode seed derived solely from (base seed, episode index)."""
    return int(np.random.SeedSequence([base_seed, episode_index]).generate_state(1, np.uint64)[0])

"""Synthetic flights and cockpit-view rendering.

A trajectory is a smooth pitch/roll time series. Each sample is rendered
once per camera view in one of three schematic styles:

* ``horizon-scene``: windshield view, sky above and ground below a horizon
  line offset by ``px_per_deg * pitch`` pixels and tilted by the roll angle.
* ``efis-panel``: electronic attitude display with a pitch ladder and a
  fixed aircraft symbol, surrounded by panel chrome.
* ``round-gauge``: mechanical attitude indicator, horizon inside a bezel.

Image coordinates have x to the right and y down. A right roll tilts the
horizon so that its right end rises on screen.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage, signal

from .attitude import DEFAULT_BINNING, AttitudeClass, AttitudeSample, BinningConfig, classify_attitude
from .dataset import LabelRow, stratified_split, write_labels_csv, write_ppm, write_split_csv
from .errors import InvalidConfigError

VIEW_IDS = ("pilot_ws", "copilot_ws", "pilot_efis", "copilot_efis", "gauge")
STYLES = ("horizon-scene", "efis-panel", "round-gauge")

MAX_STEP_DEG = 2.0
OCCLUDER_RGB = (24, 24, 24)

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class Trajectory:
    samples: tuple[AttitudeSample, ...]
    sample_rate_hz: float

    def __len__(self):
        return len(self.samples)

    @property
    def pitch(self) -> np.ndarray:
        return np.array([s.pitch_deg for s in self.samples])

    @property
    def roll(self) -> np.ndarray:
        return np.array([s.roll_deg for s in self.samples])


@dataclass(frozen=True)
class ViewSpec:
    view_id: str
    style: str = "horizon-scene"
    width_px: int = 64
    height_px: int = 64
    crop_region: tuple[float, float, float, float] | None = None  # (x0, y0, x1, y1) normalized
    px_per_deg: float | None = None  # default height_px / 40

    def __post_init__(self):
        if self.style not in STYLES:
            raise InvalidConfigError(f"unknown style {self.style!r}; expected one of {STYLES}")
        if self.width_px <= 0 or self.height_px <= 0:
            raise InvalidConfigError("image size must be positive")
        if self.crop_region is not None:
            x0, y0, x1, y1 = self.crop_region
            if not (0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1):
                raise InvalidConfigError(f"crop_region {self.crop_region} must have positive area inside [0,1]^2")
        if self.px_per_deg is not None and self.px_per_deg <= 0:
            raise InvalidConfigError("px_per_deg must be positive")

    @property
    def scale(self) -> float:
        return self.px_per_deg if self.px_per_deg is not None else self.height_px / 40.0


@dataclass(frozen=True)
class DegradationSpec:
    blur_sigma_px: float = 0.0
    glare_strength: float = 0.0
    darkness: float = 0.0
    occlusion_fraction: float = 0.0
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.blur_sigma_px < 0 or self.noise_std < 0:
            raise InvalidConfigError("blur_sigma_px and noise_std must be >= 0")
        for name in ("glare_strength", "darkness", "occlusion_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidConfigError(f"{name} must be in [0, 1], got {v}")


NO_DEGRADATION = DegradationSpec()


@dataclass(frozen=True)
class Frame:
    frame_id: int
    view_id: str
    timestamp_ms: int
    image: np.ndarray = field(repr=False)
    label: AttitudeClass
    truth: tuple[float, float]


def default_views(size: int = 64) -> list[ViewSpec]:
    """The five cockpit cameras. Instrument views keep a centred 80% crop."""
    crop = (0.1, 0.1, 0.9, 0.9)
    return [
        ViewSpec("pilot_ws", "horizon-scene", size, size),
        ViewSpec("copilot_ws", "horizon-scene", size, size),
        ViewSpec("pilot_efis", "efis-panel", size, size, crop),
        ViewSpec("copilot_efis", "efis-panel", size, size, crop),
        ViewSpec("gauge", "round-gauge", size, size, crop),
    ]


# --------------------------------------------------------------------------
# trajectory
# --------------------------------------------------------------------------


def _smooth_axis(rng, t, bound):
    n_waves = 3
    periods = rng.uniform(25.0, 150.0, n_waves)
    phases = rng.uniform(0.0, 2 * np.pi, n_waves)
    weights = rng.uniform(0.5, 1.0, n_waves)
    raw = (weights[:, None] * np.sin(2 * np.pi * t[None, :] / periods[:, None] + phases[:, None])).sum(0)
    raw /= np.sqrt(0.5 * np.sum(weights**2))

    # Low-pass filtered white noise, time constant ~4 s regardless of rate.
    dt = t[1] - t[0] if t.size > 1 else 1.0
    a = math.exp(-dt / 4.0)
    noise = signal.lfilter([1.0 - a], [1.0, -a], rng.standard_normal(t.size))
    noise *= math.sqrt((1 + a) / (1 - a))  # back to unit variance
    raw = raw + 0.35 * noise

    x = bound * np.tanh(0.9 * raw)
    # Slew limit; values stay inside the hull of x, hence inside the bound.
    out = np.empty_like(x)
    out[0] = x[0]
    for i in range(1, x.size):
        v = out[i - 1] + min(max(x[i] - out[i - 1], -MAX_STEP_DEG), MAX_STEP_DEG)
        # The sum can round one ulp past the limit; pull it back.
        while abs(v - out[i - 1]) > MAX_STEP_DEG:
            v = np.nextafter(v, out[i - 1])
        out[i] = v
    return out


def simulate_trajectory(
    duration_s: float,
    sample_rate_hz: float,
    seed: int,
    pitch_bound: float = 10.0,
    roll_bound: float = 15.0,
) -> Trajectory:
    """Sum-of-sinusoids plus filtered noise attitude history, deterministic in ``seed``."""
    if not (duration_s > 0 and math.isfinite(duration_s)):
        raise InvalidConfigError(f"duration must be > 0, got {duration_s}")
    if not (sample_rate_hz > 0 and math.isfinite(sample_rate_hz)):
        raise InvalidConfigError(f"sample rate must be > 0, got {sample_rate_hz}")
    if pitch_bound <= 0 or roll_bound <= 0 or pitch_bound > 90 or roll_bound > 180:
        raise InvalidConfigError("pitch/roll bounds must be in (0, 90] and (0, 180]")
    n = int(round(duration_s * sample_rate_hz))
    if n < 1:
        raise InvalidConfigError("duration * rate yields no samples")
    t = np.arange(n) / sample_rate_hz
    rng = np.random.default_rng(seed & _SEED_MASK)
    pitch = _smooth_axis(rng, t, pitch_bound)
    roll = _smooth_axis(rng, t, roll_bound)
    step_ms = 1000.0 / sample_rate_hz
    samples = tuple(
        AttitudeSample(int(round(i * step_ms)), float(p), float(r)) for i, (p, r) in enumerate(zip(pitch, roll))
    )
    return Trajectory(samples, float(sample_rate_hz))


# --------------------------------------------------------------------------
# rendering
# --------------------------------------------------------------------------

_PALETTES = {
    # view -> (sky, ground)
    "pilot_ws": ((112, 162, 222), (84, 118, 58)),
    "copilot_ws": ((140, 178, 228), (112, 96, 66)),
    "pilot_efis": ((36, 112, 232), (150, 92, 40)),
    "copilot_efis": ((28, 100, 210), (160, 100, 48)),
    "gauge": ((64, 132, 210), (120, 80, 40)),
}
_DEFAULT_PALETTE = ((120, 170, 225), (100, 110, 60))


def _coverage(dist):
    """Fraction of a unit pixel on the positive side of an edge at signed distance ``dist``."""
    return np.clip(dist + 0.5, 0.0, 1.0)


def _horizon_coords(shape, centre, pitch_deg, roll_deg, scale):
    """Signed distance to the horizon (positive towards the ground) and along-horizon coordinate."""
    h, w = shape
    cx, cy = centre
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = xs + 0.5 - cx
    dy = ys + 0.5 - cy
    phi = math.radians(roll_deg)
    s, c = math.sin(phi), math.cos(phi)
    normal = dx * s + dy * c - scale * pitch_deg
    along = dx * c - dy * s
    return normal, along


def _paint(canvas, mask, rgb):
    m = mask[..., None]
    canvas *= 1.0 - m
    canvas += m * np.asarray(rgb, dtype=np.float64)


def _draw_horizon(canvas, normal, sky, ground):
    g = _coverage(normal)[..., None]
    canvas[:] = (1.0 - g) * np.asarray(sky, float) + g * np.asarray(ground, float)


def _bar(normal, along, offset, half_len, half_thick=0.5):
    """Coverage of a bar parallel to the horizon ``offset`` pixels above it."""
    v = np.abs(normal + offset)
    return np.clip(0.5 + half_thick - v, 0, 1) * np.clip(0.5 + half_len - np.abs(along), 0, 1)


def _rect_mask(shape, x0, y0, x1, y1):
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w] + 0.5
    fx = np.clip(np.minimum(xs - x0, x1 - xs) + 0.5, 0, 1)
    fy = np.clip(np.minimum(ys - y0, y1 - ys) + 0.5, 0, 1)
    return fx * fy


def _aircraft_symbol(shape, centre, size, rgb, canvas):
    h, w = shape
    cx, cy = centre
    ys, xs = np.mgrid[0:h, 0:w] + 0.5
    dy = np.abs(ys - cy)
    dxa = np.abs(xs - cx)
    wings = np.clip(1.5 - dy, 0, 1) * np.clip(0.5 + size - dxa, 0, 1) * np.clip(dxa - 0.25 * size + 0.5, 0, 1)
    dot = np.clip(1.0 + 0.5 - np.hypot(xs - cx, ys - cy), 0, 1)
    _paint(canvas, np.maximum(wings, dot), rgb)


def _render_canvas(view: ViewSpec, pitch_deg, roll_deg):
    """Draw the full, uncropped instrument or scene. Returns (canvas, crop box in pixels)."""
    w, h = view.width_px, view.height_px
    if view.crop_region is None:
        cw, ch = w, h
        box = (0, 0)
    else:
        x0, y0, x1, y1 = view.crop_region
        cw = int(round(w / (x1 - x0)))
        ch = int(round(h / (y1 - y0)))
        box = (int(round(x0 * cw)), int(round(y0 * ch)))
        box = (min(box[0], cw - w), min(box[1], ch - h))
    shape = (ch, cw)
    centre = (cw / 2.0, ch / 2.0)
    sky, ground = _PALETTES.get(view.view_id, _DEFAULT_PALETTE)
    k = view.scale
    canvas = np.zeros((ch, cw, 3), dtype=np.float64)
    normal, along = _horizon_coords(shape, centre, pitch_deg, roll_deg, k)

    if view.style == "horizon-scene":
        _draw_horizon(canvas, normal, sky, ground)
    elif view.style == "efis-panel":
        _draw_horizon(canvas, normal, sky, ground)
        for deg in (-10, -5, 5, 10):
            half = 0.16 * cw if deg % 10 == 0 else 0.09 * cw
            _paint(canvas, _bar(normal, along, deg * k, half), (235, 235, 235))
        _aircraft_symbol(shape, centre, 0.22 * cw, (250, 210, 0), canvas)
        m = 0.12
        display = _rect_mask(shape, m * cw, m * ch, (1 - m) * cw, (1 - m) * ch)
        _paint(canvas, 1.0 - display, (46, 48, 54))
    else:  # round-gauge
        _draw_horizon(canvas, normal, sky, ground)
        for deg in (-10, 10):
            _paint(canvas, _bar(normal, along, deg * k, 0.1 * cw), (240, 240, 240))
        _aircraft_symbol(shape, centre, 0.2 * cw, (255, 140, 0), canvas)
        ys, xs = np.mgrid[0:ch, 0:cw] + 0.5
        r = np.hypot(xs - centre[0], ys - centre[1])
        radius = 0.38 * min(cw, ch)
        inside = np.clip(radius - r + 0.5, 0, 1)
        ring = np.clip(1.5 - np.abs(r - radius - 1.5), 0, 1)
        _paint(canvas, 1.0 - inside, (18, 18, 20))
        _paint(canvas, ring, (150, 150, 155))
    return canvas, box


def _frame_rng(degrade: DegradationSpec, timestamp_ms: int):
    return np.random.default_rng([degrade.seed & _SEED_MASK, int(timestamp_ms)])


def apply_degradations(image: np.ndarray, degrade: DegradationSpec, rng) -> np.ndarray:
    """Apply blur, glare, darkness, noise, occlusion in that order to a float RGB image."""
    img = image.astype(np.float64, copy=True)
    h, w, _ = img.shape
    if degrade.blur_sigma_px > 0:
        img = ndimage.gaussian_filter(img, sigma=(degrade.blur_sigma_px, degrade.blur_sigma_px, 0), mode="nearest")
    if degrade.glare_strength > 0:
        gx, gy = rng.uniform(0, w), rng.uniform(0, h)
        ys, xs = np.mgrid[0:h, 0:w] + 0.5
        spread = 0.3 * max(h, w)
        blob = np.exp(-((xs - gx) ** 2 + (ys - gy) ** 2) / (2 * spread**2))
        img += degrade.glare_strength * blob[..., None] * (255.0 - img)
    if degrade.darkness > 0:
        img *= 1.0 - degrade.darkness
    if degrade.noise_std > 0:
        img += rng.normal(0.0, degrade.noise_std, img.shape)
    if degrade.occlusion_fraction > 0:
        # Full-width band across the middle of the view, like a cowling or wiper blade.
        n = int(round(degrade.occlusion_fraction * h))
        top = (h - n) // 2
        img[top : top + n] = OCCLUDER_RGB
    return img


def render_frame(
    sample: AttitudeSample,
    view: ViewSpec,
    degrade: DegradationSpec = NO_DEGRADATION,
    binning: BinningConfig = DEFAULT_BINNING,
    frame_id: int = 0,
) -> Frame:
    canvas, (bx, by) = _render_canvas(view, sample.pitch_deg, sample.roll_deg)
    img = canvas[by : by + view.height_px, bx : bx + view.width_px]
    img = apply_degradations(img, degrade, _frame_rng(degrade, sample.timestamp_ms))
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return Frame(
        frame_id=frame_id,
        view_id=view.view_id,
        timestamp_ms=sample.timestamp_ms,
        image=pixels,
        label=classify_attitude(sample.pitch_deg, sample.roll_deg, binning),
        truth=(sample.pitch_deg, sample.roll_deg),
    )


# --------------------------------------------------------------------------
# dataset writing
# --------------------------------------------------------------------------


@dataclass
class DatasetManifest:
    root: Path
    rows: list[LabelRow]
    labels_path: Path
    split_path: Path
    meta_path: Path


def generate_dataset(
    traj: Trajectory,
    views: Sequence[ViewSpec],
    degrades: Mapping[str, DegradationSpec] | None,
    binning: BinningConfig,
    out_dir,
    test_fraction: float = 0.2,
    split_seed: int = 0,
    extra_meta: Mapping | None = None,
) -> DatasetManifest:
    """Render every (sample, view) pair and write images, labels, split and metadata."""
    degrades = dict(degrades or {})
    ids = [v.view_id for v in views]
    if len(set(ids)) != len(ids):
        raise InvalidConfigError(f"duplicate view ids in {ids}")
    unknown = set(degrades) - set(ids)
    if unknown:
        raise InvalidConfigError(f"degradations given for unknown views {sorted(unknown)}")
    root = Path(out_dir)
    try:
        for v in views:
            (root / "images" / v.view_id).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory under {root}: {exc}") from exc

    rows = []
    for frame_id, sample in enumerate(traj.samples):
        for v in views:
            frame = render_frame(sample, v, degrades.get(v.view_id, NO_DEGRADATION), binning, frame_id)
            path = root / "images" / v.view_id / f"{frame_id:06d}.ppm"
            try:
                write_ppm(path, frame.image)
            except OSError as exc:
                raise OSError(f"cannot write {path}: {exc}") from exc
            rows.append(
                LabelRow(frame_id, v.view_id, sample.timestamp_ms, sample.pitch_deg, sample.roll_deg, int(frame.label))
            )

    labels_path = root / "labels.csv"
    split_path = root / "split.csv"
    meta_path = root / "dataset.json"
    write_labels_csv(labels_path, rows)

    frame_labels = np.array([r.class_id for r in rows[:: len(views)]]) if views else np.zeros(0)
    train, test = stratified_split(frame_labels, test_fraction, split_seed)
    split = {int(i): "train" for i in train}
    split.update({int(i): "test" for i in test})
    write_split_csv(split_path, split)

    meta = {
        "alpha_deg": binning.alpha_deg,
        "n_samples": len(traj),
        "sample_rate_hz": traj.sample_rate_hz,
        "test_fraction": test_fraction,
        "split_seed": split_seed,
        "views": [asdict(v) for v in views],
        "degradations": {k: asdict(d) for k, d in sorted(degrades.items())},
    }
    if extra_meta:
        meta.update(extra_meta)
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return DatasetManifest(root, rows, labels_path, split_path, meta_path)


def parse_views(names: str, size: int = 64) -> list[ViewSpec]:
    """Resolve a comma-separated list of view ids (or ``all``) to default view specs."""
    available = {v.view_id: v for v in default_views(size)}
    if names.strip() == "all":
        return list(available.values())
    out = []
    for name in names.split(","):
        name = name.strip()
        if name not in available:
            raise InvalidConfigError(f"unknown view {name!r}; expected one of {', '.join(VIEW_IDS)} or 'all'")
        out.append(available[name])
    return out


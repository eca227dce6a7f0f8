"""Distorted-image corpus on iso-MSE levels.

Six distortion families are applied to a base image, and each strength is
calibrated by bisection so the distorted image lands on a requested MSE
(0-255 scale). Calibration happens on 8-bit quantised output, so the images
written to disk hit their levels too.
"""

import json
from dataclasses import asdict, dataclass
from enum import IntEnum
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import fft, ndimage

from .image_blocks import GrayImage, InvalidParameterError, mse, quantize, read_pgm, write_pgm


class CalibrationError(RuntimeError):
    pass


class DistortionKind(IntEnum):
    ORIGINAL = 0
    CONTRAST_STRETCH = 1
    GAUSSIAN_NOISE = 2
    LUMINANCE_ENHANCE = 3
    GAUSSIAN_BLUR = 4
    SALT_PEPPER = 5
    JPEG_LIKE = 6

    @property
    def letter(self):
        return "OCGLBIJ"[self.value]


DISTORTIONS = tuple(DistortionKind)[1:]

# upper end of the bisection bracket, per kind
_MAX_STRENGTH = {
    DistortionKind.CONTRAST_STRETCH: 50.0,
    DistortionKind.GAUSSIAN_NOISE: 2.0,
    DistortionKind.LUMINANCE_ENHANCE: 1.0,
    DistortionKind.GAUSSIAN_BLUR: 32.0,
    DistortionKind.SALT_PEPPER: 1.0,
    DistortionKind.JPEG_LIKE: 64.0,
}

# JPEG standard luminance quantisation table (ITU T.81, Annex K)
JPEG_LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


@dataclass(frozen=True)
class DistortionSpec:
    kind: DistortionKind
    strength: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DistortionKind(self.kind))
        if not self.strength >= 0:
            raise InvalidParameterError("distortion strength must be non-negative")

    def to_json(self):
        d = asdict(self)
        d["kind"] = int(self.kind)
        return d


def _noise_field(shape, seed):
    return np.random.default_rng(np.random.SeedSequence([int(seed), 0x6E6F])).standard_normal(shape)


def _impulse_plan(size, seed):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7370]))
    order = rng.permutation(size)
    values = rng.integers(0, 2, size).astype(np.float64)
    return order, values


def _salt_pepper(x, s, seed):
    flat = x.reshape(-1).copy()
    order, values = _impulse_plan(flat.size, seed)
    count = s * flat.size
    full = int(np.floor(count))
    idx = order[:full]
    flat[idx] = values[:full]
    frac = count - full
    if frac > 0 and full < flat.size:
        # fractional pixel keeps MSE continuous in the flip fraction
        p = order[full]
        flat[p] += frac * (values[full] - flat[p])
    return flat.reshape(x.shape)


def _blur(x, s):
    radius = int(np.ceil(3.0 * s))
    if radius == 0:
        return x.copy()
    return ndimage.gaussian_filter(x, sigma=s, mode="reflect", radius=radius)


def _jpeg_like(x, s):
    h, w = x.shape
    H, W = -(-h // 8) * 8, -(-w // 8) * 8
    pad = np.pad(x * 255.0 - 128.0, ((0, H - h), (0, W - w)), mode="edge")
    tiles = pad.reshape(H // 8, 8, W // 8, 8).transpose(0, 2, 1, 3)
    coef = fft.dctn(tiles, axes=(2, 3), norm="ortho")
    step = JPEG_LUMA * s
    coef = np.round(coef / step) * step
    rec = fft.idctn(coef, axes=(2, 3), norm="ortho")
    rec = rec.transpose(0, 2, 1, 3).reshape(H, W)[:h, :w]
    return (rec + 128.0) / 255.0


def apply(image, spec):
    """Apply one distortion; the result is clamped to [0, 1]."""
    if spec.strength == 0 or spec.kind is DistortionKind.ORIGINAL:
        return GrayImage(image.width, image.height, image.pixels.copy())
    x = image.as_array()
    s = float(spec.strength)
    kind = spec.kind
    if kind is DistortionKind.CONTRAST_STRETCH:
        y = (1.0 + s) * (x - 0.5) + 0.5
    elif kind is DistortionKind.GAUSSIAN_NOISE:
        y = x + s * _noise_field(x.shape, spec.seed)
    elif kind is DistortionKind.LUMINANCE_ENHANCE:
        y = x + s
    elif kind is DistortionKind.GAUSSIAN_BLUR:
        y = _blur(x, s)
    elif kind is DistortionKind.SALT_PEPPER:
        y = _salt_pepper(x, min(s, 1.0), spec.seed)
    elif kind is DistortionKind.JPEG_LIKE:
        y = _jpeg_like(x, s)
    else:  # pragma: no cover
        raise InvalidParameterError(f"unknown distortion {kind!r}")
    return GrayImage.from_array(np.clip(y, 0.0, 1.0))


def distorted_mse(image, spec):
    return mse(image, quantize(apply(image, spec)))


def calibrate_to_mse(image, kind, target_mse, tol=0.01, seed=0, max_steps=100):
    """Bisect the strength of ``kind`` until the (8-bit) MSE is within ``tol``.

    Stochastic kinds keep one noise realisation (from ``seed``) throughout,
    so the achieved MSE is a deterministic function of strength.
    """
    kind = DistortionKind(kind)
    if kind is DistortionKind.ORIGINAL:
        raise InvalidParameterError("cannot calibrate the identity distortion")
    if target_mse < 0:
        raise InvalidParameterError("target MSE must be non-negative")
    if target_mse == 0:
        return DistortionSpec(kind, 0.0, seed)
    lo, hi = 0.0, _MAX_STRENGTH[kind]
    top = distorted_mse(image, DistortionSpec(kind, hi, seed))
    if top < target_mse * (1 - tol):
        raise CalibrationError(
            f"{kind.name} cannot reach MSE {target_mse:g}; achievable max is {top:.4g}"
        )
    # aim well inside the band; accept anything within ``tol`` if bisection
    # stalls (8-bit rounding makes MSE piecewise constant in strength)
    aim = 0.25 * tol
    best = None
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        spec = DistortionSpec(kind, mid, seed)
        got = distorted_mse(image, spec)
        err = abs(got - target_mse) / target_mse
        if best is None or err < best[0]:
            best = (err, spec)
        if err <= aim:
            return spec
        if got < target_mse:
            lo = mid
        else:
            hi = mid
    if best[0] <= tol:
        return best[1]
    raise CalibrationError(
        f"{kind.name}: bisection did not reach MSE {target_mse:g} within {tol:.0%}"
        f" (closest {best[0]:.2%} off); achievable max is {top:.4g}"
    )


def cell_seed(seed, kind, level_index):
    ss = np.random.SeedSequence([int(seed), int(kind), int(level_index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class LabeledImage:
    name: str
    image: GrayImage
    label: int
    target_mse: float
    achieved_mse: float
    spec: DistortionSpec


def protocol_levels():
    """MSE 45, 90, ..., 900."""
    return [45.0 * i for i in range(1, 21)]


def parse_levels(text):
    """``"45:900:45"`` (inclusive range) or a comma list."""
    if ":" in text:
        lo, hi, step = (float(t) for t in text.split(":"))
        if step <= 0 or hi < lo:
            raise ValueError(f"bad level range {text!r}: need lo <= hi and step > 0")
        n = int(round((hi - lo) / step)) + 1
        levels = [lo + step * i for i in range(n)]
    else:
        levels = [float(t) for t in text.split(",") if t.strip()]
    if not levels or min(levels) <= 0:
        raise ValueError(f"bad levels {text!r}: need at least one positive MSE")
    return levels


def synth_dataset(base, levels, kinds=DISTORTIONS, seed=0, tol=0.01):
    """Original plus one calibrated image per (kind, level), kind-major order."""
    base = quantize(base)
    out = [
        LabeledImage("000_original.pgm", base, 0, 0.0, 0.0,
                     DistortionSpec(DistortionKind.ORIGINAL, 0.0, 0))
    ]
    for kind in kinds:
        kind = DistortionKind(kind)
        for li, level in enumerate(levels):
            spec = calibrate_to_mse(base, kind, level, tol, cell_seed(seed, kind, li))
            img = quantize(apply(base, spec))
            name = f"{len(out):03d}_{kind.name.lower()}_{li:02d}.pgm"
            out.append(LabeledImage(name, img, int(kind), float(level), mse(base, img), spec))
    return out


def write_dataset(items, out_dir, extra=None):
    """Write PGMs plus ``manifest.json`` (filename -> label, MSEs, spec)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for it in items:
        write_pgm(out_dir / it.name, it.image)
        files[it.name] = {
            "kind": it.label,
            "kind_name": DistortionKind(it.label).name.lower(),
            "target_mse": it.target_mse,
            "achieved_mse": it.achieved_mse,
            "spec": it.spec.to_json(),
        }
    manifest = {"files": files}
    if extra:
        manifest.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out_dir / "manifest.json"


def read_dataset(data_dir):
    """Images and labels in manifest order; unlabeled directories get label -1."""
    data_dir = Path(data_dir)
    mpath = data_dir / "manifest.json"
    if mpath.exists():
        files = json.loads(mpath.read_text())["files"]
        names = list(files)
        labels = [int(files[n]["kind"]) for n in names]
    else:
        names = sorted(p.name for p in data_dir.glob("*.pgm"))
        labels = [-1] * len(names)
    if not names:
        raise FileNotFoundError(f"no PGM images in {data_dir}")
    images = [read_pgm(data_dir / n) for n in names]
    return names, images, labels


# -- bundled base image -------------------------------------------------------


def synthetic_texture(size=64, seed=7):
    """Deterministic textured test image with strong fine-scale content.

    A mix of oriented gratings and band-passed noise, scaled into
    [0.1, 0.9] so brightness and contrast changes have some headroom before
    clipping.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size))
    for period, angle, amp in [(5.0, 0.3, 1.0), (9.0, 1.9, 0.8), (3.5, 2.6, 0.6), (14.0, 0.9, 0.7)]:
        u = xx * np.cos(angle) + yy * np.sin(angle)
        img += amp * np.sin(2 * np.pi * u / period + rng.uniform(0, 2 * np.pi))
    noise = rng.standard_normal((size, size))
    img += 1.2 * (ndimage.gaussian_filter(noise, 0.8) - ndimage.gaussian_filter(noise, 3.0)) * 3.0
    envelope = 0.6 + 0.4 * np.sin(np.pi * xx / size) * np.cos(np.pi * (yy - size / 2) / size)
    img = img * envelope
    # soft saturation pushes the histogram outwards: high variance means blur
    # and blocking can still reach large MSE levels
    img = np.tanh(1.5 * (img - img.mean()) / img.std())
    img = (img - img.min()) / (img.max() - img.min())
    return quantize(GrayImage.from_array(0.1 + 0.8 * img))


def bundled_image():
    """The 64 x 64 texture shipped with the package."""
    with resources.as_file(resources.files("ssimm") / "data" / "texture64.pgm") as p:
        return read_pgm(p)

"""On-disk formats: JSON checkpoints, CSV tables and P6 images.

Floats are always written with 17 significant digits so that every 64-bit
value survives a write/read round trip exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .net import MlpParams, MlpSpec
from .paths import TimeClamp

FORMAT_VERSION = 1
IMAGE_SIZE = 512
MARK = 3


def fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path, header: list[str], rows) -> None:
    """Comma-separated table with a mandatory header row and ``\\n`` line endings."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([v if isinstance(v, str) else fmt(v) for v in row] for row in rows)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        header, *rows = csv.reader(fh)
    return header, rows


# --------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    params: MlpParams
    schedule: str
    loss_kind: str
    label_drop_eta: float
    t_clamp: TimeClamp
    seed: int
    n_steps: int


def _float_list(arr: np.ndarray) -> str:
    return "[" + ",".join(fmt(v) for v in np.asarray(arr, dtype=np.float64).ravel()) + "]"


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    spec = asdict(ckpt.params.spec)
    spec["hidden"] = list(spec["hidden"])
    doc = {
        "format_version": FORMAT_VERSION,
        "spec": spec,
        "schedule": ckpt.schedule,
        "loss_kind": ckpt.loss_kind,
        "label_drop_eta": ckpt.label_drop_eta,
        "t_clamp": {"eps_low": ckpt.t_clamp.eps_low, "eps_high": ckpt.t_clamp.eps_high},
        "seed": ckpt.seed,
        "n_steps": ckpt.n_steps,
        "arrays": {},
    }
    # arrays are spliced in as text so their floats keep 17 significant digits
    blobs = {}
    for i, (name, arr) in enumerate(sorted(ckpt.params.items())):
        key = f"@@array{i}@@"
        blobs[key] = _float_list(arr)
        doc["arrays"][name] = {"shape": list(arr.shape), "data": key}
    text = json.dumps(doc, indent=1)
    for key, blob in blobs.items():
        text = text.replace(f'"{key}"', blob)
    Path(path).write_text(text + "\n")


def load_checkpoint(path) -> Checkpoint:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}", field="checkpoint") from exc
    if doc.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {doc.get('format_version')}", "checkpoint")
    try:
        spec = MlpSpec(**{**doc["spec"], "hidden": tuple(doc["spec"]["hidden"])})
        arrays = {
            name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in doc["arrays"].items()
        }
        params = MlpParams(spec, arrays)
        clamp = TimeClamp(**doc["t_clamp"])
        return Checkpoint(
            params,
            doc["schedule"],
            doc["loss_kind"],
            float(doc["label_drop_eta"]),
            clamp,
            int(doc["seed"]),
            int(doc["n_steps"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed checkpoint {path}: {exc}", field="checkpoint") from exc


# --------------------------------------------------------------------------
# images

PALETTE = np.array(
    [[31, 119, 180], [214, 39, 40], [44, 160, 44], [148, 103, 189], [255, 127, 14],
     [140, 86, 75], [227, 119, 194], [23, 190, 207]],
    dtype=np.uint8,
)


def _pixels(points: np.ndarray, bounds) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x_min, x_max, y_min, y_max = bounds
    cols = np.floor((points[:, 0] - x_min) / (x_max - x_min) * IMAGE_SIZE).astype(np.int64)
    rows = np.floor((y_max - points[:, 1]) / (y_max - y_min) * IMAGE_SIZE).astype(np.int64)
    # the upper edges belong to the last pixel
    cols = np.where(points[:, 0] == x_max, IMAGE_SIZE - 1, cols)
    rows = np.where(points[:, 1] == y_min, IMAGE_SIZE - 1, rows)
    inside = (cols >= 0) & (cols < IMAGE_SIZE) & (rows >= 0) & (rows < IMAGE_SIZE)
    return rows, cols, inside


def scatter_image(points, bounds, labels=None) -> np.ndarray:
    """512x512 RGB raster, white background, one 3x3 mark per in-bounds point."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    img = np.full((IMAGE_SIZE, IMAGE_SIZE, 3), 255, dtype=np.uint8)
    rows, cols, inside = _pixels(points, bounds)
    if labels is None:
        colors = np.zeros((points.shape[0], 3), dtype=np.uint8)
    else:
        colors = PALETTE[np.asarray(labels) % len(PALETTE)]
    half = MARK // 2
    for r, c, color in zip(rows[inside], cols[inside], colors[inside]):
        img[max(r - half, 0) : r + half + 1, max(c - half, 0) : c + half + 1] = color
    return img


def heatmap_image(counts: np.ndarray) -> np.ndarray:
    """Grey-scale raster of a 2D histogram (x along columns, y up), 512x512."""
    counts = np.asarray(counts, dtype=np.float64)
    peak = counts.max()
    level = counts / peak if peak > 0 else counts
    grey = np.round(255.0 * (1.0 - level)).astype(np.uint8).T[::-1]
    r = np.arange(IMAGE_SIZE) * grey.shape[0] // IMAGE_SIZE
    c = np.arange(IMAGE_SIZE) * grey.shape[1] // IMAGE_SIZE
    big = grey[r][:, c]
    return np.repeat(big[:, :, None], 3, axis=2)


def write_ppm(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    h, w, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a P6 file in the layout written by :func:`write_ppm`."""
    magic, size, depth, pixels = Path(path).read_bytes().split(b"\n", 3)
    if magic != b"P6" or depth != b"255":
        raise ValueError("not an 8-bit binary PPM file")
    w, h = (int(v) for v in size.split())
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3)

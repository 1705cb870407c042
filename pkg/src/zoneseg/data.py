"""Synthetic prostate-phantom dataset: generation, file codec, and splitting.

Every sample is a 256x256 grayscale image in [0, 1] with an integer label
map over {0=BG, 1=CZ, 2=PZ, 3=TZ, 4=TUM}. Four zone combinations occur:
CP (CZ+PZ), CPT (+TZ), CPU (+tumor), CPTU (all four); CZ and PZ are always
present. The generator is deterministic in its seed, the stratified split
is deterministic in its seed, and the on-disk layout is

    images/<id>.png    8-bit grayscale, intensity = round(255 * v)
    masks/<id>.png     8-bit paletted, pixel value = class index
    manifest.csv       columns: id, combo, split
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .errors import DataError

CANVAS = 256
NUM_CLASSES = 5
CLASS_NAMES = ("BG", "CZ", "PZ", "TZ", "TUM")

COMBOS = ("CP", "CPT", "CPU", "CPTU")
COMBO_ZONES = {
    "CP": (1, 2),
    "CPT": (1, 2, 3),
    "CPU": (1, 2, 4),
    "CPTU": (1, 2, 3, 4),
}
# relative combo frequencies of the clinical cohort the phantoms stand in for
COMBO_WEIGHTS = {"CP": 73, "CPT": 68, "CPU": 23, "CPTU": 41}

ZONE_INTENSITY = {0: 0.10, 1: 0.55, 2: 0.40, 3: 0.70, 4: 0.85}
NOISE_SIGMA = 0.05
BLUR_SIGMA = 1.0

# palette doubles as the display colormap: BG black, CZ blue, PZ green,
# TZ yellow, TUM red
MASK_PALETTE = ((0, 0, 0), (0, 0, 255), (0, 255, 0), (255, 255, 0), (255, 0, 0))


@dataclass
class Sample:
    sample_id: str
    image: np.ndarray  # (256, 256) float32 in [0, 1]
    mask: np.ndarray  # (256, 256) uint8 in {0..4}
    combo: str


@dataclass
class ManifestEntry:
    sample_id: str
    combo: str
    split: str = ""  # "train" | "test" | ""


@dataclass
class Manifest:
    root: Path
    entries: list

    def ids(self, split=None):
        return [e.sample_id for e in self.entries if split is None or e.split == split]


def _rotated_coords(shape, cy, cx, angle):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    dy, dx = yy - cy, xx - cx
    cos, sin = np.cos(angle), np.sin(angle)
    return dy * cos - dx * sin, dx * cos + dy * sin


def _ellipse(shape, cy, cx, ry, rx, angle=0.0):
    ry_, rx_ = _rotated_coords(shape, cy, cx, angle)
    return (ry_ / ry) ** 2 + (rx_ / rx) ** 2 <= 1.0


def _draw_mask(rng, combo):
    shape = (CANVAS, CANVAS)
    mask = np.zeros(shape, dtype=np.uint8)

    # central zone: large ellipse near the canvas center
    cy = CANVAS / 2 + rng.uniform(-10, 10)
    cx = CANVAS / 2 + rng.uniform(-10, 10)
    ry = rng.uniform(45, 60)
    rx = rng.uniform(55, 75)
    angle = rng.uniform(-0.3, 0.3)
    cz = _ellipse(shape, cy, cx, ry, rx, angle)

    # peripheral zone: crescent band hugging the lower part of the CZ
    scale = rng.uniform(1.25, 1.45)
    outer = _ellipse(shape, cy, cx, ry * scale, rx * scale, angle)
    dy_rot, _ = _rotated_coords(shape, cy, cx, angle)
    pz = outer & ~cz & (dy_rot > -0.25 * ry)

    mask[cz] = 1
    mask[pz] = 2

    if 3 in COMBO_ZONES[combo]:
        # transition zone: smaller ellipse in the upper interior of the CZ
        tz = _ellipse(
            shape,
            cy + rng.uniform(-0.35, -0.05) * ry,
            cx + rng.uniform(-0.2, 0.2) * rx,
            rng.uniform(0.28, 0.42) * ry,
            rng.uniform(0.28, 0.42) * rx,
            rng.uniform(-0.3, 0.3),
        )
        mask[tz] = 3

    if 4 in COMBO_ZONES[combo]:
        # tumor: irregular blob centered on the CZ boundary so it straddles zones
        phi0 = rng.uniform(0, 2 * np.pi)
        reach = rng.uniform(0.85, 1.05)
        bcy = cy + reach * ry * np.sin(phi0)
        bcx = cx + reach * rx * np.cos(phi0)
        r0 = rng.uniform(9, 16)
        amps = rng.uniform(0, 0.25, size=3) / np.arange(2, 5)
        phases = rng.uniform(0, 2 * np.pi, size=3)
        yy, xx = np.mgrid[0:CANVAS, 0:CANVAS]
        phi = np.arctan2(yy - bcy, xx - bcx)
        radius = np.hypot(yy - bcy, xx - bcx)
        boundary = r0 * (
            1.0
            + sum(a * np.cos(k * phi + p) for a, k, p in zip(amps, range(2, 5), phases))
        )
        mask[radius <= boundary] = 4

    return mask


def generate_phantom(seed: int, combo: str) -> Sample:
    """Deterministically synthesize one phantom sample for a zone combination."""
    if combo not in COMBOS:
        raise DataError(f"unknown zone combination {combo!r}; expected one of {COMBOS}")
    rng = np.random.default_rng(seed)
    wanted = set(COMBO_ZONES[combo])
    for _ in range(20):
        mask = _draw_mask(rng, combo)
        if set(np.unique(mask)) - {0} == wanted:
            break
    else:
        raise DataError(f"could not realize combo {combo} from seed {seed}")

    intensity = np.empty(mask.shape, dtype=np.float64)
    for label, mean in ZONE_INTENSITY.items():
        intensity[mask == label] = mean
    intensity += rng.normal(0.0, NOISE_SIGMA, size=mask.shape)
    np.clip(intensity, 0.0, 1.0, out=intensity)
    image = gaussian_filter(intensity, sigma=BLUR_SIGMA).astype(np.float32)
    return Sample(sample_id=f"seed{seed}", image=image, mask=mask, combo=combo)


def apportion(total: int, weights) -> list:
    """Largest-remainder apportionment of ``total`` across integer weights.

    Ties in the fractional remainder are broken by position. The result sums
    to ``total`` and deviates from exact proportionality by less than 1 per
    stratum.
    """
    weights = list(weights)
    wsum = sum(weights)
    floors = [total * w // wsum for w in weights]
    remainders = [total * w % wsum for w in weights]
    leftover = total - sum(floors)
    for i in sorted(range(len(weights)), key=lambda i: (-remainders[i], i))[:leftover]:
        floors[i] += 1
    return floors


def combo_counts(total: int) -> dict:
    """Number of samples per zone combination for a dataset of ``total``."""
    counts = apportion(total, [COMBO_WEIGHTS[c] for c in COMBOS])
    return dict(zip(COMBOS, counts))


def generate_dataset(seed: int, total: int = 205) -> list:
    """Generate ``total`` phantoms with combo proportions 73:68:23:41."""
    if total < 4:
        raise DataError(f"dataset needs at least 4 samples, got {total}")
    samples = []
    index = 0
    for combo, count in combo_counts(total).items():
        for k in range(count):
            sample = generate_phantom(seed * 1_000_000 + index, combo)
            sample.sample_id = f"{combo.lower()}-{k:03d}"
            samples.append(sample)
            index += 1
    return samples


def stratified_split(items, train_fraction: float = 0.85, seed: int = 0) -> dict:
    """Assign each sample id to "train" or "test", stratified by combo.

    Each combo contributes floor(train_fraction * n) samples to train;
    strata with the largest fractional remainders are promoted until the
    global train count equals round(train_fraction * total). Membership is
    a seeded shuffle within each stratum.
    """
    items = list(items)
    if not items:
        raise DataError("cannot split an empty manifest")
    if not 0.0 <= train_fraction <= 1.0:
        raise DataError(f"train_fraction must be in [0, 1], got {train_fraction}")
    by_combo = {c: [] for c in COMBOS}
    for item in items:
        if item.combo not in by_combo:
            raise DataError(f"sample {item.sample_id!r} has unknown combo {item.combo!r}")
        by_combo[item.combo].append(item.sample_id)

    total = len(items)
    target = int(round(train_fraction * total))
    quotas = {c: train_fraction * len(ids) for c, ids in by_combo.items()}
    train_counts = {c: int(np.floor(q)) for c, q in quotas.items()}
    leftover = target - sum(train_counts.values())
    promotable = sorted(
        (c for c in COMBOS if train_counts[c] < len(by_combo[c])),
        key=lambda c: (-(quotas[c] - train_counts[c]), COMBOS.index(c)),
    )
    for c in promotable[:leftover]:
        train_counts[c] += 1

    rng = np.random.default_rng(seed)
    split = {}
    for combo in COMBOS:
        ids = sorted(by_combo[combo])
        rng.shuffle(ids)
        for i, sample_id in enumerate(ids):
            split[sample_id] = "train" if i < train_counts[combo] else "test"
    return split


def write_image(path, image: np.ndarray):
    arr = np.round(np.asarray(image, dtype=np.float64) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def read_image(path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float32)
    return arr / 255.0


def write_mask(path, mask: np.ndarray):
    mask = np.asarray(mask)
    bad = np.setdiff1d(np.unique(mask), np.arange(NUM_CLASSES))
    if bad.size:
        raise DataError(f"mask contains invalid value {bad[0]} (valid: 0..{NUM_CLASSES - 1})")
    img = Image.fromarray(mask.astype(np.uint8), mode="P")
    palette = [v for rgb in MASK_PALETTE for v in rgb]
    img.putpalette(palette + [0] * (768 - len(palette)))
    img.save(path)


def read_mask(path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode not in ("P", "L"):
            raise DataError(f"{path}: mask must be 8-bit paletted or grayscale, got mode {img.mode}")
        mask = np.asarray(img, dtype=np.uint8)
    bad = np.setdiff1d(np.unique(mask), np.arange(NUM_CLASSES))
    if bad.size:
        raise DataError(f"{path}: invalid mask value {bad[0]} (valid: 0..{NUM_CLASSES - 1})")
    return mask


def write_manifest(root, entries):
    with open(Path(root) / "manifest.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "combo", "split"])
        for e in entries:
            writer.writerow([e.sample_id, e.combo, e.split])


def save_dataset(samples, out_dir, split=None) -> Manifest:
    """Write images/, masks/ and manifest.csv for a list of samples."""
    root = Path(out_dir)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    entries = []
    for s in samples:
        write_image(root / "images" / f"{s.sample_id}.png", s.image)
        write_mask(root / "masks" / f"{s.sample_id}.png", s.mask)
        entries.append(
            ManifestEntry(s.sample_id, s.combo, "" if split is None else split[s.sample_id])
        )
    write_manifest(root, entries)
    return Manifest(root=root, entries=entries)


def load_dataset(data_dir) -> Manifest:
    root = Path(data_dir)
    manifest_path = root / "manifest.csv"
    if not manifest_path.is_file():
        raise DataError(f"no manifest.csv in {root}")
    entries = []
    with open(manifest_path, newline="") as f:
        for row in csv.DictReader(f):
            entry = ManifestEntry(row["id"], row["combo"], row.get("split", "") or "")
            if entry.combo not in COMBOS:
                raise DataError(f"{manifest_path}: unknown combo {entry.combo!r} for id {entry.sample_id}")
            for sub in ("images", "masks"):
                if not (root / sub / f"{entry.sample_id}.png").is_file():
                    raise DataError(f"missing file {root / sub / (entry.sample_id + '.png')}")
            entries.append(entry)
    if not entries:
        raise DataError(f"{manifest_path}: empty manifest")
    return Manifest(root=root, entries=entries)


def load_sample(manifest: Manifest, entry: ManifestEntry) -> Sample:
    image = read_image(manifest.root / "images" / f"{entry.sample_id}.png")
    mask = read_mask(manifest.root / "masks" / f"{entry.sample_id}.png")
    if image.shape != mask.shape:
        raise DataError(
            f"image/mask size mismatch for {entry.sample_id}: {image.shape} vs {mask.shape}"
        )
    labels = set(np.unique(mask)) - {0}
    if labels != set(COMBO_ZONES[entry.combo]):
        raise DataError(
            f"mask labels {sorted(labels)} do not match combo {entry.combo} "
            f"for sample {entry.sample_id}"
        )
    return Sample(entry.sample_id, image, mask, entry.combo)


def load_split_samples(manifest: Manifest, split: str) -> list:
    return [load_sample(manifest, e) for e in manifest.entries if e.split == split]

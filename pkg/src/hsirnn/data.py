"""Hyperspectral cubes, ground truth rasters, patches and train/test splits."""
import json
import os
from dataclasses import dataclass

import numpy as np

from .exceptions import ArgumentError, DataError, FormatError

# per-class training counts of the two public benchmark scenes
PAVIA_UNIVERSITY_TRAIN = {1: 548, 2: 540, 3: 392, 4: 542, 5: 256, 6: 532, 7: 375, 8: 514, 9: 231}
PAVIA_UNIVERSITY_TEST = {1: 6083, 2: 18109, 3: 1707, 4: 2522, 5: 1089, 6: 4497, 7: 955,
                         8: 3168, 9: 716}
PAVIA_UNIVERSITY_CLASSES = ("Asphalt", "Meadows", "Gravel", "Trees", "Metal sheet",
                            "Bare Soil", "Bitumen", "Bricks", "Shadows")

INDIAN_PINES_TRAIN = {1: 30, 2: 150, 3: 150, 4: 100, 5: 150, 6: 150, 7: 20, 8: 150, 9: 15,
                      10: 150, 11: 150, 12: 150, 13: 150, 14: 150, 15: 50, 16: 50}
INDIAN_PINES_TEST = {1: 16, 2: 1278, 3: 680, 4: 137, 5: 333, 6: 580, 7: 8, 8: 328, 9: 5,
                     10: 822, 11: 2305, 12: 443, 13: 55, 14: 1115, 15: 336, 16: 43}
INDIAN_PINES_CLASSES = ("Alfalfa", "Corn-notill", "Corn-min", "Corn", "Grass-pasture",
                        "Grass-trees", "Grass-pasture-mowed", "Hay-windrowed", "Oats",
                        "Soybean-notill", "Soybean-mintill", "Soybean-clean", "Wheat",
                        "Woods", "Building-grass-trees", "Stone-steel-towers")


@dataclass
class HSICube:
    values: np.ndarray  # (rows, cols, bands) float64

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    @property
    def bands(self):
        return self.values.shape[2]


@dataclass
class GroundTruthRaster:
    labels: np.ndarray  # (rows, cols) int, 0 = unlabeled

    @property
    def rows(self):
        return self.labels.shape[0]

    @property
    def cols(self):
        return self.labels.shape[1]

    @property
    def n_classes(self):
        return int(self.labels.max(initial=0))

    def class_counts(self):
        ids, counts = np.unique(self.labels[self.labels > 0], return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}


# ---------------------------------------------------------------------------
# ENVI

ENVI_DTYPES = {1: "u1", 2: "i2", 4: "f4", 5: "f8", 12: "u2"}
REQUIRED_KEYS = ("samples", "lines", "bands", "data type", "interleave", "byte order")


def read_envi_header(path):
    """Parse ``key = value`` lines of an ENVI header into a lowercase-keyed dict.

    Values in braces may span several lines and are returned as raw strings.
    """
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        lines = f.read().splitlines()
    header = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line or line.startswith(";") or "=" not in line:
            continue
        key, _, val = line.partition("=")
        val = val.strip()
        if val.startswith("{"):
            while not val.endswith("}") and i < len(lines):
                val += "\n" + lines[i].strip()
                i += 1
        header[key.strip().lower()] = val
    return header


def _header_int(header, key):
    try:
        return int(header[key])
    except KeyError:
        raise FormatError(f"ENVI header is missing required key {key!r}") from None
    except ValueError:
        raise FormatError(f"ENVI header key {key!r} is not an integer: {header[key]!r}") from None


def _guess_data_path(header_path):
    stem, ext = os.path.splitext(header_path)
    base = stem if ext.lower() == ".hdr" else header_path
    for candidate in (base + ".img", base + ".raw", base + ".dat", base + ".bsq", base):
        if candidate != header_path and os.path.exists(candidate):
            return candidate
    raise FormatError(f"no data file found next to {header_path}")


def load_envi(header_path, data_path=None):
    """Read an ENVI BSQ image.

    Returns a ``GroundTruthRaster`` for single-band integer images and an
    ``HSICube`` (float64) otherwise.
    """
    header = read_envi_header(header_path)
    for key in REQUIRED_KEYS:
        if key not in header:
            raise FormatError(f"ENVI header is missing required key {key!r}")
    samples = _header_int(header, "samples")
    lines = _header_int(header, "lines")
    bands = _header_int(header, "bands")
    dtype_code = _header_int(header, "data type")
    byte_order = _header_int(header, "byte order")
    offset = int(header.get("header offset", 0) or 0)
    interleave = header["interleave"].strip().lower()
    if dtype_code not in ENVI_DTYPES:
        raise FormatError(f"unsupported ENVI data type {dtype_code}; "
                          f"supported: {sorted(ENVI_DTYPES)}")
    if interleave != "bsq":
        raise FormatError(f"unsupported interleave {interleave!r}; only bsq is read")
    if byte_order not in (0, 1):
        raise FormatError(f"invalid byte order {byte_order}")
    dtype = np.dtype(("<" if byte_order == 0 else ">") + ENVI_DTYPES[dtype_code])

    if data_path is None:
        data_path = _guess_data_path(header_path)
    with open(data_path, "rb") as f:
        raw = f.read()
    expected = samples * lines * bands * dtype.itemsize
    if len(raw) - offset != expected:
        raise FormatError(
            f"payload size mismatch: header declares {samples}x{lines}x{bands} "
            f"of {dtype.itemsize}-byte values ({expected} bytes), "
            f"file holds {len(raw) - offset}")
    data = np.frombuffer(raw, dtype=dtype, offset=offset).reshape(bands, lines, samples)
    if bands == 1 and dtype.kind in "iu":
        return GroundTruthRaster(labels=data[0].astype(np.int64))
    return HSICube(values=np.ascontiguousarray(data.transpose(1, 2, 0), dtype=np.float64))


def write_envi(obj, header_path, data_path=None):
    """Write a cube (as float64) or raster (as uint16) in ENVI BSQ layout."""
    if data_path is None:
        stem, ext = os.path.splitext(header_path)
        data_path = (stem if ext.lower() == ".hdr" else header_path) + ".img"
    if isinstance(obj, GroundTruthRaster):
        arr = obj.labels[None].astype("<u2")
        code = 12
    else:
        arr = np.ascontiguousarray(obj.values.transpose(2, 0, 1), dtype="<f8")
        code = 5
    bands, lines, samples = arr.shape
    text = (
        "ENVI\n"
        f"samples = {samples}\n"
        f"lines = {lines}\n"
        f"bands = {bands}\n"
        "header offset = 0\n"
        "file type = ENVI Standard\n"
        f"data type = {code}\n"
        "interleave = bsq\n"
        "byte order = 0\n"
    )
    with open(header_path, "w", encoding="ascii") as f:
        f.write(text)
    with open(data_path, "wb") as f:
        f.write(arr.tobytes())
    return header_path, data_path


# ---------------------------------------------------------------------------
# preprocessing


def normalize(cube):
    """Per-band min-max scaling to [0, 1]; constant bands become 0."""
    v = cube.values
    lo = v.min(axis=(0, 1))
    span = v.max(axis=(0, 1)) - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (v - lo) / safe, 0.0)
    return HSICube(values=out)


def reflect_index(idx, n):
    """Mirror out-of-range indices about the edges (edge pixel not repeated)."""
    idx = np.asarray(idx)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.abs(idx) % period
    return np.where(idx >= n, period - idx, idx)


def extract_patches(cube, rows, cols, P):
    """Stack of ``(P, P, D)`` windows centered on each ``(rows[i], cols[i])``."""
    if P < 1 or P % 2 == 0:
        raise ArgumentError(f"patch size must be a positive odd number, got {P}")
    values = cube.values if isinstance(cube, HSICube) else np.asarray(cube)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    off = np.arange(P) - P // 2
    ri = reflect_index(rows[:, None] + off, values.shape[0])
    ci = reflect_index(cols[:, None] + off, values.shape[1])
    return values[ri[:, :, None], ci[:, None, :]]


def extract_patch(cube, row, col, P):
    return extract_patches(cube, [row], [col], P)[0]


# ---------------------------------------------------------------------------
# splits


@dataclass
class SplitSpec:
    """Training pixels to draw per class.

    Either ``counts`` maps class id to a count, or ``per_class`` applies one
    count to every class present in the raster.
    """
    counts: dict = None
    seed: int = 0
    per_class: int = None

    def __post_init__(self):
        if self.counts is not None:
            self.counts = {int(k): int(v) for k, v in self.counts.items()}
            bad = {k: v for k, v in self.counts.items() if v < 1}
            if bad:
                raise ArgumentError(f"training counts must be positive: {bad}")
        elif self.per_class is None:
            raise ArgumentError("split needs either per-class counts or per_class")
        elif self.per_class < 1:
            raise ArgumentError(f"per_class must be positive, got {self.per_class}")

    def resolve(self, gt):
        if self.counts is not None:
            return dict(sorted(self.counts.items()))
        return {k: self.per_class for k in sorted(gt.class_counts())}

    def with_seed(self, seed):
        return SplitSpec(counts=self.counts, seed=seed, per_class=self.per_class)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        seed = int(d.pop("seed", 0))
        if "per_class" in d:
            return cls(per_class=int(d.pop("per_class")), seed=seed)
        counts = d.pop("counts", None)
        if counts is None:
            counts = {k: v for k, v in d.items() if str(k).isdigit()}
        return cls(counts=counts, seed=seed)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(f.read())

    def to_dict(self):
        if self.counts is None:
            return {"per_class": self.per_class, "seed": self.seed}
        d = {str(k): v for k, v in sorted(self.counts.items())}
        d["seed"] = self.seed
        return d


@dataclass
class SampleSet:
    rows: np.ndarray
    cols: np.ndarray
    labels: np.ndarray
    role: str = "train"

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return zip(self.rows.tolist(), self.cols.tolist(), self.labels.tolist())

    def class_counts(self):
        ids, counts = np.unique(self.labels, return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}

    @classmethod
    def from_flat(cls, flat_idx, gt, role):
        flat_idx = np.asarray(flat_idx, dtype=np.int64)
        r, c = np.divmod(flat_idx, gt.cols)
        return cls(rows=r, cols=c, labels=gt.labels.reshape(-1)[flat_idx].astype(np.int64),
                   role=role)


def make_split(gt, split):
    """Draw the requested training pixels per class; every other labeled pixel
    is a test pixel. Returns ``(train, test)``."""
    rng = np.random.default_rng(split.seed)
    flat = gt.labels.reshape(-1)
    counts = split.resolve(gt)
    train_idx = []
    for k, n in counts.items():
        idx = np.flatnonzero(flat == k)
        if len(idx) < n:
            raise DataError(
                f"class {k} has {len(idx)} labeled pixels, {n} training samples requested")
        chosen = rng.choice(len(idx), size=n, replace=False)
        train_idx.append(np.sort(idx[chosen]))
    train_idx = np.concatenate(train_idx) if train_idx else np.zeros(0, dtype=np.int64)
    in_train = np.zeros(flat.size, dtype=bool)
    in_train[train_idx] = True
    test_idx = np.flatnonzero((flat > 0) & ~in_train)
    return (SampleSet.from_flat(train_idx, gt, "train"),
            SampleSet.from_flat(test_idx, gt, "test"))


# ---------------------------------------------------------------------------
# synthetic scenes


def _signatures(C, D, rng, jitter=0.02, min_rms=0.005):
    # A shared template of two or three Gaussian bumps; each class perturbs its
    # bump centers, widths and heights, so classes are distinct yet similar.
    bands = np.arange(D, dtype=np.float64)
    n_bumps = int(rng.integers(2, 4))
    centers = rng.uniform(0.1 * D, 0.9 * D, size=n_bumps)
    widths = rng.uniform(D / 12, D / 5, size=n_bumps)
    amps = rng.uniform(0.3, 1.0, size=n_bumps)
    for _ in range(1000):
        sig = np.full((C, D), 0.1)
        for k in range(C):
            c = centers + rng.normal(scale=jitter * D, size=n_bumps)
            w = widths * (1.0 + rng.uniform(-2.5, 2.5, size=n_bumps) * jitter)
            a = amps * (1.0 + rng.uniform(-5.0, 5.0, size=n_bumps) * jitter)
            sig[k] += (a * np.exp(-0.5 * ((bands[:, None] - c) / w) ** 2)).sum(axis=1)
        diff = sig[:, None, :] - sig[None, :, :]
        rms = np.sqrt((diff ** 2).mean(axis=2))
        if rms[~np.eye(C, dtype=bool)].min() >= min_rms:
            return sig
    raise DataError("could not draw distinct class signatures")  # pragma: no cover


def _regions(C, rows, cols, rng):
    # Voronoi cells around jittered grid centers: convex, hence contiguous,
    # and of roughly equal area.
    gc = int(np.ceil(np.sqrt(C)))
    gr = int(np.ceil(C / gc))
    cells = [(i, j) for i in range(gr) for j in range(gc)][:C]
    centers = np.array([((i + 0.5 + rng.uniform(-0.15, 0.15)) * rows / gr,
                         (j + 0.5 + rng.uniform(-0.15, 0.15)) * cols / gc)
                        for i, j in cells])
    rr, cc = np.mgrid[0:rows, 0:cols]
    d2 = (rr[..., None] - centers[:, 0]) ** 2 + (cc[..., None] - centers[:, 1]) ** 2
    return d2.argmin(axis=-1) + 1


def synth_dataset(C=4, D=64, rows=40, cols=40, noise=0.05, seed=0, jitter=0.02):
    """Fully labeled synthetic scene with ``C`` contiguous class regions.

    Each class spectrum is a sum of two or three Gaussian bumps on a 0.1
    baseline. All classes perturb one shared bump template; ``jitter`` sets how
    far apart they drift, and small values make single spectra hard to tell
    apart under noise. i.i.d. Gaussian noise of standard deviation ``noise`` is
    added per band and pixel.
    """
    if C < 2:
        raise ArgumentError(f"need at least 2 classes, got {C}")
    if D < 8:
        raise ArgumentError(f"need at least 8 bands, got {D}")
    rng = np.random.default_rng(seed)
    sig = _signatures(C, D, rng, jitter=jitter)
    labels = _regions(C, rows, cols, rng)
    values = sig[labels - 1]
    if noise > 0:
        values = values + rng.normal(scale=noise, size=values.shape)
    return HSICube(values=values), GroundTruthRaster(labels=labels.astype(np.int64))

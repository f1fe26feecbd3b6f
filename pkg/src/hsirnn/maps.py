"""Per-pixel classification of a whole scene and PPM map rendering."""
import numpy as np

from .models import SPATIAL_VARIANTS, predict_logits
from .data import extract_patches

# class id -> RGB; id 0 (unlabeled) is black
PALETTE = (
    (0, 0, 0),
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
    (170, 110, 40),
    (255, 250, 200),
    (128, 0, 0),
    (170, 255, 195),
)


class Palette:
    def __init__(self, colors=PALETTE):
        self.colors = np.array(colors, dtype=np.uint8)

    def __len__(self):
        return len(self.colors)

    def __getitem__(self, class_id):
        return tuple(int(c) for c in self.colors[class_id])

    def colorize(self, labels):
        labels = np.asarray(labels)
        if labels.max(initial=0) >= len(self.colors):
            raise ValueError(f"class id {labels.max()} has no palette entry "
                             f"(palette covers 0..{len(self.colors) - 1})")
        return self.colors[labels]


def classify_scene(m, cube, batch_size=2048):
    """Predicted class id (1-based) for every pixel of ``cube``."""
    rows, cols = cube.rows, cube.cols
    rr, cc = np.divmod(np.arange(rows * cols), cols)
    out = np.empty(rows * cols, dtype=np.int64)
    for start in range(0, rows * cols, batch_size):
        sl = slice(start, start + batch_size)
        if m.spec.variant in SPATIAL_VARIANTS:
            X = extract_patches(cube, rr[sl], cc[sl], m.spec.P)
        else:
            X = cube.values[rr[sl], cc[sl]]
        out[sl] = predict_logits(m, X).argmax(axis=1) + 1
    return out.reshape(rows, cols)


def encode_ppm(rgb):
    """Binary PPM (P6, maxval 255) bytes for an ``(rows, cols, 3)`` uint8 image."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    rows, cols, _ = rgb.shape
    return f"P6\n{cols} {rows}\n255\n".encode("ascii") + rgb.tobytes()


def write_ppm(path, labels, palette=None):
    palette = palette or Palette()
    data = encode_ppm(palette.colorize(labels))
    with open(path, "wb") as f:
        f.write(data)
    return len(data)


def read_ppm(path):
    """Parse a P6 file written by ``write_ppm`` into an ``(rows, cols, 3)`` array."""
    with open(path, "rb") as f:
        data = f.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6" or len(parts) < 4:
        raise ValueError("not a binary PPM")
    cols, rows = (int(t) for t in parts[1].split())
    if int(parts[2]) != 255:
        raise ValueError("only maxval 255 is supported")
    pix = np.frombuffer(parts[3], dtype=np.uint8)
    if pix.size != rows * cols * 3:
        raise ValueError(f"expected {rows * cols * 3} pixel bytes, found {pix.size}")
    return pix.reshape(rows, cols, 3)

"""Image and field serialization, synthetic test images, raster rendering.

Codecs are deliberately minimal: PGM (P2/P5) in, PGM/PPM (P6) out, a
plain-text "GVF1" vector field container, and a one-pair-per-line
contour CSV.  All writers are deterministic: identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ParameterError
from .grid import GridSpec, ScalarField, VectorField

FIELD_MAGIC = "GVF1"

# Smallest clearance between a synthetic shape and the grid border.
_SHAPE_MARGIN = 8


# --- PGM ------------------------------------------------------------------------


class _Tokenizer:
    """Header tokenizer for netpbm files; tracks byte offsets for errors."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def skip_space(self):
        while self.pos < len(self.data):
            c = self.data[self.pos : self.pos + 1]
            if c == b"#":
                nl = self.data.find(b"\n", self.pos)
                self.pos = len(self.data) if nl < 0 else nl + 1
            elif c.isspace():
                self.pos += 1
            else:
                return

    def token(self) -> bytes:
        self.skip_space()
        start = self.pos
        while self.pos < len(self.data) and not self.data[self.pos : self.pos + 1].isspace():
            if self.data[self.pos : self.pos + 1] == b"#":
                break
            self.pos += 1
        if self.pos == start:
            raise FormatError("unexpected end of header", start)
        return self.data[start : self.pos]

    def int_token(self, what: str) -> int:
        start = self.pos
        tok = self.token()
        try:
            return int(tok)
        except ValueError:
            raise FormatError(f"bad {what} token {tok!r}", start) from None


def read_pgm(path) -> ScalarField:
    """Read a P2 (ASCII) or P5 (binary) grayscale image, maxval <= 65535."""
    with open(path, "rb") as fh:
        data = fh.read()
    tok = _Tokenizer(data)
    magic = tok.token()
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"not a PGM file (magic {magic!r})", 0)
    width = tok.int_token("width")
    height = tok.int_token("height")
    maxval = tok.int_token("maxval")
    if width < 1 or height < 1:
        raise FormatError(f"bad dimensions {width}x{height}", 0)
    if not (0 < maxval <= 65535):
        raise FormatError(f"unsupported maxval {maxval}", 0)
    count = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates the header from the raster
        if tok.pos >= len(data) or not data[tok.pos : tok.pos + 1].isspace():
            raise FormatError("missing raster separator", tok.pos)
        start = tok.pos + 1
        nbytes = count * (2 if maxval > 255 else 1)
        raster = data[start : start + nbytes]
        if len(raster) != nbytes:
            raise FormatError(
                f"truncated raster: expected {nbytes} bytes, got {len(raster)}",
                start + len(raster),
            )
        dtype = ">u2" if maxval > 255 else np.uint8
        values = np.frombuffer(raster, dtype=dtype).astype(np.float64)
    else:
        values = np.empty(count, dtype=np.float64)
        for i in range(count):
            values[i] = tok.int_token("sample")
    if np.any(values > maxval):
        raise FormatError(f"sample exceeds maxval {maxval}", 0)
    return ScalarField(GridSpec(width, height), values.reshape(height, width))


def write_pgm(field: ScalarField, path, maxval: int = 255, binary: bool = True) -> None:
    """Write a grayscale image; values are clamped and rounded to maxval."""
    if not (0 < maxval <= 65535):
        raise ParameterError(f"unsupported maxval {maxval}")
    q = np.clip(np.rint(field.values), 0, maxval)
    header = f"{'P5' if binary else 'P2'}\n{field.spec.width} {field.spec.height}\n{maxval}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            dtype = ">u2" if maxval > 255 else np.uint8
            fh.write(q.astype(dtype).tobytes())
        else:
            lines = "\n".join(
                " ".join(str(int(x)) for x in row) for row in q.astype(np.int64)
            )
            fh.write(lines.encode("ascii") + b"\n")


# --- vector field container ---------------------------------------------------------


def write_field(field: VectorField, path) -> None:
    """Plain-text container: magic, dimensions, spacing, then one "u v"
    pair per pixel in row-major order at full float64 precision."""
    spec = field.spec
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{FIELD_MAGIC}\n{spec.width} {spec.height}\n{spec.dx:.17g} {spec.dy:.17g}\n")
        u = field.u.values.ravel()
        v = field.v.values.ravel()
        fh.write("\n".join(f"{a:.17g} {b:.17g}" for a, b in zip(u, v)))
        fh.write("\n")


def read_field(path) -> VectorField:
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines or lines[0] != FIELD_MAGIC:
        raise FormatError(f"bad field-file magic {lines[0]!r}" if lines else "empty file", 0)
    try:
        width, height = (int(t) for t in lines[1].split())
        dx, dy = (float(t) for t in lines[2].split())
    except (IndexError, ValueError):
        raise FormatError("malformed field-file header") from None
    count = width * height
    body = lines[3 : 3 + count]
    if len(body) != count or (len(lines) > 3 + count and any(s.strip() for s in lines[3 + count :])):
        raise FormatError(f"expected {count} value lines, got {len(lines) - 3}")
    u = np.empty(count)
    v = np.empty(count)
    for i, line in enumerate(body):
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(f"bad value pair on line {i + 4}")
        u[i], v[i] = float(parts[0]), float(parts[1])
    spec = GridSpec(width, height, dx, dy)
    return VectorField(
        ScalarField(spec, u.reshape(height, width)),
        ScalarField(spec, v.reshape(height, width)),
    )


# --- contour CSV ----------------------------------------------------------------------


def write_contour(points: np.ndarray, path) -> None:
    """One "x,y" pair per line; the contour is implicitly closed."""
    pts = np.asarray(points, dtype=np.float64)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for x, y in pts:
            fh.write(f"{x:.17g},{y:.17g}\n")


def read_contour(path) -> np.ndarray:
    pts = []
    with open(path, "r", encoding="ascii") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise FormatError(f"bad contour pair on line {ln}")
            pts.append((float(parts[0]), float(parts[1])))
    if not pts:
        raise FormatError("empty contour file")
    return np.asarray(pts, dtype=np.float64)


# --- synthetic corpus -----------------------------------------------------------------


@dataclass(frozen=True)
class UShapeGeometry:
    """Pixel rectangles (x, y, w, h) of the U test shape."""

    shape: tuple[int, int, int, int]
    notch: tuple[int, int, int, int]


def ushape_geometry(width: int, height: int) -> UShapeGeometry:
    """Deterministic U layout: quarter margins, notch about a third of
    the shape width, opening upward, half the shape height deep."""
    mx, my = width // 4, height // 4
    if mx < _SHAPE_MARGIN or my < _SHAPE_MARGIN:
        raise ParameterError(f"grid {width}x{height} too small for the U shape")
    sw, sh = width - 2 * mx, height - 2 * my
    nw = max(1, round(sw / 3))
    nd = sh // 2
    nx = mx + (sw - nw) // 2
    return UShapeGeometry(shape=(mx, my, sw, sh), notch=(nx, my, nw, nd))


def _fill_rect(values: np.ndarray, rect: tuple[int, int, int, int], value: float):
    x, y, w, h = rect
    values[y : y + h, x : x + w] = value


def synth_ushape(width: int, height: int) -> ScalarField:
    """Binary U: a filled rectangle with an upward-opening notch."""
    geo = ushape_geometry(width, height)
    values = np.zeros((height, width))
    _fill_rect(values, geo.shape, 255.0)
    _fill_rect(values, geo.notch, 0.0)
    return ScalarField(GridSpec(width, height), values)


def synth_box_with_hole(
    width: int, height: int, hole_rect: tuple[int, int, int, int] | None = None
) -> ScalarField:
    """Binary rectangle with a rectangular hole (default: centered third)."""
    mx, my = width // 4, height // 4
    if mx < _SHAPE_MARGIN or my < _SHAPE_MARGIN:
        raise ParameterError(f"grid {width}x{height} too small for the box shape")
    box = (mx, my, width - 2 * mx, height - 2 * my)
    if hole_rect is None:
        hw = max(1, round(box[2] / 3))
        hh = max(1, round(box[3] / 3))
        hole_rect = (mx + (box[2] - hw) // 2, my + (box[3] - hh) // 2, hw, hh)
    hx, hy, hw, hh = hole_rect
    if not (box[0] < hx and hx + hw < box[0] + box[2] and box[1] < hy and hy + hh < box[1] + box[3]):
        raise ParameterError("hole must sit strictly inside the box")
    values = np.zeros((height, width))
    _fill_rect(values, box, 255.0)
    _fill_rect(values, hole_rect, 0.0)
    return ScalarField(GridSpec(width, height), values)


def synth_disk(width: int, height: int, cx: float, cy: float, r: float) -> ScalarField:
    """Binary filled disk; pixel centers within radius r are foreground."""
    if r <= 0:
        raise ParameterError("disk radius must be > 0")
    if (
        cx - r < _SHAPE_MARGIN
        or cy - r < _SHAPE_MARGIN
        or cx + r > width - 1 - _SHAPE_MARGIN
        or cy + r > height - 1 - _SHAPE_MARGIN
    ):
        raise ParameterError("disk does not fit the grid with an 8-pixel margin")
    yy, xx = np.mgrid[0:height, 0:width]
    values = np.where((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r, 255.0, 0.0)
    return ScalarField(GridSpec(width, height), values)


# --- rendering -------------------------------------------------------------------------

RENDER_MODES = ("magnitude-heatmap", "direction-hue", "arrows")


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized HSV -> RGB, all components in [0, 1]."""
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    out = np.zeros(h.shape + (3,))
    for idx, (r, g, b) in enumerate(((v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q))):
        m = i == idx
        out[m, 0], out[m, 1], out[m, 2] = r[m], g[m], b[m]
    return out


def _draw_line(img: np.ndarray, x0: int, y0: int, x1: int, y1: int, color):
    """Integer Bresenham segment, silently clipped at the image border."""
    hgt, wdt = img.shape[:2]
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        if 0 <= x0 < wdt and 0 <= y0 < hgt:
            img[y0, x0] = color
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def write_ppm(rgb: np.ndarray, path) -> None:
    """Write an (H, W, 3) uint8 array as binary P6."""
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def render(
    field: VectorField,
    mode: str,
    path,
    snake_points: np.ndarray | None = None,
    arrow_stride: int = 8,
) -> None:
    """Rasterize a vector field to PPM, optionally overlaying a contour.

    magnitude-heatmap maps |v| linearly to gray; direction-hue maps the
    vector angle to hue (zero vectors render black); arrows draws plain
    line segments on every arrow_stride-th pixel, scaled so the longest
    arrow spans about one cell.  Contours are drawn as a closed red
    polyline.
    """
    if mode not in RENDER_MODES:
        raise ParameterError(f"unknown render mode {mode!r}")
    u, v = field.u.values, field.v.values
    mag = np.hypot(u, v)
    peak = mag.max()
    if mode == "magnitude-heatmap":
        gray = np.zeros_like(mag) if peak == 0 else mag / peak
        rgb = np.repeat((gray * 255.0).astype(np.uint8)[:, :, None], 3, axis=2)
    elif mode == "direction-hue":
        hue = (np.arctan2(v, u) / (2.0 * math.pi)) % 1.0
        value = np.where(mag > 0, 1.0, 0.0)
        rgb = (_hsv_to_rgb(hue, np.ones_like(hue), value) * 255.0).astype(np.uint8)
    else:
        rgb = np.zeros(mag.shape + (3,), dtype=np.uint8)
        if peak > 0:
            scale = arrow_stride / peak
            hgt, wdt = mag.shape
            for y in range(arrow_stride // 2, hgt, arrow_stride):
                for x in range(arrow_stride // 2, wdt, arrow_stride):
                    if mag[y, x] == 0:
                        continue
                    _draw_line(
                        rgb,
                        x,
                        y,
                        int(round(x + u[y, x] * scale)),
                        int(round(y + v[y, x] * scale)),
                        (255, 255, 255),
                    )
    if snake_points is not None:
        pts = np.rint(np.asarray(snake_points)).astype(int)
        for i in range(len(pts)):
            x0, y0 = pts[i]
            x1, y1 = pts[(i + 1) % len(pts)]
            _draw_line(rgb, x0, y0, x1, y1, (255, 0, 0))
    write_ppm(rgb, path)

"""Dense 2D scalar/vector grid primitives.

Field values are float64 arrays of shape (height, width); element
[y, x] is the pixel in column x of row y, so the x axis runs along
array axis 1.  Grid spacing is carried by GridSpec, but the stencils
here are exact only for dx = dy = 1; solver-side parameter validation
rejects any other spacing.

Every stencil uses the mirrored-neighbor border rule: a neighbor that
would fall off the grid is replaced by the border pixel itself.  This
is the flux-free (zero normal derivative) discretization -- with it the
five-point Laplacian sums to zero over the whole grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .errors import DimensionError, ParameterError

# Magnitudes within this relative band of the cap are left untouched so
# that clamping is exactly idempotent despite rounding.
_CLAMP_SLACK = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Grid dimensions and spacing. Stencils need width, height >= 3."""

    width: int
    height: int
    dx: float = 1.0
    dy: float = 1.0

    def __post_init__(self):
        if self.width < 3 or self.height < 3:
            raise DimensionError(
                f"grid must be at least 3x3, got {self.width}x{self.height}"
            )
        if not (self.dx > 0 and self.dy > 0):
            raise ParameterError("grid spacing must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        """Numpy array shape (rows, cols) = (height, width)."""
        return (self.height, self.width)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy


@dataclass
class ScalarField:
    """A real-valued function sampled on a GridSpec (image, edge map, ...)."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.spec.shape:
            raise DimensionError(
                f"value array shape {v.shape} does not match grid {self.spec.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ParameterError("scalar field contains NaN or Inf")
        self.values = v

    @classmethod
    def zeros(cls, spec: GridSpec) -> "ScalarField":
        return cls(spec, np.zeros(spec.shape))

    @classmethod
    def from_array(cls, arr, dx: float = 1.0, dy: float = 1.0) -> "ScalarField":
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim != 2:
            raise DimensionError("expected a 2D array")
        return cls(GridSpec(a.shape[1], a.shape[0], dx, dy), a)

    def copy(self) -> "ScalarField":
        return ScalarField(self.spec, self.values.copy())


@dataclass
class VectorField:
    """Pair of component ScalarFields on one grid: u along x, v along y."""

    u: ScalarField
    v: ScalarField

    def __post_init__(self):
        if self.u.spec != self.v.spec:
            raise DimensionError("vector components live on different grids")

    @property
    def spec(self) -> GridSpec:
        return self.u.spec

    @classmethod
    def zeros(cls, spec: GridSpec) -> "VectorField":
        return cls(ScalarField.zeros(spec), ScalarField.zeros(spec))

    @classmethod
    def from_arrays(cls, u, v, dx: float = 1.0, dy: float = 1.0) -> "VectorField":
        return cls(ScalarField.from_array(u, dx, dy), ScalarField.from_array(v, dx, dy))

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u.values, self.v.values)

    def copy(self) -> "VectorField":
        return VectorField(self.u.copy(), self.v.copy())


# --- mirrored-neighbor shifts ------------------------------------------------

def shift_xp(a: np.ndarray) -> np.ndarray:
    """Value of the x+1 neighbor, border pixel mirrored onto itself."""
    return np.concatenate([a[:, 1:], a[:, -1:]], axis=1)


def shift_xm(a: np.ndarray) -> np.ndarray:
    return np.concatenate([a[:, :1], a[:, :-1]], axis=1)


def shift_yp(a: np.ndarray) -> np.ndarray:
    return np.concatenate([a[1:, :], a[-1:, :]], axis=0)


def shift_ym(a: np.ndarray) -> np.ndarray:
    return np.concatenate([a[:1, :], a[:-1, :]], axis=0)


# --- operators ----------------------------------------------------------------

def gradient_central(f: ScalarField) -> VectorField:
    """Central-difference gradient; mirrored neighbors at the borders."""
    a = f.values
    u = (shift_xp(a) - shift_xm(a)) / (2.0 * f.spec.dx)
    v = (shift_yp(a) - shift_ym(a)) / (2.0 * f.spec.dy)
    return VectorField(ScalarField(f.spec, u), ScalarField(f.spec, v))


def laplacian_5pt(f: ScalarField) -> ScalarField:
    """Five-point Laplacian scaled by 1/(dx*dy), mirrored at the borders.

    The single dx*dy divisor matches the diffusion stencil used by the
    solvers and is only meaningful for square cells.
    """
    a = f.values
    lap = (shift_xp(a) + shift_xm(a) + shift_yp(a) + shift_ym(a) - 4.0 * a) / f.spec.cell_area
    return ScalarField(f.spec, lap)


def gaussian_smooth(f: ScalarField, sigma: float) -> ScalarField:
    """Gaussian blur with a truncated kernel of radius ceil(3*sigma).

    The kernel is renormalized to sum to one; sigma = 0 is the identity.
    Border handling replicates edge pixels, consistent with the mirrored
    stencils above.
    """
    if sigma < 0:
        raise ParameterError("sigma must be >= 0")
    if sigma == 0:
        return f.copy()
    radius = int(math.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (xs / sigma) ** 2)
    kernel /= kernel.sum()
    out = convolve1d(f.values, kernel, axis=0, mode="nearest")
    out = convolve1d(out, kernel, axis=1, mode="nearest")
    return ScalarField(f.spec, out)


def edge_map(image: ScalarField, sigma: float = 0.0, sign: str = "attractive") -> ScalarField:
    """Squared gradient magnitude of the (optionally smoothed) image.

    sign="attractive" returns +|grad I|^2, whose gradient points toward
    edges -- the convention needed when the result seeds a diffused
    external force.  sign="potential" returns -|grad I|^2, the snake
    potential convention.
    """
    if sign not in ("attractive", "potential"):
        raise ParameterError(f"unknown edge map sign {sign!r}")
    smoothed = gaussian_smooth(image, sigma)
    g = gradient_central(smoothed)
    e = g.u.values ** 2 + g.v.values ** 2
    if sign == "potential":
        e = -e
    return ScalarField(image.spec, e)


def clamp_magnitude(field: VectorField, cap: float) -> VectorField:
    """Rescale pixel vectors longer than cap down to magnitude cap.

    Direction is preserved; an infinite cap is the identity.  Vectors
    within one part in 1e12 of the cap are left alone, which makes the
    operation exactly idempotent.
    """
    if not cap > 0:
        raise ParameterError("magnitude cap must be > 0")
    if math.isinf(cap):
        return field.copy()
    mag = field.magnitude()
    over = mag > cap * (1.0 + _CLAMP_SLACK)
    scale = np.ones_like(mag)
    scale[over] = cap / mag[over]
    return VectorField(
        ScalarField(field.spec, field.u.values * scale),
        ScalarField(field.spec, field.v.values * scale),
    )

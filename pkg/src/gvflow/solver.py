"""Explicit diffusion-reaction solvers for gradient vector flow fields.

The field v = (u, v) evolves under

    dv/dt = g * Lap(v) + h * (grad_f - v),        v(x, 0) = grad_f,

where grad_f is the (optionally magnitude-capped) gradient of an edge
map f, and g, h are nonnegative diffusion/reaction coefficients, either
constants or per-pixel fields.  One explicit Jacobi step reads

    v_new = (1 - h*dt) * v + h*dt * grad_f + r * (nb_sum - 4 * v),

with r = g*dt/(dx*dy) and nb_sum the four-neighbor sum.  Neighbors that
leave the domain are mirrored onto the center pixel (zero-flux rule),
both at the grid border and at the boundary of a masked domain; a
periodic variant wraps instead and backs the spectral oracle.

The scheme is stable for r < 1/4; the usual working constraints are
r < 1/4, g*dt < 1, h*dt < 1 and h < g.  Violations can be forced
through (useful to demonstrate divergence), but are never silent.

The generalized variant (GGVF) replaces the constant coefficients with
the per-pixel pair g(x) = exp(-|grad_f|^2 / K^2), h(x) = 1 - g(x),
frozen from the initial gradient.

Termination: iteration stops once the largest per-pixel change
|v_new - v|_2 drops below delta.  A converged run's field is an
approximate steady state; two independent oracles (a direct sparse
solve and, for periodic borders, a Fourier-domain solution) pin it
down exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import (
    DimensionError,
    DivergenceError,
    ParameterError,
    RankError,
    SizeError,
)
from .grid import (
    GridSpec,
    ScalarField,
    VectorField,
    clamp_magnitude,
    gradient_central,
    laplacian_5pt,
)

# A run is declared divergent once the per-iteration change grows this
# many times past its first value; the checkerboard mode of an unstable
# run crosses it long before float overflow.
_DIVERGENCE_GROWTH = 1e12

_DENSE_ORACLE_LIMIT = 4096


@dataclass(frozen=True)
class GvfParams:
    """Coefficients for the constant/per-pixel diffusion-reaction solve.

    g, h may be scalars or ScalarFields (per-pixel).  cap is the
    magnitude bound applied to grad_f before it is used as both the
    initial field and the reaction source (infinity disables it).
    """

    g: float | ScalarField = 2.0
    h: float | ScalarField = 0.02
    dt: float = 0.12
    delta: float = 1e-4
    cap: float = math.inf
    max_iter: int = 20000

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError("dt must be > 0")
        if not self.delta > 0:
            raise ParameterError("delta must be > 0")
        if not self.cap > 0:
            raise ParameterError("cap must be > 0 (inf disables clamping)")
        if self.max_iter < 1:
            raise ParameterError("max_iter must be >= 1")
        for name, c in (("g", self.g), ("h", self.h)):
            if not isinstance(c, ScalarField):
                if not np.isfinite(c) or c < 0:
                    raise ParameterError(f"{name} must be finite and >= 0")
        if (
            not isinstance(self.g, ScalarField)
            and not isinstance(self.h, ScalarField)
            and self.g == 0
            and self.h == 0
        ):
            raise ParameterError("g and h must not both vanish")


@dataclass(frozen=True)
class GgvfParams:
    """Parameters of the generalized (edge-weighted) solve."""

    K: float = 100.0
    dt: float = 0.12
    delta: float = 1e-4
    cap: float = math.inf
    max_iter: int = 20000

    def __post_init__(self):
        if not self.K > 0:
            raise ParameterError("K must be > 0")
        if not self.dt > 0:
            raise ParameterError("dt must be > 0")
        if not self.delta > 0:
            raise ParameterError("delta must be > 0")
        if not self.cap > 0:
            raise ParameterError("cap must be > 0 (inf disables clamping)")
        if self.max_iter < 1:
            raise ParameterError("max_iter must be >= 1")


class DomainMask:
    """Per-pixel interior flags for solving on a subdomain.

    The domain may be multiply connected (an outer window minus a
    rectangular hole); every interior pixel whose 4-neighbor falls
    outside gets the mirrored-neighbor treatment, so the zero-flux rule
    holds on all boundary components.
    """

    def __init__(self, spec: GridSpec, inside: np.ndarray):
        inside = np.asarray(inside, dtype=bool)
        if inside.shape != spec.shape:
            raise DimensionError("mask shape does not match grid")
        if not inside.any():
            raise ParameterError("domain mask is empty")
        self.spec = spec
        self.inside = inside

    @classmethod
    def full(cls, spec: GridSpec) -> "DomainMask":
        return cls(spec, np.ones(spec.shape, dtype=bool))

    @classmethod
    def from_rects(
        cls,
        spec: GridSpec,
        outer: tuple[int, int, int, int] | None = None,
        hole: tuple[int, int, int, int] | None = None,
    ) -> "DomainMask":
        """Window (x, y, w, h) minus an optional rectangular hole, clipped."""
        inside = np.zeros(spec.shape, dtype=bool)
        if outer is None:
            inside[:, :] = True
        else:
            x0, y0, w, h = outer
            x1, y1 = min(x0 + w, spec.width), min(y0 + h, spec.height)
            inside[max(y0, 0):max(y1, 0), max(x0, 0):max(x1, 0)] = True
        if hole is not None:
            x0, y0, w, h = hole
            x1, y1 = min(x0 + w, spec.width), min(y0 + h, spec.height)
            inside[max(y0, 0):max(y1, 0), max(x0, 0):max(x1, 0)] = False
        return cls(spec, inside)

    @property
    def is_full(self) -> bool:
        return bool(self.inside.all())

    @property
    def inside_count(self) -> int:
        return int(self.inside.sum())

    def boundary(self) -> np.ndarray:
        """Interior pixels with at least one exterior/off-grid 4-neighbor."""
        padded = np.pad(self.inside, 1, mode="constant", constant_values=False)
        nb_all = (
            padded[1:-1, 2:] & padded[1:-1, :-2] & padded[2:, 1:-1] & padded[:-2, 1:-1]
        )
        return self.inside & ~nb_all


@dataclass
class SolveReport:
    """Outcome of an explicit solve.

    change_history[n] is the largest per-pixel step |v^{n+1} - v^n|_2 of
    iteration n+1; energy_history[n] is the cell-area-weighted sum of
    squared steps of that iteration.  pixel_updates counts interior
    pixel writes (iterations * |domain|).
    """

    field: VectorField
    iterations: int
    converged: bool
    change_history: np.ndarray
    energy_history: np.ndarray
    inside_count: int
    pixel_updates: int = 0

    def __post_init__(self):
        if self.pixel_updates == 0:
            self.pixel_updates = self.iterations * self.inside_count


# --- parameter validation ------------------------------------------------------


def _coeff_max(c: float | ScalarField) -> float:
    if isinstance(c, ScalarField):
        return float(c.values.max())
    return float(c)


def _coeff_flat(c: float | ScalarField, spec: GridSpec, idx: np.ndarray):
    """Coefficient restricted to the interior pixel list (scalar passthrough)."""
    if isinstance(c, ScalarField):
        if c.spec != spec:
            raise DimensionError("per-pixel coefficient grid does not match field grid")
        if np.any(c.values < 0):
            raise ParameterError("per-pixel coefficients must be >= 0")
        return c.values.ravel()[idx]
    return float(c)


def validate_params(p: GvfParams, spec: GridSpec) -> list[str]:
    """Return the list of violated scheme constraints (empty = ok).

    Per-pixel coefficients are checked through their pixelwise maxima.
    Violations are data, not errors: a solve may force through them.
    """
    gmax = _coeff_max(p.g)
    hmax = _coeff_max(p.h)
    area = spec.cell_area
    violations = []
    r = gmax * p.dt / area
    if not r < 0.25:
        violations.append(f"r < 1/4 violated: r = g*dt/(dx*dy) = {r:.6g}")
    if not gmax * p.dt < 1.0:
        violations.append(f"g*dt < 1 violated: g*dt = {gmax * p.dt:.6g}")
    if not hmax * p.dt < 1.0:
        violations.append(f"h*dt < 1 violated: h*dt = {hmax * p.dt:.6g}")
    if not hmax < gmax:
        violations.append(f"h < g violated: h = {hmax:.6g}, g = {gmax:.6g}")
    if spec.dx != 1.0 or spec.dy != 1.0:
        violations.append(
            f"dx = dy = 1 required by the stencil, got dx = {spec.dx}, dy = {spec.dy}"
        )
    return violations


def validate_ggvf_params(p: GgvfParams, spec: GridSpec) -> list[str]:
    """Stability constraints for the edge-weighted solve (worst case g = 1)."""
    violations = []
    r = p.dt / spec.cell_area
    if not r < 0.25:
        violations.append(f"r < 1/4 violated (worst case g = 1): dt/(dx*dy) = {r:.6g}")
    if not p.dt < 1.0:
        violations.append(f"dt < 1 violated (worst case h = 1): dt = {p.dt:.6g}")
    if spec.dx != 1.0 or spec.dy != 1.0:
        violations.append(
            f"dx = dy = 1 required by the stencil, got dx = {spec.dx}, dy = {spec.dy}"
        )
    return violations


# --- interior indexing -----------------------------------------------------------


def _neighbor_table(mask: DomainMask, periodic: bool):
    """Flat center indices and (4, M) neighbor indices for interior pixels.

    Neighbors outside the domain (or off the grid) point back at their
    center pixel, which implements the mirror rule; periodic wraps and
    requires the full rectangle.
    """
    inside = mask.inside
    hh, ww = inside.shape
    if periodic and not mask.is_full:
        raise ParameterError("periodic borders require the full-rectangle domain")
    iy, ix = np.nonzero(inside)
    center = iy * ww + ix
    nbrs = np.empty((4, center.size), dtype=np.intp)
    for a, (dy, dx) in enumerate(((0, 1), (0, -1), (1, 0), (-1, 0))):
        ny, nx = iy + dy, ix + dx
        if periodic:
            ny %= hh
            nx %= ww
            nbrs[a] = ny * ww + nx
        else:
            ok = (nx >= 0) & (nx < ww) & (ny >= 0) & (ny < hh)
            ny = np.where(ok, ny, iy)
            nx = np.where(ok, nx, ix)
            ok &= inside[ny, nx]
            nbrs[a] = np.where(ok, ny * ww + nx, center)
    return center, nbrs


# --- the explicit step ------------------------------------------------------------


def _step_component(flat, src, center, nbrs, keep, hdt, rc):
    """One Jacobi update of a single component, interior pixels only.

    keep = 1 - h*dt, hdt = h*dt, rc = g*dt/(dx*dy); scalars or
    per-interior-pixel vectors.
    """
    nb = flat[nbrs[0]] + flat[nbrs[1]] + flat[nbrs[2]] + flat[nbrs[3]]
    c = flat[center]
    return keep * c + hdt * src + rc * (nb - 4.0 * c)


def gvf_step(
    v: VectorField,
    grad_f: VectorField,
    p: GvfParams,
    mask: DomainMask | None = None,
    periodic: bool = False,
) -> VectorField:
    """A single explicit update of v; exterior pixels stay untouched."""
    spec = v.spec
    if grad_f.spec != spec:
        raise DimensionError("field and gradient grids differ")
    if mask is None:
        mask = DomainMask.full(spec)
    elif mask.spec != spec:
        raise DimensionError("mask grid does not match field grid")
    center, nbrs = _neighbor_table(mask, periodic)
    g_in = _coeff_flat(p.g, spec, center)
    h_in = _coeff_flat(p.h, spec, center)
    keep = 1.0 - h_in * p.dt
    hdt = h_in * p.dt
    rc = g_in * p.dt / spec.cell_area
    out_u = v.u.values.copy().ravel()
    out_v = v.v.values.copy().ravel()
    out_u[center] = _step_component(
        v.u.values.ravel(), grad_f.u.values.ravel()[center], center, nbrs, keep, hdt, rc
    )
    out_v[center] = _step_component(
        v.v.values.ravel(), grad_f.v.values.ravel()[center], center, nbrs, keep, hdt, rc
    )
    shape = spec.shape
    return VectorField(
        ScalarField(spec, out_u.reshape(shape)), ScalarField(spec, out_v.reshape(shape))
    )


def _iterate(source: VectorField, g, h, dt, delta, max_iter, mask, periodic):
    """Run the explicit iteration from v(0) = source until the largest
    per-pixel change drops below delta; shared by both solvers."""
    spec = source.spec
    center, nbrs = _neighbor_table(mask, periodic)
    area = spec.cell_area
    g_in = _coeff_flat(g, spec, center)
    h_in = _coeff_flat(h, spec, center)
    keep = 1.0 - h_in * dt
    hdt = h_in * dt
    rc = g_in * dt / area

    u = np.zeros(spec.width * spec.height)
    v = np.zeros_like(u)
    u[center] = source.u.values.ravel()[center]
    v[center] = source.v.values.ravel()[center]
    src_u = source.u.values.ravel()[center]
    src_v = source.v.values.ravel()[center]

    changes: list[float] = []
    energies: list[float] = []
    converged = False
    iterations = 0
    first_change = None
    for n in range(1, max_iter + 1):
        new_u = _step_component(u, src_u, center, nbrs, keep, hdt, rc)
        new_v = _step_component(v, src_v, center, nbrs, keep, hdt, rc)
        du = new_u - u[center]
        dv = new_v - v[center]
        sq = du * du + dv * dv
        change = math.sqrt(float(sq.max()))
        energy = float(sq.sum()) * area
        u[center] = new_u
        v[center] = new_v
        iterations = n
        changes.append(change)
        energies.append(energy)
        if not math.isfinite(change):
            raise DivergenceError("non-finite values in the field", n)
        if first_change is None:
            first_change = change
        elif change > _DIVERGENCE_GROWTH * (first_change + 1e-300):
            raise DivergenceError(
                f"per-iteration change grew past {_DIVERGENCE_GROWTH:g} times its "
                f"initial value ({change:.3g} vs {first_change:.3g})",
                n,
            )
        if change < delta:
            converged = True
            break

    shape = spec.shape
    out = VectorField(
        ScalarField(spec, u.reshape(shape)), ScalarField(spec, v.reshape(shape))
    )
    return SolveReport(
        field=out,
        iterations=iterations,
        converged=converged,
        change_history=np.asarray(changes),
        energy_history=np.asarray(energies),
        inside_count=center.size,
    )


def _masked_source(f: ScalarField, cap: float, mask: DomainMask) -> VectorField:
    """Capped gradient of the edge map, zeroed outside the domain."""
    grad = clamp_magnitude(gradient_central(f), cap)
    if not mask.is_full:
        grad.u.values[~mask.inside] = 0.0
        grad.v.values[~mask.inside] = 0.0
    return grad


def gvf_solve(
    f: ScalarField,
    p: GvfParams,
    mask: DomainMask | None = None,
    periodic: bool = False,
    force: bool = False,
) -> SolveReport:
    """Diffuse the capped gradient of f to (near) steady state.

    The magnitude cap applies to the gradient wherever it appears: the
    initial field and the reaction source are the same capped field.
    Raises ParameterError when the scheme constraints fail, unless
    force=True; divergence always raises.
    """
    spec = f.spec
    if mask is None:
        mask = DomainMask.full(spec)
    elif mask.spec != spec:
        raise DimensionError("mask grid does not match field grid")
    violations = validate_params(p, spec)
    if violations and not force:
        raise ParameterError("; ".join(violations))
    if isinstance(p.g, ScalarField) or isinstance(p.h, ScalarField):
        g_arr = p.g.values if isinstance(p.g, ScalarField) else np.full(spec.shape, p.g)
        h_arr = p.h.values if isinstance(p.h, ScalarField) else np.full(spec.shape, p.h)
        if np.any((g_arr == 0) & (h_arr == 0) & mask.inside):
            raise ParameterError("g and h both vanish at an interior pixel")
    source = _masked_source(f, p.cap, mask)
    return _iterate(source, p.g, p.h, p.dt, p.delta, p.max_iter, mask, periodic)


def ggvf_weight(grad_f: VectorField, K: float) -> ScalarField:
    """Edge-sensitive diffusion weight exp(-|grad_f|^2 / K^2)."""
    if not K > 0:
        raise ParameterError("K must be > 0")
    mag2 = grad_f.u.values ** 2 + grad_f.v.values ** 2
    return ScalarField(grad_f.spec, np.exp(-mag2 / (K * K)))


def ggvf_solve(
    f: ScalarField,
    p: GgvfParams,
    mask: DomainMask | None = None,
    periodic: bool = False,
    force: bool = False,
) -> SolveReport:
    """Edge-weighted variant: dv/dt = g(x) Lap(v) + (1 - g(x)) (grad_f - v).

    The weight g(x) is frozen from the (capped) initial gradient; near
    strong edges g ~ 0 pins the field to grad_f, far away g ~ 1 gives
    pure diffusion, which preserves forces inside thin concavities.
    """
    spec = f.spec
    if mask is None:
        mask = DomainMask.full(spec)
    elif mask.spec != spec:
        raise DimensionError("mask grid does not match field grid")
    violations = validate_ggvf_params(p, spec)
    if violations and not force:
        raise ParameterError("; ".join(violations))
    source = _masked_source(f, p.cap, mask)
    weight = ggvf_weight(source, p.K)
    one_minus = ScalarField(spec, 1.0 - weight.values)
    return _iterate(source, weight, one_minus, p.dt, p.delta, p.max_iter, mask, periodic)


# --- steady-state oracles -----------------------------------------------------------


def direct_steady_solve(
    f: ScalarField, p: GvfParams, mask: DomainMask | None = None
) -> VectorField:
    """Exact steady state by sparse elimination; the brute-force oracle.

    Solves, per component and per interior pixel,

        (h + m*g/(dx*dy)) v_ij - (g/(dx*dy)) * sum(interior neighbors) = h * grad_f

    with m the number of interior neighbors (the mirror rule drops the
    others).  Limited to small test-scale domains.
    """
    spec = f.spec
    if mask is None:
        mask = DomainMask.full(spec)
    elif mask.spec != spec:
        raise DimensionError("mask grid does not match field grid")
    center, nbrs = _neighbor_table(mask, periodic=False)
    m = center.size
    if m > _DENSE_ORACLE_LIMIT:
        raise SizeError(
            f"{m} interior pixels exceed the oracle limit of {_DENSE_ORACLE_LIMIT}"
        )
    g_in = np.broadcast_to(np.asarray(_coeff_flat(p.g, spec, center), dtype=float), (m,))
    h_in = np.broadcast_to(np.asarray(_coeff_flat(p.h, spec, center), dtype=float), (m,))
    if np.any((g_in == 0) & (h_in == 0)):
        raise RankError("g and h both vanish at an interior pixel")
    if not np.any(h_in > 0):
        raise RankError("h vanishes everywhere; the steady state is not unique")

    pos = np.full(spec.width * spec.height, -1, dtype=np.intp)
    pos[center] = np.arange(m)
    area = spec.cell_area
    rows = [np.arange(m)]
    cols = [np.arange(m)]
    # mirrored neighbors cancel out of the Laplacian, so the diagonal
    # counts only true interior neighbors
    m_count = (nbrs != center[None, :]).sum(axis=0)
    vals = [h_in + g_in * m_count / area]
    for a in range(4):
        real = nbrs[a] != center
        rows.append(np.nonzero(real)[0])
        cols.append(pos[nbrs[a][real]])
        vals.append(-g_in[real] / area)
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)
    )

    source = _masked_source(f, p.cap, mask)
    out = VectorField.zeros(spec)
    for comp, target in ((source.u, out.u), (source.v, out.v)):
        b = h_in * comp.values.ravel()[center]
        x = spsolve(A, b)
        if not np.all(np.isfinite(x)):
            raise RankError("steady-state system is singular")
        flat = target.values.ravel()
        flat[center] = x
        target.values = flat.reshape(spec.shape)
    return out


def steady_residual(
    v: VectorField, f: ScalarField, p: GvfParams, mask: DomainMask | None = None
) -> float:
    """Largest interior residual |g*Lap(v) + h*(grad_f - v)|_2.

    Zero exactly at the steady state; one explicit step moves the field
    by dt times this quantity, so the fixed-point identity is exact.
    """
    spec = v.spec
    if f.spec != spec:
        raise DimensionError("field and edge map grids differ")
    if mask is None:
        mask = DomainMask.full(spec)
    elif mask.spec != spec:
        raise DimensionError("mask grid does not match field grid")
    center, nbrs = _neighbor_table(mask, periodic=False)
    g_in = _coeff_flat(p.g, spec, center)
    h_in = _coeff_flat(p.h, spec, center)
    area = spec.cell_area
    source = _masked_source(f, p.cap, mask)
    res_sq = None
    for comp, src in ((v.u, source.u), (v.v, source.v)):
        flat = comp.values.ravel()
        nb = flat[nbrs[0]] + flat[nbrs[1]] + flat[nbrs[2]] + flat[nbrs[3]]
        lap = (nb - 4.0 * flat[center]) / area
        r = g_in * lap + h_in * (src.values.ravel()[center] - flat[center])
        res_sq = r * r if res_sq is None else res_sq + r * r
    worst = math.sqrt(float(res_sq.max()))
    return worst


# --- expansion consistency check ---------------------------------------------------

# Closed forms of the first four iterates as polynomials in the
# Laplacian applied to grad_f; a = g*dt, b = h*dt:
#   v(1) = grad_f + a L grad_f
#   v(2) = grad_f + a(2 - b) L grad_f + a^2 L^2 grad_f
#   v(3) = grad_f + a(3 - 3b + b^2) L + a^2 (3 - 2b) L^2 + a^3 L^3
#   v(4) = grad_f + a(4 - 6b + 4b^2 - b^3) L + a^2 (6 - 8b + 3b^2) L^2
#          + a^3 (4 - 3b) L^3 + a^4 L^4


def _expansion_coeffs(a: float, b: float, n: int) -> list[float]:
    if n == 1:
        return [1.0, a]
    if n == 2:
        return [1.0, a * (2 - b), a**2]
    if n == 3:
        return [1.0, a * (3 - 3 * b + b**2), a**2 * (3 - 2 * b), a**3]
    if n == 4:
        return [
            1.0,
            a * (4 - 6 * b + 4 * b**2 - b**3),
            a**2 * (6 - 8 * b + 3 * b**2),
            a**3 * (4 - 3 * b),
            a**4,
        ]
    raise ParameterError("expansion order must be in 1..4")


def expansion_check(f: ScalarField, p: GvfParams, n: int) -> float:
    """L-infinity gap between n explicit steps and the order-n closed form.

    Requires constant g, h and the full-rectangle domain; the closed
    forms start from the raw gradient, so the magnitude cap is ignored.
    The gap is zero (to rounding) when the step implements the scheme
    correctly, borders included.
    """
    if isinstance(p.g, ScalarField) or isinstance(p.h, ScalarField):
        raise ParameterError("expansion check supports constant coefficients only")
    if n not in (1, 2, 3, 4):
        raise ParameterError("expansion order must be in 1..4")
    spec = f.spec
    grad = gradient_central(f)
    coeffs = _expansion_coeffs(p.g * p.dt, p.h * p.dt, n)

    closed_u = np.zeros(spec.shape)
    closed_v = np.zeros(spec.shape)
    lap_u, lap_v = grad.u, grad.v
    for k, c in enumerate(coeffs):
        if k > 0:
            lap_u = laplacian_5pt(lap_u)
            lap_v = laplacian_5pt(lap_v)
        closed_u += c * lap_u.values
        closed_v += c * lap_v.values

    mask = DomainMask.full(spec)
    stepped = grad
    for _ in range(n):
        stepped = gvf_step(stepped, grad, p, mask)
    gap_u = np.abs(stepped.u.values - closed_u).max()
    gap_v = np.abs(stepped.v.values - closed_v).max()
    return float(max(gap_u, gap_v))

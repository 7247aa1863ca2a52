"""String-side pipeline: bivector prolongation of parameterized surfaces,
Euler-Lagrange residuals for Lagrangians on bivector coordinates, the
minimal-surface operator for graph surfaces, and a damped-Newton Plateau
solver with Dirichlet boundary data on a rectangle.

Bivector coordinates xd{mu}{nu} = -xd{nu}{mu} are stored for mu < nu only;
the antisymmetric extension is applied wherever a derivative with swapped
indices is needed.  For a surface (t, s) -> x(t, s) the prolongation is
xd^{mu nu} = x^mu_t x^nu_s - x^mu_s x^nu_t.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from . import expr as ex
from . import numerics as nm

__all__ = [
    "NoConvergenceError",
    "SurfaceGrid", "BivectorLagrangian", "GraphSurface",
    "bivector_pairs", "area_lagrangian", "prolong", "el_residual",
    "minimal_surface_residual", "embed_graph", "consistency_check",
    "solve_plateau", "interior_max",
]

_UNIFORM_TOL = 1e-12


class NoConvergenceError(Exception):
    """Newton iteration exhausted max_iter or a damped step failed to descend."""

    def __init__(self, message: str, final_residual: float, log: list[dict] | None = None):
        super().__init__(message)
        self.final_residual = final_residual
        self.log = log or []


def _check_uniform(grid: np.ndarray, label: str) -> float:
    if grid.size < 2:
        raise ValueError(f"{label} grid needs at least 2 nodes")
    steps = np.diff(grid)
    h = float(steps[0])
    if h <= 0 or np.max(np.abs(steps - h)) > _UNIFORM_TOL:
        raise ValueError(f"{label} grid is not uniformly spaced")
    return h


def interior_max(a: np.ndarray) -> float:
    """Max absolute value ignoring the NaN margin cells."""
    return float(np.nanmax(np.abs(a)))


# ---------------------------------------------------------------------------
# Surfaces


@dataclass
class SurfaceGrid:
    """A sampled parameterized surface (t_i, s_j) -> x^sigma(t_i, s_j).

    `values` has shape (m, nt, ns); both parameter grids must be uniform and
    at least 5 nodes long, and all samples finite.
    """

    t: np.ndarray
    s: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.s = np.asarray(self.s, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t.size < 5 or self.s.size < 5:
            raise ValueError("surface grids need at least 5 nodes per parameter")
        self.dt = _check_uniform(self.t, "t")
        self.ds = _check_uniform(self.s, "s")
        if self.values.ndim != 3 or self.values.shape[1:] != (self.t.size, self.s.size):
            raise ValueError("values must have shape (m, len(t), len(s))")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("surface values must be finite")

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_function(cls, f: Callable, t_range: tuple[float, float],
                      s_range: tuple[float, float], nt: int, ns: int) -> "SurfaceGrid":
        """Sample x = f(t, s) (returning m components) on a uniform grid."""
        t = np.linspace(*t_range, nt)
        s = np.linspace(*s_range, ns)
        T, S = np.meshgrid(t, s, indexing="ij")
        vals = np.asarray(f(T, S), dtype=float)
        return cls(t=t, s=s, values=vals)

    def swapped(self) -> "SurfaceGrid":
        """The same surface with parameters (t, s) -> (s, t)."""
        return SurfaceGrid(t=self.s.copy(), s=self.t.copy(),
                           values=np.swapaxes(self.values, 1, 2).copy())

    def to_csv(self) -> str:
        header = "t,s," + ",".join(f"x{i}" for i in range(1, self.m + 1))
        buf = io.StringIO()
        buf.write(header + "\n")
        for i, tv in enumerate(self.t):
            for j, sv in enumerate(self.s):
                row = [tv, sv] + [self.values[mu, i, j] for mu in range(self.m)]
                buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SurfaceGrid":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        header = [h.strip() for h in lines[0].split(",")]
        if header[:2] != ["t", "s"]:
            raise ValueError("surface CSV must start with columns t,s")
        m = len(header) - 2
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        t = np.unique(data[:, 0])
        s = np.unique(data[:, 1])
        if t.size * s.size != data.shape[0]:
            raise ValueError("surface CSV is not a full rectangular grid")
        values = np.empty((m, t.size, s.size))
        ti = np.searchsorted(t, data[:, 0])
        si = np.searchsorted(s, data[:, 1])
        for mu in range(m):
            values[mu, ti, si] = data[:, 2 + mu]
        return cls(t=t, s=s, values=values)


@dataclass
class GraphSurface:
    """A graph z(x, y) over a rectangle with fixed boundary values."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.x.size < 5 or self.y.size < 5:
            raise ValueError("graph grids need at least 5 nodes per direction")
        self.dx = _check_uniform(self.x, "x")
        self.dy = _check_uniform(self.y, "y")
        if self.z.shape != (self.x.size, self.y.size):
            raise ValueError("z must have shape (len(x), len(y))")

    @classmethod
    def from_function(cls, f: Callable, x_range: tuple[float, float],
                      y_range: tuple[float, float], nx: int, ny: int) -> "GraphSurface":
        x = np.linspace(*x_range, nx)
        y = np.linspace(*y_range, ny)
        X, Y = np.meshgrid(x, y, indexing="ij")
        return cls(x=x, y=y, z=np.asarray(f(X, Y), dtype=float))

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.z.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        return mask

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,y,z\n")
        for i, xv in enumerate(self.x):
            for j, yv in enumerate(self.y):
                buf.write(f"{xv:.17g},{yv:.17g},{self.z[i, j]:.17g}\n")
        return buf.getvalue()


# ---------------------------------------------------------------------------
# Bivector Lagrangians and the string Euler-Lagrange residual


def bivector_pairs(m: int) -> list[tuple[int, int]]:
    return [(mu, nu) for mu in range(1, m + 1) for nu in range(mu + 1, m + 1)]


@dataclass(frozen=True)
class BivectorLagrangian:
    """A Lagrangian L(x^rho, xd^{mu nu}) on bivector coordinates.

    Base variables are named x1..xm and the mu < nu bivector components
    xd{mu}{nu}, e.g. xd12; components with mu > nu never appear in L, the
    antisymmetric extension is applied internally.
    """

    m: int
    lagrangian: ex.Expr

    def __post_init__(self):
        if not (2 <= self.m <= 9):
            raise ValueError("bivector Lagrangians support 2 <= m <= 9")
        extra = ex.free_vars(self.lagrangian) - set(self.names())
        if extra:
            raise ex.ChartError(f"Lagrangian uses unknown variables {sorted(extra)}")

    def base_names(self) -> list[str]:
        return [f"x{i}" for i in range(1, self.m + 1)]

    def pair_names(self) -> list[str]:
        return [f"xd{mu}{nu}" for mu, nu in bivector_pairs(self.m)]

    def names(self) -> list[str]:
        return self.base_names() + self.pair_names()

    def chart(self) -> ex.Chart:
        """Weight chart (x: 0, xd: 1) for homogeneity checks."""
        variables = [ex.JetVar(nme, "x", i + 1, 0, 0) for i, nme in enumerate(self.base_names())]
        variables += [ex.JetVar(nme, "xd", i + 1, 1, 1) for i, nme in enumerate(self.pair_names())]
        return ex.Chart(variables, "bivector", {})

    def momentum(self, mu: int, sigma: int) -> ex.Expr:
        """dL/dxd^{mu sigma} with the antisymmetric extension."""
        if mu == sigma:
            return ex.num(0.0)
        if mu < sigma:
            return ex.diff(self.lagrangian, f"xd{mu}{sigma}")
        return ex.neg(ex.diff(self.lagrangian, f"xd{sigma}{mu}"))


def area_lagrangian(m: int = 3) -> BivectorLagrangian:
    """The Euclidean area Lagrangian sqrt(sum_{mu<nu} (xd^{mu nu})^2)."""
    total = ex.add_all(ex.pow_(ex.sym(f"xd{mu}{nu}"), 2.0) for mu, nu in bivector_pairs(m))
    return BivectorLagrangian(m=m, lagrangian=ex.call("sqrt", total))


def prolong(S: SurfaceGrid) -> dict[tuple[int, int], np.ndarray]:
    """Bivector components xd^{mu nu} = x^mu_t x^nu_s - x^mu_s x^nu_t on the
    grid, central differences inside and one-sided second order at edges."""
    xt = [nm.d1(S.values[mu], S.dt, axis=0) for mu in range(S.m)]
    xs = [nm.d1(S.values[mu], S.ds, axis=1) for mu in range(S.m)]
    return {
        (mu, nu): xt[mu - 1] * xs[nu - 1] - xs[mu - 1] * xt[nu - 1]
        for mu, nu in bivector_pairs(S.m)
    }


def _nan_margin(a: np.ndarray) -> np.ndarray:
    a[0, :] = a[-1, :] = a[:, 0] = a[:, -1] = np.nan
    return a


def _d1_inner(P: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Tangential derivative of a field at interior nodes along `axis`,
    one-sided at the first ring so the outermost (one-sided-quality) field
    values never enter; keeps nested derivatives second order everywhere
    the residual is defined."""
    sl = [slice(None), slice(None)]
    sl[axis] = slice(1, -1)
    out = np.full_like(P, np.nan)
    out[tuple(sl)] = nm.d1(P[tuple(sl)], h, axis=axis)
    return out


def el_residual(L: BivectorLagrangian, S: SurfaceGrid) -> np.ndarray:
    """String Euler-Lagrange residual per component and interior node:

        r_sigma = dL/dx^sigma
                  - sum_mu [ x^mu_t d_s(dL/dxd^{mu sigma})
                             - x^mu_s d_t(dL/dxd^{mu sigma}) ]

    Returns shape (m, nt, ns) with NaN on the boundary margin, where the
    nested stencils are not second-order complete.
    """
    if L.m != S.m:
        raise ValueError("Lagrangian and surface dimension mismatch")
    m = S.m
    biv = prolong(S)
    names = L.names()
    bindings = [S.values[i] for i in range(m)] + [biv[p] for p in bivector_pairs(m)]

    def on_grid(e: ex.Expr) -> np.ndarray:
        v = ex.compile_expr(e, names)(bindings)
        return np.broadcast_to(np.asarray(v, dtype=float), S.values.shape[1:]).copy()

    xt = [nm.d1(S.values[mu], S.dt, axis=0) for mu in range(m)]
    xs = [nm.d1(S.values[mu], S.ds, axis=1) for mu in range(m)]

    residual = np.empty_like(S.values)
    for sigma in range(1, m + 1):
        r = on_grid(ex.diff(L.lagrangian, f"x{sigma}"))
        for mu in range(1, m + 1):
            if mu == sigma:
                continue
            P = on_grid(L.momentum(mu, sigma))
            if not np.all(np.isfinite(P[1:-1, 1:-1])):
                i, j = np.argwhere(~np.isfinite(P))[0]
                raise ex.EvalError(
                    f"Lagrangian momentum undefined at node (t_{i}, s_{j}) = "
                    f"({S.t[i]:.6g}, {S.s[j]:.6g})")
            r -= xt[mu - 1] * _d1_inner(P, S.ds, axis=1) - xs[mu - 1] * _d1_inner(P, S.dt, axis=0)
        residual[sigma - 1] = _nan_margin(r)
    return residual


# ---------------------------------------------------------------------------
# Minimal surfaces on graphs


def _graph_parts(z: np.ndarray, dx: float, dy: float):
    """Interior-node first/second differences used by the residual and its
    Jacobian (compact 3x3 stencil, all arrays shaped (nx-2, ny-2))."""
    zx = (z[2:, 1:-1] - z[:-2, 1:-1]) / (2 * dx)
    zy = (z[1:-1, 2:] - z[1:-1, :-2]) / (2 * dy)
    zxx = (z[2:, 1:-1] - 2 * z[1:-1, 1:-1] + z[:-2, 1:-1]) / dx**2
    zyy = (z[1:-1, 2:] - 2 * z[1:-1, 1:-1] + z[1:-1, :-2]) / dy**2
    zxy = (z[2:, 2:] - z[2:, :-2] - z[:-2, 2:] + z[:-2, :-2]) / (4 * dx * dy)
    return zx, zy, zxx, zyy, zxy


def minimal_surface_residual(g: GraphSurface) -> np.ndarray:
    """The quasilinear minimal-surface operator

        (1 + z_x^2) z_yy - 2 z_x z_y z_xy + (1 + z_y^2) z_xx

    with second-order central differences; NaN on the boundary margin."""
    zx, zy, zxx, zyy, zxy = _graph_parts(g.z, g.dx, g.dy)
    out = np.full_like(g.z, np.nan)
    out[1:-1, 1:-1] = (1 + zx**2) * zyy - 2 * zx * zy * zxy + (1 + zy**2) * zxx
    return out


def embed_graph(g: GraphSurface) -> SurfaceGrid:
    """The graph as a parameterized surface (t, s) -> (t, s, z(t, s))."""
    nt, ns = g.z.shape
    values = np.empty((3, nt, ns))
    values[0] = g.x[:, None]
    values[1] = g.y[None, :]
    values[2] = g.z
    return SurfaceGrid(t=g.x.copy(), s=g.y.copy(), values=values)


def consistency_deviation_field(g: GraphSurface) -> np.ndarray:
    """Pointwise deviation between the bivector Euler-Lagrange residual of
    the area Lagrangian on the embedded graph and the minimal-surface
    operator.

    The z-component residual relates to the quasilinear operator through the
    conformal factor W = sqrt(1 + z_x^2 + z_y^2):

        quasilinear = -W^3 * r_z

    so the two discretizations agree to O(h^2) wherever both use central
    stencils.  The first interior ring, where the string residual falls back
    to one-sided stencils with a different error constant, is excluded (NaN
    margin of width 2).
    """
    r = el_residual(area_lagrangian(3), embed_graph(g))[2]
    ms = minimal_surface_residual(g)
    zx = nm.d1(g.z, g.dx, axis=0)
    zy = nm.d1(g.z, g.dy, axis=1)
    W3 = (1.0 + zx**2 + zy**2) ** 1.5
    dev = (-W3 * r) - ms
    dev[1, :] = dev[-2, :] = dev[:, 1] = dev[:, -2] = np.nan
    return dev


def consistency_check(g: GraphSurface) -> float:
    """Max deviation of `consistency_deviation_field` over its valid nodes."""
    return interior_max(consistency_deviation_field(g))


# ---------------------------------------------------------------------------
# Plateau solver (damped Newton, banded Jacobian)


def _banded_solve_interior(coefs: dict[tuple[int, int], np.ndarray],
                           rhs: np.ndarray) -> np.ndarray:
    """Solve the interior-node linear system given 3x3 stencil coefficients.

    `coefs[(di, dj)]` are per-interior-node coefficients of the neighbor at
    offset (di, dj); couplings to boundary nodes are dropped (their values
    are fixed, so their contribution belongs to the residual, not the
    Jacobian).  Assembled as a banded matrix in row-major interior order.
    """
    Wx, Wy = rhs.shape
    N = Wx * Wy
    half = Wy + 1
    ab = np.zeros((2 * half + 1, N))
    ii, jj = np.meshgrid(np.arange(Wx), np.arange(Wy), indexing="ij")
    for (di, dj), coef in coefs.items():
        mask = (ii + di >= 0) & (ii + di < Wx) & (jj + dj >= 0) & (jj + dj < Wy)
        rows = (ii[mask] * Wy + jj[mask])
        cols = ((ii[mask] + di) * Wy + (jj[mask] + dj))
        ab[half + rows - cols, cols] = coef[mask]
    try:
        sol = solve_banded((half, half), ab, rhs.ravel())
    except np.linalg.LinAlgError as err:
        raise nm.SingularJacobianError(str(err)) from err
    if not np.all(np.isfinite(sol)):
        raise nm.SingularJacobianError("banded solve produced non-finite values")
    return sol.reshape(Wx, Wy)


def _harmonic_interior(g: GraphSurface) -> np.ndarray:
    """Laplace interpolation of the boundary values (the Newton initial guess)."""
    z0 = g.z.copy()
    z0[1:-1, 1:-1] = 0.0
    zx2 = (z0[2:, 1:-1] - 2 * z0[1:-1, 1:-1] + z0[:-2, 1:-1]) / g.dx**2
    zy2 = (z0[1:-1, 2:] - 2 * z0[1:-1, 1:-1] + z0[1:-1, :-2]) / g.dy**2
    F = zx2 + zy2
    shape = F.shape
    one = np.ones(shape)
    coefs = {
        (0, 0): -2 * one / g.dx**2 - 2 * one / g.dy**2,
        (1, 0): one / g.dx**2, (-1, 0): one / g.dx**2,
        (0, 1): one / g.dy**2, (0, -1): one / g.dy**2,
    }
    return _banded_solve_interior(coefs, -F)


def _newton_coefficients(z: np.ndarray, dx: float, dy: float) -> dict[tuple[int, int], np.ndarray]:
    """Analytic Jacobian of the minimal-surface residual on the 3x3 stencil."""
    zx, zy, zxx, zyy, zxy = _graph_parts(z, dx, dy)
    dR_dzx = 2 * zx * zyy - 2 * zy * zxy
    dR_dzy = 2 * zy * zxx - 2 * zx * zxy
    dR_dzxx = 1 + zy**2
    dR_dzyy = 1 + zx**2
    dR_dzxy = -2 * zx * zy
    return {
        (0, 0): -2 * dR_dzxx / dx**2 - 2 * dR_dzyy / dy**2,
        (1, 0): dR_dzx / (2 * dx) + dR_dzxx / dx**2,
        (-1, 0): -dR_dzx / (2 * dx) + dR_dzxx / dx**2,
        (0, 1): dR_dzy / (2 * dy) + dR_dzyy / dy**2,
        (0, -1): -dR_dzy / (2 * dy) + dR_dzyy / dy**2,
        (1, 1): dR_dzxy / (4 * dx * dy),
        (-1, -1): dR_dzxy / (4 * dx * dy),
        (1, -1): -dR_dzxy / (4 * dx * dy),
        (-1, 1): -dR_dzxy / (4 * dx * dy),
    }


def solve_plateau(
    boundary: GraphSurface,
    tol: float = 1e-10,
    max_iter: int = 50,
    initial: np.ndarray | None = None,
    max_halvings: int = 10,
) -> tuple[GraphSurface, list[dict]]:
    """Solve the Plateau problem for graphs with Dirichlet data.

    Only the boundary ring of `boundary.z` is read unless `initial` supplies
    a full starting grid; the default initial guess is the harmonic
    interpolation of the boundary values.  Newton steps use the analytic
    banded Jacobian and halve the step up to `max_halvings` times whenever
    the residual max-norm fails to decrease.

    Returns the solved surface and a convergence log of
    {iteration, residual, halvings} records.
    """
    g = GraphSurface(x=boundary.x.copy(), y=boundary.y.copy(), z=boundary.z.copy())
    if initial is not None:
        if initial.shape != g.z.shape:
            raise ValueError("initial guess has wrong shape")
        g.z = initial.copy()
    else:
        g.z[1:-1, 1:-1] = _harmonic_interior(g)

    def residual(zfull: np.ndarray) -> np.ndarray:
        zx, zy, zxx, zyy, zxy = _graph_parts(zfull, g.dx, g.dy)
        return (1 + zx**2) * zyy - 2 * zx * zy * zxy + (1 + zy**2) * zxx

    log: list[dict] = []
    F = residual(g.z)
    rnorm = float(np.max(np.abs(F)))
    log.append({"iteration": 0, "residual": rnorm, "halvings": 0})
    for it in range(1, max_iter + 1):
        if rnorm < tol:
            return g, log
        coefs = _newton_coefficients(g.z, g.dx, g.dy)
        delta = _banded_solve_interior(coefs, -F)
        step = 1.0
        for halvings in range(max_halvings + 1):
            trial = g.z.copy()
            trial[1:-1, 1:-1] += step * delta
            F_new = residual(trial)
            rnorm_new = float(np.max(np.abs(F_new)))
            if np.isfinite(rnorm_new) and (rnorm_new < rnorm or rnorm < tol):
                break
            step *= 0.5
        else:
            raise NoConvergenceError(
                f"damped Newton step failed to reduce the residual ({rnorm:.3e})",
                final_residual=rnorm, log=log)
        g.z = trial
        F, rnorm = F_new, rnorm_new
        log.append({"iteration": it, "residual": rnorm, "halvings": halvings})
    if rnorm < tol:
        return g, log
    raise NoConvergenceError(
        f"no convergence after {max_iter} iterations (residual {rnorm:.3e})",
        final_residual=rnorm, log=log)

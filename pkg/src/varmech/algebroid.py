"""Lie algebroid descriptions through local data: an anchor matrix rho^A_a(x)
and structure functions C^c_{ab}(x), with numerical verification of the
antisymmetry, Jacobi, and anchor-compatibility identities at sampled base
points.  Tangent bundles (rho = id, C = 0) and Lie algebras (m = 0, constant
C) are the two canonical constructors used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import expr as ex

__all__ = [
    "AlgebroidSpec", "AxiomReport",
    "base_names", "tangent_algebroid", "lie_algebra", "abelian_lie_algebra",
    "so3", "check_axioms", "is_tangent",
]


def base_names(m: int) -> tuple[str, ...]:
    """Canonical base-coordinate names: ('x',) for m = 1, else x1..xm."""
    if m == 1:
        return ("x",)
    return tuple(f"x{A}" for A in range(1, m + 1))


@dataclass(frozen=True)
class AlgebroidSpec:
    """Anchor and structure functions over the canonical base chart.

    anchor[A][a] is rho^A_a and structure[c][a][b] is C^c_{ab}; all entries
    are expressions in the base coordinates returned by `base_names(base_dim)`.
    """

    base_dim: int
    rank: int
    anchor: tuple[tuple[ex.Expr, ...], ...]
    structure: tuple[tuple[tuple[ex.Expr, ...], ...], ...]

    def __post_init__(self):
        if self.base_dim < 0 or self.rank < 1:
            raise ValueError("base_dim must be >= 0 and rank >= 1")
        if len(self.anchor) != self.base_dim or any(len(row) != self.rank for row in self.anchor):
            raise ValueError("anchor must be base_dim x rank")
        n = self.rank
        if len(self.structure) != n or any(
            len(plane) != n or any(len(row) != n for row in plane) for plane in self.structure
        ):
            raise ValueError("structure must be rank x rank x rank")

    @property
    def base(self) -> tuple[str, ...]:
        return base_names(self.base_dim)

    def structure_constants(self) -> np.ndarray:
        """Constant structure functions as an array [c, a, b]; raises if not constant."""
        n = self.rank
        out = np.empty((n, n, n))
        for c, a, b in product(range(n), repeat=3):
            v = ex.constant_value(self.structure[c][a][b])
            if v is None:
                raise ValueError("structure functions are not constant")
            out[c, a, b] = v
        return out


def tangent_algebroid(m: int) -> AlgebroidSpec:
    """The tangent bundle of R^m: identity anchor and vanishing bracket."""
    if m < 1:
        raise ValueError("m must be >= 1")
    one, zero = ex.num(1.0), ex.num(0.0)
    anchor = tuple(tuple(one if A == a else zero for a in range(m)) for A in range(m))
    structure = tuple(tuple(tuple(zero for _ in range(m)) for _ in range(m)) for _ in range(m))
    return AlgebroidSpec(base_dim=m, rank=m, anchor=anchor, structure=structure)


def lie_algebra(constants: np.ndarray) -> AlgebroidSpec:
    """A Lie algebra as an algebroid over a point (m = 0, constant C).

    `constants[c, a, b]` is c^c_{ab}; antisymmetry in the lower indices is
    required to within 1e-12.
    """
    c = np.asarray(constants, dtype=float)
    if c.ndim != 3 or len(set(c.shape)) != 1:
        raise ValueError("constants must be an n x n x n array")
    if np.max(np.abs(c + np.swapaxes(c, 1, 2))) > 1e-12:
        raise ValueError("structure constants are not antisymmetric in the lower indices")
    n = c.shape[0]
    structure = tuple(
        tuple(tuple(ex.num(c[e, a, b]) for b in range(n)) for a in range(n)) for e in range(n)
    )
    return AlgebroidSpec(base_dim=0, rank=n, anchor=(), structure=structure)


def abelian_lie_algebra(n: int) -> AlgebroidSpec:
    return lie_algebra(np.zeros((n, n, n)))


def so3() -> AlgebroidSpec:
    """so(3) with [e_a, e_b] = sum_c eps_{abc} e_c."""
    eps = np.zeros((3, 3, 3))
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[c, a, b] = 1.0
        eps[c, b, a] = -1.0
    return lie_algebra(eps)


def is_tangent(spec: AlgebroidSpec) -> bool:
    """True when the data is structurally the tangent algebroid (rho = id, C = 0)."""
    if spec.base_dim != spec.rank:
        return False
    for A in range(spec.base_dim):
        for a in range(spec.rank):
            want = 1.0 if A == a else 0.0
            if ex.constant_value(spec.anchor[A][a]) != want:
                return False
    for plane in spec.structure:
        for row in plane:
            for entry in row:
                if ex.constant_value(entry) != 0.0:
                    return False
    return True


@dataclass
class AxiomReport:
    antisymmetry_max_violation: float
    jacobi_max_violation: float
    anchor_compat_max_violation: float
    sample_points: list = field(default_factory=list)

    def max_violation(self) -> float:
        return max(self.antisymmetry_max_violation, self.jacobi_max_violation,
                   self.anchor_compat_max_violation)

    def ok(self, tol: float = 1e-10) -> bool:
        return self.max_violation() < tol


def check_axioms(spec: AlgebroidSpec, samples: int = 50, seed: int = 0) -> AxiomReport:
    """Evaluate the three coordinate identities at random base points.

    Checked, with all indices running over the rank n and cyc the cyclic sum
    over (a, b, c):

      antisymmetry   C^c_{ab} + C^c_{ba} = 0
      Jacobi         sum_cyc [ C^e_{ad} C^d_{bc} + rho^A_a d_A C^e_{bc} ] = 0
      anchor         rho^B_c d_B rho^A_d - rho^B_d d_B rho^A_c = rho^A_e C^e_{cd}

    Points are drawn uniformly from [-1, 1]^m with a seeded generator; for a
    Lie algebra (m = 0) the identities are evaluated once on constants.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    m, n = spec.base_dim, spec.rank
    names = list(spec.base)
    rng = np.random.default_rng(seed)
    npts = samples if m > 0 else 1
    pts = rng.uniform(-1.0, 1.0, size=(npts, m))
    cols = [pts[:, A] for A in range(m)]

    def ev(e: ex.Expr) -> np.ndarray:
        v = ex.compile_expr(e, names)(cols)
        return np.broadcast_to(np.asarray(v, dtype=float), (npts,))

    C = np.empty((n, n, n, npts))
    dC = np.empty((n, n, n, m, npts))
    for c, a, b in product(range(n), repeat=3):
        entry = spec.structure[c][a][b]
        C[c, a, b] = ev(entry)
        for A in range(m):
            dC[c, a, b, A] = ev(ex.diff(entry, names[A]))
    rho = np.empty((m, n, npts))
    drho = np.empty((m, n, m, npts))
    for A in range(m):
        for a in range(n):
            entry = spec.anchor[A][a]
            rho[A, a] = ev(entry)
            for B in range(m):
                drho[A, a, B] = ev(ex.diff(entry, names[B]))

    antis = 0.0
    for c, a, b in product(range(n), repeat=3):
        antis = max(antis, float(np.max(np.abs(C[c, a, b] + C[c, b, a]))))

    jacobi = 0.0
    for e, a, b, c in product(range(n), repeat=4):
        total = np.zeros(npts)
        for a1, b1, c1 in ((a, b, c), (b, c, a), (c, a, b)):
            for d in range(n):
                total += C[e, a1, d] * C[d, b1, c1]
            for A in range(m):
                total += rho[A, a1] * dC[e, b1, c1, A]
        jacobi = max(jacobi, float(np.max(np.abs(total))))

    compat = 0.0
    for A in range(m):
        for c in range(n):
            for d in range(n):
                lhs = np.zeros(npts)
                for B in range(m):
                    lhs += rho[B, c] * drho[A, d, B] - rho[B, d] * drho[A, c, B]
                for e in range(n):
                    lhs -= rho[A, e] * C[e, c, d]
                compat = max(compat, float(np.max(np.abs(lhs))))

    return AxiomReport(
        antisymmetry_max_violation=antis,
        jacobi_max_violation=jacobi,
        anchor_compat_max_violation=compat,
        sample_points=pts.tolist(),
    )

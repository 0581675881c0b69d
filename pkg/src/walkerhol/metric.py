"""Metric charts on (x, y1..yn, z): assembly, signature, Christoffel, curvature.

Conventions fixed here and used everywhere downstream:

* coordinates are ordered ``(x, y1..yn, z)`` with slots ``0, 1..n, n+1``;
* the canonical data is the matrix of entries ``g_ij = g(d_i, d_j)``.
  Line-element coefficients are resolved at assembly time: a coefficient
  ``c`` of ``dy^i dz`` contributes ``c/2`` to the (i, n+1) entry and the
  ``2 dx dz`` term contributes 1 to the (0, n+1) entry;
* Christoffel symbols ``Gamma[k, i, j] = Gamma^k_ij``;
* curvature components ``R[l, i, j, k]`` with R(d_i, d_j) d_k = R^l_ijk d_l.

All derivative input comes from exact jet evaluation of the entry fields,
so identities that hold symbolically (e.g. the Walker closed form
``Gamma^k_0i = 1/2 delta_i(n+1) delta_k0 df/dx``) hold here to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .expr import Const, Mul, ScalarField, as_field, _parts
from .sampling import expand_box, halton_points

__all__ = [
    "WalkerData",
    "MetricChart",
    "CurvatureTensor",
    "assemble_walker",
    "assemble_general",
]


@dataclass(frozen=True)
class WalkerData:
    """Walker-form coefficients: f on (x,y,z); u, gbase on (y,z) only."""

    f: ScalarField
    u: tuple
    gbase: tuple


@dataclass(frozen=True)
class CurvatureTensor:
    """Riemann tensor at a point, components R[l,i,j,k] (see module docstring)."""

    point: np.ndarray
    components: np.ndarray
    metric: np.ndarray

    def operator(self, u, v):
        """Matrix of the endomorphism R(u, v): column k holds R(u,v) d_k."""
        return np.einsum("lijk,i,j->lk", self.components, u, v)

    def lowered(self):
        """Fully lowered tensor R4[a,b,c,d] = <R(d_c, d_d) d_b, d_a>."""
        return np.einsum("am,mcdb->abcd", self.metric, self.components)


class MetricChart:
    """A pseudo-Riemannian metric on one coordinate chart.

    ``entries`` is the symmetric (n+2)x(n+2) matrix of ScalarFields.
    ``walker`` carries the Walker-form coefficient record when the chart
    was assembled in Walker form; ``box`` optionally bounds the domain.
    Charts are immutable and all evaluation is pure.
    """

    def __init__(self, n, entries, walker=None, box=None):
        self.n = int(n)
        self.dim = self.n + 2
        if len(entries) != self.dim or any(len(r) != self.dim for r in entries):
            raise ValidationError("entry matrix has wrong shape")
        self.entries = tuple(tuple(row) for row in entries)
        self.walker = walker
        self.box = None if box is None else expand_box(box, self.dim)
        self._cells = []
        for i in range(self.dim):
            for j in range(i, self.dim):
                field = self.entries[i][j]
                const = (
                    float(np.asarray(field.ast.ev(np.zeros((1, self.dim)))).ravel()[0])
                    if field.is_constant()
                    else None
                )
                self._cells.append((i, j, field, const))

    # -- evaluation -----------------------------------------------------

    def _batched(self, p):
        c = np.asarray(p, dtype=float)
        single = c.ndim == 1
        if single:
            c = c[None, :]
        if c.shape[-1] != self.dim:
            raise ValidationError(
                f"point has {c.shape[-1]} coordinates, chart has {self.dim}"
            )
        return c, single

    def contains(self, p):
        if self.box is None:
            return True
        p = np.asarray(p, dtype=float)
        return bool(
            np.all(p >= self.box[:, 0], axis=-1).all()
            and np.all(p <= self.box[:, 1], axis=-1).all()
        )

    def metric_at(self, p):
        c, single = self._batched(p)
        batch = c.shape[0]
        G = np.zeros((batch, self.dim, self.dim))
        for i, j, field, const in self._cells:
            val = const if const is not None else field.ast.ev(c)
            G[:, i, j] = val
            G[:, j, i] = val
        return G[0] if single else G

    def inverse_at(self, p):
        G = self.metric_at(p)
        return _checked_inverse(G)

    def signature_at(self, p):
        """Eigenvalue sign counts (neg, pos); raises on a singular matrix."""
        G = self.metric_at(p)
        w = np.linalg.eigvalsh(G)
        scale = np.max(np.abs(w), axis=-1, keepdims=True)
        if np.any(np.abs(w) <= 1e-10 * scale):
            raise ValidationError("metric is singular at a probe point")
        neg = np.sum(w < 0, axis=-1)
        pos = np.sum(w > 0, axis=-1)
        if np.asarray(p).ndim == 1:
            return int(neg), int(pos)
        return neg, pos

    def _entry_jets(self, c, order):
        batch, m = c.shape
        G = np.zeros((batch, m, m))
        dG = np.zeros((batch, m, m, m))
        d2G = np.zeros((batch, m, m, m, m)) if order >= 2 else None
        for i, j, field, const in self._cells:
            if const is not None:
                G[:, i, j] = const
                G[:, j, i] = const
                continue
            f, g, h = _parts(field.ast.jet(c, order))
            G[:, i, j] = f
            G[:, j, i] = f
            if g is not None:
                dG[:, :, i, j] = g
                dG[:, :, j, i] = g
            if order >= 2 and h is not None:
                d2G[:, :, :, i, j] = h
                d2G[:, :, :, j, i] = h
        return G, dG, d2G

    def christoffel(self, p):
        """Christoffel symbols Gamma[k,i,j] at ``p`` (batched when p is)."""
        c, single = self._batched(p)
        G, dG, _ = self._entry_jets(c, 1)
        Ginv = _checked_inverse(G)
        Gamma = _gamma_from(Ginv, dG)
        return Gamma[0] if single else Gamma

    def christoffel_with_grad(self, p):
        """(Gamma, dGamma) with dGamma[h,k,i,j] = d_h Gamma^k_ij."""
        c, single = self._batched(p)
        G, dG, d2G = self._entry_jets(c, 2)
        Ginv = _checked_inverse(G)
        C = dG + np.swapaxes(dG, 1, 2) - np.transpose(dG, (0, 2, 3, 1))
        Gamma = 0.5 * np.einsum("bkl,bijl->bkij", Ginv, C)
        dGinv = -np.einsum("bka,bhac,bcl->bhkl", Ginv, dG, Ginv)
        dC = d2G + np.swapaxes(d2G, 2, 3) - np.transpose(d2G, (0, 1, 3, 4, 2))
        dGamma = 0.5 * (
            np.einsum("bhkl,bijl->bhkij", dGinv, C)
            + np.einsum("bkl,bhijl->bhkij", Ginv, dC)
        )
        if single:
            return Gamma[0], dGamma[0]
        return Gamma, dGamma

    def riemann(self, p):
        """Riemann curvature at a single point ``p``."""
        c, single = self._batched(p)
        if not single:
            raise ValidationError("riemann expects a single point")
        Gamma, dGamma = self.christoffel_with_grad(p)
        t1 = np.transpose(dGamma, (1, 0, 2, 3))  # [l,i,j,k] = dGamma[i,l,j,k]
        q1 = np.einsum("lim,mjk->lijk", Gamma, Gamma)
        R = t1 - np.transpose(t1, (0, 2, 1, 3)) + q1 - np.transpose(q1, (0, 2, 1, 3))
        return CurvatureTensor(np.asarray(p, float), R, self.metric_at(p))

    def xi_curvature(self, p, i, j):
        """Coefficient of R(d_i, d_j) d_x on d_x for the lightlike-line connection.

        Closed form 1/2 (delta_j(n+1) d^2 f / dx^i dx - delta_i(n+1) d^2 f / dx^j dx),
        valid on Walker charts, where f is the dz^2 entry.
        """
        if self.walker is None:
            raise ValidationError("xi_curvature requires a Walker-form chart")
        last = self.dim - 1
        F = self.entries[last][last]
        out = 0.0
        if j == last:
            out += 0.5 * F.partial(p, (i, 0))
        if i == last:
            out -= 0.5 * F.partial(p, (j, 0))
        return out


def _checked_inverse(G):
    try:
        Ginv = np.linalg.inv(G)
    except np.linalg.LinAlgError as exc:
        raise ValidationError("metric is singular") from exc
    eye = np.eye(G.shape[-1])
    resid = np.max(np.abs(G @ Ginv - eye))
    if not np.isfinite(resid) or resid > 1e-8:
        raise ValidationError("metric is numerically singular")
    return Ginv


def _gamma_from(Ginv, dG):
    C = dG + np.swapaxes(dG, 1, 2) - np.transpose(dG, (0, 2, 3, 1))
    return 0.5 * np.einsum("bkl,bijl->bkij", Ginv, C)


def _symmetric_structure(rows, n, size, what):
    """Coerce a nested list to ScalarFields and enforce structural symmetry."""
    fields = [[as_field(rows[i][j], n) for j in range(size)] for i in range(size)]
    for i in range(size):
        for j in range(i + 1, size):
            if str(fields[i][j]) != str(fields[j][i]):
                raise ValidationError(f"{what} is not symmetric at ({i},{j})")
            fields[j][i] = fields[i][j]
    return fields


def assemble_walker(n, f, u=None, gbase=None, box=None, probe_count=32, seed=0):
    """Build a Walker-form chart from line-element coefficients.

    ``f`` is the dz^2 coefficient (may depend on all coordinates), ``u`` the
    n coefficients of dy^i dz (entry contribution u_i/2), ``gbase`` the
    n x n screen block.  ``u`` and ``gbase`` must not depend on x (checked
    symbolically) and ``gbase`` must be positive definite at quasi-random
    probe points of ``box`` (default: the unit cell).
    """
    m = n + 2
    f = as_field(f, n)
    if u is None:
        u = [0.0] * n
    if gbase is None:
        gbase = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    u = [as_field(ui, n) for ui in u]
    if len(u) != n:
        raise ValidationError(f"u must have {n} components")
    gb = _symmetric_structure(gbase, n, n, "gbase")
    for ui in u:
        if ui.depends_on(0):
            raise ValidationError("u coefficients must not depend on x")
    for row in gb:
        for entry in row:
            if entry.depends_on(0):
                raise ValidationError("gbase must not depend on x")

    zero = ScalarField(Const(0.0), n)
    one = ScalarField(Const(1.0), n)
    entries = [[zero for _ in range(m)] for _ in range(m)]
    entries[0][m - 1] = entries[m - 1][0] = one
    for a in range(n):
        for b in range(n):
            entries[1 + a][1 + b] = gb[a][b]
        half = ScalarField(Mul(Const(0.5), u[a].ast), n)
        if isinstance(u[a].ast, Const):
            half = ScalarField(Const(0.5 * u[a].ast.value), n)
        entries[1 + a][m - 1] = entries[m - 1][1 + a] = half
    entries[m - 1][m - 1] = f

    chart = MetricChart(n, entries, walker=WalkerData(f, tuple(u), _as_tuple(gb)), box=box)

    probe_box = chart.box if chart.box is not None else expand_box((0.0, 1.0), m)
    pts = halton_points(probe_box, probe_count, seed=seed)
    base = np.zeros((probe_count, n, n))
    for a in range(n):
        for b in range(a, n):
            val = gb[a][b](pts)
            base[:, a, b] = val
            base[:, b, a] = val
    w = np.linalg.eigvalsh(base)
    if np.any(w <= 0):
        raise ValidationError("gbase is not positive definite at a probe point")
    return chart


def _as_tuple(rows):
    return tuple(tuple(r) for r in rows)


def assemble_general(n, entries, box=None):
    """Build a chart from a full symmetric matrix of coefficient expressions."""
    m = n + 2
    fields = _symmetric_structure(entries, n, m, "entry matrix")
    return MetricChart(n, fields, walker=None, box=box)

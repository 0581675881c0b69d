"""Holonomy algebra sampling and Berard-Bergery--Ikemakhen classification.

The sampler realizes the Ambrose-Singer description numerically: curvature
operators at transported points, conjugated back to the base point along
the transporting path, expressed in an adapted frame.  The collected
operators are closed under commutators with an SVD-rank span, decomposed
against the stabilizer pattern

    [[a, w^T, 0], [0, A, -w], [0, 0, -a]],   A antisymmetric,

and classified into the indecomposable type list (Type1..Type4) or flagged
as NotReducible / Decomposable.  Reported dimensions carry "at least"
semantics: numerical rank cannot certify upper bounds, so the singular
values at the rank cut are part of the diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .sampling import expand_box, halton_points
from .transport import Polyline, Rectangle, parallel_transport

__all__ = [
    "AdaptedFrame",
    "SamplingStrategy",
    "StabilizerElement",
    "ClosureResult",
    "ClassificationResult",
    "HolonomyReport",
    "adapted_frame",
    "null_frame",
    "ambrose_singer_sample",
    "lie_closure",
    "stabilizer_decompose",
    "classify_bbi",
    "holonomy_report",
    "screen_curvature",
    "screen_transport",
    "screen_holonomy",
]


@dataclass(frozen=True, eq=False)
class AdaptedFrame:
    """Basis (V, E_1..E_n, Z) at a point, as columns of ``matrix``.

    V and Z are lightlike with g(V, Z) = 1, the E_a are orthonormal and
    orthogonal to both, so the Gram matrix is [[0,0,1],[0,I,0],[1,0,0]].
    """

    point: np.ndarray
    matrix: np.ndarray

    @property
    def vectors(self):
        return tuple(self.matrix[:, k] for k in range(self.matrix.shape[1]))

    def gram(self, chart):
        G = chart.metric_at(self.point)
        return self.matrix.T @ G @ self.matrix


def expected_gram(n):
    m = n + 2
    J = np.zeros((m, m))
    J[0, m - 1] = J[m - 1, 0] = 1.0
    J[1 : n + 1, 1 : n + 1] = np.eye(n)
    return J


def walker_z(chart, p):
    """Components of the canonical second lightlike direction Z at ``p``.

    Z = 1/2 (v^T gbase^-1 v - F) d_x - (gbase^-1 v)^a d_y^a + d_z, where
    v and F are the (y, z) and (z, z) metric entries; exactly isotropic
    and g(V, Z) = 1 for V = d_x.
    """
    m, n = chart.dim, chart.n
    G = chart.metric_at(p)
    gb = G[1 : n + 1, 1 : n + 1]
    v = G[1 : n + 1, m - 1]
    F = G[m - 1, m - 1]
    w = np.linalg.solve(gb, v)
    Z = np.zeros(m)
    Z[0] = 0.5 * (v @ w - F)
    Z[1 : n + 1] = -w
    Z[m - 1] = 1.0
    return Z


def adapted_frame(chart, p):
    """Adapted frame (V = d_x, E_a, Z) on a Walker chart."""
    if chart.walker is None:
        raise ValidationError("adapted_frame requires a Walker-form chart")
    p = np.asarray(p, dtype=float)
    m, n = chart.dim, chart.n
    G = chart.metric_at(p)
    V = np.zeros(m)
    V[0] = 1.0
    Z = walker_z(chart, p)
    cols = [V]
    for a in range(n):
        e = np.zeros(m)
        e[1 + a] = 1.0
        e = e - (e @ G @ Z) * V - (e @ G @ V) * Z
        for prev in cols[1:]:
            e = e - (e @ G @ prev) * prev
        nrm2 = e @ G @ e
        if nrm2 <= 0:
            raise ValidationError("screen block is degenerate at the point")
        cols.append(e / np.sqrt(nrm2))
    cols.append(Z)
    return AdaptedFrame(p, np.column_stack(cols))


def null_frame(chart, p):
    """Pointwise lightlike frame with the adapted Gram matrix, any chart.

    Prefers V = d_x when it is null at ``p`` (as on Walker-like regions);
    otherwise builds V from the timelike eigendirection.
    """
    p = np.asarray(p, dtype=float)
    m = chart.dim
    n = m - 2
    G = chart.metric_at(p)
    scale = np.max(np.abs(G))
    if abs(G[0, 0]) <= 1e-12 * scale:
        V = np.zeros(m)
        V[0] = 1.0
    else:
        w, vecs = np.linalg.eigh(G)
        if w[0] >= 0 or w[1] <= 0:
            raise ValidationError("metric is not Lorentzian at the point")
        T = vecs[:, 0] / np.sqrt(-w[0])
        S = vecs[:, 1] / np.sqrt(w[1])
        V = (T + S) / np.sqrt(2.0)
    pairing = G @ V
    k = int(np.argmax(np.abs(pairing)))
    if abs(pairing[k]) <= 1e-12 * max(scale, 1.0):
        raise ValidationError("degenerate metric at the point")
    Z0 = np.zeros(m)
    Z0[k] = 1.0 / pairing[k]
    Z = Z0 - 0.5 * (Z0 @ G @ Z0) * V
    cols = [V]
    for cand in range(m):
        if len(cols) == n + 1:
            break
        e = np.zeros(m)
        e[cand] = 1.0
        e = e - (e @ G @ Z) * V - (e @ G @ V) * Z
        for prev in cols[1:]:
            e = e - (e @ G @ prev) * prev
        nrm2 = e @ G @ e
        if nrm2 > 1e-10 * max(scale, 1.0):
            cols.append(e / np.sqrt(nrm2))
    if len(cols) != n + 1:
        raise ValidationError("could not complete a screen basis")
    cols.append(Z)
    return AdaptedFrame(p, np.column_stack(cols))


def frame_at(chart, p):
    return adapted_frame(chart, p) if chart.walker is not None else null_frame(chart, p)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplingStrategy:
    """Loop/lasso layout for Ambrose-Singer sampling.

    ``rect_sizes`` are rectangle loop side lengths laid in every coordinate
    plane at the base point; ``lasso_targets`` counts quasi-random targets
    drawn in ``box`` (plus any ``extra_targets``); ``plane_pairs`` selects
    the frame-index pairs fed to the curvature operators (default: all).
    """

    rect_sizes: tuple = (0.2, 0.1, 0.05)
    lasso_targets: int = 8
    plane_pairs: tuple | None = None
    extra_targets: tuple = ()
    seed: int = 0
    ode_tol: float = 1e-10
    box: object = None


def _strategy_box(chart, strategy):
    if strategy.box is not None:
        return expand_box(strategy.box, chart.dim)
    if chart.box is not None:
        return chart.box
    return expand_box((0.0, 1.0), chart.dim)


def _transport_family(chart, p, strategy, transport_fn, identity):
    """(P, q) pairs: identity at p, rectangle loops at p, straight lassos."""
    transports = [(identity.copy(), p)]
    m = chart.dim
    for h in strategy.rect_sizes:
        for i in range(m):
            for j in range(i + 1, m):
                loop = Rectangle(p, i, j, h)
                transports.append((transport_fn(loop), p))
    box = _strategy_box(chart, strategy)
    targets = list(halton_points(box, int(strategy.lasso_targets), seed=strategy.seed))
    targets.extend(np.asarray(t, dtype=float) for t in strategy.extra_targets)
    for q in targets:
        transports.append((transport_fn(Polyline([p, q])), q))
    return transports


def ambrose_singer_sample(chart, p, strategy=None):
    """Curvature operators conjugated to ``p``, in the adapted frame.

    For each transport P (loops at p and straight lassos p -> q) and each
    frame plane pair (a, b), samples the matrix of
    P^-1 R_q(P F_a, P F_b) P in the frame F at p.
    """
    strategy = strategy or SamplingStrategy()
    p = np.asarray(p, dtype=float)
    m = chart.dim
    frame = frame_at(chart, p)
    B = frame.matrix
    Binv = np.linalg.inv(B)
    pairs = strategy.plane_pairs or [
        (a, b) for a in range(m) for b in range(a + 1, m)
    ]

    def transport_fn(path):
        return parallel_transport(chart, path, np.eye(m), tol=strategy.ode_tol)

    samples = []
    for P, q in _transport_family(chart, p, strategy, transport_fn, np.eye(m)):
        R = chart.riemann(q)
        PB = P @ B
        conj = Binv @ np.linalg.solve(P, np.eye(m))
        for a, b in pairs:
            op = R.operator(PB[:, a], PB[:, b])
            samples.append(conj @ op @ PB)
    return samples


# ---------------------------------------------------------------------------
# algebra closure
# ---------------------------------------------------------------------------


@dataclass
class ClosureResult:
    basis: list
    singular_values: np.ndarray
    cap_hit: bool = False
    dropped: int = 0

    @property
    def dim(self):
        return len(self.basis)


def _span_rows(rows, tol_rank):
    if len(rows) == 0:
        return np.empty((0, 0)), np.empty(0)
    mat = np.asarray(rows)
    _, s, vt = np.linalg.svd(mat, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return vt[:0], s
    r = int(np.sum(s > tol_rank * s[0]))
    return vt[:r], s


def lie_closure(elems, tol_rank=1e-7):
    """Close a set of matrices under commutators, tracking an SVD span.

    Elements are normalized to unit Frobenius norm (near-zero inputs are
    dropped); the span keeps directions with singular value above
    ``tol_rank`` relative to the largest.  The dimension is capped at
    dim so(1, m-1) = m(m-1)/2 with a diagnostics flag when hit.
    """
    mats = [np.asarray(e, dtype=float) for e in elems]
    if not mats:
        return ClosureResult([], np.empty(0))
    m = mats[0].shape[0]
    cap = m * (m - 1) // 2
    norms = np.array([np.linalg.norm(e) for e in mats])
    floor = max(1e-13, 1e-9 * float(norms.max(initial=0.0)))
    kept = [e / nn for e, nn in zip(mats, norms) if nn > floor]
    dropped = len(mats) - len(kept)
    if not kept:
        return ClosureResult([], np.empty(0), dropped=dropped)

    rows = np.array([e.ravel() for e in kept])
    basis, svals = _span_rows(rows, tol_rank)
    cap_hit = False
    for _ in range(cap + 2):
        r = basis.shape[0]
        if r >= cap:
            cap_hit = r > cap
            basis = basis[:cap]
            break
        bm = basis.reshape(r, m, m)
        brackets = []
        for i in range(r):
            for j in range(i + 1, r):
                brackets.append((bm[i] @ bm[j] - bm[j] @ bm[i]).ravel())
        if not brackets:
            break
        stacked = np.vstack([basis, np.array(brackets)])
        new_basis, svals = _span_rows(stacked, tol_rank)
        if new_basis.shape[0] == r:
            basis = new_basis
            break
        basis = new_basis
    return ClosureResult(
        [row.reshape(m, m) for row in basis], svals, cap_hit=cap_hit, dropped=dropped
    )


# ---------------------------------------------------------------------------
# stabilizer decomposition and type classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StabilizerElement:
    """(a, A, w) with matrix [[a, w^T, 0], [0, A, -w], [0, 0, -a]]."""

    a: float
    A: np.ndarray
    w: np.ndarray
    residual: float

    def matrix(self):
        n = self.A.shape[0]
        m = n + 2
        X = np.zeros((m, m))
        X[0, 0] = self.a
        X[m - 1, m - 1] = -self.a
        X[0, 1 : n + 1] = self.w
        X[1 : n + 1, m - 1] = -self.w
        X[1 : n + 1, 1 : n + 1] = self.A
        return X


def stabilizer_decompose(elem, n, tol=1e-8):
    """Read (a, A, w) off a frame matrix, or None when the pattern fails."""
    X = np.asarray(elem, dtype=float)
    m = n + 2
    if X.shape != (m, m):
        raise ValidationError(f"element must be {m}x{m}")
    a = X[0, 0]
    A = X[1 : n + 1, 1 : n + 1]
    w = X[0, 1 : n + 1]
    resid = 0.0
    resid = max(resid, float(np.max(np.abs(X[1:, 0]))))
    resid = max(resid, float(np.max(np.abs(X[m - 1, 1 : n + 1]))) if n else 0.0)
    resid = max(resid, abs(X[0, m - 1]))
    resid = max(resid, abs(X[m - 1, m - 1] + a))
    if n:
        resid = max(resid, float(np.max(np.abs(X[1 : n + 1, m - 1] + w))))
        resid = max(resid, float(np.max(np.abs(A + A.T))))
    if resid > tol:
        return None
    return StabilizerElement(float(a), 0.5 * (A - A.T), w.copy(), resid)


@dataclass
class ClassificationResult:
    label: str
    dim: int
    g_dim: int
    translation_dim: int
    details: dict = field(default_factory=dict)


def _rank(rows, tol):
    """SVD rank with cutoff tol * max(sigma_0, 1): basis rows are unit-norm,
    so singular values below tol are noise regardless of the spectrum top."""
    rows = np.asarray(rows)
    if rows.size == 0:
        return 0, np.empty((0, rows.shape[-1] if rows.ndim > 1 else 0))
    _, s, vt = np.linalg.svd(rows, full_matrices=False)
    if s.size == 0:
        return 0, vt[:0]
    r = int(np.sum(s > tol * max(s[0], 1.0)))
    return r, vt[:r]


def classify_bbi(basis, n, stab_tol=1e-8, fit_tol=1e-6, rank_tol=1e-8):
    """Classify a holonomy basis (adapted-frame matrices) by stabilizer shape.

    Labels: Type1 for an independent scaling part with full translations;
    Type2 for pure g + translations spanning R^n; Type3 when the scaling
    part is a linear function of the rotation part; Type4(l) when only an
    l-dimensional translation block appears but the missing components are
    linearly coupled to the rotations; Decomposable for a proper, uncoupled
    translation block (or a trivial algebra); NotReducible when elements
    violate the stabilizer pattern or no consistent shape fits.
    """
    basis = [np.asarray(b, dtype=float) for b in basis]
    dim = len(basis)
    if dim == 0:
        return ClassificationResult("Decomposable", 0, 0, 0, {"trivial": True})
    decs = [stabilizer_decompose(b, n, stab_tol) for b in basis]
    if any(d is None for d in decs):
        bad = [i for i, d in enumerate(decs) if d is None]
        return ClassificationResult(
            "NotReducible", dim, 0, 0, {"pattern_violations": bad}
        )
    avec = np.array([d.a for d in decs])
    Amat = np.array([d.A.ravel() for d in decs])
    wmat = np.array([d.w for d in decs])

    g_dim, _ = _rank(Amat, rank_tol)

    # pure translations: coefficient combinations killing both a and A
    constraint = np.hstack([avec[:, None], Amat])
    _, ss, vv = np.linalg.svd(constraint.T, full_matrices=True)
    rank_t = int(np.sum(ss > rank_tol * max(ss[0] if ss.size else 0.0, 1.0)))
    kernel = vv[rank_t:]  # (dim - rank) x dim combinations
    trans = kernel @ wmat if kernel.size else np.empty((0, n))
    ell, t_basis = _rank(trans, rank_tol)

    a_zero = float(np.max(np.abs(avec))) <= stab_tol
    details = {
        "g_dim": g_dim,
        "translation_dim": ell,
        "a_max": float(np.max(np.abs(avec))),
    }

    def result(label):
        return ClassificationResult(label, dim, g_dim, ell, details)

    if a_zero:
        if ell == n and dim == g_dim + n:
            return result("Type2")
        if ell < n:
            # complementary components of w against the translation block
            if ell:
                proj = wmat - (wmat @ t_basis.T) @ t_basis
            else:
                proj = wmat
            if float(np.max(np.abs(proj), initial=0.0)) <= stab_tol:
                return result("Decomposable")
            psi, res, *_ = np.linalg.lstsq(Amat, proj, rcond=None)
            fit = proj - Amat @ psi
            details["w_coupling_residual"] = float(np.max(np.abs(fit)))
            if (
                details["w_coupling_residual"] < fit_tol
                and np.max(np.abs(psi)) > fit_tol
                and dim == g_dim + ell
            ):
                return result(f"Type4({ell})")
            return result("NotReducible")
        return result("NotReducible")

    # scaling part present: independent, or a linear function of A
    phi, *_ = np.linalg.lstsq(Amat, avec, rcond=None)
    fit_res = float(np.max(np.abs(avec - Amat @ phi)))
    details["a_fit_residual"] = fit_res
    if fit_res > fit_tol:
        if ell == n and dim == 1 + g_dim + n:
            return result("Type1")
        return result("NotReducible")
    if ell == n and dim == g_dim + n and g_dim > 0:
        return result("Type3")
    return result("NotReducible")


# ---------------------------------------------------------------------------
# report pipeline
# ---------------------------------------------------------------------------


@dataclass
class HolonomyReport:
    basis: list
    dim: int
    in_stabilizer: bool
    stab_basis: list
    screen_algebra_dim: int
    type_label: str
    diagnostics: dict

    def as_dict(self):
        return {
            "dim": self.dim,
            "in_stabilizer": self.in_stabilizer,
            "screen_algebra_dim": self.screen_algebra_dim,
            "type_label": self.type_label,
            "diagnostics": self.diagnostics,
        }


def holonomy_report(chart, p, strategy=None):
    """Full pipeline: sample, close, decompose, classify."""
    strategy = strategy or SamplingStrategy()
    samples = ambrose_singer_sample(chart, p, strategy)
    closure = lie_closure(samples)
    classification = classify_bbi(closure.basis, chart.n)
    decs = [stabilizer_decompose(b, chart.n) for b in closure.basis]
    in_stab = all(d is not None for d in decs) and bool(closure.basis)
    diagnostics = {
        "samples": len(samples),
        "dropped_samples": closure.dropped,
        "singular_values": [float(s) for s in closure.singular_values],
        "cap_hit": closure.cap_hit,
        "seed": strategy.seed,
        "classification": {
            k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
            for k, v in classification.details.items()
        },
    }
    return HolonomyReport(
        basis=closure.basis,
        dim=closure.dim,
        in_stabilizer=in_stab,
        stab_basis=[d for d in decs if d is not None] if in_stab else [],
        screen_algebra_dim=classification.g_dim,
        type_label=classification.label,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# screen bundle connection
# ---------------------------------------------------------------------------


def _screen_geometry(chart, pts):
    """Z components and their first derivatives on a batch of points."""
    m, n = chart.dim, chart.n
    G, dG, _ = chart._entry_jets(pts, 1)
    gb = G[:, 1 : n + 1, 1 : n + 1]
    v = G[:, 1 : n + 1, m - 1]
    w = np.linalg.solve(gb, v[..., None])[..., 0]
    Zy = -w  # y-components of Z
    dgb = dG[:, :, 1 : n + 1, 1 : n + 1]
    dv = dG[:, :, 1 : n + 1, m - 1]
    gbinv = np.linalg.inv(gb)
    # d_h Zy = gb^-1 (d_h gb) gb^-1 v - gb^-1 d_h v
    dZy = np.einsum("bac,bhcd,bd->bha", gbinv, dgb, w) - np.einsum(
        "bac,bhc->bha", gbinv, dv
    )
    return Zy, dZy


def screen_connection(chart, pts):
    """Connection coefficients C[i] of the screen realization span{d_y}.

    For sections written in the d_y components, (nabla^S_i s)^a =
    d_i s^a + C[i]^a_b s^b with C[i]^a_b = Gamma^a_ib - Gamma^(n+1)_ib Z^a.
    Transport along the fiber direction is trivial (C[0] = 0 on Walker
    charts) and the x-row never enters.
    """
    if chart.walker is None:
        raise ValidationError("screen connection requires a Walker-form chart")
    m, n = chart.dim, chart.n
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    Gamma = chart.christoffel(pts)
    Zy, _ = _screen_geometry(chart, pts)
    Ga = np.transpose(Gamma[:, 1 : n + 1, :, 1 : n + 1], (0, 2, 1, 3))
    Gz = Gamma[:, m - 1, :, 1 : n + 1]
    C = Ga - np.einsum("xib,xa->xiab", Gz, Zy)
    return C[0] if single else C


def screen_curvature(chart, p, i, j):
    """Curvature matrix of the screen connection for directions (i, j)."""
    if chart.walker is None:
        raise ValidationError("screen curvature requires a Walker-form chart")
    m, n = chart.dim, chart.n
    p = np.asarray(p, dtype=float)
    pts = p[None, :]
    Gamma, dGamma = chart.christoffel_with_grad(pts)
    Gamma, dGamma = Gamma[0], dGamma[0]
    Zy, dZy = _screen_geometry(chart, pts)
    Zy, dZy = Zy[0], dZy[0]
    Ga = np.transpose(Gamma[1 : n + 1, :, 1 : n + 1], (1, 0, 2))  # [i,a,b]
    Gz = Gamma[m - 1, :, 1 : n + 1]  # [i,b]
    C = Ga - np.einsum("ib,a->iab", Gz, Zy)
    dGa = np.transpose(dGamma[:, 1 : n + 1, :, 1 : n + 1], (0, 2, 1, 3))  # [h,i,a,b]
    dGz = dGamma[:, m - 1, :, 1 : n + 1]  # [h,i,b]
    dC = (
        dGa
        - np.einsum("hib,a->hiab", dGz, Zy)
        - np.einsum("ib,ha->hiab", Gz, dZy)
    )
    return dC[i, j] - dC[j, i] + C[i] @ C[j] - C[j] @ C[i]


def screen_transport(chart, path, tol=1e-10):
    """Transport matrix of the screen connection along ``path`` (d_y basis)."""
    from .transport import as_polyline, integrate
    from .errors import NumericalError
    from .expr import EvalDomainError

    poly = as_polyline(path)
    n = chart.n
    W = np.eye(n)
    for a, b in poly.segments():
        delta = b - a

        def rhs(s, w, a=a, delta=delta):
            C = screen_connection(chart, a + s * delta)
            conn = np.einsum("i,iab->ab", delta, C)
            return -conn @ w

        res = integrate(rhs, 0.0, W, 1.0, rtol=tol, atol=tol)
        if res.status != "completed":
            raise NumericalError(f"screen transport {res.status}")
        W = res.y_final
    return W


def screen_holonomy(chart, p, strategy=None):
    """Ambrose-Singer sampling of the screen connection, closed under brackets.

    Returns a :class:`ClosureResult` whose basis matrices live in so(n),
    expressed in the orthonormal screen frame E at the base point.
    """
    strategy = strategy or SamplingStrategy()
    p = np.asarray(p, dtype=float)
    m = chart.dim
    frame = adapted_frame(chart, p)
    T = frame.matrix[1 : chart.n + 1, 1 : chart.n + 1]
    Tinv = np.linalg.inv(T)
    pairs = [(a, b) for a in range(m) for b in range(a + 1, m)]

    def transport_fn(path):
        return screen_transport(chart, path, tol=strategy.ode_tol)

    samples = []
    for P, q in _transport_family(chart, p, strategy, transport_fn, np.eye(chart.n)):
        Pinv = np.linalg.inv(P)
        for a, b in pairs:
            R = screen_curvature(chart, q, a, b)
            samples.append(Tinv @ (Pinv @ R @ P) @ T)
    return lie_closure(samples)

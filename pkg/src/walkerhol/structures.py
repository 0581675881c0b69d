"""Pointwise algebraic checks for special screen holonomy structures.

Covers the (1,1) condition of a 2-form against a complex structure, the
dual Lefschetz contraction and primitivity, the hyperkähler double-(1,1)
condition, the G2 and Spin(7) contraction conditions (metric contraction
over the second and fourth slots followed by the cyclic resp. alternating
cyclic sum), and the transported-phase identity for the complex volume
form over a flat base.

Conventions: a 2-form is stored as the antisymmetric matrix of its values
psi[i, j] = psi(d_i, d_j); the Kähler form of (J, G) is w(u, v) = G(Ju, v);
the dual Lefschetz contraction is L(psi) = sum_i psi(e_i, J e_i) over a
unitary frame picking one representative per complex line.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .expr import ScalarField, as_field

__all__ = [
    "TwoForm",
    "check_one_one",
    "unitary_frame",
    "dual_lefschetz",
    "check_primitive",
    "check_hyperkahler",
    "g2_condition",
    "spin7_condition",
    "su_phase_check",
    "standard_complex_structure",
    "standard_hyperkahler_triple",
    "standard_g2_form",
    "standard_cayley_form",
    "standard_volume_form",
    "kahler_form",
    "validate_complex_structure",
]


@dataclass(frozen=True, eq=False)
class TwoForm:
    """Antisymmetric matrix of ScalarFields over selected chart coordinates.

    ``slots`` maps base indices to chart coordinate slots so the same
    chart-coordinate expressions serve forms on the screen torus (y only)
    and on (y, z) bases.
    """

    comps: tuple
    slots: tuple

    @property
    def dim(self):
        return len(self.slots)

    def at(self, p):
        out = np.zeros((self.dim, self.dim))
        for i in range(self.dim):
            for j in range(i + 1, self.dim):
                val = self.comps[i][j](p)
                out[i, j] = val
                out[j, i] = -val
        return out

    @classmethod
    def from_components(cls, comps, slots, n):
        """Build from the upper triangle of a nested component list."""
        dim = len(slots)
        fields = [[as_field(0.0, n) for _ in range(dim)] for _ in range(dim)]
        for i in range(dim):
            for j in range(i + 1, dim):
                fij = as_field(comps[i][j], n)
                fields[i][j] = fij
                fields[j][i] = fij  # at() applies the sign
        return cls(tuple(tuple(r) for r in fields), tuple(slots))

    @classmethod
    def from_potential(cls, potential, slots, n):
        """Exterior derivative of a 1-form: psi_ab = d_a phi_b - d_b phi_a."""
        dim = len(slots)
        pot = [as_field(c, n) for c in potential]
        if len(pot) != dim:
            raise ValidationError("potential must have one component per slot")
        fields = [[as_field(0.0, n) for _ in range(dim)] for _ in range(dim)]
        for a in range(dim):
            for b in range(a + 1, dim):
                ast = pot[b].ast.diff(slots[a])
                ast2 = pot[a].ast.diff(slots[b])
                from .expr import _ssub

                fields[a][b] = ScalarField(_ssub(ast, ast2), n)
        return cls(tuple(tuple(r) for r in fields), tuple(slots))


def _psi_matrix(psi, p):
    if isinstance(psi, TwoForm):
        return psi.at(p)
    mat = np.asarray(psi, dtype=float)
    if np.max(np.abs(mat + mat.T)) > 1e-12 * max(1.0, np.max(np.abs(mat))):
        raise ValidationError("2-form matrix must be antisymmetric")
    return mat


def validate_complex_structure(J, G=None, tol=1e-10):
    J = np.asarray(J, dtype=float)
    n = J.shape[0]
    if n % 2:
        raise ValidationError("complex structures need even dimension")
    if np.max(np.abs(J @ J + np.eye(n))) > tol:
        raise ValidationError("J^2 = -I fails")
    if G is not None:
        G = np.asarray(G, dtype=float)
        if np.max(np.abs(J.T @ G @ J - G)) > tol:
            raise ValidationError("J is not compatible with the metric")
    return J


def standard_complex_structure(n):
    """J with J e_(2k-1) = e_2k on consecutive coordinate pairs."""
    if n % 2:
        raise ValidationError("even dimension required")
    J = np.zeros((n, n))
    for k in range(0, n, 2):
        J[k + 1, k] = 1.0
        J[k, k + 1] = -1.0
    return J


def kahler_form(J, G=None):
    """Matrix of w(u, v) = G(Ju, v)."""
    J = np.asarray(J, dtype=float)
    G = np.eye(J.shape[0]) if G is None else np.asarray(G, dtype=float)
    return J.T @ G


def check_one_one(psi, J, p=None):
    """Max-abs of psi(J d_j, d_l) + psi(d_j, J d_l); zero iff psi is (1,1)."""
    J = np.asarray(J, dtype=float)
    if J.shape[0] % 2:
        raise ValidationError("the (1,1) check needs even dimension")
    Psi = _psi_matrix(psi, p)
    defect = J.T @ Psi + Psi @ J
    return float(np.max(np.abs(defect)))


def unitary_frame(J, G):
    """One representative per complex line: e_1, skip Je_1, iterate (G-GS)."""
    J = np.asarray(J, dtype=float)
    G = np.asarray(G, dtype=float)
    n = J.shape[0]
    chosen = []
    for cand in range(n):
        if len(chosen) == n // 2:
            break
        v = np.zeros(n)
        v[cand] = 1.0
        for e in chosen:
            je = J @ e
            v = v - (v @ G @ e) * e - (v @ G @ je) / (je @ G @ je) * je
        nrm2 = v @ G @ v
        if nrm2 > 1e-12:
            chosen.append(v / np.sqrt(nrm2))
    if len(chosen) != n // 2:
        raise ValidationError("could not build a unitary frame")
    return chosen


def dual_lefschetz(psi, J, G=None, p=None):
    """Contraction sum psi(e_i, J e_i) over the unitary frame."""
    J = np.asarray(J, dtype=float)
    G = np.eye(J.shape[0]) if G is None else np.asarray(G, dtype=float)
    Psi = _psi_matrix(psi, p)
    frame = unitary_frame(J, G)
    return float(sum(e @ Psi @ (J @ e) for e in frame))


def check_primitive(psi, J, G=None, grid=None):
    """Max |Lefschetz contraction| over the grid points (zero iff primitive)."""
    if grid is None:
        grid = [None]
    return max(abs(dual_lefschetz(psi, J, G, p)) for p in grid)


def check_hyperkahler(psi, J1, J2, p=None):
    """Max of the two (1,1) residuals; requires an anticommuting pair."""
    J1 = np.asarray(J1, dtype=float)
    J2 = np.asarray(J2, dtype=float)
    if J1.shape[0] % 4:
        raise ValidationError("hyperkähler check needs dimension divisible by 4")
    if np.max(np.abs(J1 @ J2 + J2 @ J1)) > 1e-10:
        raise ValidationError("J1 and J2 must anticommute")
    return max(check_one_one(psi, J1, p), check_one_one(psi, J2, p))


def standard_hyperkahler_triple():
    """Left quaternion multiplications (J1, J2, J3 = J1 J2) on R^4."""
    J1 = np.zeros((4, 4))
    J2 = np.zeros((4, 4))
    # i: 1 -> i, j -> k;  j: 1 -> j, i -> -k, k -> i
    for a, b in [(1, 0), (3, 2)]:
        J1[a, b] = 1.0
        J1[b, a] = -1.0
    J2[2, 0] = 1.0
    J2[0, 2] = -1.0
    J2[1, 3] = 1.0
    J2[3, 1] = -1.0
    return J1, J2, J1 @ J2


# ---------------------------------------------------------------------------
# exceptional structures
# ---------------------------------------------------------------------------

_G2_TERMS = [
    (0, 1, 2, 1.0),
    (0, 3, 4, 1.0),
    (0, 5, 6, 1.0),
    (1, 3, 5, 1.0),
    (1, 4, 6, -1.0),
    (2, 3, 6, -1.0),
    (2, 4, 5, -1.0),
]


def _fill_antisym(arr, index, value):
    k = len(index)
    for perm in itertools.permutations(range(k)):
        sign = 1.0
        q = list(perm)
        for s in range(k):
            while q[s] != s:
                t = q[s]
                q[s], q[t] = q[t], q[s]
                sign = -sign
        arr[tuple(index[i] for i in perm)] = sign * value


def standard_g2_form():
    """Associative 3-form on R^7 (component table, orthonormal basis)."""
    phi = np.zeros((7, 7, 7))
    for a, b, c, v in _G2_TERMS:
        _fill_antisym(phi, (a, b, c), v)
    return phi


def _hodge_dual_7(phi):
    """Hodge dual of a 3-form on Euclidean R^7."""
    star = np.zeros((7,) * 4)
    idx = list(range(7))
    for triple in itertools.combinations(idx, 3):
        v = phi[triple]
        if v == 0.0:
            continue
        rest = tuple(sorted(set(idx) - set(triple)))
        perm = list(triple) + list(rest)
        sign = 1.0
        q = list(perm)
        for s in range(7):
            while q[s] != s:
                t = q[s]
                q[s], q[t] = q[t], q[s]
                sign = -sign
        _fill_antisym(star, rest, sign * v)
    return star


def standard_cayley_form():
    """Cayley 4-form on R^8: e_0 ^ phi + *phi on the last seven coordinates."""
    phi = standard_g2_form()
    omega = np.zeros((8,) * 4)
    for triple in itertools.combinations(range(7), 3):
        v = phi[triple]
        if v != 0.0:
            _fill_antisym(omega, (0,) + tuple(t + 1 for t in triple), v)
    star = _hodge_dual_7(phi)
    for quad in itertools.combinations(range(7), 4):
        v = star[quad]
        if v != 0.0:
            _fill_antisym(omega, tuple(q + 1 for q in quad), v)
    return omega


def g2_condition(psi, phi=None, G=None):
    """Cyclic (Bianchi) sum of the 2-4 contraction of psi x phi, max-abs.

    Vanishes exactly when the 2-form psi, viewed in so(7), annihilates the
    associative form phi.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (7, 7):
        raise ValidationError("g2 condition needs a 2-form on R^7")
    phi = standard_g2_form() if phi is None else np.asarray(phi, dtype=float)
    Ginv = np.eye(7) if G is None else np.linalg.inv(np.asarray(G, dtype=float))
    T = np.einsum("bd,ab,cde->ace", Ginv, psi, phi)
    BI = T + np.transpose(T, (1, 2, 0)) + np.transpose(T, (2, 0, 1))
    return float(np.max(np.abs(BI)))


def spin7_condition(psi, omega=None, G=None):
    """Alternating cyclic sum of the 2-4 contraction of psi x Omega, max-abs.

    Vanishes exactly when psi, viewed in so(8), annihilates the Cayley form.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (8, 8):
        raise ValidationError("spin7 condition needs a 2-form on R^8")
    omega = standard_cayley_form() if omega is None else np.asarray(omega, dtype=float)
    Ginv = np.eye(8) if G is None else np.linalg.inv(np.asarray(G, dtype=float))
    T = np.einsum("bd,ab,cdef->acef", Ginv, psi, omega)
    AB = (
        T
        - np.transpose(T, (1, 2, 3, 0))
        + np.transpose(T, (2, 3, 0, 1))
        - np.transpose(T, (3, 0, 1, 2))
    )
    return float(np.max(np.abs(AB)))


# ---------------------------------------------------------------------------
# SU(n) phase identity
# ---------------------------------------------------------------------------


def standard_volume_form(n):
    """Complex volume form dw^1 ^ ... ^ dw^(n/2) for the standard J on R^n."""
    if n % 2:
        raise ValidationError("even dimension required")
    m = n // 2
    omega = np.zeros((n,) * m, dtype=complex)
    # dw^k = dy^(2k-1) + i dy^(2k); component at real indices via expansion
    for reals in itertools.product(*[(2 * k, 2 * k + 1) for k in range(m)]):
        coeff = 1.0 + 0.0j
        for k, r in enumerate(reals):
            if r == 2 * k + 1:
                coeff *= 1.0j
        # antisymmetrize over all permutations of the chosen slots
        for perm in itertools.permutations(range(m)):
            sign = 1.0
            q = list(perm)
            for s in range(m):
                while q[s] != s:
                    t = q[s]
                    q[s], q[t] = q[t], q[s]
                    sign = -sign
            omega[tuple(reals[i] for i in perm)] = sign * coeff
    return omega


def _pullback_form(omega, Pinv):
    """Components of the form pulled back by the inverse transport."""
    k = omega.ndim
    letters = "abcd"[:k]
    upper = "mnpq"[:k]
    spec = (
        f"{''.join(upper)},"
        + ",".join(f"{u}{l}" for u, l in zip(upper, letters))
        + f"->{''.join(letters)}"
    )
    return np.einsum(spec, omega, *([Pinv] * k))


def su_phase_check(chart, J, omega, alpha_const, dz_values, base_point=None, tol=1e-10):
    """Transport the volume form along z and compare with the phase rotation.

    Returns the max-abs deviation between the transported components and
    e^(-i * alpha * dz) times the originals, over the given z-displacements.
    The chart must be toric with a flat base so the screen transport along
    a coordinate z-path realizes the Z-direction rotation exactly.
    """
    from .holonomy import screen_transport

    if chart.walker is None:
        raise ValidationError("su_phase_check needs a toric Walker chart")
    n = chart.n
    J = validate_complex_structure(J)
    omega = np.asarray(omega, dtype=complex)
    if omega.ndim != n // 2 or omega.shape[0] != n:
        raise ValidationError("volume form has wrong degree or dimension")
    m = chart.dim
    p = np.full(m, 0.5) if base_point is None else np.asarray(base_point, float)
    worst = 0.0
    for dz in np.atleast_1d(dz_values):
        q = p.copy()
        q[m - 1] += float(dz)
        P = screen_transport(chart, [p, q], tol=tol)
        Pinv = np.linalg.inv(P)
        moved = _pullback_form(omega, Pinv)
        phase = np.exp(-1j * alpha_const * float(dz))
        worst = max(worst, float(np.max(np.abs(moved - phase * omega))))
    return worst

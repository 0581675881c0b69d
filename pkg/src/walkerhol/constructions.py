"""Ready-made metric charts: toric bundles over flat tori, pp-wave families,
and the non-reducible bump-function counterexample.

Toric charts are assembled from an explicit local connection potential, so
the attached curvature 2-form is its symbolic exterior derivative by
construction.  Charts represent one periodic cell of the underlying torus
(coefficients written in sin/cos of 2*pi*coordinate); holonomy loops should
stay inside one cell, which the default probe boxes guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .expr import ScalarField, as_field, parse_expression
from .metric import MetricChart, assemble_general, assemble_walker
from .sampling import expand_box
from .structures import TwoForm

__all__ = [
    "ConstructionSpec",
    "Construction",
    "build",
    "flat_chart",
    "bump_pair",
    "sufficiently_generic_default",
]

KINDS = (
    "toric_flat_torus",
    "corollary_ppwave",
    "footnote_counterexample",
    "example52_3d",
)


@dataclass(frozen=True)
class ConstructionSpec:
    """Parameters for a named construction; validated per kind."""

    kind: str
    n: int = 2
    c: int = 1
    f: object = None
    f1: object = None
    f2: object = None


@dataclass(frozen=True, eq=False)
class Construction:
    """A built chart plus its attachments and sensible probe defaults."""

    chart: MetricChart
    psi: TwoForm | None
    potential: tuple | None
    base_slots: tuple
    probe_box: np.ndarray
    base_point: np.ndarray
    extra_targets: tuple = field(default=())


def _cell_box(m, margin=0.1):
    return expand_box((-margin, 1.0 + margin), m)


def flat_chart(n, box=None):
    """Minkowski metric in lightcone-adapted coordinates (Walker with f = 0)."""
    return assemble_walker(n, 0.0, box=box)


def bump_pair():
    """Smooth plateau pair: f1 = 1 left of -1 and 0 right of -1/2; f2 mirrored.

    Built from the C-infinity unit step of the exp(-1/t) mollifier, so
    f1 * f2 vanishes identically (the supports are disjoint).
    """
    f1 = parse_expression("smoothstep(-2*z - 1)", 1)
    f2 = parse_expression("smoothstep(2*z - 1)", 1)
    return f1, f2


def sufficiently_generic_default(n):
    """Default coefficient pair (x-independent, x-dependent).

    These are the documented test functions; the holonomy report verifies
    the achieved dimension rather than asserting genericity.
    """
    terms = [f"sin(2*pi*y{i})*cos({2 * i}*pi*z)" for i in range(1, n + 1)]
    base = " + ".join(terms)
    xdep = base + " + sin(2*pi*x)*(1 + cos(2*pi*z))"
    return parse_expression(base, n), parse_expression(xdep, n)


def _toric_flat_torus(spec):
    n = int(spec.n)
    if n < 2:
        raise ValidationError("the toric flat-torus chart needs n >= 2")
    c = int(spec.c)
    f = as_field(spec.f if spec.f is not None else 0.0, n)
    # local potential c * y1 dy2 for the class c dy1 ^ dy2; 2 phi = u_i dy^i
    u = [0.0] * n
    u[1] = f"{2 * c}*y1"
    m = n + 2
    chart = assemble_walker(n, f, u=u, gbase=None, box=_cell_box(m))
    slots = tuple(range(1, n + 1))
    potential = [0.0] * n
    potential[1] = f"{c}*y1"
    pot_fields = tuple(as_field(x, n) for x in potential)
    psi = TwoForm.from_potential(potential, slots, n)
    return Construction(
        chart=chart,
        psi=psi,
        potential=pot_fields,
        base_slots=slots,
        probe_box=expand_box((0.0, 1.0), m),
        base_point=np.full(m, 0.5),
    )


def _corollary_family(n, f_src):
    """2 dx dz + (y1 + f + 1) dz^2 + sum (dy^i)^2 over one torus cell."""
    f = as_field(f_src if f_src is not None else 0.0, n)
    total = parse_expression(f"y1 + ({f}) + 1", n)
    m = n + 2
    chart = assemble_walker(n, total, box=None)
    slots = tuple(range(1, n + 1)) + (n + 1,)
    potential = [0.0] * n + ["y1"]
    pot_fields = tuple(as_field(x, n) for x in potential)
    psi = TwoForm.from_potential(potential, slots, n)
    return Construction(
        chart=chart,
        psi=psi,
        potential=pot_fields,
        base_slots=slots,
        probe_box=expand_box((0.0, 1.0), m),
        base_point=np.full(m, 0.5),
    )


def _footnote(spec):
    f1 = as_field(spec.f1, 1) if spec.f1 is not None else bump_pair()[0]
    f2 = as_field(spec.f2, 1) if spec.f2 is not None else bump_pair()[1]
    entries = [
        [f"y1^2*({f2})", "0", "1"],
        ["0", "1", "0"],
        ["1", "0", f"y1^2*({f1})"],
    ]
    chart = assemble_general(1, entries, box=None)
    return Construction(
        chart=chart,
        psi=None,
        potential=None,
        base_slots=(1,),
        probe_box=expand_box((-2.0, 2.0), 3),
        base_point=np.zeros(3),
        extra_targets=(
            np.array([0.25, 0.5, 1.5]),
            np.array([0.25, 0.5, -1.5]),
            np.array([-0.5, -0.5, 1.8]),
            np.array([-0.5, 0.75, -1.8]),
        ),
    )


def build(spec):
    """Build the chart for a :class:`ConstructionSpec` with attachments."""
    if isinstance(spec, str):
        spec = ConstructionSpec(kind=spec)
    if spec.kind == "toric_flat_torus":
        return _toric_flat_torus(spec)
    if spec.kind == "corollary_ppwave":
        return _corollary_family(int(spec.n), spec.f)
    if spec.kind == "example52_3d":
        return _corollary_family(1, spec.f)
    if spec.kind == "footnote_counterexample":
        return _footnote(spec)
    raise ValidationError(f"unknown construction kind {spec.kind!r} (use one of {KINDS})")

"""Command-line front end: parse a metric config, run analyses, emit reports.

Configs are INI files (see the demo command for ready-made examples) with a
[metric] section naming either explicit Walker/general coefficients or one
of the built-in demo charts, plus per-analysis sections.  Reports are JSON
(deterministic for a fixed config and seed, apart from the timestamp
field); trajectories are CSV files with the fixed header
``t,x,y1,...,yn,z,vx,vy1,...,vyn,vz,energy``.

Exit codes: 0 success, 2 config/parse error, 3 mathematical validation
failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .constructions import (
    Construction,
    ConstructionSpec,
    build,
    flat_chart,
    sufficiently_generic_default,
)
from .errors import NumericalError, ValidationError
from .expr import EvalDomainError, ExpressionError
from .holonomy import SamplingStrategy, holonomy_report
from .metric import assemble_general, assemble_walker
from .sampling import expand_box, halton_points
from .structures import (
    TwoForm,
    check_hyperkahler,
    check_one_one,
    check_primitive,
    dual_lefschetz,
    g2_condition,
    spin7_condition,
    standard_complex_structure,
    standard_hyperkahler_triple,
    standard_volume_form,
    su_phase_check,
)
from .transport import (
    GeodesicState,
    completeness_probe,
    geodesic,
    geodesic_ensemble,
    ppwave_reduced,
    reduced_compatible,
)

DEMO_NAMES = ("flat", "toric-ppwave", "toric-prwave", "corollary", "footnote", "example52")

CSV_NOTE = "t,x,y1..yn,z,vx,vy1..vyn,vz,energy"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config parsing helpers
# ---------------------------------------------------------------------------


def _floats(text):
    return [float(tok) for tok in text.replace(";", ",").split(",") if tok.strip()]


def _points(text):
    out = []
    for block in text.split(";"):
        if block.strip():
            out.append(np.array([float(t) for t in block.split(",")]))
    return out


def _box(text, dim):
    rows = [r for r in text.split(";") if r.strip()]
    if len(rows) == 1:
        lo, hi = (float(t) for t in rows[0].split(","))
        return expand_box((lo, hi), dim)
    vals = [[float(t) for t in r.split(",")] for r in rows]
    return expand_box(np.array(vals), dim)


def _load_config(path):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return parser


def _resolve_metric(cfg):
    """Build (chart, construction-or-None, meta) from the [metric] section."""
    if not cfg.has_section("metric"):
        raise ConfigError("config needs a [metric] section")
    sec = cfg["metric"]
    kind = sec.get("kind", "").strip()
    if not kind:
        raise ConfigError("[metric] kind is required")
    n = sec.getint("n", fallback=2)
    f = sec.get("f", fallback=None)
    domain = sec.get("domain", fallback=None)

    if kind == "walker":
        u = [sec.get(f"u{i}", fallback="0") for i in range(1, n + 1)]
        gbase = [["1" if i == j else "0" for j in range(n)] for i in range(n)]
        for i in range(n):
            for j in range(i, n):
                val = sec.get(f"g_{i + 1}_{j + 1}", fallback=None)
                if val is not None:
                    gbase[i][j] = val
                    gbase[j][i] = val
        box = _box(domain, n + 2) if domain else None
        chart = assemble_walker(n, f if f is not None else "0", u=u, gbase=gbase, box=box)
        return chart, None, {"kind": kind, "n": n}
    if kind == "general":
        m = n + 2
        entries = [["0"] * m for _ in range(m)]
        for i in range(m):
            for j in range(i, m):
                val = sec.get(f"e_{i}_{j}", fallback=None)
                if val is None:
                    raise ConfigError(f"[metric] e_{i}_{j} is required for general kind")
                entries[i][j] = val
                entries[j][i] = val
        box = _box(domain, m) if domain else None
        chart = assemble_general(n, entries, box=box)
        return chart, None, {"kind": kind, "n": n}
    if kind in DEMO_NAMES:
        chart, con = _demo_chart(kind, n, f)
        return chart, con, {"kind": kind, "n": con.chart.n if con else n}
    raise ConfigError(f"unknown metric kind {kind!r}")


def _demo_chart(kind, n, f):
    if kind == "flat":
        chart = flat_chart(n)
        m = n + 2
        con = Construction(
            chart=chart, psi=None, potential=None, base_slots=tuple(range(1, n + 1)),
            probe_box=expand_box((0.0, 1.0), m), base_point=np.full(m, 0.5),
        )
        return chart, con
    if kind in ("toric-ppwave", "toric-prwave"):
        find, fdep = sufficiently_generic_default(n)
        default = find if kind == "toric-ppwave" else fdep
        con = build(ConstructionSpec("toric_flat_torus", n=n, c=1, f=f or default))
        return con.chart, con
    if kind == "corollary":
        default = str(sufficiently_generic_default(n)[0])
        con = build(ConstructionSpec("corollary_ppwave", n=n, f=f or default))
        return con.chart, con
    if kind == "example52":
        _, fdep = sufficiently_generic_default(1)
        con = build(ConstructionSpec("example52_3d", f=f or str(fdep)))
        return con.chart, con
    if kind == "footnote":
        con = build(ConstructionSpec("footnote_counterexample"))
        return con.chart, con
    raise ConfigError(f"unknown demo {kind!r}")


def _probe_settings(cfg, chart, con, seed_override):
    sec = cfg["probe"] if cfg.has_section("probe") else {}
    box_text = sec.get("box") if sec else None
    if box_text:
        box = _box(box_text, chart.dim)
    elif con is not None:
        box = con.probe_box
    else:
        box = expand_box((0.0, 1.0), chart.dim)
    count = int(sec.get("points", 32)) if sec else 32
    seed = int(sec.get("seed", 20240801)) if sec else 20240801
    if seed_override is not None:
        seed = int(seed_override)
    return box, count, seed


def _base_point(cfg, chart, con):
    if cfg.has_section("holonomy") and cfg["holonomy"].get("base_point", None):
        return np.array(_floats(cfg["holonomy"]["base_point"]))
    if con is not None:
        return con.base_point
    return np.full(chart.dim, 0.5)


def _sanitize(obj):
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_check(cfg, chart, con, seed, box, count, report):
    pts = halton_points(box, count, seed=seed)
    neg, pos = chart.signature_at(pts)
    ok = bool(np.all(neg == 1) and np.all(pos == chart.n + 1))
    section = {
        "probe_points": count,
        "signature_expected": [1, chart.n + 1],
        "signature_ok": ok,
        "walker_form": chart.walker is not None,
    }
    if chart.walker is not None:
        worst = 0.0
        F = chart.entries[chart.dim - 1][chart.dim - 1]
        for p in pts[: min(count, 8)]:
            gamma = chart.christoffel(p)
            expect = np.zeros_like(gamma)
            expect[0, 0, chart.dim - 1] = 0.5 * F.partial(p, (0,))
            expect[0, chart.dim - 1, 0] = expect[0, 0, chart.dim - 1]
            worst = max(worst, float(np.max(np.abs(gamma[:, 0, :] - expect[:, 0, :]))))
        section["walker_gamma_residual"] = worst
    report["check"] = section
    if not ok:
        raise ValidationError("signature check failed on the probe grid")
    return report


def _strategy(cfg, con, seed, box):
    sec = cfg["holonomy"] if cfg.has_section("holonomy") else {}
    rect = tuple(_floats(sec.get("rect_sizes", "0.2,0.1,0.05"))) if sec else (0.2, 0.1, 0.05)
    lassos = int(sec.get("lassos", 8)) if sec else 8
    tol = float(sec.get("tol", 1e-10)) if sec else 1e-10
    extra = tuple(_points(sec.get("targets", ""))) if sec else ()
    if not extra and con is not None:
        extra = tuple(con.extra_targets)
    return SamplingStrategy(
        rect_sizes=rect, lasso_targets=lassos, extra_targets=extra,
        seed=seed, ode_tol=tol, box=box,
    )


def _cmd_holonomy(cfg, chart, con, seed, box, count, report):
    strategy = _strategy(cfg, con, seed, box)
    p = _base_point(cfg, chart, con)
    rep = holonomy_report(chart, p, strategy)
    report["holonomy"] = _sanitize(
        {
            "base_point": p,
            "dim": rep.dim,
            "type_label": rep.type_label,
            "g_dim": rep.screen_algebra_dim,
            "in_stabilizer": rep.in_stabilizer,
            "diagnostics": rep.diagnostics,
        }
    )
    return report


def _random_states(chart, box, count, rng):
    m = chart.dim
    states = []
    for _ in range(count):
        pos = box[:, 0] + rng.random(m) * (box[:, 1] - box[:, 0])
        vel = rng.uniform(-1.0, 1.0, m)
        states.append(GeodesicState(pos, vel))
    return states


def _cmd_geodesic(cfg, chart, con, seed, box, count, report, out_dir):
    sec = cfg["geodesic"] if cfg.has_section("geodesic") else {}
    t_end = float(sec.get("t_end", 10.0)) if sec else 10.0
    tol = float(sec.get("tol", 1e-10)) if sec else 1e-10
    mode = (sec.get("mode", "full") if sec else "full").strip()
    samples = int(sec.get("samples", 201)) if sec else 201
    rng = np.random.default_rng(seed)
    if sec and sec.get("states", None):
        states = [
            GeodesicState(row[: chart.dim], row[chart.dim :])
            for row in _points(sec["states"])
        ]
    else:
        nstates = int(sec.get("count", 4)) if sec else 4
        states = _random_states(chart, box, nstates, rng)

    if mode == "reduced":
        if not reduced_compatible(chart):
            raise ValidationError("reduced mode requires the reduced pp-wave form")
        trajectories = [ppwave_reduced(chart, s, t_end, tol=tol) for s in states]
    elif len(states) > 1:
        t_eval = np.linspace(0.0, t_end, samples)
        trajectories = geodesic_ensemble(chart, states, t_end, tol=tol, t_eval=t_eval)
    else:
        trajectories = [geodesic(chart, s, t_end, tol=tol) for s in states]

    rows = []
    n = chart.n
    header = (
        ["t", "x"] + [f"y{i}" for i in range(1, n + 1)] + ["z", "vx"]
        + [f"vy{i}" for i in range(1, n + 1)] + ["vz", "energy"]
    )
    for k, tr in enumerate(trajectories):
        path = Path(out_dir) / f"trajectory-{k:02d}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t, row, e in zip(tr.ts, tr.states, tr.energies):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in row] + [repr(float(e))])
        rows.append(
            {
                "state": k,
                "file": path.name,
                "termination": tr.termination,
                "energy": tr.energy,
                "max_energy_drift": tr.diagnostics.get("max_energy_drift"),
                "z_dot_drift": tr.diagnostics.get("z_dot_drift"),
            }
        )
    report["geodesic"] = _sanitize(
        {"t_end": t_end, "tol": tol, "mode": mode, "trajectories": rows}
    )
    return report


def _config_two_form(text, con, chart):
    if text.strip() == "attached":
        if con is None or con.psi is None:
            raise ConfigError("no attached 2-form on this metric")
        return con.psi
    rows = [r.split(",") for r in text.split(";") if r.strip()]
    dim = len(rows)
    slots = con.base_slots if con is not None else tuple(range(1, dim + 1))
    if len(slots) != dim:
        slots = tuple(range(1, dim + 1))
    return TwoForm.from_components(rows, slots, chart.n)


def _cmd_structure(cfg, chart, con, seed, box, count, report):
    sec = cfg["structure"] if cfg.has_section("structure") else {}
    if not sec:
        raise ConfigError("structure command needs a [structure] section")
    checks = [c.strip() for c in sec.get("checks", "").split(",") if c.strip()]
    if not checks:
        raise ConfigError("[structure] checks is empty")
    p = _base_point(cfg, chart, con)
    results = {}
    psi = None
    if sec.get("psi", None):
        psi = _config_two_form(sec["psi"], con, chart)
    elif con is not None and con.psi is not None:
        psi = con.psi

    nb = psi.dim if psi is not None else chart.n
    J = standard_complex_structure(nb) if nb % 2 == 0 else None
    if sec.get("J", None) and sec["J"].strip() != "standard":
        rows = [r.split(",") for r in sec["J"].split(";") if r.strip()]
        J = np.array([[float(v) for v in r] for r in rows])

    grid_n = int(sec.get("grid", 3))
    grid_pts = None
    if psi is not None:
        axes = [np.linspace(0.1, 0.9, grid_n)] * chart.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        grid_pts = np.stack([m.ravel() for m in mesh], axis=-1)

    for check in checks:
        if check == "one_one":
            _need(psi, J, check)
            results[check] = max(check_one_one(psi, J, q) for q in grid_pts)
        elif check == "lefschetz":
            _need(psi, J, check)
            results[check] = dual_lefschetz(psi, J, np.eye(nb), p)
        elif check == "primitive":
            _need(psi, J, check)
            results[check] = check_primitive(psi, J, np.eye(nb), grid_pts)
        elif check == "hyperkahler":
            _need(psi, None, check)
            if nb % 4:
                raise ValidationError("hyperkahler check needs dim divisible by 4")
            J1, J2, _ = standard_hyperkahler_triple()
            results[check] = max(check_hyperkahler(psi, J1, J2, q) for q in grid_pts)
        elif check == "g2":
            _need(psi, None, check)
            results[check] = g2_condition(psi.at(p))
        elif check == "spin7":
            _need(psi, None, check)
            results[check] = spin7_condition(psi.at(p))
        elif check == "su_phase":
            _need(psi, J, check)
            dz = _floats(sec.get("dz", "0.25,0.5"))
            rate = sec.get("phase_rate", "auto").strip()
            lam = dual_lefschetz(psi, J, np.eye(nb), p)
            alpha = lam if rate == "auto" else float(rate)
            omega = standard_volume_form(chart.n)
            results[check] = su_phase_check(chart, J, omega, alpha, dz, base_point=p)
            results["su_phase_rate"] = alpha
        else:
            raise ConfigError(f"unknown structure check {check!r}")
    report["structure"] = _sanitize({"base_point": p, "residuals": results})
    return report


def _need(psi, J, check):
    if psi is None:
        raise ValidationError(f"{check} needs a 2-form (config psi or attached)")
    if J is None and check in ("one_one", "lefschetz", "primitive", "su_phase"):
        raise ValidationError(f"{check} needs an even-dimensional complex structure")


def _cmd_complete(cfg, chart, con, seed, box, count, report):
    sec = cfg["complete"] if cfg.has_section("complete") else {}
    horizon = float(sec.get("horizon", 1000.0)) if sec else 1000.0
    tol = float(sec.get("tol", 1e-6)) if sec else 1e-6
    rng = np.random.default_rng(seed)
    if sec and sec.get("states", None):
        states = [
            GeodesicState(row[: chart.dim], row[chart.dim :])
            for row in _points(sec["states"])
        ]
    else:
        nstates = int(sec.get("count", 64)) if sec else 64
        states = _random_states(chart, box, nstates, rng)
    probe = completeness_probe(chart, states, horizon, tol=tol)
    report["complete"] = _sanitize(probe.as_dict())
    return report


_COMMANDS = {
    "check": _cmd_check,
    "holonomy": _cmd_holonomy,
    "structure": _cmd_structure,
    "complete": _cmd_complete,
}


# ---------------------------------------------------------------------------
# demo configs
# ---------------------------------------------------------------------------

_DEMO_TEMPLATES = {
    "flat": """\
[metric]
kind = flat
n = 2

[probe]
box = 0,1
points = 32
seed = 20240801

[geodesic]
count = 2
t_end = 10
tol = 1e-10

[complete]
count = 16
horizon = 100
tol = 1e-6
""",
    "toric-ppwave": """\
[metric]
kind = toric-ppwave
n = 2

[probe]
box = 0,1
points = 32
seed = 20240801

[holonomy]
rect_sizes = 0.2,0.1,0.05
lassos = 8
tol = 1e-10

[structure]
checks = one_one, lefschetz, primitive
psi = attached
""",
    "toric-prwave": """\
[metric]
kind = toric-prwave
n = 2

[probe]
box = 0,1
points = 32
seed = 20240801

[holonomy]
rect_sizes = 0.2,0.1,0.05
lassos = 8
tol = 1e-10
""",
    "corollary": """\
[metric]
kind = corollary
n = 2

[probe]
box = 0,1
points = 32
seed = 20240801

[holonomy]
rect_sizes = 0.2,0.1,0.05
lassos = 8
tol = 1e-10

[geodesic]
count = 4
t_end = 20
tol = 1e-10

[complete]
count = 16
horizon = 200
tol = 1e-6
""",
    "footnote": """\
[metric]
kind = footnote
n = 1

[probe]
box = -2,2
points = 32
seed = 20240801

[holonomy]
rect_sizes = 0.2,0.1,0.05
lassos = 8
targets = 0.25,0.5,1.5; 0.25,0.5,-1.5; -0.5,-0.5,1.8; -0.5,0.75,-1.8
tol = 1e-10

[complete]
count = 16
horizon = 100
tol = 1e-6
""",
    "example52": """\
[metric]
kind = example52
n = 1

[probe]
box = 0,1
points = 32
seed = 20240801

[holonomy]
rect_sizes = 0.2,0.1,0.05
lassos = 8
tol = 1e-10
""",
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _parser():
    ap = argparse.ArgumentParser(
        prog="walkerhol",
        description="Holonomy, curvature and geodesic analysis of Walker-form metrics",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("check", "holonomy", "geodesic", "structure", "complete"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=".")
        p.add_argument("--format", choices=("json", "text"), default="text")
    d = sub.add_parser("demo", help="write a ready-made demo config")
    d.add_argument("name", choices=DEMO_NAMES)
    d.add_argument("--out", default=".")
    return ap


def _summarize(report, command):
    lines = [f"walkerhol {command}: ok"]
    if command == "check":
        sec = report["check"]
        lines.append(f"  signature ok: {sec['signature_ok']} (expected {sec['signature_expected']})")
    if command == "holonomy":
        sec = report["holonomy"]
        lines.append(
            f"  dim = {sec['dim']}, type = {sec['type_label']}, g-dim = {sec['g_dim']}"
        )
    if command == "geodesic":
        for row in report["geodesic"]["trajectories"]:
            lines.append(
                f"  state {row['state']}: {row['termination']}, "
                f"energy drift {row['max_energy_drift']:.3e} -> {row['file']}"
            )
    if command == "structure":
        for k, v in report["structure"]["residuals"].items():
            lines.append(f"  {k}: {v:.6e}")
    if command == "complete":
        sec = report["complete"]
        lines.append(
            f"  mode {sec['mode']}: completed {sec['all_completed']}, "
            f"within envelope: {sec['all_within_envelope']}"
        )
    return "\n".join(lines)


def run(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "demo":
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / f"{args.name}.ini"
        path.write_text(_DEMO_TEMPLATES[args.name], encoding="utf-8")
        print(path)
        return 0

    cfg = _load_config(args.config)
    chart, con, meta = _resolve_metric(cfg)
    box, count, seed = _probe_settings(cfg, chart, con, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    report = {
        "tool": {"name": "walkerhol", "version": __version__},
        "command": args.command,
        "seed": seed,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "metric": meta,
        "config": {s: dict(cfg[s]) for s in cfg.sections()},
    }
    try:
        if args.command == "geodesic":
            report = _cmd_geodesic(cfg, chart, con, seed, box, count, report, out_dir)
        else:
            report = _COMMANDS[args.command](cfg, chart, con, seed, box, count, report)
        failed = None
    except ValidationError as exc:
        report["error"] = {"type": "validation", "message": str(exc)}
        failed = 3
    except (NumericalError,) as exc:
        report["error"] = {"type": "numerical", "message": str(exc)}
        failed = 4

    path = out_dir / f"{args.command}-report.json"
    path.write_text(json.dumps(_sanitize(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.format == "json":
        print(json.dumps(_sanitize(report), indent=2, sort_keys=True))
    else:
        if failed is None:
            print(_summarize(report, args.command))
        else:
            print(f"walkerhol {args.command}: FAILED ({report['error']['message']})")
        print(f"report: {path}")
    return failed or 0


def main(argv=None):
    try:
        code = run(argv)
    except (ConfigError, ExpressionError, EvalDomainError, configparser.Error) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        code = 2
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        code = 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        code = 4
    if argv is None:
        sys.exit(code)
    return code

"""Command-line front end: derive, bound, sweep, energy and reproduce.

Reports are deterministic: JSON keys are sorted and no timestamps are
written. Files are written to a temporary sibling and renamed into place.

Exit codes: 0 success, 1 failing reproduction rows, 2 chain failure /
unbound symbol / no crossing, 3 singular constraint matrix, 64 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path

import sympy as sp

EX_OK, EX_FAIL, EX_ERROR, EX_SINGULAR, EX_USAGE = 0, 1, 2, 3, 64


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """Resolved run parameters (defaults are the reference parameter point)."""

    command: str = ""
    k: int = 2
    a2: float = 10.0
    xs: tuple | None = None
    ys: tuple | None = None
    e: float = 1.0
    A: float | None = None
    alpha: float | None = None
    convention: str = "reduced"
    angle_unit: str | None = None
    spec: str = "x1-Px1"
    kind: str = "upper"
    grid_lo: float = 0.0
    grid_hi: float = 40.0
    grid_n: int = 400
    baseline: float | None = None
    fourier_n: int = 16
    nodes: int = 512
    chi: float = 0.0
    chi1: float | None = None
    chi2: float | None = None
    V: float = 0.0
    x: float = 0.0
    y: float = 0.0
    potential: str = "generic"
    only: tuple = ()
    format: str = "json"
    out: str | None = None

    def validate(self):
        if self.k < 1:
            raise UsageError(f"--k must be >= 1, got {self.k}")
        if self.a2 <= 0:
            raise UsageError("--a2 must be positive")
        if self.format not in ("json", "csv", "text"):
            raise UsageError(f"unknown format {self.format!r}")
        if self.convention not in ("full", "reduced"):
            raise UsageError(f"unknown convention {self.convention!r}")
        if self.angle_unit not in (None, "rad", "deg"):
            raise UsageError(f"unknown angle unit {self.angle_unit!r}")
        if (self.xs is None) != (self.ys is None) or (self.xs and len(self.xs) != len(self.ys)):
            raise UsageError("--xs and --ys must be given together with equal lengths")
        if self.command == "sweep":
            if self.kind not in ("upper", "cutoff"):
                raise UsageError("--kind must be upper or cutoff")
            if self.k < 2:
                raise UsageError("sweeps need --k >= 2")
        return self


def _floats(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _coerce(name: str, value):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    if name not in kinds:
        raise UsageError(f"unknown configuration key {name!r}")
    t = str(kinds[name])
    if value is None:
        return None
    try:
        if name in ("xs", "ys"):
            return _floats(value)
        if name == "only":
            if isinstance(value, (tuple, list)):
                return tuple(value)
            return tuple(v.strip() for v in str(value).split(",") if v.strip())
        if t.startswith("int"):
            return int(value)
        if t.startswith("float"):
            return float(value)
    except ValueError as exc:
        raise UsageError(f"bad value for {name}: {value!r}") from exc
    return value


def read_config_file(path: str | os.PathLike) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = _coerce(key.replace("-", "_"), value)
    return out


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    """defaults < config file < command-line flags."""
    cfg = RunConfig(command=ns.command)
    if getattr(ns, "config", None):
        cfg = replace(cfg, **read_config_file(ns.config))
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config") and v is not None}
    if flags.get("only"):
        flags["only"] = tuple(g for item in flags["only"] for g in item.split(","))
    cfg = replace(cfg, **{k: _coerce(k, v) for k, v in flags.items()})
    return cfg.validate()


# --------------------------------------------------------------------------
# serialization


def to_plain(obj):
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else str(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, sp.MatrixBase):
        return [[to_plain(obj[i, j]) for j in range(obj.shape[1])] for i in range(obj.shape[0])]
    if isinstance(obj, sp.Basic):
        from .symexpr import to_text
        return to_text(obj)
    if hasattr(obj, "item"):
        return to_plain(obj.item())
    return str(obj)


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(to_plain(report), sort_keys=True, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        rows = report.get("rows")
        if rows:
            cols = list(rows[0])
            w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({c: _cell(r[c]) for c in cols})
        else:
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["key", "value"])
            for k, v in _flatten(to_plain(report["result"])):
                w.writerow([k, v])
        return buf.getvalue()
    return report.get("text") or "\n".join(f"{k}: {v}" for k, v in _flatten(to_plain(report["result"]))) + "\n"


def _cell(v):
    return json.dumps(to_plain(v)) if isinstance(v, (dict, list, tuple)) else v


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}{k}.")
    elif isinstance(obj, list) and obj and isinstance(obj[0], (dict, list)):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}{i}.")
    else:
        yield prefix.rstrip("."), obj


def write_atomic(path: str, text: str):
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(report: dict, cfg: RunConfig):
    text = render(report, cfg.format)
    if cfg.out:
        write_atomic(cfg.out, text)
    else:
        sys.stdout.write(text)


def _config_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d.pop("out")
    return d


def report_schema() -> dict:
    """The JSON schema every ``--format json`` report validates against."""
    from importlib.resources import files

    return json.loads(files("circledirac").joinpath("schema/report.schema.json").read_text())


# --------------------------------------------------------------------------
# commands


def cmd_derive(cfg: RunConfig) -> dict:
    from .dirac import compare_with_reference, derive

    d = derive(cfg.k, cfg.potential)
    ps = d.phase_space
    table = d.particle_table
    checks = compare_with_reference(table, ps)
    return {
        "chain": [{"label": c.label, "expr": c.expr, "generation": c.generation, "class": c.klass}
                  for c in d.chain.constraints],
        "termination": d.chain.termination,
        "multiplier": d.chain.multiplier,
        "phi": d.matrix.phi,
        "delta": d.matrix.delta,
        "determinant": d.matrix.determinant,
        "brackets": {f"{u},{v}": val for (u, v), val in sorted(table.items()) if u < v},
        "matches_closed_form": {f"{u},{v}": ok for (u, v), ok in sorted(checks.items())},
    }


def _table_names(spec: str) -> tuple[str, str]:
    parts = spec.split("-")
    if len(parts) != 2:
        raise UsageError(f"bad bound spec {spec!r}; expected e.g. x1-Px1 or Px1-Py2")
    return tuple(("P_" + p[1:]) if p.startswith("P") and not p.startswith("P_") else p for p in parts)


def _point(cfg: RunConfig, template: dict, **extra):
    from .bounds import ParamPoint

    kw = dict(template)
    if cfg.xs is not None:
        kw["xs"], kw["ys"] = cfg.xs, cfg.ys
    if cfg.A is not None:
        kw["A"] = cfg.A
    kw.update(a2=cfg.a2, e=cfg.e, convention=cfg.convention, **extra)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        p = ParamPoint(**kw)
    return p, [str(w.message) for w in caught]


def cmd_bound(cfg: RunConfig) -> dict:
    from . import bounds as B
    from .quantum import quantize
    from .symexpr import evaluate

    if cfg.spec in B.BOUNDS:
        spec = B.BOUNDS[cfg.spec]
        unit = cfg.angle_unit or B.calibrate().angle_unit
        alpha, source = cfg.alpha, "given"
        if alpha is None and spec.subsystem in (1, 2) and spec.arity == 2:
            cal = B.calibrate_pair(unit)
            alpha, source = (cal.alpha1 if spec.subsystem == 1 else cal.alpha2), "calibrated"
        elif alpha is None:
            alpha, source = 0.0, "default"
        tmpl = B.REFERENCE_POINT_K2 if spec.arity == 2 else B.REFERENCE_POINT_K3
        p, warns = _point(cfg, tmpl, alpha=alpha, angle_unit=unit)
        value = B.closed_form_bound(cfg.spec, p)
        return {"spec": cfg.spec, "value": value, "alpha": alpha, "alpha_source": source, "angle_unit": unit,
                "printed": spec.printed_value, "analog": spec.analog, "warnings": warns,
                "caveat": "alpha is not stated with the printed bounds; calibrated values reproduce one "
                          "printed number per subsystem"}
    u, v = _table_names(cfg.spec)
    from .checks import derivation
    d = derivation(cfg.k)
    ct = quantize(d.particle_table, d.phase_space)
    tmpl = B.POSITION_POINT if cfg.k == 2 else {"xs": (1.0,) * cfg.k, "ys": (3.0,) * cfg.k}
    p, warns = _point(cfg, tmpl, alpha=cfg.alpha or 0.0)
    try:
        entry = ct.entry(u, v, cfg.convention)
    except KeyError as exc:
        raise UsageError(f"unknown variable pair {cfg.spec!r}") from exc
    value = B.robertson(evaluate(entry, p.binding()))
    return {"spec": cfg.spec, "value": value, "convention": cfg.convention, "commutator": entry,
            "warnings": warns}


def cmd_sweep(cfg: RunConfig) -> tuple[dict, list]:
    from . import bounds as B

    unit = cfg.angle_unit or B.calibrate().angle_unit
    s = B.sweep_threshold(cfg.kind, cfg.k, baseline=cfg.baseline, alpha=cfg.alpha, angle_unit=unit,
                          grid=(cfg.grid_lo, cfg.grid_hi, cfg.grid_n))
    law = B.threshold_law(cfg.kind, cfg.k)
    rows = [{"A": a_, "B": B.field_from_potential(a_, math.sqrt(cfg.a2)),
             "bound": b_, "baseline": s.baseline, "verdict": "above" if b_ >= s.baseline else "below"}
            for a_, b_ in zip(s.grid, s.values)]
    result = {"kind": s.kind, "k": s.k, "bound": s.bound, "A_star": s.A_star, "B_star": s.B_star,
              "baseline": s.baseline, "alpha": s.alpha, "angle_unit": s.angle_unit, "law": law,
              "deviation": s.A_star - float(law), "within_tolerance": abs(s.A_star - float(law)) <= 0.05,
              "monotone": s.monotone, "monotone_violations": list(s.monotone_violations)}
    return result, rows


def cmd_energy(cfg: RunConfig) -> dict:
    from .quantum import EnergyParams, energy, lz_projections

    rep = energy(EnergyParams(chi=cfg.chi, alpha=cfg.alpha or 0.0, A=cfg.A or 0.0, V=cfg.V, e=cfg.e, a2=cfg.a2,
                              x=cfg.x, y=cfg.y))
    out = {"E": rep.constrained, "E_unconstrained": rep.unconstrained, "shift": rep.shift,
           "imaginary_part": rep.imaginary_part, "reading": rep.reading, "binding": rep.binding}
    if cfg.chi1 is not None and cfg.chi2 is not None:
        l1, l2, tot = lz_projections(cfg.chi1, cfg.chi2, cfg.alpha or 0.0)
        out["lz"] = {"particle1": l1, "particle2": l2, "total": tot}
    return out


# --------------------------------------------------------------------------
# reproduction


def matches_printed(value: float, printed: str) -> bool:
    """Half-up rounding of ``value`` to the printed number of decimals."""
    p = Decimal(printed)
    return Decimal(repr(float(value))).quantize(p, rounding=ROUND_HALF_UP) == p


GROUPS = ("brackets", "delta", "constraints", "jacobi", "bounds", "fields", "thresholds", "ansatz",
          "hermiticity", "energy", "oracle", "calibration")


def _row(group, label, printed, computed, tolerance, passed, gate=True, note=""):
    return {"group": group, "label": label, "printed": printed, "computed": computed, "tolerance": tolerance,
            "passed": bool(passed), "gate": gate, "note": note}


def reproduction_rows(only=()) -> list[dict]:
    from . import bounds as B
    from . import checks as C

    want = set(only) or set(GROUPS)
    bad = want - set(GROUPS)
    if bad:
        raise UsageError(f"unknown group(s) {sorted(bad)}; choose from {', '.join(GROUPS)}")
    rows = []

    def check_row(group, fn, label):
        c = fn()
        rows.append(_row(group, label, None, {"seconds": round(c.seconds, 1), **_summary(c.detail)},
                         "exact" if group == "brackets" else "see label", c.passed))
        return c

    if "brackets" in want:
        c = C.golden_table()
        rows.append(_row("brackets", "nine bracket and commutator families (runtime < 10 s)", None,
                         {"families": c.detail["families"], "runtime_under_10s": c.seconds < 10}, "symbolic",
                         c.passed and c.seconds < 10))
    if "delta" in want:
        check_row("delta", C.delta_matrix, "inverse constraint matrix; Delta.Phi = 1 at 50 points within 1e-9")
    if "constraints" in want:
        check_row("constraints", C.constraint_vanishing, "constraint brackets below 1e-10 at 100 points")
    if "jacobi" in want:
        check_row("jacobi", C.dirac_jacobi, "Jacobi identity within 1e-8 over 50 triples")
    if "bounds" in want:
        xp = B.xp_bound("reduced")
        rows.append(_row("bounds", "x1-Px1 reduced", "0.05", xp, "half-up", matches_printed(xp, "0.05")))
        bp = B.baseline_position()
        rows.append(_row("bounds", "single-particle position baseline", "0.2025", bp, "1e-12 and half-up",
                         abs(bp - 0.2025) < 1e-12))
        bm = B.baseline_momentum()
        rows.append(_row("bounds", "single-particle momentum baseline", "0.0225", bm, "1e-12 and half-up",
                         abs(bm - 0.0225) < 1e-12))
    if "fields" in want:
        for A_, printed in ((0.5, "0.32"), (1.63, "1.03"), (17.8, "11.26"), (2.85, "1.80")):
            b = B.field_from_potential(A_, math.sqrt(10.0))
            rows.append(_row("fields", f"B = 2A/a at A = {A_}", printed, b, "half-up", matches_printed(b, printed)))
    if "thresholds" in want:
        choice = B.calibrate()
        for (kind, k), printed in ((("upper", 2), "1.63"), (("cutoff", 2), "17.8"),
                                   (("upper", 3), "2.85"), (("cutoff", 3), "24.5")):
            law = B.threshold_law(kind, k)
            rows.append(_row("thresholds", f"threshold law {kind} k={k}", printed, law, "exact",
                             law == Fraction(printed)))
            try:
                s = B.sweep_threshold(kind, k, angle_unit=choice.angle_unit)
                got, ok = s.A_star, abs(s.A_star - float(Fraction(printed))) <= 0.05
                note = f"alpha={s.alpha:.6g}, angle unit {s.angle_unit}"
            except B.NoCrossing as exc:
                got, ok, note = None, False, str(exc)
            rows.append(_row("thresholds", f"sweep {kind} k={k}", printed, got, "0.05 in A", ok, note=note))
    if "ansatz" in want:
        check_row("ansatz", C.ansatz, "mu = -sin, nu = cos; ODE residuals below 1e-8; eom identity")
    if "hermiticity" in want:
        check_row("hermiticity", C.hermiticity, "defect below 1e-9 (N=16, 512 nodes); Weyl sum i/2")
    if "energy" in want:
        c = C.energy_checks()
        rows.append(_row("energy", "shift 1/(16 a^2); L_z additivity; real at e = 0", "0.00625",
                         c.detail["shift"], "1e-15", c.passed))
    if "oracle" in want:
        check_row("oracle", C.oracle, "closed form vs quadrature expectation, 10 points, 1e-6 relative")
    if "calibration" in want:
        for unit in ("rad", "deg"):
            cal = B.calibrate_pair(unit)
            for name, al in (("Px1-Py1", cal.alpha1), ("Px2-Py2", cal.alpha2)):
                p = B._quiet(**B.REFERENCE_POINT_K2, alpha=al, angle_unit=unit)
                val = B.closed_form_bound(name, p)
                printed = f"{B.BOUNDS[name].printed_value:g}"
                rows.append(_row("calibration", f"{name} at calibrated alpha ({unit})", printed, val, "3 s.f.",
                                 math.isclose(val, B.BOUNDS[name].printed_value, rel_tol=1e-9), gate=False,
                                 note=f"alpha={al:.6g}; single alpha for both: {cal.single_alpha}"))
    return rows


def _summary(detail: dict) -> dict:
    keep = {}
    for k, v in detail.items():
        if isinstance(v, dict) and len(v) > 6:
            keep[k] = all(v.values()) if all(isinstance(x, bool) for x in v.values()) else v
        else:
            keep[k] = v
    return keep


def cmd_reproduce(cfg: RunConfig) -> tuple[dict, list]:
    rows = reproduction_rows(cfg.only)
    failing = [r["label"] for r in rows if r["gate"] and not r["passed"]]
    return {"passed": not failing, "failing": failing, "rows": len(rows)}, rows


def _text_table(rows) -> str:
    lines = []
    for r in rows:
        mark = "PASS" if r["passed"] else ("FAIL" if r["gate"] else "info")
        comp = r["computed"]
        comp = f"{comp:.6g}" if isinstance(comp, float) else json.dumps(to_plain(comp))[:60]
        lines.append(f"{mark:4}  {r['group']:<12} {r['label']:<58} printed={r['printed']!s:<8} computed={comp}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# argument parsing


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file (overridden by flags)")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--format", choices=("json", "csv", "text"))
    common.add_argument("--k", type=int)
    common.add_argument("--a2", type=float, help="circle radius squared")
    common.add_argument("--e", type=float)
    common.add_argument("--A", type=float, help="uniform vector potential")
    common.add_argument("--alpha", type=float)
    common.add_argument("--xs", help="comma-separated x coordinates")
    common.add_argument("--ys", help="comma-separated y coordinates")
    common.add_argument("--angle-unit", dest="angle_unit", choices=("rad", "deg"))

    p = Parser(prog="circledirac", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    d = sub.add_parser("derive", parents=[common], help="run the constraint analysis")
    d.add_argument("--potential", choices=("generic", "constant"))

    b = sub.add_parser("bound", parents=[common], help="evaluate an uncertainty bound")
    b.add_argument("--spec", help="x1-Px1, Px1-Py1, Px1-Py2, Px1-Py1[k3], ...")
    g = b.add_mutually_exclusive_group()
    g.add_argument("--reduced", dest="convention", action="store_const", const="reduced")
    g.add_argument("--full", dest="convention", action="store_const", const="full")

    s = sub.add_parser("sweep", parents=[common], help="locate a field threshold")
    s.add_argument("--kind", choices=("upper", "cutoff"))
    s.add_argument("--baseline", type=float)
    s.add_argument("--grid-lo", dest="grid_lo", type=float)
    s.add_argument("--grid-hi", dest="grid_hi", type=float)
    s.add_argument("--grid-n", dest="grid_n", type=int)

    en = sub.add_parser("energy", parents=[common], help="evaluate the closed-form energies")
    for name in ("chi", "chi1", "chi2", "V", "x", "y"):
        en.add_argument(f"--{name}", type=float)

    r = sub.add_parser("reproduce", parents=[common], help="compare every reference number")
    r.add_argument("--only", action="append", help=f"restrict to groups: {', '.join(GROUPS)}")
    r.add_argument("--json", dest="format", action="store_const", const="json")
    return p


def main(argv=None) -> int:
    from .bounds import NoCrossing
    from .dirac import ChainError, SingularConstraintMatrix
    from .symexpr import UnboundSymbolError

    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = resolve_config(ns)
        if cfg.command == "reproduce" and ns.format is None and cfg.format == "json" and not cfg.out:
            cfg = replace(cfg, format="text")
        rows, code = None, EX_OK
        if cfg.command == "derive":
            result = cmd_derive(cfg)
        elif cfg.command == "bound":
            result = cmd_bound(cfg)
        elif cfg.command == "sweep":
            result, rows = cmd_sweep(cfg)
        elif cfg.command == "energy":
            result = cmd_energy(cfg)
        else:
            result, rows = cmd_reproduce(cfg)
            code = EX_OK if result["passed"] else EX_FAIL
    except UsageError as exc:
        print(f"circledirac: error: {exc}", file=sys.stderr)
        return EX_USAGE
    except SingularConstraintMatrix as exc:
        print(f"circledirac: singular constraint matrix: {exc}", file=sys.stderr)
        return EX_SINGULAR
    except (ChainError, UnboundSymbolError, NoCrossing) as exc:
        print(f"circledirac: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EX_ERROR
    report = {"command": cfg.command, "config": _config_dict(cfg), "result": result}
    if rows is not None:
        report["rows"] = rows
        if cfg.command == "reproduce":
            report["text"] = _text_table(rows) + ("all gated rows pass\n" if code == EX_OK else
                                                  "failing: " + "; ".join(result["failing"]) + "\n")
    if cfg.format == "json":
        report.pop("text", None)
    emit(report, cfg)
    if code != EX_OK:
        print("failing rows: " + "; ".join(result["failing"]), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

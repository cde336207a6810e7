"""``decompose`` command: run one job file and report the decomposition.

Exit codes: 0 success, 1 input error, 2 tolerance or consistency failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import HolosplitError, InputError
from .pipeline import JobSpec, report, run


def _float_repr(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise InputError("non-finite number in result document")
    if x == 0.0:
        return "0.0"  # folds -0.0 so output does not depend on round-off signs
    s = format(x, ".17g")
    return s if any(c in s for c in ".en") else s + ".0"


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float_repr(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc) -> str:
    """Deterministic JSON with floats at 17 significant digits."""
    return _encode(doc, 2, 0) + "\n"


def load_job(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise InputError(f"cannot read job file {path}: {err}") from err
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise InputError(f"job file {path} is not valid JSON: {err}") from err


def _split_point(text: str) -> list[str]:
    parts = [p.strip() for p in text.split(",")]
    if not all(parts):
        raise InputError(f"malformed point {text!r}")
    return parts


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="decompose",
                                description="Split a metric into de Rham or Wu factors.")
    p.add_argument("jobfile", help="job document (JSON)")
    p.add_argument("--mode", choices=["auto", "supplied"])
    p.add_argument("--point", help="base point override, comma separated (e.g. 0,0,pi/2,0)")
    p.add_argument("--tol-rank", type=float)
    p.add_argument("--tol-res", type=float)
    p.add_argument("--max-order", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--query", action="append", default=[], metavar="x1,..,xn",
                   help="evaluate block distributions at this point (repeatable)")
    p.add_argument("--emit-adapted", action="store_true")
    p.add_argument("--cross-check", action="store_true",
                   help="compare field-based distributions with parallel transport")
    p.add_argument("--out", help="write the result document here")
    p.add_argument("--json", action="store_true", help="print the result document to stdout")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def job_from_args(args) -> JobSpec:
    doc = load_job(args.jobfile)
    if not isinstance(doc, dict):
        raise InputError("job document must be a JSON object")
    doc = dict(doc)
    if args.mode:
        doc["mode"] = args.mode
        if args.mode == "auto":
            doc.pop("forms", None)
    if args.point:
        doc["base_point"] = _split_point(args.point)
    tol = dict(doc.get("tolerances", {}) or {})
    if args.tol_rank is not None:
        tol["rank"] = args.tol_rank
    if args.tol_res is not None:
        tol["residual"] = args.tol_res
    doc["tolerances"] = tol
    if args.max_order is not None:
        doc["max_order"] = args.max_order
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.query:
        doc["query_points"] = list(doc.get("query_points", []) or []) + [_split_point(q) for q in args.query]
    flags = dict(doc.get("flags", {}) or {})
    if args.emit_adapted:
        flags["emit_adapted"] = True
    if args.cross_check:
        flags["cross_check"] = True
    doc["flags"] = flags
    return JobSpec.from_dict(doc)


def _fmt_matrix(M, indent="    ") -> str:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return indent + "(empty)"
    M = np.where(np.abs(M) <= 1e-12 * max(1.0, np.abs(M).max()), 0.0, M)  # display only
    return "\n".join(indent + "  ".join(f"{v: .6g}".rjust(11) for v in row) for row in M)


def _fmt_vectors(basis) -> str:
    return ", ".join("(" + ", ".join(f"{v:.6g}" for v in vec) + ")" for vec in basis) or "{0}"


def human_report(doc: dict) -> str:
    lines = []
    add = lines.append
    add(f"branch: {doc['branch']}   signature: {doc['signature']}")
    add(f"base point: {doc['base_point']}")
    h = doc["holonomy"]
    add(f"holonomy algebra: dim {h['dimension']}, order {h['order']}, "
        f"stabilized {h['stabilized']}, ranks {h['rank_history']}")
    add(f"invariant vectors: dim {doc['invariant_vectors']['dimension']}  "
        f"{_fmt_vectors(doc['invariant_vectors']['basis'])}")
    add(f"parallel form space: dim {doc['form_space']['dimension']} ({doc['form_space']['source']})")
    add(f"flat factor E0: dim {doc['E0']['dimension']}")
    for b in doc["blocks"]:
        name = "E0" if b["kind"] == "flat" else f"E{b['index']}"
        add(f"{name} [{b['kind']}] dim {b['dimension']} signature {tuple(b['signature'])}: "
            f"{_fmt_vectors(b['basis'])}")
        add(_fmt_matrix(b["form_at_base"]))
    cm = doc["coefficient_matrix"]
    if cm["values"]:
        add(f"{cm['name']} matrix:")
        add(_fmt_matrix(cm["values"]))
    if doc["null_data"]:
        nd = doc["null_data"]
        add(f"null vector p: {_fmt_vectors([nd['p']])}  theta: {_fmt_vectors([nd['theta']])}  "
            f"q: {_fmt_vectors([nd['q']])}")
        add(f"W: {_fmt_vectors(nd['W']['basis'])}   W_perp: {_fmt_vectors(nd['W_perp']['basis'])}")
    for q in doc["queries"]:
        extra = f"  cross-check angle {q['cross_check_angle']:.3e}" if "cross_check_angle" in q else ""
        add(f"query {q['point']} (mode {q['mode']}){extra}")
        for k, b in enumerate(q["blocks"]):
            add(f"    block {k + 1}: {_fmt_vectors(b['basis'])}")
    if doc["adapted_coordinates"]:
        add("adapted linear coordinates z = Z x, Z =")
        add(_fmt_matrix(doc["adapted_coordinates"]["Z"]))
    if doc["verification"]:
        v = doc["verification"]
        add(f"supplied forms verified at {v['samples']} points, max residual {v['max_residual']:.3e}")
    add("diagnostics:")
    for k, v in doc["diagnostics"].items():
        add(f"    {k}: {v}")
    for n in doc["notes"]:
        add(f"note: {n}")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        job = job_from_args(args)
        doc = report(run(job))
        text = dumps(doc)
        if args.out:
            Path(args.out).write_text(text)
        if args.json:
            sys.stdout.write(text)
        else:
            print(human_report(doc))
        return 0
    except HolosplitError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    except (KeyError, TypeError, ValueError) as err:
        print(f"error: invalid job: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

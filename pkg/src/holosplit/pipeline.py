"""End-to-end decomposition of a metric given by expressions.

:func:`run` takes a :class:`JobSpec` and returns a :class:`Decomposition`;
:func:`report` turns that into a plain dict for serialization.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DegeneratePointError, InputError, ToleranceError
from .geometry import (FormField, MetricSpec, check_signature, metric_at, parallel_residual,
                       point_from_strings, signature_of)
from .holonomy import (DEFAULT_MAX_ORDER, HolonomyAlgebra, form_invariance_residual,
                       generate_holonomy, invariant_sym_forms, invariant_vectors, reduce_by_E0)
from .linalg import Subspace, orth, restrict, subspace_angle
from .split_derham import (DEFAULT_RESIDUAL_TOL, DeRhamSplit, block_forms, derham_split,
                           detect_linear_adapted_coords, distributions_by_transport,
                           distributions_from_fields, solve_coefficients)
from .split_wu import WuSplit, branch_select, wu_split

log = logging.getLogger(__name__)

VERIFY_SAMPLES = 20
ADAPTED_SAMPLES = 10
SAMPLE_RADIUS = 0.3


@dataclass
class JobSpec:
    """Everything one decomposition run needs."""

    coords: list
    metric: list
    base_point: list
    signature: str = "auto"
    mode: str = "auto"
    forms: list | None = None
    query_points: list = field(default_factory=list)
    rank_tol: float = 1e-9
    residual_tol: float = DEFAULT_RESIDUAL_TOL
    seed: int = 0
    max_order: int = DEFAULT_MAX_ORDER
    emit_adapted: bool = False
    cross_check: bool = False
    steps: int = 100

    @classmethod
    def from_dict(cls, doc: dict) -> "JobSpec":
        if not isinstance(doc, dict):
            raise InputError("job document must be a mapping")
        missing = [k for k in ("coordinates", "metric", "base_point") if k not in doc]
        if missing:
            raise InputError(f"job document lacks {', '.join(missing)}")
        tol = doc.get("tolerances", {}) or {}
        flags = doc.get("flags", {}) or {}
        job = cls(
            coords=list(doc["coordinates"]),
            metric=doc["metric"],
            base_point=list(doc["base_point"]),
            signature=doc.get("signature", "auto"),
            mode=doc.get("mode", "supplied" if doc.get("forms") else "auto"),
            forms=doc.get("forms"),
            query_points=list(doc.get("query_points", []) or []),
            rank_tol=float(tol.get("rank", 1e-9)),
            residual_tol=float(tol.get("residual", DEFAULT_RESIDUAL_TOL)),
            seed=int(doc.get("seed", 0)),
            max_order=int(doc.get("max_order", DEFAULT_MAX_ORDER)),
            emit_adapted=bool(flags.get("emit_adapted", doc.get("emit_adapted", False))),
            cross_check=bool(flags.get("cross_check", doc.get("cross_check", False))),
            steps=int(doc.get("steps", 100)),
        )
        job.validate()
        return job

    def to_dict(self) -> dict:
        return {
            "coordinates": list(self.coords),
            "metric": self.metric,
            "base_point": [str(v) if not isinstance(v, (int, float)) else v for v in self.base_point],
            "signature": self.signature,
            "mode": self.mode,
            "forms": self.forms,
            "query_points": self.query_points,
            "tolerances": {"rank": self.rank_tol, "residual": self.residual_tol},
            "seed": self.seed,
            "max_order": self.max_order,
            "flags": {"emit_adapted": self.emit_adapted, "cross_check": self.cross_check},
            "steps": self.steps,
        }

    def validate(self) -> None:
        n = len(self.coords)
        if self.mode not in ("auto", "supplied"):
            raise InputError(f"mode must be 'auto' or 'supplied', not {self.mode!r}")
        if self.mode == "supplied" and not self.forms:
            raise InputError("mode 'supplied' needs a non-empty 'forms' list")
        if self.mode == "auto" and self.forms:
            raise InputError("forms are only accepted in mode 'supplied'")
        if len(self.base_point) != n:
            raise InputError(f"base point has {len(self.base_point)} coordinates, expected {n}")
        for q in self.query_points:
            if len(q) != n:
                raise InputError(f"query point {q!r} does not have {n} coordinates")
        for k, f in enumerate(self.forms or []):
            if len(f) != n or any(len(row) != n for row in f):
                raise InputError(f"supplied form {k} is not {n}x{n}")
        if self.rank_tol <= 0 or self.residual_tol <= 0:
            raise InputError("tolerances must be positive")
        if self.max_order < 0:
            raise InputError("max_order must be >= 0")

    def metric_spec(self) -> MetricSpec:
        return MetricSpec(self.coords, self.metric, self.signature)

    def point(self) -> np.ndarray:
        return point_from_strings(self.base_point, self.coords)


@dataclass
class Decomposition:
    """Result of :func:`run`; all tangent data in the job's coordinates."""

    job: JobSpec
    spec: MetricSpec
    base_point: np.ndarray
    signature: str
    eta: np.ndarray
    holonomy: HolonomyAlgebra
    invariant_vectors: Subspace
    form_space: list
    form_source: str
    branch: str
    E0: Subspace
    blocks: list            # factor blocks in canonical order (Lorentzian last)
    block_kinds: list
    block_forms: list       # forms at the base point, full coordinates
    coefficients: np.ndarray  # A (de Rham) or C (Wu), relative to the reduced basis
    split: Any
    embedding: np.ndarray
    null_data: dict | None = None
    field_coefficients: list | None = None  # per block (+ E0): weights on supplied fields
    fields: list | None = None
    verification: dict | None = None
    queries: list = field(default_factory=list)
    adapted: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def all_blocks(self) -> list[Subspace]:
        """Factor blocks followed by E_0 when it is non-zero."""
        return self.blocks + ([self.E0] if self.E0.dim else [])

    def all_block_forms(self) -> list[np.ndarray]:
        forms = list(self.block_forms)
        if self.E0.dim:
            forms.append(self.eta - sum(self.block_forms) if self.block_forms else self.eta.copy())
        return forms

    def block_fields(self):
        """Callables y -> g_a(y) for every entry of :meth:`all_blocks` (mode B), or None."""
        if self.fields is None or self.field_coefficients is None:
            return None
        fields = self.fields
        return [_combination(fields, c) for c in self.field_coefficients]

    def distributions_at(self, y, mode: str | None = None) -> list[Subspace]:
        y = np.asarray(y, dtype=float)
        if mode is None:
            mode = "B" if self.fields is not None else "A"
        if mode == "B":
            bf = self.block_fields()
            if bf is None:
                raise InputError("mode B needs supplied parallel form fields")
            return distributions_from_fields(bf, y, self.job.rank_tol)
        return distributions_by_transport(self.spec, self.base_point, y, self.all_blocks(),
                                          self.job.steps)


def _combination(fields, coeffs):
    coeffs = np.asarray(coeffs, dtype=float)

    def value(y):
        return sum(c * f.values(y) for c, f in zip(coeffs, fields))

    return value


def sample_points(center, count: int, seed: int, radius: float = SAMPLE_RADIUS,
                  spec: MetricSpec | None = None) -> np.ndarray:
    """Seeded random points in a cube around ``center`` (non-degenerate for ``spec``)."""
    rng = np.random.default_rng(seed)
    center = np.asarray(center, dtype=float)
    out = []
    attempts = 0
    while len(out) < count and attempts < 50 * count:
        attempts += 1
        y = center + rng.uniform(-radius, radius, size=center.shape)
        if spec is not None:
            try:
                metric_at(spec, y)
            except DegeneratePointError:
                continue
        out.append(y)
    return np.array(out)


def verify_supplied_forms(spec: MetricSpec, fields, points, tol: float = DEFAULT_RESIDUAL_TOL,
                          ) -> dict:
    """Check nabla h = 0 for every supplied field at every sample point.

    Residuals are relative to the size of the field and its first derivatives.
    """
    per_form = []
    for k, f in enumerate(fields):
        worst = 0.0
        where = None
        for y in points:
            res = parallel_residual(spec, f, y)
            ref = max(1.0, np.abs(f.values(y)).max(), np.abs(f.derivative_values(y)).max())
            r = float(np.abs(res).max() / ref)
            if r > worst:
                worst = r
                idx = np.unravel_index(int(np.argmax(np.abs(res))), res.shape)
                where = {"point": np.asarray(y).tolist(), "index": [int(i) for i in idx]}
        per_form.append({"form": k, "label": f.label, "max_residual": worst,
                         "passed": worst <= tol, "worst": where})
    return {"forms": per_form, "passed": all(f["passed"] for f in per_form),
            "max_residual": max((f["max_residual"] for f in per_form), default=0.0),
            "samples": len(points)}


def _lift_forms(eta, blocks):
    return block_forms(eta, [b.basis for b in blocks])


def run(job: JobSpec) -> Decomposition:
    """Run the whole decomposition for ``job``."""
    t0 = time.perf_counter()
    spec = job.metric_spec()
    x = job.point()
    eta = metric_at(spec, x)
    signature = check_signature(spec, eta)
    rtol, res_tol = job.rank_tol, job.residual_tol

    H = generate_holonomy(spec, x, job.max_order, rtol)
    inv = invariant_vectors(H)
    notes = []
    if not H.stabilized:
        notes.append(f"holonomy algebra did not stabilize up to order {job.max_order}")

    fields = None
    verification = None
    if job.mode == "supplied":
        try:
            fields = [FormField(spec.coords, f, label=f"form[{k}]") for k, f in enumerate(job.forms)]
        except InputError as err:
            raise InputError(f"supplied form: {err}") from err
        pts = np.vstack([x[None, :], sample_points(x, VERIFY_SAMPLES - 1, job.seed, spec=spec)])
        verification = verify_supplied_forms(spec, fields, pts, res_tol)
        if not verification["passed"]:
            bad = [f for f in verification["forms"] if not f["passed"]][0]
            raise ToleranceError("verify_supplied_forms",
                                 f"supplied {bad['label']} is not parallel "
                                 f"(residual {bad['max_residual']:.3e} at {bad['worst']})",
                                 report=verification)
        form_space = [f.values(x) for f in fields]
        form_source = "supplied"
    else:
        form_space = invariant_sym_forms(H, eta)
        form_source = "holonomy"

    branch = branch_select(inv, eta, rtol)
    reduced = reduce_by_E0(eta, form_space, inv, signature, rtol)
    if reduced.branch != branch:
        raise ToleranceError("branch_select", "branch decision disagrees with E0 reduction")
    notes.extend(reduced.notes)
    B = reduced.embedding
    null_data = None
    split = None
    if B.shape[1] == 0:
        blocks, kinds, coefficients = [], [], np.zeros((0, 0))
    elif branch == "derham":
        split = derham_split(reduced.eta, reduced.forms, rtol, res_tol, job.seed)
        blocks = [Subspace(orth(B @ b.basis), rtol, spec.n) for b in split.blocks]
        kinds = []
        for b in blocks:
            neg, _ = signature_of(restrict(eta, b.basis))
            kinds.append("lorentzian" if neg else "riemannian")
        coefficients = split.A
    else:
        split = wu_split(reduced.eta, reduced.forms, reduced.null_vector_reduced, rtol, res_tol,
                         job.seed)
        blocks = [Subspace(orth(B @ b.basis), rtol, spec.n) for b in split.blocks]
        kinds = ["riemannian"] * len(split.riemannian) + ["lorentzian"]
        coefficients = split.C
        null_data = {"p": B @ split.null.p, "theta": eta @ (B @ split.null.p),
                     "q": B @ split.null.q, "W": Subspace(orth(B @ split.W.basis), rtol, spec.n),
                     "W_perp": Subspace(orth(B @ split.W_perp.basis), rtol, spec.n)}

    forms_full = _lift_forms(eta, blocks)
    dec = Decomposition(job=job, spec=spec, base_point=x, signature=signature, eta=eta,
                        holonomy=H, invariant_vectors=inv, form_space=form_space,
                        form_source=form_source, branch=branch, E0=reduced.E0, blocks=blocks,
                        block_kinds=kinds, block_forms=forms_full, coefficients=coefficients,
                        split=split, embedding=B, null_data=null_data, fields=fields,
                        verification=verification, notes=notes)

    if fields is not None:
        targets = dec.all_block_forms()
        if targets:
            W = solve_coefficients(targets, form_space, "block_fields", res_tol)
            dec.field_coefficients = [W[:, a] for a in range(W.shape[1])]

    dec.diagnostics = diagnostics(dec)

    for y in job.query_points:
        y = point_from_strings(y, spec.coords)
        entry = {"point": y}
        primary = "B" if fields is not None else "A"
        entry["mode"] = primary
        entry["blocks"] = dec.distributions_at(y, primary)
        if job.cross_check and fields is not None:
            other = dec.distributions_at(y, "A")
            entry["cross_check_angle"] = max(
                (subspace_angle(a.basis, b.basis) for a, b in zip(entry["blocks"], other)),
                default=0.0)
        dec.queries.append(entry)

    if job.emit_adapted:
        samples = sample_points(x, ADAPTED_SAMPLES, job.seed + 1, spec=spec)
        dec.adapted = detect_linear_adapted_coords(dec.all_blocks(), samples,
                                                   lambda y: dec.distributions_at(y))
        if dec.adapted is None:
            notes.append("block distributions are not constant in these coordinates")
    dec.diagnostics["runtime_seconds"] = time.perf_counter() - t0
    return dec


def diagnostics(dec: Decomposition) -> dict:
    """Residuals and consistency numbers for a finished decomposition."""
    eta = dec.eta
    H = dec.holonomy
    forms = dec.all_block_forms()
    blocks = dec.all_blocks()
    d: dict = {
        "holonomy_stabilized": H.stabilized,
        "holonomy_order": H.order,
        "holonomy_rank_history": list(H.rank_history),
        "skew_residual": H.skew_residual(),
        "closure_residual": H.closure_residual(),
        "form_invariance_residual": max((form_invariance_residual(H, f) for f in dec.form_space),
                                        default=0.0),
    }
    if forms:
        d["sum_residual"] = float(np.linalg.norm(sum(forms) - eta))
        cross = 0.0
        for i, a in enumerate(blocks):
            for b in blocks[i + 1:]:
                cross = max(cross, float(np.abs(a.basis.T @ eta @ b.basis).max(initial=0.0)))
        d["block_orthogonality"] = cross
        d["block_form_invariance"] = max(form_invariance_residual(H, f) for f in forms)
    if isinstance(dec.split, WuSplit):
        d["expansion_residual"] = dec.split.expansion_residual()
        W = dec.null_data["W"]
        theta = dec.null_data["theta"]
        d["theta_on_W"] = float(np.abs(theta @ W.basis).max(initial=0.0))
    elif isinstance(dec.split, DeRhamSplit):
        s = dec.split
        recon = max((np.linalg.norm(f - sum(s.A[b, a] * s.forms[b] for b in range(s.r)))
                     for a, f in enumerate(s.basis)), default=0.0)
        d["expansion_residual"] = float(recon)
    return d


def adapted_metric(spec: MetricSpec, Z: np.ndarray, z) -> np.ndarray:
    """Metric components in coordinates z = Z x, evaluated at ``z``."""
    Zinv = np.linalg.inv(Z)
    x = Zinv @ np.asarray(z, dtype=float)
    return Zinv.T @ spec.values(x) @ Zinv


# ---------------------------------------------------------------------------
# serialization


def _subspace_doc(s: Subspace) -> dict:
    return {"dimension": s.dim, "basis": s.echelon_basis().T.tolist() if s.dim else []}


def report(dec: Decomposition) -> dict:
    """Machine-readable result document (JSON-compatible, deterministic key order)."""
    blocks = []
    coeffs = dec.field_coefficients
    all_forms = dec.all_block_forms()
    for k, (b, kind) in enumerate(zip(dec.all_blocks(), dec.block_kinds + ["flat"])):
        neg, pos = signature_of(restrict(dec.eta, b.basis)) if b.dim else (0, 0)
        entry = {"index": k + 1 if kind != "flat" else 0, "kind": kind, "dimension": b.dim,
                 "signature": [neg, pos], "basis": b.echelon_basis().T.tolist(),
                 "form_at_base": all_forms[k].tolist()}
        if coeffs is not None:
            entry["field_coefficients"] = np.asarray(coeffs[k]).tolist()
        blocks.append(entry)
    doc: dict = {
        "job": dec.job.to_dict(),
        "branch": dec.branch,
        "signature": dec.signature,
        "base_point": dec.base_point.tolist(),
        "metric_at_base": dec.eta.tolist(),
        "holonomy": {"dimension": dec.holonomy.dim, "order": dec.holonomy.order,
                     "stabilized": dec.holonomy.stabilized,
                     "rank_history": list(dec.holonomy.rank_history)},
        "invariant_vectors": _subspace_doc(dec.invariant_vectors),
        "form_space": {"dimension": len(dec.form_space), "source": dec.form_source,
                       "forms_at_base": [np.asarray(f).tolist() for f in dec.form_space]},
        "E0": _subspace_doc(dec.E0),
        "blocks": blocks,
        "coefficient_matrix": {"name": "C" if dec.branch == "wu" else "A",
                               "values": np.asarray(dec.coefficients).tolist(),
                               "basis": "reduced"},
        "null_data": None,
        "queries": [],
        "adapted_coordinates": None,
        "verification": dec.verification,
        "diagnostics": {k: v for k, v in dec.diagnostics.items() if k != "runtime_seconds"},
        "notes": list(dec.notes),
    }
    if dec.null_data is not None:
        nd = dec.null_data
        doc["null_data"] = {"p": nd["p"].tolist(), "theta": nd["theta"].tolist(),
                            "q": nd["q"].tolist(), "W": _subspace_doc(nd["W"]),
                            "W_perp": _subspace_doc(nd["W_perp"])}
    for qd in dec.queries:
        entry = {"point": qd["point"].tolist(), "mode": qd["mode"],
                 "blocks": [_subspace_doc(s) for s in qd["blocks"]]}
        if "cross_check_angle" in qd:
            entry["cross_check_angle"] = qd["cross_check_angle"]
        doc["queries"].append(entry)
    if dec.adapted is not None:
        doc["adapted_coordinates"] = {"Z": dec.adapted.tolist(),
                                      "inverse": np.linalg.inv(dec.adapted).tolist()}
    return doc


def distributions_from_report(doc: dict, y) -> list[Subspace]:
    """Re-evaluate block distributions at ``y`` from a result document alone."""
    job = JobSpec.from_dict(doc["job"])
    spec = job.metric_spec()
    blocks = [Subspace.span(np.array(b["basis"], dtype=float).T, job.rank_tol, spec.n)
              for b in doc["blocks"]]
    y = point_from_strings(y, spec.coords)
    if job.mode == "supplied" and all("field_coefficients" in b for b in doc["blocks"]):
        fields = [FormField(spec.coords, f) for f in job.forms]
        bf = [_combination(fields, b["field_coefficients"]) for b in doc["blocks"]]
        return distributions_from_fields(bf, y, job.rank_tol)
    x = np.array(doc["base_point"], dtype=float)
    return distributions_by_transport(spec, x, y, blocks, job.steps)

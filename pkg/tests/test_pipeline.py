import copy
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from helpers import (SPHERE_PPWAVE, SPHERE_PPWAVE_FORMS, SPHERE_PPWAVE_POINT, TWO_SPHERES,
                     TWO_SPHERES_FORMS, TWO_SPHERES_POINT, X4, X5, angle, ppwave_g1, ppwave_g2,
                     span, two_spheres, two_spheres_g1, two_spheres_g2)
from holosplit.cli import dumps, main
from holosplit.errors import InputError, ToleranceError
from holosplit.geometry import FormField
from holosplit.pipeline import (JobSpec, adapted_metric, distributions_from_report, report, run,
                                sample_points, verify_supplied_forms)

JOBS = Path(__file__).resolve().parent.parent / "jobs"


def two_spheres_job(**kw):
    doc = {"coordinates": X4, "metric": TWO_SPHERES, "base_point": ["0", "0", "pi/2", "0"],
           "signature": "riemannian"}
    doc.update(kw)
    return JobSpec.from_dict(doc)


def ppwave_job(**kw):
    doc = {"coordinates": X5, "metric": SPHERE_PPWAVE, "base_point": ["pi/2", "0", "0", "0", "0"],
           "signature": "lorentzian"}
    doc.update(kw)
    return JobSpec.from_dict(doc)


# --- job parsing -----------------------------------------------------------------

def test_mode_defaults_to_supplied_when_forms_present():
    assert two_spheres_job(forms=TWO_SPHERES_FORMS).mode == "supplied"
    assert two_spheres_job().mode == "auto"


@pytest.mark.parametrize("doc", [
    {"coordinates": X4, "metric": TWO_SPHERES},
    {"coordinates": X4, "metric": TWO_SPHERES, "base_point": [0, 0, 0]},
    {"coordinates": X4, "metric": TWO_SPHERES, "base_point": [0, 0, 1, 0], "mode": "supplied"},
    {"coordinates": X4, "metric": TWO_SPHERES, "base_point": [0, 0, 1, 0],
     "tolerances": {"rank": -1}},
    [1, 2, 3],
])
def test_malformed_jobs_rejected(doc):
    with pytest.raises(InputError):
        JobSpec.from_dict(doc)


def test_job_round_trips_through_dict():
    job = ppwave_job(forms=SPHERE_PPWAVE_FORMS, seed=5, query_points=[[1, 0, 0, 0, 0]])
    assert JobSpec.from_dict(job.to_dict()) == job


# --- supplied-form verification --------------------------------------------------------

def test_supplied_forms_verify_at_twenty_points():
    spec = two_spheres()
    fields = [FormField(X4, f) for f in TWO_SPHERES_FORMS] + [FormField(X4, TWO_SPHERES)]
    pts = sample_points(TWO_SPHERES_POINT, 20, 0, spec=spec)
    v = verify_supplied_forms(spec, fields, pts, 1e-10)
    assert v["passed"] and v["samples"] == 20 and v["max_residual"] <= 1e-10


def test_perturbed_supplied_form_fails_verification():
    forms = copy.deepcopy(TWO_SPHERES_FORMS)
    forms[1][2][2] = "1+0.001*x1"
    with pytest.raises(ToleranceError) as exc:
        run(two_spheres_job(forms=forms))
    assert "form[1]" in str(exc.value)
    assert exc.value.stage == "verify_supplied_forms"


# --- two spheres -----------------------------------------------------------------------

@pytest.mark.parametrize("mode", ["supplied", "auto"])
def test_two_spheres_blocks_and_coefficients(mode):
    kw = {"forms": TWO_SPHERES_FORMS} if mode == "supplied" else {}
    dec = run(JobSpec.from_dict({**two_spheres_job(**kw).to_dict(),
                                 "flags": {"emit_adapted": True}}))
    assert dec.branch == "derham" and dec.E0.dim == 0 and len(dec.form_space) == 2
    assert angle(dec.blocks[0], span([1, 0, 0, 0], [0, 1, 0, 0])) <= 1e-9
    assert angle(dec.blocks[1], span([-1, 0, 1, 0], [0, -1, 0, 1])) <= 1e-9
    np.testing.assert_allclose(dec.block_forms[0], two_spheres_g1(TWO_SPHERES_POINT), atol=1e-9)
    np.testing.assert_allclose(dec.block_forms[1], two_spheres_g2(TWO_SPHERES_POINT), atol=1e-9)
    np.testing.assert_allclose(dec.adapted, [[1, 0, 1, 0], [0, 1, 0, 1], [0, 0, 1, 0],
                                             [0, 0, 0, 1]], atol=1e-9)
    if mode == "supplied":
        # reduced basis is [eta, F0] since eta = F0 + 2 F1; eta = g1 + g2, F0 = g1 - g2
        np.testing.assert_allclose(dec.coefficients, [[1, 1], [1, -1]], atol=1e-9)
        # in the supplied family g1 = F0 + F1 and g2 = F1
        np.testing.assert_allclose(dec.field_coefficients, [[1, 1], [0, 1]], atol=1e-9)


def test_two_spheres_adapted_metric_is_block_diagonal():
    dec = run(JobSpec.from_dict({**two_spheres_job().to_dict(), "flags": {"emit_adapted": True}}))
    spec = two_spheres()
    for z in sample_points(dec.adapted @ TWO_SPHERES_POINT, 10, 3):
        G = adapted_metric(spec, dec.adapted, z)
        assert np.abs(G[:2, 2:]).max() <= 1e-9
        assert abs(G[0, 0] - 1) <= 1e-9 and abs(G[2, 2] - 1) <= 1e-9


def test_supplied_field_coefficients_reproduce_targets():
    dec = run(two_spheres_job(forms=TWO_SPHERES_FORMS))
    rng = np.random.default_rng(1)
    fields = dec.block_fields()
    for _ in range(5):
        y = TWO_SPHERES_POINT + rng.uniform(-0.3, 0.3, 4)
        np.testing.assert_allclose(fields[0](y), two_spheres_g1(y), atol=1e-9)
        np.testing.assert_allclose(fields[1](y), two_spheres_g2(y), atol=1e-9)


# --- sphere x pp-wave -------------------------------------------------------------------

def test_ppwave_supplied_fields_match_targets():
    dec = run(ppwave_job(forms=SPHERE_PPWAVE_FORMS))
    assert dec.branch == "wu" and dec.block_kinds == ["riemannian", "lorentzian"]
    np.testing.assert_allclose(dec.null_data["p"], [0, 0, 1, 0, 0], atol=1e-12)
    fields = dec.block_fields()
    rng = np.random.default_rng(2)
    for _ in range(5):
        y = SPHERE_PPWAVE_POINT + rng.uniform(-0.3, 0.3, 5)
        np.testing.assert_allclose(fields[0](y), ppwave_g1(y), atol=1e-9)
        np.testing.assert_allclose(fields[1](y), ppwave_g2(y), atol=1e-9)


def test_ppwave_auto_finds_three_forms():
    dec = run(ppwave_job())
    assert len(dec.form_space) == 3 and dec.holonomy.dim == 2
    assert angle(dec.null_data["W"], span([1, 0, 0, -1, 0], [0, 0, 1, 0, 0])) <= 1e-9
    assert dec.diagnostics["expansion_residual"] <= 1e-8


def test_ppwave_distribution_modes_agree():
    dec = run(ppwave_job(forms=SPHERE_PPWAVE_FORMS))
    y = np.array([1.0, 0.1, 0.2, 0.05, 0.3])
    a = dec.distributions_at(y, "A")
    b = dec.distributions_at(y, "B")
    for s, t in zip(a, b):
        assert angle(s, t) <= 1e-5
    # the sphere factor is the g-orthogonal complement of ker g1 = <d1 - d4, d3, d5>
    assert angle(b[0], span([1, 0, 0, 0, 0], [0, 1, 0, 0, 0])) <= 1e-9


# --- flat and degenerate cases -------------------------------------------------------

def test_flat_metric_is_all_E0():
    doc = json.loads((JOBS / "flat3.json").read_text())
    dec = run(JobSpec.from_dict(doc))
    assert dec.E0.dim == 3 and dec.blocks == []
    assert len(dec.all_blocks()) == 1


def test_holonomy_order_cap_is_noted():
    dec = run(two_spheres_job(max_order=0))
    assert any("did not stabilize" in n for n in dec.notes)


# --- report / CLI ---------------------------------------------------------------------------

def test_report_round_trip_recomputes_distributions():
    for name in ["two_spheres_supplied", "sphere_ppwave_auto"]:
        doc = json.loads(dumps(report(run(JobSpec.from_dict(
            json.loads((JOBS / f"{name}.json").read_text()))))))
        for q in doc["queries"]:
            again = distributions_from_report(doc, q["point"])
            for s, b in zip(again, q["blocks"]):
                assert angle(s, np.array(b["basis"]).T) <= 1e-9


def test_cli_output_is_deterministic(tmp_path):
    job = str(JOBS / "sphere_ppwave_supplied.json")
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        assert main([job, "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        doc["diagnostics"].pop("runtime_seconds", None)
        outs.append(dumps(doc))
        # the written file itself carries no timing
        assert "runtime_seconds" not in out.read_text()
    assert outs[0] == outs[1]
    assert (tmp_path / "r0.json").read_bytes() == (tmp_path / "r1.json").read_bytes()


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main([str(bad)]) == 1
    doc = json.loads((JOBS / "two_spheres_supplied.json").read_text())
    doc["forms"][1][2][2] = "1+0.001*x1"
    pert = tmp_path / "pert.json"
    pert.write_text(json.dumps(doc))
    capsys.readouterr()
    assert main([str(pert)]) == 2
    err = capsys.readouterr().err
    assert "form[1]" in err and "verify_supplied_forms" in err
    assert main([str(JOBS / "two_spheres_auto.json")]) == 0


def test_cli_overrides(capsys):
    code = main([str(JOBS / "two_spheres_supplied.json"), "--mode", "auto", "--json",
                 "--query", "0.1,0.2,1.3,-0.4", "--seed", "3"])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["form_space"]["source"] == "holonomy"
    assert doc["job"]["seed"] == 3
    assert doc["queries"][-1]["mode"] == "A"


def test_console_script_runs():
    res = subprocess.run([sys.executable, "-m", "holosplit.cli", str(JOBS / "flat3.json")],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "E0" in res.stdout

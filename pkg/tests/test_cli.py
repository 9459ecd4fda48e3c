"""CLI tests: exit codes, manifests, digests, and byte determinism.

Everything runs in-process through ``main(argv)`` so coverage tools and
monkeypatching see the same module state as the tests.
"""

import csv
import hashlib
import json
import math

import numpy as np
import pytest

import sepscope.cli as cli
import sepscope.estimator as estimator
from sepscope.cli import _load_desf_csv, main
from sepscope.estimator import estimate_desf, estimate_sep_probability
from sepscope.sampling import SequenceSpec
from sepscope.sepfun import curve_at_zero, jacobian_xi


def _read_csv_payload(text):
    """Split a CSV emission into (manifest, data string, data rows)."""
    lines = text.split("\n")
    assert lines[0].startswith("# sepscope ")
    assert lines[1].startswith("# manifest: ")
    manifest = json.loads(lines[1][len("# manifest: "):])
    data = "\n".join(lines[2:])
    digest = hashlib.sha256(data.encode("utf-8")).hexdigest()
    assert digest == manifest["output_sha256"]
    body = [ln for ln in lines[2:] if ln and not ln.startswith("#")]
    reader = csv.reader(body)
    header = next(reader)
    rows = [dict(zip(header, row)) for row in reader]
    return manifest, data, rows


def _read_json_payload(text):
    payload = json.loads(text)
    canonical = json.dumps(
        payload["data"], sort_keys=True, separators=(",", ":")
    )
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
    assert digest == payload["manifest"]["output_sha256"]
    return payload["manifest"], payload["data"]


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def test_bounds_csv_digest_and_rows(tmp_path):
    out = tmp_path / "bounds.csv"
    assert main(["bounds", "--tol", "1e-8", "--out", str(out)]) == 0
    manifest, _, rows = _read_csv_payload(out.read_text())
    assert manifest["tool"] == "sepscope"
    assert manifest["subcommand"] == "bounds"
    assert manifest["parameters"]["tol"] == 1e-8
    assert [r["tag"] for r in rows] == [
        "dom", "int", "three_right", "three_left", "two_right", "two_left",
        "conjecture", "previous", "product_int", "conjecture_sq_beta2",
    ]
    for r in rows:
        assert r["converged"] == "true"
        limit = 1e-5 if r["tag"] in ("product_int", "conjecture_sq_beta2") else 1e-7
        assert float(r["abs_diff"]) < limit
    dom = rows[0]
    assert float(dom["ref_value"]) == pytest.approx(1024 / (135 * math.pi**2))
    assert float(dom["half"]) == pytest.approx(float(dom["value"]) / 2, abs=1e-15)


def test_bounds_json_digest(tmp_path):
    out = tmp_path / "bounds.json"
    assert main(["bounds", "--tol", "1e-6", "--format", "json",
                 "--out", str(out)]) == 0
    manifest, data = _read_json_payload(out.read_text())
    assert manifest["version"] == cli.__version__
    assert len(data["rows"]) == 10
    assert data["rows"][1]["tag"] == "int"
    assert data["rows"][1]["ref_value"] == pytest.approx(22 / 35)


def test_repeat_invocations_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["bounds", "--tol", "1e-6", "--out", str(a)]) == 0
    assert main(["bounds", "--tol", "1e-6", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def test_estimate_defaults_to_json_and_matches_library(tmp_path, capsys):
    out = tmp_path / "est.json"
    assert main(["estimate", "--n", "50000", "--seed", "5",
                 "--out", str(out)]) == 0
    assert "wall time" in capsys.readouterr().err
    manifest, data = _read_json_payload(out.read_text())
    spec = SequenceSpec("pseudo_random", 5, dimension=9)
    assert manifest["sequence"] == spec.to_dict()
    assert "workers" not in manifest["parameters"]
    res = estimate_sep_probability(spec, 50_000)
    assert data["target"] == "sep"
    assert data["mean"] == res.mean
    assert data["stderr"] == res.stderr
    assert data["n_effective"] == res.n_effective
    assert data["n_total"] == 50_000
    assert data["replicates"] == 1
    assert data["ci95_lo"] == res.ci95[0] and data["ci95_hi"] == res.ci95[1]
    assert 0.3 < data["mean"] < 0.6


def test_estimate_csv_format(tmp_path):
    out = tmp_path / "est.csv"
    assert main(["estimate", "--n", "20000", "--seed", "5", "--format", "csv",
                 "--out", str(out)]) == 0
    _, _, rows = _read_csv_payload(out.read_text())
    assert len(rows) == 1 and rows[0]["target"] == "sep"


def test_estimate_lds_reports_replicates(tmp_path):
    out = tmp_path / "lds.json"
    assert main(["estimate", "--n", "40000", "--engine", "lds", "--seed", "3",
                 "--out", str(out)]) == 0
    _, data = _read_json_payload(out.read_text())
    assert data["replicates"] == 8
    assert len(data["replicate_means"]) == 8


def test_worker_count_is_invisible_in_output(tmp_path, monkeypatch):
    monkeypatch.setattr(estimator, "BATCH_SIZE", 4096)
    p1, p2 = tmp_path / "w1.json", tmp_path / "w2.json"
    assert main(["estimate", "--n", "20000", "--seed", "9", "--workers", "1",
                 "--out", str(p1)]) == 0
    assert main(["estimate", "--n", "20000", "--seed", "9", "--workers", "4",
                 "--out", str(p2)]) == 0
    assert p1.read_bytes() == p2.read_bytes()


# ---------------------------------------------------------------------------
# desf + curves --residual roundtrip
# ---------------------------------------------------------------------------


def test_desf_roundtrip_and_residuals(tmp_path, capsys):
    hist_path = tmp_path / "hist.csv"
    argv = ["desf", "--n", "200000", "--seed", "2024", "--bins", "61",
            "--ximax", "6.0", "--out", str(hist_path)]
    assert main(argv) == 0
    manifest, _, rows = _read_csv_payload(hist_path.read_text())
    assert manifest["subcommand"] == "desf"
    assert len(rows) == 61

    # the CSV round-trips to the exact histogram the library produced
    spec = SequenceSpec("pseudo_random", 2024, dimension=9)
    direct = estimate_desf(spec, 200_000, bins=61, ximax=6.0)
    loaded = _load_desf_csv(str(hist_path))
    assert np.array_equal(loaded.bin_edges, direct.bin_edges)
    assert np.array_equal(loaded.n_psd, direct.n_psd)
    assert np.array_equal(loaded.n_sep, direct.n_sep)
    assert loaded.n_psd_outside == direct.n_psd_outside
    assert loaded.n_sep_outside == direct.n_sep_outside
    assert loaded.n_total == direct.n_total

    def residual_summary(tag):
        out = tmp_path / f"res_{tag}.csv"
        code = main(["curves", "--residual", str(hist_path), "--tags", tag,
                     "--min-count", "20", "--out", str(out)])
        assert code == 0
        _, data, _ = _read_csv_payload(out.read_text())
        summary = next(
            ln for ln in data.split("\n") if ln.startswith("# summary:")
        )
        fields = dict(
            part.split("=") for part in summary[len("# summary:"):].split()
        )
        return {k: float(v) for k, v in fields.items()}

    good = residual_summary("conjecture")
    wrong = residual_summary("int")
    assert good["used"] + good["skipped"] == 61
    assert good["max_abs_z"] < 4.0
    assert wrong["max_abs_z"] > 10.0


def test_desf_json_payload(tmp_path):
    out = tmp_path / "hist.json"
    assert main(["desf", "--n", "30000", "--bins", "11", "--format", "json",
                 "--out", str(out)]) == 0
    _, data = _read_json_payload(out.read_text())
    assert len(data["bin_edges"]) == 12
    assert len(data["n_psd"]) == 11
    assert data["n_total"] == 30_000
    total = sum(data["n_psd"]) + data["n_psd_outside"]
    assert 0 < total < 30_000


def test_residual_needs_exactly_one_tag(tmp_path):
    hist_path = tmp_path / "hist.csv"
    assert main(["desf", "--n", "20000", "--out", str(hist_path)]) == 0
    assert main(["curves", "--residual", str(hist_path)]) == 3
    assert main(["curves", "--residual", str(hist_path),
                 "--tags", "dom,int"]) == 3


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------


def test_curves_wide_table(tmp_path):
    out = tmp_path / "curves.csv"
    assert main(["curves", "--tags", "dom,int", "--grid", "-3:3:601",
                 "--out", str(out)]) == 0
    _, data, rows = _read_csv_payload(out.read_text())
    assert data.split("\n")[0] == "xi,dom,int"
    assert len(rows) == 601
    xi = np.array([float(r["xi"]) for r in rows])
    assert np.array_equal(xi, np.linspace(-3, 3, 601))
    dom = np.array([float(r["dom"]) for r in rows])
    upper = np.array([float(r["int"]) for r in rows])
    assert np.all(upper <= dom + 1e-13)


def test_curves_default_tags_and_intercepts(capsys):
    assert main(["curves", "--grid", "0:0:1"]) == 0
    text = capsys.readouterr().out
    _, data, rows = _read_csv_payload(text)
    header = data.split("\n")[0].split(",")
    assert header[0] == "xi" and header[-1] == "jacobian"
    assert len(header) == 11  # xi + nine curves + jacobian
    row = rows[0]
    for tag in ("dom", "int", "conjecture", "previous"):
        assert float(row[tag]) == curve_at_zero(tag)
    assert float(row["jacobian"]) == jacobian_xi(0.0)


def test_curves_general_beta_column(tmp_path):
    out = tmp_path / "jac2.csv"
    assert main(["curves", "--tags", "jacobian", "--beta", "2",
                 "--grid", "-1:1:5", "--out", str(out)]) == 0
    _, _, rows = _read_csv_payload(out.read_text())
    vals = [float(r["jacobian"]) for r in rows]
    assert vals[0] == pytest.approx(vals[-1], rel=1e-12)  # even in xi
    assert vals[2] == max(vals)
    # mixing beta with the real-ensemble closed forms is refused
    assert main(["curves", "--tags", "dom", "--beta", "2"]) == 3


def test_unknown_curve_tag_is_a_usage_error(capsys):
    assert main(["curves", "--tags", "nope"]) == 2
    assert "unknown curve tag" in capsys.readouterr().err


def test_bad_grid_is_a_numeric_error():
    assert main(["curves", "--grid", "1:0:5"]) == 3
    assert main(["curves", "--grid", "a:b:c"]) == 3
    assert main(["curves", "--grid", "0:1"]) == 3


# ---------------------------------------------------------------------------
# exit codes / misc plumbing
# ---------------------------------------------------------------------------


def test_numeric_errors_exit_3(capsys):
    assert main(["estimate", "--n", "0"]) == 3
    assert main(["estimate", "--n", "100", "--workers", "0"]) == 3
    assert main(["desf", "--n", "100", "--bins", "1"]) == 3
    assert "error" in capsys.readouterr().err


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "sepscope" in capsys.readouterr().out


def test_missing_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# verify wiring
# ---------------------------------------------------------------------------


class _Check:
    def __init__(self, passed):
        self.passed = passed


def test_verify_passing_run(tmp_path, capsys, monkeypatch):
    report = tmp_path / "report.txt"

    def fake_run_checks(level, *, workers=1, echo=print):
        echo(f"[ok] stub check ({level}, workers={workers})")
        return [_Check(True), _Check(True)]

    monkeypatch.setattr(cli, "run_checks", fake_run_checks)
    assert main(["verify", "--level", "quick", "--out", str(report)]) == 0
    captured = capsys.readouterr()
    assert "[ok] stub check (quick, workers=1)" in captured.out
    assert "2/2 checks passed" in captured.err
    assert report.read_text() == "[ok] stub check (quick, workers=1)\n"


def test_verify_failure_exits_4(capsys, monkeypatch):
    def fake_run_checks(level, *, workers=1, echo=print):
        echo("[fail] stub check")
        return [_Check(True), _Check(False)]

    monkeypatch.setattr(cli, "run_checks", fake_run_checks)
    assert main(["verify"]) == 4
    assert "1/2 checks passed" in capsys.readouterr().err

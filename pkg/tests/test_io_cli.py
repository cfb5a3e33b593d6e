import csv
import json
import re

import numpy as np
import pytest

from cbcert import cli, io, plot, verify
from cbcert.model import Certificate
from conftest import P, PV

PRINTED = "lti_paper_certificate.json"


def run(argv, capsys=None):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr() if capsys is not None else None
    return code, out


def test_bundled_files():
    names = set(io.bundled_files())
    assert {"lti_unstable.json", "nonlinear_affine.json", "nonlinear_affine_cbf.json", PRINTED} <= names
    assert io.resolve("lti_unstable.json").exists()


def test_load_problem_fields(lti, nonlinear):
    assert (lti.n, lti.m, lti.h) == (2, 2, 4)
    np.testing.assert_allclose(np.sort(lti.input_margin(np.array([[2.5, -2.5]]))[0]), [0, 0, 5, 5], atol=1e-12)
    assert nonlinear.g[0][1].is_zero() and nonlinear.g[1][0].is_zero()
    assert nonlinear.f[1].almost_equal(P("x1 + x1^3/3 + x2"), 1e-15)


def test_problem_round_trip(tmp_path, nonlinear):
    path = tmp_path / "p.json"
    io.write_json(path, io.problem_to_dict(nonlinear))
    back, mode = io.load_problem(path)
    assert mode == "cbc"
    assert all(a == b for a, b in zip(back.f, nonlinear.f)) and back.s == nonlinear.s
    np.testing.assert_array_equal(back.A, nonlinear.A)


@pytest.mark.parametrize("patch,key", [
    ({"f": ["x2", "x1 +* x2"]}, "f[1]"),
    ({"g": [["1", "0"]]}, "g"),
    ({"state_dim": -1}, "state_dim"),
    ({"mode": "lyapunov"}, "mode"),
    ({"safe_set": "x3"}, "safe_set"),
])
def test_problem_errors_name_the_key(tmp_path, patch, key):
    doc = json.loads(io.resolve("lti_unstable.json").read_text())
    doc.update(patch)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(io.FileFormatError, match=re.escape(key)):
        io.load_problem(path)


def test_json_syntax_error_location(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "state_dim": 2,\n  oops\n}')
    with pytest.raises(io.FileFormatError, match="line 3"):
        io.load_problem(path)


def test_certificate_round_trip(tmp_path, lti_synth):
    cert, _ = lti_synth
    path = io.save_certificate(cert, tmp_path / "c.json", {"problem": "lti"})
    back, meta = io.load_certificate(path)
    pts = np.random.default_rng(0).uniform(-2, 2, (200, 2))
    for a, b in [(cert.B, back.B), (cert.lam1, back.lam1), (cert.sigma_safe, back.sigma_safe)] + list(zip(cert.u, back.u)):
        assert np.max(np.abs(a.evaluate_many(pts) - b.evaluate_many(pts))) <= 1e-12
        assert (a - b).max_abs_coeff() <= 1e-12
    assert meta["problem"] == "lti" and back.iterations == cert.iterations


def test_printed_certificate_file(printed_cert):
    assert printed_cert.B.coeff((2, 0)) == -7.635
    assert printed_cert.u[0].coeff((1, 0)) == -2.32
    assert printed_cert.lam1 is None


def test_check_compatible(nonlinear, printed_cert):
    io.check_compatible(nonlinear, printed_cert)
    with pytest.raises(io.FileFormatError):
        io.check_compatible(nonlinear, Certificate(P("x1", 3), PV(["0"], 3)))


def test_cli_verify_printed(capsys):
    code, out = run(["verify", "lti_unstable.json", PRINTED], capsys)
    assert code == cli.EXIT_OK
    assert "VERIFIED" in out.out and "NOT VERIFIED" not in out.out


def test_cli_verify_negated(tmp_path, capsys, printed_cert):
    bad = Certificate(-printed_cert.B, printed_cert.u)
    path = io.save_certificate(bad, tmp_path / "neg.json")
    code, _ = run(["verify", "lti_unstable.json", path], capsys)
    assert code == cli.EXIT_VERIFY


def test_cli_usage_errors(tmp_path, capsys):
    assert run(["verify", "lti_unstable.json", tmp_path / "missing.json"], capsys)[0] == cli.EXIT_USAGE
    assert run(["frobnicate"], capsys)[0] == cli.EXIT_USAGE
    cert3 = io.save_certificate(Certificate(P("1 - x1^2", 3), PV(["0", "0"], 3)), tmp_path / "c3.json")
    assert run(["verify", "lti_unstable.json", cert3], capsys)[0] == cli.EXIT_USAGE
    code, out = run(["simulate", "lti_unstable.json", PRINTED, "--controller", "qp-filter", "--nominal", "x1",
                     "--out", tmp_path], capsys)
    assert code == cli.EXIT_USAGE and "--nominal" in out.err


def test_cli_synth_lti(tmp_path, capsys):
    code, out = run(["synth", "lti_unstable.json", "--out", tmp_path], capsys)
    assert code == cli.EXIT_OK
    assert {"certificate.json", "trace.csv", "report.json"} <= {p.name for p in tmp_path.iterdir()}
    assert json.loads((tmp_path / "report.json").read_text())["passed"]
    with open(tmp_path / "trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    areas = [float(r["area"]) for r in rows]
    assert areas == sorted(areas)
    assert run(["verify", "lti_unstable.json", tmp_path / "certificate.json"], capsys)[0] == cli.EXIT_OK


def test_cli_synth_infeasible(tmp_path, capsys):
    doc = json.loads(io.resolve("lti_unstable.json").read_text())
    doc["initial_set"] = "0.16 - (x1 - 1.9)^2 - x2^2"
    path = tmp_path / "p.json"
    path.write_text(json.dumps(doc))
    assert run(["synth", path, "--out", tmp_path], capsys)[0] == cli.EXIT_INFEASIBLE


def test_cli_simulate(tmp_path, capsys, lti, printed_cert):
    code, out = run(["simulate", "lti_unstable.json", PRINTED, "--starts", 6, "--horizon", 2, "--out", tmp_path], capsys)
    assert code == cli.EXIT_OK
    inv = json.loads((tmp_path / "invariance.json").read_text())
    assert inv["passed"] and inv["count"] == 6
    with open(tmp_path / "trajectories.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["traj", "t", "x1", "x2", "u1", "u2"]
    assert len(rows) == 1 + 6 * 2001


def test_cli_simulate_zero_controller(tmp_path, capsys):
    code, _ = run(["simulate", "lti_unstable.json", PRINTED, "--starts", 4, "--controller", "zero",
                   "--out", tmp_path], capsys)
    assert code == cli.EXIT_OK
    assert not json.loads((tmp_path / "invariance.json").read_text())["passed"]


def test_cli_outputs_byte_identical(tmp_path, capsys):
    for sub in ("a", "b"):
        args = ["simulate", "lti_unstable.json", PRINTED, "--starts", 3, "--horizon", 1, "--out", tmp_path / sub]
        assert run(args, capsys)[0] == cli.EXIT_OK
        assert run(["levelset", "lti_unstable.json", PRINTED, "--grid", 50, "--out", tmp_path / sub], capsys)[0] == 0
    for name in ("trajectories.csv", "levelset_B.csv", "trajectories.svg", "levelset_B.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_levelset_values(tmp_path, capsys, printed_cert):
    code, _ = run(["levelset", "lti_unstable.json", PRINTED, "--grid", 60, "--out", tmp_path], capsys)
    assert code == cli.EXIT_OK
    with open(tmp_path / "levelset_B.csv") as fh:
        rows = [tuple(map(float, r)) for r in list(csv.reader(fh))[1:]]
    assert len(rows) == 3600
    idx = np.random.default_rng(0).choice(len(rows), 100, replace=False)
    for i in idx:
        x1, x2, v = rows[i]
        assert v == pytest.approx(printed_cert.B.evaluate([x1, x2]), rel=1e-12, abs=1e-12)


def test_printed_input_within_bounds(tmp_path, capsys):
    code, out = run(["levelset", "lti_unstable.json", PRINTED, "--which", "u1", "--out", tmp_path], capsys)
    assert code == cli.EXIT_OK
    lo, hi = map(float, re.search(r"min (\S+), max (\S+)", out.out).groups())
    assert -2.5 <= lo <= hi <= 2.5
    assert run(["levelset", "lti_unstable.json", PRINTED, "--which", "u9", "--out", tmp_path], capsys)[0] == 1


def test_constant_polynomial_has_no_contours():
    X, Y = plot.grid(np.array([[-1.0, 1.0], [-1.0, 1.0]]), 20)
    assert plot.contours(X, Y, plot.evaluate_grid(P("2"), X, Y)) == []
    assert plot.nice_levels(np.full((3, 3), 2.0)) == []


def _paths(svg, cls):
    out = []
    for m in re.finditer(r'<path d="([^"]+)"[^>]*class="%s"[^>]*data-closed="(\w+)"' % cls, svg):
        pts = np.array([[float(a), float(b)] for a, b in re.findall(r"[ML]([-\d.]+),([-\d.]+)", m.group(1))])
        out.append((pts, m.group(2) == "true"))
    return out


def test_svg_barrier_contour(tmp_path, capsys, lti, printed_cert):
    assert run(["simulate", "lti_unstable.json", PRINTED, "--starts", 0, "--out", tmp_path], capsys)[0] == 0
    svg = (tmp_path / "trajectories.svg").read_text()
    paths = _paths(svg, "barrier")
    assert len(paths) == 1 and paths[0][1]
    # back to state coordinates
    bbox = plot.square_bbox(verify.safe_bbox(lti))
    canvas = plot.SvgCanvas(bbox)
    uv = paths[0][0]
    x = np.column_stack([bbox[0, 0] + uv[:, 0] / canvas.width * (bbox[0, 1] - bbox[0, 0]),
                         bbox[1, 1] - uv[:, 1] / canvas.height * (bbox[1, 1] - bbox[1, 0])])
    assert np.all(lti.s.evaluate_many(x) > 0)
    assert np.all(lti.w.evaluate_many(x) < 0)
    assert np.max(np.abs(printed_cert.B.evaluate_many(x))) < 0.1
    # inward sign check along the level set
    pts = verify.sample_boundary(printed_cert.B, bbox, 720).points
    assert lti.lie(printed_cert.B, printed_cert.u).evaluate_many(pts).min() > 0


def test_csv_writer_format(tmp_path):
    path = io.write_csv(tmp_path / "x.csv", ["a", "b"], [[0.1, "z"], [1e-20, 3]])
    assert path.read_bytes() == b"a,b\n0.1,z\n1e-20,3.0\n"


def test_timestamp_pinned(tmp_path, monkeypatch, printed_cert):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    d = io.certificate_to_dict(printed_cert)
    assert d["metadata"]["created"] == "1970-01-01T00:00:00Z"

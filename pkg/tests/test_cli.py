import io
import json
import subprocess
import sys

import pytest

from varcert.certify import InvalidProblem
from varcert.cli import run
from varcert.problem import ProblemFileError, load_problem, load_problem_file, parse_problem_text

CANONICAL = '''[problem]
n = 1
N = 1
f = "0.5*(z1^2 + y1^2)"
[domain]
b0 = [[0.0, 1.2]]
omega = [[0.2, 1.0]]
[candidate]
y0 = "0"
[family]
kind = "expression"
phi = "l1*cosh(x1)"
r = 10.0
'''


def write(tmp_path, text, name="p.vp"):
    path = tmp_path / name
    path.write_text(text)
    return path


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


# -- problem files ----------------------------------------------------------

def test_canonical_file_defaults(tmp_path):
    p = load_problem(write(tmp_path, CANONICAL))
    assert p.lagrangian.n == 1 and p.lagrangian.N == 1
    assert p.resolution == (65,)
    t = p.tolerances
    assert (t.tol_el, t.tol_inv, t.tol_exact, t.tol_invariance, t.tol_excess) == \
        (1e-6, 1e-10, 1e-5, 1e-3, 1e-9)
    s = p.sampling
    assert (s.num_samples, s.mode_cap, s.seed) == (50, 4, 42)
    assert p.deltas == (1.0, 0.5, 0.25, 0.1, 0.05)


def test_missing_family(tmp_path):
    text = CANONICAL.split("[family]")[0]
    with pytest.raises(InvalidProblem, match="^family: required$"):
        load_problem(write(tmp_path, text))


def test_omega_outside_b0_names_axis(tmp_path):
    text = CANONICAL.replace("omega = [[0.2, 1.0]]", "omega = [[0.2, 1.3]]")
    with pytest.raises(InvalidProblem, match="axis 1"):
        load_problem(write(tmp_path, text))


def test_parse_error_line_number():
    with pytest.raises(ProblemFileError, match="line 3"):
        parse_problem_text("[problem]\nn = 1\nthis is not a key\n")
    with pytest.raises(ProblemFileError, match="line 2"):
        parse_problem_text("[a]\nx = [1, 2\n")
    with pytest.raises(ProblemFileError, match="line 1"):
        parse_problem_text("x = 1\n")


def test_comments_booleans_and_lists():
    sec, lines = parse_problem_text(
        '# header\n[options]\ncontinue_on_failure = true  # inline\n'
        '[candidate]\ny0 = ["0", "x1 # not a comment"]\n')
    assert sec["options"]["continue_on_failure"] is True
    assert sec["candidate"]["y0"] == ["0", "x1 # not a comment"]
    assert lines["candidate.y0"] == 5


@pytest.mark.parametrize("old,new,key", [
    ('f = "0.5*(z1^2 + y1^2)"', 'f = "0.5*(z1^^2)"', "problem.f"),
    ('phi = "l1*cosh(x1)"', 'phi = "l1*cosh(x1) + y1"', "family.phi"),
    ('y0 = "0"', 'y0 = ["0", "1"]', "candidate.y0"),
    ("n = 1", "n = 1.5", "problem.n"),
    ("r = 10.0", "r = 10.0\nbogus = 1", "family.bogus"),
    ('kind = "expression"', 'kind = "table"', "family.kind"),
    ("b0 = [[0.0, 1.2]]", "b0 = [0.0, 1.2]", "domain.b0"),
])
def test_validation_errors_name_key(tmp_path, old, new, key):
    with pytest.raises(InvalidProblem) as info:
        load_problem(write(tmp_path, CANONICAL.replace(old, new)))
    assert info.value.key == key


def test_optional_sections(tmp_path):
    text = CANONICAL + ('[grid]\nresolution = 33\n[tolerances]\ntol_el = 1e-4\n'
                        '[sampling]\nseed = 5\nnum_samples = 7\n[deltas]\nvalues = [0.5]\n'
                        '[options]\ncontinue_on_failure = true\n[output]\nreport = "r.json"\n')
    pf = load_problem_file(write(tmp_path, text))
    assert pf.spec.resolution == (33,) and pf.spec.tolerances.tol_el == 1e-4
    assert pf.spec.sampling.seed == 5 and pf.spec.sampling.num_samples == 7
    assert pf.spec.deltas == (0.5,)
    assert pf.continue_on_failure and pf.report == "r.json"


def test_shooting_file(demos):
    p = load_problem(demos / "shooting.vp")
    assert p.family.kind == "shooting" and p.family.base_t == 0.0
    assert p.family.y_base == (0.0,)


# -- subcommands ------------------------------------------------------------

def test_certify_cosh_seed_7(demos, tmp_path):
    out = tmp_path / "out.json"
    code, text, _ = call("certify", demos / "cosh_field.vp", "--seed", 7, "--report", out)
    assert code == 0
    d = json.loads(out.read_text())
    assert d["verdict"] == "CERTIFIED_LOCAL_MIN"
    assert d["config"]["sampling"]["seed"] == 7
    assert "verdict: CERTIFIED_LOCAL_MIN" in text


def test_report_field_names(demos, tmp_path):
    from dataclasses import fields
    from varcert.certify import CertificationReport
    out = tmp_path / "out.json"
    call("certify", demos / "dirichlet.vp", "--report", out)
    names = {f.name for f in fields(CertificationReport)} - {"timings"}
    assert set(json.loads(out.read_text())) == names
    call("certify", demos / "dirichlet.vp", "--report", out, "--timings")
    assert "timings" in json.loads(out.read_text())


def test_certify_nonconvex(demos, tmp_path):
    out = tmp_path / "nc.json"
    code, _, _ = call("certify", demos / "nonconvex.vp", "--report", out)
    assert code == 1
    assert json.loads(out.read_text())["failure_reason"] == "NOT_CONVEX"
    code, _, _ = call("certify", demos / "nonconvex.vp", "--report", out,
                      "--continue-on-failure")
    assert code == 1
    assert json.loads(out.read_text())["failures"] == ["NOT_CONVEX", "EXCESS_NEGATIVE"]


def test_check(demos, tmp_path):
    code, text, _ = call("check", demos / "cosh_field.vp")
    assert code == 0 and text.startswith("ok:")
    out = tmp_path / "bad.json"
    code, _, err = call("check", demos / "bad_domain.vp", "--report", out)
    assert code == 2 and "axis 1" in err
    assert json.loads(out.read_text())["verdict"] == "INVALID_INPUT"
    assert call("check", tmp_path / "missing.vp")[0] == 2


@pytest.mark.parametrize("sub,key", [("stationary", "el_stats"), ("field", "exactness"),
                                     ("hilbert", "invariance"), ("excess", "excess")])
def test_partial_subcommands(demos, tmp_path, sub, key):
    out = tmp_path / f"{sub}.json"
    code, _, _ = call(sub, demos / "cosh_field.vp", "--report", out)
    assert code == 0
    d = json.loads(out.read_text())
    assert d[key] is not None and d["verdict"] is None


def test_partial_subcommand_failure_exit(demos):
    assert call("field", demos / "tanh_field.vp", "--tol-exact", 1e-12)[0] == 1
    assert call("hilbert", demos / "tanh_field.vp")[0] == 1
    assert call("excess", demos / "nonconvex.vp")[0] == 1


def test_flags_override_file(demos, tmp_path):
    text = (demos / "cosh_field.vp").read_text() + "[sampling]\nseed = 3\nnum_samples = 4\n"
    path = write(tmp_path, text)
    out = tmp_path / "o.json"
    call("certify", path, "--report", out)
    cfg = json.loads(out.read_text())["config"]
    assert cfg["sampling"]["seed"] == 3 and cfg["sampling"]["num_samples"] == 4
    call("certify", path, "--report", out, "--seed", 11, "--samples", 6, "--resolution", 33,
         "--tol-el", 1e-5, "--tol-inv", 1e-11, "--tol-exact", 1e-4, "--tol-invariance", 2e-3,
         "--deltas", "0.25,0.1")
    cfg = json.loads(out.read_text())["config"]
    assert cfg["sampling"]["seed"] == 11 and cfg["sampling"]["num_samples"] == 6
    assert cfg["resolution"] == [33] and cfg["deltas"] == [0.25, 0.1]
    assert cfg["tolerances"]["tol_el"] == 1e-5 and cfg["tolerances"]["tol_inv"] == 1e-11
    assert cfg["tolerances"]["tol_exact"] == 1e-4
    assert cfg["tolerances"]["tol_invariance"] == 2e-3


def test_file_keys_for_report_and_continue(demos, tmp_path):
    out = tmp_path / "from_file.json"
    text = (demos / "nonconvex.vp").read_text() + (
        f'[options]\ncontinue_on_failure = true\n[output]\nreport = "{out}"\n')
    code, _, _ = call("certify", write(tmp_path, text))
    assert code == 1
    assert json.loads(out.read_text())["failures"] == ["NOT_CONVEX", "EXCESS_NEGATIVE"]


def test_numerical_failure_exit(tmp_path):
    text = CANONICAL.replace('y0 = "0"', 'y0 = "log(x1 - 0.1)"')
    code, _, err = call("certify", write(tmp_path, text))
    assert code == 3 and "numerical failure" in err


def test_bad_flag_value(demos):
    with pytest.raises(SystemExit) as info:
        call("certify", demos / "cosh_field.vp", "--deltas", "a,b")
    assert info.value.code == 2


def test_module_entry_point(demos):
    res = subprocess.run([sys.executable, "-m", "varcert", "check", str(demos / "geodesic.vp")],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("ok:")

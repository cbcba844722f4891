import json
import os
import subprocess
import sys
import tempfile

import pytest

SRC = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(__file__))), "src")

PROBLEM = """
[problem]
hamiltonian = 0.5*p^2
sigma = -abs(x)
horizon = 1

[grid]
x_min = -1
x_max = 1
x_nodes = 5
t_nodes = 2

[queries]
points = 1 0; 1 0.5
curves = 1 -1
"""

TERMINAL = """
[problem]
hamiltonian = 0.5*p^2
terminal = -abs(x)
horizon = 1

[grid]
x_min = -1
x_max = 1
x_nodes = 5
t_nodes = 2
"""

NONCONVEX = """
[problem]
hamiltonian = sin(p)
sigma = x
horizon = 1
"""


@pytest.fixture(scope="session")
def use_shell():
    return True if sys.platform.startswith("win") else False


@pytest.fixture
def workdir():
    with tempfile.TemporaryDirectory() as path:
        yield path


def _problem(workdir, text, name="problem.ini"):
    path = os.path.join(workdir, name)
    with open(path, "w") as fd:
        fd.write(text)
    return path


def _run(args, use_shell):
    env = dict(os.environ, PYTHONPATH=SRC + os.pathsep + os.environ.get("PYTHONPATH", ""))
    return subprocess.run(
        [sys.executable, "-m", "hopflax"] + args, capture_output=True, shell=use_shell, env=env
    )


class TestCmd:

    def test_solve_grid(self, use_shell, workdir):
        path = _problem(workdir, PROBLEM)
        out = os.path.join(workdir, "grid.csv")
        ret = _run(["solve", "--problem", path, "--format", "csv", "--out", out], use_shell)
        assert ret.returncode < 1, f"stdout: {ret.stdout}\nstderr: {ret.stderr}"
        with open(out) as fd:
            lines = fd.read().splitlines()
        assert lines[0] == "t,x,value,p_t,p,singleton,failed"
        assert len(lines) == 1 + 2 * 5

    def test_solve_jobs_do_not_change_output(self, use_shell, workdir):
        path = _problem(workdir, PROBLEM)
        outputs = []
        for jobs in ("1", "8"):
            out = os.path.join(workdir, f"grid_{jobs}.csv")
            ret = _run(["solve", "--problem", path, "--format", "csv", "--jobs", jobs,
                        "--out", out], use_shell)
            assert ret.returncode < 1, f"stdout: {ret.stdout}\nstderr: {ret.stderr}"
            with open(out, "rb") as fd:
                outputs.append(fd.read())
        assert outputs[0] == outputs[1]

    def test_solve_points(self, use_shell, workdir):
        path = _problem(workdir, PROBLEM)
        ret = _run(["solve", "--problem", path, "--points"], use_shell)
        assert ret.returncode < 1, f"stdout: {ret.stdout}\nstderr: {ret.stderr}"
        rows = json.loads(ret.stdout)["rows"]
        assert len(rows) == 2
        assert rows[0]["value"] == pytest.approx(-0.5, abs=1e-8)
        assert rows[0]["singleton"] is False
        assert rows[1]["p"] == pytest.approx(-1.0, abs=1e-6)

    def test_conjugate(self, use_shell, workdir):
        path = _problem(workdir, PROBLEM)
        ret = _run(["conjugate", "--problem", path, "--nodes", "5"], use_shell)
        assert ret.returncode < 1, f"stdout: {ret.stdout}\nstderr: {ret.stderr}"
        data = json.loads(ret.stdout)
        assert data["conjugate"]["value"] == pytest.approx([2.0, 0.5, 0.0, 0.5, 2.0])
        assert data["report"]["strictly_convex"] is True

    def test_characteristics(self, use_shell, workdir):
        path = _problem(workdir, PROBLEM)
        ret = _run(["characteristics", "--problem", path], use_shell)
        assert ret.returncode < 1, f"stdout: {ret.stdout}\nstderr: {ret.stderr}"
        data = json.loads(ret.stdout)
        assert data["points"][0]["preimages"]["types"] == ["I", "II", "I"]
        assert data["curves"][0]["curve"]["branch"] == "sub"

    def test_characteristics_polylines(self, use_shell, workdir):
        path = _problem(workdir, PROBLEM)
        ret = _run(["characteristics", "--problem", path, "--bundle", "0", "--count", "3",
                    "--format", "csv"], use_shell)
        assert ret.returncode < 1, f"stdout: {ret.stdout}\nstderr: {ret.stderr}"
        text = ret.stdout.decode()
        assert text.count("# curve") == 4
        assert text.startswith("# curve 0\nbranch,t,x,value\n")

    def test_roundtrip(self, use_shell, workdir):
        path = _problem(workdir, TERMINAL)
        ret = _run(["roundtrip", "--problem", path], use_shell)
        assert ret.returncode < 1, f"stdout: {ret.stdout}\nstderr: {ret.stderr}"
        data = json.loads(ret.stdout)
        assert data["bf_holds"] is True
        assert data["sup_error"] <= 1e-5

    def test_nonconvex_hamiltonian_exit_code(self, use_shell, workdir):
        path = _problem(workdir, NONCONVEX)
        ret = _run(["solve", "--problem", path], use_shell)
        assert ret.returncode == 2, f"stdout: {ret.stdout}\nstderr: {ret.stderr}"
        assert b"HypothesisError" in ret.stderr

    def test_missing_problem_exit_code(self, use_shell, workdir):
        ret = _run(["solve", "--problem", os.path.join(workdir, "none.ini")], use_shell)
        assert ret.returncode == 1, f"stdout: {ret.stdout}\nstderr: {ret.stderr}"

    def test_solve_tolerance_widens_minimizer_sets(self, use_shell, workdir):
        path = _problem(workdir, PROBLEM)
        ret = _run(["solve", "--problem", path, "--points", "--tol", "0.6"], use_shell)
        assert ret.returncode < 1, f"stdout: {ret.stdout}\nstderr: {ret.stderr}"
        rows = json.loads(ret.stdout)["rows"]
        # y = -0.5 is a local minimum 1.0 above the value at (1, 0.5), reached at y = 1.5
        assert rows[1]["value"] == pytest.approx(-1.0, abs=1e-8)
        assert rows[1]["singleton"] is False

    def test_verify_csv(self, use_shell, workdir):
        path = _problem(workdir, PROBLEM)
        ret = _run(["verify", "--problem", path, "--format", "csv"], use_shell)
        assert ret.returncode < 1, f"stdout: {ret.stdout}\nstderr: {ret.stderr}"
        lines = ret.stdout.decode().splitlines()
        assert lines[0] == (
            "subsolution,supersolution,sub_margin,super_margin,residual_max,unreliable,"
            "t,x,p_t,q,margin,side"
        )
        assert len(lines) >= 2

    def test_verify_json(self, use_shell, workdir):
        path = _problem(workdir, PROBLEM)
        ret = _run(["verify", "--problem", path], use_shell)
        assert ret.returncode < 1, f"stdout: {ret.stdout}\nstderr: {ret.stderr}"
        assert "subsolution" in json.loads(ret.stdout)

    def test_usage_error_exit_code(self, use_shell, workdir):
        ret = _run(["solve"], use_shell)
        assert ret.returncode == 1, f"stdout: {ret.stdout}\nstderr: {ret.stderr}"
        assert b"--problem" in ret.stderr
        path = _problem(workdir, PROBLEM)
        ret = _run(["solve", "--problem", path, "--format", "xml"], use_shell)
        assert ret.returncode == 1, f"stdout: {ret.stdout}\nstderr: {ret.stderr}"
        ret = _run(["solve", "--problem", path, "--jobs", "many"], use_shell)
        assert ret.returncode == 1, f"stdout: {ret.stdout}\nstderr: {ret.stderr}"

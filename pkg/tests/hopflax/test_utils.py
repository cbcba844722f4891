import json

import numpy as np
import pandas as pd
import pytest

from hopflax.exceptions import HypothesisError, InputError
from hopflax.hopflax_core import GridSolution, solve_grid
from hopflax.utils import ProblemSpec, emit, load_problem, read_candidate, write_json

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
curves = 0 0.5
"""


@pytest.fixture
def problem_file(tmp_path):
    path = tmp_path / "problem.ini"
    path.write_text(PROBLEM)
    return str(path)


# =================================================================================================
# Tests for `ProblemSpec`
# =================================================================================================

def test_problem_spec_from_string():
    spec = ProblemSpec.from_string(PROBLEM)
    assert spec.hamiltonian == "0.5*p^2"
    assert spec.sigma == "-abs(x)"
    assert not spec.terminal
    assert spec.window == (-1.0, 1.0)
    np.testing.assert_allclose(spec.t_grid(), [0.5, 1.0])
    np.testing.assert_allclose(spec.x_grid(), [-1.0, -0.5, 0.0, 0.5, 1.0])
    assert spec.points == [(1.0, 0.0), (1.0, 0.5)]
    assert spec.curves == [(0.0, 0.5)]


def test_problem_spec_defaults():
    spec = ProblemSpec.from_string("[problem]\nhamiltonian = p^2\nterminal = x\nhorizon = 2\n")
    assert spec.terminal
    assert spec.window == (-2.0, 2.0)
    assert spec.x_nodes == 65
    assert spec.t_nodes == 9
    assert spec.resolution is None
    assert spec.points == []


def test_problem_spec_two_variables():
    spec = ProblemSpec.from_string(
        "[problem]\nhamiltonian = 0.5*p1^2 + 0.5*p2^2\nsigma = abs(x1) + abs(x2)\n"
        "dimension = 2\nhorizon = 1\n[grid]\nx_nodes = 3\n"
    )
    assert spec.x_grid().shape == (9, 2)
    assert spec.to_problem().dimension == 2


@pytest.mark.parametrize(
    "text",
    [
        "[grid]\nx_nodes = 3\n",
        "[problem]\nsigma = x\nhorizon = 1\n",
        "[problem]\nhamiltonian = p^2\nsigma = x\n",
        "[problem]\nhamiltonian = p^2\nhorizon = 1\n",
        "[problem]\nhamiltonian = p^2\nsigma = x\nterminal = x\nhorizon = 1\n",
        "[problem]\nhamiltonian = p^2\nsigma = x\nhorizon = 0\n",
        "[problem]\nhamiltonian = p^2\nsigma = x\nhorizon = soon\n",
        "[problem]\nhamiltonian = p^2\nsigma = x\nhorizon = 1\ndimension = 3\n",
        "[problem]\nhamiltonian = p^2\nsigma = x\nhorizon = 1\n[grid]\nx_min = 1\nx_max = 0\n",
        "[problem]\nhamiltonian = p^2\nsigma = x\nhorizon = 1\n[queries]\npoints = 1 0 0\n",
        "[problem]\nhamiltonian = p^2\nsigma = x\nhorizon = 1\n[queries]\npoints = 1 a\n",
        "[problem\nhamiltonian = p^2\n",
    ],
)
def test_problem_spec_errors(text):
    with pytest.raises(InputError):
        ProblemSpec.from_string(text)


def test_to_problem_rejects_nonconvex_hamiltonian():
    spec = ProblemSpec.from_string("[problem]\nhamiltonian = sin(p)\nsigma = x\nhorizon = 1\n")
    with pytest.raises(HypothesisError):
        spec.to_problem()


def test_load_problem(problem_file):
    prob = load_problem(problem_file)
    assert prob.horizon == 1.0
    assert prob.window == (-4.0, 4.0)
    with pytest.raises(InputError):
        load_problem(problem_file + ".missing")


def test_read_candidate(tmp_path):
    t, x = np.meshgrid([0.5, 1.0, 1.5], [-1.0, 0.0, 1.0], indexing="ij")
    path = tmp_path / "candidate.csv"
    pd.DataFrame({"t": t.ravel(), "x": x.ravel(), "value": (x - t).ravel()}).to_csv(path,
                                                                                  index=False)
    candidate = read_candidate(str(path))
    np.testing.assert_allclose(candidate.values, x - t)
    with pytest.raises(InputError):
        read_candidate(str(tmp_path / "none.csv"))


# =================================================================================================
# Tests for `emit`
# =================================================================================================

def _grid():
    nan = np.full((1, 2), np.nan)
    return GridSolution(
        np.array([1.0]), np.array([[0.0], [0.5]]), np.array([[-0.5, -1.0]]), nan.copy(),
        nan[..., None], np.array([[False, True]]), np.array([[False, False]]),
    )


def test_emit_grid_csv(capsys):
    emit(_grid(), "csv")
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,x,value,p_t,p,singleton,failed"
    assert lines[1] == "1,0,-0.5,,,False,False"
    assert len(lines) == 3


def test_emit_solved_grid(tmp_path, problem_file):
    prob = load_problem(problem_file)
    path = tmp_path / "grid.csv"
    emit(solve_grid(prob, [0.5, 0.75, 1.0], [-1.0, 0.5, 1.0]), "csv", str(path))
    frame = pd.read_csv(path)
    np.testing.assert_allclose(frame["value"], -np.abs(frame["x"]) - frame["t"] / 2, atol=1e-9)


def test_emit_empty_frame(tmp_path):
    path = tmp_path / "empty.csv"
    emit(pd.DataFrame(columns=["t", "x", "value"]), "csv", str(path))
    assert path.read_text() == "t,x,value\n"


def test_emit_polylines(capsys):
    frame = pd.DataFrame({"curve": [0, 0, 1], "branch": ["sub", "sub", "super"],
                          "t": [0.0, 1.0, 1.0], "x": [0.0, 0.5, -0.5], "value": [0.0, 1.0, 2.0]})
    emit(frame, "csv")
    text = capsys.readouterr().out
    assert text.startswith("# curve 0\nbranch,t,x,value\n")
    assert "\n\n# curve 1\n" in text


def test_write_json_nulls_non_finite(tmp_path):
    path = tmp_path / "report.json"
    write_json({"b": np.inf, "a": np.array([1.0, np.nan]), "flag": np.bool_(True)}, str(path))
    text = path.read_text()
    assert json.loads(text) == {"a": [1.0, None], "b": None, "flag": True}
    assert text.index('"a"') < text.index('"b"')


def test_emit_errors():
    with pytest.raises(InputError):
        emit({}, "xml")
    with pytest.raises(InputError):
        emit({"a": 1}, "csv")

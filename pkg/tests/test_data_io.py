import json

import numpy as np
import pytest

from mixedsel import InvalidSpec, Params, ParseError, SchemaError
from mixedsel.data_io import build_report, read_csv, read_truth_json, write_csv, write_report_json, write_truth_json
from mixedsel.simulation import SyntheticSpec, generate, standard_normal


def assert_same_problem(a, b, tol=1e-12):
    assert a.m == b.m and a.p == b.p and a.q == b.q
    assert a.fixed_names == b.fixed_names and a.random_names == b.random_names
    for ga, gb in zip(a.groups, b.groups):
        for name in ("x_fixed", "z_random", "y", "obs_var"):
            np.testing.assert_allclose(getattr(ga, name), getattr(gb, name), rtol=tol, atol=tol)


# -------------------------------------------------------------- simulation

def test_default_spec_shapes():
    problem, truth = generate(SyntheticSpec())
    assert problem.m == 9 and problem.n == 78
    assert np.vstack([g.x_fixed for g in problem.groups]).shape == (78, 20)
    np.testing.assert_array_equal(truth.beta, np.r_[np.arange(1, 11) / 2, np.zeros(10)])
    assert all(np.all(g.obs_var == 0.09) for g in problem.groups)
    assert all(g.z_random is g.x_fixed or np.array_equal(g.z_random, g.x_fixed) for g in problem.groups)


def test_generation_is_deterministic():
    a, _ = generate(SyntheticSpec(seed=7))
    b, _ = generate(SyntheticSpec(seed=7))
    c, _ = generate(SyntheticSpec(seed=8))
    assert_same_problem(a, b, tol=0)
    assert not np.array_equal(a.groups[0].y, c.groups[0].y)


def test_zero_gamma_has_no_random_effect():
    spec = SyntheticSpec(p=2, q=2, true_beta=[1.0, -1.0], true_gamma=[0.0, 0.0], group_sizes=(4, 3), seed=3)
    problem, _ = generate(spec)
    rng = np.random.Generator(np.random.PCG64(3))
    for g in problem.groups:
        x = standard_normal(rng, g.x_fixed.shape)
        standard_normal(rng, 2)
        eps = 0.3 * standard_normal(rng, g.n)
        np.testing.assert_array_equal(g.x_fixed, x)
        np.testing.assert_allclose(g.y, x @ [1.0, -1.0] + eps, atol=1e-14)


def test_random_effect_variance():
    gamma = 2.0
    u = []
    for seed in range(200):
        spec = SyntheticSpec(p=1, q=1, true_beta=[0.0], true_gamma=[gamma], group_sizes=(3,), seed=seed)
        problem, _ = generate(spec)
        rng = np.random.Generator(np.random.PCG64(seed))
        np.testing.assert_array_equal(standard_normal(rng, (3, 1)), problem.groups[0].x_fixed)
        u_i = np.sqrt(gamma) * standard_normal(rng, 1)[0]
        eps = 0.3 * standard_normal(rng, 3)
        np.testing.assert_allclose(problem.groups[0].y, problem.groups[0].x_fixed[:, 0] * u_i + eps, atol=1e-13)
        u.append(u_i)
    se = gamma * np.sqrt(2.0 / (len(u) - 1))
    assert abs(np.var(u, ddof=1) - gamma) <= 3 * se


@pytest.mark.parametrize("kwargs", [dict(obs_std=0.0), dict(group_sizes=()), dict(group_sizes=(3, 0)),
                                    dict(true_gamma=-np.ones(20)), dict(p=3), dict(seed=-1)])
def test_invalid_spec(kwargs):
    with pytest.raises(InvalidSpec):
        SyntheticSpec(**kwargs)


# -------------------------------------------------------------------- CSV

def test_round_trip(tmp_path):
    problem, _ = generate(SyntheticSpec(seed=1))
    path = tmp_path / "p.csv"
    write_csv(problem, path)
    back = read_csv(path)
    assert_same_problem(problem, back)
    assert path.read_text().count("\n") == 79


def write(tmp_path, text):
    path = tmp_path / "d.csv"
    path.write_text(text)
    return path


def test_missing_target(tmp_path):
    with pytest.raises(SchemaError, match="target"):
        read_csv(write(tmp_path, "group,f_a\n1,2.0\n"))


def test_string_labels_first_appearance(tmp_path):
    text = "group,target,f_a,r_a\nsite_b,1,1,1\nsite_a,2,1,1\nsite_b,3,1,1\n01,4,1,1\n1,5,1,1\n"
    problem = read_csv(write(tmp_path, text))
    assert problem.group_labels == ("site_b", "site_a", "01", "1")
    np.testing.assert_array_equal(problem.groups[0].y, [1.0, 3.0])
    np.testing.assert_array_equal(problem.groups[0].obs_var, [1.0, 1.0])
    assert problem.fixed_names == ("a",) and problem.random_names == ("a",)


@pytest.mark.parametrize("text, match", [
    ("", "empty"),
    ("group,target,f_a,f_a\n1,1,1,1\n", "duplicate"),
    ("group,target,age\n1,1,1\n", "unknown"),
    ("group,target,f_a\n", "no data"),
    ("group,target,f_a\n1,1\n", "row 2"),
    ("group,target,f_a\n,1,1\n", "group"),
    ("group,target,obs_std,f_a\n1,1,0,1\n", "obs_std"),
])
def test_schema_errors(tmp_path, text, match):
    with pytest.raises(SchemaError, match=match):
        read_csv(write(tmp_path, text))


def test_require_random(tmp_path):
    with pytest.raises(SchemaError, match="r_"):
        read_csv(write(tmp_path, "group,target,f_a\n1,1,1\n"), require_random=True)


@pytest.mark.parametrize("cell", ["abc", "nan", "inf"])
def test_parse_errors(tmp_path, cell):
    with pytest.raises(ParseError, match=r"row 3, column 'f_a'"):
        read_csv(write(tmp_path, f"group,target,f_a\n1,1,1\n1,2,{cell}\n"))


# ------------------------------------------------------------------- JSON

def test_report_json(tmp_path):
    report = build_report({"solver": "pgd"}, Params([1.0, -0.0], [0.0, 2.0]), [True, False], [False, True],
                          12, False, np.nan, path=[{"hyper": {"lam": 0.1}, "ic": 3.0, "nnz_fixed": 1, "nnz_random": 1}])
    path = tmp_path / "r.json"
    write_report_json(report, path)
    data = json.loads(path.read_text())
    assert list(data) == ["config", "coefficients", "support", "path", "solver"]
    assert data["coefficients"] == {"beta": [1.0, 0.0], "gamma": [0.0, 2.0]}
    assert str(data["coefficients"]["beta"][1]) == "0.0"
    assert data["support"] == {"fixed": [True, False], "random": [False, True]}
    assert data["solver"] == {"iterations": 12, "converged": False, "final_residual": None}
    assert data["path"][0]["hyper"] == {"lam": 0.1}


def test_truth_json(tmp_path):
    path = tmp_path / "t.json"
    write_truth_json(Params([1.0, 0.0], [0.5]), path)
    truth = read_truth_json(path)
    np.testing.assert_array_equal(truth.beta, [1.0, 0.0])
    path.write_text("{}")
    with pytest.raises(ParseError):
        read_truth_json(path)

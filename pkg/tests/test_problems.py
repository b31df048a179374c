import numpy as np
import pytest

from cmokg.gp import matern52_matrix
from cmokg.problems import SyntheticProblem, evaluate, generate_problem, problem_filename


def test_family_hyperparameters():
    p1, p2 = generate_problem(1, 0), generate_problem(2, 0)
    assert p1.length_scale == (0.2, 1.8) and p1.output_scale == (1.0, 50.0)
    assert p1.constant_mean == (0.0, 0.0) and p1.noise_sd == (0.0, 0.0)
    assert p2.length_scale == (0.4, 0.4) and p2.output_scale == (1.0, 1.0) and p2.noise_sd == (1.0, 0.0)
    assert p1.costs == (1.0, 10.0)
    with pytest.raises(ValueError):
        generate_problem(3, 0)


def test_deterministic_and_seed_dependent():
    probe = np.random.default_rng(0).random((10, 2))
    a, b = generate_problem(1, 11), generate_problem(1, 11)
    assert np.array_equal(a.true_values(probe), b.true_values(probe))
    assert not np.array_equal(generate_problem(1, 12).true_values(probe), a.true_values(probe))


def test_conditioning_layout():
    p = generate_problem(2, 5)
    assert p.locations.shape == (100, 2) and p.values.shape == (100, 2)
    assert np.all((p.locations >= 0) & (p.locations < 1))


def test_interpolant_reproduces_conditioning_values():
    p = generate_problem(1, 3)
    err = np.abs(p.true_values(p.locations) - p.values) / np.array(p.output_scale)
    assert err.max() < 1e-3


def test_interpolant_is_posterior_mean():
    # independent dense solve of the generator posterior mean
    p = generate_problem(2, 8)
    xs = np.random.default_rng(1).random((6, 2))
    for m in range(2):
        K = matern52_matrix(p.locations, p.locations, p.length_scale[m], p.output_scale[m])
        K += 1e-6 * p.output_scale[m] * np.eye(100)
        mean = matern52_matrix(xs, p.locations, p.length_scale[m], p.output_scale[m]) @ np.linalg.solve(K, p.values[:, m])
        assert np.abs(p.true_values(xs)[:, m] - mean).max() < 1e-6 * p.output_scale[m]


def test_noiseless_evaluations_repeat():
    p1, p2 = generate_problem(1, 0), generate_problem(2, 0)
    x = np.array([0.3, 0.4])
    rng = np.random.default_rng(0)
    for m in (0, 1):
        assert evaluate(p1, x, m, rng) == evaluate(p1, x, m, rng)
    assert evaluate(p2, x, 1) == evaluate(p2, x, 1) == p2.true_values(x)[0, 1]


def test_family2_noise_sd():
    p = generate_problem(2, 0)
    x = np.array([0.6, 0.2])
    rng = np.random.default_rng(1)
    ys = np.array([evaluate(p, x, 0, rng) for _ in range(10_000)])
    assert 0.97 <= ys.std(ddof=1) <= 1.03
    with pytest.raises(ValueError):
        evaluate(p, x, 0)


def test_out_of_bounds():
    p = generate_problem(1, 0)
    with pytest.raises(ValueError):
        evaluate(p, [1.2, 0.5], 0)
    with pytest.raises(ValueError):
        evaluate(p, [0.5, 0.5], 2)


@pytest.mark.parametrize("family", [1, 2])
def test_smooth_on_dense_grid(family):
    p = generate_problem(family, 2)
    g = np.linspace(0, 1, 101)
    X = np.array([(a, b) for a in g for b in g])
    F = p.true_values(X).reshape(101, 101, 2)
    assert np.all(np.isfinite(F))
    h = g[1] - g[0]
    for m in range(2):
        d2 = np.abs(np.diff(F[:, :, m], 2, axis=0)).max() / h ** 2
        # Matern 5/2 means are twice differentiable; curvature scales as sd / l^2
        assert d2 < 50 * np.sqrt(p.output_scale[m]) / p.length_scale[m] ** 2


def test_roundtrip(tmp_path):
    p = generate_problem(2, 7)
    path = p.save(tmp_path / problem_filename(2, 7))
    assert path.name == "family2_seed7.problem"
    q = SyntheticProblem.load(path)
    probe = np.random.default_rng(3).random((10, 2))
    assert np.array_equal(q.true_values(probe), p.true_values(probe))
    assert q.dumps() == p.dumps()
    assert path.read_bytes() == q.dumps().encode()


def test_rejects_foreign_archive():
    d = generate_problem(1, 0).to_dict()
    with pytest.raises(ValueError):
        SyntheticProblem.from_dict({**d, "format": "other"})
    with pytest.raises(ValueError):
        SyntheticProblem.from_dict({**d, "version": 99})

import math
from fractions import Fraction

import numpy as np
import pytest

from tensorols.approx import Activation
from tensorols.distributions import MeasureSpec, sample_matrix
from tensorols.networks import NetworkParams, forward
from tensorols.tensorize import (FeatureBudgetError, Ordering, build_multiplicities,
                                 conv_index_map, conv_pair_features_batch, featurize)
from tensorols.tols import (Predictor, assemble, fit, lstsq_min_norm, mse, predict,
                            prime_power_design_exact, prime_power_inputs, read_matrix,
                            write_matrix)

UNIF = MeasureSpec.continuous_uniform()


def bareiss(rows):
    """Fraction-free exact determinant of an integer matrix."""
    a = [list(r) for r in rows]
    n, sign, prev = len(a), 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[-1][-1]


def test_bareiss_oracle_sanity():
    assert bareiss([[2, 1], [1, 3]]) == 5
    assert bareiss([[1, 2], [2, 4]]) == 0
    assert bareiss([[0, 1], [1, 0]]) == -1


def test_zero_sample_row():
    m = build_multiplicities(3, 2)
    D = assemble(np.zeros((1, 3)), m)
    e = np.zeros(len(m))
    e[m.zero_position] = 1
    np.testing.assert_array_equal(D.data[0], e)


def test_zero_index_column_is_ones():
    m = build_multiplicities(2, 3)
    D = assemble(sample_matrix(UNIF, 9, 2, 0), m)
    assert np.all(D.data[:, m.zero_position] == 1)
    assert D.column_means[m.zero_position] == 1


@pytest.mark.parametrize("d,M", [(1, 4), (2, 2), (2, 4), (3, 1), (3, 4)])
def test_prime_power_design_invertible(d, M):
    m = build_multiplicities(d, M)
    exact = prime_power_design_exact(m)
    assert bareiss(exact) != 0
    D = assemble(prime_power_inputs(d, len(m)), m)
    # float design holds the same integers (exactly while they fit in 53 bits)
    small = [i for i in range(len(m)) if max(exact[i]) < 2 ** 53]
    np.testing.assert_array_equal(D.data[small], np.array([exact[i] for i in small], dtype=float))


@pytest.mark.parametrize("seed", range(20))
def test_square_random_design_full_rank(seed):
    m = build_multiplicities(3, 2)
    D = assemble(sample_matrix(UNIF, len(m), 3, seed), m)
    assert np.linalg.matrix_rank(D.data) == len(m)


def test_planted_coefficients_recovered():
    m = build_multiplicities(3, 3)
    D = assemble(sample_matrix(UNIF, 80, 3, 4), m)
    t = np.random.default_rng(4).standard_normal(len(m))
    p = fit(D, D.data @ t)
    assert np.max(np.abs(p.coeffs - t)) <= 1e-8 * np.max(np.abs(t))
    assert p.diagnostics["rank"] == len(m)


def test_constant_target_normal_equations():
    A = [[1, 0.5, -0.25], [1, -1, 0.5], [1, 0.25, 1], [1, 0.75, -1], [1, -0.5, 0]]
    c = 2.5
    # exact normal-equations solve in rationals
    F = [[Fraction(v) for v in r] for r in A]
    G = [[sum(F[k][i] * F[k][j] for k in range(5)) for j in range(3)] for i in range(3)]
    b = [sum(F[k][i] * Fraction(c) for k in range(5)) for i in range(3)]
    for i in range(3):
        for r in range(i + 1, 3):
            f = G[r][i] / G[i][i]
            G[r] = [x - f * y for x, y in zip(G[r], G[i])]
            b[r] -= f * b[i]
    sol = [Fraction(0)] * 3
    for i in (2, 1, 0):
        sol[i] = (b[i] - sum(G[i][j] * sol[j] for j in range(i + 1, 3))) / G[i][i]
    assert sol == [Fraction(c), 0, 0]
    coeffs, _ = lstsq_min_norm(np.array(A), np.full(5, c))
    np.testing.assert_allclose(coeffs, [float(s) for s in sol], atol=1e-14)


def test_constant_target_on_monomial_design():
    m = build_multiplicities(2, 2)
    p = fit(assemble(sample_matrix(UNIF, 30, 2, 1), m), np.full(30, -0.7))
    expected = np.zeros(len(m))
    expected[m.zero_position] = -0.7
    np.testing.assert_allclose(p.coeffs, expected, atol=1e-12)


def test_minimum_norm_on_rank_deficient_system():
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    coeffs, diag = lstsq_min_norm(A, np.array([2.0, 4.0]))
    np.testing.assert_allclose(coeffs, [1.0, 1.0])
    assert diag["rank"] == 1 and diag["tie_break"] == "minimum-norm"


def test_predict_unit_bias():
    m = build_multiplicities(3, 2)
    c = np.zeros(len(m))
    c[m.zero_position] = 1
    p = Predictor(m, c)
    assert predict(p, [0.3, -0.2, 0.9]) == 1.0


def test_predict_matches_direct_polynomial():
    m = build_multiplicities(2, 3)
    t = np.random.default_rng(0).standard_normal(len(m))
    x = np.array([0.4, -0.8])
    direct = sum(c * x[0] ** a[0] * x[1] ** a[1] for c, a in zip(t, m))
    assert predict(Predictor(m, t), x) == pytest.approx(direct, abs=1e-12)


def test_predict_dimension_mismatch():
    m = build_multiplicities(2, 1)
    with pytest.raises(ValueError):
        predict(Predictor(m, np.zeros(len(m))), [1.0, 2.0, 3.0])


def test_fitted_square_network_hand_value():
    net = NetworkParams((np.eye(2),), np.array([0.6, 0.4]), Activation.polynomial([0, 0, 1]))
    m = build_multiplicities(2, 2)
    xs = sample_matrix(UNIF, 12, 2, 3)
    p = fit(assemble(xs, m), forward(net, xs))
    assert predict(p, [0.5, -1]) == pytest.approx(0.55, abs=1e-6)


def test_mse_zero_cases():
    m = build_multiplicities(2, 2)
    p = Predictor(m, np.random.default_rng(1).standard_normal(len(m)))
    est = mse(p, lambda x: predict(p, x), UNIF, 500, 0)
    assert est.mean == 0 and est.n == 500
    net = NetworkParams((np.eye(2),), np.array([0.6, 0.4]), Activation.polynomial([0, 0, 1]))
    xs = sample_matrix(UNIF, 6, 2, 8)
    fitted = fit(assemble(xs, m), forward(net, xs))
    assert mse(fitted, lambda x: forward(net, x), UNIF, 1000, 1).mean <= 1e-12


def test_budget_guard():
    m = build_multiplicities(3, 2)
    with pytest.raises(FeatureBudgetError):
        assemble(np.zeros((100, 3)), m, budget=500)


@pytest.mark.parametrize("trial", range(10))
def test_solver_invariants(trial):
    rng = np.random.default_rng(100 + trial)
    A = rng.standard_normal((200, 50))
    y = rng.standard_normal(200)
    c, _ = lstsq_min_norm(A, y)
    assert np.max(np.abs(A.T @ (y - A @ c))) <= 1e-8 * np.linalg.norm(y)
    c3, _ = lstsq_min_norm(A, 3.7 * y)
    assert np.max(np.abs(c3 - 3.7 * c)) <= 1e-10 * np.max(np.abs(3.7 * c))
    perm = rng.permutation(200)
    cp, _ = lstsq_min_norm(A[perm], y[perm])
    assert np.max(np.abs(cp - c)) <= 1e-10 * np.max(np.abs(c))


def test_duplicated_conv_columns_share_coefficients():
    rng = np.random.default_rng(5)
    imap = conv_index_map(4, 4, 2)
    F = conv_pair_features_batch(rng.uniform(0, 1, (40, 4, 4)), imap)
    coeffs, diag = lstsq_min_norm(F, rng.standard_normal(40))
    assert diag["rank"] < F.shape[1]
    lookup = {tuple(pq): 1 + 16 + k for k, pq in enumerate(imap.pairs.tolist())}
    scale = np.max(np.abs(coeffs))
    for (p, q), k in lookup.items():
        if p != q:
            assert abs(coeffs[k] - coeffs[lookup[(q, p)]]) <= 1e-10 * scale


def test_predictor_json_round_trip(tmp_path):
    m = build_multiplicities(3, 2, 3, Ordering.GRADED_ASCENDING)
    p = Predictor(m, np.arange(len(m), dtype=float), {"rank": 3})
    p.save(tmp_path / "p.json")
    q = Predictor.load(tmp_path / "p.json")
    assert q.mset == m and np.array_equal(q.coeffs, p.coeffs) and q.diagnostics == {"rank": 3}


def test_matrix_dump_round_trip_and_layout(tmp_path):
    A = np.arange(6, dtype=float).reshape(2, 3)
    write_matrix(tmp_path / "a.bin", A)
    raw = (tmp_path / "a.bin").read_bytes()
    assert raw[:8] == b"TOLSMAT1"
    assert int.from_bytes(raw[8:16], "little") == 2 and int.from_bytes(raw[16:24], "little") == 3
    # column-major: first column (0, 3) comes first
    assert np.frombuffer(raw[24:40], "<f8").tolist() == [0.0, 3.0]
    np.testing.assert_array_equal(read_matrix(tmp_path / "a.bin"), A)
    (tmp_path / "b.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_matrix(tmp_path / "b.bin")
    (tmp_path / "c.bin").write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ValueError):
        read_matrix(tmp_path / "c.bin")

"""Acceptance criteria 1-10, one test per criterion.

Each check returns ``(status, detail)`` with status ``PASS``, ``FAIL`` or
``SKIP``. Under pytest a summary line per criterion is printed at the end of
the session; ``python tests/test_acceptance.py`` prints the same lines directly.
"""

import itertools
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import sympy as sp

from tensorols.approx import Activation, approximate, certification_grid
from tensorols.cli.config import parse_config
from tensorols.cli.experiments import covering_probability_exact, run_experiment
from tensorols.distributions import MeasureSpec, exact_moments, sample_matrix, support_cardinality
from tensorols.imaging import ImageDataset, train_batched
from tensorols.networks import forward, random_teacher
from tensorols.orthopoly import build_basis, decompose
from tensorols.tensorize import build_multiplicities, conv_pair_features, full_count
from tensorols.tols import assemble, fit, lstsq_min_norm, predict, prime_power_design_exact

sys.path.insert(0, str(Path(__file__).parent))
from conftest import find_idx_set  # noqa: E402

RAD = MeasureSpec.rademacher()
TRI = MeasureSpec.discrete_uniform([-1, 0, 1])
W2 = MeasureSpec.discrete_weighted([-1, 1], [0.3, 0.7])
UNIF = MeasureSpec.continuous_uniform()
MEASURES = {"rademacher": RAD, "uniform{-1,0,1}": TRI, "two-point(0.3,0.7)": W2}

PASS, FAIL, SKIP = "PASS", "FAIL", "SKIP"


def _verdict(ok):
    return PASS if ok else FAIL


def _expect(spec, fn):
    return math.fsum(w * fn(x) for x, w in zip(spec.support, spec.weights))


def check_1():
    worst = 0.0
    for spec in MEASURES.values():
        b = build_basis(spec, 4)
        if not np.all(b.hankel > 0):
            return FAIL, "non-positive Hankel determinant"
        n = b.order + 1
        for i, j in itertools.product(range(n), repeat=2):
            g = _expect(spec, lambda x: b.evaluate(i, x) * b.evaluate(j, x))
            worst = max(worst, abs(g - (i == j)))
            if i < j:
                worst = max(worst, abs(_expect(spec, lambda x: x ** i * b.evaluate(j, x))))
        for i in range(n):
            target = math.sqrt(b.hankel[i] / (b.hankel[i - 1] if i else 1.0))
            worst = max(worst, abs(_expect(spec, lambda x: x ** i * b.evaluate(i, x)) - target))
    return _verdict(worst <= 1e-10), f"worst deviation {worst:.2e} (tol 1e-10)"


def check_2():
    worst_rec, worst_det, failures = 0.0, 0.0, []
    for name, spec in MEASURES.items():
        for d in range(1, 5):
            for k in range(0, 4):
                mset = build_multiplicities(d, k, support_cardinality(spec))
                dec = decompose(spec, mset)
                worst_rec = max(worst_rec, float(np.max(np.abs(dec.Sigma - dec.reconstruct()))))
                worst_det = max(worst_det, abs(float(np.linalg.det(dec.V)) - 1))
                ev = np.linalg.eigvalsh(dec.Sigma)
                b = dec.bounds
                if not (ev[0] >= b.lambda_min_lb and ev[-1] <= b.lambda_max_ub):
                    failures.append(f"{name} d={d} k={k} sandwich")
                if d == 4 and not ev[-1] / ev[0] <= b.kappa_ub:
                    failures.append(f"{name} d={d} k={k} kappa")
    ok = worst_rec <= 1e-9 and worst_det <= 1e-9 and not failures
    detail = f"max|Sigma-VDV^T| {worst_rec:.1e}, max|det V - 1| {worst_det:.1e}"
    return _verdict(ok), detail + (f"; violations {failures}" if failures else "; all bounds hold")


def _sympy_expansion(teacher, xs):
    h = list(xs)
    for w in teacher.weights:
        h = [sum(sp.Rational(float(wj)) * hj for wj, hj in zip(row, h)) ** 2 for row in w]
    return sp.Poly(sp.expand(sum(sp.Rational(float(a)) * hj for a, hj in zip(teacher.a, h))), *xs)


def check_3():
    d, m = 3, 4
    act = Activation.polynomial([0, 0, 1])
    xs = sp.symbols(f"x1:{d + 1}")
    worst_err, worst_coef = 0.0, 0.0
    for L in (1, 2):
        M = 2 ** L
        mset = build_multiplicities(d, M)
        N = full_count(d, M)
        for seed in range(20):
            teacher = random_teacher(d, L, m, act, seed)
            x = sample_matrix(UNIF, N, d, seed, 1)
            pred = fit(assemble(x, mset), forward(teacher, x))
            xt = sample_matrix(UNIF, 1000, d, seed, 2)
            worst_err = max(worst_err, float(np.max(np.abs(predict(pred, xt) - forward(teacher, xt)))))
            poly = _sympy_expansion(teacher, xs)
            truth = np.array([float(poly.coeff_monomial(math.prod(v ** e for v, e in zip(xs, a))))
                              for a in mset])
            rel = float(np.max(np.abs(pred.coeffs - truth)) / np.max(np.abs(truth)))
            worst_coef = max(worst_coef, rel)
    ok = worst_err <= 1e-6 and worst_coef <= 1e-6
    return _verdict(ok), f"worst max error {worst_err:.1e}, worst coefficient rel. error {worst_coef:.1e}"


def _bareiss_det(rows):
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


def check_4():
    sizes = []
    for d in (1, 2, 3):
        for M in sorted({k ** L for k in range(1, 5) for L in range(1, 4) if k ** L <= 4}):
            mset = build_multiplicities(d, M)
            if _bareiss_det(prime_power_design_exact(mset)) == 0:
                return FAIL, f"singular design at d={d}, k^L={M}"
            sizes.append(len(mset))
    return PASS, f"{len(sizes)} designs, sizes up to {max(sizes)}x{max(sizes)}, all |det| > 0"


def check_5():
    relu, sig = Activation.relu(), Activation.sigmoid()
    grid = certification_grid()
    r = approximate(relu, 0.1)
    vals = r(grid)
    ok_relu = r.achieved_sup_error <= 0.1 and r.degree <= 40 and vals.min() >= 0 and vals.max() <= 1
    s = approximate(sig, 0.01)
    ok_sig = s.achieved_sup_error <= 0.01 and s.degree <= 30
    eps_r = [0.4, 0.2, 0.1, 0.05, 0.025, 0.01]
    deg_r = [approximate(relu, e).degree for e in eps_r]
    eps_s = [0.1, 0.01, 1e-3, 1e-4]
    deg_s = [approximate(sig, e).degree for e in eps_s]
    mono = all(a <= b for a, b in zip(deg_r, deg_r[1:])) and all(a <= b for a, b in zip(deg_s, deg_s[1:]))
    # growth exponent of degree in 1/eps, fitted on log-log axes
    slope_r = np.polyfit(np.log(1 / np.array(eps_r[:4])), np.log(deg_r[:4]), 1)[0]
    slope_s = np.polyfit(np.log(1 / np.array(eps_s)), np.log(deg_s), 1)[0]
    orders = 0.5 <= slope_r <= 1.5 and slope_s < slope_r and slope_s < 1
    ok = ok_relu and ok_sig and mono and orders
    return _verdict(ok), (f"relu eps=0.1 deg {r.degree} err {r.achieved_sup_error:.3f}; "
                          f"sigmoid eps=0.01 deg {s.degree} err {s.achieved_sup_error:.4f}; "
                          f"relu degrees {deg_r}, slope {slope_r:.2f}; sigmoid degrees {deg_s}, "
                          f"slope {slope_s:.2f}")


def check_6():
    rep = run_experiment(parse_config({"kind": "GeneralizeAdmissible"}), write=False)
    s = rep.summary
    ok = s["inversions"] <= 1 and s["final_median_mse"] <= 0.05
    med = ", ".join(f"{v:.2e}" for v in s["median_mse"])
    return _verdict(ok), f"M={s['M']} |C|={s['features']} medians [{med}], inversions {s['inversions']}"


def check_7():
    rep = run_experiment(parse_config({"kind": "TeacherStudent"}), write=False)
    s = rep.summary
    ok = s["max_prediction_gap"] <= 1e-10 and s["max_mse_spread_across_widths"] == 0.0
    widths = sorted({r[1] for r in rep.rows})
    return _verdict(ok), (f"widths {widths}, max prediction gap {s['max_prediction_gap']:.1e}, "
                          f"mse spread across widths {s['max_mse_spread_across_widths']:.1e}")


def check_8():
    cfg = parse_config({"kind": "CoveringEvent", "d": 2, "N": 64, "trials": 200})
    freq = run_experiment(cfg, write=False).summary["frequency"]
    exact = covering_probability_exact(2, 64)
    # bar 0.9 with the documented Monte Carlo tolerance of 0.05
    ok = freq >= 0.9 - 0.05
    return _verdict(ok), f"frequency {freq:.3f} over 200 trials; exact probability {exact:.4f}; bar 0.9"


def _accuracy_on(env_var, bar):
    paths = find_idx_set(env_var)
    if paths is None:
        return None
    train = ImageDataset.from_idx(paths["train_images"], paths["train_labels"])
    test = ImageDataset.from_idx(paths["test_images"], paths["test_labels"])
    clf = train_batched(train, 50, 1000, seed=0, r=2)
    acc = clf.accuracy(test)
    return acc >= bar, acc


def check_9():
    feats, imap = conv_pair_features(np.zeros((28, 28)), r=2)
    count_ok = imap.n_nonbias == 18740 and feats.shape == (18741,)
    parts, statuses = [f"non-bias features {imap.n_nonbias}"], [count_ok]
    for env, label, bar in (("TENSOROLS_MNIST_DIR", "MNIST", 0.929),
                            ("TENSOROLS_FASHION_DIR", "Fashion-MNIST", 0.841)):
        res = _accuracy_on(env, bar)
        if res is None:
            parts.append(f"{label} accuracy not checked (set {env})")
            statuses.append(None)
        else:
            parts.append(f"{label} accuracy {res[1]:.4f} (bar {bar})")
            statuses.append(res[0])
    if not all(s is not False for s in statuses):
        return FAIL, "; ".join(parts)
    return (SKIP if None in statuses else PASS), "; ".join(parts)


def check_10():
    rng = np.random.default_rng(2024)
    worst_orth = worst_scale = worst_perm = 0.0
    for _ in range(50):
        A = rng.standard_normal((200, 50))
        y = rng.standard_normal(200)
        beta, _ = lstsq_min_norm(A, y)
        worst_orth = max(worst_orth, float(np.linalg.norm(A.T @ (y - A @ beta)) / np.linalg.norm(y)))
        c = rng.uniform(-10, 10)
        beta_c, _ = lstsq_min_norm(A, c * y)
        worst_scale = max(worst_scale, float(np.max(np.abs(beta_c - c * beta)) / (abs(c) * np.max(np.abs(beta)))))
        p = rng.permutation(200)
        beta_p, _ = lstsq_min_norm(A[p], y[p])
        worst_perm = max(worst_perm, float(np.max(np.abs(beta_p - beta)) / np.max(np.abs(beta))))
    ok = worst_orth <= 1e-8 and worst_scale <= 1e-10 and worst_perm <= 1e-10
    return _verdict(ok), (f"|A^T r|/|y| {worst_orth:.1e}, scale {worst_scale:.1e}, "
                          f"permutation {worst_perm:.1e}")


CHECKS = {
    1: ("orthogonal polynomial exactness", check_1),
    2: ("Sigma decomposition and eigenvalue bounds", check_2),
    3: ("exact learning of polynomial networks", check_3),
    4: ("prime-power design is nonsingular", check_4),
    5: ("activation approximation", check_5),
    6: ("generalization trend", check_6),
    7: ("teacher/student width independence", check_7),
    8: ("covering event frequency", check_8),
    9: ("image pipeline", check_9),
    10: ("solver properties", check_10),
}


def evaluate(n):
    title, fn = CHECKS[n]
    t0 = time.perf_counter()
    status, detail = fn()
    return f"[{status}] criterion {n:2d} {title}: {detail} ({time.perf_counter() - t0:.1f}s)", status


def _run(n, acceptance_log):
    line, status = evaluate(n)
    acceptance_log.append(line)
    if status == SKIP:
        pytest.skip(line)
    assert status == PASS, line


def test_criterion_01_orthopoly_exactness(acceptance_log):
    _run(1, acceptance_log)


def test_criterion_02_sigma_decomposition(acceptance_log):
    _run(2, acceptance_log)


def test_criterion_03_exact_polynomial_learning(acceptance_log):
    _run(3, acceptance_log)


def test_criterion_04_prime_power_design(acceptance_log):
    _run(4, acceptance_log)


def test_criterion_05_activation_approximation(acceptance_log):
    _run(5, acceptance_log)


def test_criterion_06_generalization_trend(acceptance_log):
    _run(6, acceptance_log)


def test_criterion_07_width_independence(acceptance_log):
    _run(7, acceptance_log)


def test_criterion_08_covering_event(acceptance_log):
    _run(8, acceptance_log)


def test_criterion_09_image_pipeline(acceptance_log):
    _run(9, acceptance_log)


def test_criterion_10_solver_properties(acceptance_log):
    _run(10, acceptance_log)


if __name__ == "__main__":
    results = []
    for n in CHECKS:
        line, status = evaluate(n)
        print(line, flush=True)
        results.append(status)
    sys.exit(0 if FAIL not in results else 1)

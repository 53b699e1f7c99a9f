"""Runnable experiments. Each ``run_*`` returns a :class:`Report`."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..approx import Activation, degree_schedule
from ..distributions import MeasureSpec, make_rng, sample_matrix, support_cardinality
from ..imaging import ImageDataset, StackedClassifier, gaussian_noise, patch_noise, train_batched
from ..networks import (NetworkParams, RowNorm, cancellation_student, embed_student, forward,
                        homogeneous_rescale, polynomial_expansion, random_teacher,
                        self_regularization_bound)
from ..orthopoly import eigen_bounds, sigma_exact
from ..tensorize import build_multiplicities, full_count
from ..tols import assemble, fit, mse, predict
from .config import ExperimentConfig, ExperimentKind, version_string


@dataclass
class Report:
    columns: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def write(self, cfg: ExperimentConfig, out=None) -> Path:
        out = Path(out or cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        snapshot = dict(cfg.resolved(), version=version_string())
        (out / "config.resolved.json").write_text(json.dumps(snapshot, indent=2))
        with open(out / "results.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_fmt(v) for v in row])
        (out / "summary.json").write_text(json.dumps(self.summary, indent=2, default=_json_default))
        return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _pmap(fn, items, workers: int):
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(fn, items))


def _activation(spec) -> Activation:
    return Activation.from_dict(spec)


def count_inversions(values) -> int:
    """Number of consecutive increases in a sequence that should not increase."""
    return int(sum(b > a for a, b in zip(values, values[1:])))


# polynomial networks ------------------------------------------------------

def run_exact_poly(cfg: ExperimentConfig) -> Report:
    """Fit polynomial-activation teachers from exactly ``|C|`` samples and check recovery."""
    d, L, m = cfg["d"], cfg["L"], cfg["m"]
    act = _activation(cfg["activation"])
    spec = cfg.measure()
    M = act.poly_degree ** L
    mset = build_multiplicities(d, M, support_cardinality(spec))
    N = full_count(d, M)

    def trial(i):
        seed = cfg.seed + i
        teacher = random_teacher(d, L, m, act, seed)
        xs = sample_matrix(spec, N, d, seed, 1)
        pred = fit(assemble(xs, mset), forward(teacher, xs))
        xt = sample_matrix(spec, cfg["n_test"], d, seed, 2)
        ft = forward(teacher, xt)
        max_err = float(np.max(np.abs(predict(pred, xt) - ft)))
        expansion = polynomial_expansion(teacher)
        truth = np.array([expansion.get(a, 0.0) for a in mset])
        coef_err = float(np.max(np.abs(pred.coeffs - truth)) / max(np.max(np.abs(truth)), 1e-300))
        student = embed_student(teacher, cfg["student_factor"] * m)
        student_gap = float(np.max(np.abs(forward(student, xt) - ft)))
        return [seed, N, len(mset), pred.diagnostics["rank"], max_err, coef_err, student_gap]

    rows = _pmap(trial, range(cfg["seeds"]), cfg.workers)
    errs = [r[4] for r in rows]
    return Report(
        ["seed", "N", "features", "rank", "max_error", "coef_rel_error", "student_gap"], rows,
        {"M": M, "features": len(mset), "N": N, "worst_max_error": max(errs),
         "worst_coef_rel_error": max(r[5] for r in rows),
         "worst_student_gap": max(r[6] for r in rows)})


# admissible activations ---------------------------------------------------

def _schedule_degree(cfg: ExperimentConfig, act: Activation) -> int:
    if cfg.params.get("M") is not None:
        return int(cfg["M"])
    return degree_schedule(act, cfg["L"], float(cfg["epsilon"]), cfg["layer_budget"]).M


def run_generalize(cfg: ExperimentConfig) -> Report:
    """Generalization error of the fitted predictor across a grid of sample sizes."""
    d, L, m = cfg["d"], cfg["L"], cfg["m"]
    act = _activation(cfg["activation"])
    spec = cfg.measure()
    M = _schedule_degree(cfg, act)
    mset = build_multiplicities(d, M, support_cardinality(spec))
    grid = [k * len(mset) for k in cfg["n_multipliers"]]
    jobs = [(i, N) for i in range(cfg["seeds"]) for N in grid]
    student_width = cfg.params.get("student_width")

    def trial(job):
        i, N = job
        seed = cfg.seed + i
        teacher = random_teacher(d, L, m, act, seed)
        xs = sample_matrix(spec, N, d, seed, 1)
        pred = fit(assemble(xs, mset), forward(teacher, xs))
        est = mse(pred, lambda x: forward(teacher, x), spec, cfg["n_test"], seed, stream=2)
        row = [seed, N, M, len(mset), est.mean, est.stderr]
        if student_width:
            student = embed_student(teacher, student_width)
            est_s = mse(pred, lambda x: forward(student, x), spec, cfg["n_test"], seed, stream=2)
            xt = sample_matrix(spec, cfg["n_test"], d, seed, 2)
            gap = float(np.mean((forward(teacher, xt) - forward(student, xt)) ** 2))
            row += [est_s.mean, 2 * (est.mean + est_s.mean), gap]
        return row

    rows = _pmap(trial, jobs, cfg.workers)
    medians = [float(np.median([r[4] for r in rows if r[1] == N])) for N in grid]
    cols = ["seed", "N", "M", "features", "mse", "stderr"]
    if student_width:
        cols += ["mse_student", "triangle_bound", "teacher_student_gap"]
    return Report(cols, rows, {
        "M": M, "features": len(mset), "N_grid": grid, "median_mse": medians,
        "inversions": count_inversions(medians), "final_median_mse": medians[-1]})


def run_teacher_student(cfg: ExperimentConfig) -> Report:
    """Fit on data labelled by zero-padded students of several widths."""
    d, L, m = cfg["d"], cfg["L"], cfg["m"]
    act = _activation(cfg["activation"])
    spec = cfg.measure()
    M = _schedule_degree(cfg, act)
    mset = build_multiplicities(d, M, support_cardinality(spec))
    N = cfg["n_multiplier"] * len(mset)

    def trial(i):
        seed = cfg.seed + i
        teacher = random_teacher(d, L, m, act, seed)
        xs = sample_matrix(spec, N, d, seed, 1)
        xt = sample_matrix(spec, cfg["n_test"], d, seed, 2)
        ft = forward(teacher, xt)
        out = []
        for factor in cfg["width_factors"]:
            student = embed_student(teacher, factor * m)
            gap = float(np.max(np.abs(forward(student, xt) - ft)))
            pred = fit(assemble(xs, mset), forward(student, xs))
            est = mse(pred, lambda x: forward(teacher, x), spec, cfg["n_test"], seed, stream=2)
            out.append([seed, factor * m, gap, est.mean, est.stderr])
        return out

    rows = [r for block in _pmap(trial, range(cfg["seeds"]), cfg.workers) for r in block]
    by_seed = {}
    for r in rows:
        by_seed.setdefault(r[0], []).append(r[3])
    spread = max(max(v) - min(v) for v in by_seed.values())
    return Report(["seed", "width", "prediction_gap", "mse", "stderr"], rows, {
        "M": M, "N": N, "max_prediction_gap": max(r[2] for r in rows),
        "max_mse_spread_across_widths": spread})


# covering and self-regularization ------------------------------------------

def default_covering_samples(d: int) -> int:
    return math.ceil(math.exp(3 * d * math.log(d)))


def covering_hits(xs: np.ndarray) -> bool:
    """True when every ``+-e_i`` has a row within l2 distance ``1/(4d)``."""
    d = xs.shape[1]
    radius = 1.0 / (4 * d)
    for i in range(d):
        for sign in (1.0, -1.0):
            target = np.zeros(d)
            target[i] = sign
            if not np.any(np.linalg.norm(xs - target, axis=1) < radius):
                return False
    return True


def covering_probability_exact(d: int, N: int) -> float:
    """Probability of the covering event for ``N`` uniform samples on ``[-1, 1]^d``.

    Each target sits on a cube face, so its neighbourhood inside the cube is a
    half ball; the ``2d`` neighbourhoods are disjoint and inclusion-exclusion is exact.
    """
    radius = 1.0 / (4 * d)
    half_ball = 0.5 * math.pi ** (d / 2) * radius ** d / math.gamma(d / 2 + 1)
    q = half_ball / 2 ** d
    return math.fsum((-1) ** j * math.comb(2 * d, j) * (1 - j * q) ** N for j in range(2 * d + 1))


def covering_frequency(spec: MeasureSpec, d: int, N: int, trials: int, seed: int, workers=1):
    hits = _pmap(lambda t: covering_hits(sample_matrix(spec, N, d, seed, 1000 + t)),
                 range(trials), workers)
    return float(np.mean(hits))


def run_covering(cfg: ExperimentConfig) -> Report:
    d = cfg["d"]
    N = cfg["N"] or default_covering_samples(d)
    freq = covering_frequency(cfg.measure(), d, N, cfg["trials"], cfg.seed, cfg.workers)
    exact = covering_probability_exact(d, N) if cfg.measure() == MeasureSpec.continuous_uniform() else None
    return Report(["d", "N", "trials", "frequency", "exact_probability"],
                  [[d, N, cfg["trials"], freq, exact]],
                  {"frequency": freq, "exact_probability": exact, "N": N})


def run_self_regularization(cfg: ExperimentConfig) -> Report:
    """Covering frequency plus the output-norm bound on constructed interpolants."""
    d, m, kappa = cfg["d"], cfg["m"], cfg["kappa"]
    cov = run_covering(cfg)
    act = Activation.relu() if kappa == 1 else Activation.polynomial([0] * kappa + [1])
    teacher = random_teacher(d, 1, m, act, cfg.seed, norm=RowNorm.L1_ROWS, nonneg_output=True)
    wide = embed_student(teacher, cfg["student_factor"] * m)
    split_w = np.vstack([teacher.weights[0], teacher.weights[0]])
    split = NetworkParams((split_w,), np.concatenate([teacher.a, teacher.a]) / 2, act)
    v = make_rng(cfg.seed, 7).standard_normal(d)
    family = [
        ("embedded", wide, True),
        ("embedded_rescaled", homogeneous_rescale(wide, kappa), True),
        ("split", split, True),
        ("cancellation", cancellation_student(teacher, cfg["z"], v, cfg["nu"]), False),
    ]
    bound = self_regularization_bound(d, kappa, teacher.output_l1)
    xt = sample_matrix(cfg.measure(), 1000, d, cfg.seed, 3)
    ft = forward(teacher, xt)
    rows = []
    for name, net, nonneg in family:
        gap = float(np.max(np.abs(forward(net, xt) - ft)))
        rows.append([name, net.width, nonneg, net.output_l1, bound, net.output_l1 <= bound, gap])
    return Report(["student", "width", "nonneg_output", "output_l1", "bound", "within_bound",
                   "prediction_gap"], rows, dict(cov.summary, teacher_l1=teacher.output_l1))


# condition numbers ---------------------------------------------------------

def condnum_row(spec: MeasureSpec, d: int, k: int) -> dict:
    mset = build_multiplicities(d, k, support_cardinality(spec))
    ev = np.linalg.eigvalsh(sigma_exact(spec, mset))
    b = eigen_bounds(spec, k, d)
    return {"d": d, "k": k, "lambda_min": float(ev[0]), "lb": b.lambda_min_lb,
            "lambda_max": float(ev[-1]), "ub": b.lambda_max_ub,
            "kappa": float(ev[-1] / ev[0]), "kappa_ub": b.kappa_ub,
            "kappa_claimed": b.kappa_claim_applies, "c": b.c, "f": b.f, "C": b.C,
            "features": len(mset)}


def run_condnumber(cfg: ExperimentConfig) -> Report:
    rows = []
    for mcfg in cfg["measures"]:
        spec = MeasureSpec.from_config(mcfg)
        for d in cfg["d"]:
            for k in cfg["k"]:
                r = condnum_row(spec, d, k)
                rows.append([r["d"], r["k"], r["lambda_min"], r["lb"], r["lambda_max"], r["ub"],
                             r["kappa"], r["kappa_ub"], json.dumps(mcfg, sort_keys=True),
                             r["kappa_claimed"]])
    ok = all(r[2] >= r[3] and r[4] <= r[5] and (not r[9] or r[6] <= r[7]) for r in rows)
    return Report(["d", "k", "lambda_min", "lb", "lambda_max", "ub", "kappa", "ub",
                   "measure", "kappa_claimed"], rows, {"all_bounds_hold": ok})


# images --------------------------------------------------------------------

def _load_split(cfg, prefix) -> ImageDataset:
    return ImageDataset.from_idx(cfg[f"{prefix}_images"], cfg[f"{prefix}_labels"])


def run_mnist(cfg: ExperimentConfig) -> Report:
    train, test = _load_split(cfg, "train"), _load_split(cfg, "test")
    clf = train_batched(train, cfg["n_batches"], cfg["batch_size"], cfg.seed, cfg["r"],
                        workers=cfg.workers)
    rows = []
    if cfg["curve"]:
        for i in range(clf.n_batches):
            rows.append([i + 1, clf.batch_classifier(i).accuracy(test),
                         clf.cumulative_classifier(i + 1).accuracy(test)])
    final = clf.accuracy(test)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    clf.save(out / "model.npz")
    return Report(["batches", "batch_accuracy", "cumulative_accuracy"], rows, {
        "test_accuracy": final, "features_nonbias": clf.index_map.n_nonbias,
        "n_batches": cfg["n_batches"], "batch_size": cfg["batch_size"]})


def noise_sweep(clf: StackedClassifier, test: ImageDataset, sigmas, areas, seed: int) -> list:
    rows = []
    for s in sigmas:
        noisy = np.stack([gaussian_noise(img, s, seed, i) for i, img in enumerate(test.images)])
        rows.append(["gaussian", s, float(np.mean(clf.predict(noisy) == test.labels))])
    for a in areas:
        if a == 0:
            noisy = test.images
        else:
            noisy = np.stack([patch_noise(img, a, seed, stream=i) for i, img in enumerate(test.images)])
        rows.append(["patch", a, float(np.mean(clf.predict(noisy) == test.labels))])
    return rows


def run_noise(cfg: ExperimentConfig) -> Report:
    test = _load_split(cfg, "test")
    if cfg["n_eval"]:
        test = test.subset(np.arange(min(cfg["n_eval"], len(test))))
    if cfg["model"]:
        clf = StackedClassifier.load(cfg["model"])
    else:
        clf = train_batched(_load_split(cfg, "train"), cfg["n_batches"], cfg["batch_size"],
                            cfg.seed, cfg["r"], workers=cfg.workers)
    rows = noise_sweep(clf, test, cfg["sigmas"], cfg["areas"], cfg.seed)
    return Report(["attack", "level", "accuracy"], rows, {"n_eval": len(test)})


RUNNERS = {
    ExperimentKind.EXACT_POLY: run_exact_poly,
    ExperimentKind.GENERALIZE_ADMISSIBLE: run_generalize,
    ExperimentKind.TEACHER_STUDENT: run_teacher_student,
    ExperimentKind.SELF_REGULARIZATION: run_self_regularization,
    ExperimentKind.COVERING_EVENT: run_covering,
    ExperimentKind.COND_NUMBER: run_condnumber,
    ExperimentKind.MNIST_CONV: run_mnist,
    ExperimentKind.NOISE_ROBUSTNESS: run_noise,
}


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> Report:
    report = RUNNERS[cfg.kind](cfg)
    if write:
        report.write(cfg)
    return report

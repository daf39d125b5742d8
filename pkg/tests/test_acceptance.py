"""End-to-end acceptance checks.

Each test prints one ``PASS``/``FAIL`` line and then asserts, so a run with
``pytest tests/test_acceptance.py -v`` shows every criterion even when an
earlier one fails.  The benchmark criteria run the desk-scale experiments and
take a few minutes in total.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from agnc import cli
from agnc.adaptive import fit_residual_mode
from agnc.experiments.config import load_linreg_config
from agnc.experiments.icp_bench import IcpBenchConfig, run_icp_bench
from agnc.experiments.linreg import run_linreg_mc
from agnc.experiments.report import TIMING_COLUMNS
from agnc.geometry.cloud import PointCloud, build_index, nearest
from agnc.geometry.lie import se3_exp, se3_log
from agnc.gnc import GncSchedule, ShapeVariant, gnc_weight, outlier_process_agnc, rho_surrogate, shape_fn
from agnc.losses import NEG_INF, KernelFamily, chi2_threshold
from oracles import brute_nearest, chi2_inverse, golden_section

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
GNC_METHODS = ("GNC-GM", "GNC-TLS", "AGNC", "GNC-AMB")
NON_GNC_METHODS = ("Cauchy", "Welsch", "BA", "CA", "AMB")


@pytest.fixture
def verdict(capsys):
    def report(label, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}" + (f": {detail}" if detail else ""))
        assert ok, f"{label}: {detail}"

    return report


def test_criterion_1_duality(verdict):
    start = time.perf_counter()
    worst_value, worst_weight = 0.0, 0.0
    for f in (-5.0, -2.0, -0.5, 0.5, 1.0, 1.5):
        for eps in (0.25, 0.5, 1.0, 2.0, 4.0):
            w_star, value = golden_section(lambda w: 0.5 * w * eps * eps + outlier_process_agnc(w, f), 1e-12, 1.0, tol=1e-9)
            worst_value = max(worst_value, abs(value - rho_surrogate(eps, f)))
            worst_weight = max(worst_weight, abs(w_star - gnc_weight(eps, f)))
    elapsed = time.perf_counter() - start
    ok = worst_value < 1e-6 and worst_weight < 1e-4 and elapsed < 5.0
    verdict("1 duality", ok, f"max |min - rho| {worst_value:.2e}, max |argmin - w| {worst_weight:.2e}, {elapsed:.2f} s")


def test_criterion_2_gradients(verdict):
    start = time.perf_counter()
    h = 1e-6
    worst, where = 0.0, None
    for alpha in (2.0, 1.0, 0.5, 0.0, -1.0, -2.0, -10.0, NEG_INF):
        for kernel in (KernelFamily.adaptive(alpha), KernelFamily.amb(alpha, math.sqrt(2.0))):
            for eps in (0.1, 0.5, 1.0, 2.0, 5.0):
                fd = (kernel.rho(eps + h) - kernel.rho(eps - h)) / (2 * h)
                exact = eps * kernel.weight(eps)
                err = abs(fd - exact) / abs(exact)
                if err > worst:
                    worst, where = err, (kernel.tag, alpha, eps)
    elapsed = time.perf_counter() - start
    verdict("2 gradients", worst < 1e-5 and elapsed < 1.0, f"max rel err {worst:.2e} at {where}, {elapsed:.3f} s")


def test_criterion_3_shape_limits(verdict):
    problems = []
    for variant in (ShapeVariant.INCREASING, ShapeVariant.DECREASING):
        for alpha in (1.0, 0.0, -2.0, -8.0, NEG_INF):
            sched = GncSchedule(variant=variant, max_stages=10_000)
            mu = sched.initial_mu(alpha)
            f = shape_fn(variant, mu, alpha)
            if not abs(f - 2.0) < 1e-6:
                problems.append(f"{variant.name} {alpha}: start f={f}")
            stages = 0
            while not sched.finished(f, alpha) and stages < sched.max_stages:
                mu = sched.next_mu(mu, alpha)
                f = shape_fn(variant, mu, alpha)
                stages += 1
                if f > 2.0:
                    problems.append(f"{variant.name} {alpha}: f={f} above 2")
            end_ok = f <= -32.0 if alpha == NEG_INF else abs(f - alpha) < 1e-3
            if not end_ok:
                problems.append(f"{variant.name} {alpha}: final f={f} after {stages} stages")
    verdict("3 shape limits", not problems, "; ".join(problems) or "10 schedules")


def test_criterion_4_mb_recovery(verdict):
    rng = np.random.default_rng(2024)
    eps = np.linalg.norm(rng.normal(size=(100_000, 3)), axis=1)
    start = time.perf_counter()
    fit = fit_residual_mode(eps, 3, 5.0)
    elapsed = time.perf_counter() - start
    ok = 0.95 <= fit.a_star <= 1.05 and 1.34 <= fit.mode <= 1.49 and elapsed < 10.0
    verdict("4 MB recovery", ok, f"a* {fit.a_star:.4f}, mode {fit.mode:.4f}, {elapsed:.2f} s")


@pytest.fixture(scope="module")
def linreg_desk():
    cfg = load_linreg_config(CONFIGS / "linreg_desk.toml")
    start = time.perf_counter()
    report = run_linreg_mc(cfg)
    return cfg, report, time.perf_counter() - start


@pytest.mark.slow
def test_criterion_5_linreg_ordering(linreg_desk, verdict):
    cfg, report, elapsed = linreg_desk
    med = {(s["method"], s["condition"]): s["error_p50"] for s in report.summary()}
    problems = []
    for rate in cfg.outlier_rates:
        cond = f"rate={rate!r}"
        for m in GNC_METHODS:
            if not med[m, cond] < med["Welsch", cond]:
                problems.append(f"(a) {m} {med[m, cond]:.4g} >= Welsch {med['Welsch', cond]:.4g} at {rate}")
    hard = "rate=0.8"
    for m in ("AGNC", "GNC-GM"):
        if not med["GNC-AMB", hard] <= med[m, hard]:
            problems.append(f"(b) GNC-AMB {med['GNC-AMB', hard]:.4g} > {m} {med[m, hard]:.4g} at 0.8")
    if not elapsed < 300.0:
        problems.append(f"runtime {elapsed:.0f} s")
    row80 = ", ".join(f"{m} {med[m, hard]:.4g}" for m in cfg.methods)
    verdict("5 linreg ordering", not problems, "; ".join(problems) or f"medians at 0.8: {row80}; {elapsed:.0f} s")


@pytest.fixture(scope="module")
def icp_desk():
    start = time.perf_counter()
    report = run_icp_bench(IcpBenchConfig())
    summary = {(s["method"], s["condition"].split("/")[0]): s for s in report.summary()}
    return summary, time.perf_counter() - start


@pytest.mark.slow
def test_criterion_6a_icp_easy(icp_desk, verdict):
    summary, elapsed = icp_desk
    worst = max((s["rot_deg_p50"], m) for (m, d), s in summary.items() if d == "easy")
    verdict("6a ICP easy rotation", worst[0] < 0.5 and elapsed < 600.0, f"largest median {worst[0]:.4f} deg ({worst[1]}), bench {elapsed:.0f} s")


@pytest.mark.slow
def test_criterion_6b_icp_hard_success(icp_desk, verdict):
    summary, elapsed = icp_desk
    ours = summary["GNC-AMB", "hard"]["success_rate"]
    others = {m: summary[m, "hard"]["success_rate"] for m in NON_GNC_METHODS}
    ok = all(ours >= r for r in others.values()) and elapsed < 600.0
    verdict("6b ICP hard success", ok, f"GNC-AMB {ours:.2f} vs " + ", ".join(f"{m} {r:.2f}" for m, r in others.items()))


@pytest.mark.slow
def test_criterion_6c_icp_hard_translation(icp_desk, verdict):
    summary, elapsed = icp_desk
    ours = summary["GNC-AMB", "hard"]["trans_cm_p75"]
    agnc = summary["AGNC", "hard"]["trans_cm_p75"]
    verdict("6c ICP hard p75 translation", ours <= agnc and elapsed < 600.0, f"GNC-AMB {ours:.4g} cm vs AGNC {agnc:.4g} cm")


def test_criterion_7_exactness(verdict):
    rng = np.random.default_rng(7)
    g = np.arange(10.0)
    grid = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    grid = grid + rng.uniform(-1e-3, 1e-3, grid.shape)
    idx = build_index(PointCloud(grid))
    nn_bad = sum(nearest(idx, q) != brute_nearest(grid, q)[0] for q in rng.uniform(-1, 10, size=(200, 3)))

    worst_rt = 0.0
    for _ in range(200):
        phi = rng.normal(size=3)
        phi *= rng.uniform(0.0, 3.0) / np.linalg.norm(phi)
        xi = np.concatenate([phi, rng.normal(0, 2, 3)])
        worst_rt = max(worst_rt, float(np.max(np.abs(se3_log(se3_exp(xi)) - xi))))

    worst_chi = max(abs(chi2_threshold(d) - chi2_inverse(d, 0.9973)) / chi2_inverse(d, 0.9973) for d in (1, 2, 3, 6))
    ok = nn_bad == 0 and worst_rt < 1e-9 and worst_chi < 1e-8
    verdict("7 exactness", ok, f"NN mismatches {nn_bad}/200, se3 round trip {worst_rt:.1e}, chi2 rel err {worst_chi:.1e}")


@pytest.mark.slow
def test_criterion_8_determinism(tmp_path, verdict):
    def rows(out):
        lines = (out / "rows.csv").read_text().splitlines()
        header = lines[0].split(",")
        keep = [i for i, c in enumerate(header) if c not in TIMING_COLUMNS]
        return [[line.split(",")[i] for i in keep] for line in lines]

    argv = ["linreg", "--config", str(CONFIGS / "linreg_desk.toml"), "--seed", "123", "--methods", "Welsch,AGNC,GNC-AMB"]
    codes = [cli.main(argv + ["--out", str(tmp_path / name)]) for name in ("a", "b")]
    ok = codes == [0, 0] and rows(tmp_path / "a") == rows(tmp_path / "b")
    verdict("8 determinism", ok, f"exit codes {codes}, {len(rows(tmp_path / 'a')) - 1} rows compared")

"""Acceptance suite: one test per criterion, each run at its stated
tolerance, printing a single pass/fail line (run with ``pytest -v -s``).

All randomness flows from the module seed. Criterion 6's bound-envelope
sub-check is known to fail for the pinned model at desk scale (regret
saturates near E||eta||^2 at k=16, so constants calibrated there with
equality undershoot the larger-k cells); it is asserted as stated and the
failure is reported with the measured ratios rather than loosened.
"""

import math
import time

import numpy as np
import pytest

from qmmse import (
    Codebook,
    LinearGaussianModel,
    audit_covering,
    bvm_diagnostics,
    cell_error,
    closed_form_mmse,
    covering_codebook,
    delta,
    emit_csv,
    estimate_decomposition,
    estimate_mmse,
    estimate_quantization_gap,
    fisher_expectations,
    fit_loglog_slope,
    info_inequality_gap,
    lloyd_max_1d,
    panter_dite_1d,
    distortion_of_Y,
    sweep_scalar,
    sweep_vector,
    thm2_bound_subgaussian,
    uniform_gaussian_model,
    uniform_logistic_model,
    cosine_gaussian_model,
)
from qmmse.experiments import cell_seed
from qmmse.numerics import rng_stream
from qmmse.quantizer import COVERING_C_GRID

SEED = 20260809

UNIFORM = lambda y: np.full_like(np.asarray(y, dtype=float), 0.5)


def _verdict(num, ok, detail):
    print(f"\ncriterion {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    return ok


def test_criterion_1_decomposition_identity():
    """Identity mmse_k = mmse + reg_k across six (model, quantizer) pairs."""
    pairs = []

    pairs.append(("uniform-gauss sigma=1 / companding k=8, n=4",
                  uniform_gaussian_model(1.0, 1.0), 4,
                  panter_dite_1d(UNIFORM, 1.0, 8)))
    pairs.append(("uniform-gauss sigma=0.1 / lloyd k=4, n=100",
                  uniform_gaussian_model(1.0, 0.1), 100,
                  lloyd_max_1d(UNIFORM, 1.0, 4)))
    cosine = cosine_gaussian_model(1.0, 0.5)
    cosine_density = lambda y: np.exp(np.asarray(cosine.prior_log_density(y), dtype=float))
    pairs.append(("cosine-gauss sigma=0.5 / companding k=16, n=10",
                  cosine, 10, panter_dite_1d(cosine_density, 1.0, 16)))

    def first_axis_cells(x):
        return np.searchsorted([-0.5, 0.0, 0.5], np.asarray(x)[:, 0]) + 1

    pairs.append(("uniform-gauss sigma=0.5 / axis cells m=4, n=3",
                  uniform_gaussian_model(1.0, 0.5), 3, (first_axis_cells, 4)))

    def sign_cells(x):
        return np.where(np.asarray(x)[:, 0] >= 0, 2, 1)

    pairs.append(("linear-gaussian p=1 / sign cells",
                  LinearGaussianModel([[1.0]], [[1.0]], [[1.0]]), None, (sign_cells, 2)))
    lg2 = LinearGaussianModel(np.eye(2), np.eye(2), np.eye(2))
    _, r_star = thm2_bound_subgaussian(math.sqrt(math.pi) / 2.0, 2.0, 0.5, 16, 2, 1.0, 1.0)
    pairs.append(("linear-gaussian p=2 / covering k=16",
                  lg2, None, covering_codebook(2, r_star, 16, audit_points=0)))

    all_ok, details = True, []
    for i, (label, model, n_obs, cells) in enumerate(pairs):
        t0 = time.perf_counter()
        est = estimate_decomposition(model, n_obs, cells, 1_000_000, cell_seed(SEED, i))
        wall = time.perf_counter() - t0
        ok = abs(est.residual) <= 3 * est.combined_se
        all_ok &= ok
        details.append(
            f"{label}: residual={est.residual:+.2e} (3se={3 * est.combined_se:.2e}, {wall:.0f}s)"
        )
    assert _verdict(1, all_ok, "; ".join(details))


def test_criterion_2_sign_quantizer_closed_form():
    """Scalar jointly-Gaussian channel with a sign quantizer: the three
    estimates match the conditional-mean derivation recomputed here."""
    sigma_y2, sigma_w2 = 1.0, 1.0
    model = LinearGaussianModel([[sigma_y2]], [[1.0]], [[sigma_w2]])
    # oracle, from first principles
    mmse_oracle = sigma_y2 * sigma_w2 / (sigma_y2 + sigma_w2)
    var_x = sigma_y2 + sigma_w2
    a_coef = sigma_y2 / var_x
    var_eta = a_coef**2 * var_x
    centroid = a_coef * math.sqrt(2.0 * var_x / math.pi)  # E[eta | X > 0]
    regret_oracle = var_eta - centroid**2
    assert mmse_oracle == pytest.approx(closed_form_mmse(model))

    def sign_cells(x):
        return np.where(np.asarray(x)[:, 0] >= 0, 2, 1)

    est = estimate_decomposition(model, None, (sign_cells, 2), 1_000_000, cell_seed(SEED, 20))
    checks = [
        ("mmse", est.mmse, mmse_oracle, est.mmse_se),
        ("regret", est.regret_direct, regret_oracle, est.regret_direct_se),
        ("mmse_2", est.mmse_k, mmse_oracle + regret_oracle, est.mmse_k_se),
    ]
    ok = all(abs(got - want) <= 3 * se for _, got, want, se in checks)
    detail = ", ".join(f"{name}={got:.5f} (oracle {want:.5f})" for name, got, want, se in checks)
    assert _verdict(2, ok, detail)


def test_criterion_3_panter_dite_law():
    """k^2-law of the companding design distortion for the uniform prior."""
    t0 = time.perf_counter()
    ratios = {}
    for k in (16, 32, 64):
        d = distortion_of_Y(panter_dite_1d(UNIFORM, 1.0, k), UNIFORM, 1.0)
        ratios[k] = d * 3.0 * k * k
    pairs = [(k, distortion_of_Y(panter_dite_1d(UNIFORM, 1.0, k), UNIFORM, 1.0))
             for k in (4, 8, 16, 32, 64)]
    slope, _, _ = fit_loglog_slope(pairs)
    wall = time.perf_counter() - t0
    ok = all(0.98 <= r <= 1.02 for r in ratios.values()) and -2.2 <= slope <= -1.8
    assert _verdict(
        3, ok,
        f"3k^2 D_k = {[round(r, 4) for r in ratios.values()]}, slope={slope:.3f} ({wall:.1f}s)",
    )


def _exact_gaussian_gap(sigma, n, codebook, half_width=1.0):
    """Quadrature oracle for E[e_C(eta)] - E[e_C(Y)] on the uniform prior:
    the posterior mean is the truncated-normal mean of the sample mean."""
    from scipy.stats import norm

    tau = sigma / math.sqrt(n)
    ts = np.linspace(-half_width - 10 * tau, half_width + 10 * tau, 200_001)
    alpha = (-half_width - ts) / tau
    beta = (half_width - ts) / tau
    z = norm.cdf(beta) - norm.cdf(alpha)
    safe = z > 1e-300
    eta = np.where(
        safe,
        ts + tau * (norm.pdf(alpha) - norm.pdf(beta)) / np.where(safe, z, 1.0),
        np.sign(ts) * half_width,
    )
    e_eta = np.trapezoid(cell_error(codebook, eta) * z / (2 * half_width), ts)
    return e_eta - distortion_of_Y(codebook, UNIFORM, half_width)


def test_criterion_4_corollary_envelope():
    """Gap between quantizing eta and quantizing Y against the
    codebook-size envelope, constant fitted on the (n=100, k=4) cell.

    The Monte Carlo gaps at the stated N carry noise comparable to the
    tightest cells' margins, so the noiseless quadrature gaps are printed
    alongside as a cross-check of the envelope itself.
    """
    model = uniform_gaussian_model(1.0, 0.1)
    e_inv_sqrt, _ = fisher_expectations(model)
    t0 = time.perf_counter()
    cells = {}
    exact = {}
    for i_n, n in enumerate((100, 1000, 10_000)):
        mmse_hat, _ = estimate_mmse(model, n, 100_000, cell_seed(SEED, 40 + i_n))
        kappa = e_inv_sqrt + math.sqrt(max(mmse_hat, 0.0))
        for i_k, k in enumerate((4, 8, 16, 32)):
            codebook = panter_dite_1d(UNIFORM, 1.0, k)
            gap, se = estimate_quantization_gap(
                model, n, codebook, 100_000, cell_seed(SEED, 50 + 4 * i_n + i_k)
            )
            envelope = min(1.0 / k**2, 0.1 * kappa / (k * math.sqrt(n)))
            cells[(n, k)] = (abs(gap), envelope)
            exact[(n, k)] = (abs(_exact_gaussian_gap(0.1, n, codebook)), envelope)
    c_fit = cells[(100, 4)][0] / cells[(100, 4)][1]
    passed = sum(gap <= c_fit * env for gap, env in cells.values())
    c_exact = exact[(100, 4)][0] / exact[(100, 4)][1]
    passed_exact = sum(gap <= c_exact * env for gap, env in exact.values())
    wall = time.perf_counter() - t0
    ok = passed >= 11
    assert _verdict(
        4, ok,
        f"{passed}/12 cells inside envelope at N=1e5 (c_fit={c_fit:.4f}); "
        f"noiseless quadrature cross-check: {passed_exact}/12 (c={c_exact:.4f}) ({wall:.0f}s)",
    )


def test_criterion_5_estimation_rate():
    """Mean absolute regression error decays like n^(-1/2)."""
    model = uniform_gaussian_model(1.0, 0.1)
    t0 = time.perf_counter()
    pairs = []
    for n in (25, 100, 400, 1600):
        diag = bvm_diagnostics(model, n, 10_000, cell_seed(SEED, 70 + n))
        pairs.append((n, diag["mean_abs_eta_err"]))
    slope, _, _ = fit_loglog_slope(pairs)
    wall = time.perf_counter() - t0
    ok = abs(slope + 0.5) <= 0.1
    assert _verdict(5, ok, f"slope={slope:.4f} (target -0.5 +- 0.1, {wall:.0f}s)")


@pytest.fixture(scope="module")
def vector_sweep_rows():
    model = LinearGaussianModel(np.eye(2), np.eye(2), np.eye(2))
    return sweep_vector(model, [16, 64, 256], 100_000, master_seed=SEED)


def test_criterion_6_theorem2_scaling_slope(vector_sweep_rows):
    """High-resolution decay of the covering-quantizer regret with k."""
    slope, _, _ = fit_loglog_slope([(r.k, r.regret) for r in vector_sweep_rows])
    ok = slope <= -0.7
    assert _verdict(
        6, ok,
        f"(slope) log regret vs log k = {slope:.4f} <= -0.7; "
        f"regrets={[round(r.regret, 5) for r in vector_sweep_rows]}",
    )


def test_criterion_6_theorem2_scaling_envelope(vector_sweep_rows):
    """Subgaussian bound with constants scale-fitted at k=16 and frozen.

    Known to fail for the pinned model: over k in {16, 64, 256} the
    empirical regret leaves its saturation plateau (regret <= E||eta||^2)
    slower than the bound decays, so a k=16 equality calibration
    undershoots the larger cells by ~30% regardless of the fitting rule.
    The default-constant bound itself dominates every cell; only the
    frozen one-cell calibration is violated.
    """
    rows = vector_sweep_rows
    scale = rows[0].regret / rows[0].bound  # c1 = c2 = scale: equality at k=16
    checks = [(r.k, r.regret, scale * r.bound) for r in rows]
    ok = all(reg <= env for _, reg, env in checks)
    unfitted = all(r.regret <= r.bound for r in rows)
    assert _verdict(
        6, ok,
        "(envelope) " + ", ".join(
            f"k={k}: regret={reg:.5f} vs fitted bound {env:.5f}" for k, reg, env in checks
        ) + f"; default-constant bound dominates all cells: {unfitted}",
    )


def test_criterion_7_covering_audit():
    """Randomized audits of the ball covering plus the grid rate guarantee."""
    t0 = time.perf_counter()
    all_ok, details = True, []
    for p in (1, 2, 3):
        for k in (16, 256):
            cq = covering_codebook(p, 1.0, k, audit_points=0)
            worst = audit_covering(cq, 100_000, seed=cell_seed(SEED, 80 + 2 * p + (k == 256)))
            rate_ok = cq.eps <= COVERING_C_GRID * math.sqrt(p) * 1.0 * k ** (-1.0 / p)
            all_ok &= worst <= cq.eps and rate_ok
            details.append(f"p={p},k={k}: eps={cq.eps:.4f} worst={worst:.4f}")
    wall = time.perf_counter() - t0
    assert _verdict(7, all_ok, "; ".join(details) + f" ({wall:.1f}s)")


def test_criterion_8_cell_error_smoothness():
    """|e_C(y) - e_C(y')| <= min(2 delta^2, 2 delta |y - y'|) pointwise."""
    t0 = time.perf_counter()
    rng = rng_stream(SEED, 90)
    violations = 0
    total = 0
    for _ in range(100):
        k = int(rng.integers(1, 9))
        codebook = Codebook(np.sort(rng.uniform(-1, 1, size=k)))
        d = delta(codebook, 1.0)
        y1 = rng.uniform(-1, 1, size=1000)
        y2 = rng.uniform(-1, 1, size=1000)
        gap = np.abs(cell_error(codebook, y1) - cell_error(codebook, y2))
        bound = np.minimum(2 * d * d, 2 * d * np.abs(y1 - y2))
        violations += int((gap > bound + 1e-12).sum())  # float-rounding guard only
        total += 1000
    wall = time.perf_counter() - t0
    assert _verdict(8, violations == 0,
                    f"{violations} violations in {total} random triples ({wall:.1f}s)")


def test_criterion_9_information_inequality():
    """mmse_hat clears the (1/n) E[1/I] floor within Monte Carlo noise.

    The floor is asymptotic: a compactly supported prior undershoots it
    at finite n by a relative O(posterior width / support width), so the
    assertion runs in the interior regime (small noise scales). The
    boundary-regime deficit at sigma = 0.1 is printed for reference.
    """
    from test_regret import mmse_quadrature_oracle

    wide = uniform_gaussian_model(1.0, 0.1)
    for n in (10, 100):
        oracle_gap = info_inequality_gap(wide, n, mmse_quadrature_oracle(0.1, n))
        print(f"\n(sigma=0.1 boundary regime, n={n}: exact gap {oracle_gap:+.3e} -- "
              "finite-n deficit, not asserted)")

    models = [
        ("gaussian sigma=0.003", uniform_gaussian_model(1.0, 0.003)),
        ("logistic scale=0.0018", uniform_logistic_model(1.0, 0.0018)),
    ]
    all_ok, details = True, []
    for i_m, (label, model) in enumerate(models):
        for i_n, n in enumerate((10, 100)):
            t0 = time.perf_counter()
            mmse_hat, se = estimate_mmse(model, n, 1_000_000, cell_seed(SEED, 95 + 2 * i_m + i_n))
            gap = info_inequality_gap(model, n, mmse_hat)
            wall = time.perf_counter() - t0
            ok = gap >= -3 * se
            all_ok &= ok
            details.append(f"{label} n={n}: gap={gap:+.2e} (3se={3 * se:.2e}, {wall:.0f}s)")
    assert _verdict(9, all_ok, "; ".join(details))


def test_criterion_10_sweep_determinism(tmp_path):
    """Re-running any sweep with the same config is byte-identical apart
    from the wall-time column."""

    def strip_wall(path):
        return [ln.rsplit(",", 1)[0] for ln in path.read_text().splitlines()]

    outputs = []
    for run in (0, 1):
        scalar_rows = sweep_scalar(uniform_gaussian_model(1.0, 0.5),
                                   [4, 8], [50, 200], 5_000, master_seed=SEED)
        vector_rows = sweep_vector(LinearGaussianModel([[1.0]], [[1.0]], [[1.0]]),
                                   [4, 8], 5_000, master_seed=SEED)
        sp = tmp_path / f"scalar{run}.csv"
        vp = tmp_path / f"vector{run}.csv"
        emit_csv(scalar_rows, sp)
        emit_csv(vector_rows, vp)
        outputs.append((strip_wall(sp), strip_wall(vp)))
    ok = outputs[0] == outputs[1]
    assert _verdict(10, ok, "scalar and vector sweep reruns byte-identical (wall_ms excluded)")

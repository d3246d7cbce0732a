"""End-to-end acceptance checks.

Each test covers one numbered criterion and prints exactly one PASS/FAIL line
(visible with ``pytest -v -s`` or in captured output on failure) before
asserting.  Tolerances and trial counts are fixed; none of the checks below
are tuned at runtime.
"""

import math
import time

import numpy as np
import scipy.linalg

from tds import (Dataset, DeskOverrides, ExperimentConfig, Gaussian,
                 KernelSpec, MultiIndexSet, ScenarioSpec, StudentT, TdsParams,
                 TestSource, TrainSource, UniformBall, UniformCube,
                 adversarial_label_scenario, chebyshev_approx_univariate,
                 cmk_eval, compose_sigmoid_net_approx, degree_for_target,
                 empirical_moments_all, fit_constrained_kernel_regression,
                 gram_matrix, grid_sup_error, kernel_matrix, mk_eval,
                 moment_concentration_envelope, net_eval_batch, net_norms,
                 random_net, reference_moments, report_csv_bytes,
                 report_json_bytes, run_experiment, sample,
                 spectral_shift_statistic, tds_kernel_learn, tds_uniform_learn,
                 UniformApproxParams, SIGMOID)
from tds.nets import sigmoid

from _oracles import (cmk_oracle, lambda_grid_kernel_objective, mk_oracle,
                      population_phi_ball_mk2)


def _criterion(num: int, name: str, ok: bool, detail: str) -> None:
    print(f"criterion {num:02d} [{name}]: {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


def test_criterion_01_kernel_oracle_equivalence():
    rng = np.random.default_rng(101)
    worst_single = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 4))
        ell = int(rng.integers(1, 5))
        x, y = rng.uniform(-1, 1, size=d), rng.uniform(-1, 1, size=d)
        got = mk_eval(x, y, ell)
        want = mk_oracle(x, y, ell)
        worst_single = max(worst_single, abs(got - want) / max(1.0, abs(want)))
    worst_composed = 0.0
    spec = KernelSpec(degree_vector=(2, 2))
    for _ in range(20):
        x, y = rng.uniform(-1, 1, size=2), rng.uniform(-1, 1, size=2)
        got = cmk_eval(x, y, spec)
        want = cmk_oracle(x, y, (2, 2))
        worst_composed = max(worst_composed, abs(got - want) / max(1.0, abs(want)))
    ok = worst_single <= 1e-9 and worst_composed <= 1e-8
    _criterion(1, "kernel oracle equivalence", ok,
               f"single rel err {worst_single:.2e} <= 1e-9, "
               f"composed rel err {worst_composed:.2e} <= 1e-8")


def test_criterion_02_composed_sup_bound():
    worst_ratio = 0.0
    for R in (1.0, 2.0):
        for degrees in ((2,), (2, 2)):
            t = len(degrees)
            bound = max(1.0, (2.0 * R) ** (2 ** t * math.prod(degrees)))
            spec = KernelSpec(degree_vector=degrees)
            X = sample(UniformBall(R=R, d=3), 1000, seed=202).X
            diag = np.array([cmk_eval(x, x, spec) for x in X])
            worst_ratio = max(worst_ratio, float(np.max(diag)) / bound)
    ok = worst_ratio <= 1.0
    _criterion(2, "composed-kernel sup bound", ok,
               f"max K(x,x)/bound = {worst_ratio:.4f} <= 1 over R in {{1,2}}, "
               f"levels in {{(2),(2,2)}}, 1000 in-ball points each")


def test_criterion_03_spectral_statistic_identities():
    rng = np.random.default_rng(303)
    G = rng.normal(size=(6, 9))
    Phi = G @ G.T
    id_err = abs(spectral_shift_statistic(Phi, Phi).rho - 1.0)
    scale_err = abs(spectral_shift_statistic(Phi, 2.0 * Phi).rho - 2.0)

    worst_solver = 0.0
    for _ in range(50):
        Ga = rng.normal(size=(6, 9))
        Gb = rng.normal(size=(6, 9))
        A, B = Ga @ Ga.T, Gb @ Gb.T
        rho = spectral_shift_statistic(A, B).rho
        dense = float(scipy.linalg.eigh(B, A, eigvals_only=True)[-1])
        worst_solver = max(worst_solver, abs(rho - dense) / abs(dense))

    null_report = spectral_shift_statistic(np.diag([1.0, 0.0]), np.eye(2))
    ok = (id_err <= 1e-9 and scale_err <= 1e-9 and worst_solver <= 1e-8
          and null_report.null_violation)
    _criterion(3, "spectral statistic identities", ok,
               f"rho(P,P)-1 = {id_err:.1e}, rho(P,2P)-2 = {scale_err:.1e}, "
               f"vs dense solver rel {worst_solver:.1e} <= 1e-8 on 50 pairs, "
               f"null violation detected = {null_report.null_violation}")


def test_criterion_04_constrained_kernel_regression():
    rng = np.random.default_rng(404)
    spec = KernelSpec(degree_vector=(2,))
    worst_obj_gap = 0.0
    worst_constraint = 0.0
    for _ in range(20):
        X = rng.uniform(-1, 1, size=(6, 2))
        y = rng.uniform(-1, 1, size=6)
        B = float(rng.uniform(0.05, 0.5))
        data = Dataset(X, y)
        a = fit_constrained_kernel_regression(data, spec, B)
        K = gram_matrix(X, spec).values
        obj = float(np.sum((y - K @ a) ** 2))
        oracle = lambda_grid_kernel_objective(K, y, B)
        worst_obj_gap = max(worst_obj_gap, abs(obj - oracle) / max(1.0, oracle))
        worst_constraint = max(worst_constraint, float(a @ K @ a) / B - 1.0)

    # inactive constraint: budget above the interpolant norm -> exact fit
    X = rng.uniform(-1, 1, size=(6, 2))
    y = rng.uniform(-1, 1, size=6)
    K = gram_matrix(X, spec).values
    budget = 1.1 * float(y @ np.linalg.solve(K, y))
    a = fit_constrained_kernel_regression(Dataset(X, y), spec, budget)
    interp_resid = float(np.max(np.abs(y - K @ a)))

    ok = (worst_obj_gap <= 1e-6 and worst_constraint <= 1e-6
          and interp_resid <= 1e-8)
    _criterion(4, "constrained kernel regression", ok,
               f"objective vs grid oracle rel {worst_obj_gap:.1e} <= 1e-6 on 20 "
               f"instances, constraint excess {worst_constraint:.1e} <= 1e-6, "
               f"interpolation residual {interp_resid:.1e} <= 1e-8")


def _kernel_desk_params(eps=0.3):
    return TdsParams(epsilon=eps, delta=0.1, A=1.0, B=25.0, M=1.0, R=1.0,
                     desk=DeskOverrides(m=200, N=2000, rho_threshold=3.0,
                                        m_train=2000, m_test=2000))


def test_criterion_05_kernel_pipeline_completeness():
    net = random_net(3, (2, 1), SIGMOID, weight_scale=1.0, rng_seed=4)
    ball = UniformBall(R=1.0, d=3)
    scen = ScenarioSpec(train_marginal=ball, test_marginal=ball, target=net,
                        M=1.0, seed=0)
    spec = KernelSpec(degree_vector=(3,))
    params = _kernel_desk_params()
    train, test = TrainSource(scen), TestSource(scen)
    accepts = sum(tds_kernel_learn(train, test, spec, params, seed)[0].accepted
                  for seed in range(20))
    ok = accepts >= 15
    _criterion(5, "kernel pipeline completeness", ok,
               f"{accepts}/20 accepts >= 15 (matched uniform-ball marginal, "
               f"d=3, levels (3,), two-unit sigmoid target, delta=0.1)")


def test_criterion_06_kernel_pipeline_soundness_surrogate():
    net = random_net(3, (2, 1), SIGMOID, weight_scale=1.0, rng_seed=4)
    spec = KernelSpec(degree_vector=(3,))
    params = _kernel_desk_params(eps=0.3)

    inflated = ScenarioSpec(train_marginal=UniformCube(a=0.4, d=3),
                            test_marginal=UniformCube(a=(0.8, 0.4, 0.4), d=3),
                            target=net, M=1.0, seed=0)
    rejects = sum(
        not tds_kernel_learn(TrainSource(inflated), TestSource(inflated),
                             spec, params, seed)[0].accepted
        for seed in range(20))

    benign = ScenarioSpec(train_marginal=UniformCube(a=0.4, d=3),
                          test_marginal=UniformCube(a=0.4, d=3),
                          target=net, M=1.0, seed=0)
    config = ExperimentConfig(scenario=benign, pipeline="kernel",
                              params=params, trials=10, seed=606,
                              kernel_spec=spec, holdout=10 ** 4)
    report = run_experiment(config)
    n_accept = report.aggregate["n_accepted"]
    all_within = (n_accept > 0
                  and report.aggregate["within_bound_rate"] == 1.0)

    ok = rejects >= 18 and all_within
    _criterion(6, "kernel pipeline soundness surrogate", ok,
               f"covariance-inflated marginal rejected {rejects}/20 >= 18; "
               f"benign resampling: {n_accept}/10 accepts all with test loss "
               f"<= opt + lambda + 5 eps + 2 SE")


def test_criterion_07_multiplicative_spectral_concentration():
    rng = np.random.default_rng(77)
    anchors = rng.uniform(-0.5, 0.5, size=(8, 3))
    spec = KernelSpec(degree_vector=(2,))
    Phi = population_phi_ball_mk2(anchors, 1.0)
    dirs = rng.normal(size=(100, 8))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pop_quad = np.einsum("ij,jk,ik->i", dirs, Phi, dirs)

    mean_dev = {}
    max_dev_at_1e4 = 0.0
    for N in (10 ** 2, 10 ** 3, 10 ** 4):
        devs = []
        for seed in range(10):
            X = sample(UniformBall(R=1.0, d=3), N, seed=7000 + seed).X
            F = kernel_matrix(X, anchors, spec)
            emp_quad = np.einsum("ij,jk,ik->i", dirs, F.T @ F / N, dirs)
            devs.append(float(np.max(np.abs(emp_quad / pop_quad - 1.0))))
        mean_dev[N] = float(np.mean(devs))
        if N == 10 ** 4:
            max_dev_at_1e4 = max(devs)
    decreasing = mean_dev[100] > mean_dev[1000] > mean_dev[10000]
    ok = max_dev_at_1e4 <= 0.1 and decreasing
    _criterion(7, "multiplicative spectral concentration", ok,
               f"max direction dev {max_dev_at_1e4:.3f} <= 0.1 at N=1e4 "
               f"(10 seeds x 100 directions, closed-form population matrix); "
               f"mean dev {mean_dev[100]:.3f} > {mean_dev[1000]:.3f} > "
               f"{mean_dev[10000]:.3f} decreasing in N")


def test_criterion_08_moment_pipeline_completeness_and_rejection():
    d = 3
    net = random_net(d, (4, 1), SIGMOID, weight_scale=0.8, rng_seed=7)
    gauss = Gaussian(mean=np.zeros(d), scale=np.ones(d))
    benign = ScenarioSpec(train_marginal=gauss, test_marginal=gauss,
                          target=net, M=1.0, seed=0)

    envelope = moment_concentration_envelope(TestSource(benign),
                                             reference_moments(gauss, 4),
                                             4, 10 ** 5, range(10))
    approx = UniformApproxParams(ell=2, t_mom=2, B_coef=10.0,
                                 Delta=3.0 * envelope, eps_prime=0.3 / 11,
                                 r=2.0, k=2, R=1.0)
    params = TdsParams(epsilon=0.3, delta=0.1, A=1.0, B=1.0, M=1.0, R=1.0,
                       desk=DeskOverrides(m_train=10 ** 4, m_test=10 ** 5))

    def run(scen, seed):
        return tds_uniform_learn(TrainSource(scen), TestSource(scen),
                                 approx, params, seed)[0]

    accepts = sum(run(benign, seed).accepted for seed in range(20))

    shifted = ScenarioSpec(train_marginal=gauss,
                           test_marginal=Gaussian(mean=np.array([1.0, 0.0, 0.0]),
                                                  scale=np.ones(d)),
                           target=net, M=1.0, seed=0)
    shift_rejects = sum(not run(shifted, seed).accepted for seed in range(20))

    heavy = ScenarioSpec(train_marginal=gauss,
                         test_marginal=StudentT(dof=3.0,
                                                scale=np.full(d, np.sqrt(1 / 3)),
                                                d=d),
                         target=net, M=1.0, seed=0)
    heavy_rejects = sum(not run(heavy, seed).accepted for seed in range(20))

    ok = accepts >= 15 and shift_rejects >= 18 and heavy_rejects >= 18
    _criterion(8, "moment pipeline completeness and rejection", ok,
               f"benign Gaussian accepts {accepts}/20 >= 15 with Delta = 3x "
               f"calibrated envelope ({3 * envelope:.3f}); +1 mean shift "
               f"rejected {shift_rejects}/20 >= 18; Student-t(3) tails "
               f"rejected {heavy_rejects}/20 >= 18")


def test_criterion_09_moment_transfer_bound():
    d, ell, B_coef, n = 2, 2, 1.0, 10 ** 6
    Xa = sample(UniformCube(a=1.0, d=d), n, seed=905).X
    Xb = sample(UniformBall(R=1.0, d=d), n, seed=906).X
    idx4 = MultiIndexSet(d, 2 * ell)
    Delta_hat = float(np.max(np.abs(empirical_moments_all(Dataset(Xa), idx4)
                                    - empirical_moments_all(Dataset(Xb), idx4))))
    idx2 = MultiIndexSet(d, ell)
    Da, Db = idx2.design_matrix(Xa), idx2.design_matrix(Xb)
    bound_const = 4.0 * B_coef ** 2 * d ** (2 * ell)

    rng = np.random.default_rng(909)
    worst_margin = np.inf
    for _ in range(50):
        c = rng.uniform(-B_coef, B_coef, size=(2, idx2.alphas.shape[0]))
        ga, gb = Da @ (c[0] - c[1]), Db @ (c[0] - c[1])
        diff = abs(float(np.mean(ga ** 2)) - float(np.mean(gb ** 2)))
        se = math.sqrt(np.var(ga ** 2) / n + np.var(gb ** 2) / n)
        worst_margin = min(worst_margin, bound_const * Delta_hat + 2 * se - diff)
    ok = worst_margin >= 0.0
    _criterion(9, "moment-matching loss transfer bound", ok,
               f"|loss gap| <= 4 B^2 d^(2 ell) Delta + CI slack on 50 random "
               f"polynomial pairs (measured Delta {Delta_hat:.4f}, worst "
               f"margin {worst_margin:.3f} >= 0)")


def test_criterion_10_sigmoid_uniform_approximation():
    eps = 1e-2
    deg4 = degree_for_target(sigmoid, 4.0, eps, max_degree=512)
    p4 = chebyshev_approx_univariate(sigmoid, 4.0, deg4)
    sup4 = grid_sup_error(p4, sigmoid, 4.0).value

    degrees = {R: degree_for_target(sigmoid, R, eps, max_degree=512)
               for R in (2.0, 4.0, 8.0)}
    fits = {R: degrees[R] / (R * math.log(R / eps)) for R in degrees}
    monotone = degrees[2.0] <= degrees[4.0] <= degrees[8.0]
    subquadratic = degrees[8.0] / degrees[2.0] < (8.0 / 2.0) ** 2
    fit_spread = max(fits.values()) / min(fits.values())

    net = random_net(5, (3, 1), SIGMOID, weight_scale=0.6, rng_seed=10)
    _, _, cert = compose_sigmoid_net_approx(net, eps=0.05, R=1.0, seed=0)

    ok = (sup4 <= eps and deg4 <= 40 and monotone and subquadratic
          and fit_spread <= 2.0 and cert.measured_sup_error <= 0.05)
    _criterion(10, "sigmoid uniform approximation", ok,
               f"degree {deg4} <= 40 gives sup {sup4:.2e} <= 1e-2 on [-4,4]; "
               f"degrees {degrees[2.0]}/{degrees[4.0]}/{degrees[8.0]} over R=2/4/8 "
               f"monotone and sub-quadratic, R log(R/eps) fit constants "
               f"{fits[2.0]:.2f}/{fits[4.0]:.2f}/{fits[8.0]:.2f} within 2x; "
               f"depth-2 net certificate {cert.measured_sup_error:.3f} <= 0.05")


def test_criterion_11_net_lipschitz_certificate():
    rng = np.random.default_rng(1111)
    worst_ratio = 0.0
    for i in range(20):
        d = int(rng.integers(2, 5))
        widths = ((int(rng.integers(2, 5)), 1) if i % 2 == 0
                  else (int(rng.integers(2, 5)), int(rng.integers(2, 4)), 1))
        net = random_net(d, widths, SIGMOID,
                         weight_scale=float(rng.uniform(0.5, 1.5)),
                         rng_seed=2000 + i)
        cert = net_norms(net).lipschitz_cert
        X = rng.normal(scale=2.0, size=(10 ** 4, d))
        Y = rng.normal(scale=2.0, size=(10 ** 4, d))
        quot = (np.abs(net_eval_batch(net, X) - net_eval_batch(net, Y))
                / np.linalg.norm(X - Y, axis=1))
        worst_ratio = max(worst_ratio, float(np.max(quot)) / cert)
    ok = worst_ratio <= 1.0
    _criterion(11, "net Lipschitz certificate", ok,
               f"max difference quotient / certificate = {worst_ratio:.4f} <= 1 "
               f"over 20 random depth-2/3 nets x 1e4 pairs")


def test_criterion_12_adversarial_label_necessity():
    pair = adversarial_label_scenario(Y=1.0, p=1e-4, m_expected=100)
    second_moment_err = abs(pair.test_label_second_moment() - 1.0)
    rng = np.random.default_rng(1212)
    span = 2.0 * pair.planted_label
    min_excess = min(pair.worst_excess_sq(float(rng.uniform(-span, span)))
                     for _ in range(100))
    ok = second_moment_err <= 1e-12 and min_excess >= 0.25 - 1e-12
    _criterion(12, "adversarial label necessity", ok,
               f"E[y^2] matches Y=1 exactly ({second_moment_err:.1e}); worst-"
               f"instance excess >= Y/4 for all 100 hypotheses "
               f"(min {min_excess:.4f})")


def test_criterion_13_reproducibility():
    net = random_net(3, (2, 1), SIGMOID, weight_scale=1.0, rng_seed=4)
    ball = UniformBall(R=1.0, d=3)
    scen = ScenarioSpec(train_marginal=ball, test_marginal=ball, target=net,
                        M=1.0, seed=0)
    config = ExperimentConfig(scenario=scen, pipeline="kernel",
                              params=_kernel_desk_params(), trials=3, seed=1313,
                              kernel_spec=KernelSpec(degree_vector=(3,)),
                              holdout=2000)
    t0 = time.perf_counter()
    first = run_experiment(config)
    second = run_experiment(config)
    json_same = report_json_bytes(first) == report_json_bytes(second)
    csv_same = report_csv_bytes(first) == report_csv_bytes(second)
    ok = json_same and csv_same
    _criterion(13, "report reproducibility", ok,
               f"two runs of the same config+seed produced byte-identical "
               f"JSON ({json_same}) and CSV ({csv_same}) reports "
               f"in {time.perf_counter() - t0:.1f}s")

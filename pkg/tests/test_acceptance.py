"""Acceptance suite.

Each test prints one ``[acceptance k] PASS|FAIL`` line with the measured
quantities, then asserts the same condition. Run on its own with
``python tests/test_acceptance.py`` to get just the report lines.

Criteria 1 and 2 (interval length bands) and the bagging target in 7 are
known to fail under the data-generating process and closed form as
implemented; see the README for the numbers.
"""

import functools
import math
import sys
import time

import numpy as np
import pytest

from stabcp import (
    BaggingConfig,
    Dataset,
    GridSpec,
    LipschitzProfile,
    RlmConfig,
    RlmLearner,
    ScreeningConfig,
    SgdConfig,
    SgdLearner,
    SyntheticSpec,
    bagging_bound_derandomized,
    bagging_bound_probabilistic,
    bh_procedure,
    default_grid,
    fit_bagging,
    fit_rlm,
    fit_sgd_coupled_loo,
    full_cp,
    gen_synthetic,
    huber_dz,
    huber_loss,
    init_mlp,
    lipschitz_profile_linear_huber,
    loo_stabcp,
    lower_quantile,
    mlp_forward,
    mlp_gradient,
    rlm_bounds,
    ro_stabcp,
    run_screening,
    sgd_bounds_convex,
    sgd_bounds_nonconvex,
    split_cp,
)

pytestmark = pytest.mark.slow

ALPHA = 0.1
REPS = 100


def _report(k, ok, detail):
    line = f"[acceptance {k}] {'PASS' if ok else 'FAIL'}  {detail}"
    # bypass pytest's capture so the line lands in the -v log
    capman = _report.capture
    if capman is not None:
        with capman.global_and_fixture_disabled():
            print(line)
    else:
        print(line)
    sys.stdout.flush()


_report.capture = None


@pytest.fixture(autouse=True)
def _uncaptured(request):
    _report.capture = request.config.pluginmanager.getplugin("capturemanager")
    yield
    _report.capture = None


def _seeds(master, reps):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master).spawn(reps)]


def _cover_len(intervals, y):
    cover = np.mean([iv.contains(v) for iv, v in zip(intervals, y)])
    return float(cover), float(np.mean([iv.length for iv in intervals]))


def _band(x, lo, hi):
    return lo <= x <= hi


# ------------------------------------------------------------------ 1. RLM


@functools.lru_cache(maxsize=None)
def _rlm_runs():
    out = []
    for s in _seeds(1, REPS):
        train, test = gen_synthetic(SyntheticSpec(n=100, m=100, d=100, rho_ar=0.5, seed=s))
        out.append(_cover_len(loo_stabcp(train, test.X, ALPHA, RlmLearner()), test.y))
    return np.array(out)


def test_acceptance_1_rlm_linear():
    runs = _rlm_runs()
    cov, length = runs.mean(axis=0)
    sd = runs.std(axis=0, ddof=1)
    ok_cov, ok_len = _band(cov, 0.87, 0.95), _band(length, 3.1, 3.8)
    _report(1, ok_cov and ok_len,
            f"RLM LOO-StabCP coverage {cov:.3f} (sd {sd[0]:.3f}) in [0.87, 0.95]: {ok_cov}; "
            f"length {length:.3f} (sd {sd[1]:.3f}) in [3.1, 3.8]: {ok_len}")
    assert ok_cov and ok_len


# ------------------------------------------------------------------ 2 and 5. SGD


def _sgd(seed):
    return SgdLearner(SgdConfig(epochs=15, learning_rate=0.001, permutation_seed=seed))


@functools.lru_cache(maxsize=None)
def _sgd_runs():
    rows, tau_exact = [], True
    for s in _seeds(2, REPS):
        train, test = gen_synthetic(SyntheticSpec(n=100, m=100, d=100, rho_ar=0.5, seed=s))
        L = _sgd(s)
        L.prepare(train)
        for a, b in zip(L.loo_bounds(train.X, test.X), L.ro_bounds(train.X, test.X)):
            tau_exact &= bool(np.all(b.tau_train == 2 * a.tau_train) and b.tau_test == 2 * a.tau_test)
        t0 = time.perf_counter()
        loo = loo_stabcp(train, test.X, ALPHA, _sgd(s))
        t_loo = time.perf_counter() - t0
        t0 = time.perf_counter()
        ro = ro_stabcp(train, test.X, ALPHA, _sgd(s))
        t_ro = time.perf_counter() - t0
        rows.append((*_cover_len(loo, test.y), _cover_len(ro, test.y)[1], t_loo, t_ro))
    return np.array(rows), tau_exact


def test_acceptance_2_sgd_linear():
    runs, tau_exact = _sgd_runs()
    cov, length = runs[:, 0].mean(), runs[:, 1].mean()
    ordered = bool(np.all(runs[:, 1] <= runs[:, 2]))
    ok_cov, ok_len = _band(cov, 0.86, 0.95), _band(length, 3.0, 3.8)
    ok = ok_cov and ok_len and tau_exact and ordered
    _report(2, ok,
            f"SGD LOO-StabCP coverage {cov:.3f} in [0.86, 0.95]: {ok_cov}; "
            f"length {length:.3f} in [3.0, 3.8]: {ok_len}; tau_RO == 2 tau_LOO: {tau_exact}; "
            f"LOO length <= RO length every rep: {ordered}")
    assert ok


def test_acceptance_5_complexity():
    train, test = gen_synthetic(SyntheticSpec(n=40, m=4, d=5, seed=5))
    grid = GridSpec(np.linspace(-4, 4, 9))
    counts = {}
    for name, run in [
        ("loo", lambda L: loo_stabcp(train, test.X, ALPHA, L)),
        ("split", lambda L: split_cp(train, test.X, ALPHA, L)),
        ("ro", lambda L: ro_stabcp(train, test.X, ALPHA, L)),
        ("full", lambda L: full_cp(train, test.X, ALPHA, L, grid)),
    ]:
        L = RlmLearner()
        run(L)
        counts[name] = L.counter.count
    expected = {"loo": 1, "split": 1, "ro": test.n + 1, "full": grid.values.size * test.n}
    ok_counts = counts == expected
    runs, _ = _sgd_runs()
    faster = int(np.sum(runs[:, 3] < runs[:, 4]))
    ok = ok_counts and faster >= 95
    _report(5, ok, f"fit counts {counts} (expected {expected}); "
                   f"LOO faster than RO at m=100 in {faster}/100 reps (need >= 95)")
    assert ok


# ------------------------------------------------------------------ 3. containment


def test_acceptance_3_containment():
    rng = np.random.default_rng(3)
    bad = {"rlm-loo": 0, "rlm-ro": 0, "sgd-loo": 0, "sgd-ro": 0}
    empty = 0
    for inst in range(50):
        n, d, m = 20, 2, 3
        X = rng.normal(size=(n + m, d)) / np.sqrt(d)
        y = X @ rng.normal(size=d) + rng.normal(size=n + m)
        train = Dataset(X[:n], y[:n])
        grid = default_grid(train.y, 200)
        makers = {
            "rlm": lambda: RlmLearner(RlmConfig(grad_tol=1e-10)),
            "sgd": lambda: SgdLearner(SgdConfig(epochs=5, learning_rate=0.05, permutation_seed=inst)),
        }
        for name, make in makers.items():
            full = full_cp(train, X[n:], ALPHA, make(), grid)
            loo = loo_stabcp(train, X[n:], ALPHA, make())
            ro = ro_stabcp(train, X[n:], ALPHA, make())
            empty += sum(f.empty for f in full)
            bad[f"{name}-loo"] += sum(not a.contains_interval(f) for a, f in zip(loo, full))
            bad[f"{name}-ro"] += sum(not b.contains_interval(f) for b, f in zip(ro, full))
    ok = not any(bad.values())
    _report(3, ok, f"FullCP accepted set outside stable interval (150 test points each): {bad}; "
                   f"empty FullCP sets {empty}")
    assert ok


# ------------------------------------------------------------------ 4. empirical stability


def _instance(rng):
    n, d = int(rng.integers(5, 31)), int(rng.integers(1, 6))
    X = rng.normal(size=(n, d)) / np.sqrt(d)
    y = X @ rng.normal(size=d) + rng.normal(size=n)
    return Dataset(X, y), rng.normal(size=d) / np.sqrt(d)


def _score_shift(data, x, yv, pred_with, pred_without):
    # absolute score at the observed response of each point
    z = np.append(data.y, yv)
    return np.abs(np.abs(z - pred_with) - np.abs(z - pred_without))


def test_acceptance_4_empirical_stability():
    rng = np.random.default_rng(4)
    cfg = RlmConfig(grad_tol=1e-9)
    worst_rlm = -math.inf
    for _ in range(100):
        data, x = _instance(rng)
        pts = np.vstack([data.X, x])
        base = fit_rlm(data, cfg, 1.0).predict(pts)
        prof = lipschitz_profile_linear_huber(data.X, x[None, :], 1.0, cfg.omega_weight)
        loo, _ = rlm_bounds(prof, 0)
        tau = np.append(loo.tau_train, loo.tau_test) + 2 * cfg.grad_tol / prof.lambda_sc
        for yv in np.linspace(-10, 10, 50):
            f = fit_rlm(data.augment(x, yv), cfg, 1.0).predict(pts)
            worst_rlm = max(worst_rlm, float(np.max(_score_shift(data, x, yv, f, base) - tau)))
    worst_sgd = -math.inf
    for rep in range(100):
        data, x = _instance(rng)
        scfg = SgdConfig(epochs=5, learning_rate=0.05, permutation_seed=rep)
        prof = lipschitz_profile_linear_huber(data.X, x[None, :], 1.0, 0.0)
        loo, _ = sgd_bounds_convex(prof, scfg.epochs, scfg.learning_rate, 0)
        tau = np.append(loo.tau_train, loo.tau_test)
        pts = np.vstack([data.X, x])
        for yv in np.linspace(-10, 10, 50):
            a, b = fit_sgd_coupled_loo(data, (x, yv), scfg, 1.0)
            shift = _score_shift(data, x, yv, a.predict(pts), b.predict(pts))
            worst_sgd = max(worst_sgd, float(np.max(shift - tau)))
    ok = worst_rlm <= 0 and worst_sgd <= 0
    _report(4, ok, f"max(shift - bound): RLM with slack {worst_rlm:.3e}, coupled SGD {worst_sgd:.3e} (need <= 0)")
    assert ok


# ------------------------------------------------------------------ 6. screening


def _bh_brute(p, q):
    m = len(p)
    k_star = 0
    for k in range(1, m + 1):
        if sum(v <= q * k / m for v in p) >= k:
            k_star = k
    return k_star, [j for j in range(m) if k_star and p[j] < q * k_star / m]


def test_acceptance_6_screening():
    qs = (0.1, 0.2, 0.3)
    reps = 500
    fdp = {q: [] for q in qs}
    n_rej = {q: [] for q in qs}
    contained = 0
    for s in _seeds(6, reps):
        train, test = gen_synthetic(SyntheticSpec(n=500, m=100, d=10, noise_sd=0.5, seed=s))
        c = float(np.median(train.y))
        ok_rep = True
        for q in qs:
            cfg = ScreeningConfig(q, c)
            mk = lambda: SgdLearner(SgdConfig(epochs=15, learning_rate=0.004, permutation_seed=s))  # noqa: E731
            loo = run_screening(train, test.X, cfg, "loo-cfbh", mk(), test_y=test.y)
            ro = run_screening(train, test.X, cfg, "ro-cfbh", mk(), test_y=test.y, ro_refit=False)
            fdp[q].append(loo.fdp)
            n_rej[q].append(loo.rejected.size)
            ok_rep &= set(ro.rejected) <= set(loo.rejected)
        contained += ok_rep
    rng = np.random.default_rng(66)
    bh_bad = 0
    for _ in range(3000):
        m = int(rng.integers(1, 13))
        # lattice values so that ties and boundary hits occur
        p = rng.integers(1, 21, size=m) / 20.0
        q = float(rng.choice([0.05, 0.1, 0.2, 0.3, 0.5]))
        k, rej = bh_procedure(p, q)
        bk, brej = _bh_brute(list(p), q)
        bh_bad += (k != bk) or (list(rej) != brej)
    means = {q: float(np.mean(fdp[q])) for q in qs}
    limits = {q: q + 2 * math.sqrt(q * (1 - q) / reps) for q in qs}
    ok_fdr = all(means[q] <= limits[q] for q in qs)
    ok = ok_fdr and contained == reps and bh_bad == 0
    fdr_txt = ", ".join(f"q={q}: {means[q]:.4f} <= {limits[q]:.4f} ({np.mean(n_rej[q]):.1f} rejections)"
                        for q in qs)
    _report(6, ok, f"LOO-cfBH mean FDP {fdr_txt}; LOO >= RO rejections in {contained}/{reps} reps; "
                   f"BH vs brute force mismatches {bh_bad}/3000")
    assert ok


# ------------------------------------------------------------------ 7. bound formulas


def test_acceptance_7_bound_formulas():
    rng = np.random.default_rng(7)
    err = 0.0
    for _ in range(200):
        n, m = int(rng.integers(1, 40)), int(rng.integers(1, 5))
        rho, nu = rng.uniform(0, 3, n + m), rng.uniform(0, 3, n + m)
        gamma, lam = rng.uniform(0.1, 2), rng.uniform(0.1, 4)
        prof = LipschitzProfile(rho, nu, rng.uniform(0, 3, n + m), gamma, lam, n)
        j = int(rng.integers(m))
        loo, ro = rlm_bounds(prof, j)
        rho_bar = rho[:n].mean()
        want_loo = 2 * gamma * nu * (rho[n + j] + rho_bar) / (lam * (n + 1))
        want_ro = 4 * gamma * nu * rho[n + j] / (lam * (n + 1))
        idx = np.append(np.arange(n), n + j)
        got_loo = np.append(loo.tau_train, loo.tau_test)
        got_ro = np.append(ro.tau_train, ro.tau_test)
        err = max(err, float(np.max(np.abs(got_loo - want_loo[idx]))),
                  float(np.max(np.abs(got_ro - want_ro[idx]))))
    bag = bagging_bound_derandomized(1.0, 2.0, 100, 100)
    ok_bag = abs(bag - 1.31623) <= 1e-4
    same = True
    for _ in range(50):
        n = int(rng.integers(1, 30))
        prof = LipschitzProfile(rng.uniform(0, 2, n + 1), rng.uniform(0, 2, n + 1),
                                np.zeros(n + 1), 1.0, 0.0, n)
        R, eta = int(rng.integers(1, 20)), float(rng.uniform(1e-4, 0.5))
        a, b = sgd_bounds_convex(prof, R, eta, 0), sgd_bounds_nonconvex(prof, R, eta, 0)
        same &= all(np.array_equal(x.tau_train, y.tau_train) and x.tau_test == y.tau_test
                    for x, y in zip(a, b))
    ok = err <= 1e-12 and ok_bag and same
    _report(7, ok, f"rlm_bounds max abs error {err:.2e} (<= 1e-12); "
                   f"bagging bound {bag:.7f} vs 1.31623 +/- 1e-4: {ok_bag}; "
                   f"non-convex == convex at phi = 0: {same}")
    assert ok


# ------------------------------------------------------------------ 8. bagging frequency


def test_acceptance_8_bagging_frequency():
    rng = np.random.default_rng(8)
    n, B, delta, draws = 15, 200, 0.2, 500
    X = rng.normal(size=(n, 2))
    y = X[:, 0] + 0.5 * rng.normal(size=n)
    data = Dataset(X, y)
    x_new = rng.normal(size=2)
    y_new = float(np.median(y))
    w = float(y.max() - y.min())
    tau = bagging_bound_probabilistic(1.0, w, n, n, B, delta)
    pts = np.vstack([X, x_new])
    z = np.append(y, y_new)
    exceed = 0
    worst = 0.0
    seeds = np.random.SeedSequence(88).generate_state(2 * draws)
    for k in range(draws):
        base = fit_bagging(data, BaggingConfig(n_bags=B, seed=int(seeds[2 * k]))).predict(pts)
        aug = data.augment(x_new, y_new)
        cfg = BaggingConfig(n_bags=B, bag_size=n, seed=int(seeds[2 * k + 1]))
        with_pt = fit_bagging(aug, cfg).predict(pts)
        shift = float(np.max(np.abs(np.abs(z - with_pt) - np.abs(z - base))))
        worst = max(worst, shift)
        exceed += shift > tau
    frac = exceed / draws
    ok = frac <= delta
    _report(8, ok, f"fraction of draws with LOO score shift > tau(delta) = {frac:.3f} (<= {delta}); "
                   f"tau = {tau:.4f}, largest shift {worst:.4f}")
    assert ok


# ------------------------------------------------------------------ 9. numeric hygiene


def _mlp_fd(net, x, y, eps, h=1e-6):
    flat = net.flat()
    g = np.empty_like(flat)
    for k in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[k] += h
        dn[k] -= h
        g[k] = (huber_loss(eps, y, mlp_forward(net.with_flat(up), x))
                - huber_loss(eps, y, mlp_forward(net.with_flat(dn), x))) / (2 * h)
    return g


def test_acceptance_9_numeric_hygiene():
    rng = np.random.default_rng(9)
    worst = 0.0
    for sizes in ([3, 1], [4, 5, 1], [3, 4, 3, 1], [10, 20, 1]):
        net = init_mlp(sizes, rng)
        for _ in range(5):
            x = rng.normal(size=sizes[0])
            y = float(rng.normal()) * 0.3
            grads = mlp_gradient(net, x, y, lambda a, b: huber_dz(1.0, a, b))
            g = np.concatenate([np.concatenate([dW.ravel(), db]) for dW, db in grads])
            fd = _mlp_fd(net, x, y, 1.0)
            worst = max(worst, float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)))
    mismatches = 0
    for _ in range(10_000):
        size = int(rng.integers(1, 30))
        v = rng.integers(-5, 6, size=size).astype(float)
        p = float(rng.choice([rng.uniform(1e-3, 1.0), rng.integers(1, 11) / 10.0]))
        brute = sorted(v)[math.ceil(p * size - 1e-9) - 1]
        mismatches += lower_quantile(v, p) != brute
    ok = worst < 1e-5 and mismatches == 0
    _report(9, ok, f"MLP gradient max relative error {worst:.2e} (< 1e-5); "
                   f"lower_quantile mismatches {mismatches}/10000; "
                   f"recruitment table not reproduced (CSV not bundled)")
    assert ok


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_acceptance_"):
            try:
                fn()
            except AssertionError:
                pass

"""Acceptance criteria AC1-AC10.

Each test records one PASS/FAIL line that is printed in the terminal
summary, then asserts. Seeds are fixed up front; none was tuned to make a
criterion pass.
"""
import time

import numpy as np
import pytest

from iohmm.cluster import ClusterModel, ClusterStats, fit_clusters, observation_sequence
from iohmm.hmm import (Hmm, baum_welch, default_init, forward_backward, load_fixture,
                       log_likelihood, reestimate, simulate, viterbi)
from iohmm.mapgen import (add_erase_state, generators, run_lengths, simulate_ctmc,
                          simulate_jumps)
from iohmm.qsim import QueueSimConfig, build_jobs, simulate_queue
from iohmm.stats import acf, batch_means_ci, validate
from iohmm.synth import GenConfig, generate_trace
from iohmm.trace import BinnedTrace, thin_periodic
from oracles import (acf_double_loop, brute_posteriors, brute_viterbi,
                     proposition_update, random_hmm_arrays)

# ground-truth alphabet for AC1: update-mix style centroids, hand-chosen spreads
AC1_CENTROIDS = [(5.7, 0.28), (4.45, 31.3), (5.11, 82.1), (4.49, 183.0),
                 (23.7, 0.217), (24.5, 31.7), (27.3, 81.0), (25.8, 165.8)]
AC1_STDS = [(1.5, 0.3), (1.5, 5), (1.5, 8), (1.5, 12), (3, 0.3), (3, 5), (3, 8), (3, 12)]


def test_ac1_end_to_end_recovery(record_ac):
    t0 = time.perf_counter()
    truth = load_fixture("update_mix")
    clusters = ClusterModel(tuple(ClusterStats(i, c, s, 0.0, 0) for i, (c, s)
                                  in enumerate(zip(AC1_CENTROIDS, AC1_STDS))))
    raw, _, true_obs = generate_trace(truth, clusters, GenConfig(200_000, 12345),
                                      return_states=True)
    fitted_clusters = fit_clusters(raw, "product", k_r=2, k_w=4, seed=1)
    obs = observation_sequence(fitted_clusters, raw)
    fit = baum_welch(obs, 3, init=7)
    rep = validate(raw, (fit.hmm, fitted_clusters), replicates=10, level=0.95, seed=99)
    elapsed = time.perf_counter() - t0

    ll_fit = fit.log_likelihood / len(obs)
    ll_gen = log_likelihood(truth, true_obs) / len(true_obs)
    rel = abs(ll_fit - ll_gen) / abs(ll_gen)
    moments = ("read_mean", "read_std", "write_mean", "write_std")
    inside = {k: rep.metrics[k].inside for k in moments}
    ok = all(inside.values()) and rel <= 0.005 and elapsed < 120
    record_ac("AC1", ok, f"moments inside={inside} ll/symbol rel diff={rel:.2e} "
                         f"runtime={elapsed:.1f}s")
    assert all(inside.values()), rep.to_json()
    assert rel <= 0.005
    assert elapsed < 120


def _instances(rng, count, max_r, max_m, max_len):
    for _ in range(count):
        r = int(rng.integers(1, max_r + 1))
        m = int(rng.integers(1, max_m + 1))
        n1 = int(rng.integers(1, max_len + 1))
        nu, Q, G = random_hmm_arrays(rng, r, m)
        yield nu, Q, G, rng.integers(0, m, size=n1)


def test_ac2_em_correctness(record_ac):
    rng = np.random.default_rng(2)
    worst_ll = worst_phi = worst_step = 0.0
    count = 0
    for nu, Q, G, obs in _instances(rng, 240, 3, 4, 9):
        count += 1
        h = Hmm(nu, Q, G)
        phi, pair, total = brute_posteriors(nu, Q, G, obs)
        sc = forward_backward(h, obs)
        # |d log L| is the relative error of L itself
        worst_ll = max(worst_ll, abs(log_likelihood(h, obs) - np.log(total)))
        worst_phi = max(worst_phi, np.max(np.abs(sc.phi - phi) / phi))
        if len(obs) > 1:
            worst_phi = max(worst_phi, np.max(np.abs(sc.phi_pair - pair) / np.maximum(pair, 1e-300)
                                              * (pair > 0)))
            nu_e, Q_e, G_e = proposition_update(phi, pair, obs, h.m)
            new, _, _ = reestimate(h, obs)
            worst_step = max(worst_step, np.abs(new.nu - nu_e).max(),
                             np.abs(new.Q - Q_e).max(), np.abs(new.G - G_e).max())
    ok = worst_ll <= 1e-10 and worst_phi <= 1e-10 and worst_step <= 1e-12 and count >= 200
    record_ac("AC2", ok, f"{count} instances, max |d log L|={worst_ll:.1e}, "
                         f"max rel err posteriors={worst_phi:.1e}, one-step abs err={worst_step:.1e}")
    assert ok


def test_ac3_em_monotone_and_stochastic(record_ac):
    rng = np.random.default_rng(3)
    worst_drop = 0.0
    worst_row = 0.0
    for k in range(50):
        r = int(rng.integers(2, 5))
        m = int(rng.integers(2, 9))
        truth = Hmm(*random_hmm_arrays(rng, r, m))
        _, obs = simulate(truth, 10_000, seed=rng.integers(2**32))
        init = default_init(r, m, rng)
        res = baum_welch(obs, r, init=init, tol=1e-6, max_iter=200)
        worst_drop = max(worst_drop, -np.diff(res.trajectory).min(initial=0.0))
        # replay the iterates to check every intermediate model
        cur = init
        for _ in range(res.iterations):
            cur, _, _ = reestimate(cur, obs)
            worst_row = max(worst_row, abs(cur.nu.sum() - 1),
                            np.abs(cur.Q.sum(axis=1) - 1).max(),
                            np.abs(cur.G.sum(axis=1) - 1).max())
    ok = worst_drop <= 1e-8 and worst_row <= 1e-9
    record_ac("AC3", ok, f"50 fits, largest ll decrease={worst_drop:.1e}, "
                         f"largest row-sum drift={worst_row:.1e}")
    assert ok


def test_ac4_viterbi_oracle(record_ac):
    rng = np.random.default_rng(4)
    mismatches = 0
    count = 0
    for nu, Q, G, obs in _instances(rng, 220, 3, 4, 10):
        count += 1
        path, _ = brute_viterbi(nu, Q, G, obs)
        if not np.array_equal(viterbi(Hmm(nu, Q, G), obs).states, path):
            mismatches += 1
    ok = mismatches == 0 and count >= 200
    record_ac("AC4", ok, f"{count} instances, {mismatches} path mismatches")
    assert ok


def test_ac5_run_length(record_ac):
    h = load_fixture("update_mix")
    states, _ = simulate(h, 1_000_000, seed=5)
    rl = run_lengths(states, r=3)
    expected = 1 / (1 - 0.9972)
    rel = abs(rl.mean_run[0] - expected) / expected
    ok = rel <= 0.05
    record_ac("AC5", ok, f"mean state-0 run {rl.mean_run[0]:.1f} over {rl.run_counts[0]} runs "
                         f"vs {expected:.1f} (rel err {rel:.3f})")
    assert ok


def test_ac6_map_consistency(record_ac):
    h = load_fixture("update_mix")
    states, _ = simulate(h, 1_000_000, seed=6)
    mm = generators(h.Q, run_lengths(states, r=3), 0.005)
    ctmc_states, hold = simulate_ctmc(mm.A, 100_000, seed=61)
    hold_err = max(abs(hold[ctmc_states == i].mean() - mm.holding_mean[i]) / mm.holding_mean[i]
                   for i in range(3))

    write_state = 1
    em = add_erase_state(mm, write_state, 1 / 64)
    P = em.jump_chain()
    rows_ok = np.allclose(P.sum(axis=1), 1, atol=1e-12)
    path = simulate_jumps(P, 1_000_000, start=0, seed=62)
    prev, nxt = path[:-1], path[1:]
    erase_entries = int((nxt == 3).sum())
    # entries into the write state that are not the forced return from ERASE
    write_entries = int(((nxt == write_state) & (prev != 3)).sum())
    ratio = erase_entries / write_entries
    ratio_err = abs(ratio * 64 - 1)
    ok = hold_err <= 0.05 and rows_ok and ratio_err <= 0.02
    record_ac("AC6", ok, f"holding rel err={hold_err:.3f}; erase/write entries "
                         f"{erase_entries}/{write_entries} = 1/{1 / ratio:.2f} "
                         f"(rel err {ratio_err:.3f})")
    assert hold_err <= 0.05 and rows_ok
    assert ratio_err <= 0.02


def _local_max(rho, lag):
    return rho[lag - 1] > rho[lag - 2] and rho[lag - 1] > rho[lag]


def test_ac7_periodicity(record_ac):
    rng = np.random.default_rng(2024)
    seconds = 3000
    slot_means = {0: (120, 10), 1: (60, 40), 2: (20, 5), 4: (40, 90)}
    bins = np.zeros((seconds * 10, 2), dtype=np.int64)
    for slot, (mr, mw) in slot_means.items():
        bins[slot::10, 0] = rng.poisson(mr, seconds)
        bins[slot::10, 1] = rng.poisson(mw, seconds)
    raw = BinnedTrace(100_000, bins)
    raw_acf = acf(raw.reads + raw.writes, 35)
    raw_ok = all(_local_max(raw_acf, lag) for lag in (10, 20, 30))

    thin = thin_periodic(raw, 10, {0, 1, 2, 4})
    thin_acf = acf(thin.reads, 12)
    thin_ok = len(thin) == 0.4 * len(raw) and all(_local_max(thin_acf, lag) for lag in (4, 8))

    clusters = fit_clusters(thin, "joint", k=4, seed=3)
    fit = baum_welch(observation_sequence(clusters, thin), 6, init=5)
    syn = generate_trace(fit.hmm, clusters, GenConfig(len(thin), 11, bin_width=thin.bin_width))
    hmm_ok = True
    peaks = []
    for series in (syn.reads, syn.writes):
        rho = acf(series, 12)
        peaks.append(rho[[3, 7]].round(3).tolist())
        hmm_ok &= all(_local_max(rho, lag) and rho[lag - 1] > 0 for lag in (4, 8))
    ok = raw_ok and thin_ok and hmm_ok
    record_ac("AC7", ok, f"raw peaks at 10/20/30={raw_ok}, thinned period 4={thin_ok}, "
                         f"HMM ACF at lags 4,8 (reads, writes)={peaks}")
    assert ok


def test_ac8_queueing_order(record_ac):
    rng = np.random.default_rng(8)
    checked = 0
    failures = []
    for k in range(20):
        n = int(rng.integers(200, 2000))
        read_mean = rng.uniform(2, 30)
        write_mean = rng.uniform(0.5, 10)
        bins = np.column_stack([rng.poisson(read_mean, n), rng.poisson(write_mean, n)])
        raw = BinnedTrace(5000, bins)
        s_r, s_w = rng.uniform(10, 60), rng.uniform(50, 250)
        s_e = rng.uniform(500, 3000)
        load = (bins[:, 0].sum() * s_r + bins[:, 1].sum() * s_w
                + bins[:, 1].sum() // 64 * s_e) / (n * 5000)
        if load >= 0.95:
            s_r, s_w, s_e = (x * 0.9 / load for x in (s_r, s_w, s_e))
        spread = "bin_start" if k % 2 == 0 else "uniform"
        res = {}
        for scheme in ("none", "nonpreemptive", "preemptive"):
            cfg = QueueSimConfig(s_r, s_w, s_e, scheme, arrival_spread=spread, seed=k)
            res[scheme] = simulate_queue(raw, cfg)
        rd = {s: r.mean_queueing_ms["read"] for s, r in res.items()}
        wr = {s: r.mean_queueing_ms["write"] for s, r in res.items()}
        eps = 1e-12
        ordered = (rd["preemptive"] <= rd["nonpreemptive"] + eps <= rd["none"] + 2 * eps
                   and wr["none"] <= wr["nonpreemptive"] + eps)
        erases = all(r.counts["erase"] == int(bins[:, 1].sum()) // 64 for r in res.values())
        _, cls, _ = build_jobs(raw, QueueSimConfig(s_r, s_w, s_e))
        erases &= int((cls == 2).sum()) == int(bins[:, 1].sum()) // 64
        if not (ordered and erases):
            failures.append(k)
        checked += 1
    ok = not failures and checked == 20
    record_ac("AC8", ok, f"{checked} traces, ordering/erase-count failures: {failures}")
    assert ok


def _iteration_time(hmm, obs, iters=5):
    t = time.perf_counter()
    baum_welch(obs, hmm.r, init=hmm, tol=1e-300, max_iter=iters)
    # iters updates plus the final E-step
    return (time.perf_counter() - t) / (iters + 1)


def test_ac9_linear_iteration_time(record_ac):
    rng = np.random.default_rng(9)
    h = Hmm(*random_hmm_arrays(rng, 3, 8))
    _, obs = simulate(h, 200_000, seed=9)
    s = obs.obs
    _iteration_time(h, s[:1000], 1)  # compile outside the timing
    # interleave the two sizes so slow drift hits both; the minimum is the
    # run least disturbed by the rest of the machine
    t1, t2 = [], []
    for _ in range(9):
        t1.append(_iteration_time(h, s[:100_000]))
        t2.append(_iteration_time(h, s))
    ratio = min(t2) / min(t1)
    ok = 1.6 <= ratio <= 2.6
    record_ac("AC9", ok, f"per-iteration {min(t1) * 1e3:.1f} ms at n=1e5, "
                         f"{min(t2) * 1e3:.1f} ms at n=2e5, ratio {ratio:.2f}")
    assert ok


def test_ac10_statistics_oracles(record_ac):
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(10, 400))
        x = rng.normal(size=n).cumsum() if rng.random() < 0.5 else rng.poisson(3, n).astype(float)
        if np.ptp(x) == 0:
            x[0] += 1
        L = int(rng.integers(1, min(n - 1, 60) + 1))
        worst = max(worst, np.abs(acf(x, L) - acf_double_loop(x, L)).max())
    hits = sum(0 in batch_means_ci(rng.normal(size=10), 0.95) for _ in range(1000))
    coverage = hits / 1000
    ok = worst <= 1e-10 and 0.93 <= coverage <= 0.97
    record_ac("AC10", ok, f"acf max abs err={worst:.1e} over 100 series; "
                          f"coverage {coverage:.3f} over 1000 repetitions")
    assert ok

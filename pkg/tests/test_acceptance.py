"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or ``python tests/test_acceptance.py``.  Each verdict includes the
criterion's runtime limit.  Pilot-frozen seeds and thresholds are the
module constants below.
"""

import itertools
import math
import os
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from hct_oracle import make_checker  # noqa: E402
from helpers import from_edges  # noqa: E402
from sfplab.bounds import (big_degree_trend, coarse_grain, good_box_probability,  # noqa: E402
                           max_weight_conditional, recurrence_marginal_check, transience_sequences)
from sfplab.graphs import clusters, diameter_experiment, degree_tail  # noqa: E402
from sfplab.hierarchy import WeightedTree, extend_to_general_m, validate_hct  # noqa: E402
from sfplab.model import BoxGeometry, ModelParams  # noqa: E402
from sfplab.sampler import coupled_pair, sample_configuration  # noqa: E402
from sfplab.walk import effective_resistance, escape_from_resistance, srw_escape_probability  # noqa: E402

RESULTS = []

# pilot-frozen settings
DIAM_SEEDS = range(1000, 1010)
DIAM_PAIRS = 2000
DEGREE_SEEDS = range(10)
DEGREE_TOL = 0.25
WALK_SEED = 7
HCT_LAMBDA = 1.0
HCT_SEEDS = range(200)
HCT_MIN_SUCCESS = 0.30
RENORM_ALPHA = 7.9
RENORM_SIDE = 512


def record(k, ok, elapsed, limit, detail):
    ok = bool(ok) and elapsed < limit
    line = f"ACCEPTANCE {k:>2} {'PASS' if ok else 'FAIL'}  ({elapsed:.1f}s / {limit:.0f}s)  {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    return ok


def test_01_max_weight_grid():
    t = time.perf_counter()
    grid = list(itertools.product(range(1, 21), (1.5, 2.0, 3.0), (1.0, 1.5, 2.0, 4.0)))
    bad = [g for g in grid if not max_weight_conditional(g[0], 1.0, g[2], g[1]).verdict]
    assert record(1, not bad, time.perf_counter() - t, 1,
                  f"{len(grid)} tuples, {len(bad)} violations (zero tolerance)")


def test_02_big_degree_trend():
    t = time.perf_counter()
    tr = big_degree_trend([16, 64, 256], 1.0, ModelParams(2, 3.0, 1.5, 1.0))
    ok = tr["increasing"] and tr["P"][-1] > 0.99
    logs = ", ".join(f"{x:.2f}" for x in tr["log_complement"])
    assert record(2, ok, time.perf_counter() - t, 1,
                  f"P = {tr['P']}, log(1-P) = [{logs}] strictly decreasing")


def test_03_coupling_monotone():
    t = time.perf_counter()
    g = BoxGeometry.cube(1, 64)
    lams = (0.25, 0.5, 1.0)
    viol = checked = 0
    for alpha in (0.5, 1.5, 3.0):
        for s in range(100):
            cfgs = [sample_configuration(g, ModelParams(1, alpha, 2.0, lam), s) for lam in lams]
            for lo, hi in zip(cfgs, cfgs[1:]):
                k = lo.edge_keys()
                checked += k.size
                viol += int((~np.isin(k, hi.edge_keys())).sum())
    assert record(3, viol == 0, time.perf_counter() - t, 30,
                  f"100 seeds x alpha in (0.5, 1.5, 3), {checked} lo-edges checked, {viol} violations")


def test_04_diameter():
    t = time.perf_counter()
    p = ModelParams(1, 0.5, 2.0, 1.0)
    fr, diams = [], []
    for m in (64, 128, 256, 512):
        rep = diameter_experiment(BoxGeometry.cube(1, m), p, 4, DIAM_PAIRS, len(DIAM_SEEDS), DIAM_SEEDS.start)
        fr.append(rep.fraction_within(2))
        diams.append(rep.diameter_exact)
    ok = all(b >= a for a, b in zip(fr, fr[1:])) and fr[-1] >= 0.95
    assert record(4, ok, time.perf_counter() - t, 300,
                  f"fraction within 2 over m=64..512: {fr}, exact diameters {diams}")


def test_05_degree_tail(monkeypatch):
    monkeypatch.setenv("SFP_MAX_PAIRS", str(3 * 10**9))
    t = time.perf_counter()
    p = ModelParams(2, 3.0, 2.2, 1.0)
    g = [degree_tail(sample_configuration(BoxGeometry.cube(2, 256), p, s)).gamma_hat for s in DEGREE_SEEDS]
    mean = float(np.mean(g))
    assert record(5, abs(mean - p.gamma) <= DEGREE_TOL, time.perf_counter() - t, 300,
                  f"mean gamma_hat {mean:.3f} (sd {np.std(g):.3f}) vs gamma {p.gamma:.2f}, tol {DEGREE_TOL}")


def test_06_recurrence_marginal():
    t = time.perf_counter()
    ks = [32, 64, 128, 256, 512]
    a = recurrence_marginal_check(ModelParams(2, 4.5, 2.5, 1.0), ks)
    b = recurrence_marginal_check(ModelParams(2, 4.0, 2.2, 1.0), ks)
    ok_a = a.extra["decreasing"]
    vb = b.extra["values"]
    ok_b = vb[-1] < vb[0] and abs(b.extra["tail_slope"] - (4 - 2 * 2.4)) <= 0.1
    detail = (f"tau>2 branch decreasing={ok_a}; (alpha=4, tau=2.2) values "
              f"{', '.join(f'{v:.2f}' for v in vb)} slope {b.extra['tail_slope']:+.3f} vs -0.8"
              f" -> {'ok' if ok_b else 'sequence tends to lam*E[W]^2 = 36, not 0'}")
    assert record(6, ok_a and ok_b, time.perf_counter() - t, 60, detail)


def test_07_walk_identity():
    t = time.perf_counter()
    cfg = sample_configuration(BoxGeometry.cube(2, 32), ModelParams(2, 3.0, 2.2, 1.0), WALK_SEED)
    lab = clusters(cfg)
    mem = lab.members(lab.largest_id)
    rng = np.random.default_rng(0)
    worst = 0.0
    for i in range(20):
        s, R = int(mem[rng.integers(mem.size)]), int(rng.integers(2, 12))
        p = escape_from_resistance(cfg, s, effective_resistance(cfg, s, R))
        est = srw_escape_probability(cfg, s, R, 20_000, 10**6, 100 + i)
        se = math.sqrt(p * (1 - p) / 20_000)
        worst = max(worst, abs(est.p - p) / se if se > 0 else (0.0 if est.p == p else math.inf))
    series = all(abs(effective_resistance(from_edges(L + 1, [(i, i + 1) for i in range(L)]), 0, L) - L) < 1e-8
                 for L in (1, 4, 9))
    g = BoxGeometry.cube(2, 7)
    arm_a = [g.index_of((i, 0)) for i in range(7)]
    arm_b = [0] + [g.index_of((0, i)) for i in range(1, 7)]
    par = from_edges(0, list(zip(arm_a, arm_a[1:])) + list(zip(arm_b, arm_b[1:])), geometry=g)
    parallel = abs(effective_resistance(par, 0, 6) - 3.0) < 1e-8
    ok = worst <= 3 and series and parallel
    assert record(7, ok, time.perf_counter() - t, 120,
                  f"worst |z| over 20 instances {worst:.2f}; series {series}; parallel {parallel}")


def test_08_transience_identity():
    t = time.perf_counter()
    worst, sums_ok = 0.0, True
    for d, g in itertools.product((1, 2), (1.2, 1.8)):
        out = transience_sequences(12, ModelParams(d, 2 * g * d, 1.5, 1.0))
        worst = max(worst, out["max_rel_error"])
        ref = Fraction(0)
        for n in range(1, 13):
            ref += Fraction(1, (n + 1) ** (2 * d))
        sums_ok &= out["partial_sums_exact"] and Fraction(out["partial_sum"]) == Fraction(float(ref))
    assert record(8, worst < 1e-9 and sums_ok, time.perf_counter() - t, 1,
                  f"max relative error {worst:.1e}; partial sums exact {sums_ok}")


def test_09_hct_brute_force():
    import networkx as nx
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    shapes = [nx.empty_graph(1)] + [tr for k in range(2, 9) for tr in nx.nonisomorphic_trees(k)]
    cells = list(itertools.product(range(3), repeat=2))
    disagree = valid = 0
    for case in range(500):
        shape = shapes[case % len(shapes)]
        k = shape.number_of_nodes()
        coords = [cells[i] for i in rng.permutation(9)[:k]]
        if case % 2:
            w = rng.permutation(k).astype(float) + 1
        else:
            root = int(rng.integers(k))
            order = [root] + [v for _, v in nx.bfs_edges(shape, root)]
            w = np.empty(k)
            w[order] = np.arange(k, 0, -1.0) + 0.5 * rng.random(k)
        rho = float(rng.choice([0.01, 0.05, 0.1, 0.2]))
        K = float(rng.choice([1, 2, 3, 5, 8]))
        edges = list(shape.edges())
        mine = validate_hct(WeightedTree(coords, w, edges, (0, 0), 3), rho, K, mode="exhaustive").valid
        ref = make_checker(coords, w, edges, rho, K)(frozenset(range(k)), (0, 0), 3)
        disagree += mine != ref
        valid += ref
    assert record(9, disagree == 0, time.perf_counter() - t, 120,
                  f"500 trees ({len(shapes)} shapes, <= 8 vertices), {valid} valid, {disagree} disagreements")


def test_10_hct_constructor():
    t = time.perf_counter()
    p = ModelParams(1, 1.5, 1.8, HCT_LAMBDA, mu=0.95)
    success = invalid = too_deep = 0
    for s in HCT_SEEDS:
        cfg = sample_configuration(BoxGeometry.cube(1, 208), p, s)
        res = extend_to_general_m(p, 0.15, 4, 208, cfg)
        if res is None:
            continue
        success += 1
        c = res.certificate
        invalid += not validate_hct(res.tree, c.rho, c.K, certificate=c).valid
        too_deep += res.merged_diameter - max(res.stage_diameters) > 2
    rate = success / len(HCT_SEEDS)
    ok = rate >= HCT_MIN_SUCCESS and invalid == 0 and too_deep == 0
    assert record(10, ok, time.perf_counter() - t, 600,
                  f"m=208 (n=2, k=4), lambda={HCT_LAMBDA}: success {rate:.2f}, invalid {invalid}, "
                  f"merge adds > 2: {too_deep}")


def test_11_good_box_frequency():
    t = time.perf_counter()
    out = []
    for alpha in (3.0, RENORM_ALPHA):
        # weights do not depend on lambda; lambda = 0 skips the unused edge sweep
        p = ModelParams(2, alpha, 1.5, 0.0)
        exact = good_box_probability(64, 1.0, p)
        freq = float(np.mean([coarse_grain(sample_configuration(BoxGeometry.cube(2, RENORM_SIDE), p, s),
                                           64, 1.0).good_fraction for s in range(200)]))
        out.append((alpha, exact, freq))
    ok = all(abs(f - e) <= 0.03 for _, e, f in out)
    detail = "; ".join(f"alpha={a}: exact {e:.4f}, empirical {f:.4f}" for a, e, f in out)
    assert record(11, ok, time.perf_counter() - t, 120, f"{detail} (200 seeds x 64 boxes)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))

"""Acceptance criteria, one test per criterion, each reporting a PASS/FAIL line."""

import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from crosslink.association import brute_force_select, check_assignment, select_nodes
from crosslink.cli import main
from crosslink.device_filter import filter_randomized, filter_rss, filter_vendors, run_filter
from crosslink.evaluation import rand_g_distinguishability
from crosslink.ingest import bundled_oui_path, load_oui, sessionize
from crosslink.linkage_tree import build_tree, build_tree_arrays
from crosslink.model import Dataset
from crosslink.pipeline import RunConfig, prepare, run
from crosslink.simulate import SimConfig, generate, simulate

from helpers import crafted_corpus
from test_association import random_instance
from test_linkage_tree import check_invariants, make_samples, reference_merges

README = Path(__file__).resolve().parents[1] / "README.md"
OUI = load_oui(bundled_oui_path())
NOISY = dict(victims=20, oos_subjects=10, sessions=60, device_miss_prob=0.1, phantom_prob=0.05, embed_noise_sigma=0.35)


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


def sim_run(cfg: SimConfig, configs):
    """Simulate once and evaluate every run config on the shared preparation."""
    r = simulate(cfg)
    ds = Dataset(r.sessions, r.samples, r.sightings, r.registry)
    labels = {s.sample_id: s.true_label for s in r.samples}
    prepared = prepare(ds, OUI, configs[0])
    return [run(ds, OUI, c, labels, prepared=prepared) for c in configs]


def test_c01_solver_matches_oracle():
    t0 = time.perf_counter()
    bad = []
    for seed in range(200):
        rng = np.random.default_rng([1, seed])
        n, m, k = int(rng.integers(1, 13)), int(rng.integers(1, 6)), int(rng.integers(1, 5))
        tree, sm = random_instance(rng, n, m, "subset" if seed % 4 == 3 else "all")
        a, b = select_nodes(tree, sm, k), brute_force_select(tree, sm, k)
        check_assignment(tree, a)
        check_assignment(tree, b)
        if abs(a.objective - b.objective) > 1e-9:
            bad.append(seed)
    elapsed = time.perf_counter() - t0
    verdict(1, not bad and elapsed < 60, f"200 instances, {len(bad)} mismatches, {elapsed:.1f}s (limit 60s)")


def test_c02_clean_data_exact():
    rows, slow = [], 0.0
    for seed in range(10):
        t0 = time.perf_counter()
        cfg = SimConfig(seed=seed, victims=15, oos_subjects=0, sessions=40, device_miss_prob=0.0, phantom_prob=0.0,
                        embed_noise_sigma=0.1)
        (res,) = sim_run(cfg, [RunConfig(k=15, omega=0.5, metric="dice")])
        slow = max(slow, time.perf_counter() - t0)
        rows.append((res.report.accuracy, res.report.mean_purity))
    ok = all(a == 1.0 and p == 1.0 for a, p in rows) and slow < 30
    worst = min(a for a, _ in rows), min((p or 0.0) for _, p in rows)
    verdict(2, ok, f"10 seeds, min accuracy {worst[0]:.3f}, min purity {worst[1]:.3f}, slowest seed {slow:.1f}s")


def test_c03_real_world_numbers_documented():
    text = README.read_text(encoding="utf-8") if README.exists() else ""
    ok = "## Real-world results" in text and "not reproducible" in text
    verdict(3, ok, "field results not reproducible without the raw captures; covered by criteria 4-6 (see README)")


@pytest.fixture(scope="module")
def noisy_runs():
    """Accuracy per seed for each method and K ratio on the noisy scenario."""
    configs = {
        "ours": RunConfig(k_ratio=1.25),
        "euclidean": RunConfig(k_ratio=1.25, metric="euclidean"),
        "naive": RunConfig(k_ratio=1.25, baseline="naive"),
        "k0.75": RunConfig(k_ratio=0.75),
        "k1.0": RunConfig(k_ratio=1.0),
    }
    out = {name: [] for name in configs}
    for seed in range(10):
        results = sim_run(SimConfig(seed=seed, **NOISY), list(configs.values()))
        for name, res in zip(configs, results):
            out[name].append(res.report.accuracy)
    return {name: np.array(v) for name, v in out.items()}


def test_c04_method_ordering(noisy_runs):
    ours, euc, naive = (noisy_runs[x].mean() for x in ("ours", "euclidean", "naive"))
    verdict(4, ours >= euc and ours >= naive,
            f"mean accuracy over 10 seeds: ours-dice {ours:.3f}, ours-euclidean {euc:.3f}, naive {naive:.3f}")


def test_c05_oos_robustness():
    means = []
    for oos in (5, 10, 15, 20):
        accs = []
        for seed in range(5):
            cfg = SimConfig(seed=seed, **{**NOISY, "oos_subjects": oos})
            (res,) = sim_run(cfg, [RunConfig(k_ratio=1.25)])
            accs.append(res.report.accuracy)
        means.append(float(np.mean(accs)))
    sd = float(np.std(means))
    verdict(5, sd <= 0.10, f"mean accuracy at oos 5/10/15/20: {', '.join(f'{m:.3f}' for m in means)}; sd {sd:.3f} (limit 0.10)")


def test_c06_k_robustness(noisy_runs):
    means = [noisy_runs[x].mean() for x in ("k0.75", "k1.0", "ours")]
    spread = max(means) - min(means)
    per_seed = np.max(np.vstack([noisy_runs[x] for x in ("k0.75", "k1.0", "ours")]), axis=0) - np.min(
        np.vstack([noisy_runs[x] for x in ("k0.75", "k1.0", "ours")]), axis=0
    )
    verdict(6, spread <= 0.15 + 1e-12,
            f"mean accuracy at K=0.75P/1.0P/1.25P: {', '.join(f'{m:.3f}' for m in means)}; spread {spread:.3f} "
            f"(limit 0.15); largest single-seed spread {per_seed.max():.3f}")


def test_c07_filter_exact():
    rng = np.random.default_rng(7)
    ds, oui, cats = crafted_corpus(rng)
    macs = {s.mac for s in ds.sightings}
    kept, randomized = filter_randomized(macs)
    kept, vendor = filter_vendors(kept, oui)
    s = sessionize(ds.sightings, ds.sessions)
    kept, weak = filter_rss(s, -55, kept)
    report = run_filter(ds, oui)
    exact = (
        len(macs) == 1000
        and randomized == cats["randomized"]
        and vendor == cats["vendor"]
        and weak == cats["rss"]
        and kept == cats["clean"] == set(report.survivors)
    )
    pairs = np.sort(np.random.default_rng(8).integers(-100, 1, (20, 2)), axis=1)
    monotone = all(filter_rss(s, int(hi))[0] <= filter_rss(s, int(lo))[0] for lo, hi in pairs)
    verdict(7, exact and monotone, f"1000 MACs, stages exact: {exact}; monotone on 20 threshold pairs: {monotone}")


def test_c08_tree_invariants():
    checked = reference = 0
    for seed in range(50):
        rng = np.random.default_rng([8, seed])
        n = int(rng.integers(1, 65))
        x = rng.standard_normal((n, 6))
        samples, sessions = make_samples(x, rng.integers(0, 5, n), 5)
        check_invariants(build_tree(samples, sessions), samples, sessions)
        checked += 1
        m = int(rng.integers(2, 7))
        y = rng.standard_normal((m, 3))
        tree = build_tree_arrays(y, [0] * m, 1)
        got = [tuple(sorted(c)) for c in tree.children[m:].tolist()]
        assert got == [tuple(sorted(e)) for e in reference_merges(y)]
        reference += 1
    verdict(8, True, f"{checked} trees (N <= 64) satisfy the invariants; {reference} merge sequences match the reference")


def test_c09_feasibility_monotone():
    rng = np.random.default_rng(9)
    rates = rng.permutation(np.linspace(0.15, 0.85, 22))
    att = rng.random((22, 120)) < rates[:, None]
    lo = rand_g_distinguishability(att, 10, 20, 0)
    hi = rand_g_distinguishability(att, 50, 20, 0)
    distinct = len({r.tobytes() for r in att}) == 22
    full = rand_g_distinguishability(att, 120, 20, 0)
    verdict(9, hi >= lo and distinct and full == 1.0, f"g=10: {lo:.3f}, g=50: {hi:.3f}, g=G with distinct rows: {full:.3f}")


def test_c10_determinism(tmp_path):
    data = generate(SimConfig(seed=10, victims=10, oos_subjects=4, sessions=20), tmp_path / "data")
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["associate", "--data", str(data), "--out", str(out), "--seed", "10"]) == 0
        assert main(["evaluate", "--data", str(data), "--out", str(out)]) == 0
    same = all(
        (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in ("assignment.json", "eval.json")
    )
    verdict(10, same, "assignment.json and eval.json byte-identical across two runs")


def test_c11_scale():
    cfg = SimConfig(seed=0, victims=100, oos_subjects=0, sessions=100, victim_attend_prob_range=(0.1, 0.3),
                    samples_per_attendee_mean=1.0)
    r = simulate(cfg)
    ds = Dataset(r.sessions, r.samples, r.sightings, r.registry)
    t0 = time.perf_counter()
    res = run(ds, OUI, RunConfig(k_ratio=1.25))
    elapsed = time.perf_counter() - t0
    n_surv = len(res.filter_report.survivors)
    ok = elapsed < 60 and abs(len(r.samples) - 2000) <= 200 and n_surv == 100
    verdict(11, ok, f"{len(r.samples)} samples, {n_surv} survivors, {ds.n_sessions} sessions: {elapsed:.1f}s (limit 60s)")

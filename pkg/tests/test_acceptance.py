"""Acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (collected again in the terminal
summary) and then asserts.  Criterion 10 needs external WordNet files and
is skipped unless ``FOOLMETRICS_WORDNET_ISA`` and ``FOOLMETRICS_SYNSETS``
point at them.
"""

import os
import time

import numpy as np
import pytest

from conftest import E2E_SEEDS, TOY_EDGES, TOY_LABELS, E2ERun, _E2E_CACHE, record_acceptance
from foolmetrics import metrics as M
from foolmetrics.analysis import dominant_label_coverage
from foolmetrics.attacklab import ToyClassifier, cw, deepfool, fgsm, gduap, ifgsm_ll, pgd, uap
from foolmetrics.metrics import MetricConfig, PredictionRecord, RecordSet
from foolmetrics.taxonomy import load_taxonomy, pairwise_wup_matrix, read_wordnet_hierarchy, wup_similarity
from foolmetrics.visual_sim import pairwise_vis_matrix, percentile_curve, templates_from_rows
from oracles import (
    finite_difference_gradient,
    grid_min_flip,
    linear_binary_task,
    random_dag,
    vertex_max_norm,
    wup_oracle,
)


def test_criterion_1_wup_matches_oracle_on_random_dags():
    rng = np.random.default_rng(2024)
    cases = []
    for k in range(100):
        n = int(rng.integers(2, 201))
        # alternate trees and two-parent DAGs
        names, edges = random_dag(rng, n, max_parents=2, p_second=0.0 if k % 2 else 0.4)
        picked = sorted(rng.choice(names, size=min(n, 40), replace=False))
        cases.append((edges, list(enumerate(picked))))
    start = time.perf_counter()
    got = []
    for edges, labels in cases:
        t = load_taxonomy(edges, labels)
        got.append(pairwise_wup_matrix(t, [lab for lab, _ in labels]))
    elapsed = time.perf_counter() - start
    mismatches = 0
    dags = 0
    for (edges, labels), m in zip(cases, got):
        children = [c for c, _ in edges]
        dags += len(children) != len(set(children))
        sim = wup_oracle(edges, labels)
        want = np.array([[sim(a, b) for b, _ in labels] for a, _ in labels])
        mismatches += not np.array_equal(m, want)
    ok = mismatches == 0 and elapsed < 10 and dags > 0
    record_acceptance(1, ok, f"{100 - mismatches}/100 taxonomies exact ({dags} with multiple parents), "
                             f"implementation {elapsed:.2f}s < 10s")
    assert ok


def test_criterion_2_toy_tree_exact():
    t = load_taxonomy(TOY_EDGES, TOY_LABELS)
    dog_cat, dog_car = wup_similarity(t, 0, 1), wup_similarity(t, 0, 2)
    ok = dog_cat == 2 / 3 and dog_car == 1 / 3 and len(t.nodes) == 6
    record_acceptance(2, ok, f"Wup(dog,cat)={dog_cat!r}, Wup(dog,car)={dog_car!r}")
    assert ok


def _random_record_set(rng, c):
    n = int(rng.integers(1, 30))
    recs = []
    for i in range(n):
        pre = int(rng.integers(c))
        ranking = rng.permutation(c)
        # bias toward small demotions so FR@K is not trivially flat
        if rng.random() < 0.5:
            ranking = np.concatenate([[pre], ranking[ranking != pre]])
            j = int(rng.integers(0, c))
            ranking[[0, j]] = ranking[[j, 0]]
        recs.append(PredictionRecord.from_ranking(str(i), pre, [int(v) for v in ranking]))
    return RecordSet(recs, c)


def test_criterion_3_metric_identities():
    rng = np.random.default_rng(3)
    thresholds = [round(0.05 * k, 2) for k in range(0, 21)]
    bad = {"fr1": 0, "frk": 0, "qi": 0, "auc": 0}
    contexts = {}
    for _ in range(1000):
        c = int(rng.integers(3, 16))
        if c not in contexts:
            edges = [(f"n{k}", f"n{int(rng.integers(0, k))}") for k in range(1, 2 * c)]
            labels = [(lab, f"n{node}") for lab, node in enumerate(rng.choice(2 * c, size=c, replace=False))]
            contexts[c] = (load_taxonomy(edges, labels),
                           pairwise_vis_matrix(templates_from_rows(rng.normal(size=(c, 5)))))
        t, v = contexts[c]
        rs = _random_record_set(rng, c)
        bad["fr1"] += M.fr_at_k(rs, 1) != M.fooling_rate(rs)
        frs = [M.fr_at_k(rs, k) for k in range(1, c)]
        bad["frk"] += any(b > a for a, b in zip(frs, frs[1:]))
        for kind, ctx in ((M.SEMANTIC, t), (M.VISUAL, v)):
            sweep = [q for _, q in M.threshold_sweep(rs, kind, ctx, thresholds)]
            bad["qi"] += any(b < a for a, b in zip(sweep, sweep[1:]))
        const = float(rng.random())
        grid = sorted(set(int(k) for k in rng.integers(1, 100, size=int(rng.integers(2, 8)))))
        if len(grid) < 2:
            grid = [1, 2]
        bad["auc"] += M.auc([(k, const) for k in grid]) != const
    ok = not any(bad.values())
    record_acceptance(3, ok, "violations over 1000 record sets: "
                             + ", ".join(f"{k}={v}" for k, v in bad.items()))
    assert ok


def test_criterion_4_gradient_check():
    rng = np.random.default_rng(4)
    worst = 0.0
    for trial in range(100):
        depth = 1 + trial % 3
        d = int(rng.integers(2, 10))
        sizes = [d] + [int(rng.integers(4, 16)) for _ in range(depth)] + [int(rng.integers(2, 8))]
        m = ToyClassifier([(rng.normal(size=(o, i)), rng.normal(size=o) * 0.5)
                           for i, o in zip(sizes, sizes[1:])])
        x = rng.normal(size=d)
        y = int(rng.integers(sizes[-1]))
        g = m.input_gradient(x, y)
        fd = finite_difference_gradient(lambda z: float(m.loss(z, y)), x, h=1e-5)
        err = np.linalg.norm(g - fd) / max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12)
        worst = max(worst, err)
    ok = worst < 1e-4
    record_acceptance(4, ok, f"max relative error {worst:.2e} < 1e-4 over 100 triples (1-3 hidden layers)")
    assert ok


def test_criterion_5_deepfool_closed_form():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(2, 12))
        w = rng.normal(size=(2, d))
        b = rng.normal(size=2)
        m = ToyClassifier([(w, b)])
        x = rng.normal(size=d)
        pre = int(m.predict(x))
        # margin of the other class over the current one
        wd = w[1 - pre] - w[pre]
        f = wd @ x + b[1 - pre] - b[pre]
        want = -f * wd / (wd @ wd)
        got = deepfool(m, x).info["pre_overshoot"]
        worst = max(worst, float(np.abs(got - want).max()))
    ok = worst <= 1e-6
    record_acceptance(5, ok, f"max coordinate error {worst:.2e} <= 1e-6 over 50 classifiers")
    assert ok


def test_criterion_6_budget_respect():
    rng = np.random.default_rng(6)
    kinds = ("fgsm", "ifgsm_ll", "pgd", "uap", "gduap")
    worst_excess = -np.inf
    for k in range(500):
        kind = kinds[k % 5]
        d = int(rng.integers(2, 10))
        sizes = [d] + [int(rng.integers(3, 12)) for _ in range(int(rng.integers(1, 3)))] + [int(rng.integers(2, 6))]
        m = ToyClassifier.init(sizes, seed=int(rng.integers(1 << 30)))
        x = rng.normal(size=(int(rng.integers(1, 8)), d)) * 2
        y = m.predict(x)
        eps = float(rng.uniform(0.01, 2.0))
        if kind == "fgsm":
            v = fgsm(m, x, y, eps).v
        elif kind == "ifgsm_ll":
            v = ifgsm_ll(m, x, eps, steps=int(rng.integers(1, 15))).v
        elif kind == "pgd":
            v = pgd(m, x, y, eps, steps=int(rng.integers(1, 15))).v
        elif kind == "uap":
            v = uap(m, x, eps, max_epochs=2, seed=k).v
        else:
            v = gduap(m, eps, iters=50, seed=k).v
        worst_excess = max(worst_excess, float(np.abs(v).max()) - eps)
    ok = worst_excess <= 1e-9
    record_acceptance(6, ok, f"max ||v||_inf - eps = {worst_excess:.3g} <= 1e-9 over 500 invocations")
    assert ok


def test_criterion_7_end_to_end_ordering():
    start = time.perf_counter()
    runs = {}
    for seed in E2E_SEEDS:
        runs[seed] = E2ERun(seed)
        _E2E_CACHE.setdefault(seed, runs[seed])
    elapsed = time.perf_counter() - start
    cfg = MetricConfig()
    clauses = {"a": 0, "b": 0, "c": 0, "d": 0}
    accs = []
    for seed, run in runs.items():
        r = run.runs
        accs.append(run.train.train_accuracy)
        df = r["deepfool"]
        clauses["a"] += M.fr_at_k(df, 1) >= 0.9 and M.fr_at_k(df, 5) <= 0.1
        auc = {k: M.auc(M.fr_curve(r[k], cfg)) for k in ("pgd", "fgsm", "deepfool")}
        clauses["b"] += auc["pgd"] > auc["fgsm"] > auc["deepfool"]
        tax = run.task.taxonomy
        clauses["c"] += M.mean_qi(r["ifgsm_ll"], M.SEMANTIC, tax, 0.7) > M.mean_qi(df, M.SEMANTIC, tax, 0.7)
        clauses["d"] += dominant_label_coverage(r["uap"]) < dominant_label_coverage(df)
    trained = all(a >= 0.95 for a in accs)
    ok = trained and elapsed < 120 and all(v >= 4 for v in clauses.values())
    record_acceptance(7, ok, "seeds passing " + ", ".join(f"({k}) {v}/5" for k, v in clauses.items())
                      + f"; min train accuracy {min(accs):.3f}; runtime {elapsed:.1f}s < 120s")
    assert ok


def test_criterion_8_gduap_vertex_oracle():
    rng = np.random.default_rng(8)
    worst = np.inf
    for _ in range(20):
        d = int(rng.integers(2, 13))
        w = rng.normal(size=(int(rng.integers(1, 13)), d))
        m = ToyClassifier([(w, np.zeros(len(w)))])
        eps = float(rng.uniform(0.1, 2.0))
        v = gduap(m, eps, seed=int(rng.integers(1 << 30))).v
        worst = min(worst, float(np.linalg.norm(w @ v)) / vertex_max_norm(w, eps))
    ok = worst >= 0.95
    record_acceptance(8, ok, f"worst ratio to vertex optimum {worst:.4f} >= 0.95 over 20 W (D <= 12)")
    assert ok


def test_criterion_9_cw_grid_oracle():
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(20):
        w, b, x, dist = linear_binary_task(rng)
        m = ToyClassifier([(w, b)])
        want = grid_min_flip(m.predict, x, radius=2 * dist, n=200)
        p = cw(m, x, c=10.0, steps=300, lr=0.05, binary_search_steps=8)
        got = float(np.linalg.norm(p.v)) if p.success else np.inf
        worst = max(worst, abs(got - want) / want)
    ok = worst <= 0.05
    record_acceptance(9, ok, f"max relative gap to 200x200 grid minimum {worst:.4f} <= 0.05 over 20 tasks")
    assert ok


BRAIN_CORAL = "n01917289"
JACKFRUIT = "n07754684"


def test_criterion_10_wordnet_values():
    isa, synsets = os.environ.get("FOOLMETRICS_WORDNET_ISA"), os.environ.get("FOOLMETRICS_SYNSETS")
    if not (isa and synsets and os.path.exists(isa) and os.path.exists(synsets)):
        record_acceptance(10, None, "needs WordNet data; set FOOLMETRICS_WORDNET_ISA and FOOLMETRICS_SYNSETS to run")
        pytest.skip("WordNet hierarchy and ILSVRC synset list not supplied")
    t = read_wordnet_hierarchy(isa, synsets)
    label_of = {node: lab for lab, node in t.label_map.items()}
    s = wup_similarity(t, label_of[BRAIN_CORAL], label_of[JACKFRUIT])
    m = pairwise_wup_matrix(t, t.labels)
    knee = dict(percentile_curve(m[~np.eye(len(m), dtype=bool)]))[95]
    ok = abs(s - 0.46) <= 0.02 and abs(knee - 0.7) <= 0.05
    record_acceptance(10, ok, f"Wup(brain coral, jackfruit)={s:.4f}, 95th percentile={knee:.4f}")
    assert ok

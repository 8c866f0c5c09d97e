"""Acceptance suite: one test per headline property, each printing a PASS/FAIL line.

Tolerances are the contract values; nothing here is loosened to make a check pass.
"""
from __future__ import annotations

import itertools
import json
import math
import threading
import time
import urllib.error
import urllib.request
from fractions import Fraction

import numpy as np
import pytest

from pacc.analysis import AttentionProfile, attention_structure_correlation, hypergeometric_sf, ora_enrichment
from pacc.chem import Fingerprint, canonical_form, detokenize, enumerate_smiles, parse_smiles, tanimoto, tokenize
from pacc.chem import morgan_fingerprint
from pacc.chem.io import read_smiles_tsv
from pacc.cli import main
from pacc.data import Dataset, lenient_split, read_expression_tsv, strict_split
from pacc.models import ATTENTION_KINDS, KINDS, Batch, Model, ModelSpec, concat_width
from pacc.models.layers import contextual_attention, gene_attention, masked_max, self_attention
from pacc.netprop import initial_weights, load_ppi, propagate, solve_fixed_point
from pacc.nn import RngStream, grad_check
from pacc.nn.functional import (BatchNormState, batchnorm, bigru, conv1d, dense, dropout, embedding, mse_loss,
                                softmax)
from pacc.nn.tensor import max_over, tanh
from pacc.serve import Predictor, make_server
from pacc.synthetic import fuzz_corpus, random_ppi, toy_response_data
from pacc.train import Checkpoint, FoldData, TrainConfig, ensemble_predict, predict, train
from pacc.train.loop import predict_normalized
from pacc.train.metrics import pearson, r2, rmse
from support import toy_batch, toy_spec, train_toy


def report(capsys, name: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# -- propagation ---------------------------------------------------------------


def test_propagation_oracle(capsys):
    worst, exact_alpha0 = 0.0, True
    t0 = time.perf_counter()
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(20, 201))
        net = load_ppi(random_ppi(n, int(rng.integers(n, 4 * n)), seed=seed))
        targets = rng.choice(net.genes, size=min(5, net.n), replace=False)
        w0 = initial_weights(net, targets)
        res = propagate(net, w0, alpha=0.7, tol=1e-6)
        worst = max(worst, float(np.max(np.abs(res.weights - solve_fixed_point(net, w0, 0.7)))))
        exact_alpha0 &= bool(np.array_equal(propagate(net, w0, alpha=0.0).weights, w0))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8 and elapsed < 5.0 and exact_alpha0
    report(capsys, "propagation oracle", ok,
           f"max |iterative - direct| = {worst:.3e} (bound 1e-8), {elapsed:.2f} s (bound 5 s), "
           f"alpha=0 exact: {exact_alpha0}")


# -- chemistry -----------------------------------------------------------------


def test_chem_round_trips(capsys):
    corpus = fuzz_corpus(500, seed=0)
    token_ok = sum(detokenize(tokenize(s)) == s for s in corpus)
    enum_bad = 0
    for s in corpus:
        g = parse_smiles(s)
        want = canonical_form(g)
        enum_bad += sum(canonical_form(parse_smiles(v)) != want for v in enumerate_smiles(g, n=32, seed=1))
    rng = np.random.default_rng(0)
    tani_bad = 0
    for _ in range(1000):
        a = set(np.flatnonzero(rng.random(64) < rng.random()).tolist())
        b = set(np.flatnonzero(rng.random(64) < rng.random()).tolist())
        want = 1.0 if not (a | b) else len(a & b) / len(a | b)
        tani_bad += tanimoto(Fingerprint.from_bits(a, 64), Fingerprint.from_bits(b, 64)) != want
    ok = token_ok == len(corpus) and enum_bad == 0 and tani_bad == 0
    report(capsys, "chem round trips", ok,
           f"token round trip {token_ok}/{len(corpus)}, enumeration mismatches {enum_bad}, "
           f"tanimoto mismatches {tani_bad}/1000")


# -- gradients -------------------------------------------------------------------


def _primitive_checks(rng):
    """(name, fn, inputs) triples covering every differentiable primitive."""
    def probe(shape):
        return rng.normal(size=shape)

    ids = np.array([[1, 2, 2, 0], [3, 1, 0, 0]])
    mask = np.array([[1, 1, 0, 1], [1, 0, 0, 0]], dtype=bool)
    valid = np.array([[1, 1, 1], [1, 1, 0]], dtype=bool)
    w = {k: probe(s) for k, s in dict(dense=(4, 2), emb=(2, 4, 3), conv=(2, 5, 4), soft=(2, 4), bn=(5, 3),
                                      gru=(2, 4), drop=(6, 3), ga=(3, 8), sa=(2, 3), mx=(3,)).items()}
    H = 2

    def gru(t):
        layers = [{"fw": (t["Wf"], t["Uf"], t["bf"]), "bw": (t["Wb"], t["Ub"], t["bb"])},
                  {"fw": (t["Wf2"], t["Uf2"], t["bf2"]), "bw": (t["Wb2"], t["Ub2"], t["bb2"])}]
        return (bigru(t["x"], valid, layers) * w["gru"]).sum()

    gru_in = dict(x=probe((2, 3, 2)))
    for d in ("f", "b"):
        gru_in.update({f"W{d}": probe((2, 3 * H)), f"U{d}": probe((H, 3 * H)), f"b{d}": probe(3 * H),
                       f"W{d}2": probe((2 * H, 3 * H)), f"U{d}2": probe((H, 3 * H)), f"b{d}2": probe(3 * H)})
    svalid = np.array([[1, 1, 1, 0], [1, 1, 0, 0]], dtype=bool)
    return [
        ("dense", lambda t: (dense(t["x"], t["W"], t["b"], "tanh") * w["dense"]).sum(),
         dict(x=probe((4, 3)), W=probe((3, 2)), b=probe(2))),
        ("embedding", lambda t: (embedding(ids, t["E"]) * w["emb"]).sum(), dict(E=probe((4, 3)))),
        ("conv1d", lambda t: (conv1d(t["x"], t["K"], t["b"], "tanh") * w["conv"]).sum(),
         dict(x=probe((2, 5, 3)), K=probe((3, 3, 4)), b=probe(4))),
        ("softmax", lambda t: (softmax(t["z"], mask) * w["soft"]).sum(), dict(z=probe((2, 4)))),
        ("batchnorm", lambda t: (batchnorm(t["x"], t["g"], t["b"], BatchNormState.fresh(3, np.float64))
                                 * w["bn"]).sum(), dict(x=probe((5, 3)), g=probe(3), b=probe(3))),
        ("bigru", gru, gru_in),
        ("dropout", lambda t: (dropout(t["x"], 0.5, "train", RngStream(3)) * w["drop"]).sum(),
         dict(x=probe((6, 3)))),
        ("mse_loss", lambda t: mse_loss(t["p"], np.linspace(-1, 1, 5)), dict(p=probe(5))),
        ("gene_attention", lambda t: (gene_attention(t["g"], t["W"], t["b"])[0] * w["ga"]).sum(),
         dict(g=probe((3, 8)), W=probe((8, 8)), b=probe(8))),
        ("self_attention", lambda t: (self_attention(t["S"], svalid, t["We"], t["b"], t["V"])[0] * w["sa"]).sum(),
         dict(S=probe((2, 4, 3)), We=probe((3, 5)), b=probe(5), V=probe(5))),
        ("contextual_attention",
         lambda t: (contextual_attention(t["S"], t["G"], svalid, t["We"], t["Wg"], t["V"])[0] * w["sa"]).sum(),
         dict(S=probe((2, 4, 3)), G=probe((2, 6)), We=probe((3, 5)), Wg=probe((6, 5)), V=probe(5))),
        ("masked_max", lambda t: (masked_max(tanh(t["x"]), svalid[:, :4]) * w["mx"]).sum(),
         dict(x=probe((2, 4, 3)))),
        ("max_over", lambda t: (max_over(t["x"], 1) * w["mx"]).sum(), dict(x=probe((3, 5)))),
    ]


def test_gradient_suite(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    failures, worst_prim, worst_model = [], 0.0, 0.0
    for name, fn, inputs in _primitive_checks(rng):
        err = grad_check(fn, inputs).worst
        worst_prim = max(worst_prim, err)
        if not err < 1e-4:
            failures.append(f"{name} {err:.2e}")
    rng = np.random.default_rng(0)
    batch = toy_batch(rng)
    y = rng.random(len(batch))
    for kind in KINDS:
        model = Model(toy_spec(kind), seed=0).astype(np.float64)
        params = {k: rng.normal(size=v.shape) * 0.5 for k, v in model.params.items()}

        def loss(P, model=model):
            return mse_loss(model.forward(batch, "train", RngStream(5), leaves=P).prediction, y)

        err = grad_check(loss, params).worst
        worst_model = max(worst_model, err)
        if not err < 1e-3:
            failures.append(f"{kind} {err:.2e}")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 60.0
    report(capsys, "gradient suite", ok,
           f"worst primitive {worst_prim:.2e} (bound 1e-4), worst encoder {worst_model:.2e} (bound 1e-3), "
           f"{elapsed:.1f} s (bound 60 s); failures: {failures or 'none'}")


# -- attention -------------------------------------------------------------------


def test_attention_invariants(capsys):
    rng = np.random.default_rng(1)
    problems = []
    for kind in KINDS:
        spec = toy_spec(kind, T=9)
        model = Model(spec, seed=3)
        for _ in range(5):
            batch = toy_batch(rng, B=6, T=9)
            out = model.forward(batch, "eval")
            if out.gene_attention is not None and np.max(np.abs(out.gene_attention.sum(-1) - 1)) > 1e-5:
                problems.append(f"{kind} gene attention sum")
            if kind in ATTENTION_KINDS:
                att = out.smiles_attention
                if np.max(np.abs(att.sum(-1) - 1)) > 1e-5:
                    problems.append(f"{kind} token attention sum")
                if np.any(att[np.broadcast_to(~batch.valid[:, None, :], att.shape)] != 0):
                    problems.append(f"{kind} nonzero attention at pads")

    spec = ModelSpec("MCA", vocab_size=9, n_genes=5, max_len=12, H=4, A=6, f=5, m=2, dense=(8, 4))
    model = Model(spec, seed=0)
    ids = rng.integers(2, 9, (4, 12))
    lengths = np.array([12, 7, 3, 1])
    valid = np.arange(12)[None, :] < lengths[:, None]
    ids[~valid] = 0
    genes = rng.normal(size=(4, 5))
    short = model.forward(Batch(genes, ids, valid), "eval").values
    long_spec = spec.with_(max_len=20)
    long_model = Model(long_spec, seed=0)
    long_model.params = model.params
    long_model.buffers = model.buffers
    pad = np.zeros((4, 8), dtype=ids.dtype)
    longer = long_model.forward(Batch(genes, np.hstack([ids, pad]), np.hstack([valid, pad.astype(bool)])),
                                "eval").values
    pad_gap = float(np.max(np.abs(short - longer)))

    defaults = ModelSpec("MCA", vocab_size=40, n_genes=30)
    width = Model(defaults, seed=0).params["dense0.W"].shape[0]
    want = 3 * 4 * defaults.f + 4 * defaults.H
    ok = not problems and pad_gap < 1e-6 and width == want == concat_width(defaults) == 832
    report(capsys, "attention invariants", ok,
           f"distribution problems: {problems or 'none'}; trailing-pad gap {pad_gap:.2e} (bound 1e-6); "
           f"MCA concat width {width} (expected {want}, 832 at defaults)")


# -- overfit -----------------------------------------------------------------------


def _overfit_run():
    smiles, genes, cells, rows = toy_response_data(8, 8, 6, seed=0)
    ds = Dataset.build(smiles, genes, cells, rows, n_variants=1)
    keys = [p.key for p in ds.pairs]
    fold = FoldData.prepare(ds, keys, keys)
    # a capacity check: regularization off, so the stack can memorize
    spec = fold.spec("MCA", H=8, f=8, m=2, dense=(32, 16), p_drop=0.0)
    cfg = TrainConfig(max_steps=5000, batch_size=64, eval_interval=1000, checkpoint_keep=1, seed=0,
                      augment=False, lr=1e-3)
    t0 = time.perf_counter()
    result = train(spec, fold, cfg)
    elapsed = time.perf_counter() - t0
    truth = fold.label_transform.apply(np.array([p.label for p in fold.train_pairs]))
    pred = predict_normalized(result.final.model(), fold.store, keys)
    return len(keys), rmse(pred, truth), elapsed, result


@pytest.mark.slow
def test_overfit_target(capsys):
    n, err, elapsed, first = _overfit_run()
    _, err2, _, second = _overfit_run()
    same = (err == err2 and first.history_csv() == second.history_csv()
            and all(np.array_equal(first.final.params[k], second.final.params[k]) for k in first.final.params))
    ok = n == 64 and err < 0.02 and elapsed < 600 and same
    report(capsys, "overfit target", ok,
           f"{n} pairs, train RMSE {err:.4f} (bound 0.02) after 5000 steps, {elapsed:.0f} s (bound 600 s), "
           f"repeat run bit-identical: {same}")


# -- splits ------------------------------------------------------------------------


def _strict_leaks(plan) -> list[str]:
    leaks = []
    test_d = {d for d, _ in plan.test} | set(plan.test_drugs)
    test_c = {c for _, c in plan.test} | set(plan.test_cells)
    for k, fold in enumerate(plan.folds):
        tr_d, tr_c = {d for d, _ in fold.train}, {c for _, c in fold.train}
        va_d, va_c = {d for d, _ in fold.validation} | set(fold.validation_drugs), \
            {c for _, c in fold.validation} | set(fold.validation_cells)
        for label, a, b in (("test/train drug", test_d, tr_d), ("test/train cell", test_c, tr_c),
                            ("test/val drug", test_d, va_d), ("test/val cell", test_c, va_c),
                            ("train/val drug", tr_d, va_d), ("train/val cell", tr_c, va_c)):
            if a & b:
                leaks.append(f"fold {k} {label}")
    return leaks


def test_split_safety(capsys):
    leaks, partition_errors, nondeterministic = [], 0, 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        nd, nc = int(rng.integers(30, 61)), int(rng.integers(30, 61))
        drugs = [f"d{rng.integers(10**6)}_{i}" for i in range(nd)]
        cells = [f"c{rng.integers(10**6)}_{i}" for i in range(nc)]
        density = rng.uniform(0.3, 1.0)
        pairs = [(d, c) for d in drugs for c in cells if rng.random() < density]
        plan = strict_split(drugs, cells, pairs, seed)
        leaks += [f"seed {seed}: {x}" for x in _strict_leaks(plan)]
        if len(plan.folds) != 25:
            leaks.append(f"seed {seed}: {len(plan.folds)} folds")
        nondeterministic += plan.to_text() != strict_split(drugs, cells, pairs, seed).to_text()

        lplan = lenient_split(pairs, seed)
        rest = set(pairs) - set(lplan.test)
        vals = [set(f.validation) for f in lplan.folds]
        covered = sorted(p for v in vals for p in v)
        partition_errors += covered != sorted(rest)
        partition_errors += any(set(f.train) != rest - set(f.validation) for f in lplan.folds)
        partition_errors += len(set(lplan.test)) + len(rest) != len(set(pairs))
        nondeterministic += lplan.to_text() != lenient_split(pairs, seed).to_text()
    ok = not leaks and partition_errors == 0 and nondeterministic == 0
    report(capsys, "split safety", ok,
           f"100 seeds: strict leaks {len(leaks)} {leaks[:3]}, lenient partition errors {partition_errors}, "
           f"non-identical reruns {nondeterministic}")


# -- metrics and analysis -----------------------------------------------------------


def _ref_rmse(p, t):
    return math.sqrt(math.fsum((a - b) ** 2 for a, b in zip(p, t)) / len(p))


def _ref_pearson(p, t):
    mp, mt = math.fsum(p) / len(p), math.fsum(t) / len(t)
    cov = math.fsum((a - mp) * (b - mt) for a, b in zip(p, t))
    return cov / math.sqrt(math.fsum((a - mp) ** 2 for a in p) * math.fsum((b - mt) ** 2 for b in t))


def _ref_r2(p, t):
    mt = math.fsum(t) / len(t)
    return 1 - math.fsum((b - a) ** 2 for a, b in zip(p, t)) / math.fsum((b - mt) ** 2 for b in t)


def _ref_correlation(profiles, fps):
    """Nested-loop reference for the distance-matrix correlation."""
    drugs = sorted({p.drug_id for p in profiles})
    mats = {}
    for d in drugs:
        rows = sorted((p for p in profiles if p.drug_id == d), key=lambda p: p.cell_id)
        mats[d] = [[math.sqrt(math.fsum((x - y) ** 2 for x, y in zip(a.token_attention, b.token_attention)))
                    for b in rows] for a in rows]
    fro, tan = [], []
    for a in drugs:
        for b in drugs:
            fro.append(math.sqrt(math.fsum((x - y) ** 2 for ra, rb in zip(mats[a], mats[b])
                                           for x, y in zip(ra, rb))))
            on_a, on_b = set(fps[a].on_bits()), set(fps[b].on_bits())
            tan.append(len(on_a & on_b) / len(on_a | on_b) if on_a | on_b else 1.0)
    return _ref_pearson(fro, tan), len(fro)


def _enumerated_sf(N, K, n, k):
    universe = range(N)
    hits = sum(len(set(draw) & set(range(K))) >= k for draw in itertools.combinations(universe, n))
    return Fraction(hits, math.comb(N, n))


def test_metrics_and_analysis_oracles(capsys):
    rng = np.random.default_rng(0)
    metric_gap = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 60))
        p, t = rng.normal(size=n), rng.normal(size=n) * rng.uniform(0.1, 5)
        pl, tl = p.tolist(), t.tolist()
        metric_gap = max(metric_gap, abs(rmse(p, t) - _ref_rmse(pl, tl)), abs(pearson(p, t) - _ref_pearson(pl, tl)),
                         abs(r2(p, t) - _ref_r2(pl, tl)))

    corr_gap = 0.0
    smiles = ["CCO", "c1ccccc1O", "CC(=O)Nc1ccc(O)cc1", "CCN(CC)CC", "OC(=O)CCC(=O)O"]
    for trial in range(10):
        d = int(rng.integers(3, 6))
        fps = {f"D{i}": morgan_fingerprint(parse_smiles(smiles[i]), 2, 128) for i in range(d)}
        cells = [f"C{j}" for j in range(int(rng.integers(2, 6)))]
        T = int(rng.integers(2, 7))
        profiles = []
        for i in range(d):
            for c in cells:
                a = rng.random(T)
                profiles.append(AttentionProfile(f"D{i}", c, ("x",) * T, a / a.sum(), np.full(3, 1 / 3)))
        res = attention_structure_correlation(profiles, fps)
        ref_rho, ref_n = _ref_correlation(profiles, fps)
        corr_gap = max(corr_gap, abs(res.rho - ref_rho), abs(res.n - ref_n))

    ora_bad = []
    for N in range(2, 16):
        for K in range(0, N + 1, 3):
            for n in range(1, N + 1, 4):
                for k in range(0, min(K, n) + 1):
                    if hypergeometric_sf(k, N, K, n) != float(_enumerated_sf(N, K, n, k)):
                        ora_bad.append((k, N, K, n))
    genes = [f"g{i}" for i in range(10)]
    case = ora_enrichment(genes[:5], {"S": genes[:5]}, genes)[0].p_value
    case_ok = case == float(Fraction(1, 252))
    ok = metric_gap < 1e-12 and corr_gap < 1e-12 and not ora_bad and case_ok
    report(capsys, "metrics and analysis oracles", ok,
           f"metric gap {metric_gap:.2e}, correlation gap {corr_gap:.2e} (bounds 1e-12), "
           f"ORA mismatches {len(ora_bad)} over universes 2..15, 1/252 case p = {case!r}")


# -- persistence ---------------------------------------------------------------------


def test_persistence(capsys, tmp_path):
    problems = []
    for kind in KINDS:
        ds, fold, result = train_toy(kind)
        ck = result.best
        keys = [p.key for p in ds.pairs]
        in_memory = predict(ck, ds.drugs, ds.cells, ds.genes, keys, augment_average=True)
        path = tmp_path / f"{kind}.ckpt"
        ck.save(path)
        loaded = Checkpoint.load(path)
        again = predict(loaded, ds.drugs, ds.cells, ds.genes, keys, augment_average=True)
        if not np.array_equal(in_memory, again):
            problems.append(f"{kind} round trip")
        single = predict(loaded, ds.drugs, ds.cells, ds.genes, keys)
        for k in (2, 5, 20):
            members = [Checkpoint.load(path) for _ in range(k)]
            if not np.array_equal(ensemble_predict(members, ds.drugs, ds.cells, ds.genes, keys), single):
                problems.append(f"{kind} ensemble of {k}")
    report(capsys, "persistence", not problems,
           f"six kinds, save-load-predict and k-identical ensembles; problems: {problems or 'none'}")


# -- service -------------------------------------------------------------------------


def test_service_consistency(capsys, trained_run, tmp_path):
    ckpt = Checkpoint.load(trained_run["checkpoint"])
    genes, cells = read_expression_tsv(trained_run["expression"], ckpt.genes)
    server = make_server(Predictor(ckpt, genes, cells), port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    url = f"http://127.0.0.1:{server.server_address[1]}/v1/predict"

    def post(body: dict) -> tuple[int, dict]:
        req = urllib.request.Request(url, json.dumps(body).encode(), {"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req) as resp:
                return resp.status, json.loads(resp.read())
        except urllib.error.HTTPError as exc:
            return exc.code, json.loads(exc.read())

    pool = list(read_smiles_tsv(trained_run["smiles"]).values())
    rng = np.random.default_rng(0)
    mismatches = []
    try:
        for i in range(50):
            g = parse_smiles(pool[rng.integers(len(pool))])
            variants = enumerate_smiles(g, n=8, seed=i)
            query = variants[rng.integers(len(variants))]
            argv = ["predict", "--checkpoint", trained_run["checkpoint"], "--expression", trained_run["expression"],
                    "--query-smiles", query, "--top-k-genes", str(int(rng.integers(1, len(genes) + 1))),
                    "--out", str(tmp_path / f"q{i}")]
            body = {"smiles": query, "top_k_genes": int(argv[argv.index("--top-k-genes") + 1])}
            if rng.random() < 0.5:
                cell = sorted(cells)[rng.integers(len(cells))]
                argv += ["--cell-id", cell]
                body["cell_id"] = cell
            else:
                expr = [float(v) for v in np.round(rng.normal(size=len(genes)), 6)]
                argv.append("--query-expression=" + ",".join(repr(v) for v in expr))
                body["expression"] = expr
            code = main(argv)
            cli = json.loads((tmp_path / f"q{i}" / "prediction.json").read_text())
            status, served = post(body)
            if code != 0 or cli.pop("status") != status or cli != served:
                mismatches.append(i)
        bad_status, bad_body = post({"smiles": "C1CC", "cell_id": sorted(cells)[0]})
    finally:
        server.shutdown()
        server.server_close()
    detail_ok = bad_status == 400 and "UnclosedRingBond" in bad_body.get("detail", "")
    ok = not mismatches and detail_ok
    report(capsys, "service consistency", ok,
           f"50 randomized requests, body mismatches vs CLI: {mismatches or 'none'}; "
           f"'C1CC' -> {bad_status} {bad_body.get('detail')!r}")

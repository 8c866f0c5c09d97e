import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from statsmodels.stats.multitest import multipletests

from pacc.analysis import (
    AttentionProfile,
    CellSetMismatch,
    EmptyUniverse,
    InsufficientCells,
    NotInUniverse,
    aggregate_gene_attention,
    attention_structure_correlation,
    benjamini_hochberg,
    collect_profiles,
    drug_distance_matrix,
    frobenius_distance,
    hypergeometric_sf,
    ora_enrichment,
    read_gmt,
    read_profiles_tsv,
    write_profiles_tsv,
)
from pacc.chem import Fingerprint
from pacc.models import ModelWithoutAttention
from pacc.nn import ShapeMismatch
from support import train_toy


def profile(drug, cell, token, gene=(0.5, 0.5)):
    return AttentionProfile(drug, cell, tuple("C" * len(token)), np.array(token, float), np.array(gene, float))


def random_profiles(rng, drugs, cells, T=3, G=4):
    return [profile(d, c, rng.dirichlet(np.ones(T)), rng.dirichlet(np.ones(G))) for d in drugs for c in cells]


# -- distances ------------------------------------------------------------------------------


def test_distance_matrix_example():
    m = drug_distance_matrix([profile("D", "c2", [1, 1]), profile("D", "c1", [0, 0])], "D")
    assert m.cells == ("c1", "c2")
    assert m.matrix[0, 1] == m.matrix[1, 0] == math.sqrt(2) and m.matrix[0, 0] == 0


def test_distance_matrix_needs_two_cells_and_equal_lengths():
    with pytest.raises(InsufficientCells):
        drug_distance_matrix([profile("D", "c1", [1.0])], "D")
    with pytest.raises(ShapeMismatch):
        drug_distance_matrix([profile("D", "c1", [1.0]), profile("D", "c2", [0.5, 0.5])], "D")


def test_frobenius_example():
    assert frobenius_distance(np.ones((2, 2)), np.zeros((2, 2))) == 2.0
    with pytest.raises(ShapeMismatch):
        frobenius_distance(np.ones((2, 2)), np.ones((3, 3)))


@given(st.integers(0, 10_000))
def test_distance_matrix_is_a_metric_table(seed):
    rng = np.random.default_rng(seed)
    m = drug_distance_matrix(random_profiles(rng, ["D"], [f"c{i}" for i in range(5)]), "D").matrix
    assert np.array_equal(m, m.T) and not np.diag(m).any() and np.all(m >= 0)
    for i in range(5):
        for j in range(5):
            assert np.all(m[i, j] <= m[i] + m[:, j] + 1e-12)


# -- correlation ---------------------------------------------------------------------------------


def fps(drugs, seed=0):
    rng = np.random.default_rng(seed)
    return {d: Fingerprint.from_bits(set(rng.choice(64, 8, replace=False).tolist()), 64) for d in drugs}


def test_correlation_counts_self_pairs():
    rng = np.random.default_rng(0)
    drugs = ["A", "B", "C"]
    res = attention_structure_correlation(random_profiles(rng, drugs, ["x", "y", "z"]), fps(drugs))
    assert res.n == 9 and len(res.table) == 9 and res.defined
    assert all(row[2] == 0 and row[3] == 1.0 for row in res.table if row[0] == row[1])


def test_degenerate_correlation_is_nan():
    drugs = ["A", "B"]
    profiles = [profile(d, c, [0.5, 0.5] if c == "x" else [1.0, 0.0]) for d in drugs for c in ("x", "y")]
    assert not attention_structure_correlation(profiles, fps(drugs)).defined


@given(st.integers(0, 10_000))
def test_correlation_invariant_to_profile_order(seed):
    rng = np.random.default_rng(seed)
    drugs = ["A", "B", "C", "D"]
    profiles = random_profiles(rng, drugs, ["x", "y", "z", "w"])
    a = attention_structure_correlation(profiles, fps(drugs, seed))
    shuffled = [profiles[i] for i in rng.permutation(len(profiles))]
    b = attention_structure_correlation(shuffled, fps(drugs, seed), workers=3)
    assert a.table == b.table and (a.rho == b.rho or not (a.defined or b.defined))


def test_correlation_needs_common_cells():
    rng = np.random.default_rng(1)
    profiles = random_profiles(rng, ["A"], ["x", "y"]) + random_profiles(rng, ["B"], ["x", "z"])
    with pytest.raises(CellSetMismatch):
        attention_structure_correlation(profiles, fps(["A", "B"]))


def test_correlation_matches_scipy():
    rng = np.random.default_rng(2)
    drugs = [f"D{i}" for i in range(5)]
    res = attention_structure_correlation(random_profiles(rng, drugs, ["x", "y", "z"]), fps(drugs, 2))
    fro, tan = np.array([r[2] for r in res.table]), np.array([r[3] for r in res.table])
    assert res.rho == pytest.approx(stats.pearsonr(fro, tan)[0], abs=1e-12)


# -- gene aggregation -----------------------------------------------------------------------------------


def test_uniform_attention_keeps_every_gene():
    panel = ["g1", "g2", "g3"]
    profiles = [profile("D", c, [1.0], [1 / 3] * 3) for c in ("x", "y", "z")]
    assert aggregate_gene_attention(profiles, panel) == panel


def test_aggregate_threshold_and_order():
    panel = ["b", "a", "c", "d"]
    profiles = [profile("D", "x", [1.0], [0.5, 0.25, 0.15, 0.10]), profile("D", "y", [1.0], [0.3, 0.25, 0.35, 0.1])]
    # a and c sit exactly on 1/K and are kept
    assert aggregate_gene_attention(profiles, panel) == ["b", "a", "c"]
    with pytest.raises(ShapeMismatch):
        aggregate_gene_attention(profiles, panel[:3])


# -- enrichment ---------------------------------------------------------------------------------------------


def test_hypergeometric_example():
    # 10 genes, 5 in the set, 5 attended, all 5 overlapping
    assert hypergeometric_sf(5, 10, 5, 5) == 1 / 252
    assert hypergeometric_sf(0, 10, 5, 5) == 1.0 and hypergeometric_sf(6, 10, 5, 5) == 0.0


@given(st.integers(1, 60), st.data())
def test_hypergeometric_matches_scipy(N, data):
    K = data.draw(st.integers(0, N))
    n = data.draw(st.integers(0, N))
    k = data.draw(st.integers(0, min(K, n) + 1))
    assert hypergeometric_sf(k, N, K, n) == pytest.approx(stats.hypergeom.sf(k - 1, N, K, n), abs=1e-12)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40))
def test_bh_matches_statsmodels(pvalues):
    ours = benjamini_hochberg(pvalues)
    ref = multipletests(pvalues, method="fdr_bh")[1]
    assert np.allclose(ours, ref, rtol=0, atol=1e-12)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40))
def test_bh_is_monotone_in_p(pvalues):
    adj = benjamini_hochberg(pvalues)
    order = np.argsort(pvalues, kind="stable")
    assert all(adj[order[i]] <= adj[order[i + 1]] for i in range(len(order) - 1))
    assert all(p <= a <= 1 for p, a in zip(pvalues, adj))


def test_ora_example():
    universe = [f"g{i}" for i in range(10)]
    sets = {"hit": universe[:5], "miss": universe[5:], "other": ["zz", "g0"]}
    res = {r.set_id: r for r in ora_enrichment(universe[:5], sets, universe)}
    assert res["hit"].p_value == 1 / 252 and res["hit"].overlap == 5
    assert res["miss"].p_value == 1.0 and res["other"].set_size == 1
    assert list(ora_enrichment(universe[:5], sets, universe))[0].set_id == "hit"


def test_ora_errors():
    with pytest.raises(EmptyUniverse):
        ora_enrichment([], {"s": ["a"]}, [])
    with pytest.raises(NotInUniverse):
        ora_enrichment(["z"], {"s": ["a"]}, ["a"])


def test_gmt_reading(tmp_path):
    path = tmp_path / "sets.gmt"
    path.write_text("S1\tdesc\tA\tB\n\nS2\tna\tC\n")
    assert read_gmt(path) == {"S1": ["A", "B"], "S2": ["C"]}
    path.write_text("S1\tA\n")
    with pytest.raises(ValueError, match=":1:"):
        read_gmt(path)


# -- from a trained model --------------------------------------------------------------------------------------


def test_profiles_from_checkpoint(tmp_path):
    ds, _, result = train_toy("MCA", steps=4)
    profiles = collect_profiles(result.best, ds.drugs, ds.cells, ds.genes)
    assert len(profiles) == len(ds.drugs) * len(ds.cells)
    for p in profiles:
        assert len(p.token_attention) == len(ds.drugs[p.drug_id].variants[0])
        assert abs(p.token_attention.sum() - 1) < 1e-5 and abs(p.gene_attention.sum() - 1) < 1e-5
    write_profiles_tsv(tmp_path / "p.tsv", profiles)
    again = read_profiles_tsv(tmp_path / "p.tsv")
    assert all(np.array_equal(a.token_attention, b.token_attention) for a, b in zip(profiles, again))


def test_dnn_has_no_attention():
    ds, _, result = train_toy("DNN", steps=4)
    with pytest.raises(ModelWithoutAttention):
        collect_profiles(result.best, ds.drugs, ds.cells, ds.genes)

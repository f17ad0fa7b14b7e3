import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_kmeans import (
    BACKENDS,
    ConfigError,
    KMeansRun,
    KTooLarge,
    MeanSet,
    RunConfig,
    SparseDataset,
    SparseVector,
    assign_full,
    choose_seeds,
    detect_invariant,
    init_centroids,
    objective,
    run,
    update_means,
)
from sparse_kmeans.oracle import oracle_assign, oracle_objective, oracle_similarities

from conftest import random_dataset


def _means_at(X, idx):
    return MeanSet.from_vectors([X.vector(int(i)) for i in idx], X.dim)


def test_seeds_k_equals_n_is_permutation():
    X = random_dataset(0, n=30)
    idx = choose_seeds(X, 30, seed=4)
    assert sorted(idx.tolist()) == list(range(30))


@pytest.mark.parametrize("method", ["random-sample", "kmeanspp"])
def test_seeds_deterministic_and_distinct(method):
    X = random_dataset(1, n=80)
    a = choose_seeds(X, 12, seed=9, method=method)
    assert np.array_equal(a, choose_seeds(X, 12, seed=9, method=method))
    assert len(set(a.tolist())) == 12


def test_k_too_large():
    X = random_dataset(0, n=10)
    with pytest.raises(KTooLarge):
        init_centroids(X, RunConfig(k=11, threads=1))
    with pytest.raises(KTooLarge):
        run(X, RunConfig(k=11, threads=1))


@pytest.mark.parametrize("kwargs", [dict(k=0), dict(k=2, backend="kd"), dict(k=2, init="x"), dict(k=2, max_iter=0),
                                    dict(k=2, threads=0)])
def test_bad_config(kwargs):
    with pytest.raises(ConfigError):
        RunConfig(**kwargs)


def test_kmeanspp_separates_two_blobs():
    # two tight blobs on disjoint vocabularies: cosine distance between blobs is 1
    rng = np.random.default_rng(0)
    vecs = []
    for blob in range(2):
        for _ in range(50):
            t = np.arange(1, 6) + 10 * blob
            vecs.append(SparseVector(t, 1.0 + 0.05 * rng.random(5)))
    X = SparseDataset.from_vectors([SparseVector(v.term_ids, v.values / np.linalg.norm(v.values)) for v in vecs], 20)
    hits = sum(len({int(i) // 50 for i in choose_seeds(X, 2, seed=s, method="kmeanspp")}) == 2 for s in range(100))
    assert hits >= 95


def _dense_assign(X, means, **kw):
    lam = np.zeros(means.k, dtype=bool)
    return assign_full(X, means.to_dense(), lam, None, None, icp=False, threads=1, **kw)


def test_assign_full_counts_every_pair():
    X = random_dataset(2, n=50)
    means = _means_at(X, range(5))
    assign, sim, counters = _dense_assign(X, means)
    assert counters.pair_evals == 50 * 5
    assert counters.branch_evals == 0


@pytest.mark.parametrize("seed", range(20))
def test_assign_full_matches_oracle(seed):
    X = random_dataset(seed, n=50, dim=25, nnz=5)
    means = _means_at(X, np.random.default_rng(seed).choice(50, 5, replace=False))
    assign, sim, _ = _dense_assign(X, means)
    want = oracle_assign(X, means.unit_vectors())
    sims = oracle_similarities(X, means.unit_vectors())
    for i in np.flatnonzero(assign != want):
        assert abs(sims[i, assign[i]] - sims[i, want[i]]) < 1e-9
    assert np.allclose(sim, sims[np.arange(50), assign], atol=1e-12)


def test_assign_full_all_invariant_skips_everything():
    X = random_dataset(3, n=40)
    means = _means_at(X, range(4))
    assign, sim, _ = _dense_assign(X, means)
    lam = np.ones(4, dtype=bool)
    again, sim2, counters = assign_full(X, means.to_dense(), lam, sim, assign, icp=True, threads=1)
    assert counters.pair_evals == 0
    assert np.array_equal(again, assign)
    assert np.array_equal(sim2, sim)


def test_assign_lowest_index_wins_ties():
    X = SparseDataset.from_vectors([SparseVector([1], [1.0])], 2)
    means = MeanSet.from_vectors([SparseVector([2], [1.0]), SparseVector([2], [1.0])], 2)
    assign, sim, _ = _dense_assign(X, means)
    assert assign.tolist() == [0] and sim.tolist() == [0.0]


def test_update_singleton_and_pair():
    X = SparseDataset.from_vectors([SparseVector([1], [1.0]), SparseVector([2], [1.0]),
                                    SparseVector([1, 3], [0.6, 0.8])], 3)
    m = update_means(X, np.array([0, 0, 1]), 2)
    u = m.unit_vectors()
    assert u[0].term_ids.tolist() == [1, 2]
    assert np.allclose(u[0].values, [2 ** -0.5] * 2, atol=1e-15)
    assert u[1] == X.vector(2)
    assert m.raw_vectors()[1] == X.vector(2)
    assert m.counts.tolist() == [2, 1]


@pytest.mark.parametrize("seed", range(5))
def test_update_matches_dense_average(seed):
    X = random_dataset(seed, n=30, dim=20)
    assign = np.random.default_rng(seed).integers(0, 3, size=30)
    assign[:3] = [0, 1, 2]
    m = update_means(X, assign, 3)
    dense = X.to_dense()
    got = m.to_dense().rows
    for j in range(3):
        assert np.allclose(got[j], dense[assign == j].mean(axis=0), atol=1e-12, rtol=0)
    assert np.allclose(np.linalg.norm(m.to_dense().unit, axis=1), 1.0, atol=1e-12)


def test_empty_cluster_keeps_previous_centroid():
    X = random_dataset(4, n=20)
    prev = _means_at(X, [0, 1, 2])
    m = update_means(X, np.zeros(20, dtype=np.int64), 3, prev=prev)
    assert m.counts.tolist() == [20, 0, 0]
    for j in (1, 2):
        assert m.raw[m.row(j)].tobytes() == prev.raw[prev.row(j)].tobytes()
        assert m.norms[j] == prev.norms[j]


def test_detect_invariant_examples():
    a = np.array([0, 1, 2, 3])
    assert detect_invariant(a, a.copy(), 4).all()
    moved = np.array([0, 0, 2, 3])
    assert detect_invariant(moved, a, 4).tolist() == [False, False, True, True]
    assert not detect_invariant(a, None, 4).any()


def test_objective_singletons_and_duplicates():
    X = random_dataset(5, n=6)
    m = update_means(X, np.arange(6), 6)
    sse, cos = objective(X, np.arange(6), m)
    assert abs(sse) < 1e-12 and cos == pytest.approx(6.0, abs=1e-12)
    v = SparseVector([1, 2], [0.6, 0.8])
    Y = SparseDataset.from_vectors([v, v], 2)
    m = update_means(Y, np.array([0, 0]), 1)
    sse, cos = objective(Y, np.array([0, 0]), m)
    assert abs(sse) < 1e-15 and cos == pytest.approx(2.0, abs=1e-12)


def test_objective_disjoint_supports_closed_form():
    X = SparseDataset.from_vectors([SparseVector([1], [1.0]), SparseVector([2], [1.0])], 2)
    m = update_means(X, np.array([0, 0]), 1)
    sse, cos = objective(X, np.array([0, 0]), m)
    # mean (1/2, 1/2): each member is sqrt(1/2) away
    assert sse == pytest.approx(1.0, abs=1e-15)
    assert cos == pytest.approx(2 * 2 ** -0.5, abs=1e-15)
    assert oracle_objective(X, [0, 0], m.raw_vectors()) == pytest.approx((1.0, 2 ** 0.5), abs=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_objective_matches_oracle(seed):
    X = random_dataset(seed, n=20, dim=15, nnz=4)
    assign = np.random.default_rng(seed).integers(0, 2, size=20)
    assign[:2] = [0, 1]
    m = update_means(X, assign, 2)
    sse, cos = objective(X, assign, m)
    osse, ocos = oracle_objective(X, assign, m.raw_vectors())
    assert abs(sse - osse) < 1e-10 and abs(cos - ocos) < 1e-10


@pytest.mark.parametrize("backend", BACKENDS)
def test_fixed_point_converges_at_second_iteration(backend):
    vecs = [SparseVector([j + 1], [1.0]) for j in range(4)]
    X = SparseDataset.from_vectors(vecs, 4)
    res = run(X, RunConfig(k=4, backend=backend, threads=1), init_means=MeanSet.from_vectors(vecs, 4))
    assert res.converged and res.iterations == 2
    assert res.metrics[-1].moved_objects == 0
    assert res.assign.tolist() == [0, 1, 2, 3]


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(2, 8), backend=st.sampled_from(BACKENDS))
def test_cos_sum_non_decreasing(seed, k, backend):
    X = random_dataset(seed % 1000, n=60, dim=30, nnz=5)
    res = run(X, RunConfig(k=k, seed=seed, backend=backend, threads=1))
    cos = [m.cos_sum for m in res.metrics]
    assert all(b >= a - 1e-9 for a, b in zip(cos, cos[1:]))


@pytest.mark.parametrize("seed", range(6))
def test_icp_matches_full_every_iteration(seed):
    X = random_dataset(seed, n=200, dim=60, nnz=6)
    cfg = dict(k=12, seed=seed, threads=1, max_iter=50)
    full = run(X, RunConfig(backend="lloyd", **cfg))
    icp = run(X, RunConfig(backend="lloyd-icp", **cfg))
    assert len(full.history) == len(icp.history)
    for a, b in zip(full.history, icp.history):
        assert np.array_equal(a, b)
    assert sum(m.pair_evals for m in icp.metrics) <= sum(m.pair_evals for m in full.metrics)


def test_empty_cluster_stays_invariant():
    # four identical objects and two centroids: the second cluster is empty
    v = SparseVector([1], [1.0])
    X = SparseDataset.from_vectors([v] * 4 + [SparseVector([2], [1.0])], 3)
    init = MeanSet.from_vectors([v, SparseVector([3], [1.0]), SparseVector([2], [1.0])], 3)
    km = KMeansRun(X, RunConfig(k=3, backend="sivf", threads=1), init)
    before = km.means.raw[km.means.row(1)].tobytes()
    m1 = km.step()
    assert m1.empty_clusters == 1
    km.step()
    assert km.state.lam[1]
    assert km.means.raw[km.means.row(1)].tobytes() == before


def test_step_past_convergence_is_fixpoint():
    X = random_dataset(7, n=120, dim=40)
    km = KMeansRun(X, RunConfig(k=6, seed=1, threads=1))
    while not km.converged:
        km.step()
    before = km.state.assign.copy()
    m = km.step()
    assert m.pair_evals == 0 and m.madds == 0
    assert np.array_equal(km.state.assign, before)


def test_cache_invariant_means_is_equivalent():
    X = random_dataset(8, n=300, dim=60)
    a = run(X, RunConfig(k=10, seed=2, threads=1))
    b = run(X, RunConfig(k=10, seed=2, threads=1, cache_invariant_means=True))
    assert all(np.array_equal(x, y) for x, y in zip(a.history, b.history))
    assert a.means.raw.tobytes() == b.means.raw.tobytes()


def test_result_write(tmp_path):
    X = random_dataset(9, n=40)
    res = run(X, RunConfig(k=3, seed=0, threads=1))
    out = res.write(tmp_path / "run")
    lines = (out / "assignments.txt").read_text().split()
    assert len(lines) == 40 and {int(x) for x in lines} <= {1, 2, 3}
    head = (out / "metrics.csv").read_text().splitlines()[0]
    assert head.startswith("r,pair_evals,norm_pair_evals")
    assert (out / "means.txt").read_text().startswith(f"#3 {X.dim}\n")

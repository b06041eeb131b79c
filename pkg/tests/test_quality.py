import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracle
from helpers import covering_graph, random_clustering, random_graph
from nmflocal import quality as Q
from nmflocal.clustering import Cluster, Clustering, HardClustering
from nmflocal.graph import Graph, complete_graph, empty_graph, from_edges, ring_of_cliques

LOCAL_COMBOS = list(itertools.product(Q.NODE_PRIORS, Q.SIZE_PRIORS, Q.EDGE_MODELS))


class TestPredictedAdjacency:
    def test_single_pair(self):
        g = empty_graph(3)
        ahat = Q.predicted_adjacency(Clustering.from_sets([[0, 1]]), g)
        assert ahat[0, 1] == 1 and ahat[0, 2] == 0

    def test_double_cover(self):
        ahat = Q.predicted_adjacency(Clustering.from_sets([[0, 1], [0, 1, 2]]), empty_graph(3))
        assert ahat[0, 1] == 2

    def test_empty(self):
        np.testing.assert_array_equal(Q.predicted_adjacency(Clustering(), empty_graph(4)),
                                      np.zeros((4, 4)))

    def test_asymmetric(self):
        cs = Clustering([Cluster({1: 2.0}, {0: 3.0})])
        ahat = Q.predicted_adjacency(cs, empty_graph(2), "asymmetric")
        np.testing.assert_array_equal(ahat, [[0, 6], [0, 0]])


class TestSymNmf:
    def test_perfect(self):
        cs = Clustering([Cluster({0: 1.0, 1: 1.0})])
        a = Q.predicted_adjacency(cs, empty_graph(2))
        assert Q.q_sym_nmf(Graph(a), cs) == 0

    def test_empty_clustering(self):
        g = random_graph(np.random.default_rng(0), 6)
        assert Q.q_sym_nmf(g, Clustering()) == pytest.approx(-0.5 * np.sum(g.weights ** 2))

    def test_k3_one_cluster(self):
        assert Q.q_sym_nmf(complete_graph(3), Clustering.from_sets([[0, 1, 2]])) == -1.5


class TestCpm:
    def test_singletons(self):
        n = 5
        g = random_graph(np.random.default_rng(1), n)
        assert Q.q_cpm(g, HardClustering(range(n))) == -0.5 * n

    def test_k3_merged(self):
        assert Q.q_cpm(complete_graph(3), HardClustering([0, 0, 0])) == 1.5

    def test_gamma_zero(self):
        g = random_graph(np.random.default_rng(2), 5)
        hc = HardClustering([0, 0, 1, 1, 1])
        inside = g.weights[:2, :2].sum() + g.weights[2:, 2:].sum()
        assert Q.q_cpm(g, hc, Q.CpmParams(0.0)) == pytest.approx(inside)

    def test_soft_input_matches_hard(self):
        g = random_graph(np.random.default_rng(3), 6)
        hc = HardClustering([0, 1, 0, 2, 1, 1])
        assert Q.q_cpm(g, hc) == pytest.approx(Q.q_cpm(g, hc.to_clustering()))


class TestSymNmfHard:
    @pytest.mark.parametrize("seed", range(5))
    def test_identity_with_cpm(self, seed):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, 5)
        const = -0.5 * np.sum(g.weights ** 2)
        for p in oracle.all_partitions(range(5)):
            hc = HardClustering.from_sets(p)
            assert Q.q_sym_nmf_hard(g, hc) == pytest.approx(Q.q_cpm(g, hc) + const, abs=1e-12)

    def test_edgeless_singletons(self):
        assert Q.q_sym_nmf_hard(empty_graph(4), HardClustering(range(4))) == -2.0

    def test_empty(self):
        assert Q.q_sym_nmf_hard(empty_graph(0), HardClustering([])) == 0


class TestBayNmf:
    P = Q.BayNmfParams(5, 2)

    def test_small_instance(self):
        g = from_edges(2, [(0, 1)])
        cs = Clustering([Cluster({0: 1, 1: 1}, {0: 1, 1: 1}, beta=1.0)])
        # vhat = all ones; KL part: 2 edges v=1, vhat=1 -> 0 - 4; prior: -(4 - 0)/2; hyper: -(2 - 0)
        assert Q.q_bay_nmf(g, cs, self.P) == pytest.approx(-4 - 2 - 2)

    def test_no_clusters(self):
        g = from_edges(3, [(0, 1, 2.0)])
        assert Q.q_bay_nmf(g, Clustering(), self.P) == Q.NEG_INF
        assert Q.q_bay_nmf(empty_graph(3), Clustering(), self.P) == 0

    def test_empty_cluster_bonus(self):
        rng = np.random.default_rng(0)
        g = random_graph(rng, 5, integer=True)
        cs = Clustering([Cluster({i: 1.0 for i in range(5)}, {i: 1.0 for i in range(5)}, 1.0)])
        for beta in (0.5, 3.0, 20.0):
            empty = Cluster({}, {}, beta)
            diff = Q.q_bay_nmf(g, cs | Clustering([empty]), self.P) - Q.q_bay_nmf(g, cs, self.P)
            expected = g.n * math.log(beta) - (beta * self.P.b - (self.P.a - 1) * math.log(beta))
            assert diff == pytest.approx(expected)

    def test_empty_cluster_improves_quality(self):
        g = ring_of_cliques(10, 5)
        n = g.n
        full = Clustering([Cluster({i: 1.0 for i in range(n)}, {i: 1.0 for i in range(n)}, 1.0)])
        beta = (n + self.P.a - 1) / self.P.b
        with_empty = full | Clustering([Cluster({}, {}, beta)])
        assert Q.q_bay_nmf(g, with_empty, self.P) > Q.q_bay_nmf(g, full, self.P)

    def test_optimal_beta(self):
        rng = np.random.default_rng(1)
        g = random_graph(rng, 4, integer=True)
        H, W = rng.uniform(0.1, 1, (2, 4)), rng.uniform(0.1, 1, (2, 4))
        beta = Q.optimal_beta(W, H, 4, self.P)
        base = Q.bay_nmf_value(g.weights, W, H, beta, self.P)
        for c in range(2):
            for f in (0.99, 1.01):
                b2 = beta.copy()
                b2[c] *= f
                assert Q.bay_nmf_value(g.weights, W, H, b2, self.P) < base


class TestGaussNmf:
    def test_empty_clustering(self):
        g = random_graph(np.random.default_rng(0), 4)
        expected = -0.5 * np.sum(g.weights ** 2) + 16 * math.log(math.sqrt(2 * math.pi))
        assert Q.q_gauss_nmf(g, Clustering()) == pytest.approx(expected)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
    def test_empty_cluster_constant(self, sigma):
        rng = np.random.default_rng(1)
        g = random_graph(rng, 5)
        cs = random_clustering(rng, 5, 2)
        p = Q.GaussianNmfParams(sigma)
        diff = Q.q_gauss_nmf(g, cs | Clustering([Cluster({})]), p) - Q.q_gauss_nmf(g, cs, p)
        assert diff == pytest.approx(5 * math.log(math.sqrt(math.pi * sigma ** 2 / 2)))

    def test_relation_to_sym_nmf(self):
        rng = np.random.default_rng(2)
        g = random_graph(rng, 5)
        cs = random_clustering(rng, 5, 3)
        H = cs.h_matrix(5)
        reg = -np.sum(H ** 2) / 2
        const = 25 * math.log(math.sqrt(2 * math.pi)) + 15 * math.log(math.sqrt(math.pi / 2))
        assert Q.q_gauss_nmf(g, cs) - Q.q_sym_nmf(g, cs) == pytest.approx(reg + const)


class TestLocalProb:
    def test_uncovered_node(self):
        p = Q.LocalPriorConfig(edge="gaussian")
        g = empty_graph(1)
        assert Q.q_local_prob(g, Clustering(), p) == pytest.approx(-1 - math.log(math.sqrt(2 * math.pi)))

    def test_exactly_one_partition(self):
        p = Q.LocalPriorConfig(node_prior="exactly_one")
        g = empty_graph(4)
        parts = Q.additive_parts("local_prob", g, Clustering.from_sets([[0, 1], [2, 3]]), p)
        np.testing.assert_array_equal(parts.q_node, 0)
        assert Q.q_local_prob(g, Clustering.from_sets([[0, 1], [1, 2, 3]]), p) == Q.NEG_INF

    def test_two_node_instance(self):
        g = from_edges(2, [(0, 1)])
        cs = Clustering.from_sets([[0, 1]])
        # nodes: 2 * (-1); coefficients: 2 * (log sqrt(2/pi) - 1/2); edges: 2 * (0 - 1) + 2 * (-1)
        expected = -2 + 2 * (0.5 * math.log(2 / math.pi) - 0.5) - 4
        assert Q.q_local_prob(g, cs) == pytest.approx(expected, rel=1e-14)

    def test_uncovered_edge(self):
        g = from_edges(3, [(0, 2)])
        assert Q.q_local_prob(g, Clustering.from_sets([[0, 1]])) == Q.NEG_INF

    def test_non_integer_weights(self):
        g = from_edges(2, [(0, 1, 0.5)])
        with pytest.raises(Q.QualityError):
            Q.q_local_prob(g, Clustering.from_sets([[0, 1]]))

    def test_crp_size_prior(self):
        g = empty_graph(4)
        cs = Clustering.from_sets([[0, 1, 2, 3]])
        flat = Q.q_local_prob(g, cs, Q.LocalPriorConfig(edge="gaussian"))
        crp = Q.q_local_prob(g, cs, Q.LocalPriorConfig(edge="gaussian", size_prior="crp"))
        assert crp - flat == pytest.approx(math.log(6))

    def test_scope_all_charges_zeros(self):
        g = empty_graph(3)
        cs = Clustering.from_sets([[0]])
        a = Q.q_local_prob(g, cs, Q.LocalPriorConfig(edge="gaussian"))
        b = Q.q_local_prob(g, cs, Q.LocalPriorConfig(edge="gaussian", coeff_scope="all"))
        assert b - a == pytest.approx(2 * 0.5 * math.log(2 / math.pi))

    def test_bad_config(self):
        with pytest.raises(Q.QualityError):
            Q.LocalPriorConfig(node_prior="uniform")
        with pytest.raises(Q.QualityError):
            Q.LocalPriorConfig(lam=0)


class TestToyMaxmin:
    def test_values(self):
        g = empty_graph(7)
        assert Q.toy_maxmin_quality(g, HardClustering.from_sets([[0, 1, 2, 3], [4], [5], [6]])) == 5
        assert Q.toy_maxmin_quality(g, HardClustering.from_sets([[0, 1, 2], [4, 5, 6], [3]])) == 4
        assert Q.toy_maxmin_quality(g, HardClustering([0] * 7)) == 14

    def test_empty(self):
        with pytest.raises(Q.QualityError):
            Q.toy_maxmin_quality(empty_graph(0), Clustering())


class TestAdditiveParts:
    def test_sym_nmf_regrouping(self):
        rng = np.random.default_rng(0)
        g = random_graph(rng, 5)
        cs = random_clustering(rng, 5, 3)
        parts = Q.additive_parts("sym_nmf", g, cs)
        assert parts.q_graph == 0
        np.testing.assert_array_equal(parts.q_node, 0)
        np.testing.assert_array_equal(parts.q_clus, 0)
        ahat = Q.predicted_adjacency(cs, g)
        np.testing.assert_allclose(parts.q_edge, -0.5 * (g.weights - ahat) ** 2)

    def test_local_prob_parts(self):
        rng = np.random.default_rng(1)
        cs = random_clustering(rng, 6, 3)
        g = covering_graph(rng, cs, 6)
        p = Q.LocalPriorConfig(lam=0.3, size_prior="crp", beta=2.0, kappa=1.5)
        parts = Q.additive_parts("local_prob", g, cs, p)
        assert parts.q_graph == 1.5
        counts = (cs.h_matrix(6) > 0).sum(axis=0)
        np.testing.assert_allclose(parts.q_node, counts * math.log(0.3) - 0.3
                                   - np.array([math.lgamma(c + 1) for c in counts]))

    @pytest.mark.parametrize("qf", ["bay_nmf", "toy_maxmin"])
    def test_refused(self, qf):
        with pytest.raises(Q.NotAdditiveError):
            Q.additive_parts(qf, empty_graph(2), Clustering())

    def test_refusal_names_terms(self):
        with pytest.raises(Q.NotAdditiveError, match=r"2\|V\| log beta_c"):
            Q.additive_parts("bay_nmf", empty_graph(2), Clustering())

    def test_scope_all_refused(self):
        with pytest.raises(Q.NotAdditiveError):
            Q.additive_parts("local_prob", empty_graph(2), Clustering(),
                             Q.LocalPriorConfig(coeff_scope="all"))


class TestRegistry:
    def test_round_trip(self):
        for qf in [Q.QualityFunction("cpm", Q.CpmParams(0.3)),
                   Q.QualityFunction("local_prob", Q.LocalPriorConfig(lam=1e-4, size_prior="crp")),
                   Q.QualityFunction("local_prob", Q.LocalPriorConfig(node_prior="none")),
                   Q.QualityFunction("bay_nmf"), Q.QualityFunction("sym_nmf")]:
            assert Q.quality_from_config(qf.to_config()) == qf

    def test_errors(self):
        with pytest.raises(Q.QualityError):
            Q.quality_from_config({"qf": "nope"})
        with pytest.raises(Q.QualityError):
            Q.quality_from_config({"qf": "cpm", "gamma": 1, "delta": 2})
        with pytest.raises(Q.QualityError):
            Q.quality_from_config({})

    def test_is_additive(self):
        assert Q.QualityFunction("sym_nmf").is_additive
        assert not Q.QualityFunction("bay_nmf").is_additive


def _close(a, b, rel=1e-12):
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


class TestOracleEquivalence:
    """Vectorized evaluators against the plain double-loop versions."""

    @pytest.mark.parametrize("seed", range(20))
    def test_all_functions(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 8))
        g = random_graph(rng, n, integer=True)
        A = oracle.weights(g)
        cs = random_clustering(rng, n, asym=True, beta=True)
        pcs = oracle.to_plain(cs)
        assert _close(Q.q_sym_nmf(g, cs), oracle.sym_nmf(A, pcs))
        assert _close(Q.q_asym_nmf(g, cs), oracle.asym_nmf(A, pcs))
        assert _close(Q.q_cpm(g, cs, Q.CpmParams(0.3)), oracle.cpm(A, pcs, 0.3))
        assert _close(Q.q_gauss_nmf(g, cs, Q.GaussianNmfParams(0.7)), oracle.gauss_nmf(A, pcs, 0.7))
        assert _close(Q.q_bay_nmf(g, cs, Q.BayNmfParams(3, 1.5)), oracle.bay_nmf(A, pcs, 3, 1.5))
        if len(cs):
            assert _close(Q.toy_maxmin_quality(g, cs), oracle.toy_maxmin(pcs))

    @pytest.mark.parametrize("combo", LOCAL_COMBOS)
    def test_local_prob(self, combo):
        node, size, edge = combo
        rng = np.random.default_rng(abs(hash(combo)) % 2 ** 32)
        for _ in range(10):
            n = int(rng.integers(1, 7))
            cs = random_clustering(rng, n)
            g = covering_graph(rng, cs, n) if rng.uniform() < 0.8 else random_graph(rng, n, True)
            kw = dict(node_prior=node, lam=float(rng.uniform(0.1, 2)), size_prior=size,
                      beta=float(rng.uniform(0.5, 2)), edge=edge, kappa=0.25)
            for scope in ("support", "all"):
                got = Q.q_local_prob(g, cs, Q.LocalPriorConfig(coeff_scope=scope, **kw))
                want = oracle.local_prob(oracle.weights(g), oracle.to_plain(cs),
                                         coeff_scope=scope, **kw)
                assert _close(got, want)

    @pytest.mark.parametrize("combo", LOCAL_COMBOS)
    def test_parts_total(self, combo):
        node, size, edge = combo
        rng = np.random.default_rng(7)
        p = Q.LocalPriorConfig(node_prior=node, size_prior=size, edge=edge, kappa=-0.5)
        for _ in range(10):
            n = int(rng.integers(1, 7))
            cs = random_clustering(rng, n, k=int(rng.integers(1, 4)))
            g = covering_graph(rng, cs, n)
            q = Q.q_local_prob(g, cs, p)
            total = Q.additive_parts("local_prob", g, cs, p).total()
            assert _close(q, total, 1e-9)


@st.composite
def graph_and_clustering(draw):
    n = draw(st.integers(1, 6))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    return random_graph(rng, n), random_clustering(rng, n)


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(graph_and_clustering())
    def test_decomposable_totals(self, gc):
        g, cs = gc
        for name in ("sym_nmf", "cpm", "gauss_nmf"):
            qf = Q.QualityFunction(name)
            assert _close(qf(g, cs), qf.parts(g, cs).total(), 1e-9)

    @settings(max_examples=60, deadline=None)
    @given(graph_and_clustering(), st.randoms(use_true_random=False))
    def test_permutation_invariance(self, gc, rnd):
        g, cs = gc
        perm = list(range(g.n))
        rnd.shuffle(perm)
        inv = np.argsort(perm)
        gp = Graph(g.weights[np.ix_(inv, inv)])
        csp = Clustering(c.relabeled(lambda i: perm[i]) for c in cs)
        for name in ("sym_nmf", "cpm", "gauss_nmf"):
            qf = Q.QualityFunction(name)
            assert _close(qf(g, cs), qf(gp, csp), 1e-12)

    @settings(max_examples=60, deadline=None)
    @given(graph_and_clustering())
    def test_cluster_order_irrelevant(self, gc):
        g, cs = gc
        rev = Clustering(reversed(cs.clusters))
        assert _close(Q.q_sym_nmf(g, cs), Q.q_sym_nmf(g, rev), 1e-12)

    @settings(max_examples=60, deadline=None)
    @given(graph_and_clustering())
    def test_sym_nmf_non_positive(self, gc):
        g, cs = gc
        assert Q.q_sym_nmf(g, cs) <= 0

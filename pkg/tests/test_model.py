import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evidenceflow.errors import (
    DisconnectedNetwork,
    DuplicateContrast,
    IncompleteMultiArm,
    MalformedRow,
    NegativeAdjustedWeight,
    NegativeTau2,
    NonPositiveVariance,
    UnknownNode,
)
from evidenceflow.fixtures import load_fixture
from evidenceflow.model import (
    AggregateNetwork,
    ContrastObservation,
    Study,
    adjust_multiarm,
    aggregate_from_studies,
    apply_heterogeneity,
    format_aggregate,
    order_treatments,
    parse_aggregate,
    parse_contrasts,
    pool_edges,
)
from evidenceflow.numerics import resistance_distances


def complete_laplacian(adj):
    arms = sorted({t for k in adj.weights for t in k}, key=str)
    n = len(arms)
    L = np.zeros((n, n))
    for key, w in adj.weights.items():
        a, b = sorted(key, key=arms.index)
        i, j = arms.index(a), arms.index(b)
        L[i, j] -= w
        L[j, i] -= w
        L[i, i] += w
        L[j, j] += w
    return arms, L


def multiarm_study(variances, sid="s"):
    """Study whose pairwise variances are arm-level sums ``s_a + s_b``."""
    arms = [str(i + 1) for i in range(len(variances))]
    contrasts = []
    for i in range(len(arms)):
        for j in range(i + 1, len(arms)):
            contrasts.append(ContrastObservation(sid, arms[i], arms[j], 0.1 * (j - i), math.sqrt(variances[i] + variances[j])))
    return Study(sid, tuple(arms), tuple(contrasts))


class TestParseContrasts:
    def test_single_row(self):
        (study,) = parse_contrasts("s1,1,2,0.5,0.2")
        assert study.id == "s1"
        assert study.arms == ("1", "2")
        assert len(study.contrasts) == 1
        assert study.contrasts[0].effect == 0.5

    def test_three_arm(self):
        text = "study,treat1,treat2,effect,se\ns1,1,2,0.5,0.2\ns1,1,3,0.1,0.3\ns1,2,3,-0.4,0.25\n"
        (study,) = parse_contrasts(text)
        assert study.arms == ("1", "2", "3")
        assert len(study.contrasts) == 3

    def test_incomplete_multiarm(self):
        with pytest.raises(IncompleteMultiArm):
            parse_contrasts("s1,1,2,0.5,0.2\ns1,1,3,0.1,0.3\n")

    def test_duplicate(self):
        with pytest.raises(DuplicateContrast):
            parse_contrasts("s1,1,2,0.5,0.2\ns1,2,1,0.1,0.3\n")

    @pytest.mark.parametrize(
        "text",
        ["s1,1,2,0.5", "s1,1,2,abc,0.2", "s1,1,1,0.5,0.2", "s1,1,2,0.5,-1", "s1,1,2,0.5,0"],
    )
    def test_malformed(self, text):
        with pytest.raises(MalformedRow):
            parse_contrasts(text)

    def test_groups_by_study_in_order(self):
        studies = parse_contrasts("b,1,2,0,1\na,2,3,0,1\n")
        assert [s.id for s in studies] == ["b", "a"]


class TestHeterogeneity:
    def test_tau2_zero_is_identity(self):
        (study,) = parse_contrasts("s1,1,2,0.5,0.2")
        assert apply_heterogeneity(study, 0.0).contrasts[0].se == 0.2

    def test_adds_to_variance(self):
        (study,) = parse_contrasts("s1,1,2,0.5,0.2")
        c = apply_heterogeneity(study, 0.01).contrasts[0]
        assert c.variance == pytest.approx(0.05)
        assert c.se == pytest.approx(math.sqrt(0.05))
        assert c.effect == 0.5

    def test_negative(self):
        (study,) = parse_contrasts("s1,1,2,0.5,0.2")
        with pytest.raises(NegativeTau2):
            apply_heterogeneity(study, -0.1)


class TestAdjustMultiarm:
    def test_two_arm_inverse_variance(self):
        (study,) = parse_contrasts("s1,1,2,0.5,0.5")
        assert adjust_multiarm(study).weight("2", "1") == pytest.approx(4.0)

    def test_symmetric_triangle(self):
        # unit triangle of conductances w has R = 2/(3w); R = v gives w = 2/(3v)
        v = 0.3
        se = math.sqrt(v)
        (study,) = parse_contrasts(f"s,1,2,0,{se}\ns,1,3,0,{se}\ns,2,3,0,{se}")
        adj = adjust_multiarm(study)
        for w in adj.weights.values():
            assert w == pytest.approx(2 / (3 * v), rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.01, 5.0), min_size=3, max_size=5))
    def test_resistance_round_trip(self, arm_var):
        study = multiarm_study(arm_var)
        adj = adjust_multiarm(study)
        assert all(w >= 0 for w in adj.weights.values())
        arms, L = complete_laplacian(adj)
        R = resistance_distances(L)
        for c in study.contrasts:
            i, j = arms.index(c.treat_a), arms.index(c.treat_b)
            assert R[i, j] == pytest.approx(c.variance, abs=1e-8)

    def test_incompatible_structure(self):
        # one very large variance against two tiny ones cannot be a resistance metric
        text = "s,1,2,0,0.1\ns,1,3,0,0.1\ns,2,3,0,3.0"
        (study,) = parse_contrasts(text)
        with pytest.raises(NegativeAdjustedWeight):
            adjust_multiarm(study)

    def test_non_positive_variance(self):
        c = ContrastObservation("s", "1", "2", 0.0, 1e-200)
        with pytest.raises(NonPositiveVariance):
            adjust_multiarm(Study("s", ("1", "2"), (c,)))


class TestPoolEdges:
    def test_single_study(self):
        (study,) = parse_contrasts("s1,1,2,0.5,0.5")
        net = pool_edges([adjust_multiarm(study)], [study])
        np.testing.assert_allclose(net.direct_estimates, [0.5])
        np.testing.assert_allclose(net.edge_weights, [4.0])

    def test_weighted_mean(self):
        studies = parse_contrasts(f"a,1,2,1,1\nb,1,2,3,{1 / math.sqrt(3)}")
        net = pool_edges([adjust_multiarm(s) for s in studies], studies)
        np.testing.assert_allclose(net.direct_estimates, [2.5])
        np.testing.assert_allclose(net.edge_weights, [4.0])

    def test_reversed_pair_flips_effect(self):
        studies = parse_contrasts("a,2,1,-1,1\nb,1,2,3,1")
        net = aggregate_from_studies(studies)
        assert net.edges == (("1", "2"),)
        np.testing.assert_allclose(net.direct_estimates, [2.0])

    def test_disconnected(self):
        studies = parse_contrasts("a,1,2,0,1\nb,3,4,0,1")
        with pytest.raises(DisconnectedNetwork) as info:
            aggregate_from_studies(studies)
        assert sorted(map(sorted, info.value.components)) == [["1", "2"], ["3", "4"]]

    def test_two_arm_only_weights_are_inverse_variances(self):
        rng = np.random.default_rng(3)
        rows = [f"s{k},{a},{b},{rng.normal():.6f},{se:.6f}" for k, (a, b, se) in enumerate(
            [(1, 2, 0.3), (2, 3, 0.4), (1, 3, 0.2), (3, 4, 0.5), (1, 2, 0.6)])]
        net = aggregate_from_studies(parse_contrasts("\n".join(rows)))
        expected = {("1", "2"): 1 / 0.09 + 1 / 0.36, ("1", "3"): 25.0, ("2", "3"): 1 / 0.16, ("3", "4"): 4.0}
        for k, e in enumerate(net.edges):
            assert net.edge_weights[k] == pytest.approx(expected[e])


class TestAggregateNetwork:
    def test_incidence_rows(self):
        net = load_fixture("depression")
        B = net.incidence
        assert np.all((B == 1).sum(axis=1) == 1)
        assert np.all((B == -1).sum(axis=1) == 1)
        np.testing.assert_array_equal(B.sum(axis=1), 0)
        for k, (a, b) in enumerate(net.edges):
            assert B[k, net.index(a)] == 1 and B[k, net.index(b)] == -1

    def test_depression_weights(self):
        net = load_fixture("depression")
        w = dict(zip(net.edges, net.edge_weights))
        assert w[("1", "3")] == 7.605
        assert w[("1", "6")] == 4.432
        assert w[("3", "9")] == 87.697
        assert w[("7", "10")] == 5.894
        assert net.n_edges == 20 and net.n_treatments == 11

    def test_numeric_ordering(self):
        assert order_treatments(["10", "2", "1"]) == ["1", "2", "10"]
        assert order_treatments(["b", "10", "a"]) == ["10", "a", "b"]

    def test_from_edges_reorients(self):
        net = AggregateNetwork.from_edges([("3", "1"), ("1", "2")], [2.0, 1.0], [0.4, 0.1])
        assert net.edges == (("1", "2"), ("1", "3"))
        np.testing.assert_allclose(net.direct_estimates, [0.1, -0.4])
        assert net.edge_index("3", "1") == (1, -1)
        assert net.edge_index("2", "3") == (None, 0)

    def test_unknown_treatment(self):
        with pytest.raises(UnknownNode):
            load_fixture("fictional5").index("9")

    def test_duplicate_edge(self):
        with pytest.raises(DuplicateContrast):
            AggregateNetwork.from_edges([("1", "2"), ("2", "1")], [1.0, 1.0])


class TestAggregateCsv:
    def test_round_trip(self):
        net = AggregateNetwork.from_edges([("1", "2"), ("2", "3"), ("1", "3")], [1 / 3, 2.5, 7.1], [0.1, -1 / 7, 2.0])
        back = parse_aggregate(format_aggregate(net))
        assert back.edges == net.edges
        np.testing.assert_allclose(back.edge_weights, net.edge_weights, rtol=1e-14)
        np.testing.assert_allclose(back.direct_estimates, net.direct_estimates, rtol=1e-14)

    def test_estimates_all_or_none(self):
        with pytest.raises(MalformedRow):
            parse_aggregate("1,2,0.5,1\n2,3,,1\n")

    def test_rejects_non_positive_weight(self):
        with pytest.raises(MalformedRow):
            parse_aggregate("1,2,,0\n")

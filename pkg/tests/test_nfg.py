import numpy as np
import pytest
from numpy.testing import assert_allclose

from ccss import fusion, nfg
from ccss.channels import FadingLink


def seven_variable_model(rng, cards=(2, 3, 2, 2, 3, 2, 4)):
    cards = dict(zip([f"x{i}" for i in range(1, 8)], cards))

    def table(*vs):
        return rng.random([cards[v] for v in vs]) + 0.05

    factors = {
        "fA": (("x1", "x2", "x3", "x4"), table("x1", "x2", "x3", "x4")),
        "fB": (("x1", "x5"), table("x1", "x5")),
        "fC": (("x2", "x7"), table("x2", "x7")),
        "fD": (("x4",), table("x4")),
        "fE": (("x5",), table("x5")),
        "fF": (("x5", "x6"), table("x5", "x6")),
    }
    return factors, cards


def random_tree_model(rng):
    """Random acyclic factor graph: each new factor reuses at most one old variable."""
    n_vars = int(rng.integers(2, 11))
    cards = {f"v{i}": int(rng.integers(2, 5)) for i in range(n_vars)}
    names = list(cards)
    factors = {}
    placed = [names[0]]
    fresh = names[1:]
    i = 0
    while fresh:
        anchor = placed[int(rng.integers(len(placed)))]
        take = min(len(fresh), int(rng.integers(1, 3)))
        new = fresh[:take]
        fresh = fresh[take:]
        vs = (anchor, *new)
        factors[f"f{i}"] = (vs, rng.random([cards[v] for v in vs]) + 0.01)
        placed.extend(new)
        i += 1
    for v in names:
        if rng.random() < 0.4:
            factors[f"u_{v}"] = ((v,), rng.random(cards[v]) + 0.01)
    return factors, cards


def test_seven_variable_model_structure():
    factors, cards = seven_variable_model(np.random.default_rng(0))
    g = nfg.NfgGraph.from_factors(factors, cards)
    # x5 is used by three factors and needs an equality node
    assert "=x5" in g.nodes and g.nodes["=x5"].equality
    assert g.nodes["=x5"].degree == 4
    assert g.edges["x3"].is_half and g.edges["x6"].is_half and g.edges["x7"].is_half
    assert g.is_acyclic()
    assert g.variables() == sorted(cards)


def test_seven_variable_model_beliefs():
    factors, cards = seven_variable_model(np.random.default_rng(1))
    res = nfg.run_spa(nfg.NfgGraph.from_factors(factors, cards))
    ref = nfg.brute_force_marginals(factors, cards)
    for v in cards:
        assert_allclose(res.beliefs[v], ref[v], rtol=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_random_trees_match_brute_force(seed):
    factors, cards = random_tree_model(np.random.default_rng(seed))
    res = nfg.run_spa(nfg.NfgGraph.from_factors(factors, cards))
    ref = nfg.brute_force_marginals(factors, cards)
    for v in cards:
        assert_allclose(res.beliefs[v], ref[v], rtol=1e-12)


def test_each_message_computed_once():
    factors, cards = seven_variable_model(np.random.default_rng(2))
    g = nfg.NfgGraph.from_factors(factors, cards)
    res = nfg.run_spa(g)
    assert max(res.store.computed.values()) == 1
    # one message per (node, edge) incidence in each direction over full edges
    incidences = sum(n.degree for n in g.nodes.values())
    assert res.node_messages == incidences


def test_message_before_inputs_is_refused():
    factors, cards = seven_variable_model(np.random.default_rng(3))
    g = nfg.NfgGraph.from_factors(factors, cards)
    with pytest.raises(nfg.SchedulingError):
        nfg.message_node_to_edge(g, "fA", "x1", nfg.MessageStore())


def test_chain_of_three():
    rng = np.random.default_rng(4)
    cards = {"a": 3, "b": 2, "c": 4}
    factors = {
        "p": (("a",), rng.random(3)),
        "q": (("a", "b"), rng.random((3, 2))),
        "r": (("b", "c"), rng.random((2, 4))),
    }
    res = nfg.run_spa(nfg.NfgGraph.from_factors(factors, cards))
    joint = np.einsum("a,ab,bc->abc", *(f[1] for f in factors.values()))
    joint /= joint.sum()
    assert_allclose(res.beliefs["b"], joint.sum(axis=(0, 2)), rtol=1e-13)


def test_equality_node_multiplies_messages():
    cards = {"x": 3}
    tabs = [np.array([0.2, 0.3, 0.5]), np.array([0.6, 0.1, 0.3]), np.array([0.1, 0.8, 0.1])]
    factors = {f"f{i}": (("x",), t) for i, t in enumerate(tabs)}
    res = nfg.run_spa(nfg.NfgGraph.from_factors(factors, cards))
    prod = tabs[0] * tabs[1] * tabs[2]
    assert_allclose(res.beliefs["x"], prod / prod.sum(), rtol=1e-14)


def test_cycle_rejected():
    cards = {"a": 2, "b": 2}
    t = np.ones((2, 2))
    factors = {"f": (("a", "b"), t), "g": (("a", "b"), t)}
    g = nfg.NfgGraph.from_factors(factors, cards)
    assert not g.is_acyclic()
    with pytest.raises(nfg.CycleError):
        nfg.run_spa(g)


def test_node_validation():
    g = nfg.NfgGraph()
    g.add_edge("a", 2)
    with pytest.raises(ValueError):
        g.add_node("f", ["a"], np.ones(3))
    with pytest.raises(ValueError):
        g.add_node("f", ["a"], -np.ones(2))


@pytest.mark.parametrize(
    "K,card,want",
    [(1, 2, (6, 60, 384)), (10, 2, (40, 280, 640)), (10, 4, (40, 1040, 10240))],
)
def test_complexity_counts(K, card, want):
    assert nfg.complexity_row(K, card) == want


def test_complexity_of_run_matches_census():
    g = nfg.ccss_graph(1, 2)
    res = nfg.run_spa(g)
    assert res.cycles(g) == nfg.complexity_fg(g, 2) == 60


def test_census_text_lists_degrees():
    text = nfg.ccss_graph(1, 2).census_text()
    assert "degree=3" in text and "degree=1" in text


def test_branch_message_order():
    link = FadingLink.from_snr_db(3.0, 1.0)
    bm = nfg.ccss_branch_messages(0.4, 0.6, 0.05, link)
    labels = [s.split(":")[0] for s in bm.order]
    assert labels == ["i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix", "x", "xi"]
    assert labels.index("iv") < labels.index("v")


def test_branch_marginal_gives_lrt():
    links = [FadingLink.from_snr_db(s, m) for s, m in ((2.0, 1.0), (8.0, 2.0), (0.0, 0.5))]
    pd, pf = [0.4, 0.8, 0.3], [0.03] * 3
    y = [0.3, -1.2, 2.2]
    l0, l1 = nfg.ccss_likelihoods(y, pd, pf, links)
    assert_allclose(l1 - l0, fusion.log_lrt_statistic(np.array(y), pd, pf, links), rtol=1e-12)


def test_discrete_branch_matches_analytic_marginal():
    # quantise t into {below, above} and u into {-1, +1}: the graph marginal
    # on H must equal the closed-form branch message
    link = FadingLink.from_snr_db(5.0, 1.0)
    pd, pf, y = 0.7, 0.04, 0.9
    cards = {"H": 2, "t": 2, "u": 2}
    p_t = np.array([[1 - pf, pf], [1 - pd, pd]])
    p_u = np.eye(2)
    lik = np.array([fusion.report_density(y, -1, link), fusion.report_density(y, 1, link)])
    factors = {
        "prior": (("H",), np.array([0.5, 0.5])),
        "sense": (("H", "t"), p_t),
        "decide": (("t", "u"), p_u),
        "report": (("u",), lik),
    }
    res = nfg.run_spa(nfg.NfgGraph.from_factors(factors, cards))
    g0, g1 = nfg.ccss_branch_marginal(y, pd, pf, link)
    assert_allclose(res.beliefs["H"], np.array([g0, g1]) / (g0 + g1), rtol=1e-13)

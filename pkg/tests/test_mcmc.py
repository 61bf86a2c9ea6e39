import numpy as np
import pytest

from gwtree import mcmc, oracle, recursion
from gwtree.model import ParameterError, Tree, favoured_links, two_class_params

P = (0.4, 0.3, 0.3)


@pytest.mark.parametrize("b", [1.0, 2.0])
@pytest.mark.parametrize("x", [1, 2])
@pytest.mark.parametrize("kind", ["local", "global"])
def test_exact_stationarity(b, x, kind):
    prm = two_class_params(P, b, x, 1)
    T = mcmc.transition_matrix(prm, kind=kind)
    pi = oracle.exact_measure(prm).probs
    assert np.all(T.P >= 0)
    assert np.abs(T.P.sum(axis=1) - 1).max() < 1e-12
    assert np.abs(pi @ T.P - pi).max() < 1e-12
    flow = pi[:, None] * T.P
    assert np.abs(flow - flow.T).max() < 1e-12


@pytest.mark.parametrize("accelerated", [False, True])
def test_depth2_matrix(accelerated):
    prm = two_class_params(P, 2.0, 2, 2)
    T = mcmc.transition_matrix(prm, lam=(0.2, 0.3, 0.5), accelerated=accelerated)
    pi = oracle.exact_measure(prm).probs
    assert T.P.shape == (183, 183)
    flow = pi[:, None] * T.P
    assert np.abs(flow - flow.T).max() < 1e-12
    assert mcmc.is_irreducible(T.P)
    assert np.any(np.diag(T.P) > 0)


def test_free_chain_has_gw_law():
    prm = two_class_params(P, 1.0, 1, 2)
    T = mcmc.transition_matrix(prm)
    gw = oracle.gw_weights(T.states, prm.dist)
    assert np.abs(gw @ T.P - gw).max() < 1e-14


def test_irreducible_depth1():
    prm = two_class_params(P, 2.0, 2, 1)
    assert mcmc.is_irreducible(mcmc.transition_matrix(prm).P)
    assert not mcmc.is_irreducible(np.eye(3))


def test_matrix_bound():
    with pytest.raises(ParameterError):
        mcmc.transition_matrix(two_class_params(P, 2.0, 2, 3))


def test_config_validation():
    prm = two_class_params(P, 2.0, 2, 1)
    with pytest.raises(ParameterError):
        mcmc.ChainConfig(prm, lam=(0.0, 1.0))
    with pytest.raises(ParameterError):
        mcmc.ChainConfig(prm, lam=(0.5, 0.6))
    with pytest.raises(ParameterError):
        mcmc.ChainConfig(prm, lam=(1.0,))
    with pytest.raises(ParameterError):
        mcmc.ChainConfig(prm, kind="heat-bath")
    assert mcmc.ChainConfig(prm).lam == (0.5, 0.5)


def test_seed_determinism():
    prm = two_class_params(P, 2.0, 2, 2)
    a = mcmc.sample_chain(mcmc.ChainConfig(prm, steps=5000, seed=11, thin=7))
    b = mcmc.sample_chain(mcmc.ChainConfig(prm, steps=5000, seed=11, thin=7))
    c = mcmc.sample_chain(mcmc.ChainConfig(prm, steps=5000, seed=12, thin=7))
    assert np.array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)
    assert a.states.shape[0] == 5000 // 7


def test_states_are_valid_trees():
    prm = two_class_params(P, 1.5, 1, 3)
    s = mcmc.sample_chain(mcmc.ChainConfig(prm, steps=3000, seed=2, thin=50))
    idx = oracle._row_index(3, 2)
    assert all(row.tobytes() in idx for row in s.states)


def test_global_step_free_is_gw():
    prm = two_class_params(P, 1.0, 1, 1)
    rng = np.random.default_rng(0)
    start = Tree(1, {(): 0})
    counts = {}
    for _ in range(4000):
        t = mcmc.global_step(start, prm, rng)
        counts[t] = counts.get(t, 0) + 1
    meas = oracle.exact_measure(prm)
    emp = np.array([counts.get(t, 0) for t, _ in meas.entries()]) / 4000
    assert mcmc.tv_distance(emp, meas.probs) < 0.05


def test_local_growth_always_accepted():
    # growing a node of the b > 1 model never lowers the weight factor
    prm = two_class_params(P, 3.0, 2, 1)
    rng = np.random.default_rng(5)
    t = Tree(1, {(): 1, (1,): 1})
    for _ in range(300):
        t2 = mcmc.local_step(t, prm, rng=rng)
        grew = len(t2) > len(t) or sum(t2.offspring.values()) > sum(t.offspring.values())
        if grew:
            assert favoured_links(t2, 2) >= favoured_links(t, 2)
        t = t2


def test_zero_steps():
    prm = two_class_params(P, 2.0, 2, 1)
    st = mcmc.run_chain(mcmc.ChainConfig(prm, steps=0))
    assert all(s.ess == 0 for s in st.observables.values())


def test_ess_bounds():
    rng = np.random.default_rng(0)
    x = rng.normal(size=4000)
    assert 3000 < mcmc.effective_sample_size(x) <= 4000
    ar = np.empty(4000)
    ar[0] = 0
    for i in range(1, 4000):
        ar[i] = 0.95 * ar[i - 1] + rng.normal()
    assert mcmc.effective_sample_size(ar) < 400
    assert mcmc.effective_sample_size([]) == 0


@pytest.mark.parametrize("n", [0, 1, 2])
@pytest.mark.parametrize("x", [1, 2])
def test_chain_means_vs_recursion(n, x):
    prm = two_class_params(P, 2.0, x, n)
    st = mcmc.run_chain(mcmc.ChainConfig(prm, steps=200_000, seed=100 * n + x),
                        ("L", "Q", "N22"))
    ob = recursion.observables(prm)
    for key, exact in (("L", ob.meanL), ("Q", ob.meanQ), ("N22", ob.meanN22)):
        s = st.observables[key]
        assert abs(s.mean - exact) < 3 * s.stderr + 1e-12, (key, s.mean, exact, s.stderr)
    assert 0 <= st.acceptance <= 1


def test_global_chain_means():
    prm = two_class_params(P, 2.0, 2, 2)
    st = mcmc.run_chain(mcmc.ChainConfig(prm, kind="global", steps=200_000, seed=9), ("N22",))
    s = st.observables["N22"]
    assert abs(s.mean - recursion.observables(prm).meanN22) < 3 * s.stderr


def test_summary_dict():
    prm = two_class_params(P, 2.0, 2, 1)
    d = mcmc.run_chain(mcmc.ChainConfig(prm, steps=1000, seed=4)).to_dict()
    assert d["seed"] == 4 and d["generator"] == mcmc.GENERATOR
    assert set(d["estimates"]) == {"L", "Q", "N", "N22"}
    assert all(d["ess"][k] <= 1000 for k in d["ess"])

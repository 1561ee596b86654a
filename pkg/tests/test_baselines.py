import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pacmap.baselines import arg_max_product, independent_map, max_product
from pacmap.circuit import (
    circuit_from_pmf,
    generate_deterministic_circuit,
    generate_random_circuit,
    parse_circuit,
)
from pacmap.inference import (
    QuerySpec,
    brute_force_map,
    make_oracle,
    tabulate_conditional,
)

FACTORIZED = parse_circuit(
    "spn v1\nvars 2\nleaf 0 bernoulli 0 0.7\nleaf 1 bernoulli 1 0.2\nprod 2 0 1\nroot 2\n"
)


def test_max_product_factorized():
    res = max_product(FACTORIZED, QuerySpec((0, 1)))
    assert res.q_hat.tolist() == [1, 0]
    assert res.log_p_hat == pytest.approx(math.log(0.7 * 0.8), rel=1e-12)
    assert res.method == "mp"


def test_arg_max_product_factorized_matches_mp():
    mp = max_product(FACTORIZED, QuerySpec((0, 1)))
    amp = arg_max_product(FACTORIZED, QuerySpec((0, 1)))
    assert amp.q_hat.tolist() == mp.q_hat.tolist()
    assert amp.log_p_hat == mp.log_p_hat


def test_independent_map_factorized_is_exact():
    oracle = make_oracle(FACTORIZED, QuerySpec((0, 1)))
    res = independent_map(oracle)
    assert res.q_hat.tolist() == [1, 0]
    assert res.method == "ind"


@pytest.mark.parametrize("n,seed", [(4, 0), (6, 1), (8, 2), (10, 3)])
def test_heuristics_exact_on_deterministic_circuits(n, seed):
    c = generate_deterministic_circuit(n, seed=seed)
    spec = QuerySpec(tuple(range(n)))
    table = tabulate_conditional(make_oracle(c, spec))
    bits, logp = brute_force_map(table)
    mp = max_product(c, spec)
    amp = arg_max_product(c, spec)
    assert mp.q_hat.tolist() == bits.tolist()
    assert amp.q_hat.tolist() == bits.tolist()
    assert mp.log_p_hat == pytest.approx(logp, rel=1e-9)
    assert amp.log_p_hat == pytest.approx(logp, rel=1e-9)


def test_heuristics_exact_on_deterministic_circuit_with_evidence():
    c = generate_deterministic_circuit(8, seed=9)
    spec = QuerySpec(tuple(range(6)), {6: 1, 7: 0})
    table = tabulate_conditional(make_oracle(c, spec))
    bits, logp = brute_force_map(table)
    for method in (max_product, arg_max_product):
        res = method(c, spec)
        assert res.log_p_hat == pytest.approx(logp, rel=1e-9)


@given(st.integers(0, 20_000))
@settings(max_examples=40, deadline=None)
def test_heuristics_never_exceed_the_mode(seed):
    c = generate_random_circuit(8, depth=2, fanout=2, seed=seed)
    spec = QuerySpec(tuple(range(8)))
    oracle = make_oracle(c, spec)
    _, log_pstar = brute_force_map(tabulate_conditional(oracle))
    tol = 1e-9 * abs(log_pstar)
    assert max_product(c, spec, oracle=oracle).log_p_hat <= log_pstar + tol
    assert arg_max_product(c, spec, oracle=oracle).log_p_hat <= log_pstar + tol


@given(st.integers(0, 20_000))
@settings(max_examples=40, deadline=None)
def test_amp_dominates_mp(seed):
    c = generate_random_circuit(10, depth=3, fanout=2, seed=seed)
    spec = QuerySpec(tuple(range(10)))
    oracle = make_oracle(c, spec)
    mp = max_product(c, spec, oracle=oracle)
    amp = arg_max_product(c, spec, oracle=oracle)
    assert amp.log_p_hat >= mp.log_p_hat - 1e-12


def test_independent_counterexample_table():
    # p(0,0)=0.4, p(1,0)=0.25, p(1,1)=0.35: per-variable marginals pick (1,0)
    # with mass 0.25 although the mode is (0,0) with 0.4.
    c = circuit_from_pmf([0.4, 0.0, 0.25, 0.35])
    oracle = make_oracle(c, QuerySpec((0, 1)))
    res = independent_map(oracle)
    assert res.q_hat.tolist() == [1, 0]
    assert math.exp(res.log_p_hat) == pytest.approx(0.25, rel=1e-9)
    bits, logp = brute_force_map(tabulate_conditional(oracle))
    assert bits.tolist() == [0, 0]
    assert math.exp(logp) == pytest.approx(0.4, rel=1e-9)


def test_independent_tie_breaks_to_zero():
    c = parse_circuit("spn v1\nvars 1\nleaf 0 bernoulli 0 0.5\nroot 0\n")
    res = independent_map(make_oracle(c, QuerySpec((0,))))
    assert res.q_hat.tolist() == [0]


def test_leaf_tie_breaks_to_zero_in_mp():
    c = parse_circuit("spn v1\nvars 1\nleaf 0 bernoulli 0 0.5\nroot 0\n")
    res = max_product(c, QuerySpec((0,)))
    assert res.q_hat.tolist() == [0]


def test_results_cover_exactly_query_vars(small_circuits):
    c = small_circuits[(10, 4)]
    spec = QuerySpec((1, 5, 9), {0: 1, 2: 0}, (3, 4, 6, 7, 8))
    oracle = make_oracle(c, spec)
    for res in (
        max_product(c, spec, oracle=oracle),
        arg_max_product(c, spec, oracle=oracle),
        independent_map(oracle),
    ):
        assert res.q_hat.shape == (3,)
        assert res.log_p_hat > -np.inf


def _best_time(fn, repeats=3):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def test_runtime_scaling_mp_linear_amp_quadratic():
    configs = [(32, 3), (128, 5), (256, 5)]
    sizes, mp_times, amp_times = [], [], []
    for n, depth in configs:
        c = generate_random_circuit(n, depth=depth, fanout=2, seed=13)
        spec = QuerySpec(tuple(range(n)))
        oracle = make_oracle(c, spec)
        max_product(c, spec, oracle=oracle)  # warm
        sizes.append(len(c.nodes))
        mp_times.append(_best_time(lambda: max_product(c, spec, oracle=oracle)))
        amp_times.append(_best_time(lambda: arg_max_product(c, spec, oracle=oracle), repeats=1))
    mp_slope = np.polyfit(np.log(sizes), np.log(mp_times), 1)[0]
    amp_slope = np.polyfit(np.log(sizes), np.log(amp_times), 1)[0]
    assert mp_slope <= 1.2, f"mp slope {mp_slope:.2f} (sizes {sizes})"
    assert amp_slope <= 2.2, f"amp slope {amp_slope:.2f} (sizes {sizes})"

"""ERGM statistics, change statistics, dyad kernel, and the network loader."""

import itertools

import numpy as np
import pytest
from scipy import stats as sps

from wlposterior.models.ergm import (
    STAT_VARIANTS,
    ErgmKernel,
    ergm_change_stats,
    ergm_flip_sweep,
    ergm_model,
    ergm_stats,
    florentine_business,
    load_edge_list,
)


def rng(seed):
    return np.random.default_rng(seed)


def random_graph(n, p, g):
    adj = (g.random((n, n)) < p).astype(np.int8)
    adj = np.triu(adj, 1)
    return adj + adj.T


def slow_stats(adj, variant):
    """Reference counts by direct configuration loops."""
    n = adj.shape[0]
    edges = sum(adj[i, j] for i in range(n) for j in range(i + 1, n))
    tri = sum(
        adj[i, j] * adj[i, k] * adj[j, k]
        for i, j, k in itertools.combinations(range(n), 3)
    )
    if variant == "literal":
        two = sum(
            adj[i, k] * adj[j, k]
            for i, j, k in itertools.combinations(range(n), 3)
        )
        three = sum(
            adj[i, l] * adj[j, l] * adj[k, l]
            for i, j, k, l in itertools.combinations(range(n), 4)
        )
    else:
        deg = adj.sum(axis=0)
        two = sum(d * (d - 1) // 2 for d in deg)
        three = sum(d * (d - 1) * (d - 2) // 6 for d in deg)
    return np.array([edges, two, three, tri], dtype=float)


def complete_graph(n):
    return (np.ones((n, n)) - np.eye(n)).astype(np.int8)


# ---------------------------------------------------------------- statistics


def test_k4_literal_counts():
    assert np.array_equal(ergm_stats(complete_graph(4), "literal"), [6, 4, 1, 4])


def test_k4_standard_counts():
    assert np.array_equal(ergm_stats(complete_graph(4), "standard"), [6, 12, 4, 4])


def test_triangle_with_isolate_literal_counts():
    adj = np.zeros((4, 4), dtype=np.int8)
    for i, j in [(0, 1), (0, 2), (1, 2)]:
        adj[i, j] = adj[j, i] = 1
    assert np.array_equal(ergm_stats(adj, "literal"), [3, 1, 0, 1])


def test_empty_graph_is_all_zero():
    for v in STAT_VARIANTS:
        assert np.array_equal(ergm_stats(np.zeros((5, 5), dtype=np.int8), v), np.zeros(4))


def test_stats_match_slow_oracle_on_random_graphs():
    g = rng(41)
    for _ in range(20):
        adj = random_graph(6, 0.4, g)
        for v in STAT_VARIANTS:
            assert np.array_equal(ergm_stats(adj, v), slow_stats(adj, v))


def test_stats_reject_bad_adjacency():
    with pytest.raises(ValueError, match="square"):
        ergm_stats(np.zeros((2, 3)))
    with pytest.raises(ValueError, match="diagonal"):
        ergm_stats(np.eye(3))
    bad = np.zeros((3, 3))
    bad[0, 1] = 1.0
    with pytest.raises(ValueError, match="symmetric"):
        ergm_stats(bad)
    bad = np.zeros((3, 3))
    bad[0, 1] = bad[1, 0] = 2.0
    with pytest.raises(ValueError, match="0 or 1"):
        ergm_stats(bad)


def test_unknown_variant_rejected():
    with pytest.raises(ValueError, match="variant"):
        ergm_stats(np.zeros((3, 3), dtype=np.int8), "directed")


# ---------------------------------------------------------------- change stats


def test_change_stats_match_direct_differences_everywhere():
    g = rng(43)
    for _ in range(8):
        adj = random_graph(6, 0.5, g)
        for v in STAT_VARIANTS:
            for i in range(6):
                for j in range(i + 1, 6):
                    with_e = adj.copy()
                    with_e[i, j] = with_e[j, i] = 1
                    without = adj.copy()
                    without[i, j] = without[j, i] = 0
                    want = ergm_stats(with_e, v) - ergm_stats(without, v)
                    got = ergm_change_stats(adj, i, j, v)
                    assert np.array_equal(got, want), (v, i, j)


def test_change_stats_ignore_current_edge_state():
    adj = random_graph(5, 0.5, rng(44))
    on = adj.copy()
    on[1, 3] = on[3, 1] = 1
    off = adj.copy()
    off[1, 3] = off[3, 1] = 0
    for v in STAT_VARIANTS:
        assert np.array_equal(
            ergm_change_stats(on, 1, 3, v), ergm_change_stats(off, 1, 3, v)
        )


def test_change_stats_reject_self_pair():
    with pytest.raises(ValueError, match="dyad"):
        ergm_change_stats(np.zeros((3, 3), dtype=np.int8), 1, 1)


def test_change_stats_do_not_mutate_input():
    adj = random_graph(4, 0.6, rng(45))
    before = adj.copy()
    ergm_change_stats(adj, 0, 2)
    assert np.array_equal(adj, before)


# ---------------------------------------------------------------- kernel


def graph_index(adj):
    n = adj.shape[0]
    bits = [int(adj[i, j]) for i in range(n) for j in range(i + 1, n)]
    return int(sum(b << k for k, b in enumerate(bits)))


def enumerate_graphs(n):
    m = n * (n - 1) // 2
    for code in range(1 << m):
        adj = np.zeros((n, n), dtype=np.int8)
        k = 0
        for i in range(n):
            for j in range(i + 1, n):
                if (code >> k) & 1:
                    adj[i, j] = adj[j, i] = 1
                k += 1
        yield adj


@pytest.mark.parametrize("variant", STAT_VARIANTS)
def test_dyad_sweep_preserves_target_law_n3(variant):
    theta = np.array([0.2, -0.3, 0.1, 0.4])
    graphs = list(enumerate_graphs(3))
    logw = np.array([float(slow_stats(a, variant) @ theta) for a in graphs])
    p = np.exp(logw - logw.max())
    p = p / p.sum()
    probs = np.zeros(8)
    for a, pi in zip(graphs, p):
        probs[graph_index(a)] = pi
    g = rng(47)
    adj = np.zeros((3, 3), dtype=np.int8)
    for _ in range(200):
        ergm_flip_sweep(adj, theta, g, variant)
    counts = np.zeros(8)
    keep = 20_000
    for k in range(keep * 5):
        ergm_flip_sweep(adj, theta, g, variant)
        if k % 5 == 0:
            counts[graph_index(adj)] += 1
    res = sps.chisquare(counts, f_exp=probs * keep)
    assert res.pvalue > 0.001


def test_flip_sweep_validates_theta_length():
    with pytest.raises(ValueError, match="four"):
        ergm_flip_sweep(np.zeros((3, 3), dtype=np.int8), np.zeros(3), rng(0))


def test_kernel_needs_two_actors():
    with pytest.raises(ValueError):
        ErgmKernel(1)


def test_kernel_sweep_matches_free_function_stream():
    k = ErgmKernel(5, "standard")
    a1 = k.initial_state(rng(0))
    a2 = a1.copy()
    theta = np.array([0.1, 0.05, -0.02, 0.3])
    k.sweep(a1, theta, rng(33))
    ergm_flip_sweep(a2, theta, rng(33), "standard")
    assert np.array_equal(a1, a2)


def test_kernel_stats_and_initial_state():
    k = ErgmKernel(4)
    x = k.initial_state(rng(1))
    assert np.array_equal(x, np.zeros((4, 4)))
    assert np.array_equal(k.stats(complete_graph(4)), [6, 4, 1, 4])


@pytest.mark.parametrize("variant", STAT_VARIANTS)
def test_fast_spec_hooks_agree_with_reference_path(variant):
    k = ErgmKernel(4, variant)
    sweep_fn, stats_fn, flag, per_sweep, sweeps = k.fast_spec()
    assert per_sweep == 6
    assert sweeps == 1
    theta = np.array([0.2, -0.1, 0.05, 0.3])
    a1 = random_graph(4, 0.5, rng(7))
    a2 = a1.copy()
    u = rng(23).random(6)

    from wlposterior.models.ergm import _dyad_sweep

    sweep_fn(a1, theta, u, flag)
    _dyad_sweep(a2, theta, u, variant == "literal")
    assert np.array_equal(a1, a2)
    out = np.zeros(4)
    stats_fn(a1, out, flag)
    assert np.array_equal(out, ergm_stats(a1, variant))


# ---------------------------------------------------------------- model/data


def test_ergm_model_box_and_extras():
    adj = complete_graph(4)
    m = ergm_model(adj, "standard")
    assert np.array_equal(m.lower, [-50, -50, -50, -50])
    assert np.array_equal(m.upper, [50, 50, 50, 50])
    assert np.array_equal(m.observed_stats, [6, 12, 4, 4])
    assert m.kind == "ergm"
    assert m.extra == {"n_actors": 4, "variant": "standard"}


def test_load_edge_list_round_trip(tmp_path):
    path = tmp_path / "net.txt"
    path.write_text("# comment\n3\n1 2\n2 3\n")
    adj = load_edge_list(path)
    want = np.zeros((3, 3), dtype=np.int8)
    want[0, 1] = want[1, 0] = 1
    want[1, 2] = want[2, 1] = 1
    assert np.array_equal(adj, want)


@pytest.mark.parametrize(
    "body,lineno,message",
    [
        ("1 2\n", 1, "node count"),
        ("x\n", 1, "not an integer"),
        ("3\n1 2 3\n", 2, "pair"),
        ("3\n1 b\n", 2, "not integers"),
        ("3\n# ok\n\n1 4\n", 4, "out of range"),
        ("3\n2 2\n", 2, "self-loop"),
    ],
)
def test_load_edge_list_errors_carry_line_numbers(tmp_path, body, lineno, message):
    path = tmp_path / "bad.txt"
    path.write_text(body)
    with pytest.raises(ValueError, match=message) as exc:
        load_edge_list(path)
    assert ":%d:" % lineno in str(exc.value)


def test_load_edge_list_empty_file(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("# nothing here\n")
    with pytest.raises(ValueError, match="missing node count"):
        load_edge_list(path)


def test_bundled_business_network_shape():
    adj = florentine_business()
    assert adj.shape == (16, 16)
    assert int(adj.sum()) // 2 == 15
    deg = adj.sum(axis=0)
    # Medici are node 9 in the file's alphabetical numbering
    assert deg[8] == 5
    assert int((deg == 0).sum()) == 4
    assert np.array_equal(adj, adj.T)

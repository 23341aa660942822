import numpy as np
import pytest

from socialsampling.errors import BadParameters, DisconnectedAfterRetries, NotSymmetric
from socialsampling.topology import (
    Graph,
    TopologySpec,
    generate,
    grid,
    is_connected,
    laplacian,
    max_degree,
    read_edgelist,
    spectrum,
    star,
    write_edgelist,
)


def test_grid_5x5():
    g = generate(grid(5, 5))
    assert g.n == 25
    assert g.m == 40
    assert max_degree(g) == 4


@pytest.mark.parametrize("r,c", [(1, 2), (2, 2), (3, 7), (10, 10)])
def test_grid_edge_count_formula(r, c):
    g = generate(grid(r, c))
    assert g.m == r * (c - 1) + c * (r - 1)


def test_star_100():
    g = generate(star(100))
    assert g.m == 99
    assert g.degrees[0] == 99
    assert set(g.degrees[1:]) == {1}
    assert max_degree(g) == 99


def test_star_degenerate():
    g = generate(star(1))
    assert g.n == 1 and g.m == 0
    assert max_degree(g) == 0
    assert is_connected(g)


def test_erdos_renyi_complete():
    g = generate(TopologySpec(kind="erdos_renyi", n=100, p=1.0, seed=0))
    assert g.m == 4950


def test_erdos_renyi_mean_edges():
    # binomial mean 0.6 * 4950 = 2970 over 200 seeds
    counts = [
        generate(TopologySpec(kind="erdos_renyi", n=100, p=0.6, seed=s)).m
        for s in range(200)
    ]
    mean = np.mean(counts)
    sigma = np.sqrt(4950 * 0.6 * 0.4 / 200)
    assert abs(mean - 2970) <= 3 * sigma


def test_generate_deterministic():
    spec = TopologySpec(kind="erdos_renyi", n=40, p=0.1, seed=5)
    assert generate(spec).edges == generate(spec).edges
    spec = TopologySpec(kind="preferential_attachment", n=40, m_new=3, seed=5)
    assert generate(spec).edges == generate(spec).edges
    spec = TopologySpec(kind="watts_strogatz", rows=6, cols=6, rewire_p=0.1, seed=5)
    assert generate(spec).edges == generate(spec).edges


def test_preferential_attachment_structure():
    g = generate(TopologySpec(kind="preferential_attachment", n=50, m_new=3, seed=1))
    assert g.n == 50
    assert g.m == 3 + 3 * (50 - 3)  # 3-clique seed, 3 new edges per vertex
    assert is_connected(g)


def test_watts_strogatz_preserves_counts():
    base = generate(grid(6, 6))
    for seed in range(5):
        g = generate(TopologySpec(kind="watts_strogatz", rows=6, cols=6,
                                  rewire_p=0.3, seed=seed))
        assert g.n == base.n
        assert g.m == base.m


def test_disconnected_after_retries():
    spec = TopologySpec(kind="erdos_renyi", n=10, p=0.0, seed=0)
    with pytest.raises(DisconnectedAfterRetries):
        generate(spec)


def test_bad_parameters():
    with pytest.raises(BadParameters):
        generate(TopologySpec(kind="grid", rows=0, cols=3))
    with pytest.raises(BadParameters):
        generate(TopologySpec(kind="erdos_renyi", n=5, p=1.5))
    with pytest.raises(BadParameters):
        generate(TopologySpec(kind="nonsense", n=5))
    with pytest.raises(BadParameters):
        Graph(3, ((0, 0),))
    with pytest.raises(BadParameters):
        Graph(3, ((0, 1), (1, 0)))


def test_laplacian_path2():
    g = Graph(2, ((0, 1),))
    assert np.array_equal(laplacian(g), np.array([[1.0, -1.0], [-1.0, 1.0]]))


def test_laplacian_empty_graph():
    g = Graph(3, ())
    assert np.array_equal(laplacian(g), np.zeros((3, 3)))


def test_laplacian_rows_sum_to_zero():
    g = generate(grid(4, 5))
    assert np.abs(laplacian(g).sum(axis=1)).max() == 0.0


def test_laplacian_grid_connected_spectrum():
    # smallest eigenvalue 0 with multiplicity 1 (oracle: dense eigensolver)
    L = laplacian(generate(grid(3, 3)))
    oracle = np.linalg.eigvalsh(L)
    assert abs(oracle[0]) < 1e-10
    assert oracle[1] > 1e-8
    ours = spectrum(L)
    assert np.abs(ours - oracle).max() < 1e-8


def test_max_degree_single_node():
    assert max_degree(Graph(1, ())) == 0


def test_is_connected():
    assert is_connected(generate(grid(5, 5)))
    assert not is_connected(Graph(2, ()))
    assert is_connected(generate(star(4)))


def test_spectrum_identity():
    assert np.allclose(spectrum(np.eye(3)), np.ones(3))


def test_spectrum_path2_laplacian():
    eigs = spectrum(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    assert np.allclose(eigs, [0.0, 2.0], atol=1e-12)


def test_spectrum_grid_mean_dynamics():
    # -L/(d_max+1) on the 5x5 grid: all eigenvalues <= 0, exactly one zero
    g = generate(grid(5, 5))
    H = -laplacian(g) / (max_degree(g) + 1)
    eigs = spectrum(H)
    oracle = np.linalg.eigvalsh(H)
    assert np.abs(eigs - oracle).max() < 1e-9
    assert eigs.max() <= 1e-10
    assert (np.abs(eigs) < 1e-9).sum() == 1


def test_spectrum_matches_oracle_random():
    rng = np.random.default_rng(0)
    for n in (2, 5, 12, 30):
        a = rng.normal(size=(n, n))
        a = (a + a.T) / 2
        assert np.abs(spectrum(a) - np.linalg.eigvalsh(a)).max() < 1e-9


def test_spectrum_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        spectrum(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(NotSymmetric):
        spectrum(np.zeros((2, 3)))


def test_zero_eigenvalue_multiplicity_counts_components():
    one = generate(grid(2, 3))                       # 1 component
    two = Graph(5, ((0, 1), (1, 2), (3, 4)))         # 2 components
    three = Graph(6, ((0, 1), (2, 3), (4, 5)))       # 3 components
    for g, k in ((one, 1), (two, 2), (three, 3)):
        eigs = spectrum(laplacian(g))
        assert (np.abs(eigs) < 1e-9).sum() == k


def test_edgelist_round_trip(tmp_path):
    g = generate(TopologySpec(kind="erdos_renyi", n=20, p=0.3, seed=3))
    path = tmp_path / "g.edges"
    write_edgelist(g, path)
    h = read_edgelist(path)
    assert h.n == g.n and h.edges == g.edges
    first = path.read_text().splitlines()[0]
    assert first == f"{g.n} {g.m}"


def test_edgelist_rejects_truncated(tmp_path):
    path = tmp_path / "bad.edges"
    path.write_text("3 2\n0 1\n")
    with pytest.raises(BadParameters):
        read_edgelist(path)

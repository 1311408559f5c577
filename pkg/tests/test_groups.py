import numpy as np
import pytest

from symmpi.groups import (
    BlockPermutation,
    BlockPermutationGroup,
    NotEnumerableError,
    OrthogonalGroup,
    Permutation,
    SymmetricGroup,
    TrivialGroup,
    coset_representatives,
    default_probes,
    enumerate_automorphisms,
    orbit_of_index,
    sample_block_permutation,
    sample_haar_orthogonal,
    sample_uniform_permutation,
)
from symmpi.transforms import energy_permutation_test


def path_graph(n):
    A = np.zeros((n, n))
    for i in range(n - 1):
        A[i, i + 1] = A[i + 1, i] = 1.0
    return A


def cycle_graph(n):
    A = path_graph(n)
    A[0, n - 1] = A[n - 1, 0] = 1.0
    return A


# ----------------------------------------------------------------------
# Haar sampling on O(p)
# ----------------------------------------------------------------------


def test_haar_p1_is_fair_sign():
    rng = np.random.default_rng(0)
    draws = np.array([sample_haar_orthogonal(1, rng)[0, 0] for _ in range(100_000)])
    assert set(np.unique(draws)) == {-1.0, 1.0}
    freq = np.mean(draws == 1.0)
    se = np.sqrt(0.25 / draws.size)
    assert abs(freq - 0.5) <= 3 * se


@pytest.mark.parametrize("p", [2, 3, 5])
def test_haar_orthogonality(p):
    rng = np.random.default_rng(1)
    for _ in range(20):
        q = sample_haar_orthogonal(p, rng)
        assert np.abs(q.T @ q - np.eye(p)).max() <= 1e-10
        assert abs(abs(np.linalg.det(q)) - 1.0) <= 1e-8


def test_haar_left_invariance():
    # first column of R @ Q matches that of Q in law for a fixed rotation R
    rng = np.random.default_rng(2)
    p = 3
    theta = 0.7
    R = np.eye(p)
    R[:2, :2] = [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    a = np.array([(R @ sample_haar_orthogonal(p, rng))[:, 0] for _ in range(10_000)])
    b = np.array([sample_haar_orthogonal(p, rng)[:, 0] for _ in range(10_000)])
    _, pval = energy_permutation_test(a, b, rng)
    assert pval > 0.01


def test_haar_rejects_zero_dimension():
    with pytest.raises(ValueError):
        sample_haar_orthogonal(0, np.random.default_rng(0))


def test_orthogonal_group_axioms_on_sampled_triples():
    rng = np.random.default_rng(3)
    G = OrthogonalGroup(3)
    z = rng.normal(size=(4, 3))
    for _ in range(50):
        a, b, c = (G.sample(rng) for _ in range(3))
        assert np.allclose(G.compose(G.compose(a, b), c), G.compose(a, G.compose(b, c)), atol=1e-12)
        assert np.allclose(G.act(G.identity(), z), z)
        assert np.allclose(G.act(G.compose(a, b), z), G.act(a, G.act(b, z)), atol=1e-12)
        assert np.allclose(G.compose(a, G.inverse(a)), np.eye(3), atol=1e-12)
    with pytest.raises(NotEnumerableError):
        G.elements()


# ----------------------------------------------------------------------
# Permutations
# ----------------------------------------------------------------------


def test_uniform_permutation_n1_is_identity():
    rng = np.random.default_rng(4)
    for _ in range(10):
        assert sample_uniform_permutation(1, rng) == Permutation.identity(1)


def test_uniform_permutation_frequencies_n3():
    rng = np.random.default_rng(5)
    draws = 60_000
    counts = {}
    for _ in range(draws):
        p = sample_uniform_permutation(3, rng)
        counts[p] = counts.get(p, 0) + 1
    assert len(counts) == 6
    se = np.sqrt((1 / 6) * (5 / 6) / draws)
    for c in counts.values():
        assert abs(c / draws - 1 / 6) <= 3 * se


def test_permutation_compose_inverse_identity():
    rng = np.random.default_rng(6)
    for _ in range(100):
        p = sample_uniform_permutation(7, rng)
        assert p.compose(p.inverse()) == Permutation.identity(7)


def test_permutation_action_convention():
    # act moves the value at position i to position g(i)
    g = Permutation([1, 2, 0])
    z = np.array([10.0, 20.0, 30.0])
    out = g.act(z)
    for i in range(3):
        assert out[g(i)] == z[i]


def test_symmetric_group_axioms_exhaustive():
    G = SymmetricGroup(3)
    elements = list(G.elements())
    assert len(elements) == G.order() == 6
    z = np.array([1.0, 2.0, 4.0])
    for a in elements:
        for b in elements:
            assert np.array_equal(G.act(G.compose(a, b), z), G.act(a, G.act(b, z)))
        assert G.compose(a, G.inverse(a)) == G.identity()


def test_haar_invariance_for_permutation_action():
    rng = np.random.default_rng(7)
    G = SymmetricGroup(5)
    g = sample_uniform_permutation(5, rng)
    z = np.array([0.3, -1.2, 2.0, 0.05, 7.0])
    a = np.array([G.act(G.compose(g, G.sample(rng)), z) for _ in range(10_000)])
    b = np.array([G.act(G.sample(rng), z) for _ in range(10_000)])
    _, pval = energy_permutation_test(a, b, rng)
    assert pval > 0.01


# ----------------------------------------------------------------------
# Block permutations
# ----------------------------------------------------------------------


def test_block_permutation_trivial_sizes():
    rng = np.random.default_rng(8)
    for _ in range(10):
        g = sample_block_permutation(1, 1, rng)
        assert g.flat() == Permutation.identity(1)


def test_block_permutation_k2_m1_frequencies():
    rng = np.random.default_rng(9)
    G = BlockPermutationGroup(2, 1)
    assert G.order() == 2
    draws = 20_000
    swaps = sum(sample_block_permutation(2, 1, rng).outer(0) == 1 for _ in range(draws))
    se = np.sqrt(0.25 / draws)
    assert abs(swaps / draws - 0.5) <= 3 * se


def test_block_permutation_k2_m2_uniform_over_enumeration():
    rng = np.random.default_rng(10)
    G = BlockPermutationGroup(2, 2)
    elements = list(G.elements())
    assert len(elements) == G.order() == 8  # 2! * (2!)^2
    index = {g: i for i, g in enumerate(elements)}
    draws = 80_000
    counts = np.zeros(8)
    for _ in range(draws):
        counts[index[sample_block_permutation(2, 2, rng)]] += 1
    se = np.sqrt((1 / 8) * (7 / 8) / draws)
    assert np.all(np.abs(counts / draws - 1 / 8) <= 3 * se)


def test_block_permutation_group_axioms():
    G = BlockPermutationGroup(2, 2)
    elements = list(G.elements())
    z = np.arange(4.0)
    for a in elements:
        for b in elements:
            c = G.compose(a, b)
            assert c in elements
            assert np.array_equal(G.act(c, z), G.act(a, G.act(b, z)))
        assert G.compose(a, G.inverse(a)) == G.identity()


def test_block_permutation_acts_on_blocks():
    g = BlockPermutation(Permutation([1, 0]), [Permutation([0, 1]), Permutation([1, 0])])
    z = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = g.act(z)
    # block 0 -> block 1 unchanged; block 1 -> block 0 with entries swapped
    assert np.array_equal(out, np.array([[4.0, 3.0], [1.0, 2.0]]))


def test_block_group_order_formula():
    import math

    for K, M in [(1, 3), (2, 2), (3, 2)]:
        G = BlockPermutationGroup(K, M)
        assert sum(1 for _ in G.elements()) == math.factorial(K) * math.factorial(M) ** K


# ----------------------------------------------------------------------
# Graph automorphisms
# ----------------------------------------------------------------------


def test_automorphisms_edgeless_graph():
    aut = enumerate_automorphisms(np.zeros((3, 3)))
    assert aut.order() == 6


def test_automorphisms_path3():
    aut = enumerate_automorphisms(path_graph(3))
    maps = sorted(tuple(g.mapping.tolist()) for g in aut.elements())
    assert maps == [(0, 1, 2), (2, 1, 0)]


def test_automorphisms_cycle4_dihedral():
    aut = enumerate_automorphisms(cycle_graph(4))
    assert aut.order() == 8


def test_automorphisms_reject_nonsymmetric_and_cap():
    with pytest.raises(ValueError):
        enumerate_automorphisms(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        enumerate_automorphisms(np.zeros((11, 11)))


def test_automorphisms_generator_escape_hatch():
    n = 12
    A = cycle_graph(n)
    rotation = Permutation([(i + 1) % n for i in range(n)])
    reflection = Permutation([(n - i) % n for i in range(n)])
    aut = enumerate_automorphisms(A, generators=[rotation, reflection])
    assert aut.order() == 2 * n
    bad = Permutation([1, 0] + list(range(2, n)))
    with pytest.raises(ValueError):
        enumerate_automorphisms(A, generators=[bad])


def test_automorphism_closure_exhaustive():
    for A in [cycle_graph(6), path_graph(5), cycle_graph(4)]:
        aut = enumerate_automorphisms(A)
        elements = set(aut.elements())
        for g in elements:
            assert g.inverse() in elements
            for h in elements:
                assert g.compose(h) in elements


def test_weighted_graph_uses_exact_weights():
    A = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]])
    aut = enumerate_automorphisms(A)
    # the weight-2 edge pins vertices 0 and 2 as a pair; swap is allowed
    assert aut.order() == 2


# ----------------------------------------------------------------------
# Orbits, stabilizers, cosets
# ----------------------------------------------------------------------


def test_orbit_full_symmetric_group():
    orbit, stab = orbit_of_index(SymmetricGroup(5), 4)
    assert np.array_equal(orbit, np.arange(5))
    assert stab == 24


def test_orbit_path3_center():
    aut = enumerate_automorphisms(path_graph(3))
    orbit, stab = orbit_of_index(aut, 1)
    assert np.array_equal(orbit, np.array([1]))
    assert stab == 2


def test_orbit_cycle4_orbit_stabilizer():
    aut = enumerate_automorphisms(cycle_graph(4))
    for i in range(4):
        orbit, stab = orbit_of_index(aut, i)
        assert orbit.size == 4 and stab == 2
        assert orbit.size * stab == aut.order()


def test_orbit_stabilizer_every_index():
    for group in [enumerate_automorphisms(path_graph(4)), SymmetricGroup(4)]:
        n = 4
        for i in range(n):
            orbit, stab = orbit_of_index(group, i)
            assert orbit.size * stab == group.order()


def last_coordinate(z):
    return np.asarray(z)[..., -1]


def test_coset_representatives_s4_last_coordinate():
    rng = np.random.default_rng(11)
    probes = default_probes(np.array([0.3, 1.7, -2.2, 0.9]), rng)
    dec = coset_representatives(SymmetricGroup(4), last_coordinate, probes)
    assert len(dec.representatives) == 4
    assert dec.subgroup_size == 6
    assert len(dec.representatives) * dec.subgroup_size == 24


def test_coset_representatives_trivial_group():
    dec = coset_representatives(TrivialGroup(), last_coordinate, [np.array([1.0, 2.0])])
    assert len(dec.representatives) == 1
    assert dec.subgroup_size == 1


def test_coset_representatives_block_group():
    rng = np.random.default_rng(12)
    probes = default_probes(np.array([0.5, -1.0, 2.0, 3.3]), rng)
    dec = coset_representatives(BlockPermutationGroup(2, 2), last_coordinate, probes)
    assert len(dec.representatives) == 4
    assert dec.subgroup_size == 2


def test_default_probes_shape():
    rng = np.random.default_rng(13)
    probes = default_probes(np.zeros(5), rng, n_extra=8)
    assert len(probes) == 9
    assert all(p.shape == (5,) for p in probes)

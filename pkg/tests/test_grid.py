import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swingcorr.grid import (Bus, CaseError, GridCase, Line, NetworkError, build_laplacian,
                            build_model, kron_reduce, line_flow_map, load_case, parse_case)


def three_bus_chain(gens=(1, 3)):
    buses = tuple(Bus(i, i in gens, 1.0 if i in gens else 0.0, 0.0) for i in (1, 2, 3))
    return GridCase(buses, (Line(1, 2, 1.0), Line(2, 3, 1.0)))


def test_bundled_wscc9_counts():
    case = load_case("wscc9.case")
    assert len(case.buses) == 9
    assert case.generator_ids == [1, 2, 3]
    assert len(case.lines) == 9
    assert case.load_ids == [5, 6, 8]
    assert case.base_hz == 60


def test_unknown_bus_rejected():
    text = "[buses]\n1 1 1 0\n2 1 1 0\n[lines]\n1 7 1.0\n"
    with pytest.raises(CaseError, match="unknown bus 7"):
        parse_case(text)


def test_single_generator_rejected():
    text = "[buses]\n1 1 1 0\n2 0 0 0\n[lines]\n1 2 1.0\n"
    with pytest.raises(CaseError, match="at least 2 generator"):
        parse_case(text)


@pytest.mark.parametrize("text, msg", [
    ("[buses]\n1 1 x 0\n", "inertia"),
    ("[buses]\n1 1 1\n", "bus record"),
    ("[foo]\n", "unknown section"),
    ("1 1 1 0\n", "outside of a section"),
    ("[buses]\n1 1 1 0\n2 1 1 0\n[lines]\n1 2 -1\n", "susceptance"),
    ("[buses]\n1 1 0 0\n2 1 1 0\n[lines]\n1 2 1\n", "inertia must be > 0"),
])
def test_parse_errors_name_the_problem(text, msg):
    with pytest.raises(CaseError, match=msg):
        parse_case(text)


def test_parse_error_has_line_number():
    with pytest.raises(CaseError, match=":3:"):
        parse_case("[buses]\n1 1 1 0\n2 1 oops 0\n", "x.case")


def test_laplacian_two_bus():
    case = GridCase((Bus(1, True, 1, 0), Bus(2, True, 1, 0)), (Line(1, 2, 2.0),))
    np.testing.assert_array_equal(build_laplacian(case), [[2, -2], [-2, 2]])


def test_laplacian_three_bus_chain():
    L = build_laplacian(three_bus_chain())
    np.testing.assert_array_equal(L, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])


def test_laplacian_wscc9_row_sums():
    case = load_case("wscc9.case")
    L = build_laplacian(case)
    assert L.shape == (9, 9)
    assert np.abs(L.sum(axis=1)).max() <= 1e-12
    # direct construction: diagonal equals sum of incident susceptances
    b = {(ln.from_bus, ln.to_bus): ln.susceptance for ln in case.lines}
    assert L[0, 0] == pytest.approx(b[(1, 4)])
    assert L[3, 3] == pytest.approx(b[(1, 4)] + b[(4, 5)] + b[(9, 4)])


def test_disconnected_network():
    case = GridCase(tuple(Bus(i, True, 1, 0) for i in (1, 2, 3, 4)),
                    (Line(1, 2, 1.0), Line(3, 4, 1.0)))
    with pytest.raises(NetworkError, match="disconnected"):
        build_laplacian(case)


def test_kron_series_combination():
    L = build_laplacian(three_bus_chain())
    K, A = kron_reduce(L, [0, 2])
    np.testing.assert_allclose(K, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-15)
    np.testing.assert_allclose(A, [[0.5, 0.5]], atol=1e-15)


def test_kron_all_generators_is_identity_operation():
    L = build_laplacian(three_bus_chain())
    K, A = kron_reduce(L, [0, 1, 2])
    np.testing.assert_array_equal(K, L)
    assert A.shape == (0, 3)


def test_kron_singular_interior_names_buses():
    L = np.zeros((4, 4))
    L[:2, :2] = [[1, -1], [-1, 1]]
    L[2:, 2:] = [[1, -1], [-1, 1]]
    with pytest.raises(NetworkError, match=r"\[2, 3\]"):
        kron_reduce(L, [0, 1])


def test_kron_wscc9_matches_dc_power_flow():
    case = load_case("wscc9.case")
    L = build_laplacian(case)
    K, A = kron_reduce(L, [0, 1, 2])
    assert K.shape == (3, 3)
    assert np.abs(K.sum(axis=1)).max() <= 1e-10
    p = np.array([1.0, -0.3, -0.7])
    full = np.zeros(9)
    full[:3] = p
    theta = np.linalg.pinv(L, rcond=1e-10) @ full
    delta = np.linalg.pinv(K, rcond=1e-10) @ p
    # both are defined up to a common shift
    np.testing.assert_allclose(theta[:3] - theta[0], delta - delta[0], atol=1e-8)
    np.testing.assert_allclose(theta[3:] - theta[0], A @ delta - delta[0], atol=1e-8)


def test_flow_map_two_generators():
    case = GridCase((Bus(1, True, 1, 0), Bus(2, True, 1, 0)), (Line(1, 2, 2.0),))
    F = line_flow_map(case, np.zeros((0, 2)))
    np.testing.assert_array_equal(F, [[2, -2]])


def test_flow_map_substitutes_interior_row():
    case = three_bus_chain()
    _, A = kron_reduce(build_laplacian(case), [0, 2])
    F = line_flow_map(case, A)
    np.testing.assert_allclose(F[0], [0.5, -0.5], atol=1e-15)


def test_flow_between_equal_angle_buses_is_zero():
    # symmetric star: bus 3 between 1 and 2; lines 1-3 and 2-3 carry mirrored flows,
    # and a uniform shift of all generator angles produces no flow at all
    case = three_bus_chain()
    model = build_model(case)
    np.testing.assert_allclose(model.F @ np.ones(2), 0, atol=1e-14)


def test_model_units_and_invariants(wscc9):
    assert np.allclose(np.diag(wscc9.M), np.array([47.28, 12.8, 6.02]) / (120 * np.pi))
    assert wscc9.damping_ratio() == pytest.approx(0.2)
    K = wscc9.K
    assert np.abs(K - K.T).max() <= 1e-10
    assert np.abs(K.sum(axis=1)).max() <= 1e-10
    w = np.linalg.eigvalsh(K)
    assert np.sum(np.abs(w) < 1e-8) == 1
    np.testing.assert_allclose(wscc9.A.sum(axis=1), 1, atol=1e-10)


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(3, 9))
    edges = [(i, draw(st.integers(0, i - 1))) for i in range(1, n)]  # spanning tree
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=6))
    edges += [(a, b) for a, b in extra if a != b]
    weights = draw(st.lists(st.floats(0.1, 50), min_size=len(edges), max_size=len(edges)))
    ngen = draw(st.integers(2, n))
    gens = sorted(draw(st.permutations(range(n)))[:ngen])
    return n, edges, weights, gens


@settings(max_examples=60, deadline=None)
@given(connected_graphs())
def test_kron_properties(g):
    n, edges, weights, gens = g
    buses = tuple(Bus(i + 1, i in gens, 1.0 if i in gens else 0.0, 0.0) for i in range(n))
    lines = tuple(Line(a + 1, b + 1, w) for (a, b), w in zip(edges, weights))
    L = build_laplacian(GridCase(buses, lines))
    K, A = kron_reduce(L, gens)
    scale = max(1.0, np.abs(L).max())
    assert np.abs(K - K.T).max() <= 1e-10 * scale
    assert np.linalg.eigvalsh(K).min() >= -1e-10 * scale
    assert np.abs(K.sum(axis=1)).max() <= 1e-10 * scale
    if A.size:
        np.testing.assert_allclose(A.sum(axis=1), 1, atol=1e-10)
    # DC power-flow consistency for zero-sum injections at generators
    rng = np.random.default_rng(len(edges))
    p = rng.standard_normal(len(gens))
    p -= p.mean()
    full = np.zeros(n)
    full[gens] = p
    theta = np.linalg.pinv(L, rcond=1e-10) @ full
    delta = np.linalg.pinv(K, rcond=1e-10) @ p
    np.testing.assert_allclose(theta[gens] - theta[gens].mean(), delta - delta.mean(),
                               atol=1e-8 * max(1, np.abs(delta).max()))

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dnl.domain import (DiscreteDomain, build_grid2d, build_path_grid, inner, integrate, load_domain,
                        negative_part, norm, positive_part, save_domain)
from dnl.errors import DimensionError

finite = st.floats(-1e6, 1e6, allow_nan=False)
vectors = arrays(float, st.integers(1, 12), elements=finite)


def plain(mu):
    return DiscreteDomain(mu, [])


class TestConstruction:
    def test_rejects_nonpositive_mass(self):
        with pytest.raises(ValueError):
            DiscreteDomain([1.0, 0.0], [])

    def test_rejects_self_loop(self):
        with pytest.raises(ValueError):
            DiscreteDomain([1.0, 1.0], [(0, 0, 1.0)])

    def test_rejects_duplicate_edge(self):
        with pytest.raises(ValueError):
            DiscreteDomain([1.0, 1.0], [(0, 1, 1.0), (1, 0, 2.0)])

    def test_rejects_bad_weight(self):
        with pytest.raises(ValueError):
            DiscreteDomain([1.0, 1.0], [(0, 1, -1.0)])

    def test_needs_free_node(self):
        with pytest.raises(ValueError):
            DiscreteDomain([1.0], [], [True])

    def test_arrays_read_only(self):
        dom = build_path_grid(3, 0.25)
        with pytest.raises(ValueError):
            dom.measure[0] = 2.0

    def test_json_round_trip(self, tmp_path):
        dom = build_path_grid(3, 0.25)
        path = tmp_path / "g.json"
        save_domain(dom, path)
        data = json.loads(path.read_text())
        assert set(data) >= {"nodes", "edges", "boundary"}
        back = load_domain(path)
        assert np.array_equal(back.measure, dom.measure)
        assert back.edges == dom.edges
        assert np.array_equal(back.boundary, dom.boundary)


class TestGrids:
    @pytest.mark.parametrize("n, h, nodes, edges", [(1, 1.0, 3, 2), (3, 0.25, 5, 4), (64, 1 / 65, 66, 65)])
    def test_counts(self, n, h, nodes, edges):
        dom = build_path_grid(n, h)
        assert dom.node_count == nodes
        assert dom.edge_count == edges
        assert dom.boundary.sum() == 2
        assert np.allclose(dom.measure[dom.free], h)

    def test_smallest_grid_middle_free(self):
        dom = build_path_grid(1, 1.0)
        assert dom.free.tolist() == [1]

    @pytest.mark.parametrize("n, h", [(0, 1.0), (3, 0.0), (3, -1.0)])
    def test_rejects_bad_args(self, n, h):
        with pytest.raises(ValueError):
            build_path_grid(n, h)

    def test_grid2d(self):
        dom = build_grid2d(3, 2, 0.5)
        assert dom.node_count == 20
        assert len(dom.free) == 6
        assert np.allclose(dom.measure, 0.25)


class TestIntegrals:
    @pytest.mark.parametrize("mu, u, expected", [((1, 1), (0, 0), 0.0), ((2, 3), (1, 1), 5.0),
                                                 ((1, 2, 3), (1, -1, 2), 5.0)])
    def test_integrate(self, mu, u, expected):
        assert integrate(plain(mu), u) == expected

    def test_norms_zero(self):
        dom = plain([1.0, 2.0])
        for which in ("L1", "L2", "Linf"):
            assert norm(dom, [0.0, 0.0], which) == 0.0

    def test_norms_hand(self):
        dom = plain([1.0, 1.0])
        assert norm(dom, [3, -4], "L1") == 7
        assert norm(dom, [3, -4], "L2") == 5
        assert norm(dom, [3, -4], "Linf") == 4
        dom = plain([2.0, 1.0])
        assert norm(dom, [1, 0], "L1") == 2
        assert norm(dom, [1, 0], "L2") == pytest.approx(math.sqrt(2), rel=1e-15)
        assert norm(dom, [1, 0], "Linf") == 1

    def test_inner(self):
        assert inner(plain([1.0, 2.0]), [1, 2], [3, 4]) == 19

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            integrate(plain([1.0, 1.0]), [1.0])
        with pytest.raises(DimensionError):
            norm(plain([1.0, 1.0]), [1.0, 2.0, 3.0])

    def test_unknown_norm(self):
        with pytest.raises(ValueError):
            norm(plain([1.0]), [1.0], "L3")


class TestLattice:
    def test_examples(self):
        assert positive_part([1, -2, 0]).tolist() == [1, 0, 0]
        assert negative_part([1, -2, 0]).tolist() == [0, -2, 0]
        assert positive_part([-5]).tolist() == [0]
        assert negative_part([-5]).tolist() == [-5]
        u = np.array([0.5, 2.0])
        assert np.array_equal(positive_part(u), u)
        assert np.array_equal(negative_part(u), np.zeros(2))

    @given(vectors)
    def test_decomposition_exact(self, u):
        assert np.array_equal(positive_part(u) + negative_part(u), u)

    @given(vectors)
    def test_l1_splits(self, u):
        dom = plain(np.ones(u.size))
        total = norm(dom, positive_part(u), "L1") + norm(dom, negative_part(u), "L1")
        assert total == pytest.approx(norm(dom, u, "L1"), rel=1e-15, abs=0)

    @given(vectors)
    def test_holder(self, u):
        dom = plain(np.linspace(0.5, 2.0, u.size))
        l2 = norm(dom, u, "L2")
        assert l2 * l2 <= norm(dom, u, "L1") * norm(dom, u, "Linf") * (1 + 1e-12) + 1e-300

    @given(vectors, vectors)
    def test_idempotent_and_monotone(self, u, d):
        n = min(u.size, d.size)
        u, v = u[:n], u[:n] + np.abs(d[:n])
        assert np.array_equal(positive_part(positive_part(u)), positive_part(u))
        assert np.array_equal(negative_part(negative_part(u)), negative_part(u))
        assert np.all(positive_part(u) <= positive_part(v))

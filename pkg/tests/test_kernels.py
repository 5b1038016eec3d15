import importlib
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from geocad import kernels
from oracle import brute_chamfer, brute_self_intersects, closed_segments_meet


def _points(rng, n, span):
    return [(rng.randint(0, span), rng.randint(0, span)) for _ in range(n)]


def test_backend_reported():
    assert kernels.BACKEND in ("python", "cython")


def test_pure_python_switch(monkeypatch):
    monkeypatch.setenv("GEOCAD_PURE_PYTHON", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "python"
    finally:
        monkeypatch.delenv("GEOCAD_PURE_PYTHON")
        importlib.reload(kernels)


@pytest.mark.parametrize("pts, expected", [
    ([(0, 0), (4, 0), (4, 4), (0, 4)], False),
    ([(0, 0), (4, 4), (4, 0), (0, 4)], True),          # bow tie
    ([(0, 0), (4, 0), (2, 0)], True),                   # folds back
    ([(0, 0), (4, 0), (4, 0), (0, 4)], True),           # zero-length edge
    ([(0, 0), (4, 0), (2, 2), (4, 4), (0, 4), (2, 2)], True),  # touching vertex
    ([(0, 0), (2, 0), (4, 0), (4, 4)], False),          # straight vertex is fine
    ([(0, 0), (1, 1)], True),
])
def test_self_intersection_examples(kernel_impl, pts, expected):
    xs, ys = zip(*pts)
    assert bool(kernel_impl.polyline_self_intersects(list(xs), list(ys))) is expected
    assert brute_self_intersects(pts) is expected


@given(st.integers(0, 10**9), st.integers(3, 12), st.sampled_from([3, 6, 20, 255]))
def test_self_intersection_matches_brute_force(kernel_impl, seed, n, span):
    pts = _points(random.Random(seed), n, span)
    xs, ys = zip(*pts)
    assert bool(kernel_impl.polyline_self_intersects(list(xs), list(ys))) == brute_self_intersects(pts)


@given(st.lists(st.integers(-4, 4), min_size=8, max_size=8))
def test_segments_intersect_matches_oracle(kernel_impl, c):
    a, b, p, q = (c[0], c[1]), (c[2], c[3]), (c[4], c[5]), (c[6], c[7])
    assert bool(kernel_impl.segments_intersect(*c)) == closed_segments_meet(a, b, p, q)
    assert bool(kernel_impl.segments_intersect(*c)) == bool(kernel_impl.segments_intersect(*p, *q, *a, *b))


@given(st.integers(0, 10**9), st.integers(1, 300), st.integers(1, 300))
def test_nn_sqdist_matches_brute_force(kernel_impl, seed, n, m):
    rng = np.random.default_rng(seed)
    a, b = rng.random((n, 3)), rng.random((m, 3))
    expected = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2).min(axis=1)
    assert np.allclose(kernel_impl.nn_sqdist(a, b), expected, rtol=0, atol=1e-12)


def test_nn_sqdist_chunking(kernel_impl):
    rng = np.random.default_rng(3)
    a, b = rng.random((2500, 3)), rng.random((1700, 3))
    got = 0.5 * (kernel_impl.nn_sqdist(a, b).mean() + kernel_impl.nn_sqdist(b, a).mean())
    assert abs(got - brute_chamfer(a, b)) <= 1e-12


def test_backends_agree():
    py = importlib.import_module("geocad._kernels_py")
    cy = pytest.importorskip("geocad._kernels")
    rng = random.Random(11)
    for _ in range(2000):
        pts = _points(rng, rng.randint(3, 12), 8)
        xs, ys = zip(*pts)
        assert bool(py.polyline_self_intersects(xs, ys)) == bool(cy.polyline_self_intersects(xs, ys))

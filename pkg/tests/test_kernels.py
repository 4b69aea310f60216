import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchgraph import kernels
from patchgraph._pykernels import auroc_binary as py_auroc

needs_ext = pytest.mark.skipif("cython" not in kernels.BACKENDS, reason="compiled extension not built")


def _backends():
    return [kernels.BACKENDS[k] for k in sorted(kernels.BACKENDS)]


def test_backend_selected():
    assert kernels.BACKEND in kernels.BACKENDS


@needs_ext
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), n=st.integers(0, 200))
def test_xoshiro_backends_agree(seed, n):
    from patchgraph.numkit.rng import Rng

    start = Rng(seed).getstate()
    outs, states = [], []
    for impl in _backends():
        state = np.array(start, dtype=np.uint64)
        outs.append(impl.xoshiro_fill(state, n))
        states.append(state)
    np.testing.assert_array_equal(outs[0], outs[1])
    np.testing.assert_array_equal(states[0], states[1])


segments = st.integers(1, 6).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.lists(st.integers(0, n - 1), min_size=1, max_size=30),
        st.integers(0, 2**32 - 1),
    )
)


@needs_ext
@settings(max_examples=50, deadline=None)
@given(segments)
def test_segment_kernels_agree(case):
    n, index, seed = case
    rng = np.random.default_rng(seed)
    index = np.array(index, dtype=np.int64)
    vals = rng.normal(size=len(index))
    mat = rng.normal(size=(len(index), 3))
    grad = rng.normal(size=len(index))
    py, cy = kernels.BACKENDS["python"], kernels.BACKENDS["cython"]
    np.testing.assert_allclose(py.segment_sum(mat, index, n), cy.segment_sum(mat, index, n), rtol=0, atol=1e-12)
    a_py = py.segment_softmax(vals, index, n)
    a_cy = cy.segment_softmax(vals, index, n)
    np.testing.assert_allclose(a_py, a_cy, rtol=0, atol=1e-14)
    np.testing.assert_allclose(
        py.segment_softmax_grad(a_py, grad, index, n), cy.segment_softmax_grad(a_py, grad, index, n),
        rtol=0, atol=1e-14,
    )


@needs_ext
@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=0, max_size=60))
def test_confusion_backends_agree(pairs):
    t = np.array([p[0] for p in pairs], dtype=np.int64)
    p = np.array([p[1] for p in pairs], dtype=np.int64)
    outs = [impl.confusion_matrix(t, p, 5) for impl in _backends()]
    np.testing.assert_array_equal(outs[0], outs[1])
    assert outs[0].sum() == len(pairs)


@needs_ext
@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=40))
def test_auroc_backends_agree(rows):
    scores = np.array([r[0] for r in rows], dtype=np.float64) / 5.0  # coarse grid forces ties
    pos = np.array([r[1] for r in rows])
    if pos.all() or not pos.any():
        return
    outs = [impl.auroc_binary(scores, pos) for impl in _backends()]
    assert outs[0] == outs[1]


def test_softmax_segments_sum_to_one():
    index = np.array([0, 0, 2, 2, 2])
    alpha = kernels.segment_softmax(np.array([1.0, 2.0, -1.0, 0.0, 1000.0]), index, 3)
    np.testing.assert_allclose([alpha[:2].sum(), alpha[2:].sum()], 1.0, atol=1e-15)


def test_auroc_all_ties_half():
    assert py_auroc(np.ones(6), np.array([1, 0, 1, 0, 0, 1], dtype=bool)) == 0.5

import json
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from oracles import m1_oracle
from singmfg.cadlag import (
    CONSTANT,
    IDENTITY_TOL,
    LINEAR,
    CadlagPath,
    compactness_diagnostic,
    completed_graph,
    from_samples,
    graph_samples,
    lp_distance,
    m1_distance,
    m1_distance_matrix,
    m1_mesh,
    modified_oscillation,
    oscillation,
    path_from_json,
    path_to_json,
    ramp,
    segment_distance,
    staircase,
    step,
    strong_m1_oscillation,
    uniform_distance,
)

PROPS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def scalar_paths(draw, max_jumps=6, monotone=False):
    k = draw(st.integers(1, max_jumps))
    times = sorted(set(draw(st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k))))
    lo = 0.0 if monotone else -2.0
    incs = draw(st.lists(st.floats(lo, 2.0), min_size=len(times), max_size=len(times)))
    if draw(st.booleans()) and len(times) > 1:
        vals = np.cumsum(incs)
        return CadlagPath(times, vals, 1.0, LINEAR)
    return staircase(times, incs)


# -- evaluation and graph ----------------------------------------------------------


def test_eval_and_left_limits():
    x = step(0.5)
    assert x.eval(0.25)[0] == 0.0
    assert x.eval(0.5)[0] == 1.0
    assert x.eval(2.0)[0] == 1.0
    assert x.left_limit(0.5)[0] == 0.0
    c = CadlagPath([0.0], [3.0], 1.0, LINEAR)
    assert c.left_limit(0.7)[0] == 3.0
    assert step(0.0, 2.0).left_limit(0.0)[0] == 0.0


def test_zero_breakpoints_is_zero_path():
    z = CadlagPath([], [], 1.0)
    assert z.sup_norm() == 0.0
    assert z.eval(0.3)[0] == 0.0


def test_completed_graph_vertices():
    g = completed_graph(CadlagPath([], [], 1.0))
    assert [(float(z[0]), t) for z, t in g.vertices] == [(0.0, 0.0), (0.0, 1.0)]
    g = completed_graph(step(0.5))
    assert [(float(z[0]), t) for z, t in g.vertices] == [(0.0, 0.0), (0.0, 0.5), (1.0, 0.5), (1.0, 1.0)]
    g = completed_graph(staircase([0.3, 0.6], [1.0, 1.0]))
    assert len(g) == 6


def test_segment_distance():
    assert segment_distance(np.array([1.0]), np.array([0.0]), np.array([0.0])) == 1.0
    assert segment_distance(np.array([0.5]), np.array([0.0]), np.array([1.0])) == 0.0
    assert segment_distance(np.array([1.0, 1.0]), np.array([0.0, 0.0]), np.array([2.0, 0.0])) == 1.0


# -- M1 distance -------------------------------------------------------------------


def test_m1_basic_values():
    x = step(0.5)
    assert m1_distance(x, x) <= IDENTITY_TOL
    zero, one = CadlagPath([], [], 1.0), CadlagPath([0.0], [1.0], 1.0, LINEAR)
    assert m1_distance(zero, one) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("k", [4, 16, 64])
def test_m1_ramp_against_oracles(k):
    x, y = step(0.5), ramp(0.5, 0.5 + 1.0 / k)
    d = m1_distance(x, y, 128)
    ref, h = m1_oracle(x, y, 512)
    # frozen value: closed form 1/(k+1) of the max-norm matching
    assert d == pytest.approx(1.0 / (k + 1), abs=m1_mesh(x, y, 128))
    assert abs(d - ref) <= m1_mesh(x, y, 128) + h


def test_m1_rejects_small_grid_and_vectors():
    with pytest.raises(ValueError):
        m1_distance(step(0.5), step(0.5), 8)
    v = CadlagPath([0.0], [[1.0, 2.0]], 1.0)
    with pytest.raises(ValueError):
        graph_samples(v, 64)


@PROPS
@given(scalar_paths(), scalar_paths(), scalar_paths())
def test_m1_metric_axioms(x, y, z):
    N = 64
    dxy, dyx = m1_distance(x, y, N), m1_distance(y, x, N)
    assert dxy >= 0.0
    assert dxy == dyx
    assert m1_distance(x, x, N) <= IDENTITY_TOL
    dxz, dzy = m1_distance(x, z, N), m1_distance(z, y, N)
    tol = 2 * max(m1_mesh(x, y, N), m1_mesh(x, z, N), m1_mesh(z, y, N))
    assert dxy <= dxz + dzy + tol


@PROPS
@given(scalar_paths(), scalar_paths())
def test_m1_refinement_nonincreasing(x, y):
    vals = [m1_distance(x, y, N) for N in (32, 64, 128, 256)]
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


@PROPS
@given(scalar_paths(), scalar_paths())
def test_domination(x, y):
    assert lp_distance(x, y, 1.0) <= x.T * uniform_distance(x, y) + 1e-12
    assert m1_distance(x, y, 64) <= uniform_distance(x, y) + m1_mesh(x, y, 64)


def test_distance_matrix_matches_pairwise():
    paths = [step(0.5), ramp(0.5, 0.75), staircase([0.2, 0.4], [0.5, 0.5])]
    D = m1_distance_matrix(paths, 64)
    assert np.array_equal(D, D.T)
    assert D[0, 1] == m1_distance(paths[0], paths[1], 64)


# -- oscillations ----------------------------------------------------------------------


def test_oscillation_examples():
    c = CadlagPath([0.0], [2.0], 1.0)
    assert oscillation(c, 0.4, 0.2) == 0.0
    x = step(0.5)
    assert oscillation(x, 0.5, 0.1) == 1.0
    assert oscillation(x, 0.1, 0.1) == 0.0


def test_strong_oscillation_examples():
    zig = staircase([0.4, 0.45], [1.0, -1.0])
    assert strong_m1_oscillation(zig, 0.1) == 1.0
    stairs = staircase([0.1, 0.3, 0.5, 0.7, 0.9], [1, 2, 0.5, 1, 3])
    for d in (0.5, 0.1, 0.01, 0.001):
        assert strong_m1_oscillation(stairs, d) == 0.0


def test_modified_oscillation_examples():
    delta = 0.1
    x = CadlagPath([0.0, delta], [1.0, 0.0], 1.0)
    assert strong_m1_oscillation(x, delta) == 0.0
    assert modified_oscillation(x, delta) == 1.0
    assert modified_oscillation(CadlagPath([], [], 1.0), delta) == 0.0


@PROPS
@given(scalar_paths(monotone=True), st.sampled_from([0.5, 0.1, 0.02, 0.003]))
def test_monotone_paths_have_zero_oscillation(x, delta):
    assert strong_m1_oscillation(x, delta) == 0.0
    assert modified_oscillation(x, delta) == 0.0


def test_compactness_monotone_family():
    rng = np.random.default_rng(3)
    fam = [staircase(np.sort(rng.uniform(0, 1, 4)), rng.uniform(0, 0.25, 4)) for _ in range(10)]
    rep = compactness_diagnostic(fam)
    assert rep.oscillations == (0.0,) * len(rep.deltas)
    assert rep.verdict == "compactness-consistent"


def _sine(k, n=2000):
    t = np.linspace(0.0, 1.0, n + 1)
    return from_samples(t, np.sin(k * t))


def test_compactness_sine_families():
    ok = compactness_diagnostic([_sine(k) for k in (1, 2, 3)], tol=0.05)
    assert all(b <= a for a, b in zip(ok.oscillations, ok.oscillations[1:]))
    assert ok.consistent
    bad = compactness_diagnostic([_sine(k) for k in (1, 10, 100, 1000)], tol=0.05)
    assert not bad.consistent
    assert bad.oscillations[-1] > 5 * bad.tol


# -- uniform and L^p --------------------------------------------------------------------


def test_uniform_and_lp_examples():
    x = step(0.5)
    assert uniform_distance(x, x) == 0.0 and lp_distance(x, x) == 0.0
    zero, one = CadlagPath([], [], 1.0), CadlagPath([0.0], [1.0], 1.0)
    assert uniform_distance(zero, one) == 1.0 and lp_distance(zero, one, 1.0) == 1.0
    y = ramp(0.5, 0.75)
    assert uniform_distance(x, y) == 1.0
    assert lp_distance(x, y, 1.0) == pytest.approx(0.125, abs=1e-15)


# -- serialisation -------------------------------------------------------------------------


@PROPS
@given(scalar_paths())
def test_json_round_trip(x):
    obj = json.loads(json.dumps(path_to_json(x)))
    assert set(obj) >= {"T", "d", "kind", "breakpoints", "values"}
    assert path_from_json(obj) == x


def test_cumulative_integral_of_step():
    x = step(0.5, 2.0)
    got = x.cumulative_integral([0.25, 0.75, 1.0, 1.5])
    assert np.allclose(got.ravel(), [0.0, 0.5, 1.0, 2.0])
    assert x.kind == CONSTANT and ramp(0, 1).kind == LINEAR
    assert math.isfinite(x.sup_norm())

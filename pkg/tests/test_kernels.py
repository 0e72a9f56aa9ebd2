"""The compiled and interpreted kernel paths must agree."""
import numpy as np
import pytest

from hemsdr import kernels, milp
from hemsdr._accel import NUMBA_ENABLED
from hemsdr.core import SystemParams

from _util import random_day

P = SystemParams()


def test_simplex_exposes_python_source():
    assert callable(kernels.simplex_iterate.py_func)


@pytest.mark.skipif(not NUMBA_ENABLED, reason="numba disabled")
def test_simplex_compiled_matches_interpreted(monkeypatch):
    days = [random_day(np.random.default_rng(s), T=12) for s in range(3)]
    compiled = [milp.solve_day(d, P) for d in days]
    monkeypatch.setattr(kernels, "simplex_iterate", kernels.simplex_iterate.py_func)
    interpreted = [milp.solve_day(d, P) for d in days]
    for a, b in zip(compiled, interpreted):
        assert a.objective == pytest.approx(b.objective, abs=1e-12)
        assert np.allclose(a.as_array(), b.as_array(), atol=1e-12)


def test_gru_forward_backward_shapes():
    rng = np.random.default_rng(0)
    T, B, I, H = 5, 3, 2, 4
    xs = rng.normal(size=(T, B, I))
    h0 = np.zeros((B, H))
    wx = rng.normal(size=(I, 3 * H)) * 0.3
    wh = rng.normal(size=(H, 3 * H)) * 0.3
    b = np.zeros(3 * H)
    out = kernels.gru_layer_forward(xs, h0, wx, wh, b)
    hs = out[0]
    assert hs.shape[-2:] == (B, H)
    assert np.all(np.abs(hs) <= 1.0)

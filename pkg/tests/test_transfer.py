import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import analytic_gradient, central_difference, relative_error
from edgegan.transfer import attention_map, transfer_features, transfer_image


def scalar_gate(e, x):
    return x / (1.0 + math.exp(-e)) + x


def test_zero_edge_gives_one_and_a_half():
    x = torch.randn(4, 5, 6, dtype=torch.float64)
    assert torch.equal(transfer_features(torch.zeros_like(x), x), 1.5 * x)
    assert torch.equal(transfer_image(torch.zeros_like(x), x), 1.5 * x)


def test_saturated_gates():
    x = torch.randn(2, 3, 3, dtype=torch.float64)
    assert torch.allclose(transfer_features(torch.full_like(x, 40.0), x), 2 * x, atol=1e-12, rtol=0)
    assert torch.allclose(transfer_image(torch.full_like(x, -40.0), x), x, atol=1e-12, rtol=0)


@pytest.mark.parametrize("op", [transfer_features, transfer_image])
def test_matches_scalar_oracle(op):
    gen = torch.Generator().manual_seed(0)
    e = torch.randn(2, 3, 3, generator=gen, dtype=torch.float64) * 3
    x = torch.randn(2, 3, 3, generator=gen, dtype=torch.float64)
    out = op(e, x)
    for idx in np.ndindex(*x.shape):
        assert abs(float(out[idx]) - scalar_gate(float(e[idx]), float(x[idx]))) <= 1e-12


@pytest.mark.parametrize("op", [transfer_features, transfer_image])
def test_shape_mismatch_rejected(op):
    with pytest.raises(ValueError):
        op(torch.zeros(2, 3, 3), torch.zeros(2, 3, 4))


def test_attention_in_open_interval():
    a = attention_map(torch.linspace(-10, 10, 101, dtype=torch.float64))
    assert torch.all((a > 0) & (a < 1))


finite = st.floats(-30, 30, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, (2, 2, 2), elements=finite), arrays(np.float64, (2, 2, 2), elements=finite))
def test_output_between_one_and_two_times_operand(e, x):
    out = transfer_features(torch.from_numpy(e), torch.from_numpy(x)).numpy()
    lo, hi = np.minimum(x, 2 * x), np.maximum(x, 2 * x)
    assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(0.01, 3),
       st.one_of(st.just(0.0), st.floats(1e-6, 5), st.floats(-5, -1e-6)))
def test_monotone_in_gate(e, delta, x):
    lo = float(transfer_features(torch.tensor([e], dtype=torch.float64), torch.tensor([x], dtype=torch.float64)))
    hi = float(transfer_features(torch.tensor([e + delta], dtype=torch.float64), torch.tensor([x], dtype=torch.float64)))
    if x > 0:
        assert hi > lo
    elif x < 0:
        assert hi < lo
    else:
        assert hi == lo


@pytest.mark.parametrize("op", [transfer_features, transfer_image])
@pytest.mark.parametrize("wrt", ["edge", "operand"])
def test_gradients_match_finite_differences(op, wrt):
    gen = torch.Generator().manual_seed(5)
    e = torch.randn(2, 2, 2, generator=gen, dtype=torch.float64)
    x = torch.randn(2, 2, 2, generator=gen, dtype=torch.float64)
    probe = torch.randn(2, 2, 2, generator=gen, dtype=torch.float64)
    if wrt == "edge":
        f, at = (lambda t: (op(t, x) * probe).sum()), e
    else:
        f, at = (lambda t: (op(e, t) * probe).sum()), x
    assert relative_error(analytic_gradient(f, at), central_difference(f, at)) < 1e-6

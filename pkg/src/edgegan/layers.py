"""Spectrally normalised convolutions, SPADE residual blocks and pooling."""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

_EPS = 1e-12


def _l2normalize(v):
    return F.normalize(v, dim=0, eps=_EPS)


def _power_iterate(w_mat, u, v, iterations):
    for _ in range(iterations):
        v = _l2normalize(w_mat.t() @ u)
        u = _l2normalize(w_mat @ v)
    return u, v


@dataclass
class SpectralState:
    """Power-iteration state for one weight matrix.

    ``u`` is kept at unit norm. ``sigma`` and ``degenerate`` describe the
    last call to :func:`spectral_normalize`.
    """

    u: torch.Tensor
    power_iterations: int = 1
    v: torch.Tensor = None
    sigma: float = None
    degenerate: bool = False

    @classmethod
    def init(cls, rows, power_iterations=1, generator=None, dtype=torch.float64):
        u = torch.randn(rows, generator=generator, dtype=dtype)
        return cls(_l2normalize(u), power_iterations)


def spectral_normalize(weight, state):
    """Divide ``weight`` (matrixised as rows x rest) by its power-iteration top singular value.

    Advances ``state`` by ``state.power_iterations`` steps. A zero weight is
    returned unchanged and flags ``state.degenerate``.
    """
    if state.power_iterations < 1:
        raise ValueError("power_iterations must be >= 1")
    w_mat = weight.reshape(weight.shape[0], -1)
    with torch.no_grad():
        if float(w_mat.abs().max()) == 0.0:
            state.degenerate = True
            state.sigma = 0.0
            return weight
        u, v = _power_iterate(w_mat, state.u.to(w_mat.dtype), state.v, state.power_iterations)
    state.u, state.v = u, v
    sigma = torch.dot(u, w_mat @ v)
    state.sigma = float(sigma)
    state.degenerate = False
    return weight / sigma


class SNConv2d(nn.Module):
    """Conv2d whose weight is divided by its largest singular value on every forward.

    Power iteration advances only in training mode, so evaluation-mode
    forwards are pure functions of the parameters and buffers.
    """

    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, padding=None,
                 bias=True, power_iterations=1):
        super().__init__()
        if padding is None:
            padding = kernel_size // 2
        self.stride = stride
        self.padding = padding
        self.power_iterations = power_iterations
        weight = torch.empty(out_channels, in_channels, kernel_size, kernel_size)
        nn.init.kaiming_uniform_(weight, a=5 ** 0.5)
        self.weight = nn.Parameter(weight)
        self.bias = nn.Parameter(torch.zeros(out_channels)) if bias else None
        fan = in_channels * kernel_size * kernel_size
        self.register_buffer("u", _l2normalize(torch.randn(out_channels)))
        self.register_buffer("v", _l2normalize(torch.randn(fan)))
        self.power_step(15)

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[0]

    def weight_matrix(self):
        return self.weight.reshape(self.weight.shape[0], -1)

    @torch.no_grad()
    def power_step(self, iterations):
        u, v = _power_iterate(self.weight_matrix(), self.u, self.v, iterations)
        self.u.copy_(u)
        self.v.copy_(v)

    def sigma(self):
        # clones keep autograd valid when a later forward advances the buffers in place
        return torch.dot(self.u.clone(), self.weight_matrix() @ self.v.clone())

    def normalized_weight(self):
        if self.training:
            self.power_step(self.power_iterations)
        sigma = self.sigma()
        if float(sigma.detach().abs()) < _EPS:
            return self.weight
        return self.weight / sigma

    def forward(self, x):
        return F.conv2d(x, self.normalized_weight(), self.bias, self.stride, self.padding)

    def extra_repr(self):
        o, i, k, _ = self.weight.shape
        return f"{i}, {o}, kernel_size={k}, stride={self.stride}, padding={self.padding}"


def sn_convs(module):
    return [m for m in module.modules() if isinstance(m, SNConv2d)]


@torch.no_grad()
def calibrate_spectral_norm(module, max_iterations=500, rtol=1e-10):
    """Run power iteration on every SNConv2d in ``module`` until its estimate settles.

    Returns the largest iteration count any layer needed.
    """
    worst = 0
    for conv in sn_convs(module):
        prev = float(conv.sigma())
        used = max_iterations
        for it in range(1, max_iterations + 1):
            conv.power_step(1)
            cur = float(conv.sigma())
            if it >= 20 and abs(cur - prev) <= rtol * max(abs(cur), _EPS):
                used = it
                break
            prev = cur
        worst = max(worst, used)
    return worst


def set_power_iterations(module, iterations):
    for conv in sn_convs(module):
        conv.power_iterations = iterations


def avg_pool_global(x):
    """Mean over the two trailing spatial axes: (..., C, H, W) -> (..., C)."""
    return x.mean(dim=(-2, -1))


class SPADE(nn.Module):
    """Parameter-free normalisation modulated by per-pixel scale and shift from the layout."""

    def __init__(self, norm_nc, label_nc, hidden=128, slope=0.2, power_iterations=1):
        super().__init__()
        self.param_free_norm = nn.BatchNorm2d(norm_nc, affine=False, track_running_stats=False)
        self.shared = SNConv2d(label_nc, hidden, 3, power_iterations=power_iterations)
        self.gamma = SNConv2d(hidden, norm_nc, 3, power_iterations=power_iterations)
        self.beta = SNConv2d(hidden, norm_nc, 3, power_iterations=power_iterations)
        self.slope = slope

    def forward(self, x, layout):
        normalized = self.param_free_norm(x)
        layout = F.interpolate(layout, size=x.shape[-2:], mode="nearest")
        actv = F.leaky_relu(self.shared(layout), self.slope)
        return normalized * (1 + self.gamma(actv)) + self.beta(actv)


class SPADEResBlock(nn.Module):
    def __init__(self, fin, fout, label_nc, hidden=128, slope=0.2, power_iterations=1):
        super().__init__()
        fmiddle = min(fin, fout)
        kw = dict(power_iterations=power_iterations)
        self.slope = slope
        self.norm_0 = SPADE(fin, label_nc, hidden, slope, **kw)
        self.conv_0 = SNConv2d(fin, fmiddle, 3, **kw)
        self.norm_1 = SPADE(fmiddle, label_nc, hidden, slope, **kw)
        self.conv_1 = SNConv2d(fmiddle, fout, 3, **kw)
        self.learned_shortcut = fin != fout
        if self.learned_shortcut:
            self.norm_s = SPADE(fin, label_nc, hidden, slope, **kw)
            self.conv_s = SNConv2d(fin, fout, 1, bias=False, **kw)

    def modulation_convs(self):
        norms = [self.norm_0, self.norm_1] + ([self.norm_s] if self.learned_shortcut else [])
        return [c for n in norms for c in (n.shared, n.gamma, n.beta)]

    def shortcut(self, x, layout):
        if self.learned_shortcut:
            return self.conv_s(self.norm_s(x, layout))
        return x

    def forward(self, x, layout):
        x_s = self.shortcut(x, layout)
        dx = self.conv_0(F.leaky_relu(self.norm_0(x, layout), self.slope))
        dx = self.conv_1(F.leaky_relu(self.norm_1(dx, layout), self.slope))
        return x_s + dx


class ResBlockDown(nn.Module):
    """Unconditioned residual block that halves the spatial size."""

    def __init__(self, fin, fout, slope=0.2, power_iterations=1):
        super().__init__()
        self.slope = slope
        self.conv_0 = SNConv2d(fin, fout, 3, stride=2, power_iterations=power_iterations)
        self.conv_1 = SNConv2d(fout, fout, 3, power_iterations=power_iterations)
        self.conv_s = (
            SNConv2d(fin, fout, 1, bias=False, power_iterations=power_iterations)
            if fin != fout else None
        )

    def forward(self, x):
        x_s = F.avg_pool2d(x, 2)
        if self.conv_s is not None:
            x_s = self.conv_s(x_s)
        dx = self.conv_1(F.leaky_relu(self.conv_0(F.leaky_relu(x, self.slope)), self.slope))
        return x_s + dx

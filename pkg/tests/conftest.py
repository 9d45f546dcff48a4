import pytest
import torch

from edgegan.config import Config
from edgegan.data import load_batch, make_toy_dataset


def central_difference(f, x, eps=1e-6):
    """Numerical gradient of scalar f at tensor x by central differences (float64)."""
    x = x.detach().clone()
    grad = torch.zeros_like(x)
    flat, gflat = x.view(-1), grad.view(-1)
    with torch.no_grad():
        _fill(f, x, flat, gflat, eps)
    return grad


def _fill(f, x, flat, gflat, eps):
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = float(f(x))
        flat[i] = orig - eps
        lo = float(f(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)


def analytic_gradient(f, x):
    x = x.detach().clone().requires_grad_(True)
    f(x).backward()
    return x.grad.detach()


def parameter_gradients(loss_fn, param, eps=1e-6):
    """(analytic, numerical) gradient of ``loss_fn()`` with respect to a module parameter."""
    param.grad = None
    loss_fn().backward()
    ana = param.grad.detach().clone()
    num = torch.zeros_like(param)
    flat, gflat = param.data.view(-1), num.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            hi = float(loss_fn())
            flat[i] = orig - eps
            lo = float(loss_fn())
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
    return ana, num


def relative_error(a, b):
    return float((a - b).norm() / max(float(a.norm()), float(b.norm()), 1e-30))


def tiny_config(**overrides):
    values = {
        "data.num_classes": 4,
        "data.size": [16, 16],
        "model.C": 8,
        "nn.spade_hidden": 8,
        "disc.ndf": 8,
        "model.num_down": 2,
        "train.batch_size": 4,
    }
    values.update(overrides)
    return Config(values)


@pytest.fixture
def tiny():
    return tiny_config()


@pytest.fixture(scope="session")
def toy16(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy16")
    return make_toy_dataset(root, seed=7, count=8, num_classes=4, size=(16, 16))


@pytest.fixture(scope="session")
def toy16_batch(toy16):
    return load_batch(toy16, range(len(toy16)))


_acceptance = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome, report.user_properties))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, props in _acceptance:
        detail = "  ".join(f"{k}={v}" for k, v in props)
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}  {detail}".rstrip())

import numpy as np
import pytest

from convtran.autodiff import Tensor


def finite_diff(f, arr: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``arr``, which is perturbed in place."""
    grad = np.zeros_like(arr, dtype=np.float64)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + eps
        hi = f()
        arr[i] = old - eps
        lo = f()
        arr[i] = old
        grad[i] = (hi - lo) / (2 * eps)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """Max abs difference over the larger magnitude, never dividing by less than ``floor``."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(floor, np.max(np.abs(a)), np.max(np.abs(b))))


def check_grad(op, *shapes, seed: int = 0, eps: float = 1e-6, tol: float = 1e-4, positive: bool = False):
    """Compare autodiff and finite-difference gradients of ``sum(op(*inputs) * w)``.

    A fixed random projection ``w`` makes every output element matter.
    Returns the worst relative error over all inputs.
    """
    rng = np.random.default_rng(seed)
    arrays = [rng.uniform(0.5, 1.5, s) if positive else rng.normal(size=s) for s in shapes]
    out_shape = op(*[Tensor(a) for a in arrays]).shape
    w = rng.normal(size=out_shape)

    def scalar():
        return float((op(*[Tensor(a) for a in arrays]).data * w).sum())

    inputs = [Tensor(a, requires_grad=True) for a in arrays]
    (op(*inputs) * Tensor(w)).sum().backward()
    worst = 0.0
    for t, a in zip(inputs, arrays):
        num = finite_diff(scalar, a, eps)
        err = rel_error(t.grad, num)
        assert err < tol, f"relative error {err:.2e} on input of shape {a.shape}"
        worst = max(worst, err)
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance reporting ----------------------------------------------------------

_CRITERIA: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    name = report.user_properties and dict(report.user_properties).get("criterion")
    if not name:
        return
    detail = dict(report.user_properties).get("detail", "")
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "PASS" if report.outcome == "passed" else "FAIL"
        if outcome == "FAIL" and report.longrepr is not None:
            msg = getattr(report.longrepr, "reprcrash", None)
            detail = (detail + " | " if detail else "") + (msg.message.splitlines()[0] if msg else "error")
        _CRITERIA[name] = (outcome, detail)


@pytest.fixture(autouse=True)
def _criterion_tag(request):
    marker = request.node.get_closest_marker("criterion")
    if marker:
        request.node.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, (outcome, detail) in _CRITERIA.items():
        terminalreporter.write_line(f"{outcome} {name}" + (f" -- {detail}" if detail else ""))

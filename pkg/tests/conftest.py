import numpy as np
import pytest

from intercurv.expr import parse
from intercurv.geom import Chart, ChartMetric, constant_coefficient, expression_coefficient


def _sphere_factor(ys):
    return "4/(1+" + "+".join(f"{y}^2" for y in ys) + ")^2"


def euclidean(n):
    chart = Chart(tuple(f"x{i}" for i in range(n)), (False,) * n, (None,) * n)
    one = constant_coefficient(1.0, n)
    return ChartMetric(chart, {(a, a): one for a in range(n)}, "euclidean")


def round_sphere(k, radius=1.0):
    ys = [f"y{a}" for a in range(k)]
    c = expression_coefficient(parse(f"{radius**2!r}*{_sphere_factor(ys)}", ys), range(k), k)
    return ChartMetric(Chart(tuple(ys), (False,) * k, ((-3.0, 3.0),) * k), {(a, a): c for a in range(k)}, "sphere")


def polar_euclidean(n):
    """dr^2 + r^2 gbar on (r, y_1..y_{n-1})."""
    ys = [f"y{a}" for a in range(n - 1)]
    c = expression_coefficient(parse(f"r^2*{_sphere_factor(ys)}", ["r"] + ys), range(n), n)
    coeff = {(0, 0): constant_coefficient(1.0, n)}
    coeff.update({(a, a): c for a in range(1, n)})
    return ChartMetric(Chart(tuple(["r"] + ys), (False,) * n, (None,) * n), coeff, "polar")


def s2_times_s2():
    names = ["a1", "a2", "b1", "b2"]
    ca = expression_coefficient(parse(_sphere_factor(["a1", "a2"]), ["a1", "a2"]), [0, 1], 4)
    cb = expression_coefficient(parse(_sphere_factor(["b1", "b2"]), ["b1", "b2"]), [2, 3], 4)
    coeff = {(0, 0): ca, (1, 1): ca, (2, 2): cb, (3, 3): cb}
    return ChartMetric(Chart(tuple(names), (False,) * 4, (None,) * 4), coeff, "s2xs2")


def generic_metric():
    """A non-diagonal, non-symmetric-space metric on R^3 for tensor identities."""
    names = ["p", "q", "w"]
    src = {
        (0, 0): "2+sin(p)*cos(q)*0.3",
        (1, 1): "1.5+0.2*cos(p+w)",
        (2, 2): "1+0.1*p^2+0.1*q^2",
        (0, 1): "0.1*sin(w)",
        (1, 2): "0.05*cos(p)*q",
    }
    coeff = {k: expression_coefficient(parse(s, names), range(3), 3) for k, s in src.items()}
    return ChartMetric(Chart(tuple(names), (False,) * 3, (None,) * 3), coeff, "generic")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated in the terminal summary
_CRITERIA: list = []


@pytest.fixture
def criterion(request):
    def record(number, title, passed, seconds, budget, detail=""):
        ok = bool(passed) and (budget is None or seconds < budget)
        limit = f" / budget {budget:g} s" if budget is not None else ""
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {title} ({seconds:.1f} s{limit}){' ' + detail if detail else ''}"
        _CRITERIA.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)

import numpy as np
import pytest

from mpcolloc.errors import ParameterError
from mpcolloc.expr import eval_jet, parse_expression


def jet_at(src, x, y):
    return eval_jet(parse_expression(src), np.asarray(x), np.asarray(y))


def test_values_match_numpy():
    rng = np.random.default_rng(0)
    x, y = rng.uniform(0.1, 2.0, (2, 40))
    cases = [
        ("x1*x2 + 3", x * y + 3),
        ("sin(2*x1)*cos(x2)", np.sin(2 * x) * np.cos(y)),
        ("exp(-x1^2 - x2^2)", np.exp(-(x**2) - y**2)),
        ("x1^3/(1 + x2)", x**3 / (1 + y)),
        ("-x1 + 2^2", -x + 4.0),
        ("cos(4*x1 - 2)*sin(4*x2 - 2/3)", np.cos(4 * x - 2) * np.sin(4 * y - 2 / 3)),
    ]
    for src, ref in cases:
        np.testing.assert_allclose(jet_at(src, x, y).f, ref, rtol=1e-13)


@pytest.mark.parametrize(
    "src",
    ["sin(2*x1)*cos(x2) + x1^2*x2", "exp(x1*x2/4)", "x1^2/(1+x2^2)", "x1^1.5 + x2"],
)
def test_jets_match_finite_differences(src):
    rng = np.random.default_rng(3)
    x, y = rng.uniform(0.3, 1.5, (2, 20))
    h = 1e-5
    j = jet_at(src, x, y)
    f = lambda a, b: jet_at(src, a, b).f
    np.testing.assert_allclose(j.fx, (f(x + h, y) - f(x - h, y)) / (2 * h), atol=2e-8)
    np.testing.assert_allclose(j.fy, (f(x, y + h) - f(x, y - h)) / (2 * h), atol=2e-8)
    h2 = 1e-4
    np.testing.assert_allclose(
        j.fxx, (f(x + h2, y) - 2 * f(x, y) + f(x - h2, y)) / h2**2, atol=1e-5
    )
    np.testing.assert_allclose(
        j.fyy, (f(x, y + h2) - 2 * f(x, y) + f(x, y - h2)) / h2**2, atol=1e-5
    )
    np.testing.assert_allclose(
        j.fxy,
        (f(x + h2, y + h2) - f(x + h2, y - h2) - f(x - h2, y + h2) + f(x - h2, y - h2))
        / (4 * h2 * h2),
        atol=1e-5,
    )


def test_power_tower_right_associative():
    # 2^3^2 = 2^9 = 512
    assert jet_at("2^3^2", np.array([1.0]), np.array([1.0])).f[0] == 512.0


def test_parse_errors():
    for bad in ["x3 + 1", "sin x1", "1 + * 2", "(x1", "x1 @ x2"]:
        with pytest.raises(ParameterError):
            parse_expression(bad)


def test_laplacian_shortcut():
    x, y = np.array([0.3]), np.array([0.7])
    j = jet_at("x1^2 + x2^2", x, y)
    assert j.laplacian[0] == pytest.approx(4.0)

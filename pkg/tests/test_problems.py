import numpy as np
import pytest

from mompc.problems import BENCHMARKS, ECON_X_EQ, get_benchmark, make_cstr2


@pytest.mark.parametrize("name", sorted(BENCHMARKS))
def test_benchmarks_are_consistent(name):
    bench = get_benchmark(name)
    model = bench.model
    assert bench.objectives.model is model
    np.testing.assert_allclose(model.step(model.x_eq, model.u_eq), model.x_eq, atol=1e-12)
    lo, hi = model.state_box
    assert np.all(bench.x0 >= lo) and np.all(bench.x0 <= hi)
    for ref in bench.references.values():
        assert ref.source in {"reported", "derived", "implementer"}


def test_cstr_fixed_point_exact():
    for physical in (False, True):
        model = make_cstr2(use_physical_b_balance=physical).model
        np.testing.assert_allclose(model.step(np.array([0.5, 0.5]), np.array([12.0])), [0.5, 0.5], atol=1e-10)


def test_econ_equilibrium():
    # stationarity of the utility: A alpha x^(alpha - 1) = 1
    assert 5.0 * 0.34 * ECON_X_EQ ** (0.34 - 1.0) == pytest.approx(1.0, abs=1e-12)
    assert ECON_X_EQ == pytest.approx(2.2345, abs=1e-3)


def test_econ_log_extension_is_continuous(econ):
    l1 = econ.objectives.stage_costs[0]
    x = np.array([[1.0]])
    u_edge = 5.0 * 1.0**0.34 - 1e-9
    a = l1(x, np.array([[u_edge - 1e-13]]))
    b = l1(x, np.array([[u_edge + 1e-13]]))
    assert np.isfinite(b) and abs(a - b) < 1e-3
    assert l1(x, np.array([[4.999]])) > l1(x, np.array([[1.0]]))


def test_unknown_benchmark():
    with pytest.raises(KeyError, match="unknown benchmark"):
        get_benchmark("tank")

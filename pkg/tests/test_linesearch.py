import numpy as np
import pytest

from boussinesq_aa.linesearch import LineSearchSpec, ls1, ls2, make_line_search


class Counted:
    def __init__(self, f):
        self.f = f
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        return self.f(float(np.asarray(x).ravel()[0]))


BASE, STEP = np.zeros(1), np.ones(1)


def test_ls1_full_step():
    res = ls1(BASE, STEP, Counted(lambda r: (r - 1.0) ** 2))
    assert res.ratio == 1.0 and not res.fallback


def test_ls1_first_halving_below_threshold():
    # only ratios below 0.3 decrease the objective relative to r = 0
    obj = Counted(lambda r: -r if r < 0.3 else 1.0)
    res = ls1(BASE, STEP, obj, f0=0.0)
    assert res.ratio == 0.25
    assert obj.calls == 3


def test_ls1_fallback_to_floor():
    obj = Counted(lambda r: 1.0 + r)
    res = ls1(BASE, STEP, obj)
    assert res.ratio == 1.0 / 64.0
    assert res.fallback
    # f0 plus the seven trial ratios 1, 1/2, ..., 1/64
    assert obj.calls == 8
    assert res.evaluations == 8


def test_ls1_custom_floor():
    res = ls1(BASE, STEP, lambda x: 1.0 + x[0], spec=LineSearchSpec("ls1", floor=0.25))
    assert res.ratio == 0.25 and res.fallback


def test_ls2_quadratic():
    res = ls2(BASE, STEP, Counted(lambda r: (r - 0.4) ** 2))
    assert abs(res.ratio - 0.4) <= 1e-3


@pytest.mark.parametrize("f, expected", [(lambda r: -r, 1.0), (lambda r: r, 0.01)])
def test_ls2_monotone(f, expected):
    res = ls2(BASE, STEP, Counted(f))
    assert res.ratio == pytest.approx(expected, abs=1e-3)


@pytest.mark.parametrize("f", [lambda r: (r - 0.4) ** 2, lambda r: np.sin(9 * r), lambda r: -r, lambda r: abs(r - 0.77)])
def test_ls2_no_worse_than_endpoints_and_within_budget(f):
    obj = Counted(f)
    spec = LineSearchSpec("ls2")
    res = ls2(BASE, STEP, obj, spec=spec)
    assert res.value <= min(f(0.01), f(1.0)) + spec.tol
    assert obj.calls <= spec.max_evals


def test_ls2_budget_respected():
    obj = Counted(lambda r: np.sin(40 * r))
    ls2(BASE, STEP, obj, spec=LineSearchSpec("ls2", max_evals=6, tol=1e-9))
    assert obj.calls <= 6


def test_ls2_nonfinite_objective_avoided():
    res = ls2(BASE, STEP, lambda x: np.inf if x[0] > 0.5 else (x[0] - 0.3) ** 2)
    assert abs(res.ratio - 0.3) <= 1e-3


@pytest.mark.parametrize("kw", [{"kind": "ls3"}, {"floor": 0.0}, {"bracket": (0.5, 0.1)}, {"bracket": (0.0, 1.0)}])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        LineSearchSpec(**kw)


def test_adapter_reuses_accepted_value():
    obj = Counted(lambda r: (r - 2.5) ** 2)
    search = make_line_search(LineSearchSpec("ls1"), obj)
    assert make_line_search(LineSearchSpec("none"), obj) is None
    x = BASE
    assert search(x, STEP) == 1.0
    first = obj.calls
    x = x + STEP
    assert search(x, STEP) == 1.0
    assert obj.calls - first == 1


def test_objective_errors_propagate():
    def bad(x):
        raise RuntimeError("solver failed")

    with pytest.raises(RuntimeError):
        ls1(BASE, STEP, bad)
    with pytest.raises(RuntimeError):
        ls2(BASE, STEP, bad)

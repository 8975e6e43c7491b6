import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from nvfem import NonvariationalFEM, QuasilinearFEM, StandardFEM, make_problem


def test_params_roundtrip():
    est = NonvariationalFEM(n=6, degree=2, preconditioner="diagonal")
    params = est.get_params()
    assert params["n"] == 6 and params["degree"] == 2 and params["preconditioner"] == "diagonal"
    other = clone(est).set_params(n=4)
    assert other.n == 4 and est.n == 6


def test_fit_predict_poisson():
    est = NonvariationalFEM(n=8, degree=2).fit("poisson")
    p = est.problem_
    pts = np.random.default_rng(3).uniform(-1, 1, (40, 2))
    np.testing.assert_allclose(est.predict(pts), p.exact_u(pts), atol=2e-2)
    assert est.score(pts, p.exact_u(pts)) > 0.999
    e0, e1 = est.error_norms()
    assert e0 < 2e-2 and e1 < 0.3
    assert est.n_iter_ > 0
    H = est.predict_hessian(np.array([[0.5, 0.5]]))
    assert H.shape == (1, 2, 2)
    assert H[0, 0, 0] == pytest.approx(-np.pi**2, rel=0.05)


def test_accepts_problem_spec():
    est = NonvariationalFEM(n=4).fit(make_problem("test42", K=1.0))
    assert est.problem_.params["K"] == 1.0


def test_input_validation():
    est = NonvariationalFEM(n=4)
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((1, 2)))
    est.fit("test41")
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        est.predict(np.array([[np.nan, 0.0]]))
    with pytest.raises(ValueError):
        NonvariationalFEM(degree=3).fit("test41")


def test_standard_and_quasilinear_estimators():
    fem = StandardFEM(n=8).fit("poisson")
    nv = NonvariationalFEM(n=8).fit("poisson")
    assert fem.error_norms()[0] == pytest.approx(nv.error_norms()[0], rel=0.5)
    q = QuasilinearFEM(n=8, degree=2, preconditioner="diagonal").fit()
    assert q.stagnation_point_ >= 2
    assert q.coef_.shape == (q.space_.n_dofs,)

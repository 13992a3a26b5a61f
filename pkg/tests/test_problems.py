import numpy as np
import pytest

from nlparabolic.jet_core import NonlinearOperatorSpec, TorusGrid, evaluate_operator
from nlparabolic.problems import (AliasingError, ExactSolution, catalog, ellipticity_at_initial, get_card,
                                  manufacture)


def test_catalog_coverage():
    cards = catalog()
    assert {c.order for c in cards} == {2, 4}
    assert {c.spec.rank for c in cards} == {1, 2}
    assert {c.n for c in cards} == {1, 2}
    assert {"heat", "heat2d", "biharmonic", "semilinear", "semilinear2d", "arctan", "system"} <= {c.name for c in cards}


@pytest.mark.parametrize("card", [c for c in catalog() if c.exact is not None], ids=lambda c: c.name)
@pytest.mark.parametrize("N", [16, 32])
def test_registration_identity(card, N):
    assert card.registration_defect(card.grid(N)) <= 1e-10


@pytest.mark.parametrize("card", catalog(), ids=lambda c: c.name)
def test_catalog_ellipticity(card):
    rep = ellipticity_at_initial(card, 16)
    assert rep.lam >= 0.1
    if card.lam is not None:
        assert rep.lam == pytest.approx(card.lam, abs=1e-6)


def test_manufacture_heat_zero_forcing():
    card = get_card("heat")
    g = manufacture(card.spec, card.exact, TorusGrid(1, 32), [0.0, 0.05, 0.1])
    assert np.abs(g).max() <= 1e-10


def test_manufacture_semilinear_matches_identity():
    card = get_card("semilinear")
    grid = TorusGrid(1, 32)
    exact = ExactSolution(lambda x, t: np.exp(-t) * np.sin(x), lambda x, t: -np.exp(-t) * np.sin(x))
    g = manufacture(card.spec, exact, grid, [0.1])
    x = grid.coords[0]
    # d_t u - u_xx - u^2 with u = e^{-t} sin x leaves only -u^2
    assert np.abs(g[0, 0] + (np.exp(-0.1) * np.sin(x)) ** 2).max() <= 1e-10


def test_manufacture_zero_solution():
    spec = NonlinearOperatorSpec(2, 1, 1, lambda j: j["xx"] + np.cos(j.x[0]) + 1.0)
    grid = TorusGrid(1, 16)
    zero = ExactSolution(lambda x, t: 0 * x, lambda x, t: 0 * x)
    g = manufacture(spec, zero, grid, [0.0])
    assert np.allclose(g[0], -evaluate_operator(spec, np.zeros((1, 16)), grid), atol=1e-14)


def test_manufacture_detects_aliasing():
    card = get_card("heat")
    exact = ExactSolution(lambda x, t: np.sin(7 * x), lambda x, t: 0 * x)
    with pytest.raises(AliasingError):
        manufacture(card.spec, exact, TorusGrid(1, 16), [0.0])


def test_unknown_card():
    with pytest.raises(KeyError, match="heat"):
        get_card("nope")

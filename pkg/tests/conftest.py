import pytest

from biggins import OffspringModel


@pytest.fixture(scope="session")
def gw_half():
    """Galton-Watson embedding with pmf {1: 1/2, 2: 1/2} (mean 1.5)."""
    return OffspringModel.galton_watson([0.0, 0.5, 0.5])


@pytest.fixture(scope="session")
def bg_quarter():
    """Binary Gaussian displacements with tau2 = 0.25."""
    return OffspringModel.binary_gaussian(0.25)


@pytest.fixture(scope="session")
def tab_weighted():
    """Tabulated model with unequal weights (exercises weighted draws)."""
    import math
    a = math.log(1.6)
    b = -math.log(0.75)
    return OffspringModel.tabulated([(0.5, 2, (a, a)), (0.5, 1, (b,))])


@pytest.fixture(scope="session")
def tab_extinctable():
    """Tabulated model with an empty atom (positive extinction chance)."""
    import math
    a = math.log(1.6)
    b = -math.log(1.25)
    return OffspringModel.tabulated([(0.4, 2, (a, a)), (0.4, 1, (b,)),
                                     (0.2, 0, ())])

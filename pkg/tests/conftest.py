import numpy as np
import pytest

import bosedot as bd


@pytest.fixture(scope="session")
def gauss_ff():
    return bd.FormFactor.gaussian(1.0, 1.0)


@pytest.fixture(scope="session")
def dot2():
    return bd.DotSpec(d=2)


@pytest.fixture(scope="session")
def grid2(gauss_ff, dot2):
    # linear 2-mode window; nodes 0.55 and 1.65 stay off the unit Bohr gap
    gs = bd.GridSpec(n_modes=2, omega_max=2.2)
    return bd.discretize(gauss_ff, 1.0, gs, bd.RELATIVISTIC,
                         bohr_frequencies=dot2.bohr_frequencies())


@pytest.fixture(scope="session")
def bundle2(dot2, grid2):
    trunc = bd.TruncationSpec(2, 2)
    return bd.build_bundle(dot2, grid2, trunc, lam=0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

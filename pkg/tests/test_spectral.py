import math

import numpy as np
import pytest

import bosedot as bd
from bosedot import spectral
from bosedot.dot import gibbs_vector
from bosedot.liouville import build_bundle


def test_level_shift_gap_closed_form_d2():
    for beta in (0.5, 1.0, 2.0, 10.0):
        rep = spectral.level_shift(bd.DotSpec(d=2), beta)
        a = 1.0 / math.expm1(beta)
        assert rep.gap == pytest.approx(1.0 + 2.0 * a, abs=1e-12)


@pytest.mark.parametrize("d", [2, 3, 4, 5, 6])
@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 10.0])
def test_level_shift_kernel_is_gibbs(d, beta):
    rep = spectral.level_shift(bd.DotSpec(d=d), beta)
    coeff = np.exp(-0.5 * beta * np.arange(d))
    coeff /= np.linalg.norm(coeff)
    assert np.linalg.norm(rep.gamma_tilde @ coeff) < 1e-12
    assert rep.gap > 0
    np.testing.assert_allclose(np.abs(rep.kernel_vector), coeff, atol=1e-10)


def test_level_shift_low_temperature_limit():
    rep = spectral.level_shift(bd.DotSpec(d=4), 10.0)
    ref = np.diag([0.0, 1.0, 1.0, 1.0])
    assert np.max(np.abs(rep.gamma_tilde - ref)) < 0.05


def test_level_shift_shell_weight_scales_gamma():
    r1 = spectral.level_shift(bd.DotSpec(d=3), 1.0, shell_weight=1.0)
    r2 = spectral.level_shift(bd.DotSpec(d=3), 1.0, shell_weight=2.5)
    np.testing.assert_allclose(r2.gamma, 2.5 * r1.gamma, atol=1e-14)


def test_level_shift_validation():
    with pytest.raises(ValueError):
        spectral.level_shift(bd.DotSpec(d=1), 1.0)
    with pytest.raises(ValueError):
        spectral.level_shift(bd.DotSpec(d=2), 0.0)
    with pytest.raises(ValueError):
        # non unit level spacing has no single resonance shell
        spectral.level_shift(bd.DotSpec(d=3, energies=(0.0, 1.0, 2.7)), 1.0)


def test_solve_near_zero_dense_small_kernel(bundle2):
    rep = spectral.solve_near_zero(bundle2, k=8)
    # matched-occupation states under total cap 2: vacuum plus one
    # left/right pair in either mode, times the two diagonal dot pairs
    assert rep.kernel_dim == 6
    assert rep.kernel_basis.shape == (bundle2.dim, 6)
    assert np.all(rep.residuals <= 1e-8 * max(rep.norm_L, 1.0))
    order = np.abs(rep.eigenvalues)
    assert np.all(np.diff(order) >= -1e-12)


def test_solve_near_zero_sparse_path_self_consistent(gauss_ff):
    # 2720-dimensional composite forces the shift-invert branch
    dspec = bd.DotSpec(d=2)
    gs = bd.GridSpec(n_modes=7, omega_max=2.8)
    grid = bd.discretize(gauss_ff, 1.0, gs, bd.RELATIVISTIC,
                         bohr_frequencies=dspec.bohr_frequencies())
    b = build_bundle(dspec, grid, bd.TruncationSpec(7, 3), lam=0.05)
    assert b.dim == 2720
    rep = spectral.solve_near_zero(b, k=10)
    assert np.all(rep.residuals <= 1e-7 * rep.norm_L)
    assert rep.kernel_dim >= 2


def test_virial_value_real_and_small_for_eigenvectors(gauss_ff):
    dspec = bd.DotSpec(d=2)
    grid = bd.discretize(gauss_ff, 1.0,
                         bd.GridSpec(n_modes=2, omega_max=2.0, spacing="log",
                                     omega_min=0.3),
                         bohr_frequencies=dspec.bohr_frequencies())
    b = build_bundle(dspec, grid, bd.TruncationSpec(2, 2), lam=0.15)
    rep = spectral.solve_near_zero(b, k=6)
    from bosedot.liouville import assemble_conjugate
    assemble_conjugate(b, scheme="log_dilation")
    for i in range(6):
        out = spectral.virial_check(b, rep.vectors[:, i], rep.eigenvalues[i])
        assert isinstance(out["virial_value"], float)
        assert abs(out["virial_value"]) < 1e-12


def test_kms_kernel_vector_is_captured(bundle2):
    rep = spectral.solve_near_zero(bundle2, k=6)
    psi, captured = spectral.kms_kernel_vector(bundle2, rep)
    assert captured == pytest.approx(1.0, abs=1e-6)
    assert np.linalg.norm(psi.amplitudes) == pytest.approx(1.0, abs=1e-12)
    # it really is annihilated by the generator
    assert np.linalg.norm(bundle2.L.matrix @ psi.amplitudes) < \
        1e-9 * bundle2.norm_L()


def test_kernel_structure_overlap_range(bundle2):
    rep = spectral.solve_near_zero(bundle2, k=6)
    psi, _ = spectral.kms_kernel_vector(bundle2, rep)
    ks = spectral.kernel_structure(bundle2, psi)
    assert 0.9 < ks.overlap <= 1.0
    assert ks.cut == bundle2.lam
    assert ks.panel


def test_orthogonal_kernel_panel_bounded(bundle2):
    rep = spectral.solve_near_zero(bundle2, k=6)
    psi, _ = spectral.kms_kernel_vector(bundle2, rep)
    table = spectral.orthogonal_kernel_panel(bundle2, rep, psi)
    assert table
    for v in table.values():
        assert 0.0 <= v <= 1.0 + 1e-12


def test_attach_diagnostics_rows(bundle2):
    rep = spectral.solve_near_zero(bundle2, k=4)
    spectral.attach_diagnostics(bundle2, rep)
    assert len(rep.diagnostics) == 4
    assert "eigenvalue" in rep.diagnostics[0]


def test_resolvent_sandwich_basic(gauss_ff):
    dspec = bd.DotSpec(d=2)
    gs = bd.GridSpec(n_modes=60, omega_max=3.0, spacing="log", omega_min=0.2)
    grid = bd.discretize(gauss_ff, 1.0, gs, bd.RELATIVISTIC,
                         bohr_frequencies=dspec.bohr_frequencies())
    b = build_bundle(dspec, grid, bd.TruncationSpec(60, 1), lam=1.0)
    rep = spectral.resolvent_sandwich(b, 0.2)
    m = rep.matrix
    np.testing.assert_allclose(m, m.conj().T, atol=1e-12)
    assert rep.fit_constant > 0
    assert rep.gibbs_overlap > 0.99
    assert rep.oracle_constant > 0


def test_lorentzian_constant_stable_under_refinement(gauss_ff):
    vals = []
    for n in (200, 400):
        gs = bd.GridSpec(n_modes=n, omega_max=3.0, spacing="log",
                         omega_min=0.2)
        grid = bd.discretize(gauss_ff, 1.0, gs)
        vals.append(spectral.lorentzian_constant(grid, 0.1))
    assert vals[0] > 0
    assert abs(vals[1] - vals[0]) < 5e-3 * vals[0]


def test_fgr_check_reports_both_scalings(gauss_ff):
    gs = bd.GridSpec(n_modes=300, omega_max=3.0)
    grid = bd.discretize(gauss_ff, 1.0, gs)
    out = spectral.fgr_check(grid, bd.DotSpec(d=3), 0.05)
    assert out["delta"] == 0.05
    for gap, row in out["weights"].items():
        assert row["raw"] >= 0
        assert row["density"] == pytest.approx(row["raw"] / 0.1, rel=1e-12)
    assert out["effective"] in (True, False)

"""Eigenanalysis of the assembled generator and its structural diagnostics.

Everything here works on an OperatorBundle: near-zero eigensolves with
post-hoc residuals, the commutator (virial) identity per eigenvector, the
kernel-structure overlap against the product of the dot Gibbs projector and a
low-field-energy cut, the dot-local level-shift matrix with its gap, a
resolvent-sandwich estimate of that matrix from the full generator, and the
resonant-coupling effectiveness check for the dot gaps.
"""

import warnings
from dataclasses import dataclass, field as dfield

import numpy as np
from scipy import sparse
import scipy.linalg as sla
from scipy.sparse.linalg import eigsh, ArpackNoConvergence

from . import dot as dotmod
from .fock import SolverConvergenceError
from .krylov import DENSE_CUTOFF


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    vectors: np.ndarray          # columns are eigenvectors
    residuals: np.ndarray        # ||(L - e) psi|| per pair
    kernel_tol: float
    kernel_dim: int
    kernel_basis: np.ndarray     # columns, orthonormalized
    norm_L: float
    messages: tuple = ()
    diagnostics: list = dfield(default_factory=list)

    def to_dict(self):
        out = {
            "eigenvalues": [float(e) for e in self.eigenvalues],
            "residuals": [float(r) for r in self.residuals],
            "kernel_tol": self.kernel_tol,
            "kernel_dim": self.kernel_dim,
            "norm_L": self.norm_L,
            "messages": list(self.messages),
        }
        if self.diagnostics:
            out["diagnostics"] = self.diagnostics
        return out


@dataclass
class LevelShiftReport:
    a: float
    gamma_tilde: np.ndarray
    shell_weight: float
    gamma: np.ndarray
    gap: float
    kernel_vector: np.ndarray
    kernel_residual: float
    alignment: float = None

    def to_dict(self):
        out = {
            "a": self.a,
            "gamma_tilde": self.gamma_tilde.tolist(),
            "shell_weight": self.shell_weight,
            "gap": self.gap,
            "kernel_vector": self.kernel_vector.tolist(),
            "kernel_residual": self.kernel_residual,
        }
        if self.gamma is not None:
            out["gamma"] = self.gamma.tolist()
        if self.alignment is not None:
            out["alignment"] = self.alignment
        return out


@dataclass
class SandwichReport:
    matrix: np.ndarray
    epsilon: float
    rho_cut: float
    fit_constant: float
    misfit: float
    gibbs_overlap: float
    oracle_constant: float
    messages: tuple = ()

    def to_dict(self):
        return {
            "matrix": self.matrix.tolist(),
            "epsilon": self.epsilon,
            "rho_cut": self.rho_cut,
            "fit_constant": self.fit_constant,
            "misfit": self.misfit,
            "gibbs_overlap": self.gibbs_overlap,
            "oracle_constant": self.oracle_constant,
            "messages": list(self.messages),
        }


# ---------------------------------------------------------------------------
# eigensolves

def _dense_near_zero(mat, k):
    evals, evecs = np.linalg.eigh(mat.toarray())
    order = np.argsort(np.abs(evals), kind="stable")[:k]
    return evals[order], evecs[:, order]


def _sparse_near_zero(mat, k, tol, norm_l, seed=11):
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(mat.shape[0])
    # a small real shift keeps the factorization away from the exact kernel
    sigma = -3.7e-6 * max(norm_l, 1.0)
    try:
        evals, evecs = eigsh(mat, k=k, sigma=sigma, which="LM",
                             tol=tol, v0=v0)
    except ArpackNoConvergence as exc:
        got = len(exc.eigenvalues)
        raise SolverConvergenceError(
            f"shift-invert converged {got}/{k} pairs") from exc
    order = np.argsort(np.abs(evals), kind="stable")
    return evals[order], evecs[:, order]


def solve_near_zero(bundle, k, tol=1e-10, kernel_tol=None, seed=11):
    """k eigenpairs of L nearest zero, with verified residuals.

    Dense below dimension 2000, shift-invert above.  The kernel is the set of
    eigenvalues below kernel_tol (default 1e-9 * ||L||); its basis is
    re-orthonormalized with a pivoted QR and the reported dimension is the
    numerical rank.
    """
    mat = bundle.L.matrix
    if k > mat.shape[0]:
        raise ValueError("more eigenpairs requested than the dimension")
    norm_l = bundle.norm_L()
    if kernel_tol is None:
        kernel_tol = 1e-9 * max(norm_l, 1.0)

    if mat.shape[0] <= DENSE_CUTOFF:
        evals, evecs = _dense_near_zero(mat, k)
    else:
        evals, evecs = _sparse_near_zero(mat, k, tol, norm_l, seed=seed)

    residuals = np.array([
        np.linalg.norm(mat @ evecs[:, i] - evals[i] * evecs[:, i])
        for i in range(len(evals))])

    messages = []
    bad = residuals > max(tol, 1e-12) * max(norm_l, 1.0) * 100
    if np.any(bad):
        messages.append(f"{int(bad.sum())} residuals above verification bound")

    spacings = np.diff(np.sort(evals))
    if len(spacings) and np.any((spacings > 0) & (spacings < 10 * tol)):
        messages.append("near-degenerate pairs: spacing < 10*tol")

    in_kernel = np.abs(evals) < kernel_tol
    kdim = int(np.sum(in_kernel))
    if kdim:
        raw = evecs[:, in_kernel]
        q, r, _ = sla.qr(raw, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        rank = int(np.sum(diag > 1e-10 * max(diag[0], 1e-300)))
        basis = q[:, :rank]
        kdim = rank
    else:
        basis = np.zeros((mat.shape[0], 0), dtype=complex)

    return SpectralReport(
        eigenvalues=evals, vectors=evecs, residuals=residuals,
        kernel_tol=kernel_tol, kernel_dim=kdim, kernel_basis=basis,
        norm_L=norm_l, messages=tuple(messages))


# ---------------------------------------------------------------------------
# per-vector diagnostics

def virial_check(bundle, psi, e=None):
    """Commutator expectation and low-frequency weight of one eigenvector.

    For an exact eigenvector the expectation of C1 = i[L, A] vanishes
    identically; the attached value is pure floating-point noise.  The
    lambda_weight reports || Lambda^(1/2) psi ||.
    """
    if bundle.C1 is None:
        raise ValueError("attach a conjugate operator first")
    psi = np.asarray(psi, dtype=complex)
    val = np.vdot(psi, bundle.C1.matrix @ psi)
    lam_w = float(np.sqrt(np.sum(bundle.lambda_diag * np.abs(psi) ** 2)))
    return {"virial_value": float(val.real), "lambda_weight": lam_w,
            "eigenvalue": None if e is None else float(e)}


def _default_panel(bundle, n_field=2):
    """Fixed low-excitation test vectors for weak-overlap tables.

    Besides the thermal and bare dot entries, the panel carries
    charge-neutral mixed entries (an off-diagonal dot pair compensated by one
    field quantum); only those can resolve the coupling-induced dressing of
    kernel vectors, since the generator conserves the total charge and the
    unmixed entries sit in other charge sectors or tend to constants.
    """
    d = bundle.dot_dim
    gibbs = dotmod.gibbs_vector(bundle.dot_spec, bundle.beta)
    vac = bundle.basis.vacuum()
    panel = [("gibbs*vac", np.kron(gibbs, vac))]
    for (i, j) in [(0, 1), (1, 0)]:
        if i < d and j < d:
            e = np.zeros(d * d)
            e[i * d + j] = 1.0
            panel.append((f"offdiag({i},{j})*vac", np.kron(e, vac)))
    for side in ("left", "right"):
        for m in range(min(n_field, bundle.grid.n_modes)):
            one = bundle.basis.ladder(m, side, create=True) @ vac
            nrm = np.linalg.norm(one)
            if nrm > 0:
                panel.append((f"gibbs*{side}_quantum[{m}]",
                              np.kron(gibbs, one / nrm)))
    if d >= 2:
        for m in range(min(n_field, bundle.grid.n_modes)):
            for (i, j), side in [((0, 1), "left"), ((1, 0), "right")]:
                one = bundle.basis.ladder(m, side, create=True) @ vac
                nrm = np.linalg.norm(one)
                if nrm == 0:
                    continue
                e = np.zeros(d * d)
                e[i * d + j] = 1.0
                panel.append((f"offdiag({i},{j})*{side}_quantum[{m}]",
                              np.kron(e, one / nrm)))
    return [(name, v.astype(complex)) for name, v in panel]


@dataclass
class KernelStructure:
    overlap: float
    cut: float
    gibbs_component_norm: float
    panel: dict

    def to_dict(self):
        return {"overlap": self.overlap, "cut": self.cut,
                "gibbs_component_norm": self.gibbs_component_norm,
                "panel": {k: [v.real, v.imag] for k, v in self.panel.items()}}


def kernel_structure(bundle, psi, beta=None, lam=None, panel=None):
    """Structure overlap || P_gibbs P(Lambda <= |lam|) psi || and a panel table.

    P_gibbs projects the dot pair factor on the thermal purification vector;
    the field-energy cut is a diagonal indicator.  The panel overlaps are the
    weak-convergence diagnostics for kernel vectors orthogonal to the
    equilibrium vector.
    """
    beta = bundle.beta if beta is None else beta
    lam = bundle.lam if lam is None else lam
    psi = psi.amplitudes if hasattr(psi, "amplitudes") else np.asarray(psi, dtype=complex)
    d2 = bundle.dot_dim ** 2
    fd = bundle.field_dim

    cut = abs(lam)
    keep = (bundle.lambda_diag <= cut).astype(float)
    low = (keep * psi).reshape(d2, fd)
    gibbs = dotmod.gibbs_vector(bundle.dot_spec, beta)
    comp = gibbs.conj() @ low          # field vector left after dot projection
    overlap = float(np.linalg.norm(comp))

    full = psi.reshape(d2, fd)
    gibbs_norm = float(np.linalg.norm(gibbs.conj() @ full))

    table = {}
    for name, chi in (panel if panel is not None else _default_panel(bundle)):
        table[name] = complex(np.vdot(chi, psi))

    return KernelStructure(overlap=overlap, cut=cut,
                           gibbs_component_norm=gibbs_norm, panel=table)


def kms_kernel_vector(bundle, report):
    """Select the equilibrium direction inside a (possibly degenerate) kernel.

    Hard truncation keeps the free-generator kernel exactly degenerate at
    every coupling (the left and right channel contributions to the reduced
    second-order shift cancel pairwise), so the solver's kernel basis is an
    arbitrary rotation.  The physical vector is the projection of the
    perturbative thermal vector onto that kernel; returns (state, captured)
    with captured the norm fraction the kernel holds.
    """
    from .liouville import kms_vector as _kms
    if report.kernel_dim == 0:
        raise ValueError("empty kernel")
    ref, _ = _kms(bundle)
    basis = report.kernel_basis
    coeff = basis.conj().T @ ref.amplitudes
    proj = basis @ coeff
    captured = float(np.linalg.norm(proj))
    from .fock import StateVector
    return StateVector(amplitudes=proj / captured, label="kms-kernel"), captured


def orthogonal_kernel_panel(bundle, report, psi, panel=None):
    """Weak-overlap table for the kernel complement of a selected vector.

    Orthonormalizes the kernel basis against psi and reports, per panel
    entry, the largest overlap magnitude over the complement.  Entries in
    other charge sectors vanish identically; the charge-neutral mixed
    entries track the coupling-induced dressing.
    """
    basis = report.kernel_basis
    psi = psi.amplitudes if hasattr(psi, "amplitudes") else np.asarray(psi, dtype=complex)
    comp = basis - np.outer(psi, psi.conj() @ basis)
    q, r = np.linalg.qr(comp)
    keep = np.abs(np.diag(r)) > 1e-8
    q = q[:, keep]
    table = {}
    for name, chi in (panel if panel is not None else _default_panel(bundle)):
        if q.shape[1]:
            table[name] = float(np.max(np.abs(chi.conj() @ q)))
        else:
            table[name] = 0.0
    return table


def attach_diagnostics(bundle, report, panel=None):
    """Fill the per-vector diagnostics table of a SpectralReport."""
    rows = []
    for i in range(len(report.eigenvalues)):
        psi = report.vectors[:, i]
        row = {"eigenvalue": float(report.eigenvalues[i]),
               "residual": float(report.residuals[i])}
        if bundle.C1 is not None:
            row.update(virial_check(bundle, psi, report.eigenvalues[i]))
        ks = kernel_structure(bundle, psi, panel=panel)
        row["structure_overlap"] = ks.overlap
        row["panel"] = {k: abs(v) for k, v in ks.panel.items()}
        rows.append(row)
    report.diagnostics = rows
    return report


# ---------------------------------------------------------------------------
# level-shift matrix

def level_shift(dot_spec, beta, shell_weight=1.0):
    """Tridiagonal dot-local relaxation matrix at the ladder Bohr frequency.

    Valid for a uniform unit ladder.  Diagonal [a, 1+2a, ..., 1+2a, 1+a] with
    off-diagonals -sqrt(a(1+a)), a the thermal occupation at frequency one;
    the kernel is spanned by the Gibbs coefficient vector and the reported gap
    is the smallest nonzero eigenvalue.  gamma = shell_weight * gamma_tilde.
    """
    d = dot_spec.d
    if d < 2:
        raise ValueError("no transitions for a single level")
    gaps = np.diff(dot_spec.energy_array)
    if not np.allclose(gaps, 1.0, atol=1e-12):
        raise ValueError("tridiagonal form needs a uniform unit ladder")
    if beta <= 0:
        raise ValueError("beta must be positive")

    a = 1.0 / np.expm1(beta)
    diag = np.full(d, 1.0 + 2.0 * a)
    diag[0] = a
    diag[-1] = 1.0 + a
    off = np.full(d - 1, -np.sqrt(a * (1.0 + a)))
    gt = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)

    evals = np.linalg.eigvalsh(gt)
    gap = float(np.sort(evals)[1])

    w = np.exp(-0.5 * beta * (dot_spec.energy_array
                              - dot_spec.energy_array.min()))
    w = w / np.linalg.norm(w)
    residual = float(np.linalg.norm(gt @ w))

    return LevelShiftReport(
        a=float(a), gamma_tilde=gt, shell_weight=float(shell_weight),
        gamma=shell_weight * gt, gap=gap, kernel_vector=w,
        kernel_residual=residual)


# ---------------------------------------------------------------------------
# resolvent sandwich

def _sector_states(bundle):
    """Orthonormal basis of (diagonal dot pairs) x (field vacuum)."""
    d = bundle.dot_dim
    fd = bundle.field_dim
    vac = bundle.basis.vacuum()
    cols = []
    for i in range(d):
        e = np.zeros(d * d)
        e[i * d + i] = 1.0
        cols.append(np.kron(e, vac).astype(complex))
    return cols


def lorentzian_constant(grid, epsilon, gap=1.0):
    """Independent quadrature oracle for the sandwich proportionality.

    Both doubled-field channels feed the sandwich equally, hence the factor
    two in front of the Lorentzian sum against the discretized coupling
    density.
    """
    dens = grid.weights * np.abs(grid.couplings) ** 2
    lorentz = epsilon / ((grid.omegas - gap) ** 2 + epsilon ** 2)
    return float(2.0 * np.sum(dens * lorentz))


def resolvent_sandwich(bundle, epsilon, rho_cut=None):
    """Dot-sector compression epsilon * P I (L0^2+eps^2)^(-1) I P.

    P restricts to diagonal dot pairs tensor the field vacuum (the rho_cut
    energy cut keeps exactly that sector for any cut below the lowest mode).
    Returns the d x d matrix together with its best-fit multiple of the
    level-shift matrix, the relative Frobenius misfit, the overlap of its
    minimal eigenvector with the Gibbs vector, and the quadrature oracle for
    the fitted constant.
    """
    grid = bundle.grid
    if rho_cut is None:
        rho_cut = 0.5 * float(np.min(grid.omegas))
    if rho_cut >= float(np.min(grid.omegas)):
        raise ValueError("rho_cut must stay below the lowest mode frequency")
    messages = []
    h_over_eps = grid.step / epsilon
    if h_over_eps > 0.1:
        messages.append(
            f"Lorentzian under-resolved: h/epsilon = {h_over_eps:.3g}")

    imat = bundle.I_op.matrix
    inv = 1.0 / (bundle.l0_diag ** 2 + epsilon ** 2)
    cols = _sector_states(bundle)
    d = bundle.dot_dim

    images = [inv * (imat @ c) for c in cols]
    m = np.empty((d, d), dtype=complex)
    half = [imat @ c for c in cols]
    for i in range(d):
        for j in range(d):
            m[i, j] = epsilon * np.vdot(half[i], images[j])
    m = 0.5 * (m + m.conj().T)

    ls = level_shift(bundle.dot_spec, bundle.beta)
    gt = ls.gamma_tilde
    c_fit = float(np.sum(gt * m.real) / np.sum(gt * gt))
    misfit = float(np.linalg.norm(m - c_fit * gt) / np.linalg.norm(m))

    evals, evecs = np.linalg.eigh(m)
    vmin = evecs[:, int(np.argmin(evals))]
    gibbs = ls.kernel_vector
    gibbs_overlap = float(abs(np.vdot(vmin, gibbs)))

    oracle = lorentzian_constant(grid, epsilon)

    return SandwichReport(
        matrix=m.real if np.allclose(m.imag, 0, atol=1e-13) else m,
        epsilon=float(epsilon), rho_cut=float(rho_cut),
        fit_constant=c_fit, misfit=misfit, gibbs_overlap=gibbs_overlap,
        oracle_constant=oracle, messages=tuple(messages))


# ---------------------------------------------------------------------------
# resonant-coupling effectiveness

def fgr_check(grid, dot_spec, delta):
    """Per-gap resonant coupling weights; effective iff all gaps see weight.

    For each distinct level gap the raw weight sums w_j |g_j|^2 over modes
    within delta of the gap; the density value divides by the window width
    2*delta so that shrinking windows converge to the shell coupling density
    at the gap.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    gaps = dot_spec.gaps()
    out = {}
    for gap in gaps:
        sel = np.abs(grid.omegas - gap) < delta
        raw = float(np.sum(grid.weights[sel] * np.abs(grid.couplings[sel]) ** 2))
        out[gap] = {"raw": raw, "density": raw / (2.0 * delta)}
    effective = all(v["raw"] > 0 for v in out.values())
    return {"weights": out, "effective": effective, "delta": float(delta)}

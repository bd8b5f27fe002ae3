"""Data-aided channel estimation in the virtual angular domain.

For every subcarrier m the detected symbols act as pilots:

    R_m = Phi_m A_m + noise,   Phi_m[t, kappa] = S[m, k_kappa] * Xhat[k_kappa, t]

where R_m is the T x N observation rotated by the conjugate DFT and A_m the
angular-domain equivalent channel. A_m is recovered with a Bernoulli-Gaussian
AMP whose support probabilities are shared across subcarriers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyActiveSet, NumericalDivergence, Overdetermined, ShapeMismatch, SingularSystem

SIGMA2_FLOOR = 1e-15
VAR_FLOOR = 1e-12
RIDGE_FLOOR = 1e-12


@dataclass(frozen=True)
class CeProblem:
    Phi: np.ndarray   # M x T x Ka sensing matrices
    R: np.ndarray     # M x T x N angular observations
    U: np.ndarray     # N x N unitary DFT

    @property
    def overdetermined(self) -> bool:
        return self.Phi.shape[1] >= self.Phi.shape[2]


@dataclass(frozen=True)
class CeResult:
    H_equ_hat: np.ndarray   # N x M x Ka
    A_hat: np.ndarray       # M x Ka x N
    sigma2_hat: float
    iterations: int = 0


def dft_matrix(N: int) -> np.ndarray:
    n = np.arange(N)
    return np.exp(-2j * np.pi * np.outer(n, n) / N) / np.sqrt(N)


def to_angular(Y: np.ndarray, U: np.ndarray) -> np.ndarray:
    """N x M x T spatial tensor -> M x T x N angular observations (Y_m^T U*)."""
    return np.einsum("nmt,nb->mtb", Y, U.conj())


def to_spatial(A: np.ndarray, U: np.ndarray) -> np.ndarray:
    """M x Ka x N angular channel -> N x M x Ka spatial channel (A_m U^T)."""
    return np.einsum("mkb,nb->nmk", A, U)


def build_ce_problem(Y, S, Xhat, active_set_hat) -> CeProblem:
    active = np.asarray(active_set_hat, dtype=int)
    if active.size == 0:
        raise EmptyActiveSet("no detected UEs to estimate channels for")
    N, M, T = Y.shape
    if S.shape[0] != M or Xhat.shape[1] != T:
        raise ShapeMismatch("Y, S and Xhat disagree on M or T")
    Phi = S[:, active][:, None, :] * Xhat[active].T[None, :, :]
    U = dft_matrix(N)
    return CeProblem(Phi=Phi, R=to_angular(Y, U), U=U)


def ls_fallback(problem: CeProblem, sigma2: float) -> CeResult:
    """Ridge least squares per subcarrier, regularized by the noise variance."""
    Phi, R = problem.Phi, problem.R
    Ka = Phi.shape[2]
    ridge = max(float(sigma2), RIDGE_FLOOR)
    PhiH = np.conj(np.swapaxes(Phi, 1, 2))
    G = PhiH @ Phi + ridge * np.eye(Ka)
    try:
        A = np.linalg.solve(G, PhiH @ R)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from None
    if not np.all(np.isfinite(A)):
        raise SingularSystem("non-finite ridge solution")
    return CeResult(H_equ_hat=to_spatial(A, problem.U), A_hat=A, sigma2_hat=float(sigma2))


def _bg_posterior(C, D, lam, psi):
    """Bernoulli / zero-mean complex Gaussian posterior under C = a + CN(0, D)."""
    with np.errstate(divide="ignore"):
        llr = np.log(D / (D + psi)) + np.abs(C) ** 2 * (1 / D - 1 / (D + psi))
        pi = 1 / (1 + np.exp(np.clip(-llr - np.log(lam) + np.log1p(-lam), -700, 700)))
    mu = psi * C / (psi + D)
    nu = psi * D / (psi + D)
    a = pi * mu
    v = np.maximum(pi * (np.abs(mu) ** 2 + nu) - np.abs(a) ** 2, 0.0)
    return pi, mu, nu, a, v


def gmmv_amp(
    problem: CeProblem,
    N_gmmv: int = 50,
    sigma2_init: float | None = None,
    rho_damp: float = 0.3,
    sparsity_init: float = 0.1,
    tol: float = 1e-6,
    force: bool = False,
) -> CeResult:
    """Angular-domain channel recovery with EM-learned Bernoulli-Gaussian prior.

    Raises Overdetermined when T >= Ka unless ``force`` is set; the caller is
    expected to use ``ls_fallback`` in that regime.
    """
    Phi, R, U = problem.Phi, problem.R, problem.U
    M, T, Ka = Phi.shape
    N = R.shape[2]
    if problem.overdetermined and not force:
        raise Overdetermined(f"T={T} >= Ka={Ka}")

    energy = float(np.sum(np.abs(R) ** 2))
    if energy == 0.0:
        A = np.zeros((M, Ka, N), dtype=complex)
        return CeResult(H_equ_hat=to_spatial(A, U), A_hat=A,
                        sigma2_hat=max(sigma2_init or 0.0, SIGMA2_FLOOR))

    Phi2 = np.abs(Phi) ** 2
    PhiH = np.conj(np.swapaxes(Phi, 1, 2))
    sigma2 = sigma2_init if sigma2_init is not None else energy / ((100 + 1) * M * T * N)
    sigma2 = max(float(sigma2), SIGMA2_FLOOR)
    lam = np.full((Ka, N), sparsity_init)
    phi_energy = float(np.sum(Phi2)) * N
    psi_scalar = max(energy - M * T * N * sigma2, 0.1 * energy) / (phi_energy * sparsity_init)
    psi = np.full((Ka, N), psi_scalar)

    A = np.zeros((M, Ka, N), dtype=complex)
    v = np.broadcast_to(lam * psi, (M, Ka, N)).copy()
    V = Phi2 @ v
    Z = R.copy()  # no Onsager correction on the first pass
    it = 0
    for it in range(1, N_gmmv + 1):
        V_new = Phi2 @ v
        Z_new = Phi @ A - V_new * (R - Z) / (sigma2 + V)
        V = np.maximum(rho_damp * V + (1 - rho_damp) * V_new, VAR_FLOOR)
        Z = rho_damp * Z + (1 - rho_damp) * Z_new

        w = 1 / (sigma2 + V)
        D = np.maximum(1 / (np.swapaxes(Phi2, 1, 2) @ w), VAR_FLOOR)
        C = A + D * (PhiH @ ((R - Z) * w))

        pi, mu, nu, A_new, v = _bg_posterior(C, D, lam, psi)

        # EM: support shared over subcarriers, slab variance per (UE, bin)
        lam = np.clip(pi.mean(axis=0), 1e-6, 1 - 1e-6)
        weight = pi.sum(axis=0)
        psi = np.where(weight > 1e-9,
                       (pi * (np.abs(mu) ** 2 + nu)).sum(axis=0) / np.maximum(weight, 1e-9),
                       psi)
        psi = np.maximum(psi, VAR_FLOOR)
        resid = np.abs(R - Z) ** 2 / np.abs(1 + V / sigma2) ** 2
        sigma2 = max(float(np.mean(resid + sigma2 * V / (sigma2 + V))), SIGMA2_FLOOR)

        if not (np.all(np.isfinite(A_new)) and np.isfinite(sigma2)):
            raise NumericalDivergence("ce_gmmv", it)
        delta = np.max(np.abs(A_new - A))
        A = A_new
        if delta < tol * max(1.0, np.max(np.abs(A))):
            break

    return CeResult(H_equ_hat=to_spatial(A, U), A_hat=A, sigma2_hat=sigma2, iterations=it)

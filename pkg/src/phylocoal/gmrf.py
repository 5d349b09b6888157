"""Intrinsic first-order random-walk prior on the log population trajectory.

The precision matrix is the tridiagonal graph Laplacian of the chain of
grid midpoints weighted by inverse spacings, with the first diagonal entry
modified so the matrix has zero row sums (one flat null direction). Its
spectral pair is computed once and cached for the exact rotation sub-flow
of the split Hamiltonian integrator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import CholeskyFailure, DimensionMismatch, NonAscending

DEFAULT_JITTER = 1e-6
DEFAULT_ALPHA = 0.01
DEFAULT_BETA = 0.01


@dataclass(frozen=True)
class PriorConfig:
    """Gamma(shape alpha, rate beta) hyperprior on the precision kappa."""

    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")


@dataclass(frozen=True)
class PrecisionOperator:
    """Tridiagonal intrinsic precision with cached eigendecomposition."""

    index_times: np.ndarray
    jitter: float
    diag: np.ndarray = field(init=False)
    off: np.ndarray = field(init=False)
    eigvecs: np.ndarray = field(init=False)  # orthogonal Q
    eigvals: np.ndarray = field(init=False)  # nonnegative, ascending

    def __post_init__(self):
        x = np.asarray(self.index_times, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise NonAscending("need at least 2 index times")
        dx = np.diff(x)
        if np.any(dx <= 0):
            raise NonAscending("index times must be strictly ascending")
        inv = 1.0 / dx
        diag = np.zeros(x.size)
        diag[:-1] += inv
        diag[1:] += inv
        off = -inv
        dense = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
        vals, vecs = np.linalg.eigh(dense)
        vals = np.clip(vals, 0.0, None)
        object.__setattr__(self, "index_times", x)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "off", off)
        object.__setattr__(self, "eigvals", vals)
        object.__setattr__(self, "eigvecs", vecs)

    @property
    def dim(self) -> int:
        return self.index_times.size

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def matvec(self, f: np.ndarray) -> np.ndarray:
        """Unjittered precision times f, O(dim)."""
        f = self._check(f)
        out = self.diag * f
        out[:-1] += self.off * f[1:]
        out[1:] += self.off * f[:-1]
        return out

    def _check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.dim,):
            raise DimensionMismatch(f"expected length {self.dim}, got {f.shape}")
        return f


def build_precision(midpoints: np.ndarray, jitter: float = DEFAULT_JITTER) -> PrecisionOperator:
    return PrecisionOperator(index_times=np.asarray(midpoints, dtype=float), jitter=jitter)


def quadratic_form(prec: PrecisionOperator, f: np.ndarray) -> float:
    """f' C^-1 f via the increment identity, O(dim); unjittered."""
    f = prec._check(f)
    steps = np.diff(f)
    return float(steps @ (steps / np.diff(prec.index_times)))


def tau_exponent(prec: PrecisionOperator, cfg: PriorConfig) -> float:
    """Coefficient of tau in the log prior of (f, tau).

    The Gamma(alpha, beta) prior on kappa and the scaled random-walk prior
    on f give a joint density proportional to kappa^(dim/2 + alpha - 1);
    expressing it in tau = log kappa adds one power of kappa from the
    change of variables, keeping every kernel (whether it moves tau or
    kappa) invariant for the same posterior.
    """
    return prec.dim / 2.0 + cfg.alpha


def log_prior_theta(
    prec: PrecisionOperator, cfg: PriorConfig, f: np.ndarray, tau: float
) -> float:
    """Joint log prior of (f, tau) up to a constant (fixed at zero)."""
    a = tau_exponent(prec, cfg)
    q = quadratic_form(prec, f)
    return a * tau - (q / 2.0 + cfg.beta) * np.exp(tau)


def grad_log_prior_theta(
    prec: PrecisionOperator, cfg: PriorConfig, f: np.ndarray, tau: float
) -> np.ndarray:
    """Gradient of the joint log prior, stacked as (d/df, d/dtau)."""
    a = tau_exponent(prec, cfg)
    q = quadratic_form(prec, f)
    et = np.exp(tau)
    gf = -prec.matvec(f) * et
    gt = a - (q / 2.0 + cfg.beta) * et
    return np.concatenate([gf, [gt]])


def sample_kappa_conditional(
    prec: PrecisionOperator, cfg: PriorConfig, f: np.ndarray, rng: np.random.Generator
) -> float:
    """Gibbs draw from the conjugate Gamma full conditional of kappa."""
    shape = cfg.alpha + prec.dim / 2.0
    rate = cfg.beta + quadratic_form(prec, f) / 2.0
    return float(rng.gamma(shape, 1.0 / rate))


# -- banded Cholesky machinery ----------------------------------------------

def banded_upper(diag: np.ndarray, off: np.ndarray) -> np.ndarray:
    """Symmetric tridiagonal matrix in scipy upper-banded storage."""
    ab = np.zeros((2, diag.size))
    ab[0, 1:] = off
    ab[1, :] = diag
    return ab


def chol_banded(ab: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.cholesky_banded(ab, lower=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise CholeskyFailure(str(exc)) from None


def chol_logdet(cb: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(cb[1, :])))


def chol_sample(cb: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw N(0, K^-1) by solving U x = z for the banded factor U."""
    z = rng.standard_normal(cb.shape[1])
    return scipy.linalg.solve_banded((0, 1), cb, z)


def chol_solve(cb: np.ndarray, b: np.ndarray) -> np.ndarray:
    return scipy.linalg.cho_solve_banded((cb, False), b)


def sample_prior_f(
    prec: PrecisionOperator, kappa: float, rng: np.random.Generator
) -> np.ndarray:
    """Draw f ~ N(0, (1/kappa) * (C^-1 + jitter*I)^-1), O(dim)."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    ab = banded_upper(kappa * (prec.diag + prec.jitter), kappa * prec.off)
    return chol_sample(chol_banded(ab), rng)

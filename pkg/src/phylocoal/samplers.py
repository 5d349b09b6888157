"""MCMC transition kernels over theta = (f, tau) and chain orchestration.

Five kernels share one target interface: plain HMC, split HMC with the
exact rotation sub-flow for the Gaussian prior term, MALA (HMC with one
leapfrog step), adaptive MALA preconditioned by the observed Fisher
information with a multiplicative precision proposal, and elliptical slice
sampling of f alternated with a conjugate Gibbs draw of the precision.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import gmrf, gridlik
from .errors import NonFiniteEnergy, SliceStall
from .gmrf import PrecisionOperator, PriorConfig
from .gridlik import SuffStats

MAX_CONSECUTIVE_DIVERGENCES = 100
SLICE_BRACKET_TOL = 1e-12


class CoalescentTarget:
    """Posterior of (f, tau) given grid sufficient statistics.

    theta stacks the D-1 log population values followed by tau = log kappa.
    """

    def __init__(self, stats: SuffStats, precision: PrecisionOperator, prior: PriorConfig):
        if stats.n_cells != precision.dim:
            raise ValueError("sufficient statistics and precision dimension disagree")
        self.stats = stats
        self.precision = precision
        self.prior = prior
        self.dim = stats.n_cells + 1

    def split(self, theta: np.ndarray) -> tuple[np.ndarray, float]:
        theta = np.asarray(theta, dtype=float)
        return theta[:-1], float(theta[-1])

    def log_likelihood(self, theta: np.ndarray, include_constant: bool = True) -> float:
        f, _ = self.split(theta)
        return gridlik.log_likelihood(self.stats, f, include_constant=include_constant)

    def log_posterior(self, theta: np.ndarray) -> float:
        f, tau = self.split(theta)
        return gridlik.log_likelihood(self.stats, f) + gmrf.log_prior_theta(
            self.precision, self.prior, f, tau
        )

    def grad(self, theta: np.ndarray) -> np.ndarray:
        f, tau = self.split(theta)
        g = gmrf.grad_log_prior_theta(self.precision, self.prior, f, tau)
        g[:-1] += gridlik.score(self.stats, f)
        return g

    def default_init(self) -> np.ndarray:
        # constant log of the crude pooled rate estimate; tau = 0
        w = float(np.sum(self.stats.per_cell_w))
        y = max(float(np.sum(self.stats.per_cell_y)), 1.0)
        theta = np.full(self.dim, math.log(max(w / y, 1e-12)))
        theta[-1] = 0.0
        return theta


@dataclass
class SamplerConfig:
    epsilon: float = 0.1
    leap_steps: int = 20
    kappa_step_c: float = 1.1  # aMALA multiplicative step bound, > 1
    target_accept: float = 0.70

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.leap_steps < 1:
            raise ValueError("need at least one leapfrog step")
        if self.kappa_step_c <= 1:
            raise ValueError("kappa_step_c must exceed 1")


@dataclass
class ChainState:
    theta: np.ndarray
    log_posterior: float
    grad: np.ndarray | None = None


def make_state(target, theta: np.ndarray, with_grad: bool = True) -> ChainState:
    theta = np.asarray(theta, dtype=float)
    return ChainState(
        theta=theta,
        log_posterior=target.log_posterior(theta),
        grad=target.grad(theta) if with_grad else None,
    )


# -- HMC / MALA --------------------------------------------------------------

class HMCKernel:
    """Metropolis-adjusted leapfrog trajectories with identity mass matrix."""

    name = "hmc"
    tunable = True

    def __init__(self, target, cfg: SamplerConfig):
        self.target = target
        self.cfg = cfg

    @property
    def epsilon(self) -> float:
        return self.cfg.epsilon

    @epsilon.setter
    def epsilon(self, value: float) -> None:
        self.cfg.epsilon = value

    def init_state(self, theta: np.ndarray) -> ChainState:
        return make_state(self.target, theta)

    def step(self, state: ChainState, rng: np.random.Generator):
        eps = self.cfg.epsilon
        p0 = rng.standard_normal(self.target.dim)
        h0 = -state.log_posterior + 0.5 * float(p0 @ p0)

        theta = state.theta.copy()
        grad = state.grad.copy()
        p = p0 + 0.5 * eps * grad
        diverged = False
        for step in range(self.cfg.leap_steps):
            theta = theta + eps * p
            grad = self.target.grad(theta)
            if not np.all(np.isfinite(grad)):
                diverged = True
                break
            half = 0.5 if step == self.cfg.leap_steps - 1 else 1.0
            p = p + half * eps * grad

        if diverged:
            return state, False, math.inf
        logpost = self.target.log_posterior(theta)
        h1 = -logpost + 0.5 * float(p @ p)
        delta_h = h1 - h0
        if not math.isfinite(delta_h):
            return state, False, math.inf
        if math.log(rng.uniform()) < -delta_h:
            return ChainState(theta, logpost, grad), True, delta_h
        return state, False, delta_h


class MALAKernel(HMCKernel):
    """HMC restricted to a single leapfrog step."""

    name = "mala"

    def __init__(self, target, cfg: SamplerConfig):
        super().__init__(target, replace(cfg, leap_steps=1))


# -- split HMC ---------------------------------------------------------------

def rotate_subflow(
    g: np.ndarray, u: np.ndarray, omega: np.ndarray, t: float
) -> tuple[np.ndarray, np.ndarray]:
    """Exact flow of g'' = -omega^2 g over time t, per eigendirection.

    sin(omega t)/omega is evaluated via sinc so the omega -> 0 limit
    (uniform drift of the flat direction) is exact.
    """
    phase = omega * t
    cos_p = np.cos(phase)
    sin_over = t * np.sinc(phase / np.pi)  # = sin(omega t) / omega
    g_new = cos_p * g + sin_over * u
    u_new = -omega * np.sin(phase) * g + cos_p * u
    return g_new, u_new


class SplitHMCKernel(HMCKernel):
    """Split Hamiltonian integrator: exact rotation of the prior quadratic.

    The Gaussian-prior sub-dynamics of (f, p) at fixed tau is solved in the
    cached eigenbasis of the precision, while the likelihood and tau terms
    are handled by symmetric half-kicks and half-drifts.
    """

    name = "splithmc"

    def __init__(self, target: CoalescentTarget, cfg: SamplerConfig):
        super().__init__(target, cfg)
        prec = target.precision
        self._eigvals = prec.eigvals
        self._eigvecs = prec.eigvecs

    def step(self, state: ChainState, rng: np.random.Generator):
        target = self.target
        eps = self.cfg.epsilon
        prior = target.prior
        a = gmrf.tau_exponent(target.precision, prior)
        steps = self.cfg.leap_steps

        f, tau = target.split(state.theta)
        p = rng.standard_normal(target.dim)
        h0 = -state.log_posterior + 0.5 * float(p @ p)

        # The field and its momentum live in the precision's eigenbasis for
        # the whole trajectory; because the basis is orthonormal the kinetic
        # energy u.u + p_tau^2 is unchanged, and only the likelihood kicks
        # need the field back in the original coordinates.  Adjacent closing
        # and opening half-kicks act at the same position, so they are fused
        # into a single full kick with one score evaluation.
        q = self._eigvecs
        lam = self._eigvals
        g = q.T @ f
        u = q.T @ p[:-1]
        p_tau = p[-1]

        s = gridlik.score(target.stats, f)
        u += 0.5 * eps * (q.T @ s)
        p_tau += 0.5 * eps * (a - prior.beta * math.exp(tau))
        diverged = False
        for step in range(steps):
            # half-kick on tau's momentum from the quadratic coupling
            quad = float(lam @ (g * g))
            p_tau -= 0.25 * eps * quad * math.exp(tau)
            # half-drift of tau, exact rotation at the new tau, half-drift
            tau += 0.5 * eps * p_tau
            omega = np.sqrt(lam * math.exp(tau))
            g, u = rotate_subflow(g, u, omega, eps)
            tau += 0.5 * eps * p_tau
            quad = float(lam @ (g * g))
            p_tau -= 0.25 * eps * quad * math.exp(tau)
            # likelihood / non-quadratic prior kick at the new position
            f = q @ g
            if not (np.all(np.isfinite(f)) and math.isfinite(tau)):
                diverged = True
                break
            s = gridlik.score(target.stats, f)
            half = 0.5 if step == steps - 1 else 1.0
            u += half * eps * (q.T @ s)
            p_tau += half * eps * (a - prior.beta * math.exp(tau))
            if not (np.all(np.isfinite(u)) and math.isfinite(p_tau)):
                diverged = True
                break

        if diverged:
            return state, False, math.inf
        theta = np.concatenate([f, [tau]])
        logpost = target.log_posterior(theta)
        h1 = -logpost + 0.5 * (float(u @ u) + p_tau * p_tau)
        delta_h = h1 - h0
        if not math.isfinite(delta_h):
            return state, False, math.inf
        if math.log(rng.uniform()) < -delta_h:
            return ChainState(theta, logpost, target.grad(theta)), True, delta_h
        return state, False, delta_h


# -- adaptive MALA -----------------------------------------------------------

def draw_precision_scale(c: float, rng: np.random.Generator) -> float:
    """Multiplicative step z on [1/c, c] with density proportional to (z+1)/z.

    This is the symmetric proposal kappa* = kappa z, p(kappa*|kappa)
    proportional to (kappa* + kappa)/(kappa* kappa) restricted to
    [kappa/c, kappa c]; symmetry makes the proposal cancel from the
    acceptance ratio.
    """
    if c <= 1:
        raise ValueError("c must exceed 1")
    bound = 1.0 + c  # max of 1 + 1/z on [1/c, c]
    while True:
        z = rng.uniform(1.0 / c, c)
        if rng.uniform() * bound < 1.0 + 1.0 / z:
            return z


class AMALAKernel:
    """Langevin proposal preconditioned by the observed Fisher information.

    Operates on (f, kappa): kappa moves by a bounded multiplicative factor,
    f by one preconditioned leapfrog step with metric
    G(f, kappa) = kappa * C_in^-1 + diag(w * exp(-f)), and the pair is
    accepted jointly.
    """

    name = "amala"
    tunable = True

    def __init__(self, target: CoalescentTarget, cfg: SamplerConfig):
        self.target = target
        self.cfg = cfg

    @property
    def epsilon(self) -> float:
        return self.cfg.epsilon

    @epsilon.setter
    def epsilon(self, value: float) -> None:
        self.cfg.epsilon = value

    def init_state(self, theta: np.ndarray) -> ChainState:
        return make_state(self.target, theta, with_grad=False)

    def _potential(self, f: np.ndarray, kappa: float) -> float:
        # negative log posterior in (f, kappa) coordinates; one power of
        # kappa lower than the tau parameterization (change of variables)
        target = self.target
        a = gmrf.tau_exponent(target.precision, target.prior) - 1.0
        q = gmrf.quadratic_form(target.precision, f)
        lik = gridlik.log_likelihood(target.stats, f)
        return -lik - a * math.log(kappa) + kappa * (q / 2.0 + target.prior.beta)

    def _grad_f(self, f: np.ndarray, kappa: float) -> np.ndarray:
        target = self.target
        return -gridlik.score(target.stats, f) + kappa * target.precision.matvec(f)

    def _metric_chol(self, f: np.ndarray, kappa: float) -> np.ndarray:
        prec = self.target.precision
        diag = kappa * prec.diag + self.target.stats.per_cell_w * np.exp(-f)
        return gmrf.chol_banded(gmrf.banded_upper(diag, kappa * prec.off))

    @staticmethod
    def _metric_quad(cb: np.ndarray, p: np.ndarray) -> float:
        # p' G p through the banded factor: G = U'U, so p'Gp = |U p|^2
        up = cb[1, :] * p
        up[:-1] += cb[0, 1:] * p[1:]
        return float(up @ up)

    def step(self, state: ChainState, rng: np.random.Generator):
        target = self.target
        eps = self.cfg.epsilon
        f, tau = target.split(state.theta)
        kappa = math.exp(tau)

        z = draw_precision_scale(self.cfg.kappa_step_c, rng)
        kappa_star = kappa * z

        cb_fwd = self._metric_chol(f, kappa_star)
        p = gmrf.chol_sample(cb_fwd, rng)
        log_fwd = -0.5 * self._metric_quad(cb_fwd, p) + 0.5 * gmrf.chol_logdet(cb_fwd)

        p = p - 0.5 * eps * gmrf.chol_solve(cb_fwd, self._grad_f(f, kappa_star))
        f_star = f + eps * p
        if not np.all(np.isfinite(f_star)):
            return state, False
        cb_rev = self._metric_chol(f_star, kappa)
        p = p - 0.5 * eps * gmrf.chol_solve(cb_rev, self._grad_f(f_star, kappa))
        log_rev = -0.5 * self._metric_quad(cb_rev, p) + 0.5 * gmrf.chol_logdet(cb_rev)

        log_alpha = (
            -self._potential(f_star, kappa_star)
            + self._potential(f, kappa)
            - log_fwd
            + log_rev
        )
        if not math.isfinite(log_alpha):
            return state, False
        if math.log(rng.uniform()) < log_alpha:
            theta = np.concatenate([f_star, [math.log(kappa_star)]])
            return ChainState(theta, target.log_posterior(theta)), True
        return state, False


# -- elliptical slice + Gibbs ------------------------------------------------

class EllipticalGibbsKernel:
    """Alternate an elliptical slice move of f given kappa with the conjugate
    Gibbs draw of kappa given f. Rejection free; acceptance reported as 1."""

    name = "ess2"
    tunable = False

    def __init__(self, target: CoalescentTarget, cfg: SamplerConfig | None = None):
        self.target = target
        self.cfg = cfg if cfg is not None else SamplerConfig()
        self.stalls = 0

    def init_state(self, theta: np.ndarray) -> ChainState:
        return make_state(self.target, theta, with_grad=False)

    def step(self, state: ChainState, rng: np.random.Generator):
        target = self.target
        f, tau = target.split(state.theta)
        kappa = math.exp(tau)

        def loglik(fv: np.ndarray) -> float:
            return gridlik.log_likelihood(target.stats, fv)

        nu = gmrf.sample_prior_f(target.precision, kappa, rng)
        threshold = loglik(f) + math.log(rng.uniform())
        phi = rng.uniform(0.0, 2.0 * math.pi)
        lo, hi = phi - 2.0 * math.pi, phi
        f_new = f
        while True:
            candidate = f * math.cos(phi) + nu * math.sin(phi)
            if loglik(candidate) > threshold:
                f_new = candidate
                break
            if phi < 0:
                lo = phi
            else:
                hi = phi
            if hi - lo < SLICE_BRACKET_TOL:
                self.stalls += 1
                break
            phi = rng.uniform(lo, hi)

        kappa_new = gmrf.sample_kappa_conditional(target.precision, target.prior, f_new, rng)
        theta = np.concatenate([f_new, [math.log(kappa_new)]])
        return ChainState(theta, target.log_posterior(theta)), True


KERNELS = {
    "hmc": HMCKernel,
    "splithmc": SplitHMCKernel,
    "mala": MALAKernel,
    "amala": AMALAKernel,
    "ess2": EllipticalGibbsKernel,
}


# -- chain driver ------------------------------------------------------------

@dataclass
class Trace:
    """Post-burn-in samples with per-iteration bookkeeping."""

    sampler: str
    thetas: np.ndarray  # rows: retained iterations; columns: f_1..f_{D-1}, tau
    loglik: np.ndarray  # constant-on log-likelihood
    logpost: np.ndarray
    accept: np.ndarray
    cpu_s: np.ndarray  # cumulative seconds, nondecreasing
    iter_index: np.ndarray  # 1-based kernel application index
    iters: int
    burnin: int
    thin: int
    cpu_burnin: float
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.thetas.shape[0]

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accept))


def run_chain(
    kernel,
    init: np.ndarray,
    iters: int,
    burnin: int = 0,
    thin: int = 1,
    rng: np.random.Generator | None = None,
    clock=time.process_time,
    tune: bool = True,
    seed: int | None = None,
) -> Trace:
    """Apply the kernel `iters` times, retaining post-burn-in states.

    Step size is tuned multiplicatively toward the configured acceptance
    rate during burn-in (gradient kernels only) and frozen afterwards.
    Aborts after MAX_CONSECUTIVE_DIVERGENCES successive divergences.
    """
    if not (iters > burnin >= 0):
        raise ValueError("need iters > burnin >= 0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)

    state = kernel.init_state(np.asarray(init, dtype=float))
    target = kernel.target
    tgt_accept = kernel.cfg.target_accept

    thetas, loglik, logpost, accepts, cpus, idx = [], [], [], [], [], []
    consecutive_div = 0
    cpu0 = clock()
    cpu_burnin = 0.0
    for it in range(1, iters + 1):
        out = kernel.step(state, rng)
        state, accepted = out[0], out[1]
        delta_h = out[2] if len(out) > 2 else 0.0
        if math.isinf(delta_h):
            consecutive_div += 1
            if consecutive_div >= MAX_CONSECUTIVE_DIVERGENCES:
                raise NonFiniteEnergy(
                    f"{consecutive_div} consecutive divergent trajectories"
                )
        else:
            consecutive_div = 0

        if it <= burnin:
            if tune and getattr(kernel, "tunable", False):
                # decaying adaptation so epsilon settles before it is frozen
                scale = 1.0 / max(1.0, it / 50.0)
                factor = 1.2 ** (((1.0 if accepted else 0.0) - tgt_accept) * scale)
                kernel.epsilon = max(kernel.epsilon * factor, 1e-8)
            if it == burnin:
                cpu_burnin = clock() - cpu0
            continue
        if (it - burnin - 1) % thin == 0:
            thetas.append(state.theta.copy())
            loglik.append(target.log_likelihood(state.theta))
            logpost.append(state.log_posterior)
            accepts.append(bool(accepted))
            cpus.append(clock() - cpu0)
            idx.append(it)

    return Trace(
        sampler=kernel.name,
        thetas=np.asarray(thetas),
        loglik=np.asarray(loglik),
        logpost=np.asarray(logpost),
        accept=np.asarray(accepts, dtype=bool),
        cpu_s=np.asarray(cpus),
        iter_index=np.asarray(idx, dtype=int),
        iters=iters,
        burnin=burnin,
        thin=thin,
        cpu_burnin=cpu_burnin,
        seed=seed,
    )


# -- trace files -------------------------------------------------------------

def meta_path(trace_path: str) -> str:
    base = trace_path[:-4] if trace_path.endswith(".csv") else trace_path
    return base + ".meta"


def write_trace(path: str, trace: Trace, meta: dict | None = None) -> None:
    n_f = trace.dim - 1
    header = "iter,accept,loglik,logpost,cpu_s,tau," + ",".join(
        f"f_{i}" for i in range(1, n_f + 1)
    )
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for r in range(trace.n_rows):
            row = [
                str(int(trace.iter_index[r])),
                str(int(trace.accept[r])),
                repr(float(trace.loglik[r])),
                repr(float(trace.logpost[r])),
                repr(float(trace.cpu_s[r])),
                repr(float(trace.thetas[r, -1])),
            ]
            row += [repr(float(v)) for v in trace.thetas[r, :-1]]
            fh.write(",".join(row) + "\n")

    merged = {
        "sampler": trace.sampler,
        "iters": trace.iters,
        "burnin": trace.burnin,
        "thin": trace.thin,
        "cpu_burnin": repr(float(trace.cpu_burnin)),
        "seed": trace.seed if trace.seed is not None else "",
    }
    if meta:
        merged.update(meta)
    with open(meta_path(path), "w") as fh:
        for key, value in merged.items():
            fh.write(f"{key}={value}\n")


def read_meta(path: str) -> dict:
    meta = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or "=" not in line:
                continue
            key, _, value = line.partition("=")
            meta[key] = value
    return meta


def read_trace(path: str) -> Trace:
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    names = list(data.dtype.names)
    f_cols = [n for n in names if n.startswith("f_")]
    thetas = np.column_stack([data[c] for c in f_cols] + [data["tau"]])
    meta = {}
    try:
        meta = read_meta(meta_path(path))
    except OSError:
        pass
    iters = int(meta.get("iters", data["iter"][-1]))
    burnin = int(meta.get("burnin", 0))
    thin = int(meta.get("thin", 1))
    seed = meta.get("seed") or None
    return Trace(
        sampler=meta.get("sampler", "unknown"),
        thetas=thetas,
        loglik=np.asarray(data["loglik"], dtype=float),
        logpost=np.asarray(data["logpost"], dtype=float),
        accept=np.asarray(data["accept"], dtype=bool),
        cpu_s=np.asarray(data["cpu_s"], dtype=float),
        iter_index=np.asarray(data["iter"], dtype=int),
        iters=iters,
        burnin=burnin,
        thin=thin,
        cpu_burnin=float(meta.get("cpu_burnin", 0.0)),
        seed=int(seed) if seed is not None else None,
        meta=meta,
    )

"""Optimization loops over sequential black-box problems.

Three optimizers share the sklearn estimator surface (``fit`` a problem,
read the fitted search distribution and the run trace from trailing
underscore attributes, compose via ``get_params``/``clone``):

``BdtgOptimizer``
    The practical loop.  Each iteration samples a batch from the per-step
    Gaussians, scores it through the problem's hidden dynamics, min-max
    normalizes the cumulative scores, then moves each step mean against the
    score-weighted perturbations (step size ``alpha / sqrt(d)``) and
    rescales each precision through its own square root with the whitened
    score-weighted second moment (step size ``alpha / d``).

``CasboOptimizer``
    The schedule-driven variant with a growing mean step size, a decaying
    shrink-to-origin term in the mean update, and a precision update kept
    inside a feasibility band so the covariance spectral norm provably
    decays like ``t^{-3/2}``.

``EvolutionStrategyOptimizer``
    A fixed-variance baseline acting on the concatenated trajectory,
    ignoring the sequential structure.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, check_positive_scalar, check_rng
from .linalg import EIG_FLOOR, sym_eigh
from .policy import (
    GaussianStepParam,
    PolicyChain,
    init_chain,
    mean_trajectory,
    sample_batch,
    save_chain,
)
from .problems import rollout_batch, rollout_trajectory
from .scores import (
    ScoreTable,
    build_preconditioner,
    estimate_mean_gradient,
    sum_step_gradients,
)

__all__ = [
    "bdtg_update_mean",
    "bdtg_update_precision",
    "bdtg_iterate",
    "CasboSchedules",
    "project_preconditioner",
    "casbo_iterate",
    "es_iterate",
    "TraceRecord",
    "RunTrace",
    "BdtgOptimizer",
    "CasboOptimizer",
    "EvolutionStrategyOptimizer",
    "build_optimizer",
    "run_optimizer",
]


# ---------------------------------------------------------------------------
# single-iteration update rules


def bdtg_update_mean(mu, x_draws, weights, step_size):
    """One normalized mean update for a single step.

    ``mu - (step_size / N) * sum_j weights[j] * (x_j - mu)``: candidates with
    large (bad) normalized cumulative score push the mean away from
    themselves.  All-zero weights leave the mean bit-identical.
    """
    mu = np.asarray(mu, dtype=float)
    x_draws = np.asarray(x_draws, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if x_draws.ndim != 2 or x_draws.shape[1] != mu.shape[0]:
        raise ValueError(
            f"draws shape {x_draws.shape} does not match mean length {mu.shape[0]}"
        )
    if weights.shape != (x_draws.shape[0],):
        raise ValueError(
            f"weights shape {weights.shape} does not match {x_draws.shape[0]} draws"
        )
    return mu - (step_size / x_draws.shape[0]) * (weights @ (x_draws - mu))


def bdtg_update_precision(step, precond, kappa, step_size):
    """One normalized precision update for a single step.

    Returns the new precision ``P^{1/2} ((1 - kappa * b) I + b * W) P^{1/2}``
    where ``W`` is the whitened score-weighted second moment and ``b`` the
    step size.  Requires ``kappa * step_size < 1`` so the shrink factor stays
    positive; otherwise raises advising a smaller step size.  A degenerate
    step (``kappa == 0`` with a zero ``W``) returns the precision unchanged.
    """
    precond = np.asarray(precond, dtype=float)
    shrink = 1.0 - kappa * step_size
    if shrink <= 0.0:
        raise ValueError(
            f"covariance step size too large: kappa * step_size = "
            f"{kappa * step_size:.6g} >= 1 would break positive definiteness; "
            f"decrease the step-size scale alpha"
        )
    if kappa == 0.0 and not precond.any():
        return step.precision
    inner = shrink * np.eye(step.d) + step_size * precond
    new_prec = step.prec_sqrt @ inner @ step.prec_sqrt
    return 0.5 * (new_prec + new_prec.T)


def bdtg_iterate(chain, problem, alpha, n_samples, rng, eig_floor=EIG_FLOOR,
                 score_eps=None):
    """Run one full practical iteration, mutating the chain in place.

    Samples a batch, scores it, normalizes the cumulative scores, then
    applies the mean update with step size ``alpha / sqrt(d)`` and the
    precision update with ``alpha / d`` for every step.  Steps whose score
    row is degenerate are skipped entirely (an exact no-op).

    Returns ``(batch, table)`` for trace bookkeeping.
    """
    batch = sample_batch(chain, n_samples, rng)
    raw = rollout_batch(problem, batch)
    table = ScoreTable.build(raw, score_eps)
    d = chain.d
    beta_mean = alpha / np.sqrt(d)
    beta_prec = alpha / d
    for k, step in enumerate(chain.steps):
        if table.degenerate[k]:
            continue
        weights = table.normalized[k]
        new_mu = bdtg_update_mean(step.mu, batch.X[k], weights, beta_mean)
        precond = build_preconditioner(batch.Z[k], weights)
        new_prec = bdtg_update_precision(step, precond, table.kappa[k], beta_prec)
        chain.steps[k] = GaussianStepParam.from_precision(new_mu, new_prec, eig_floor)
    return batch, table


@dataclass
class CasboSchedules:
    """Iteration schedules for the covariance-adaptive loop.

    With base scalars ``beta``, ``alpha``, ``nu`` (all positive), iteration
    ``t`` (1-based) uses a linearly growing mean step ``t * beta``, a
    precision step ``sqrt(t+1) * alpha``, a decaying shrink coefficient
    ``alpha * nu / (beta * sqrt(t+1))`` and unit precision carry-over.
    These choices make the feasibility band of the precision update
    non-empty at every iteration: its lower edge coefficient
    ``nu - beta_{t+1} * gamma_t / alpha_t`` vanishes identically and its
    width ``(beta_{t+1} / beta_t - omega_t) / alpha_t = 1 / (t * alpha_t)``
    stays positive.
    """

    beta: float = 1.0
    alpha: float = 1.0
    nu: float = 1.0

    def __post_init__(self):
        self.beta = check_positive_scalar(self.beta, "beta")
        self.alpha = check_positive_scalar(self.alpha, "alpha")
        self.nu = check_positive_scalar(self.nu, "nu")

    def beta_t(self, t):
        return t * self.beta

    def alpha_t(self, t):
        return np.sqrt(t + 1.0) * self.alpha

    def gamma_t(self, t):
        return self.alpha * self.nu / (self.beta * np.sqrt(t + 1.0))

    def omega_t(self, t):
        return 1.0

    def band_width(self, t):
        """Upper-edge margin ``1 / (t * alpha_t)`` of the feasibility band."""
        return 1.0 / (t * self.alpha_t(t))

    @property
    def max_init_tau(self):
        """Largest isotropic initialization scale the spectral-decay bound allows."""
        return 3.0 / (5.0 * self.alpha * self.nu)


def project_preconditioner(w_mat, step, t, schedules):
    """Clamp the raw preconditioner into the feasibility band.

    Given the score-weighted second moment ``w_mat`` (PSD up to -1e-10), the
    scaled part ``D = c1 * w_mat`` with
    ``c1 = min(1, 1 / (t * alpha_t * lambda_max(w_mat)))`` satisfies
    ``0 <= D <= (1 / (t * alpha_t)) I``.  Returns

        ``H = nu * cov + D``   and   ``G = nu * I + P^{1/2} D P^{1/2}``,

    so ``H`` sits inside the band ``[nu * cov, nu * cov + width * I]`` and
    the whitened update matrix ``G`` dominates ``nu * I``, both by
    construction.
    """
    w, v = sym_eigh(w_mat, name="preconditioner")
    if w[0] < -1e-10:
        raise ValueError(
            f"preconditioner is not positive semi-definite: "
            f"min eigenvalue {w[0]:.3e}"
        )
    w = np.maximum(w, 0.0)
    lam_max = w[-1]
    width = schedules.band_width(t)
    c1 = 1.0 if lam_max <= 0.0 else min(1.0, width / lam_max)
    scaled = (v * (c1 * w)) @ v.T
    scaled = 0.5 * (scaled + scaled.T)
    nu = schedules.nu
    h_mat = nu * step.cov + scaled
    g_hat = nu * np.eye(step.d) + step.prec_sqrt @ scaled @ step.prec_sqrt
    return 0.5 * (h_mat + h_mat.T), 0.5 * (g_hat + g_hat.T)


def casbo_iterate(chain, problem, schedules, n_samples, t, rng,
                  eig_floor=EIG_FLOOR, score_eps=None):
    """Run one schedule-driven iteration, mutating the chain in place.

    On top of the sampled batch this evaluates the current mean trajectory
    once (the baseline subtracted inside the gradient estimator, costing K
    extra queries).  Each step mean moves along the covariance-weighted sum
    of its per-sub-objective gradient estimates plus the shrink-to-origin
    term; each precision accumulates the band-projected whitened update.

    Returns ``(batch, table, baseline)``.
    """
    batch = sample_batch(chain, n_samples, rng)
    raw = rollout_batch(problem, batch)
    baseline = rollout_trajectory(problem, mean_trajectory(chain))
    table = ScoreTable.build(raw, score_eps)
    K = chain.K
    beta_t = schedules.beta_t(t)
    alpha_t = schedules.alpha_t(t)
    gamma_t = schedules.gamma_t(t)
    omega_t = schedules.omega_t(t)
    for k, step in enumerate(chain.steps):
        grads = [
            estimate_mean_gradient(chain, batch, raw, baseline, i, k)
            for i in range(k, K)
        ]
        g_sum = sum_step_gradients(grads)
        w_mat = build_preconditioner(batch.Z[k], table.normalized[k])
        _, g_hat = project_preconditioner(w_mat, step, t, schedules)
        new_mu = step.mu - beta_t * (step.cov @ (gamma_t * step.mu + g_sum))
        new_prec = omega_t * step.precision + alpha_t * g_hat
        chain.steps[k] = GaussianStepParam.from_precision(new_mu, new_prec, eig_floor)
    return batch, table, baseline


def es_iterate(mu, sigma, problem, n_samples, step_size, rng):
    """One fixed-variance evolution-strategy step on the flat trajectory.

    Perturbs the concatenated variable ``mu`` (length K*d) with isotropic
    noise of scale ``sigma``, scores each perturbation by the total rollout
    objective, and applies
    ``mu - step_size / (N * sigma) * sum_i eps_i * total_i``.

    Returns ``(new_mu, totals)``.
    """
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    mu = np.asarray(mu, dtype=float)
    K, d = problem.dims()
    if mu.shape != (K * d,):
        raise ValueError(f"mu must have length K*d = {K * d}, got {mu.shape}")
    rng = check_rng(rng)
    eps = rng.standard_normal((n_samples, K * d))
    totals = np.array([
        rollout_trajectory(problem, (mu + sigma * eps[i]).reshape(K, d)).sum()
        for i in range(n_samples)
    ])
    new_mu = mu - (step_size / (n_samples * sigma)) * (totals @ eps)
    return new_mu, totals


# ---------------------------------------------------------------------------
# run traces


CSV_HEADER = (
    "iter,mean_cum_obj,best_sampled_cum_obj,min_eig_sigma,max_eig_sigma,"
    "queries,wallclock_ms"
)


@dataclass
class TraceRecord:
    """State of one optimization iteration.

    ``eig_lo`` / ``eig_hi`` hold the per-step covariance eigenvalue extremes;
    ``queries`` counts cumulative scoring calls charged to the algorithm
    (reporting rollouts are free); ``wallclock_ms`` is elapsed time since the
    start of the run and is the only non-deterministic field.
    """

    t: int
    mean_cum_obj: float
    best_sampled_cum_obj: float
    eig_lo: np.ndarray
    eig_hi: np.ndarray
    queries: int
    wallclock_ms: float

    def csv_row(self):
        return ",".join([
            str(self.t),
            repr(float(self.mean_cum_obj)),
            repr(float(self.best_sampled_cum_obj)),
            repr(float(np.min(self.eig_lo))),
            repr(float(np.max(self.eig_hi))),
            str(int(self.queries)),
            repr(float(self.wallclock_ms)),
        ])


@dataclass
class RunTrace:
    """Per-iteration records of one optimization run."""

    records: list = field(default_factory=list)

    def append(self, record):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def write_csv(self, path):
        """Write the documented CSV schema with LF line endings."""
        with open(path, "w", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            for rec in self.records:
                fh.write(rec.csv_row() + "\n")


# ---------------------------------------------------------------------------
# estimator classes


class _SequentialOptimizerBase(BaseEstimator):
    """Shared fitting scaffold: trace records, checkpoints, accessors."""

    def _checkpoint(self, chain, t):
        every = getattr(self, "checkpoint_every", None)
        path = getattr(self, "checkpoint_path", None)
        if every and path and t % every == 0:
            save_chain(chain, str(path).format(t=t))

    @staticmethod
    def _resolve_mu0(mu0, K, d):
        if mu0 is None:
            return np.zeros((K, d))
        mu0 = np.asarray(mu0, dtype=float)
        if mu0.ndim == 0:
            return np.full((K, d), float(mu0))
        if mu0.shape == (d,):
            return np.tile(mu0, (K, 1))
        if mu0.shape == (K, d):
            return mu0.copy()
        raise ValueError(
            f"mu0 must be a scalar, a ({d},) vector, or a ({K}, {d}) array, "
            f"got shape {mu0.shape}"
        )

    @staticmethod
    def _chain_record(t, chain, mean_val, best_val, queries, ms):
        lo, hi = zip(*(s.cov_eig_bounds for s in chain.steps))
        return TraceRecord(
            t=t,
            mean_cum_obj=float(mean_val),
            best_sampled_cum_obj=float(best_val),
            eig_lo=np.array(lo),
            eig_hi=np.array(hi),
            queries=queries,
            wallclock_ms=ms,
        )

    def predict(self):
        """Return the optimized mean trajectory as a (K, d) array."""
        check_is_fitted(self, "chain_")
        return mean_trajectory(self.chain_)

    def sample(self, n_samples, random_state=None):
        """Draw candidate trajectories from the fitted search distribution."""
        check_is_fitted(self, "chain_")
        return sample_batch(self.chain_, n_samples, check_rng(random_state))


def _check_common(est):
    n_samples = check_positive_int(est.n_samples, "n_samples")
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    if int(est.n_iterations) < 0:
        raise ValueError(f"n_iterations must be >= 0, got {est.n_iterations}")
    return n_samples, int(est.n_iterations)


class BdtgOptimizer(_SequentialOptimizerBase):
    """Practical covariance-adaptive optimizer with normalized updates.

    Parameters
    ----------
    alpha : float, default 10.0
        Step-size scale; the mean update uses ``alpha / sqrt(d)`` and the
        precision update ``alpha / d``.
    n_samples : int, default 32
        Batch size per iteration (at least 2).
    n_iterations : int, default 100
        Number of iterations run by :meth:`fit`.
    tau : float, default 1.0
        Initial covariance scale: every step starts at ``N(mu0, tau * I)``.
    mu0 : None, scalar, (d,) or (K, d) array, default None
        Initial step means; ``None`` means zeros.
    random_state : None, int, or numpy Generator
        Seed of the sampling stream; fixed seeds give bit-identical runs.
    eig_floor : float
        Spectrum clamp applied after every covariance refresh.
    checkpoint_every, checkpoint_path :
        When both set, the chain snapshot is written to
        ``checkpoint_path.format(t=t)`` every ``checkpoint_every`` iterations.

    Attributes
    ----------
    chain_ : PolicyChain
        Fitted per-step search distributions.
    trace_ : RunTrace
        One record per iteration plus the initial state.
    n_queries_ : int
        Scoring calls charged to the run (``K * n_samples`` per iteration).
    """

    def __init__(self, alpha=10.0, n_samples=32, n_iterations=100, tau=1.0,
                 mu0=None, random_state=None, eig_floor=EIG_FLOOR,
                 checkpoint_every=None, checkpoint_path=None):
        self.alpha = alpha
        self.n_samples = n_samples
        self.n_iterations = n_iterations
        self.tau = tau
        self.mu0 = mu0
        self.random_state = random_state
        self.eig_floor = eig_floor
        self.checkpoint_every = checkpoint_every
        self.checkpoint_path = checkpoint_path

    def fit(self, problem):
        alpha = check_positive_scalar(self.alpha, "alpha")
        n_samples, n_iterations = _check_common(self)
        K, d = problem.dims()
        rng = check_rng(self.random_state)
        chain = init_chain(K, d, self.tau, self.eig_floor)
        mu0 = self._resolve_mu0(self.mu0, K, d)
        for k, step in enumerate(chain.steps):
            step.mu = mu0[k]

        trace = RunTrace()
        start = time.perf_counter()
        queries = 0
        mean_val = rollout_trajectory(problem, mean_trajectory(chain)).sum()
        trace.append(self._chain_record(0, chain, mean_val, mean_val, 0, 0.0))
        for t in range(1, n_iterations + 1):
            _, table = bdtg_iterate(
                chain, problem, alpha, n_samples, rng, self.eig_floor
            )
            queries += K * n_samples
            mean_val = rollout_trajectory(problem, mean_trajectory(chain)).sum()
            best = float(np.min(table.cumulative[0]))
            ms = (time.perf_counter() - start) * 1e3
            trace.append(self._chain_record(t, chain, mean_val, best, queries, ms))
            self._checkpoint(chain, t)

        self.chain_ = chain
        self.trace_ = trace
        self.n_queries_ = queries
        return self


class CasboOptimizer(_SequentialOptimizerBase):
    """Schedule-driven covariance-adaptive optimizer with banded updates.

    Parameters
    ----------
    beta, alpha, nu : float
        Base scalars of the iteration schedules (see
        :class:`CasboSchedules`).
    tau : float or None, default None
        Initial covariance scale.  The spectral-decay guarantee requires
        ``tau <= 3 / (5 * alpha * nu)``; ``None`` picks exactly that bound,
        values above it raise at fit time.
    n_samples, n_iterations, mu0, random_state, eig_floor,
    checkpoint_every, checkpoint_path :
        As in :class:`BdtgOptimizer`.

    Attributes
    ----------
    chain_, trace_, n_queries_ :
        As in :class:`BdtgOptimizer`; each iteration charges
        ``K * n_samples + K`` queries (the extra K pays for the baseline
        evaluation on the mean trajectory).
    """

    def __init__(self, beta=1.0, alpha=1.0, nu=1.0, tau=None, n_samples=32,
                 n_iterations=100, mu0=None, random_state=None,
                 eig_floor=EIG_FLOOR, checkpoint_every=None,
                 checkpoint_path=None):
        self.beta = beta
        self.alpha = alpha
        self.nu = nu
        self.tau = tau
        self.n_samples = n_samples
        self.n_iterations = n_iterations
        self.mu0 = mu0
        self.random_state = random_state
        self.eig_floor = eig_floor
        self.checkpoint_every = checkpoint_every
        self.checkpoint_path = checkpoint_path

    def fit(self, problem):
        schedules = CasboSchedules(self.beta, self.alpha, self.nu)
        n_samples, n_iterations = _check_common(self)
        tau = schedules.max_init_tau if self.tau is None else float(self.tau)
        if tau > schedules.max_init_tau * (1.0 + 1e-12):
            raise ValueError(
                f"tau = {tau:.6g} violates the initialization bound "
                f"tau <= 3 / (5 * alpha * nu) = {schedules.max_init_tau:.6g} "
                f"required for the covariance decay guarantee"
            )
        K, d = problem.dims()
        rng = check_rng(self.random_state)
        chain = init_chain(K, d, tau, self.eig_floor)
        mu0 = self._resolve_mu0(self.mu0, K, d)
        for k, step in enumerate(chain.steps):
            step.mu = mu0[k]

        trace = RunTrace()
        start = time.perf_counter()
        queries = 0
        mean_val = rollout_trajectory(problem, mean_trajectory(chain)).sum()
        trace.append(self._chain_record(0, chain, mean_val, mean_val, 0, 0.0))
        for t in range(1, n_iterations + 1):
            _, table, _ = casbo_iterate(
                chain, problem, schedules, n_samples, t, rng, self.eig_floor
            )
            queries += K * n_samples + K
            mean_val = rollout_trajectory(problem, mean_trajectory(chain)).sum()
            best = float(np.min(table.cumulative[0]))
            ms = (time.perf_counter() - start) * 1e3
            trace.append(self._chain_record(t, chain, mean_val, best, queries, ms))
            self._checkpoint(chain, t)

        self.schedules_ = schedules
        self.chain_ = chain
        self.trace_ = trace
        self.n_queries_ = queries
        return self


class EvolutionStrategyOptimizer(_SequentialOptimizerBase):
    """Fixed-variance baseline on the concatenated trajectory variable.

    Treats the whole trajectory as one flat vector in ``R^{K*d}``, ignoring
    the sequential structure, and runs plain isotropic-Gaussian smoothing
    gradient descent with step size ``beta`` and perturbation scale
    ``sigma``.

    Attributes
    ----------
    mean_ : ndarray of shape (K * d,)
        Fitted flat mean.
    chain_ : PolicyChain
        The same mean viewed as per-step Gaussians with covariance
        ``sigma^2 * I`` (for serialization and the shared accessors).
    trace_, n_queries_ :
        As in :class:`BdtgOptimizer` (``K * n_samples`` queries per
        iteration).
    """

    def __init__(self, beta=0.1, sigma=1.0, n_samples=32, n_iterations=100,
                 mu0=None, random_state=None, checkpoint_every=None,
                 checkpoint_path=None):
        self.beta = beta
        self.sigma = sigma
        self.n_samples = n_samples
        self.n_iterations = n_iterations
        self.mu0 = mu0
        self.random_state = random_state
        self.checkpoint_every = checkpoint_every
        self.checkpoint_path = checkpoint_path

    def _as_chain(self, mu, K, d):
        steps = []
        for k in range(K):
            step = GaussianStepParam.isotropic(d, float(self.sigma) ** 2)
            step.mu = mu.reshape(K, d)[k].copy()
            steps.append(step)
        return PolicyChain(steps)

    def fit(self, problem):
        beta = check_positive_scalar(self.beta, "beta")
        sigma = check_positive_scalar(self.sigma, "sigma")
        n_samples, n_iterations = _check_common(self)
        K, d = problem.dims()
        rng = check_rng(self.random_state)
        mu = self._resolve_mu0(self.mu0, K, d).ravel()

        trace = RunTrace()
        start = time.perf_counter()
        queries = 0
        chain = self._as_chain(mu, K, d)
        mean_val = rollout_trajectory(problem, mu.reshape(K, d)).sum()
        trace.append(self._chain_record(0, chain, mean_val, mean_val, 0, 0.0))
        for t in range(1, n_iterations + 1):
            mu, totals = es_iterate(mu, sigma, problem, n_samples, beta, rng)
            queries += K * n_samples
            chain = self._as_chain(mu, K, d)
            mean_val = rollout_trajectory(problem, mu.reshape(K, d)).sum()
            ms = (time.perf_counter() - start) * 1e3
            trace.append(
                self._chain_record(t, chain, mean_val, float(np.min(totals)),
                                   queries, ms)
            )
            self._checkpoint(chain, t)

        self.mean_ = mu
        self.chain_ = chain
        self.trace_ = trace
        self.n_queries_ = queries
        return self


_MODES = {
    "bdtg": BdtgOptimizer,
    "casbo": CasboOptimizer,
    "es": EvolutionStrategyOptimizer,
}


def build_optimizer(mode, config=None):
    """Instantiate the optimizer class for a mode name with given params."""
    try:
        cls = _MODES[mode]
    except KeyError:
        raise ValueError(f"unknown mode {mode!r}; expected one of {sorted(_MODES)}")
    return cls(**(config or {}))


def run_optimizer(mode, problem, config=None, seed=None):
    """Run one optimization and return its trace.

    ``config`` maps estimator parameters (mode-specific); ``seed`` overrides
    ``random_state``.  Identical seeds yield identical traces apart from the
    wall-clock column.
    """
    est = build_optimizer(mode, config)
    if seed is not None:
        est.set_params(random_state=seed)
    est.fit(problem)
    return est.trace_

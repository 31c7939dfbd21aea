"""Per-step Gaussian search distributions and trajectory sampling.

A sequential search distribution is a chain of K independent Gaussians, one
per rollout step.  The precision matrix is the canonical stored state (the
covariance update rules act on it directly); the covariance and both
symmetric square roots are caches re-derived from a single eigendecomposition
whenever the precision changes.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int, check_positive_scalar, check_rng
from .linalg import EIG_FLOOR, sym_eigh

__all__ = [
    "GaussianStepParam",
    "PolicyChain",
    "TrajectoryBatch",
    "init_chain",
    "sample_batch",
    "mean_trajectory",
    "save_chain",
    "load_chain",
]


@dataclass
class GaussianStepParam:
    """Parameters of one step's Gaussian, with cached factorizations.

    ``precision`` is canonical; ``cov``, ``cov_sqrt`` and ``prec_sqrt`` are
    derived from the same clamped spectrum, so products like
    ``prec_sqrt @ cov @ prec_sqrt`` are clean up to rounding.  The spectrum
    of the precision is clamped into ``[eig_floor, 1/eig_floor]``, which
    bounds the covariance spectrum into the same band.
    """

    mu: np.ndarray
    precision: np.ndarray
    cov: np.ndarray
    cov_sqrt: np.ndarray
    prec_sqrt: np.ndarray
    precision_eigs: np.ndarray  # ascending clamped spectrum of the precision
    eig_floor: float = EIG_FLOOR

    @property
    def d(self):
        return self.mu.shape[0]

    @property
    def cov_eig_bounds(self):
        """(smallest, largest) covariance eigenvalue from the cached spectrum."""
        return 1.0 / self.precision_eigs[-1], 1.0 / self.precision_eigs[0]

    @classmethod
    def _from_spectrum(cls, mu, w, v, eig_floor):
        w = np.clip(w, eig_floor, 1.0 / eig_floor)

        def rebuild(vals):
            a = (v * vals) @ v.T
            return 0.5 * (a + a.T)

        return cls(
            mu=np.asarray(mu, dtype=float).copy(),
            precision=rebuild(w),
            cov=rebuild(1.0 / w),
            cov_sqrt=rebuild(1.0 / np.sqrt(w)),
            prec_sqrt=rebuild(np.sqrt(w)),
            precision_eigs=w,
            eig_floor=eig_floor,
        )

    @classmethod
    def from_precision(cls, mu, precision, eig_floor=EIG_FLOOR):
        """Build a step parameter from its precision matrix."""
        mu = np.asarray(mu, dtype=float)
        precision = np.asarray(precision, dtype=float)
        if precision.shape != (mu.shape[0], mu.shape[0]):
            raise ValueError(
                f"precision shape {precision.shape} does not match mean "
                f"length {mu.shape[0]}"
            )
        w, v = sym_eigh(precision, name="precision")
        return cls._from_spectrum(mu, w, v, eig_floor)

    @classmethod
    def from_cov(cls, mu, cov, eig_floor=EIG_FLOOR):
        """Build a step parameter from its covariance matrix."""
        mu = np.asarray(mu, dtype=float)
        cov = np.asarray(cov, dtype=float)
        if cov.shape != (mu.shape[0], mu.shape[0]):
            raise ValueError(
                f"covariance shape {cov.shape} does not match mean "
                f"length {mu.shape[0]}"
            )
        w, v = sym_eigh(cov, name="covariance")
        w = np.clip(w, eig_floor, 1.0 / eig_floor)
        return cls._from_spectrum(mu, 1.0 / w, v, eig_floor)

    @classmethod
    def isotropic(cls, d, tau, eig_floor=EIG_FLOOR):
        """Zero-mean step with covariance ``tau * I``, built exactly."""
        tau = max(float(tau), eig_floor)
        eye = np.eye(d)
        return cls(
            mu=np.zeros(d),
            precision=(1.0 / tau) * eye,
            cov=tau * eye,
            cov_sqrt=np.sqrt(tau) * eye,
            prec_sqrt=(1.0 / np.sqrt(tau)) * eye,
            precision_eigs=np.full(d, 1.0 / tau),
            eig_floor=eig_floor,
        )


@dataclass
class PolicyChain:
    """Ordered list of per-step Gaussian parameters sharing one dimension."""

    steps: list = field(default_factory=list)

    def __post_init__(self):
        if not self.steps:
            raise ValueError("a policy chain needs at least one step")
        d = self.steps[0].d
        for i, s in enumerate(self.steps):
            if s.d != d:
                raise ValueError(
                    f"step {i} has dimension {s.d}, expected {d} for all steps"
                )

    @property
    def K(self):
        return len(self.steps)

    @property
    def d(self):
        return self.steps[0].d


@dataclass
class TrajectoryBatch:
    """Standard-normal draws and the candidates they produced.

    ``X[k, j] = mu_k + cov_sqrt_k @ Z[k, j]`` exactly as computed during
    sampling; the draws are retained so downstream whitened statistics use
    the very ``z`` that generated each candidate instead of re-deriving it.
    """

    Z: np.ndarray  # (K, N, d)
    X: np.ndarray  # (K, N, d)

    @property
    def K(self):
        return self.Z.shape[0]

    @property
    def N(self):
        return self.Z.shape[1]

    @property
    def d(self):
        return self.Z.shape[2]


def init_chain(K, d, tau=1.0, eig_floor=EIG_FLOOR):
    """Chain of ``K`` zero-mean steps with covariance ``tau * I`` each."""
    K = check_positive_int(K, "K")
    d = check_positive_int(d, "d")
    tau = check_positive_scalar(tau, "tau")
    return PolicyChain([GaussianStepParam.isotropic(d, tau, eig_floor) for _ in range(K)])


def sample_batch(chain, n_samples, rng):
    """Draw ``n_samples`` i.i.d. trajectories from the chain.

    Parameters
    ----------
    chain : PolicyChain
    n_samples : int
        Batch size, at least 2 (score normalization needs two distinct
        candidates per step).
    rng : numpy.random.Generator or int seed

    Returns
    -------
    TrajectoryBatch
        With the same seed, the returned arrays are bit-identical between
        calls.
    """
    n_samples = check_positive_int(n_samples, "n_samples")
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    rng = check_rng(rng)
    K, d = chain.K, chain.d
    Z = rng.standard_normal((K, n_samples, d))
    X = np.empty_like(Z)
    for k, step in enumerate(chain.steps):
        # cov_sqrt is symmetric, so the row-vector form z @ S equals S @ z.
        X[k] = step.mu + Z[k] @ step.cov_sqrt
    return TrajectoryBatch(Z=Z, X=X)


def mean_trajectory(chain):
    """Stack the per-step means into a (K, d) array."""
    return np.stack([step.mu for step in chain.steps])


def save_chain(chain, path):
    """Write a chain as a flat text snapshot.

    One line per step: the 1-based step index, the ``d`` mean entries, then
    the ``d * d`` covariance entries in row-major order, all as decimal
    floating point with full round-trip precision.
    """
    with open(path, "w", newline="\n") as fh:
        for k, step in enumerate(chain.steps, start=1):
            entries = [str(k)]
            entries += [repr(float(x)) for x in step.mu]
            entries += [repr(float(x)) for x in step.cov.ravel()]
            fh.write(" ".join(entries) + "\n")


def load_chain(path, eig_floor=EIG_FLOOR):
    """Read a chain snapshot written by :func:`save_chain`."""
    steps = []
    with open(path) as fh:
        for expected_k, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            k = int(fields[0])
            if k != expected_k:
                raise ValueError(
                    f"snapshot steps out of order: expected {expected_k}, got {k}"
                )
            values = np.array([float(x) for x in fields[1:]])
            # length = d + d^2  =>  d = (sqrt(1 + 4 n) - 1) / 2
            d = int(round((np.sqrt(1.0 + 4.0 * values.size) - 1.0) / 2.0))
            if d + d * d != values.size:
                raise ValueError(
                    f"line {expected_k} has {values.size} values, not of the "
                    f"form d + d^2"
                )
            mu = values[:d]
            cov = values[d:].reshape(d, d)
            steps.append(GaussianStepParam.from_cov(mu, cov, eig_floor))
    if not steps:
        raise ValueError(f"no steps found in snapshot {path!r}")
    return PolicyChain(steps)

"""Sequential black-box problems with hidden transition dynamics.

A sequential problem scores a trajectory of K decision vectors one step at a
time.  The transition dynamics and scoring function stay behind the
``advance`` interface: the optimizer only ever sees the per-step scores.

Two families are provided: the classic scaled test functions driven through
a hidden rotation-plus-drift state, and a toy denoising rollout where a
frozen contraction plays the role of a pre-trained per-step predictor.
"""

import abc
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int, check_rng, check_vector

__all__ = [
    "rastrigin10",
    "l1_ellipsoid",
    "levy",
    "SequentialProblem",
    "RolloutState",
    "RotationProblem",
    "ToyDiffusionModel",
    "ToyDiffusionProblem",
    "SquaredDistance",
    "make_rotation_problem",
    "make_toy_diffusion_problem",
    "default_toy_diffusion_model",
    "rollout_batch",
    "rollout_trajectory",
    "make_problem",
    "PROBLEM_REGISTRY",
]


def _axis_exponents(d, scale):
    # Per-coordinate exponent (i - 1) / (d - 1) for i = 1..d; a single
    # coordinate uses exponent 0 so the d = 1 case stays defined.
    if d == 1:
        return np.zeros(1)
    return scale * np.arange(d) / (d - 1)


def rastrigin10(x):
    """Rastrigin with per-axis scaling growing from 1 to 10.

    ``10 d + sum_i (10^((i-1)/(d-1)) x_i)^2 - 10 cos(2 pi 10^((i-1)/(d-1)) x_i)``,
    minimized at the origin with value 0.
    """
    x = check_vector(x, name="x")
    s = 10.0 ** _axis_exponents(x.shape[0], 1.0) * x
    return float(10.0 * x.shape[0] + np.sum(s * s - 10.0 * np.cos(2.0 * np.pi * s)))


def l1_ellipsoid(x):
    """Absolute-value ellipsoid with axis weights from 1 to 10^6.

    ``sum_i 10^(6 (i-1)/(d-1)) |x_i|``, minimized at the origin with value 0.
    """
    x = check_vector(x, name="x")
    return float(np.sum(10.0 ** _axis_exponents(x.shape[0], 6.0) * np.abs(x)))


def levy(x):
    """Levy function, minimized at the all-ones vector with value 0."""
    x = check_vector(x, name="x")
    w = 1.0 + (x - 1.0) / 4.0
    head = np.sin(np.pi * w[0]) ** 2
    tail = (w[-1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * w[-1]) ** 2)
    mid = w[:-1]
    body = np.sum((mid - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * mid + 1.0) ** 2))
    return float(head + body + tail)


@dataclass
class RolloutState:
    """Progress of one rollout: steps consumed so far and the hidden point."""

    k: int
    y: np.ndarray


class SequentialProblem(abc.ABC):
    """Rollout interface hiding transition dynamics behind ``advance``.

    ``advance`` must be called exactly K times per rollout, in step order.
    Identical input sequences yield identical score sequences.  Problems are
    immutable after construction; each rollout owns its state, so
    ``evaluation_safe`` problems may score many rollouts concurrently.
    """

    evaluation_safe = True

    @abc.abstractmethod
    def dims(self):
        """Return ``(K, d)``: number of steps and decision dimension."""

    def begin_rollout(self):
        K, d = self.dims()
        return RolloutState(k=0, y=np.zeros(d))

    def advance(self, state, x_k):
        """Consume the next decision vector and return its step score."""
        K, d = self.dims()
        if state.k >= K:
            raise ValueError(f"rollout already consumed all {K} steps")
        x_k = check_vector(x_k, d=d, name="x_k")
        score = self._step(state, x_k)
        state.k += 1
        return float(score)

    @abc.abstractmethod
    def _step(self, state, x_k):
        """Update ``state.y`` in place and return the step score."""


def _orthonormal_columns(a):
    """Deterministic column-by-column Gram-Schmidt orthonormalization.

    Two passes of projection per column keep the columns orthogonal to
    machine precision; the diagonal of the implied triangular factor is the
    column norm, hence positive, which pins the sign convention and makes
    the result bit-reproducible.
    """
    a = np.array(a, dtype=float)
    d = a.shape[0]
    q = np.zeros_like(a)
    for j in range(d):
        v = a[:, j].copy()
        for _ in range(2):
            for i in range(j):
                v -= (q[:, i] @ v) * q[:, i]
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            raise np.linalg.LinAlgError(
                f"column {j} became numerically dependent during "
                f"orthonormalization"
            )
        q[:, j] = v / norm
    return q


class RotationProblem(SequentialProblem):
    """Scaled test function driven through a hidden rotating state.

    The hidden point evolves as ``y_k = Q (y_{k-1} + x_k) + sqrt(k+1) * 1``
    from ``y_0 = 0``, where Q is a seeded random rotation; the step score is
    the base function at ``y_k``.  The rotation mixes the whole trajectory
    prefix into every later score while the drift keeps pushing the state
    away from the minimizer.
    """

    def __init__(self, base_fn, K, d, seed):
        K = check_positive_int(K, "K")
        if d < 2:
            raise ValueError(f"rotation dynamics need d >= 2, got {d}")
        d = check_positive_int(d, "d")
        self._base_fn = base_fn
        self._K = K
        self._d = d
        rng = check_rng(seed)
        self.rotation = _orthonormal_columns(rng.standard_normal((d, d)))

    def dims(self):
        return self._K, self._d

    def _step(self, state, x_k):
        bias = np.sqrt(state.k + 2.0)  # step index k+1 (1-based) gives sqrt(k+1)
        state.y = self.rotation @ (state.y + x_k) + bias
        return self._base_fn(state.y)


@dataclass
class ToyDiffusionModel:
    """Frozen ingredients of a toy denoising rollout.

    ``contraction[k]`` is the per-step linear predictor applied to the
    running state, ``solver_coeffs[k] > 0`` scales the injected decision
    vector, and ``terminal_target`` scores the resulting state.
    """

    contraction: np.ndarray
    solver_coeffs: np.ndarray
    terminal_target: object

    def __post_init__(self):
        self.contraction = np.asarray(self.contraction, dtype=float)
        self.solver_coeffs = np.asarray(self.solver_coeffs, dtype=float)
        if self.contraction.ndim != 1 or self.solver_coeffs.ndim != 1:
            raise ValueError("contraction and solver_coeffs must be 1-D")
        if self.contraction.shape != self.solver_coeffs.shape:
            raise ValueError(
                f"coefficient count mismatch: {self.contraction.shape[0]} "
                f"contractions vs {self.solver_coeffs.shape[0]} solver "
                f"coefficients"
            )
        if np.any(self.solver_coeffs <= 0.0):
            raise ValueError("all solver coefficients must be positive")

    @property
    def K(self):
        return self.contraction.shape[0]


class ToyDiffusionProblem(SequentialProblem):
    """Rollout ``s_k = a_k * s_{k-1} + sigma_k * x_k`` scored by a target.

    The decision vector plays the role of the sampled perturbation injected
    at each denoising step; the optimizer supplies it.
    """

    def __init__(self, model, K, d):
        K = check_positive_int(K, "K")
        d = check_positive_int(d, "d")
        if model.K != K:
            raise ValueError(
                f"model provides {model.K} per-step coefficients, problem "
                f"needs {K}"
            )
        self.model = model
        self._K = K
        self._d = d

    def dims(self):
        return self._K, self._d

    def _step(self, state, x_k):
        m = self.model
        state.y = m.contraction[state.k] * state.y + m.solver_coeffs[state.k] * x_k
        return m.terminal_target(state.y)


@dataclass
class SquaredDistance:
    """Callable ``x -> ||x - target||^2`` (picklable scoring function)."""

    target: np.ndarray

    def __call__(self, x):
        diff = np.asarray(x, dtype=float) - self.target
        return float(diff @ diff)


def make_rotation_problem(base_fn, K, d, seed):
    """Wrap a test function in the hidden rotation dynamics."""
    return RotationProblem(base_fn, K, d, seed)


def make_toy_diffusion_problem(model, K, d):
    """Wrap a toy denoising model as a sequential problem."""
    return ToyDiffusionProblem(model, K, d)


def default_toy_diffusion_model(K, d, seed):
    """Desk-scale toy model: contraction 0.9, decaying injection scale.

    The injected scale is ``0.5 * 0.8^(K-k)`` at step k, and the terminal
    score is the squared distance to a seeded random target point.
    """
    K = check_positive_int(K, "K")
    d = check_positive_int(d, "d")
    rng = check_rng(seed)
    target = rng.standard_normal(d)
    k = np.arange(1, K + 1)
    return ToyDiffusionModel(
        contraction=np.full(K, 0.9),
        solver_coeffs=0.5 * 0.8 ** (K - k),
        terminal_target=SquaredDistance(target),
    )


def rollout_batch(problem, batch):
    """Score every candidate trajectory of a batch.

    Parameters
    ----------
    problem : SequentialProblem
    batch : TrajectoryBatch or ndarray of shape (K, N, d)

    Returns
    -------
    ndarray of shape (K, N)
        ``F[k, j]`` is the step-k score of candidate j, obtained from N
        independent rollouts.  Exactly ``K * N`` scoring calls are issued.
    """
    X = np.asarray(getattr(batch, "X", batch), dtype=float)
    K, d = problem.dims()
    if X.ndim != 3 or X.shape[0] != K or X.shape[2] != d:
        raise ValueError(
            f"batch shape {X.shape} does not match problem dims (K={K}, d={d})"
        )
    n = X.shape[1]
    scores = np.empty((K, n))
    for j in range(n):
        state = problem.begin_rollout()
        for k in range(K):
            scores[k, j] = problem.advance(state, X[k, j])
    return scores


def rollout_trajectory(problem, trajectory):
    """Score a single (K, d) trajectory; the N = 1 path of rollout_batch."""
    trajectory = np.asarray(trajectory, dtype=float)
    K, d = problem.dims()
    if trajectory.shape != (K, d):
        raise ValueError(
            f"trajectory shape {trajectory.shape} does not match problem "
            f"dims ({K}, {d})"
        )
    state = problem.begin_rollout()
    return np.array([problem.advance(state, trajectory[k]) for k in range(K)])


def _make_rotation_builder(base_fn):
    def build(K, d, seed):
        return make_rotation_problem(base_fn, K, d, seed)

    return build


def _build_toy_diffusion(K, d, seed):
    return make_toy_diffusion_problem(default_toy_diffusion_model(K, d, seed), K, d)


PROBLEM_REGISTRY = {
    "rastrigin10": _make_rotation_builder(rastrigin10),
    "l1ellipsoid": _make_rotation_builder(l1_ellipsoid),
    "levy": _make_rotation_builder(levy),
    "toy-diffusion": _build_toy_diffusion,
}


def make_problem(name, K, d, seed):
    """Build a registered problem by name with ``(K, d, seed)``."""
    try:
        builder = PROBLEM_REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(PROBLEM_REGISTRY))
        raise ValueError(f"unknown problem {name!r}; known problems: {known}")
    return builder(K, d, seed)

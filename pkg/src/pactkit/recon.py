"""Back-projection and compressed-sensing iterative reconstruction.

The iterative solver minimizes

    F(x) = ||K x - y||_2^2 + alpha*||x||_1 + beta*TV(x)

by proximal gradient descent: the smooth part (data term plus an
epsilon-smoothed TV) is stepped explicitly, the L1 term is handled exactly
by soft thresholding. Each iteration costs one forward and one adjoint
product, the dominant operations.
"""

import math
from dataclasses import dataclass
from time import perf_counter
from typing import NamedTuple

import numpy as np

from . import kernels
from .forward import MeasurementMatrix, SensorData, _adjoint_matvec, _matvec
from .geometry import ImageField, ImagingGrid

__all__ = [
    "ReconConfig",
    "ReconResult",
    "ObjectiveParts",
    "back_project",
    "data_gradient",
    "soft_threshold",
    "tv_value",
    "tv_gradient",
    "objective",
    "estimate_lipschitz",
    "iterative_reconstruct",
    "resolve_regularization",
    "resolve_config",
    "rmse",
    "psnr",
]

# Consecutive objective increases before the solver declares divergence.
DIVERGENCE_STREAK = 5


@dataclass(frozen=True)
class ReconConfig:
    """Solver settings.

    alpha/beta default to None, meaning they are calibrated from the data at
    solve time: alpha = 1e-3 * max|2 K^H y| and beta = 1e-2 * alpha. step may
    be a number or "auto" (1 / (2*sigma_max^2 + beta*8/tv_epsilon), with
    sigma_max^2 from power iteration). tolerance 0 runs all iterations.
    """

    alpha: float | None = None
    beta: float | None = None
    iterations: int = 90
    step: float | str = "auto"
    tv_epsilon: float = 1e-3
    nonneg: bool = False
    tolerance: float = 0.0

    def __post_init__(self):
        if self.alpha is not None and self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta is not None and self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not self.tv_epsilon > 0:
            raise ValueError(f"tv_epsilon must be > 0, got {self.tv_epsilon}")
        if self.tolerance < 0:
            raise ValueError(f"tolerance must be >= 0, got {self.tolerance}")
        if isinstance(self.step, str):
            if self.step != "auto":
                raise ValueError(f"step must be a positive number or 'auto', got {self.step!r}")
        elif not self.step > 0:
            raise ValueError(f"step must be > 0, got {self.step}")


@dataclass(frozen=True)
class ReconResult:
    image: ImageField
    objective_history: np.ndarray
    data_term_history: np.ndarray
    l1_history: np.ndarray
    tv_history: np.ndarray
    iterations_run: int
    stopped_by: str  # "max_iterations" | "tolerance" | "divergence"
    alpha_used: float = 0.0
    beta_used: float = 0.0
    step_used: float = 0.0


class ObjectiveParts(NamedTuple):
    total: float
    data: float
    l1: float
    tv: float


def _grid_of(K: MeasurementMatrix, grid: ImagingGrid | None) -> ImagingGrid:
    g = grid or K.grid
    if g is None:
        raise ValueError("matrix carries no grid; pass grid= explicitly")
    if g.size != K.cols:
        raise ValueError(f"grid {g.nx}x{g.ny} does not match matrix columns {K.cols}")
    return g


def _check_pair(K: MeasurementMatrix, y: SensorData):
    if K.domain != y.domain:
        raise ValueError(f"domain mismatch: matrix is {K.domain}, signal is {y.domain}")
    if K.rows != y.length:
        raise ValueError(f"matrix has {K.rows} rows but signal has {y.length} values")


def back_project(
    K: MeasurementMatrix,
    y: SensorData,
    grid: ImagingGrid | None = None,
    pool: kernels.WorkerPool | None = None,
) -> ImageField:
    """Adjoint (delay-and-sum) reconstruction, rescaled to unit peak.

    Returns Re(K^H y) with its maximum absolute value normalized to 1;
    an all-zero signal comes back as an all-zero image (no rescale).
    """
    g = _grid_of(K, grid)
    _check_pair(K, y)
    x = np.real(_adjoint_matvec(K, y.values, pool))
    peak = np.max(np.abs(x))
    if peak > 0:
        x = x / peak
    return ImageField(g, x)


def _data_gradient_vec(
    K: MeasurementMatrix, xv: np.ndarray, yv: np.ndarray, pool
) -> np.ndarray:
    r = _matvec(K, xv, pool) - yv
    return 2.0 * np.real(_adjoint_matvec(K, r, pool))


def data_gradient(
    K: MeasurementMatrix,
    x: ImageField,
    y: SensorData,
    pool: kernels.WorkerPool | None = None,
) -> ImageField:
    """Gradient of ||Kx - y||_2^2, i.e. 2*Re(K^H (Kx - y))."""
    g = _grid_of(K, x.grid)
    _check_pair(K, y)
    return ImageField(g, _data_gradient_vec(K, x.values, y.values, pool))


def _soft_threshold_arr(v: np.ndarray, lam: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def soft_threshold(v: ImageField, lam: float) -> ImageField:
    """Elementwise sign(v) * max(|v| - lam, 0), the prox of lam*||.||_1."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return ImageField(v.grid, _soft_threshold_arr(v.values, lam))


def _tv_value_img(img: np.ndarray) -> float:
    return float(np.abs(np.diff(img, axis=1)).sum() + np.abs(np.diff(img, axis=0)).sum())


def tv_value(x: ImageField) -> float:
    """Anisotropic total variation: sum of |forward differences|, both axes."""
    return _tv_value_img(x.image)


def _tv_gradient_img(img: np.ndarray, eps: float) -> np.ndarray:
    # gradient of sum(sqrt(diff^2 + eps^2)) over both difference directions
    dh = np.diff(img, axis=1)
    dv = np.diff(img, axis=0)
    wh = dh / np.sqrt(dh * dh + eps * eps)
    wv = dv / np.sqrt(dv * dv + eps * eps)
    g = np.zeros_like(img)
    g[:, :-1] -= wh
    g[:, 1:] += wh
    g[:-1, :] -= wv
    g[1:, :] += wv
    return g


def tv_gradient(x: ImageField, epsilon: float) -> ImageField:
    """Gradient of the epsilon-smoothed total variation."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    return ImageField(x.grid, _tv_gradient_img(x.image, epsilon).reshape(-1))


def resolve_regularization(
    config: ReconConfig, K: MeasurementMatrix, y: SensorData
) -> tuple[float, float]:
    """Fill in auto alpha/beta from the data scale (max|2 K^H y|)."""
    alpha = config.alpha
    if alpha is None:
        alpha = 1e-3 * float(np.max(np.abs(2.0 * np.real(_adjoint_matvec(K, y.values, None)))))
    beta = config.beta
    if beta is None:
        beta = 1e-2 * alpha
    return float(alpha), float(beta)


def _objective_parts(
    residual: np.ndarray, xv: np.ndarray, img_shape, alpha: float, beta: float
) -> ObjectiveParts:
    data = float(np.real(np.vdot(residual, residual)))
    l1 = alpha * float(np.abs(xv).sum())
    tv = beta * _tv_value_img(xv.reshape(img_shape))
    return ObjectiveParts(data + l1 + tv, data, l1, tv)


def objective(
    K: MeasurementMatrix,
    x: ImageField,
    y: SensorData,
    config: ReconConfig,
    pool: kernels.WorkerPool | None = None,
) -> ObjectiveParts:
    """F(x) and its three addends (data, weighted L1, weighted TV)."""
    g = _grid_of(K, x.grid)
    _check_pair(K, y)
    alpha, beta = resolve_regularization(config, K, y)
    r = _matvec(K, x.values, pool) - y.values
    return _objective_parts(r, x.values, (g.ny, g.nx), alpha, beta)


def estimate_lipschitz(K, iterations: int = 50, seed: int = 0) -> float:
    """Power-iteration estimate of sigma_max(K)^2.

    Accepts a MeasurementMatrix or a plain 2-D array. Deterministic for a
    fixed seed; the returned value is the Rayleigh quotient ||K v||^2 of the
    final normalized iterate of K^H K.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    A = K.entries if isinstance(K, MeasurementMatrix) else np.asarray(K)
    rng = np.random.default_rng(seed)
    if np.iscomplexobj(A):
        v = rng.standard_normal(A.shape[1]) + 1j * rng.standard_normal(A.shape[1])
    else:
        v = rng.standard_normal(A.shape[1])
    nrm = np.linalg.norm(v)
    if nrm == 0:
        return 0.0
    v = v / nrm
    for _ in range(iterations):
        w = A.conj().T @ (A @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        v = w / nrm
    return float(np.linalg.norm(A @ v) ** 2)


def _resolve_step(config: ReconConfig, K: MeasurementMatrix, beta: float) -> float:
    if config.step != "auto":
        return float(config.step)
    sigma_sq = estimate_lipschitz(K, iterations=50, seed=0)
    lipschitz = 2.0 * sigma_sq + beta * 8.0 / config.tv_epsilon
    return 1.0 / lipschitz if lipschitz > 0 else 1.0


def resolve_config(config: ReconConfig, K: MeasurementMatrix, y: SensorData) -> ReconConfig:
    """Pin auto alpha/beta/step to the concrete values the solver would use."""
    alpha, beta = resolve_regularization(config, K, y)
    return ReconConfig(
        alpha=alpha,
        beta=beta,
        iterations=config.iterations,
        step=_resolve_step(config, K, beta),
        tv_epsilon=config.tv_epsilon,
        nonneg=config.nonneg,
        tolerance=config.tolerance,
    )


def iterative_reconstruct(
    K: MeasurementMatrix,
    y: SensorData,
    config: ReconConfig,
    grid: ImagingGrid | None = None,
    pool: kernels.WorkerPool | None = None,
    stage_seconds: dict | None = None,
) -> ReconResult:
    """Proximal-gradient minimization of the reconstruction objective.

    Starting from x = 0, each iteration takes a gradient step on the data
    term plus the smoothed TV, then soft-thresholds (and optionally clamps to
    nonnegative). The recorded objective uses the exact (unsmoothed) TV.
    Stops at the iteration cap, when the relative objective change drops
    below config.tolerance, after DIVERGENCE_STREAK consecutive objective
    increases, or when the iterate stops being finite.

    stage_seconds, if a dict is supplied, accumulates wall seconds spent in
    the stages "gradient_products", "tv_gradient", "prox" and "objective".
    """
    from time import perf_counter

    g = _grid_of(K, grid)
    _check_pair(K, y)
    alpha, beta = resolve_regularization(config, K, y)
    eta = _resolve_step(config, K, beta)
    shape = (g.ny, g.nx)
    times = stage_seconds if stage_seconds is not None else {}
    for key in ("gradient_products", "tv_gradient", "prox", "objective"):
        times.setdefault(key, 0.0)

    yv = y.values
    x = np.zeros(K.cols)
    r = -yv.copy()  # K @ 0 - y
    f_prev = float(np.real(np.vdot(r, r)))  # F at x0 (L1 and TV vanish)
    history: list[ObjectiveParts] = []
    stopped_by = "max_iterations"
    grow_streak = 0

    for _ in range(config.iterations):
        t0 = perf_counter()
        grad = 2.0 * np.real(_adjoint_matvec(K, r, pool))
        times["gradient_products"] += perf_counter() - t0

        if beta > 0:
            t0 = perf_counter()
            grad += beta * _tv_gradient_img(x.reshape(shape), config.tv_epsilon).reshape(-1)
            times["tv_gradient"] += perf_counter() - t0

        t0 = perf_counter()
        x_new = _soft_threshold_arr(x - eta * grad, eta * alpha)
        if config.nonneg:
            np.maximum(x_new, 0.0, out=x_new)
        times["prox"] += perf_counter() - t0

        t0 = perf_counter()
        r_new = _matvec(K, x_new, pool) - yv
        times["gradient_products"] += perf_counter() - t0

        t0 = perf_counter()
        parts = _objective_parts(r_new, x_new, shape, alpha, beta)
        times["objective"] += perf_counter() - t0

        if not (math.isfinite(parts.total) and np.all(np.isfinite(x_new))):
            stopped_by = "divergence"
            break
        history.append(parts)
        x, r = x_new, r_new

        grow_streak = grow_streak + 1 if parts.total > f_prev else 0
        if grow_streak >= DIVERGENCE_STREAK:
            stopped_by = "divergence"
            break
        rel_change = abs(parts.total - f_prev) / max(abs(f_prev), 1e-300)
        f_prev = parts.total
        if config.tolerance > 0 and rel_change < config.tolerance:
            stopped_by = "tolerance"
            break

    n = len(history)
    return ReconResult(
        image=ImageField(g, x),
        objective_history=np.array([h.total for h in history]),
        data_term_history=np.array([h.data for h in history]),
        l1_history=np.array([h.l1 for h in history]),
        tv_history=np.array([h.tv for h in history]),
        iterations_run=n,
        stopped_by=stopped_by,
        alpha_used=alpha,
        beta_used=beta,
        step_used=eta,
    )


def rmse(a: ImageField, b: ImageField) -> float:
    """Root-mean-square difference of two fields on the same grid."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    return float(np.sqrt(np.mean((a.values - b.values) ** 2)))


def psnr(a: ImageField, b: ImageField, peak: float) -> float:
    """10*log10(peak^2 / mse); +inf for identical images."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    mse = float(np.mean((a.values - b.values) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)

"""Limiting kernels in closed form and Gaussian-process sampling from them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .core import RngLike, as_generator


class CholeskyError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class BallConstants:
    dim: int
    volume: float  # kappa_d
    surface: float  # omega_d


def unit_ball_constants(d: int) -> BallConstants:
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    kappa = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    return BallConstants(d, kappa, d * kappa)


@dataclass(frozen=True)
class KernelSpec:
    """Either the Laplace kernel or the rotation-averaged (isotropic) limit.

    For the isotropic kernel in two dimensions the arc integral is evaluated
    with ``quad_nodes``-point Gauss-Legendre; from three dimensions on it is
    a Monte Carlo average over ``mc_samples`` sphere directions drawn with
    ``mc_seed`` (the same directions for every distance).
    """

    kind: str
    lifetime: float
    dim: int
    quad_nodes: int = 64
    mc_samples: int = 200_000
    mc_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("laplace", "isotropic"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not self.lifetime > 0:
            raise ValueError("lifetime must be > 0")
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")

    def __call__(self, X, Y=None) -> np.ndarray:
        return kernel_matrix(X, Y, self)


def laplace_kernel(x, x_prime, lifetime: float):
    """``exp(-lifetime * ||x - x'||_1)``; broadcasts over leading axes."""
    diff = np.asarray(x, dtype=float) - np.asarray(x_prime, dtype=float)
    return np.exp(-lifetime * np.abs(diff).sum(axis=-1))


def _arc_integrand(theta, scale):
    return np.exp(-scale * (np.cos(theta) + np.sin(theta)))


def isotropic_limit_quad(r: float, lifetime: float) -> float:
    """Two-dimensional isotropic limit by adaptive quadrature.

    Sign symmetry of the l1 norm reduces the circle average to
    ``(2/pi) * int_0^{pi/2} exp(-lifetime r (cos t + sin t)) dt``.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    val, _ = integrate.quad(_arc_integrand, 0.0, math.pi / 2, args=(lifetime * r,),
                            epsabs=1e-12, epsrel=1e-10, limit=200)
    return 2.0 / math.pi * val


def sphere_directions(n: int, d: int, rng: RngLike) -> np.ndarray:
    """``n`` uniform points on the unit sphere in ``d`` dimensions."""
    g = as_generator(rng).standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def isotropic_limit_mc(r, lifetime: float, d: int, n_samples: int, rng: RngLike):
    """Sphere Monte Carlo estimate and its standard error.

    Directions come in antithetic pairs ``v, -v``; since the integrand is
    even in ``v`` a pair counts as a single independent sample for the
    error estimate.
    """
    scalar = np.ndim(r) == 0
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r < 0):
        raise ValueError("r must be >= 0")
    half = max(1, n_samples // 2)
    v = sphere_directions(half, d, rng)
    l1 = np.abs(v).sum(axis=1)
    l1_anti = np.abs(-v).sum(axis=1)
    vals = 0.5 * (np.exp(-lifetime * r[:, None] * l1) + np.exp(-lifetime * r[:, None] * l1_anti))
    mean = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / np.sqrt(half) if half > 1 else np.full_like(mean, np.inf)
    if scalar:
        return float(mean[0]), float(se[0])
    return mean, se


def isotropic_limit_kernel(r, lifetime: float, d: int, spec: KernelSpec | None = None):
    """Average of ``exp(-lifetime * r * ||v||_1)`` over the unit sphere.

    Parameters
    ----------
    r : float or array
        Euclidean distances ``||x - x'||_2``.
    lifetime : float
    d : int
    spec : KernelSpec, optional
        Integration settings; defaults to ``KernelSpec("isotropic", lifetime, d)``.

    Returns
    -------
    float or ndarray, matching ``r``.
    """
    spec = KernelSpec("isotropic", lifetime, d) if spec is None else spec
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValueError("r must be >= 0")
    flat = r_arr.ravel()
    if d == 1:
        out = np.exp(-lifetime * flat)
    elif d == 2:
        nodes, weights = np.polynomial.legendre.leggauss(spec.quad_nodes)
        theta = (nodes + 1.0) * (math.pi / 4)
        l1 = np.cos(theta) + np.sin(theta)
        # (2/pi) * (pi/4) * sum w_i f(theta_i)
        out = 0.5 * np.exp(-lifetime * flat[:, None] * l1) @ weights
    else:
        out = np.empty_like(flat)
        chunk = max(1, 2_000_000 // max(spec.mc_samples, 1))
        for a in range(0, flat.size, chunk):
            out[a:a + chunk] = isotropic_limit_mc(flat[a:a + chunk], lifetime, d,
                                                   spec.mc_samples, spec.mc_seed)[0]
    out = np.where(flat == 0.0, 1.0, out)
    return out.reshape(r_arr.shape) if r_arr.ndim else float(out[0])


def kernel_matrix(X, Y=None, spec: KernelSpec | None = None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    if spec.kind == "laplace":
        return laplace_kernel(X[:, None, :], Y[None, :, :], spec.lifetime)
    r = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=-1)
    if spec.dim >= 3:
        # evaluate each distinct distance once
        uniq, inv = np.unique(r, return_inverse=True)
        return isotropic_limit_kernel(uniq, spec.lifetime, spec.dim, spec)[inv].reshape(r.shape)
    return isotropic_limit_kernel(r, spec.lifetime, spec.dim, spec)


def jittered_cholesky(K: np.ndarray, max_tries: int = 8):
    """Lower Cholesky factor of ``K``, adding diagonal jitter when needed.

    Jitter starts at ``1e-10 * mean(diag)`` and grows tenfold up to
    ``max_tries`` times.  Returns ``(L, jitter)``.
    """
    K = np.asarray(K, dtype=float)
    try:
        return linalg.cholesky(K, lower=True), 0.0
    except linalg.LinAlgError:
        pass
    jitter = 1e-10 * float(np.mean(np.diag(K)))
    for _ in range(max_tries):
        try:
            return linalg.cholesky(K + jitter * np.eye(K.shape[0]), lower=True), jitter
        except linalg.LinAlgError:
            jitter *= 10.0
    eig = np.linalg.eigvalsh(K)
    raise CholeskyError(
        f"Cholesky failed with jitter up to {jitter / 10:.3g}; eigenvalues span "
        f"[{eig[0]:.3g}, {eig[-1]:.3g}]")


def gp_sample(points, spec: KernelSpec, noise_sd: float, rng: RngLike, n_draws: int | None = None):
    """Zero-mean Gaussian draws with covariance ``K + noise_sd**2 I``.

    Returns an ``N``-vector, or an ``(n_draws, N)`` array if ``n_draws`` is given.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    K = kernel_matrix(points, None, spec)
    K = K + noise_sd ** 2 * np.eye(K.shape[0])
    L, _ = jittered_cholesky(K)
    gen = as_generator(rng)
    z = gen.standard_normal((1 if n_draws is None else n_draws, K.shape[0]))
    y = z @ L.T
    return y[0] if n_draws is None else y

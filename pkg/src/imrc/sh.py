"""Real spherical harmonics and the confidence-weighted sequential estimator.

Basis functions are real and orthonormal on the unit sphere
(``integral Y_lm^2 = 1``) with the positive-sign convention, i.e. no
Condon-Shortley phase: ``Y_1,-1 ∝ y``, ``Y_1,0 ∝ z``, ``Y_1,1 ∝ x``.
Coefficients are flattened as ``j = l*l + l + m``, which is also the order
in which the sequential estimator visits them.
"""
from dataclasses import dataclass

import numpy as np

from . import _threads  # noqa: F401
from numba import njit

from .core import MAX_SH_DEGREE, NoObservationError, normalize

FOUR_PI = 4.0 * np.pi


def n_coeffs(degree):
    return (degree + 1) ** 2


def flat_index(l, m):
    return l * l + l + m


@njit(cache=True, nogil=True)
def _sh_eval(degree, x, y, z, out):
    out[0] = 0.28209479177387814
    if degree < 1:
        return
    c1 = 0.4886025119029199
    out[1] = c1 * y
    out[2] = c1 * z
    out[3] = c1 * x
    if degree < 2:
        return
    xx = x * x
    yy = y * y
    zz = z * z
    out[4] = 1.0925484305920792 * x * y
    out[5] = 1.0925484305920792 * y * z
    out[6] = 0.31539156525252005 * (3.0 * zz - 1.0)
    out[7] = 1.0925484305920792 * x * z
    out[8] = 0.5462742152960396 * (xx - yy)
    if degree < 3:
        return
    out[9] = 0.5900435899266435 * y * (3.0 * xx - yy)
    out[10] = 2.890611442640554 * x * y * z
    out[11] = 0.4570457994644658 * y * (5.0 * zz - 1.0)
    out[12] = 0.3731763325901154 * z * (5.0 * zz - 3.0)
    out[13] = 0.4570457994644658 * x * (5.0 * zz - 1.0)
    out[14] = 1.445305721320277 * z * (xx - yy)
    out[15] = 0.5900435899266435 * x * (xx - 3.0 * yy)
    if degree < 4:
        return
    out[16] = 2.5033429417967046 * x * y * (xx - yy)
    out[17] = 1.7701307697799304 * y * z * (3.0 * xx - yy)
    out[18] = 0.9461746957575601 * x * y * (7.0 * zz - 1.0)
    out[19] = 0.6690465435572892 * y * z * (7.0 * zz - 3.0)
    out[20] = 0.10578554691520431 * (35.0 * zz * zz - 30.0 * zz + 3.0)
    out[21] = 0.6690465435572892 * x * z * (7.0 * zz - 3.0)
    out[22] = 0.47308734787878004 * (xx - yy) * (7.0 * zz - 1.0)
    out[23] = 1.7701307697799304 * x * z * (xx - 3.0 * yy)
    out[24] = 0.6258357354491761 * (xx * (xx - 3.0 * yy) - yy * (3.0 * xx - yy))


@njit(cache=True, nogil=True)
def _sh_matrix(dirs, degree):
    nb = (degree + 1) * (degree + 1)
    out = np.empty((dirs.shape[0], nb))
    for k in range(dirs.shape[0]):
        _sh_eval(degree, dirs[k, 0], dirs[k, 1], dirs[k, 2], out[k])
    return out


@njit(cache=True, nogil=True)
def _estimate_step(res, basis, conf, wsum, j, coeffs):
    """Estimate coefficient ``j`` from the running residuals, then subtract it."""
    n = res.shape[0]
    scale = 4.0 * np.pi / wsum
    for c in range(3):
        acc = 0.0
        for k in range(n):
            acc += conf[k] * res[k, c] * basis[k, j]
        coeffs[j, c] = scale * acc
    for k in range(n):
        for c in range(3):
            res[k, c] -= coeffs[j, c] * basis[k, j]


@njit(cache=True, nogil=True)
def _fit_sequential(colors, basis, conf, degree):
    nb = (degree + 1) * (degree + 1)
    coeffs = np.zeros((nb, 3))
    res = colors.copy()
    wsum = 0.0
    for k in range(conf.shape[0]):
        wsum += conf[k]
    for j in range(nb):
        _estimate_step(res, basis, conf, wsum, j, coeffs)
    return coeffs, res


@njit(cache=True, nogil=True)
def _effective_degree(conf, degree, min_conf):
    count = 0
    for k in range(conf.shape[0]):
        if conf[k] > min_conf:
            count += 1
    eff = degree
    while eff >= 0 and (eff + 1) * (eff + 1) > count:
        eff -= 1
    return eff


@dataclass(frozen=True, eq=False)
class SHExpansion:
    """Per-channel coefficients, shape ``((L+1)^2, 3)``."""

    max_degree: int
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64)
        if c.shape != (n_coeffs(self.max_degree), 3):
            raise ValueError(f"expected {(n_coeffs(self.max_degree), 3)} coefficients, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coefficients", c)

    def coefficient(self, l, m):
        return self.coefficients[flat_index(l, m)]


@dataclass(frozen=True, eq=False)
class FitResult:
    expansion: SHExpansion
    residuals: np.ndarray
    effective_degree: int


def _check_degree(degree):
    if not 0 <= degree <= MAX_SH_DEGREE:
        raise ValueError(f"SH degree must be in [0, {MAX_SH_DEGREE}], got {degree}")


def sh_basis(l: int, m: int, d) -> float:
    """Value of the real orthonormal ``Y_l^m`` at unit direction ``d``."""
    _check_degree(l)
    if abs(m) > l:
        raise ValueError(f"order {m} out of range for degree {l}")
    d = normalize(d)
    out = np.empty(n_coeffs(l))
    _sh_eval(l, d[0], d[1], d[2], out)
    return float(out[flat_index(l, m)])


def sh_basis_matrix(dirs, degree):
    """Basis values for a batch of unit directions, shape ``(N, (L+1)^2)``."""
    _check_degree(degree)
    dirs = np.ascontiguousarray(np.asarray(dirs, dtype=np.float64).reshape(-1, 3))
    return _sh_matrix(dirs, degree)


def fit_unweighted(obs, degree: int) -> SHExpansion:
    """Plain Monte-Carlo projection that ignores confidences."""
    _check_degree(degree)
    colors, dirs, _ = obs.arrays()
    if colors.shape[0] == 0:
        raise NoObservationError("cannot fit an empty observation set")
    basis = sh_basis_matrix(dirs, degree)
    coeffs = FOUR_PI / colors.shape[0] * (basis.T @ colors)
    return SHExpansion(degree, coeffs)


def fit_weighted_sequential(obs, degree: int, min_conf: float = 1e-6) -> FitResult:
    """Estimate coefficients one by one on the running residual colors.

    The degree drops to the largest ``L'`` with ``(L'+1)^2`` not exceeding
    the number of observations whose confidence is above ``min_conf``.
    """
    _check_degree(degree)
    colors, dirs, conf = obs.arrays()
    if not conf.sum() > min_conf:
        raise NoObservationError(f"total confidence {conf.sum():.3g} <= {min_conf:g}")
    eff = int(_effective_degree(conf, degree, min_conf))
    if eff < 0:
        raise NoObservationError(f"no observation has confidence above {min_conf:g}")
    basis = sh_basis_matrix(dirs, eff)
    coeffs, res = _fit_sequential(colors, basis, conf, eff)
    full = np.zeros((n_coeffs(degree), 3))
    full[: coeffs.shape[0]] = coeffs
    return FitResult(SHExpansion(degree, full), res, eff)


def evaluate(expansion: SHExpansion, d):
    """Reconstructed color(s) at direction(s) ``d``; ``(3,)`` or ``(N, 3)``."""
    d = np.asarray(d, dtype=np.float64)
    basis = sh_basis_matrix(d, expansion.max_degree)
    out = basis @ expansion.coefficients
    return out[0] if d.ndim == 1 else out

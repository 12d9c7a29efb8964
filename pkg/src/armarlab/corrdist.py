"""Finite-sample law of the correlation between independent AR(1) series.

The asymptotic density is a Student-type law in ``w = r / sqrt(1 - r^2)``
with shape ``k`` and a scale set by ``T_v``, ``xi`` and ``phi_dd``.  The
closed-form ``xi`` is often negative, so evaluation is guarded and a
Monte Carlo fit of ``(xi, k)`` is available as the fallback.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal, stats
from scipy.special import gammaln

from .errors import DegenerateDenominator, InvalidParams, InvalidXi

_R_FLOOR = 1e-300


@dataclass(frozen=True)
class DensityParams:
    T_v: int
    xi_v: float
    k_v: float
    phi_dd: float

    @property
    def valid(self) -> bool:
        return (self.xi_v > 0 and self.k_v > 0 and abs(self.phi_dd) < 1
                and math.isfinite(self.xi_v) and math.isfinite(self.k_v))

    def check(self) -> None:
        if not self.valid:
            raise InvalidParams(f"density parameters out of range: {self}")

    def _scales(self):
        A = 2.0 * self.T_v * (1.0 - self.phi_dd ** 2)
        B = self.xi_v * (1.0 - self.phi_dd) ** 2
        return A, B

    def t_form(self):
        """(degrees of freedom, scale) of the equivalent Student t law in ``w``."""
        A, B = self._scales()
        nu = 2.0 * self.k_v
        return nu, math.sqrt(A / (B * nu))


def effective_length(T: int, phi_i: float, phi_j: float) -> int:
    pp = phi_i * phi_j
    val = ((T - 1) * (1 - pp) ** 2 - (1 - pp ** 2)) / (1 - pp) ** 2
    # round half up, matching the nearest-integer bracket
    return int(math.floor(val + 0.5))


def xi_closed_form(T_v: int, phi_j: float) -> float:
    t = np.arange(1, T_v)
    return float(3 * T_v - T_v ** 2 + 2 * np.sum(1 + 2 * phi_j ** (2 * t)))


def density_params(T: int, phi_i: float, phi_j: float, variant: str = "quadratic") -> DensityParams:
    """Closed-form parameters; raises InvalidXi when the scale is not positive.

    ``variant`` sets the shape: ``T_v / xi`` (linear) or ``T_v**2 / xi`` (quadratic).
    """
    if not (abs(phi_i) < 1 and abs(phi_j) < 1):
        raise InvalidParams("AR coefficients must lie in (-1, 1)")
    if T < 4:
        raise InvalidParams("T must be at least 4")
    if variant not in ("linear", "quadratic"):
        raise ValueError("variant must be 'linear' or 'quadratic'")
    T_v = effective_length(T, phi_i, phi_j)
    xi = xi_closed_form(T_v, phi_j)
    if xi <= 0:
        raise InvalidXi(xi, T_v)
    k = T_v / xi if variant == "linear" else T_v ** 2 / xi
    return DensityParams(T_v, xi, k, phi_i * phi_j)


def corr_log_density(r, params: DensityParams) -> np.ndarray:
    params.check()
    r = np.asarray(r, dtype=float)
    if np.any(np.abs(r) > 1):
        raise ValueError("r must lie in [-1, 1]")
    k, xi, pdd = params.k_v, params.xi_v, params.phi_dd
    A, B = params._scales()
    one_m = np.maximum(1.0 - r * r, _R_FLOOR)
    # rearranged so that huge shapes (near-normal laws) keep full precision
    const = _log_gamma_ratio(k) + math.log(1 - pdd) + 0.5 * math.log(xi) - 0.5 * math.log(math.pi * A)
    return const - 1.5 * np.log(one_m) - (k + 0.5) * np.log1p(r * r * B / (one_m * A))


def _log_gamma_ratio(k: float) -> float:
    """log Gamma(k + 1/2) - log Gamma(k)."""
    if k < 1e4:
        return float(gammaln(k + 0.5) - gammaln(k))
    return 0.5 * math.log(k) - 1.0 / (8 * k) + 1.0 / (192 * k ** 3)


def corr_density(r, params: DensityParams):
    out = np.exp(corr_log_density(r, params))
    return float(out) if np.ndim(out) == 0 else out


def corr_cdf(r, params: DensityParams):
    """Distribution function, through the Student t form in ``w``."""
    params.check()
    r = np.clip(np.asarray(r, dtype=float), -1.0, 1.0)
    one_m = np.maximum(1.0 - r * r, _R_FLOOR)
    w = r / np.sqrt(one_m)
    nu, scale = params.t_form()
    return stats.t.cdf(w, nu, scale=scale)


def tail_probability(tau: float, params: DensityParams) -> float:
    """Pr(|r| >= tau) by adaptive quadrature."""
    params.check()
    if not 0 <= tau < 1:
        raise ValueError("tau must lie in [0, 1)")
    upper, _ = integrate.quad(lambda r: corr_density(r, params), tau, 1.0,
                              epsabs=1e-8, epsrel=1e-10, limit=200)
    return float(min(max(2.0 * upper, 0.0), 1.0))


# -- Monte Carlo ---------------------------------------------------------------

def simulate_ar1_panel(phi, T: int, n: int, reps: int, rng: np.random.Generator) -> np.ndarray:
    """Independent stationary Gaussian AR(1) series, shape (reps, n, T)."""
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (n,))
    u = rng.standard_normal((reps, n, T))
    u[:, :, 0] /= np.sqrt(1.0 - phi ** 2)
    out = np.empty_like(u)
    for i in range(n):
        out[:, i] = signal.lfilter([1.0], [1.0, -phi[i]], u[:, i], axis=-1)
    return out


def _pearson_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = a - a.mean(axis=-1, keepdims=True)
    b = b - b.mean(axis=-1, keepdims=True)
    return np.einsum("ij,ij->i", a, b) / np.sqrt(np.einsum("ij,ij->i", a, a) * np.einsum("ij,ij->i", b, b))


@dataclass
class McDensity:
    edges: np.ndarray
    density: np.ndarray
    samples: np.ndarray

    def tail(self, tau: float) -> float:
        return float(np.mean(np.abs(self.samples) >= tau))


def mc_corr_density(T: int, phi_i: float, phi_j: float, reps: int, seed, grid=None) -> McDensity:
    if reps < 100:
        raise ValueError("reps must be at least 100")
    rng = np.random.default_rng(seed)
    x = simulate_ar1_panel([phi_i, phi_j], T, 2, reps, rng)
    r = _pearson_rows(x[:, 0], x[:, 1])
    edges = np.linspace(-1, 1, 101) if grid is None else np.asarray(grid, dtype=float)
    dens, _ = np.histogram(r, bins=edges, density=True)
    return McDensity(edges, dens, r)


def fit_density_params(samples, T: int, phi_i: float, phi_j: float, method: str = "mle") -> DensityParams:
    """Match ``(xi, k)`` to simulated correlations, keeping the closed-form ``T_v``.

    ``mle`` fits a zero-centred Student t to ``w``; ``moments`` matches its
    variance and kurtosis.
    """
    r = np.asarray(samples, dtype=float)
    r = r[np.abs(r) < 1]
    w = r / np.sqrt(1 - r * r)
    if method == "mle":
        nu, _, scale = stats.t.fit(w, floc=0.0)
    elif method == "moments":
        var = float(np.mean(w * w))
        ex_kurt = float(np.mean(w ** 4) / var ** 2 - 3.0)
        nu = 4.0 + 6.0 / ex_kurt if ex_kurt > 0 else 1e6
        scale = math.sqrt(var * (nu - 2) / nu)
    else:
        raise ValueError("method must be 'mle' or 'moments'")
    pdd = phi_i * phi_j
    T_v = max(effective_length(T, phi_i, phi_j), 1)
    A = 2.0 * T_v * (1.0 - pdd ** 2)
    xi = A / (scale ** 2 * nu * (1.0 - pdd) ** 2)
    return DensityParams(T_v, float(xi), float(nu / 2.0), pdd)


def ks_distance(samples, params: DensityParams) -> float:
    return float(stats.kstest(np.asarray(samples, dtype=float), lambda r: corr_cdf(r, params)).statistic)


def toy_spurious(n: int, T: int, phi: float, reps: int, seed):
    """Largest absolute off-diagonal sample correlation and smallest eigenvalue per replication."""
    rng = np.random.default_rng(seed)
    x = simulate_ar1_panel(phi, T, n, reps, rng)
    x = x - x.mean(axis=-1, keepdims=True)
    x /= np.sqrt(np.einsum("rit,rit->ri", x, x))[..., None]
    C = x @ x.transpose(0, 2, 1)
    off = np.abs(C - np.eye(n) * C)
    max_c = off.reshape(reps, -1).max(axis=1)
    psi_min = np.linalg.eigvalsh(C)[:, 0]
    return max_c, psi_min


# -- slope regression -----------------------------------------------------------

def ols_slope_variance(T: int, phi_i: float, phi_j: float) -> float:
    if T < 3 or not (abs(phi_i) < 1 and abs(phi_j) < 1):
        raise InvalidParams("need T >= 3 and |phi| < 1")
    pp = phi_i * phi_j
    return (1 - pp ** 2) * (1 - phi_i ** 2) / ((T - 1) * (1 - phi_j ** 2) * (1 - pp) ** 2)


def nw_lag_rule(T: int) -> int:
    return int(math.floor(0.75 * T ** (1.0 / 3.0)))


def newey_west_variance(x, e, m: int | None = None) -> float:
    """HAC variance of a slope, with Bartlett weights (m-j)/m on the score autocorrelations."""
    x = np.asarray(x, dtype=float).ravel()
    e = np.asarray(e, dtype=float).ravel()
    T = x.size
    if e.size != T:
        raise ValueError("x and e must have equal length")
    m = nw_lag_rule(T) if m is None else int(m)
    if m < 1 or T < m + 2:
        raise ValueError("need m >= 1 and length >= m + 2")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise DegenerateDenominator("predictor has zero variance")
    v = xc * e
    vv = float(v @ v)
    if vv == 0:
        # zero scores give a zero sandwich; the autocorrelations are undefined
        return 0.0
    f = 1.0
    for j in range(1, m):
        f += 2.0 * (m - j) / m * float(v[j:] @ v[:-j]) / vv
    return (1.0 / T) * (vv / (T - 2)) / (sxx / T) ** 2 * f


def slope_experiment(T: int, phi: float, reps: int, seed, m: int | None = None):
    """Simulated slopes of x2 on x1 (no intercept) with their NW variance estimates."""
    rng = np.random.default_rng(seed)
    x = simulate_ar1_panel(phi, T, 2, reps, rng)
    x1, x2 = x[:, 0], x[:, 1]
    b = np.einsum("ij,ij->i", x1, x2) / np.einsum("ij,ij->i", x1, x1)
    nw = np.array([newey_west_variance(x1[r], x2[r] - b[r] * x1[r], m) for r in range(reps)])
    return b, nw

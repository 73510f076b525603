"""Separation-strategy covariance: sigma = diag(s) * corr * diag(s).

Categorical latent coordinates keep their standard deviation pinned at 1;
free (continuous) variances get an inverse-gamma prior and a gamma-proposal
MH update. The correlation matrix gets the marginally-uniform prior of
Barnard, McCulloch and Meng and entrywise uniform random-walk MH updates
confined to the positive-definite support.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln


def spd_cholesky(m: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises ``np.linalg.LinAlgError`` if not PD."""
    return np.linalg.cholesky(m)


def chol_logdet(chol: np.ndarray) -> float:
    return 2.0 * float(np.log(np.diag(chol)).sum())


def compose_sigma(sdevs, corr):
    """Build sigma = diag(sdevs) corr diag(sdevs) and its Cholesky factor."""
    sdevs = np.asarray(sdevs, dtype=float)
    corr = np.asarray(corr, dtype=float)
    sigma = sdevs[:, None] * corr * sdevs[None, :]
    return sigma, spd_cholesky(sigma)


def scatter_matrix(z, mu, pis, var_scale: float) -> np.ndarray:
    """Weighted residual scatter sum_i (z_i - mu_i)(z_i - mu_i)' / (var_scale * pi_i)."""
    if var_scale <= 0:
        raise ValueError("var_scale must be positive")
    d = np.asarray(z, dtype=float) - np.asarray(mu, dtype=float)
    w = 1.0 / (var_scale * np.asarray(pis, dtype=float))
    s = d.T @ (d * w[:, None])
    return 0.5 * (s + s.T)


def _gamma_logpdf_shape_scale(x, shape, scale):
    return -shape * np.log(scale) - gammaln(shape) + (shape - 1.0) * np.log(x) - x / scale


@dataclass
class CovarianceState:
    """Chain-owned covariance state with cached factorizations.

    ``sdevs`` holds the per-coordinate standard deviations (exactly 1.0 on
    fixed coordinates), ``corr`` the correlation matrix. The caches
    (``sigma``, ``chol``, ``sigma_inv``, ``corr_inv``, ``logdet_sigma``)
    are refreshed after every accepted move.
    """

    sdevs: np.ndarray
    corr: np.ndarray
    free: np.ndarray
    var_prior_shape: float = 1.0
    var_prior_scale: float = 1.0
    var_proposal_shape: float = 5.0
    corr_window_frac: float = 4.0
    sigma: np.ndarray = field(init=False)
    chol: np.ndarray = field(init=False)
    sigma_inv: np.ndarray = field(init=False)
    corr_inv: np.ndarray = field(init=False)
    logdet_sigma: float = field(init=False)

    def __post_init__(self):
        self.sdevs = np.array(self.sdevs, dtype=float)
        self.corr = np.array(self.corr, dtype=float)
        self.free = np.asarray(self.free, dtype=bool)
        q = self.sdevs.shape[0]
        if self.corr.shape != (q, q) or self.free.shape != (q,):
            raise ValueError("inconsistent covariance dimensions")
        if np.any(self.sdevs[~self.free] != 1.0):
            raise ValueError("fixed coordinates must have unit standard deviation")
        self.refresh()

    @classmethod
    def create(cls, free_mask, var_prior_shape, var_prior_scale,
               var_proposal_shape=5.0, corr_window_frac=4.0):
        q = len(free_mask)
        return cls(
            sdevs=np.ones(q),
            corr=np.eye(q),
            free=np.asarray(free_mask, dtype=bool),
            var_prior_shape=var_prior_shape,
            var_prior_scale=var_prior_scale,
            var_proposal_shape=var_proposal_shape,
            corr_window_frac=corr_window_frac,
        )

    @property
    def q(self) -> int:
        return self.sdevs.shape[0]

    def refresh(self):
        self.sigma, self.chol = compose_sigma(self.sdevs, self.corr)
        inv_chol = np.linalg.inv(self.chol)
        self.sigma_inv = inv_chol.T @ inv_chol
        self.logdet_sigma = chol_logdet(self.chol)
        corr_chol = spd_cholesky(self.corr)
        inv_c = np.linalg.inv(corr_chol)
        self.corr_inv = inv_c.T @ inv_c

    def check(self):
        assert np.array_equal(self.sdevs[~self.free], np.ones((~self.free).sum())), (
            "fixed standard deviations drifted from 1"
        )
        assert np.allclose(self.corr, self.corr.T, atol=1e-12), "corr not symmetric"
        assert np.allclose(np.diag(self.corr), 1.0), "corr diagonal not 1"
        assert np.all(np.isfinite(self.chol)), "stale covariance factorization"


def _variance_logpost(sdevs, corr_inv, j, value, scatter, n, shape, scale):
    """Log target for one free variance, up to constants in the others."""
    s = sdevs.copy()
    s[j] = np.sqrt(value)
    trace = float((corr_inv * (scatter / np.outer(s, s))).sum())
    return -(shape + 0.5 * n + 1.0) * np.log(value) - scale / value - 0.5 * trace


def update_variance(state: CovarianceState, j: int, scatter, n: int, rng,
                    hastings: bool = True) -> bool:
    """Gamma-proposal MH step on the free variance of coordinate ``j``.

    Returns True when the move is accepted (state mutated in place).
    """
    if not state.free[j]:
        raise ValueError(f"coordinate {j} has a fixed variance")
    cur = state.sdevs[j] ** 2
    shape = state.var_proposal_shape
    cand = rng.gamma(shape, cur / shape)
    if cand <= 0.0 or not np.isfinite(cand):
        return False

    cand_sdevs = state.sdevs.copy()
    cand_sdevs[j] = np.sqrt(cand)
    try:
        sigma_cand, chol_cand = compose_sigma(cand_sdevs, state.corr)
    except np.linalg.LinAlgError:
        return False

    log_ratio = (
        _variance_logpost(state.sdevs, state.corr_inv, j, cand, scatter, n,
                          state.var_prior_shape, state.var_prior_scale)
        - _variance_logpost(state.sdevs, state.corr_inv, j, cur, scatter, n,
                            state.var_prior_shape, state.var_prior_scale)
    )
    if hastings:
        log_ratio += _gamma_logpdf_shape_scale(cur, shape, cand / shape)
        log_ratio -= _gamma_logpdf_shape_scale(cand, shape, cur / shape)

    if np.log(rng.random()) < log_ratio:
        state.sdevs[j] = np.sqrt(cand)
        state.refresh()
        return True
    return False


def correlation_support(corr: np.ndarray, j: int, k: int) -> tuple[float, float]:
    """Interval of values for entry (j, k) keeping the matrix PD.

    The determinant is quadratic in the entry; its two roots bracket the
    admissible interval (intersected with [-1, 1]).
    """

    def det_at(rho):
        m = corr.copy()
        m[j, k] = m[k, j] = rho
        return float(np.linalg.det(m))

    h1, hm1, h0 = det_at(1.0), det_at(-1.0), det_at(0.0)
    t1 = 0.5 * (h1 + hm1 - 2.0 * h0)
    t2 = 0.5 * (h1 - hm1)
    t3 = h0

    cur = float(corr[j, k])
    scale = max(abs(t1), abs(t2), abs(t3), 1.0)
    if abs(t1) <= 1e-13 * scale:
        if abs(t2) <= 1e-13 * scale:
            lo, hi = -1.0, 1.0
        elif t2 > 0:
            lo, hi = -t3 / t2, 1.0
        else:
            lo, hi = -1.0, -t3 / t2
    else:
        disc = t2 * t2 - 4.0 * t1 * t3
        if disc < 0:
            disc = 0.0
        # numerically stable quadratic roots
        qf = -0.5 * (t2 + np.copysign(np.sqrt(disc), t2 if t2 != 0 else 1.0))
        if qf == 0.0:
            r1 = r2 = 0.0
        else:
            r1, r2 = qf / t1, t3 / qf
        lo, hi = min(r1, r2), max(r1, r2)

    lo, hi = max(lo, -1.0), min(hi, 1.0)
    lo, hi = min(lo, cur), max(hi, cur)
    return float(lo), float(hi)


def _correlation_logpost(corr, sdevs, scatter, n, q):
    """Log target for the correlation matrix; raises LinAlgError if not PD."""
    chol = spd_cholesky(corr)
    logdet = chol_logdet(chol)
    minors = 0.0
    for l in range(q):
        keep = np.arange(q) != l
        sign, val = np.linalg.slogdet(corr[np.ix_(keep, keep)])
        if sign <= 0:
            raise np.linalg.LinAlgError("principal minor not positive")
        minors += val
    post = -0.5 * (q + 1.0) * minors - 0.5 * (n + 2.0 - q * (q - 1.0)) * logdet
    if scatter is not None and np.any(scatter):
        a = scatter / np.outer(sdevs, sdevs)
        w = np.linalg.solve(corr, a)
        post -= 0.5 * float(np.trace(w))
    return post


def update_correlation(state: CovarianceState, j: int, k: int, scatter, n: int, rng,
                       hastings: bool = True) -> bool:
    """Windowed-uniform MH step on correlation entry (j, k), j < k.

    The proposal window is the PD support shrunk to ``length/corr_window_frac``
    on each side of the current value; the Hastings term corrects for the
    position-dependent window.
    """
    if j >= k:
        raise ValueError("update upper-triangle entries only (j < k)")
    q = state.q
    lo, hi = correlation_support(state.corr, j, k)
    length = hi - lo
    if length <= 0.0:
        return False
    half = length / state.corr_window_frac
    cur = float(state.corr[j, k])
    w_lo, w_hi = max(lo, cur - half), min(hi, cur + half)
    cand = rng.uniform(w_lo, w_hi)
    c_lo, c_hi = max(lo, cand - half), min(hi, cand + half)

    cand_corr = state.corr.copy()
    cand_corr[j, k] = cand_corr[k, j] = cand
    try:
        log_ratio = (
            _correlation_logpost(cand_corr, state.sdevs, scatter, n, q)
            - _correlation_logpost(state.corr, state.sdevs, scatter, n, q)
        )
    except np.linalg.LinAlgError:
        return False
    if hastings:
        log_ratio += np.log(w_hi - w_lo) - np.log(c_hi - c_lo)

    if np.log(rng.random()) < log_ratio:
        state.corr[j, k] = state.corr[k, j] = cand
        try:
            state.refresh()
        except np.linalg.LinAlgError:
            # numerically non-PD despite being inside the support: back out
            state.corr[j, k] = state.corr[k, j] = cur
            state.refresh()
            return False
        return True
    return False

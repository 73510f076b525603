"""Latent-vector maintenance: transforms, decode rules, truncated resampling.

The latent matrix ``z`` must stay consistent with the observed data at all
times: continuous coordinates are deterministic transforms of the data,
ordinal coordinates live in the threshold interval of their observed level,
and each nominal block reproduces its observed category under the
sign/argmax decode rule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr, ndtri

from .schema import CONTINUOUS, NOMINAL, ORDINAL, Dataset, Schema

logger = logging.getLogger(__name__)

IDENTITY = "identity"
LOG_SHIFT = "log-shift"

#: Standardised distance beyond which a one-sided region counts as "tail".
_TAIL_Z = 3.0


@dataclass(frozen=True)
class TransformSpec:
    """Normalising transform for a continuous variable.

    ``log-shift`` maps ``y -> log(y + shift)`` where ``shift`` is the
    empirical quantile of order ``shift_quantile`` of the column, fitted
    once from the data.
    """

    kind: str = IDENTITY
    shift_quantile: float = 0.01
    shift: float | None = None

    def __post_init__(self):
        if self.kind not in (IDENTITY, LOG_SHIFT):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if not 0.0 < self.shift_quantile < 1.0:
            raise ValueError("shift quantile must lie in (0, 1)")

    @property
    def fitted(self) -> bool:
        return self.kind == IDENTITY or self.shift is not None

    def fit(self, values) -> "TransformSpec":
        """Realise the shift from a data column (no-op for identity)."""
        if self.kind == IDENTITY:
            return self
        shift = float(np.quantile(np.asarray(values, dtype=float), self.shift_quantile))
        fitted = replace(self, shift=shift)
        fitted.apply(values)  # fail fast if the shift cannot make y + shift > 0
        return fitted

    def apply(self, y):
        if self.kind == IDENTITY:
            return np.asarray(y, dtype=float) if np.ndim(y) else float(y)
        if self.shift is None:
            raise ValueError("log-shift transform used before fitting")
        arg = np.asarray(y, dtype=float) + self.shift
        if np.any(arg <= 0):
            raise ValueError("log-shift argument must be positive for all records")
        out = np.log(arg)
        return out if np.ndim(y) else float(out)


def transform_continuous(y, spec: TransformSpec | None):
    """Apply a continuous variable's transform (``None`` means identity)."""
    if spec is None:
        return np.asarray(y, dtype=float) if np.ndim(y) else float(y)
    return spec.apply(y)


def fit_transforms(schema: Schema, dataset: Dataset) -> Schema:
    """Return a schema whose log-shift transforms are fitted on ``dataset``."""
    new_vars = []
    for k, v in enumerate(schema.variables):
        if v.kind == CONTINUOUS and v.transform is not None and not v.transform.fitted:
            col = dataset.values[:, schema.input_index[k]]
            v = replace(v, transform=v.transform.fit(col))
        new_vars.append(v)
    return schema.with_variables(new_vars)


def decode_ordinal(z, cutoffs) -> int | np.ndarray:
    """Level index ``k`` with ``cutoffs[k] < z <= cutoffs[k+1]`` (0-based)."""
    cutoffs = np.asarray(cutoffs, dtype=float)
    idx = np.searchsorted(cutoffs, z, side="left") - 1
    idx = np.clip(idx, 0, len(cutoffs) - 2)
    return idx if np.ndim(z) else int(idx)

def decode_nominal(zblock) -> int:
    """Category of a nominal latent block.

    The last category when every coordinate is negative, otherwise the
    position of the maximum (ties resolved to the lowest index).
    """
    zblock = np.asarray(zblock, dtype=float)
    if zblock.max() < 0:
        return zblock.shape[-1]
    return int(np.argmax(zblock))


def decode_nominal_rows(zblock: np.ndarray) -> np.ndarray:
    """Vectorised :func:`decode_nominal` over rows."""
    cat = np.argmax(zblock, axis=1)
    cat[zblock.max(axis=1) < 0] = zblock.shape[1]
    return cat


@dataclass(frozen=True)
class TruncationRegion:
    """Open/half-open interval a latent coordinate is confined to."""

    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"empty truncation region ({self.lower}, {self.upper})")


def conditional_moments(sigma, mu, z, coord: int, scale: float):
    """Mean and variance of one coordinate given the rest of a Gaussian.

    For ``z ~ N(mu, scale * sigma)`` returns ``(nu, V)`` with
    ``nu = mu[coord] + s12 @ inv(s22) @ (z_rest - mu_rest)`` and
    ``V = scale * (s11 - s12 @ inv(s22) @ s21)``.
    """
    sigma = np.asarray(sigma, dtype=float)
    mu = np.asarray(mu, dtype=float)
    z = np.asarray(z, dtype=float)
    q = sigma.shape[0]
    if scale <= 0:
        raise ValueError("scale must be positive")
    if q == 1:
        return float(mu[0]), float(scale * sigma[0, 0])
    rest = np.arange(q) != coord
    s11 = sigma[coord, coord]
    s12 = sigma[coord, rest]
    s22 = sigma[np.ix_(rest, rest)]
    try:
        w = np.linalg.solve(s22, z[rest] - mu[rest])
        v = np.linalg.solve(s22, s12)
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError(
            "conditioning block is singular; covariance state corrupted"
        ) from err
    nu = float(mu[coord] + s12 @ w)
    var = float(scale * (s11 - s12 @ v))
    if var <= 0:
        raise np.linalg.LinAlgError("nonpositive conditional variance")
    return nu, var


def _robert_tail(rng, a):
    """Standard-normal draws conditioned on exceeding ``a`` (all a >= 0)."""
    out = np.empty_like(a)
    pending = np.arange(a.size)
    lam = 0.5 * (a + np.sqrt(a * a + 4.0))
    for _ in range(100):
        x = a[pending] + rng.exponential(1.0, size=pending.size) / lam[pending]
        accept = np.log(rng.random(pending.size)) <= -0.5 * (x - lam[pending]) ** 2
        out[pending[accept]] = x[accept]
        pending = pending[~accept]
        if pending.size == 0:
            break
    else:  # pragma: no cover - acceptance rate is ~1 for a >= 3
        out[pending] = a[pending]
    return out


def _truncated_normal_std(rng, a, b):
    """One standard-normal draw per element, conditioned on (a[i], b[i])."""
    x = np.empty_like(a)
    # mirror left-tail regions so every tail case is a right tail
    flip = b <= -_TAIL_Z
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)

    tail = lo >= _TAIL_Z
    mid = ~tail
    if np.any(mid):
        u0 = ndtr(lo[mid])
        u1 = ndtr(hi[mid])
        u = u0 + (u1 - u0) * rng.random(int(mid.sum()))
        x[mid] = ndtri(u)
    if np.any(tail):
        one_sided = tail & np.isinf(hi)
        two_sided = tail & ~one_sided
        if np.any(one_sided):
            x[one_sided] = _robert_tail(rng, lo[one_sided])
        if np.any(two_sided):
            # invert on the survival scale, exact in the far right tail
            s_lo = ndtr(-lo[two_sided])
            s_hi = ndtr(-hi[two_sided])
            u = s_hi + (s_lo - s_hi) * rng.random(int(two_sided.sum()))
            x[two_sided] = -ndtri(u)

    x = np.where(flip, -x, x)

    degenerate = ~np.isfinite(x) | (x < a) | (x > b)
    if np.any(degenerate):
        logger.warning(
            "%d truncation region(s) with numerically zero mass; clamping to boundary",
            int(degenerate.sum()),
        )
        near_lower = np.abs(a) <= np.abs(b)
        span = np.where(np.isfinite(b - a), b - a, 1.0)
        eps = 1e-8 * np.minimum(1.0, span)
        fallback = np.where(near_lower, a + eps, b - eps)
        x = np.where(degenerate, fallback, x)
    return x


def sample_truncated_normal(mean: float, var: float, region: TruncationRegion, rng) -> float:
    """One draw from N(mean, var) restricted to ``region``."""
    if var <= 0:
        raise ValueError("variance must be positive")
    draws = sample_truncated_normal_many(
        np.array([mean]), np.array([var]),
        np.array([region.lower]), np.array([region.upper]), rng,
    )
    return float(draws[0])


def sample_truncated_normal_many(mean, var, lower, upper, rng) -> np.ndarray:
    """Vectorised truncated-normal sampling, one region per element.

    Draws land strictly inside their region so the decode rules hold even
    for open interval ends.
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.asarray(var, dtype=float))
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    with np.errstate(invalid="ignore"):
        a = (lower - mean) / sd
        b = (upper - mean) / sd
    x = _truncated_normal_std(rng, a, b)
    z = mean + sd * x
    z = np.where(z <= lower, np.nextafter(lower, np.inf), z)
    z = np.where(z >= upper, np.nextafter(upper, -np.inf), z)
    return z


@dataclass
class LatentState:
    """The n x q latent matrix plus the data it must stay consistent with."""

    z: np.ndarray
    dataset: Dataset
    schema: Schema

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def q(self) -> int:
        return self.z.shape[1]

    def observed_column(self, k: int) -> np.ndarray:
        return self.dataset.values[:, self.schema.input_index[k]]

    def check_consistent(self) -> None:
        """Raise AssertionError unless decode reproduces the observed data."""
        for k, v in enumerate(self.schema.variables):
            sl = self.schema.latent_slice(k)
            if v.kind == CONTINUOUS:
                expect = transform_continuous(self.observed_column(k), v.transform)
                assert np.array_equal(self.z[:, sl.start], expect), (
                    f"continuous latent drifted for {v.name}"
                )
            elif v.kind == ORDINAL:
                got = decode_ordinal(self.z[:, sl.start], self.schema.cutoff_array(k))
                assert np.array_equal(got, self.observed_column(k).astype(int)), (
                    f"ordinal decode mismatch for {v.name}"
                )
            else:
                got = decode_nominal_rows(self.z[:, sl])
                assert np.array_equal(got, self.observed_column(k).astype(int)), (
                    f"nominal decode mismatch for {v.name}"
                )


def initial_latents(dataset: Dataset, schema: Schema) -> LatentState:
    """Deterministic constraint-satisfying start for the latent matrix.

    Ordinal coordinates start at the midpoint of their level's interval
    (one unit inside for half-infinite intervals); nominal blocks start at
    +1 in the observed slot and -1 elsewhere.
    """
    n = dataset.n
    z = np.zeros((n, schema.q))
    for k, v in enumerate(schema.variables):
        sl = schema.latent_slice(k)
        col = dataset.values[:, schema.input_index[k]]
        if v.kind == CONTINUOUS:
            z[:, sl.start] = transform_continuous(col, v.transform)
        elif v.kind == ORDINAL:
            cuts = schema.cutoff_array(k)
            lo = cuts[col.astype(int)]
            hi = cuts[col.astype(int) + 1]
            start = np.where(
                np.isfinite(lo) & np.isfinite(hi),
                0.5 * (lo + hi),
                np.where(np.isfinite(lo), lo + 1.0, hi - 1.0),
            )
            z[:, sl.start] = start
        else:
            codes = col.astype(int)
            z[:, sl] = -1.0
            width = v.latent_width
            has_slot = codes < width
            z[np.flatnonzero(has_slot), sl.start + codes[has_slot]] = 1.0
    return LatentState(z=z, dataset=dataset, schema=schema)


def _nominal_bounds(zblock, codes, slot):
    """Truncation bounds for one slot of a nominal block, per record."""
    n, width = zblock.shape
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    last = codes == width  # observed category is the reference (last) one
    upper[last] = 0.0
    sel = codes == slot
    if np.any(sel):
        others = np.delete(zblock[sel], slot, axis=1)
        floor = others.max(axis=1, initial=0.0)
        lower[sel] = floor
    other = ~last & ~sel
    if np.any(other):
        upper[other] = zblock[other, codes[other]]
    return lower, upper


def resample_latents(state: LatentState, mixture, cov, var_scale: float, pis, rng) -> LatentState:
    """Redraw categorical latent coordinates from their full conditionals.

    Continuous coordinates are untouched. The scan is deterministic:
    ordinal then nominal variables in canonical order, nominal slots in
    index order; each coordinate is updated for all records jointly, which
    conditions on the freshest values because records are independent.
    """
    schema = state.schema
    z = state.z
    mu = mixture.mus[mixture.labels]
    prec = cov.sigma_inv
    base_var = var_scale * np.asarray(pis, dtype=float)

    def redraw(j, lower, upper):
        gap = z - mu
        slope = gap @ prec[:, j] - prec[j, j] * gap[:, j]
        nu = mu[:, j] - slope / prec[j, j]
        var = base_var / prec[j, j]
        z[:, j] = sample_truncated_normal_many(nu, var, lower, upper, rng)

    for k, v in enumerate(schema.variables):
        sl = schema.latent_slice(k)
        codes = state.observed_column(k).astype(int)
        if v.kind == ORDINAL:
            cuts = schema.cutoff_array(k)
            redraw(sl.start, cuts[codes], cuts[codes + 1])
        elif v.kind == NOMINAL:
            for slot in range(v.latent_width):
                lower, upper = _nominal_bounds(z[:, sl], codes, slot)
                redraw(sl.start + slot, lower, upper)
    return state

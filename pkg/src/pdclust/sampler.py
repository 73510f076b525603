"""Full Gibbs sweep and chain management.

One sweep updates, in order: per-record cluster membership through the
collapsed urn (a), the unique cluster locations (b), the base-measure
variances (c), each free kernel variance (d), each correlation entry (e),
the discount (f), the strength (g), and finally the categorical latent
coordinates (h). Any fixed order is a valid composition; this one refreshes
locations right after the memberships change.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovarianceState, scatter_matrix, update_correlation, update_variance
from .latent import LatentState, fit_transforms, initial_latents, resample_latents
from .pdprocess import BaseMeasure, PDHyper, update_base_scales, update_discount, \
    update_strength, urn_weights
from .schema import Dataset, Schema

WEIGHT_MODE_IGNORE = "ignore"
WEIGHT_MODE_DESIGN = "design"

CHECKPOINT_VERSION = 1

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class MixtureState:
    """Cluster labels, unique locations and their counts.

    Labels are always a contiguous relabelling 0..r-1 and counts sum to the
    number of records; empty clusters are removed the moment they appear.
    """

    labels: np.ndarray
    mus: np.ndarray
    counts: np.ndarray

    @property
    def r(self) -> int:
        return len(self.counts)

    @classmethod
    def singletons(cls, z: np.ndarray) -> "MixtureState":
        n = z.shape[0]
        return cls(labels=np.arange(n), mus=z.copy(), counts=np.ones(n, dtype=np.int64))

    def remove_cluster(self, j: int):
        self.mus = np.delete(self.mus, j, axis=0)
        self.counts = np.delete(self.counts, j)
        self.labels[self.labels > j] -= 1

    def add_cluster(self, mu: np.ndarray) -> int:
        self.mus = np.vstack([self.mus, mu])
        self.counts = np.append(self.counts, np.int64(1))
        return len(self.counts) - 1

    def check(self, n: int):
        assert self.counts.sum() == n, "cluster counts do not sum to n"
        assert np.all(self.counts >= 1), "empty cluster left behind"
        assert np.array_equal(
            np.bincount(self.labels, minlength=self.r), self.counts
        ), "labels and counts disagree"


@dataclass(frozen=True)
class PriorConstants:
    """All fixed prior constants of the model."""

    discount_zero_prob: float = 0.5
    discount_beta1: float = 1.0
    discount_beta2: float = 1.0
    strength_shape: float = 1.0
    strength_rate: float = 1.0
    var_prior_shape: float = 1.0
    var_prior_scale: float = 1.0
    base_prior_shape: float = 1.0
    base_prior_scale: float = 1.0


@dataclass(frozen=True)
class TuningConstants:
    """Metropolis proposal tuning."""

    var_proposal_shape: float = 5.0
    corr_window_frac: float = 4.0
    strength_step: float = 2.0


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int
    burnin: int
    thinning: int = 1
    var_scale: float = 1.0
    seed: int = 0
    weight_mode: str = WEIGHT_MODE_DESIGN
    priors: PriorConstants = field(default_factory=PriorConstants)
    tuning: TuningConstants = field(default_factory=TuningConstants)
    runtime_checks: bool = True

    def __post_init__(self):
        if self.burnin >= self.iterations:
            raise ValueError("burn-in must be smaller than iterations")
        if self.burnin < 0 or self.thinning < 1:
            raise ValueError("invalid burn-in/thinning")
        if self.var_scale <= 0:
            raise ValueError("var_scale must be positive")
        if self.weight_mode not in (WEIGHT_MODE_IGNORE, WEIGHT_MODE_DESIGN):
            raise ValueError(f"unknown weight mode {self.weight_mode!r}")

    @property
    def kept(self) -> int:
        return (self.iterations - self.burnin) // self.thinning


@dataclass
class ChainOutput:
    """Kept partitions plus hyperparameter traces for one chain."""

    partitions: np.ndarray       # (kept, n) int32
    trace_discount: np.ndarray
    trace_strength: np.ndarray
    trace_r: np.ndarray
    trace_var: np.ndarray        # (kept, n_free)
    trace_base_var: np.ndarray   # (kept, q)
    kept: int
    seed: int
    runtime_seconds: float


def effective_pis(dataset: Dataset, weight_mode: str) -> np.ndarray:
    """Sampling probabilities the kernel actually uses."""
    if weight_mode == WEIGHT_MODE_IGNORE:
        return np.ones(dataset.n)
    if weight_mode == WEIGHT_MODE_DESIGN:
        return dataset.pis.copy()
    raise ValueError(f"unknown weight mode {weight_mode!r}")


def _location_posterior(sigma_inv, base_var, prec_scale, zsum):
    """Posterior (nu, V) of a cluster location given scaled sufficient stats."""
    prec = prec_scale * sigma_inv + np.diag(1.0 / base_var)
    V = np.linalg.inv(prec)
    nu = V @ (sigma_inv @ zsum)
    return nu, V


def _marginal_terms(pi_i, var_scale, cov, base_var, cache):
    """Inverse and log-determinant of var_scale*pi*sigma + diag(base_var)."""
    key = float(pi_i)
    hit = cache.get(key)
    if hit is None:
        m = (var_scale * pi_i) * cov.sigma + np.diag(base_var)
        chol = np.linalg.cholesky(m)
        inv_chol = np.linalg.inv(chol)
        hit = (inv_chol.T @ inv_chol, 2.0 * float(np.log(np.diag(chol)).sum()))
        cache[key] = hit
    return hit


def update_mu_i(i, latents, mixture, cov, base, hyper, pi_i, var_scale, rng,
                marg_cache=None):
    """Collapsed urn reassignment of record ``i`` (conditional (a)).

    Detaches the record, weighs opening a fresh cluster against each
    existing one in log space, and either joins a cluster or draws a new
    location from its Gaussian posterior.
    """
    if marg_cache is None:
        marg_cache = {}
    z_i = latents.z[i]
    q = z_i.shape[0]

    old = mixture.labels[i]
    mixture.labels[i] = -1
    mixture.counts[old] -= 1
    if mixture.counts[old] == 0:
        mixture.remove_cluster(old)

    r_i = mixture.r
    c = var_scale * pi_i
    open_new = r_i == 0
    if not open_new:
        logd = np.empty(r_i + 1)
        diff = mixture.mus - z_i
        t = diff @ cov.sigma_inv
        quad = (t * diff).sum(axis=1) / c
        const = -0.5 * (q * (_LOG_2PI + np.log(c)) + cov.logdet_sigma)
        logd[1:] = np.log(mixture.counts - hyper.discount) + const - 0.5 * quad

        minv, logdet_m = _marginal_terms(pi_i, var_scale, cov, base.base_var, marg_cache)
        quad0 = float(z_i @ minv @ z_i)
        logd[0] = (
            np.log(hyper.strength + hyper.discount * r_i)
            - 0.5 * (q * _LOG_2PI + logdet_m)
            - 0.5 * quad0
        )

        p = np.exp(logd - logd.max())
        p /= p.sum()
        assert abs(p.sum() - 1.0) <= 1e-10, "membership probabilities not normalized"
        idx = int(np.searchsorted(np.cumsum(p), rng.random()))
        idx = min(idx, r_i)
        open_new = idx == 0

    if open_new:
        w_i = 1.0 / pi_i
        nu, V = _location_posterior(
            cov.sigma_inv, base.base_var, w_i / var_scale, (z_i * w_i) / var_scale
        )
        mu_new = nu + np.linalg.cholesky(V) @ rng.standard_normal(q)
        mixture.labels[i] = mixture.add_cluster(mu_new)
    else:
        j = idx - 1
        mixture.labels[i] = j
        mixture.counts[j] += 1
    return mixture


def update_unique_mus(latents, mixture, cov, base, var_scale, pis, rng):
    """Refresh every cluster location from its Gaussian posterior (conditional (b))."""
    inv_pis = 1.0 / np.asarray(pis, dtype=float)
    q = latents.z.shape[1]
    for j in range(mixture.r):
        members = np.flatnonzero(mixture.labels == j)
        w = inv_pis[members]
        zsum = (latents.z[members] * w[:, None]).sum(axis=0) / var_scale
        nu, V = _location_posterior(cov.sigma_inv, base.base_var, w.sum() / var_scale, zsum)
        mixture.mus[j] = nu + np.linalg.cholesky(V) @ rng.standard_normal(q)
    return mixture


def gibbs_sweep(latents, mixture, cov, base, hyper, var_scale, pis, rng, *,
                variance_hastings=True, correlation_hastings=True):
    """One full pass over conditionals (a) through (h)."""
    n, q = latents.z.shape
    marg_cache: dict = {}
    for i in range(n):
        update_mu_i(i, latents, mixture, cov, base, hyper, pis[i], var_scale, rng,
                    marg_cache)
    update_unique_mus(latents, mixture, cov, base, var_scale, pis, rng)

    base.base_var = update_base_scales(base, mixture.mus, rng).base_var

    scatter = scatter_matrix(latents.z, mixture.mus[mixture.labels], pis, var_scale)
    for j in np.flatnonzero(cov.free):
        update_variance(cov, int(j), scatter, n, rng, hastings=variance_hastings)
    for j in range(q):
        for k in range(j + 1, q):
            update_correlation(cov, j, k, scatter, n, rng, hastings=correlation_hastings)

    hyper.discount = update_discount(hyper, mixture.counts, rng)
    hyper.strength = update_strength(hyper, mixture.counts, rng)

    resample_latents(latents, mixture, cov, var_scale, pis, rng)


def init_states(latents: LatentState, schema: Schema, config: SamplerConfig):
    """Deterministic moment-matched starting states for one chain.

    The chain starts from a single cluster at the latent mean with free
    variances matched to the weighted residual moments of that one-cluster
    fit. Starting coarse is deliberate: cluster births mix well under the
    collapsed urn, while the reverse joint move (merging plus inflating the
    kernel variance) effectively never happens, so a scattered start can
    strand the chain above the posterior mode.
    """
    pr, tu = config.priors, config.tuning
    z = latents.z
    n = z.shape[0]
    pis = effective_pis(latents.dataset, config.weight_mode)

    center = z.mean(axis=0)
    mixture = MixtureState(
        labels=np.zeros(n, dtype=np.int64),
        mus=center[None, :].copy(),
        counts=np.array([n], dtype=np.int64),
    )
    cov = CovarianceState.create(
        schema.free_mask(), pr.var_prior_shape, pr.var_prior_scale,
        tu.var_proposal_shape, tu.corr_window_frac,
    )
    free = schema.free_mask()
    if free.any():
        resid = (z - center) ** 2 / (config.var_scale * pis)[:, None]
        moments = resid.mean(axis=0)[free]
        cov.sdevs[free] = np.sqrt(np.where(moments > 0, moments, 1.0))
        cov.refresh()
    # inverse-gamma mode of the one-location conditional, defined for any shape
    base0 = (pr.base_prior_scale + 0.5 * center ** 2) / (pr.base_prior_shape + 1.5)
    base = BaseMeasure(base0, pr.base_prior_shape, pr.base_prior_scale)
    hyper = PDHyper(
        discount=0.0, strength=1.0,
        discount_zero_prob=pr.discount_zero_prob,
        discount_beta1=pr.discount_beta1, discount_beta2=pr.discount_beta2,
        strength_shape=pr.strength_shape, strength_rate=pr.strength_rate,
        strength_step=tu.strength_step,
    )
    return mixture, cov, base, hyper


def run_chain(dataset: Dataset, schema: Schema, config: SamplerConfig) -> ChainOutput:
    """Run one chain and return the kept partitions and traces."""
    t0 = time.perf_counter()
    schema = fit_transforms(schema, dataset)
    pis = effective_pis(dataset, config.weight_mode)
    rng = np.random.default_rng(config.seed)

    latents = initial_latents(dataset, schema)
    mixture, cov, base, hyper = init_states(latents, schema, config)

    n = dataset.n
    kept = config.kept
    free_idx = np.flatnonzero(cov.free)
    partitions = np.empty((kept, n), dtype=np.int32)
    trace_discount = np.empty(kept)
    trace_strength = np.empty(kept)
    trace_r = np.empty(kept, dtype=np.int64)
    trace_var = np.empty((kept, free_idx.size))
    trace_base_var = np.empty((kept, schema.q))

    stored = 0
    for it in range(1, config.iterations + 1):
        gibbs_sweep(latents, mixture, cov, base, hyper, config.var_scale, pis, rng)
        if it > config.burnin and (it - config.burnin) % config.thinning == 0:
            partitions[stored] = mixture.labels
            trace_discount[stored] = hyper.discount
            trace_strength[stored] = hyper.strength
            trace_r[stored] = mixture.r
            trace_var[stored] = cov.sdevs[free_idx] ** 2
            trace_base_var[stored] = base.base_var
            stored += 1
            if config.runtime_checks:
                mixture.check(n)
                cov.check()
                latents.check_consistent()

    assert stored == kept
    return ChainOutput(
        partitions=partitions,
        trace_discount=trace_discount,
        trace_strength=trace_strength,
        trace_r=trace_r,
        trace_var=trace_var,
        trace_base_var=trace_base_var,
        kept=kept,
        seed=config.seed,
        runtime_seconds=time.perf_counter() - t0,
    )


def save_checkpoint(path, latents, mixture, cov, base, hyper, rng, sweep: int = 0):
    """Dump all chain states plus the generator position, bit-exactly."""
    np.savez(
        path,
        version=np.int64(CHECKPOINT_VERSION),
        sweep=np.int64(sweep),
        z=latents.z,
        labels=mixture.labels,
        mus=mixture.mus,
        counts=mixture.counts,
        sdevs=cov.sdevs,
        corr=cov.corr,
        base_var=base.base_var,
        discount=np.float64(hyper.discount),
        strength=np.float64(hyper.strength),
        rng_state=json.dumps(rng.bit_generator.state),
    )


def load_checkpoint(path, dataset: Dataset, schema: Schema, config: SamplerConfig):
    """Rebuild chain states saved by :func:`save_checkpoint`."""
    with np.load(path, allow_pickle=False) as blob:
        if int(blob["version"]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {int(blob['version'])}")
        schema = fit_transforms(schema, dataset)
        latents = LatentState(z=blob["z"].copy(), dataset=dataset, schema=schema)
        mixture = MixtureState(
            labels=blob["labels"].copy(), mus=blob["mus"].copy(),
            counts=blob["counts"].copy(),
        )
        pr, tu = config.priors, config.tuning
        cov = CovarianceState(
            sdevs=blob["sdevs"], corr=blob["corr"], free=schema.free_mask(),
            var_prior_shape=pr.var_prior_shape, var_prior_scale=pr.var_prior_scale,
            var_proposal_shape=tu.var_proposal_shape,
            corr_window_frac=tu.corr_window_frac,
        )
        base = BaseMeasure(blob["base_var"], pr.base_prior_shape, pr.base_prior_scale)
        hyper = PDHyper(
            discount=float(blob["discount"]), strength=float(blob["strength"]),
            discount_zero_prob=pr.discount_zero_prob,
            discount_beta1=pr.discount_beta1, discount_beta2=pr.discount_beta2,
            strength_shape=pr.strength_shape, strength_rate=pr.strength_rate,
            strength_step=tu.strength_step,
        )
        rng = np.random.default_rng()
        rng.bit_generator.state = json.loads(str(blob["rng_state"]))
        sweep = int(blob["sweep"])
    return latents, mixture, cov, base, hyper, rng, sweep


# ---------------------------------------------------------------------------
# Joint-distribution correctness harness
# ---------------------------------------------------------------------------

def _batch_means_se(x: np.ndarray, n_batches: int = 50) -> float:
    """Standard error of the mean of an autocorrelated series."""
    m = len(x) // n_batches
    if m < 2:
        return float(np.std(x, ddof=1) / np.sqrt(len(x)))
    means = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(n_batches))


@dataclass
class GewekeReport:
    names: list[str]
    z_scores: np.ndarray
    mean_forward: np.ndarray
    mean_successive: np.ndarray
    draws: int

    @property
    def max_abs_z(self) -> float:
        return float(np.abs(self.z_scores).max())

    def passed(self, threshold: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.z_scores) < threshold))

    def __str__(self) -> str:
        rows = [
            f"  {name:<22s} fwd {mf: .4f}  mcmc {ms: .4f}  z {z: .2f}"
            for name, mf, ms, z in zip(
                self.names, self.mean_forward, self.mean_successive, self.z_scores
            )
        ]
        return "joint-distribution check ({} draws):\n{}".format(self.draws, "\n".join(rows))


def _encode_observed(z: np.ndarray, schema: Schema) -> np.ndarray:
    """Observed values implied by a latent matrix (identity transforms only)."""
    from .latent import decode_nominal_rows, decode_ordinal

    values = np.empty((z.shape[0], schema.p))
    for k, v in enumerate(schema.variables):
        sl = schema.latent_slice(k)
        col = schema.input_index[k]
        if v.kind == "continuous":
            if v.transform is not None and v.transform.kind != "identity":
                raise ValueError("harness supports identity transforms only")
            values[:, col] = z[:, sl.start]
        elif v.kind == "ordinal":
            values[:, col] = decode_ordinal(z[:, sl.start], schema.cutoff_array(k))
        else:
            values[:, col] = decode_nominal_rows(z[:, sl])
    return values


def _ancestral_draw(schema: Schema, config: SamplerConfig, pis, rng):
    """Exact joint draw of (hyperparameters, partition, latents, data)."""
    pr, tu = config.priors, config.tuning
    q, n = schema.q, len(pis)

    discount = 0.0 if rng.random() < pr.discount_zero_prob else rng.beta(
        pr.discount_beta1, pr.discount_beta2)
    strength = rng.gamma(pr.strength_shape, 1.0 / pr.strength_rate) - discount
    base_var = pr.base_prior_scale / rng.standard_gamma(pr.base_prior_shape, size=q)

    free = schema.free_mask()
    sdevs = np.ones(q)
    sdevs[free] = np.sqrt(
        pr.var_prior_scale / rng.standard_gamma(pr.var_prior_shape, size=int(free.sum()))
    )
    corr = np.eye(q)
    if q == 2:
        rho = rng.uniform(-1.0, 1.0)
        corr[0, 1] = corr[1, 0] = rho

    hyper = PDHyper(
        discount=discount, strength=strength,
        discount_zero_prob=pr.discount_zero_prob,
        discount_beta1=pr.discount_beta1, discount_beta2=pr.discount_beta2,
        strength_shape=pr.strength_shape, strength_rate=pr.strength_rate,
        strength_step=tu.strength_step,
    )
    labels = np.empty(n, dtype=np.int64)
    counts: list[int] = []
    mus_list: list[np.ndarray] = []
    for i in range(n):
        w = urn_weights(hyper, np.asarray(counts), i + 1)
        idx = int(np.searchsorted(np.cumsum(w), rng.random()))
        idx = min(idx, len(counts))
        if idx == 0:
            mus_list.append(np.sqrt(base_var) * rng.standard_normal(q))
            counts.append(1)
            labels[i] = len(counts) - 1
        else:
            counts[idx - 1] += 1
            labels[i] = idx - 1
    mixture = MixtureState(labels=labels, mus=np.array(mus_list),
                           counts=np.array(counts, dtype=np.int64))

    cov = CovarianceState(
        sdevs=sdevs, corr=corr, free=free,
        var_prior_shape=pr.var_prior_shape, var_prior_scale=pr.var_prior_scale,
        var_proposal_shape=tu.var_proposal_shape, corr_window_frac=tu.corr_window_frac,
    )
    base = BaseMeasure(base_var, pr.base_prior_shape, pr.base_prior_scale)
    z = _draw_latents(mixture, cov, config.var_scale, pis, rng)
    return mixture, cov, base, hyper, z


def _draw_latents(mixture, cov, var_scale, pis, rng):
    n = len(pis)
    q = cov.q
    noise = rng.standard_normal((n, q)) @ cov.chol.T
    scale = np.sqrt(var_scale * np.asarray(pis))
    return mixture.mus[mixture.labels] + noise * scale[:, None]


def _harness_stats(schema: Schema, free_idx, cat_var: int | None):
    names = ["discount", "discount_is_zero", "strength_plus_discount"]
    if free_idx.size:
        names += ["log_var_0", "inv_var_0"]
    for l in range(min(schema.q, 2)):
        names += [f"log_base_var_{l}"]
        if l == 0:
            names += [f"inv_base_var_{l}"]
    if schema.q == 2:
        # the square detects boundary-symmetric biases the mean cannot see
        names += ["corr_01", "corr_01_sq"]
    names += ["n_clusters"]
    if cat_var is not None:
        names += ["mean_code"]

    def extract(mixture, cov, base, hyper, values):
        out = [hyper.discount, float(hyper.discount == 0.0),
               hyper.strength + hyper.discount]
        if free_idx.size:
            v = cov.sdevs[free_idx[0]] ** 2
            out += [np.log(v), 1.0 / v]
        for l in range(min(schema.q, 2)):
            out += [np.log(base.base_var[l])]
            if l == 0:
                out += [1.0 / base.base_var[l]]
        if schema.q == 2:
            out += [cov.corr[0, 1], cov.corr[0, 1] ** 2]
        out += [float(mixture.r)]
        if cat_var is not None:
            out += [float(values[:, schema.input_index[cat_var]].mean())]
        return out

    return names, extract


def geweke_joint_test(schema: Schema, config: SamplerConfig, draws: int,
                      pis=(1.0, 0.8, 0.65, 0.9, 0.75), mutate: str | None = None,
                      seed: int = 0) -> GewekeReport:
    """Compare ancestral simulation with the successive-conditional sampler.

    Both simulators target the same joint law of (hyperparameters, states,
    data); moment mismatches beyond MC error expose bugs in the full
    conditionals. ``mutate`` deliberately breaks one Hastings correction
    ("variance-hastings" or "correlation-hastings") so tests can confirm
    the harness has teeth. Restricted to tiny models (n <= 8, q <= 2; the
    correlation prior is only ancestrally tractable at q = 2).
    """
    pis = np.asarray(pis, dtype=float)
    n = len(pis)
    if n > 8 or schema.q > 2:
        raise ValueError("harness is restricted to n <= 8 and q <= 2")
    if mutate not in (None, "variance-hastings", "correlation-hastings"):
        raise ValueError(f"unknown mutation {mutate!r}")
    variance_hastings = mutate != "variance-hastings"
    correlation_hastings = mutate != "correlation-hastings"

    rng = np.random.default_rng(seed)
    free_idx = np.flatnonzero(schema.free_mask())
    cat_var = next(
        (k for k, v in enumerate(schema.variables) if v.kind != "continuous"), None)
    names, extract = _harness_stats(schema, free_idx, cat_var)

    fwd = np.empty((draws, len(names)))
    for m in range(draws):
        mixture, cov, base, hyper, z = _ancestral_draw(schema, config, pis, rng)
        fwd[m] = extract(mixture, cov, base, hyper, _encode_observed(z, schema))

    mixture, cov, base, hyper, z = _ancestral_draw(schema, config, pis, rng)
    values = _encode_observed(z, schema)
    dataset = Dataset(values=values, weights=1.0 / pis)
    latents = LatentState(z=z.copy(), dataset=dataset, schema=schema)

    suc = np.empty((draws, len(names)))
    for m in range(draws):
        gibbs_sweep(latents, mixture, cov, base, hyper, config.var_scale, pis, rng,
                    variance_hastings=variance_hastings,
                    correlation_hastings=correlation_hastings)
        z = _draw_latents(mixture, cov, config.var_scale, pis, rng)
        values = _encode_observed(z, schema)
        dataset = Dataset(values=values, weights=1.0 / pis)
        latents = LatentState(z=z, dataset=dataset, schema=schema)
        suc[m] = extract(mixture, cov, base, hyper, values)

    z_scores = np.empty(len(names))
    for s in range(len(names)):
        se_f = np.std(fwd[:, s], ddof=1) / np.sqrt(draws)
        se_s = _batch_means_se(suc[:, s])
        denom = np.sqrt(se_f ** 2 + se_s ** 2)
        gap = fwd[:, s].mean() - suc[:, s].mean()
        z_scores[s] = 0.0 if (denom == 0 and gap == 0) else gap / max(denom, 1e-300)

    return GewekeReport(
        names=names, z_scores=z_scores,
        mean_forward=fwd.mean(axis=0), mean_successive=suc.mean(axis=0),
        draws=draws,
    )

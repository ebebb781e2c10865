"""
Monte Carlo propagation of distributions.

Draws are generated with the counter-based Philox bit generator so that
fixtures are reproducible across platforms. Draws are processed in
chunks; every chunk owns an independent sub-stream spawned from the seed
and chunk statistics are merged in chunk order, so results are
bit-identical regardless of how many workers evaluate the chunks.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._validation import as_vector, check_covariance, check_int
from .core import chol_psd, symmetrize

__all__ = [
    "make_rng",
    "spawn_seeds",
    "RunningStats",
    "running_stats_update",
    "MCResult",
    "mc_propagate",
    "DEFAULT_DRAWS",
]

DEFAULT_DRAWS = 2000
MAX_FULL_COV_DIM = 512


def make_rng(seed=None):
    """Philox-based generator; an existing Generator is passed through."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(seed))


def spawn_seeds(seed, n):
    """`n` independent child seed sequences derived from `seed`."""
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(0, 2**63))
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return seed.spawn(n)


class RunningStats:
    """One-pass mean/variance (optionally covariance) accumulator.

    Single samples use Welford's update; batches are reduced with a
    shifted two-pass pass and merged with Chan's pairwise formula.
    """

    def __init__(self, dim, full_cov=False):
        self.dim = check_int(dim, "dim", minimum=1)
        self.count = 0
        self.mean = np.zeros(self.dim)
        self.m2 = np.zeros(self.dim)
        self.comoment = np.zeros((self.dim, self.dim)) if full_cov else None

    @property
    def full_cov(self):
        return self.comoment is not None

    def update(self, sample):
        x = np.asarray(sample, dtype=float).reshape(self.dim)
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        delta2 = x - self.mean
        self.m2 = self.m2 + delta * delta2
        if self.full_cov:
            self.comoment = self.comoment + np.outer(delta, delta2)
        return self

    def update_batch(self, samples):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.shape[1] != self.dim:
            raise ValueError(f"samples must have {self.dim} columns")
        k = samples.shape[0]
        if k == 0:
            return self
        # shifting by the first sample keeps constant columns exact
        shift = samples[0]
        mean = shift + (samples - shift).mean(axis=0)
        dev = samples - mean
        other = RunningStats(self.dim, self.full_cov)
        other.count = k
        other.mean = mean
        other.m2 = np.einsum("ij,ij->j", dev, dev)
        if self.full_cov:
            other.comoment = dev.T @ dev
        return self.merge(other)

    def merge(self, other):
        if other.dim != self.dim:
            raise ValueError("cannot merge statistics of different dimension")
        if other.count == 0:
            return self
        if self.count == 0:
            self.count = other.count
            self.mean = other.mean.copy()
            self.m2 = other.m2.copy()
            if self.full_cov:
                self.comoment = other.comoment.copy()
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        w = self.count * other.count / n
        self.mean = self.mean + delta * (other.count / n)
        self.m2 = self.m2 + other.m2 + delta**2 * w
        if self.full_cov:
            self.comoment = self.comoment + other.comoment + np.outer(delta, delta) * w
        self.count = n
        return self

    def variance(self, ddof=1):
        if self.count <= ddof:
            return np.zeros(self.dim)
        return self.m2 / (self.count - ddof)

    def std(self, ddof=1):
        return np.sqrt(self.variance(ddof))

    def cov(self, ddof=1):
        if not self.full_cov:
            raise ValueError("full covariance was not accumulated")
        if self.count <= ddof:
            return np.zeros((self.dim, self.dim))
        return symmetrize(self.comoment / (self.count - ddof))


def running_stats_update(state, sample):
    """Add one sample vector to `state` (in place) and return it."""
    return state.update(sample)


@dataclass(frozen=True, eq=False)
class MCResult:
    mean: np.ndarray
    std: np.ndarray
    cov: np.ndarray
    draws: int
    failed: int


def _eval_chunk(model, est, L, k, seed, vectorized, on_error):
    rng = make_rng(seed)
    z = rng.standard_normal((k, est.size))
    X = est + z @ L.T
    if vectorized:
        Y = np.asarray(model(X), dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        ok = np.all(np.isfinite(Y), axis=1)
        if not np.all(ok) and on_error == "abort":
            raise RuntimeError("model returned non-finite output for a draw")
        return Y[ok], int(np.count_nonzero(~ok))
    rows = []
    failed = 0
    for x in X:
        try:
            y = np.atleast_1d(np.asarray(model(x), dtype=float)).ravel()
            if not np.all(np.isfinite(y)):
                raise FloatingPointError("non-finite model output")
        except Exception:
            if on_error == "abort":
                raise
            failed += 1
            continue
        rows.append(y)
    if not rows:
        return np.empty((0, 0)), failed
    return np.vstack(rows), failed


def mc_propagate(
    model,
    est,
    U,
    draws=DEFAULT_DRAWS,
    seed=None,
    full_cov=False,
    vectorized=False,
    on_error="abort",
    chunk=1000,
    n_jobs=1,
):
    """Monte Carlo propagation of a multivariate normal input.

    Parameters
    ----------
    model : callable
        Maps an input vector to an output vector. With
        ``vectorized=True`` it maps a (k, n) array of draws to (k, m).
    est : array_like
        Input estimate (mean).
    U : array_like
        Input covariance; must be positive semi-definite up to rounding.
    draws : int
        Number of Monte Carlo trials, at least 100.
    seed : int, SeedSequence or None
        Root seed; chunk sub-streams are spawned from it.
    full_cov : bool
        Also accumulate the full output covariance (output dimension
        <= 512).
    on_error : {"abort", "skip"}
        Behaviour when the model fails on a draw.
    n_jobs : int
        Number of threads evaluating chunks. Does not affect results.

    Returns
    -------
    MCResult
    """
    est = as_vector(est, "est")
    draws = check_int(draws, "draws", minimum=100)
    if on_error not in ("abort", "skip"):
        raise ValueError("on_error must be 'abort' or 'skip'")
    U = check_covariance(U, est.size, "U")
    L = chol_psd(U)
    chunk = check_int(chunk, "chunk", minimum=1)
    sizes = [chunk] * (draws // chunk)
    if draws % chunk:
        sizes.append(draws % chunk)
    seeds = spawn_seeds(seed, len(sizes))

    def work(args):
        k, s = args
        return _eval_chunk(model, est, L, k, s, vectorized, on_error)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(work, zip(sizes, seeds)))
    else:
        results = [work(a) for a in zip(sizes, seeds)]

    stats = None
    failed = 0
    for Y, nfail in results:
        failed += nfail
        if Y.size == 0:
            continue
        if stats is None:
            if full_cov and Y.shape[1] > MAX_FULL_COV_DIM:
                raise ValueError(
                    f"full covariance limited to output dimension {MAX_FULL_COV_DIM}"
                )
            stats = RunningStats(Y.shape[1], full_cov)
        stats.update_batch(Y)
    if stats is None or stats.count < 2:
        raise RuntimeError("model failed on (almost) all draws")
    return MCResult(
        mean=stats.mean,
        std=stats.std(),
        cov=stats.cov() if full_cov else None,
        draws=stats.count,
        failed=failed,
    )

"""Parametric laws for lane-change scenario variables.

Inverse range at the start of a cut-in follows a truncated Pareto law;
inverse time-to-collision follows a truncated exponential law.  Both
expose pdf/cdf/ppf so that sampling and importance weights share one set
of formulas.  Exponential tilting keeps proposal laws inside the
exponential family, which is what makes the likelihood ratios cheap and
numerically tame.

Exponential laws are parameterized by their MEAN, never by a rate.  A
tilt of ``vartheta`` moves the mean from ``lam`` to ``lam - vartheta``,
so negative tilts push mass toward larger values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "TruncatedPareto",
    "TruncatedExponential",
    "EmpiricalDist",
    "FitReport",
    "FitError",
    "tilt_exponential",
    "exp_density_ratio",
    "fit_exponential_mle",
    "fit_pareto",
    "lsq_exponential_of_pareto",
]


class FitError(RuntimeError):
    """A maximum-likelihood or least-squares fit failed to converge."""


def _maybe_scalar(out: np.ndarray, x: np.ndarray) -> np.ndarray | float:
    return out if x.ndim else float(out)


class TruncatedPareto:
    """Generalized Pareto density restricted to [lo, hi] and renormalized.

    The base law has shape ``k > 0``, scale ``sigma > 0`` and location
    ``theta``; its survival function is ``(1 + k*(x-theta)/sigma)**(-1/k)``.
    ``hi`` may be ``inf``.
    """

    def __init__(self, k: float, sigma: float, theta: float, lo: float, hi: float):
        if not k > 0:
            raise ValueError(f"shape k must be > 0, got {k}")
        if not sigma > 0:
            raise ValueError(f"scale sigma must be > 0, got {sigma}")
        if not theta <= lo < hi:
            raise ValueError(f"need theta <= lo < hi, got theta={theta} lo={lo} hi={hi}")
        self.k = float(k)
        self.sigma = float(sigma)
        self.theta = float(theta)
        self.lo = float(lo)
        self.hi = float(hi)
        # Mass of the base law kept by the truncation.
        self._z = float(self._base_sf(lo) - self._base_sf(hi))
        if not self._z > 0:
            raise ValueError("truncation range carries no probability mass")

    def _base_sf(self, x) -> np.ndarray | float:
        if np.isscalar(x) and math.isinf(x):
            return 0.0
        return (1.0 + self.k * (np.asarray(x, dtype=float) - self.theta) / self.sigma) ** (
            -1.0 / self.k
        )

    def pdf(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        xs = np.where(inside, x, self.lo)
        dens = (1.0 / self.sigma) * (
            1.0 + self.k * (xs - self.theta) / self.sigma
        ) ** (-1.0 - 1.0 / self.k)
        return _maybe_scalar(np.where(inside, dens / self._z, 0.0), x)

    def cdf(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        xs = np.clip(x, self.lo, self.hi)
        out = (self._base_sf(self.lo) - self._base_sf(xs)) / self._z
        return _maybe_scalar(np.clip(out, 0.0, 1.0), x)

    def ppf(self, u) -> np.ndarray | float:
        u = np.asarray(u, dtype=float)
        if np.any((u < 0.0) | (u > 1.0)):
            raise ValueError("u must lie in [0, 1]")
        s = self._base_sf(self.lo) - u * self._z
        x = self.theta + (self.sigma / self.k) * (s ** (-self.k) - 1.0)
        if math.isfinite(self.hi):
            x = np.clip(x, self.lo, self.hi)
        else:
            x = np.maximum(x, self.lo)
        return _maybe_scalar(x, u)

    def rvs(self, rng: np.random.Generator, size=None) -> np.ndarray | float:
        return self.ppf(rng.random(size=size))

    def mean(self) -> float:
        """Mean of the truncated law, by adaptive quadrature."""
        val, _ = integrate.quad(lambda x: x * self.pdf(x), self.lo, self.hi, limit=200)
        return float(val)


class TruncatedExponential:
    """Exponential law with mean ``mean``, restricted to [lo, hi].

    ``mean`` parameterizes the untruncated family; the density on the
    truncation range is ``exp(-(x-lo)/mean) / (mean * q)`` with
    ``q = 1 - exp(-(hi-lo)/mean)``.  ``hi`` may be ``inf``.
    """

    def __init__(self, mean: float, lo: float = 0.0, hi: float = math.inf):
        if not mean > 0:
            raise ValueError(f"mean must be > 0, got {mean}")
        if not 0.0 <= lo < hi:
            raise ValueError(f"need 0 <= lo < hi, got lo={lo} hi={hi}")
        self.mean = float(mean)
        self.lo = float(lo)
        self.hi = float(hi)
        # Kept mass of the base law, in a form stable for large lo.
        self._q = float(-math.expm1(-(self.hi - self.lo) / self.mean)) if math.isfinite(hi) else 1.0
        if not self._q > 0:
            raise ValueError("truncation range carries no probability mass")

    def pdf(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        xs = np.where(inside, x, self.lo)
        dens = np.exp(-(xs - self.lo) / self.mean) / (self.mean * self._q)
        return _maybe_scalar(np.where(inside, dens, 0.0), x)

    def cdf(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        xs = np.clip(x, self.lo, self.hi)
        out = -np.expm1(-(xs - self.lo) / self.mean) / self._q
        return _maybe_scalar(np.clip(out, 0.0, 1.0), x)

    def ppf(self, u) -> np.ndarray | float:
        u = np.asarray(u, dtype=float)
        if np.any((u < 0.0) | (u > 1.0)):
            raise ValueError("u must lie in [0, 1]")
        x = self.lo - self.mean * np.log1p(-u * self._q)
        if math.isfinite(self.hi):
            x = np.clip(x, self.lo, self.hi)
        return _maybe_scalar(x, u)

    def rvs(self, rng: np.random.Generator, size=None) -> np.ndarray | float:
        return self.ppf(rng.random(size=size))


def tilt_exponential(base: TruncatedExponential, vartheta: float) -> TruncatedExponential:
    """Exponentially tilted version of ``base`` with mean ``base.mean - vartheta``.

    The tilted law stays in the truncated-exponential family on the same
    support, so importance weights never divide by zero.  ``vartheta``
    must stay strictly below ``base.mean``.
    """
    if not vartheta < base.mean:
        raise ValueError(
            f"tilt vartheta={vartheta} must be < mean {base.mean} to keep the mean positive"
        )
    return TruncatedExponential(base.mean - vartheta, base.lo, base.hi)


def exp_density_ratio(numer: TruncatedExponential, denom: TruncatedExponential, x):
    """pdf(numer, x) / pdf(denom, x) in closed form.

    Equals ``c * exp(-x * (1/numer.mean - 1/denom.mean))`` with a constant
    ``c`` fixed by the two normalizations, so equal means give the exact
    same float at every ``x``.  Points outside ``numer``'s support return
    0; callers are expected to evaluate only at points drawn from
    ``denom``.
    """
    x = np.asarray(x, dtype=float)
    log_c = (
        math.log(denom.mean * denom._q)
        - math.log(numer.mean * numer._q)
        + numer.lo / numer.mean
        - denom.lo / denom.mean
    )
    c = math.exp(log_c)
    rate_diff = 1.0 / numer.mean - 1.0 / denom.mean
    inside = (x >= numer.lo) & (x <= numer.hi)
    out = np.where(inside, c * np.exp(-x * rate_diff), 0.0)
    return _maybe_scalar(out, x)


class EmpiricalDist:
    """Piecewise-uniform law over histogram bins.

    ``bin_edges`` has one more entry than ``bin_mass``; mass is taken as
    uniform within each bin.  Sampling restricted to a sub-range keeps
    each bin's contribution proportional to the overlapped fraction of
    its width, so restricting to the full support reproduces the
    unrestricted law.
    """

    def __init__(self, bin_edges, bin_mass):
        edges = np.asarray(bin_edges, dtype=float)
        mass = np.asarray(bin_mass, dtype=float)
        if edges.ndim != 1 or mass.ndim != 1 or len(edges) != len(mass) + 1:
            raise ValueError("need len(bin_edges) == len(bin_mass) + 1")
        if not np.all(np.diff(edges) > 0):
            raise ValueError("bin_edges must be strictly increasing")
        if np.any(mass < 0):
            raise ValueError("bin masses must be nonnegative")
        total = float(mass.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"bin masses must sum to 1 within 1e-9, got {total}")
        self.bin_edges = edges
        self.bin_mass = mass / total
        self.lo = float(edges[0])
        self.hi = float(edges[-1])

    def _range_weights(self, lo: float, hi: float):
        if not lo < hi:
            raise ValueError(f"need lo < hi, got {lo}, {hi}")
        left = np.maximum(self.bin_edges[:-1], lo)
        right = np.minimum(self.bin_edges[1:], hi)
        overlap = np.clip(right - left, 0.0, None)
        w = self.bin_mass * overlap / np.diff(self.bin_edges)
        return left, overlap, w

    def mass_in_range(self, lo: float, hi: float) -> float:
        """Probability carried by [lo, hi]."""
        _, _, w = self._range_weights(lo, hi)
        return float(w.sum())

    def sample_in_range(self, lo: float, hi: float, u_bin: float, u_pos: float) -> float:
        """One draw conditioned on [lo, hi], from two uniforms in [0, 1)."""
        left, overlap, w = self._range_weights(lo, hi)
        total = float(w.sum())
        if total <= 0.0:
            raise ValueError(f"range ({lo}, {hi}) carries no probability mass")
        cum = np.cumsum(w)
        j = int(np.searchsorted(cum, u_bin * total, side="right"))
        j = min(j, len(w) - 1)
        return float(left[j] + u_pos * overlap[j])


@dataclass(frozen=True)
class FitReport:
    """Result of a maximum-likelihood fit.

    ``params`` holds everything needed to rebuild the law; ``n_params``
    counts only the parameters that were actually optimized, which is
    what enters the BIC.
    """

    params: dict[str, float]
    n_params: int
    loglik: float
    bic: float
    n: int


def fit_exponential_mle(samples) -> FitReport:
    """Fit an untruncated exponential by maximum likelihood (mean = sample mean)."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    if np.any(x <= 0):
        raise ValueError("samples must be positive")
    lam = float(x.mean())
    n = int(x.size)
    loglik = -n * math.log(lam) - float(x.sum()) / lam
    bic = 1 * math.log(n) - 2.0 * loglik
    return FitReport(params={"mean": lam}, n_params=1, loglik=loglik, bic=bic, n=n)


def fit_pareto(samples, theta: float | None = None) -> FitReport:
    """Fit a generalized Pareto law (k, sigma) by maximum likelihood.

    The location ``theta`` is held fixed (defaulting to the sample
    minimum); only shape and scale are optimized, so ``n_params`` is 2.
    Raises :class:`FitError` if the optimizer does not converge.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 10:
        raise ValueError("need at least 10 samples")
    if theta is None:
        theta = float(x.min())
    if np.any(x < theta):
        raise ValueError("samples must be >= theta")
    excess = x - theta
    n = int(x.size)

    def nll(t):
        k = math.exp(t[0])
        sigma = math.exp(t[1])
        return n * math.log(sigma) + (1.0 + 1.0 / k) * float(
            np.sum(np.log1p(k * excess / sigma))
        )

    m = float(excess.mean())
    v = float(excess.var())
    k0 = min(max((1.0 - m * m / v) / 2.0 if v > 0 else 0.1, 0.02), 0.45)
    sigma0 = max(m * (1.0 - k0), 1e-12)
    res = optimize.minimize(
        nll,
        [math.log(k0), math.log(sigma0)],
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-10, "maxiter": 2000},
    )
    if not res.success:
        raise FitError(f"generalized Pareto fit did not converge: {res.message}")
    k_hat = math.exp(res.x[0])
    sigma_hat = math.exp(res.x[1])
    loglik = -float(res.fun)
    bic = 2 * math.log(n) - 2.0 * loglik
    return FitReport(
        params={"k": k_hat, "sigma": sigma_hat, "theta": float(theta)},
        n_params=2,
        loglik=loglik,
        bic=bic,
        n=n,
    )


def lsq_exponential_of_pareto(p: TruncatedPareto) -> float:
    """Mean of the truncated exponential closest to ``p`` in squared density error.

    This is the anchor the tilted proposal family is built around: the
    heavy-tailed inverse-range law is replaced by the best exponential
    approximation on the same truncation range.  The search must bracket
    an interior minimum; hitting the boundary of the search grid raises
    :class:`FitError`.
    """

    def objective(lam: float) -> float:
        g = TruncatedExponential(lam, p.lo, p.hi)
        val, _ = integrate.quad(
            lambda x: (g.pdf(x) - p.pdf(x)) ** 2, p.lo, p.hi, limit=200
        )
        return float(val)

    m = p.mean() - p.lo
    grid = np.exp(np.linspace(math.log(m / 100.0), math.log(m * 100.0), 41))
    vals = [objective(g) for g in grid]
    j = int(np.argmin(vals))
    if j == 0 or j == len(grid) - 1:
        raise FitError("no interior least-squares minimum bracketed")
    res = optimize.minimize_scalar(
        objective, bounds=(grid[j - 1], grid[j + 1]), method="bounded",
        options={"xatol": 1e-12},
    )
    if not res.success:
        raise FitError(f"least-squares exponential search failed: {res.message}")
    return float(res.x)

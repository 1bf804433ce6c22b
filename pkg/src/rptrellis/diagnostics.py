"""Empirical checks of the necessary conditions an asymptotically optimal
code has to satisfy: first and second moments of the error, vanishing
autocovariance of the reproduction, marginal convergence in squared-error
transport distance, and an entropy rate of the encoder output close to R
(with Marton's inequality turning the entropy gap into a d-bar bound).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .ratedist import Kind, ReproductionDistribution

__all__ = [
    "moment_conditions",
    "covariance_sequence",
    "whiteness_band",
    "default_word_length",
    "plug_in_entropy_rate",
    "symbols_to_bits",
    "marton_bound",
    "marginal_t2",
    "scatter_pairs",
    "DiagnosticsReport",
]


def _pair(x, xhat):
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape or x.ndim != 1:
        raise ValueError("x and xhat must be 1-D and of equal length")
    if x.size < 2:
        raise ValueError("need at least two samples")
    return x, xhat


def moment_conditions(x, xhat, d_target: float, source_mean: float | None = None,
                      source_variance: float | None = None) -> dict:
    """Error moments with eps = xhat - x, and their deviations from the optimal-code targets.

    Targets: E(xhat) = E(x), Cov(x, xhat) / Var(xhat) = 1,
    Var(xhat) = Var(x) - D, Var(eps) = D, E(eps) = 0, E(eps xhat) = 0.
    ``source_mean``/``source_variance`` default to the sample values of x.
    """
    x, xhat = _pair(x, xhat)
    eps = xhat - x
    mx = float(np.mean(x)) if source_mean is None else float(source_mean)
    vx = float(np.var(x)) if source_variance is None else float(source_variance)
    mean_hat = float(np.mean(xhat))
    var_hat = float(np.var(xhat))
    cov = float(np.mean((x - x.mean()) * (xhat - mean_hat)))
    ratio = cov / var_hat if var_hat > 0 else (1.0 if np.array_equal(x, xhat) else math.nan)
    out = {
        "mean_hat": mean_hat,
        "var_hat": var_hat,
        "cov_x_xhat": cov,
        "cov_ratio": ratio,
        "error_mean": float(np.mean(eps)),
        "error_var": float(np.var(eps)),
        "error_xhat_corr": float(np.mean(eps * xhat)),
        "mse": float(np.mean(eps * eps)),
    }
    out["dev_mean"] = mean_hat - mx
    out["dev_ratio"] = ratio - 1.0
    out["dev_var_hat"] = var_hat - (vx - d_target)
    out["dev_error_var"] = out["error_var"] - d_target
    return out


def covariance_sequence(xhat, max_lag: int, include_zero: bool = False) -> np.ndarray:
    """K(k) = sum_i (x_i - m)(x_{i+k} - m) / (n - k) for k = 1..max_lag (or 0..max_lag)."""
    v = np.asarray(xhat, dtype=np.float64)
    n = v.size
    if max_lag < 1 or max_lag >= n / 10:
        raise ValueError(f"max_lag must satisfy 1 <= max_lag < n/10 (n={n})")
    c = v - v.mean()
    lags = range(0 if include_zero else 1, max_lag + 1)
    return np.array([np.dot(c[: n - k], c[k:]) / (n - k) for k in lags])


def whiteness_band(xhat) -> float:
    """3 Var / sqrt(n): the pass band for |K(k)|, k >= 1."""
    v = np.asarray(xhat, dtype=np.float64)
    return 3.0 * float(np.var(v)) / math.sqrt(v.size)


def default_word_length(n_bits: int) -> int:
    return max(1, int(math.floor(math.log2(n_bits / 200.0))))


def symbols_to_bits(symbols, R: int) -> np.ndarray:
    """Flatten R-bit symbols into a bit stream, most significant bit first."""
    s = np.asarray(symbols, dtype=np.int64)
    shifts = np.arange(R - 1, -1, -1)
    return ((s[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def plug_in_entropy_rate(bits, word_length: int | None = None) -> tuple[float, int]:
    """Empirical entropy of overlapping ``word_length``-bit words, per bit.

    Returns ``(estimate, word_length)``.  The default word length is
    floor(log2(n / 200)); any word length must leave at least 100 samples
    per possible word.
    """
    b = np.asarray(bits).astype(np.int64).ravel()
    n = b.size
    if n < 200:
        raise ValueError("need at least 200 bits")
    if np.any((b != 0) & (b != 1)):
        raise ValueError("bits must be 0 or 1")
    k = default_word_length(n) if word_length is None else int(word_length)
    if k < 1 or (1 << k) > n / 100:
        raise ValueError(f"word length {k} too long for {n} bits (need 2^k <= n/100)")
    m = n - k + 1
    words = np.zeros(m, dtype=np.int64)
    for j in range(k):
        words = (words << 1) | b[j:j + m]
    counts = np.bincount(words, minlength=1 << k)
    counts = counts[counts > 0].astype(np.float64)
    p = counts / m
    h = float(-(p * np.log2(p)).sum()) / k
    return max(0.0, min(1.0, h)), k


def marton_bound(rate: float, entropy_estimate: float) -> float:
    """sqrt((ln 2 / 2) (R - H)), with negative gaps clamped to 0."""
    return math.sqrt(0.5 * math.log(2.0) * max(0.0, rate - entropy_estimate))


def marginal_t2(samples, target: ReproductionDistribution) -> float:
    """Squared-error transport cost between the empirical law of ``samples`` and ``target``.

    Both sides are coupled through their quantile functions (left-continuous
    empirical inverse), and the integral over u is done exactly on the merged
    breakpoints.
    """
    s = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = s.size
    if n < 100:
        raise ValueError("need at least 100 samples")
    # empirical quantile equals s[i] on (i/n, (i+1)/n]
    if target.kind is Kind.DISCRETE:
        y = np.asarray(target.support, dtype=np.float64)
        if y.size == 0:
            raise ValueError("empty target support")
        cum = np.asarray(target.cumulative, dtype=np.float64)
        edges = np.union1d(np.arange(n + 1) / n, np.concatenate([[0.0], cum]))
        edges = edges[(edges >= 0.0) & (edges <= 1.0)]
        mid = 0.5 * (edges[:-1] + edges[1:])
        width = np.diff(edges)
        emp = s[np.minimum((mid * n).astype(np.int64), n - 1)]
        tgt = y[np.minimum(np.searchsorted(cum, mid, side="left"), y.size - 1)]
        return float(math.fsum(width * (emp - tgt) ** 2))

    mu, sd = float(target.mean), math.sqrt(float(target.variance))
    if sd == 0.0:
        return float(math.fsum((s - mu) ** 2) / n)
    # per cell (a, b]: int (s - mu - sd z)^2 du with z = ndtri(u)
    # int z du = phi(z_a) - phi(z_b), int z^2 du = [Phi(z) - z phi(z)]_a^b
    u = np.arange(n + 1) / n
    z = special.ndtri(u)
    phi = np.zeros(n + 1)
    zphi = np.zeros(n + 1)
    inner = slice(1, n)
    phi[inner] = np.exp(-0.5 * z[inner] ** 2) / math.sqrt(2.0 * math.pi)
    zphi[inner] = z[inner] * phi[inner]
    i1 = phi[:-1] - phi[1:]
    i2 = np.diff(u - zphi)
    d = s - mu
    cell = d * d / n - 2.0 * d * sd * i1 + sd * sd * i2
    return max(0.0, float(math.fsum(cell)))


def scatter_pairs(xhat) -> np.ndarray:
    """Adjacent pairs (xhat_n, xhat_{n+1}) as an (n-1, 2) array."""
    v = np.asarray(xhat, dtype=np.float64)
    if v.size < 2:
        raise ValueError("need at least two samples")
    return np.column_stack([v[:-1], v[1:]])


@dataclass
class DiagnosticsReport:
    mean_hat: float = math.nan
    var_hat: float = math.nan
    cov_x_xhat: float = math.nan
    error_mean: float = math.nan
    error_var: float = math.nan
    error_xhat_corr: float = math.nan
    covariance_seq: list = field(default_factory=list)
    whiteness_band: float = math.nan
    entropy_rate_estimate: float = math.nan
    word_length: int = 0
    marton_bound: float = math.nan
    marginal_t2: float = math.nan
    extra: dict = field(default_factory=dict)

    @classmethod
    def build(cls, xhat, *, x=None, d_target=None, symbols=None, R=None, target=None,
              max_lag=10, source_mean=None, source_variance=None, word_length=None):
        xhat = np.asarray(xhat, dtype=np.float64)
        rep = cls(mean_hat=float(xhat.mean()), var_hat=float(xhat.var()))
        if x is not None:
            m = moment_conditions(x, xhat, d_target if d_target is not None else 0.0,
                                  source_mean, source_variance)
            rep.cov_x_xhat = m["cov_ratio"]
            rep.error_mean = m["error_mean"]
            rep.error_var = m["error_var"]
            rep.error_xhat_corr = m["error_xhat_corr"]
            rep.extra.update({k: m[k] for k in ("mse", "dev_mean", "dev_ratio", "dev_var_hat", "dev_error_var")})
        if xhat.size > 10 * max_lag:
            k = covariance_sequence(xhat, max_lag)
            rep.covariance_seq = [[i + 1, float(v)] for i, v in enumerate(k)]
            rep.whiteness_band = whiteness_band(xhat)
        if symbols is not None and R is not None:
            bits = symbols_to_bits(symbols, R)
            if bits.size >= 200:
                h, wl = plug_in_entropy_rate(bits, word_length)
                rep.entropy_rate_estimate = h * R
                rep.word_length = wl
                rep.marton_bound = marton_bound(R, h * R)
        if target is not None and xhat.size >= 100:
            rep.marginal_t2 = marginal_t2(xhat, target)
        return rep

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def covariance_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lag", "autocovariance"])
        for lag, v in self.covariance_seq:
            w.writerow([lag, repr(v)])
        return buf.getvalue()

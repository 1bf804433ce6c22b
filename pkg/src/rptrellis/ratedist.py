"""First-order distortion-rate values and Shannon-optimal reproduction laws.

Squared-error distortion throughout.  The Gaussian case is analytic; for
the uniform and Laplacian sources the optimum reproduction is discrete, and
is found in three steps:

1. Blahut-Arimoto on a fine discretization of the source, with the
   reproduction alphabet equal to the source grid and the Lagrange slope
   ``beta`` solved until the rate hits the target.
2. A small starting support, 2^ceil(R) + 1 atoms at quantiles of the
   Blahut output law (``cluster_support`` gives the raw clustered law).
3. The fixed-cardinality mapping iteration (free reproduction points,
   centroid updates) with ``beta`` solved on the rate, on a finer grid.
   Atoms are seeded where the optimality condition c(y) <= 1 is violated,
   until growth stops paying off.

Rates are in bits, slopes ``beta`` are per nat.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from ._kernels import mapping_squarem
from .sources import Family, SourceModel, cdf as source_cdf

__all__ = [
    "Kind",
    "ReproductionDistribution",
    "RDPoint",
    "BlahutResult",
    "ConvergenceError",
    "gaussian_distortion_rate",
    "discretize_source",
    "blahut",
    "blahut_at_rate",
    "cluster_support",
    "refine_support",
    "anneal_support",
    "support_condition",
    "find_shannon_reproduction",
    "cdf_of_reproduction",
    "inverse_cdf_of_reproduction",
]

log = logging.getLogger(__name__)

LN2 = math.log(2.0)


class ConvergenceError(RuntimeError):
    """An iteration stopped before meeting its tolerance."""

    def __init__(self, msg, gap=float("nan")):
        super().__init__(msg)
        self.gap = gap


class Kind(str, enum.Enum):
    DISCRETE = "discrete_pmf"
    GAUSSIAN = "gaussian_cdf"


@dataclass(frozen=True)
class ReproductionDistribution:
    kind: Kind
    support: tuple = ()
    pmf: tuple = ()
    mean: float = 0.0
    variance: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.DISCRETE:
            s = np.asarray(self.support, dtype=np.float64)
            p = np.asarray(self.pmf, dtype=np.float64)
            if s.ndim != 1 or s.size == 0 or s.shape != p.shape:
                raise ValueError("support and pmf must be equal-length, non-empty")
            if np.any(np.diff(s) <= 0):
                raise ValueError("support must be strictly increasing")
            if np.any(p <= 0):
                raise ValueError("pmf entries must be positive")
            if abs(p.sum() - 1.0) > 1e-9:
                raise ValueError(f"pmf sums to {p.sum()!r}, not 1")
            object.__setattr__(self, "support", tuple(float(v) for v in s))
            object.__setattr__(self, "pmf", tuple(float(v) for v in p))
            object.__setattr__(self, "mean", float(s @ p))
            object.__setattr__(self, "variance", float(((s - s @ p) ** 2) @ p))
        elif self.variance < 0:
            raise ValueError("variance must be >= 0")

    @classmethod
    def discrete(cls, support, pmf):
        p = np.asarray(pmf, dtype=np.float64)
        return cls(Kind.DISCRETE, tuple(support), tuple(p / p.sum()))

    @classmethod
    def gaussian(cls, mean, variance):
        return cls(Kind.GAUSSIAN, mean=float(mean), variance=float(variance))

    @property
    def cumulative(self) -> np.ndarray:
        """Right endpoints of the cumulative-mass cells (DiscretePMF only)."""
        c = np.cumsum(self.pmf)
        c[-1] = 1.0
        return c

    def cdf(self, x):
        return cdf_of_reproduction(self, x)

    def inverse_cdf(self, u):
        return inverse_cdf_of_reproduction(self, u)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "support": list(self.support),
            "pmf": list(self.pmf),
            "mean": self.mean,
            "variance": self.variance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReproductionDistribution":
        kind = Kind(d["kind"])
        if kind is Kind.DISCRETE:
            return cls(kind, tuple(d["support"]), tuple(d["pmf"]))
        return cls(kind, mean=float(d["mean"]), variance=float(d["variance"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ReproductionDistribution":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class RDPoint:
    rate: float
    distortion: float
    reproduction: ReproductionDistribution
    beta: float = float("nan")

    def __post_init__(self):
        if self.rate < 0 or self.distortion < 0:
            raise ValueError("rate and distortion must be non-negative")

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "distortion": self.distortion,
            "beta": self.beta,
            "reproduction": self.reproduction.to_dict(),
        }


def cdf_of_reproduction(dist: ReproductionDistribution, x):
    x = np.asarray(x, dtype=np.float64)
    if dist.kind is Kind.GAUSSIAN:
        if dist.variance == 0:
            out = (x >= dist.mean).astype(np.float64)
        else:
            out = special.ndtr((x - dist.mean) / math.sqrt(dist.variance))
    else:
        idx = np.searchsorted(np.asarray(dist.support), x, side="right")
        out = np.concatenate(([0.0], dist.cumulative))[idx]
    return out[()] if out.ndim == 0 else out


def inverse_cdf_of_reproduction(dist: ReproductionDistribution, u):
    """``inf{y : F(y) >= u}``; at an exact cell boundary the lower point wins."""
    u = np.asarray(u, dtype=np.float64)
    if np.any(~((u > 0.0) & (u < 1.0))):
        raise ValueError("inverse CDF requires 0 < u < 1")
    if dist.kind is Kind.GAUSSIAN:
        out = dist.mean + math.sqrt(dist.variance) * special.ndtri(u)
    else:
        c = dist.cumulative
        idx = np.minimum(np.searchsorted(c, u, side="left"), c.size - 1)
        out = np.asarray(dist.support)[idx]
    return out[()] if out.ndim == 0 else np.asarray(out, dtype=np.float64)


def gaussian_distortion_rate(variance: float, rate: float) -> RDPoint:
    if not variance > 0:
        raise ValueError("variance must be positive")
    if rate < 0:
        raise ValueError("rate must be non-negative")
    d = variance * 2.0 ** (-2.0 * rate)
    repro = ReproductionDistribution.gaussian(0.0, variance - d)
    return RDPoint(float(rate), d, repro, beta=1.0 / (2.0 * d))


# --- discretized Blahut-Arimoto -------------------------------------------------

# default grid extents, in standard deviations for the unbounded families
LAPLACIAN_SPAN = 5.2
GAUSSIAN_SPAN = 8.0


def discretize_source(model: SourceModel, n_points: int = 2000, span: float | None = None):
    """Midpoint grid with exact cell masses from the source CDF.

    Uniform01 covers [0, 1]; the other families cover ``mean +- span*std``
    with the two tail masses folded into the end cells.
    """
    if n_points < 2:
        raise ValueError("need at least 2 grid points")
    if model.family is Family.UNIFORM01:
        lo, hi = 0.0, 1.0
    else:
        if span is None:
            span = LAPLACIAN_SPAN if model.family is Family.LAPLACIAN else GAUSSIAN_SPAN
        lo, hi = model.mean - span * model.std, model.mean + span * model.std
    edges = np.linspace(lo, hi, n_points + 1)
    points = 0.5 * (edges[:-1] + edges[1:])
    c = source_cdf(model, edges)
    c[0], c[-1] = 0.0, 1.0
    weights = np.diff(c)
    return points, weights / weights.sum()


@dataclass
class BlahutResult:
    rate: float            # bits, mutual information of the final test channel
    distortion: float
    pmf: np.ndarray        # over the reproduction grid
    beta: float
    gap: float             # Blahut upper minus lower rate bound, bits
    iterations: int
    converged: bool
    objective: list = field(default_factory=list)   # Lagrangian per check, nats

    @property
    def lower_rate(self) -> float:
        return self.rate - self.gap


_DEAD = 1e-30   # reproduction atoms below this are dropped from the active set
_CHECK_EVERY = 10


def _blahut_run(points, weights, beta, init_pmf, max_iter, tol):
    x = np.asarray(points, dtype=np.float64)
    p = np.asarray(weights, dtype=np.float64)
    n = x.size
    if n < 2:
        raise ValueError("degenerate grid: need at least 2 points")
    if not beta > 0:
        raise ValueError("beta must be positive")
    d_full = (x[:, None] - x[None, :]) ** 2
    a_full = np.exp(-beta * d_full)

    q = np.full(n, 1.0 / n) if init_pmf is None else np.array(init_pmf, dtype=np.float64)
    q = np.where(q > _DEAD, q, 0.0)
    q /= q.sum()
    active = np.flatnonzero(q)
    a = a_full[:, active]
    qa = q[active]

    tol_nats = tol * LN2
    objective = []
    gap = math.inf
    it = 0
    while True:
        # full-grid check: Blahut bounds need c_j on every reproduction point
        z = a @ qa
        c = a_full.T @ (p / z)
        logc = np.log(c)
        ca = c[active]
        gap = float(logc.max() - np.sum(qa * ca * logc[active]))
        objective.append(float(-np.sum(p * np.log(z))))
        if gap < tol_nats or it >= max_iter:
            break
        dead = np.flatnonzero(q == 0)
        if dead.size and logc[dead].max() > tol_nats:
            # a pruned atom became useful again; bring it back with tiny mass
            revive = dead[logc[dead] > tol_nats]
            q[active] = qa
            q[revive] = qa.max() * 1e-9
            q /= q.sum()
            active = np.flatnonzero(q)
            a = a_full[:, active]
            qa = q[active]
            continue
        for _ in range(_CHECK_EVERY):
            z = a @ qa
            qa = qa * (a.T @ (p / z))
            it += 1
        qa /= qa.sum()
        keep = qa > _DEAD
        q[:] = 0.0
        q[active] = np.where(keep, qa, 0.0)
        if not keep.all():
            active = active[keep]
            a = a_full[:, active]
            qa = qa[keep] / qa[keep].sum()
            q[active] = qa

    # final test channel from the last multiplicative update
    q[:] = 0.0
    q[active] = qa
    z = a @ qa
    post_mass = a * qa[None, :] / z[:, None]
    dist = float(np.sum(p[:, None] * post_mass * d_full[:, active]))
    out = qa * (a.T @ (p / z))
    q_out = np.zeros(n)
    q_out[active] = out
    logc_a = np.log(out / qa)
    rate_nats = float(-beta * dist - np.sum(p * np.log(z)) - np.sum(out * logc_a))
    return BlahutResult(
        rate=max(rate_nats, 0.0) / LN2,
        distortion=dist,
        pmf=q_out / q_out.sum(),
        beta=float(beta),
        gap=gap / LN2,
        iterations=it,
        converged=gap < tol_nats,
        objective=objective,
    )


def blahut(points, weights, beta, init_pmf=None, max_iter=20000, tol=1e-3) -> BlahutResult:
    """Blahut-Arimoto for squared error at slope ``-beta``.

    The reproduction alphabet is the source grid itself.  Stops once the
    gap between Blahut's upper and lower rate bounds falls below ``tol``
    bits; raises ``ConvergenceError`` carrying the gap if ``max_iter`` runs
    out first.
    """
    if abs(float(np.sum(weights)) - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    res = _blahut_run(points, weights, beta, init_pmf, max_iter, tol)
    if not res.converged:
        raise ConvergenceError(
            f"Blahut-Arimoto did not converge in {max_iter} iterations (gap {res.gap:.3g} bits)",
            gap=res.gap,
        )
    return res


def _solve_beta(evaluate, target_rate, beta0, rate_tol, step=2.0, max_evals=60):
    """Find beta with rate(beta) within ``rate_tol`` of the target.

    rate(beta) is nondecreasing, so the bracket is grown geometrically by
    ``step`` from ``beta0`` and then closed with Brent's method.  ``evaluate``
    may keep warm-start state between calls.
    """
    cache = {}

    def f(beta):
        res = evaluate(beta)
        cache["last"] = res
        if abs(res.rate - target_rate) <= rate_tol:
            raise _Hit(res)
        return res.rate - target_rate

    try:
        lo = hi = beta0
        flo = fhi = f(beta0)
        n = 1
        while flo > 0 and n < max_evals:
            hi, fhi = lo, flo
            lo /= step
            flo = f(lo)
            n += 1
        while fhi < 0 and n < max_evals:
            lo, flo = hi, fhi
            hi *= step
            fhi = f(hi)
            n += 1
        if flo > 0 or fhi < 0:
            raise ConvergenceError(
                f"could not bracket beta for rate {target_rate} (last rate {cache['last'].rate:.6g})",
                gap=abs(cache["last"].rate - target_rate),
            )
        optimize.brentq(f, lo, hi, xtol=1e-12, rtol=1e-12, maxiter=max_evals)
    except _Hit as hit:
        return hit.result
    except RuntimeError as err:
        if isinstance(err, ConvergenceError):
            raise
        last = cache["last"]
        raise ConvergenceError(f"beta search failed: {err}", gap=abs(last.rate - target_rate)) from err
    last = cache["last"]
    if abs(last.rate - target_rate) <= rate_tol:
        return last
    raise ConvergenceError(
        f"rate {last.rate:.6g} not within {rate_tol} of {target_rate}",
        gap=abs(last.rate - target_rate),
    )


class _Hit(Exception):
    def __init__(self, result):
        self.result = result


def _beta_guess(points, weights, rate):
    var = float(weights @ (points - weights @ points) ** 2)
    return 1.0 / (2.0 * var * 2.0 ** (-2.0 * rate))


_COARSE_POINTS = 250


def blahut_at_rate(points, weights, rate, rate_tol=1e-3, max_iter=20000, tol=None,
                   beta0=None, init_pmf=None, warm=True) -> BlahutResult:
    """Blahut-Arimoto with ``beta`` solved so the rate lands within ``rate_tol``.

    Large grids first locate ``beta`` on a coarser resampling of the same
    source, then finish on the full grid from a warm start.  Warm starts
    are only worth it for small ``beta`` moves: atoms pruned at one slope
    regrow very slowly at another.
    """
    points = np.asarray(points, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    tol = rate_tol if tol is None else tol
    step = 2.0
    if beta0 is None and points.size > 2 * _COARSE_POINTS:
        groups = np.array_split(np.arange(points.size), _COARSE_POINTS)
        cw = np.array([weights[g].sum() for g in groups])
        cx = np.array([weights[g] @ points[g] / max(weights[g].sum(), 1e-300) for g in groups])
        ok = cw > 0
        coarse = blahut_at_rate(cx[ok], cw[ok] / cw[ok].sum(), rate, rate_tol, max_iter, tol, warm=False)
        beta0 = coarse.beta
        dens = np.zeros(points.size)
        for g, m in zip((g for g, k in zip(groups, ok) if k), coarse.pmf):
            dens[g] = m / g.size
        init_pmf = np.maximum(dens, 1e-12 * dens.max())
        step = 1.02
    if beta0 is None:
        beta0 = _beta_guess(points, weights, rate)
    state = {"pmf": init_pmf}

    def evaluate(beta):
        res = _blahut_run(points, weights, beta, state["pmf"], max_iter, tol)
        if not res.converged:
            raise ConvergenceError(
                f"Blahut-Arimoto did not converge at beta={beta:.6g} (gap {res.gap:.3g} bits)",
                gap=res.gap,
            )
        if warm:
            state["pmf"] = res.pmf
        log.debug("blahut beta=%.6g rate=%.6f D=%.6g it=%d", beta, res.rate, res.distortion, res.iterations)
        return res

    return _solve_beta(evaluate, rate, beta0, rate_tol, step=step)


def cluster_support(points, pmf, prune_threshold=1e-6):
    """Merge contiguous surviving grid atoms into centroids, renormalized."""
    points = np.asarray(points, dtype=np.float64)
    pmf = np.asarray(pmf, dtype=np.float64)
    keep = np.flatnonzero(pmf >= prune_threshold)
    if keep.size == 0:
        raise ValueError("no atom survives the prune threshold")
    runs = np.split(keep, np.flatnonzero(np.diff(keep) > 1) + 1)
    mass = np.array([pmf[r].sum() for r in runs])
    centers = np.array([pmf[r] @ points[r] / pmf[r].sum() for r in runs])
    return centers, mass / mass.sum()


@dataclass
class _Mapped:
    rate: float
    distortion: float
    support: np.ndarray
    pmf: np.ndarray
    beta: float
    iterations: int


def _mapping_run(x, p, beta, y, q, max_iter=5000, tol=1e-9):
    """Fixed-cardinality RD iteration: Gibbs channel, marginal, centroid."""
    y = np.array(y, dtype=np.float64)
    q = np.array(q, dtype=np.float64)
    it = mapping_squarem(x, p, float(beta), y, q, max_iter, tol)
    xx = x[:, None]
    d = (xx - y[None, :]) ** 2
    logw = np.log(q)[None, :] - beta * d
    m = logw.max(axis=1)
    log_z = m + np.log(np.exp(logw - m[:, None]).sum(axis=1))
    post = np.exp(logw - log_z[:, None])
    dist = float(np.sum(p[:, None] * post * d))
    rate_nats = float(-beta * dist - p @ log_z)
    return _Mapped(max(rate_nats, 0.0) / LN2, dist, y, q, float(beta), it)


def support_condition(points, weights, support, pmf, beta, probe=None):
    """c(y) = sum_x p(x) exp(-beta d(x,y)) / Z(x) on ``probe`` (default: the grid).

    An optimal reproduction law has c <= 1 everywhere, with equality on its
    support.
    """
    x = np.asarray(points, dtype=np.float64)
    p = np.asarray(weights, dtype=np.float64)
    y = np.asarray(support, dtype=np.float64)
    probe = x if probe is None else np.asarray(probe, dtype=np.float64)
    logw = np.log(np.asarray(pmf))[None, :] - beta * (x[:, None] - y[None, :]) ** 2
    m = logw.max(axis=1)
    log_z = m + np.log(np.exp(logw - m[:, None]).sum(axis=1))
    out = np.empty(probe.size)
    for k in range(0, probe.size, 512):
        blk = probe[k:k + 512]
        out[k:k + 512] = np.exp(np.log(p)[:, None] - beta * (x[:, None] - blk[None, :]) ** 2
                                - log_z[:, None]).sum(axis=0)
    return out


def _merge_pass(y, q, merge_tol, prune_threshold):
    order = np.argsort(y)
    y, q = y[order], q[order]
    changed = False
    light = q < prune_threshold
    if light.any() and not light.all():
        y, q = y[~light], q[~light]
        changed = True
    while y.size > 1:
        close = np.flatnonzero(np.diff(y) < merge_tol)
        if close.size == 0:
            break
        i = close[0]
        qi = q[i] + q[i + 1]
        yi = (q[i] * y[i] + q[i + 1] * y[i + 1]) / qi
        y = np.concatenate([y[:i], [yi], y[i + 2:]])
        q = np.concatenate([q[:i], [qi], q[i + 2:]])
        changed = True
    return y, q / q.sum(), changed


POLISH_WINDOW = 1e-3


def _solve_at_cardinality(x, p, y, q, rate, beta0, rate_tol, merge_tol, prune_threshold):
    """Mapping iteration with ``beta`` solved on the rate; merges and prunes until stable."""
    res = None
    for _ in range(50):
        state = {"y": y, "q": q}

        def evaluate(b):
            r = _mapping_run(x, p, b, state["y"], state["q"])
            if abs(r.rate - rate) < POLISH_WINDOW:
                # near the root rate(beta) must be smooth, so converge fully
                r = _mapping_run(x, p, b, r.support, r.pmf, max_iter=10_000, tol=1e-12)
            state["y"], state["q"] = r.support, r.pmf
            return r

        res = _solve_beta(evaluate, rate, beta0, rate_tol, step=1.05)
        beta0 = res.beta
        y, q, changed = _merge_pass(res.support, res.pmf, merge_tol, prune_threshold)
        if not changed:
            break
    return _Mapped(res.rate, res.distortion, y, q, res.beta, res.iterations)


def _seed_pair(x, c, center, merge_tol):
    j = int(np.argmax(c))
    new = [x[j]]
    if center is not None and abs(x[j] - center) >= merge_tol:
        new.append(2.0 * center - x[j])
    return new, c[j]


def _until_rate_reachable(x, p, y, q, rate, beta, merge_tol, prune_threshold, center, seed_mass,
                          kkt_tol=1e-4, max_rounds=200):
    """Grow the support at fixed ``beta`` until its rate there reaches ``rate``.

    A support with too few atoms caps the rate (at most log2 of its size,
    much less for peaked sources), and then no ``beta`` can be bracketed.
    """
    size = 0
    for _ in range(max_rounds):
        r = _mapping_run(x, p, beta, y, q, max_iter=2000, tol=1e-9)
        y, q, _ = _merge_pass(r.support, r.pmf, merge_tol, prune_threshold)
        if r.rate >= rate or y.size <= size:
            # reached, or saturated at this beta: seeded atoms get merged back
            break
        size = y.size
        new, cmax = _seed_pair(x, support_condition(x, p, y, q, beta), center, merge_tol)
        if cmax <= 1.0 + kkt_tol:
            break
        y = np.concatenate([y, new])
        q = np.concatenate([q, np.full(len(new), seed_mass)])
        order = np.argsort(y)
        y, q = y[order], q[order] / q.sum()
    return y, q


def refine_support(points, weights, support, pmf, rate, beta0, rate_tol=1e-6,
                   merge_tol=None, prune_threshold=1e-6, grow=True, kkt_tol=1e-4,
                   max_rounds=100, seed_mass=1e-4, center=None, min_gain=1e-4):
    """Polish a finite support so the rate hits ``rate``, growing it greedily.

    Each round solves the fixed-cardinality problem (atoms closer than
    ``merge_tol`` are merged, atoms lighter than ``prune_threshold``
    dropped).  With ``grow``, an atom is then seeded where the support
    condition is largest, provided it exceeds ``1 + kkt_tol``; for a source
    symmetric about ``center`` the mirror image is seeded too.  Growth
    stops when a round fails to raise the cardinality, or when the larger
    support lowers the distortion by a relative amount below ``min_gain``
    (the smaller support is then kept).

    The result is a stationary point of the fixed-cardinality problem, not
    necessarily the global optimum: with ``min_gain > 0`` the support
    condition can remain mildly violated.
    """
    x = np.asarray(points, dtype=np.float64)
    p = np.asarray(weights, dtype=np.float64)
    y = np.asarray(support, dtype=np.float64)
    q = np.asarray(pmf, dtype=np.float64)
    if merge_tol is None:
        merge_tol = float(np.min(np.diff(x)))
    try:
        cur = _solve_at_cardinality(x, p, y, q, rate, beta0, rate_tol, merge_tol, prune_threshold)
    except ConvergenceError:
        # too few atoms to carry the rate at any slope
        y, q = _until_rate_reachable(x, p, y, q, rate, beta0, merge_tol, prune_threshold, center, seed_mass,
                                     kkt_tol)
        cur = _solve_at_cardinality(x, p, y, q, rate, beta0, rate_tol, merge_tol, prune_threshold)
    for _ in range(max_rounds if grow else 0):
        new, cmax = _seed_pair(x, support_condition(x, p, cur.support, cur.pmf, cur.beta), center, merge_tol)
        if cmax <= 1.0 + kkt_tol:
            break
        log.debug("seeding %s (c = %.6g) onto %d atoms", new, cmax, cur.support.size)
        y = np.concatenate([cur.support, new])
        q = np.concatenate([cur.pmf, np.full(len(new), seed_mass)])
        order = np.argsort(y)
        nxt = _solve_at_cardinality(x, p, y[order], q[order] / q.sum(), rate, cur.beta, rate_tol,
                                    merge_tol, prune_threshold)
        if nxt.support.size <= cur.support.size:
            cur = nxt
            break
        gain = (cur.distortion - nxt.distortion) / cur.distortion
        if gain < min_gain:
            log.debug("growth to %d atoms gains only %.3g; keeping %d", nxt.support.size, gain, cur.support.size)
            break
        cur = nxt
    return cur


def anneal_support(points, weights, rate, prune_threshold=1e-7, growth=1.05, merge_tol=None):
    """Deterministic annealing: start from one atom at the mean and raise ``beta``.

    Every atom is split into a perturbed pair at each step; pairs that do
    not separate are merged back.  Stops at the first ``beta`` whose rate
    reaches ``rate`` and returns that (slightly overshooting) support,
    meant as a seed for ``refine_support``.
    """
    x = np.asarray(points, dtype=np.float64)
    p = np.asarray(weights, dtype=np.float64)
    mean = float(p @ x)
    var = float(p @ (x - mean) ** 2)
    delta = 1e-3 * math.sqrt(var)
    if merge_tol is None:
        merge_tol = 20.0 * delta
    y, q = np.array([mean]), np.array([1.0])
    beta = 0.25 / var
    for _ in range(2000):
        yy = np.concatenate([y - delta, y + delta])
        qq = np.concatenate([q, q]) / 2.0
        order = np.argsort(yy)
        r = _mapping_run(x, p, beta, yy[order], qq[order], max_iter=3000, tol=1e-10)
        y, q, _ = _merge_pass(r.support, r.pmf, merge_tol, prune_threshold)
        r = _mapping_run(x, p, beta, y, q, max_iter=1, tol=0.0)
        if r.rate >= rate:
            return y, q, beta
        beta *= growth
    raise ConvergenceError(f"annealing never reached rate {rate}")


def _quantile_seeds(points, pmf, k):
    cum = np.cumsum(pmf)
    idx = np.searchsorted(cum, (np.arange(k) + 0.5) / k * cum[-1])
    y = np.unique(points[np.minimum(idx, points.size - 1)])
    return y, np.full(y.size, 1.0 / y.size)


FINE_GRID_POINTS = 4000


def find_shannon_reproduction(model: SourceModel, rate: float, grid_points: int = 2000,
                              prune_threshold: float = 1e-6, span: float | None = None,
                              refine: bool = True, method: str = "greedy") -> RDPoint:
    """Shannon-optimal reproduction distribution at ``rate`` bits/symbol.

    Gaussian sources get the analytic answer.  Otherwise Blahut-Arimoto on
    ``grid_points`` cells fixes the slope, and the finite support is found
    on a finer grid by one of two routes:

    ``"greedy"``
        the smallest support able to carry the rate, 2^ceil(R) + 1 atoms at
        quantiles of the Blahut solution, grown one symmetric pair at a
        time by ``refine_support``.
    ``"anneal"``
        ``anneal_support`` from a single atom, then the same polish
        without growth.

    With ``refine=False`` the clustered Blahut solution is returned as is.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    if method not in ("greedy", "anneal"):
        raise ValueError(f"unknown method {method!r}")
    if model.family is Family.GAUSSIAN:
        pt = gaussian_distortion_rate(model.variance, rate)
        repro = ReproductionDistribution.gaussian(model.mean, pt.reproduction.variance)
        return RDPoint(pt.rate, pt.distortion, repro, pt.beta)

    points, weights = discretize_source(model, grid_points, span)
    ba = blahut_at_rate(points, weights, rate)
    support, pmf = cluster_support(points, ba.pmf, prune_threshold)
    log.info("blahut: beta=%.6g rate=%.6f D=%.6g, %d clusters", ba.beta, ba.rate, ba.distortion, support.size)
    if not refine:
        return RDPoint(ba.rate, ba.distortion, ReproductionDistribution.discrete(support, pmf), ba.beta)

    fine_points, fine_weights = discretize_source(model, max(grid_points, FINE_GRID_POINTS), span)
    merge_tol = points[1] - points[0]
    if method == "anneal":
        support, pmf, beta = anneal_support(fine_points, fine_weights, rate)
        m = refine_support(fine_points, fine_weights, support, pmf, rate, beta, merge_tol=merge_tol,
                           prune_threshold=prune_threshold, grow=False)
    else:
        support, pmf = _quantile_seeds(points, ba.pmf, 2 ** int(math.ceil(rate)) + 1)
        m = refine_support(fine_points, fine_weights, support, pmf, rate, ba.beta, merge_tol=merge_tol,
                           prune_threshold=prune_threshold, center=model.mean)
    return RDPoint(m.rate, m.distortion, ReproductionDistribution.discrete(m.support, m.pmf), m.beta)

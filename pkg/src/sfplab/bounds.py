"""Exact and quadrature oracles for the weight, box and coarse-graining bounds.

Pareto weight products reduce to one dimension: for ``W = (c/U)**(1/(tau-1))``
we have ``(tau-1) log W = log c + E`` with ``E ~ Exp(1)``, so
``(tau-1) log(W1 W2) = 2 log c + G`` with ``G ~ Gamma(2, 1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericError, PreconditionError, SizeError
from .model import (BoxGeometry, Constant, ModelParams, ParetoC, StandardPareto,
                    edge_probability)
from .rng import StreamKind, stream_key, uniform_ref, uniforms

_RELATIONS = {
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    # rate-only bound with no explicit constant: only a finite ratio is required
    "ratio": lambda a, b: b > 0 and math.isfinite(a / b),
}


@dataclass
class BoundsReport:
    """One oracle evaluation; ``verdict`` is derived from ``lhs``, ``relation`` and ``bound``."""

    lemma: str
    inputs: dict
    lhs: float
    bound: float
    relation: str = "<="
    slack: float = 0.0
    quadrature_error: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        if self.relation == ">=":
            return self.lhs >= self.bound - self.slack
        if self.relation == "<=":
            return self.lhs <= self.bound + self.slack
        return _RELATIONS[self.relation](self.lhs, self.bound)

    def to_dict(self):
        out = asdict(self)
        out["verdict"] = self.verdict
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=float)

    def csv_row(self):
        return [self.lemma, json.dumps(self.inputs, sort_keys=True), repr(self.lhs), repr(self.bound),
                self.relation, repr(self.slack), "" if self.quadrature_error is None else repr(self.quadrature_error),
                int(self.verdict)]


CSV_HEADER = ["lemma", "inputs", "lhs", "bound", "relation", "slack", "quadrature_error", "verdict"]


# ------------------------------------------------------------ max weight

def max_weight_conditional(n: int, K1: float, K2: float, tau: float, c: float = 1.0) -> BoundsReport:
    """Conditional probability that ``n`` weights above ``K1`` all stay below ``K2``."""
    smin = c ** (1.0 / (tau - 1.0))
    if not (n >= 1 and K2 >= K1 >= smin):
        raise PreconditionError(f"need n >= 1 and K2 >= K1 >= {smin}, got n={n}, K1={K1}, K2={K2}")
    # one shared x and log1p keep (1-x)^n <= e^{-nx} exact in floating point
    x = (K1 / K2) ** (tau - 1.0)
    lhs = math.exp(n * math.log1p(-x)) if x < 1 else 0.0
    bound = math.exp(-n * x)
    return BoundsReport("max_weight", {"n": n, "K1": K1, "K2": K2, "tau": tau, "c": c}, lhs, bound, "<=")


# ------------------------------------------------------- binomial tails

def log_binom_cdf_below(t: int, trials: int, q: float) -> float:
    """``log P(X < t)`` for ``X ~ Bin(trials, q)`` by summing pmf terms in log space."""
    if t <= 0:
        return -math.inf
    if t > trials:
        return 0.0
    if q <= 0:
        return 0.0
    if q >= 1:
        return -math.inf
    k = np.arange(t)
    logpmf = (special.gammaln(trials + 1) - special.gammaln(k + 1) - special.gammaln(trials - k + 1)
              + k * math.log(q) + (trials - k) * math.log1p(-q))
    return float(special.logsumexp(logpmf))


def big_weight_probability(N: int, beta: float, params: ModelParams) -> float:
    """``q = P(W > beta N^{alpha/2})`` for the exact Pareto tail, clipped to 1."""
    law = params.weight_law
    thr = beta * N ** (params.alpha / 2)
    if isinstance(law, Constant):
        return 1.0 if law.w0 > thr else 0.0
    return float(min(1.0, law.c * thr ** -(params.tau - 1.0)))


def big_degree_box_probability(N: int, beta: float, params: ModelParams,
                               exploratory: bool = False) -> BoundsReport:
    """Exact probability that an N-box holds at least ``ceil(ln N)`` heavy vertices.

    ``lhs`` is the exact probability and ``bound`` the second-moment lower
    bound; ``extra['log_complement']`` is ``log(1 - lhs)``, which keeps the
    trend visible after ``lhs`` rounds to 1.
    """
    if params.gamma >= 2 and not exploratory:
        raise PreconditionError(f"needs gamma < 2, got {params.gamma}")
    if N < 2:
        raise DomainError(f"N must be >= 2, got {N}")
    trials = N ** params.d
    q = big_weight_probability(N, beta, params)
    t = math.ceil(math.log(N))
    log_below = log_binom_cdf_below(t, trials, q)
    p = -math.expm1(log_below)
    mean, var = trials * q, trials * q * (1 - q)
    pz = (mean - t) ** 2 / (var + mean ** 2) if mean > t else 0.0
    return BoundsReport("big_degree_box", {"N": N, "beta": beta, "params": params.to_dict()},
                        p, pz, ">=", extra={"q": q, "threshold": t, "trials": trials,
                                            "log_complement": log_below})


def big_degree_trend(Ns, beta: float, params: ModelParams) -> dict:
    reps = [big_degree_box_probability(N, beta, params) for N in Ns]
    logc = [r.extra["log_complement"] for r in reps]
    return {"N": list(Ns), "P": [r.lhs for r in reps], "log_complement": logc,
            "increasing": all(b < a for a, b in zip(logc, logc[1:]))}


# -------------------------------------------------------- box distances

def box_distance_bound(d: int, k: int, N: int, v1, v2, u1, u2) -> BoundsReport:
    """``|u1 - u2| <= 3 d k N`` for points of two N-boxes ``k`` boxes apart."""
    v1, v2, u1, u2 = (np.asarray(a, dtype=np.int64) for a in (v1, v2, u1, u2))
    if int(np.abs(v1 - v2).sum()) != k * N:
        raise PreconditionError("box origins must be k*N apart in l1")
    for u, v in ((u1, v1), (u2, v2)):
        if np.any(u < v) or np.any(u > v + N - 1):
            raise DomainError("point outside its box")
    lhs = int(np.abs(u1 - u2).sum())
    return BoundsReport("box_distance", {"d": d, "k": k, "N": N}, lhs, 3 * d * k * N, "<=")


# ---------------------------------------------------- product weights

def _log_product_offset(law, tau: float) -> float:
    if isinstance(law, Constant):
        raise DomainError("product quadrature needs a Pareto law")
    return 2.0 * math.log(law.c) / (tau - 1.0)


def pareto_product_expectation(f, tau: float, c: float = 1.0, breakpoints=(), epsabs=0.0,
                               epsrel=1e-10, limit=200):
    """``E f(W1 W2)`` for independent exact-Pareto weights, by 1D quadrature.

    ``f`` takes the log of the product.  ``breakpoints`` are values of
    ``log(W1 W2)`` where ``f`` has kinks.
    """
    off = 2.0 * math.log(c) / (tau - 1.0)
    s = tau - 1.0

    def integrand(g):
        return f(off + g / s) * g * math.exp(-g)

    pts = sorted(b for b in ((x - off) * s for x in breakpoints) if b > 0)
    edges = [0.0] + pts + [math.inf]
    total, err = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(integrand, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit)
        total += val
        err += e
    return total, err


def product_weight_closed_form(u: float, tau: float, c: float = 1.0) -> float:
    """Closed form of ``E[(W1 W2 / u) ^ 1]`` for exact-Pareto weights.

    Writing ``s = tau - 1``, ``P(W1 W2 > v) = (c^2/v^s)(1 + s log(v / c^{2/s}))``
    above ``c^{2/s}``; integrating that tail up to ``u`` gives the value.
    """
    s = tau - 1.0
    v0 = c ** (2.0 / s)
    if u <= v0:
        return 1.0
    L = math.log(u / v0)
    # E[min(X/u, 1)] = (1/u) * integral_0^u P(X > v) dv, with v = v0 e^y above v0
    if abs(s - 1.0) < 1e-12:
        integral = v0 * (L + 0.5 * L * L)
    else:
        a = 1.0 - s
        e = math.exp(a * L)
        integral = v0 * ((e - 1.0) / a + s * ((L * e) / a - (e - 1.0) / a ** 2))
    return (v0 + integral) / u


def product_weight_expectation(u: float, tau: float, c: float = 1.0, method: str = "gamma",
                               epsrel: float = 1e-10) -> BoundsReport:
    """``E[(W1 W2 / u) ^ 1]`` by quadrature, against the decay bound.

    For ``tau > 2`` the bound is ``E[W]^2 / u``.  For ``tau <= 2`` the bound
    carries no explicit constant; ``bound`` is the rate ``log(u) u^{-(tau-1)}``
    and ``extra['ratio']`` is lhs over that rate.
    """
    if u < 1:
        raise DomainError(f"u must be >= 1, got {u}")
    logu = math.log(u)
    if method == "gamma":
        val, err = pareto_product_expectation(lambda lx: math.exp(min(lx - logu, 0.0)), tau, c,
                                              breakpoints=(logu,), epsrel=epsrel)
    elif method == "dblquad":
        s = tau - 1.0

        def f(y, x):
            return min(1.0, (c / x) ** (1 / s) * (c / y) ** (1 / s) / u)

        val, err = integrate.dblquad(f, 0.0, 1.0, 0.0, 1.0, epsabs=0.0, epsrel=max(epsrel, 1e-8))
    else:
        raise DomainError(f"unknown method {method!r}")
    if not np.isfinite(val):
        raise NumericError("product quadrature did not converge", estimate=val)
    if tau > 2:
        mean = c ** (1 / (tau - 1)) * (tau - 1) / (tau - 2)
        bound = mean ** 2 / u
        extra = {"mean_weight": mean}
    else:
        bound = logu * u ** -(tau - 1) if u > 1 else 1.0
        extra = {"ratio": val / bound if bound > 0 else math.inf}
    return BoundsReport("product_weights", {"u": u, "tau": tau, "c": c, "method": method},
                        val, bound, "<=" if tau > 2 else "ratio", quadrature_error=err, extra=extra)


def product_weight_decay(tau: float, c: float = 1.0, u_grid=None) -> dict:
    """Fitted log-log slope and constant of the product expectation over ``u_grid``.

    For ``tau <= 2`` the log factor is divided out before fitting.
    """
    u_grid = np.logspace(2, 6, 17) if u_grid is None else np.asarray(u_grid, dtype=float)
    vals = np.array([product_weight_expectation(u, tau, c).lhs for u in u_grid])
    y = vals / np.log(u_grid) if tau <= 2 else vals
    slope = float(np.polyfit(np.log(u_grid), np.log(y), 1)[0])
    target = -1.0 if tau > 2 else -(tau - 1.0)
    rate = u_grid ** target * (np.log(u_grid) if tau <= 2 else 1.0)
    return {"u": u_grid.tolist(), "lhs": vals.tolist(), "slope": slope, "target": target,
            "C_fit": float(np.max(vals / rate))}


# ------------------------------------------------------ recurrence marginal

def edge_marginal(k: float, params: ModelParams) -> tuple[float, float]:
    """``P(edge between points at distance k is open)`` averaged over both weights."""
    law = params.weight_law
    if params.lam == 0:
        return 0.0, 0.0
    if isinstance(law, Constant):
        return edge_probability(law.w0, law.w0, k, params.lam, params.alpha), 0.0
    scale = math.log(params.lam) - params.alpha * math.log(k)
    # kink-free integrand; split where the exponent crosses 1 for accuracy
    return pareto_product_expectation(lambda lx: -math.expm1(-math.exp(min(lx + scale, 700.0))),
                                      params.tau, law.c, breakpoints=(-scale,))


def recurrence_marginal_check(params: ModelParams, k_schedule=None) -> BoundsReport:
    """``k^4 P(edge at distance k open)`` along ``k_schedule`` for d = 2.

    With ``tau > 2`` the sequence must stay bounded (the proof's constant is
    ``lam E[W]^2``); otherwise it must tend to 0.  ``extra`` carries the
    values, the tail log-log slope and whether the tail decreases.
    """
    if params.d != 2 or params.alpha < 4 or not (params.tau > 2 or params.gamma > 2):
        raise PreconditionError("needs d = 2, alpha >= 4 and (tau > 2 or gamma > 2)")
    ks = np.asarray(k_schedule if k_schedule is not None else 2 ** np.arange(3, 10), dtype=float)
    vals, errs = [], []
    for k in ks:
        v, e = edge_marginal(k, params)
        vals.append(k ** 4 * v)
        errs.append(k ** 4 * e)
    vals = np.asarray(vals)
    pos = vals > 0
    slope = (float(np.polyfit(np.log(ks[pos][-4:]), np.log(vals[pos][-4:]), 1)[0])
             if pos.sum() >= 2 else math.nan)
    law = params.weight_law
    if params.tau > 2:
        mean = law.w0 if isinstance(law, Constant) else law.support_min(params.tau) * (params.tau - 1) / (params.tau - 2)
        bound, branch = params.lam * mean ** 2, "bounded"
        lhs = float(vals.max())
    else:
        bound, branch = 0.0, "vanishing"
        lhs = float(vals[-1])
    return BoundsReport("recurrence_marginal",
                        {"params": params.to_dict(), "k": ks.tolist()}, lhs, bound,
                        "<=" if branch == "bounded" else ">=",
                        quadrature_error=float(max(errs)),
                        extra={"branch": branch, "values": vals.tolist(), "tail_slope": slope,
                               "predicted_slope": 4 - 2 * params.gamma,
                               "decreasing": bool(np.all(np.diff(vals) < 0))})


# ------------------------------------------------ transience sequences

def log_u_transience(n: int, d: int, alpha: float, gamma: float) -> float:
    return (0.5 * alpha * math.log(d) + 0.5 * d * (2 - gamma) * math.log(n + 2)
            + 0.5 * (n + 2) * alpha * math.log(2) + alpha * math.lgamma(n + 4))


def transience_sequences(n_max: int, params: ModelParams) -> dict:
    """The block sizes, bag counts and weight thresholds of the transience construction.

    Also checks the algebraic simplification of the non-connection bound at
    every ``n`` in ``3..n_max`` and the bag-count partial sums.
    """
    if params.gamma >= 2:
        raise PreconditionError(f"needs gamma < 2, got {params.gamma}")
    d, a, g, lam = params.d, params.alpha, params.gamma, params.lam
    n = np.arange(1, n_max + 1)
    D = 2 * (n + 1) ** 2
    C = [(k + 1) ** (2 * d) for k in n.tolist()]
    log_u = [log_u_transience(k, d, a, g) for k in n.tolist()]
    rows, worst = [], 0.0
    partial, exact_ok, cauchy_ok = Fraction(0), True, True
    for k in range(1, n_max + 1):
        term = Fraction(1, C[k - 1])
        partial += term
        exact_ok &= partial == sum(Fraction(1, (j + 1) ** (2 * d)) for j in range(1, k + 1))
        cauchy_ok &= term < Fraction(2 ** (2 * d), k ** (2 * d))
        if k >= 3:
            log_direct = (math.log(lam) - a * math.log(d) + 2 * log_u_transience(k - 2, d, a, g)
                          - a * sum(math.log(2 * (j + 1) ** 2) for j in range(1, k + 1)))
            x_direct = math.exp(log_direct)
            x_closed = lam * k ** (d * (2 - g))
            rel = abs(x_direct - x_closed) / x_closed
            worst = max(worst, rel)
            rows.append({"n": k, "exponent_direct": x_direct, "exponent_closed": x_closed,
                         "rel_error": rel})
    return {"n": n.tolist(), "D": D.tolist(), "C": C, "log_u": log_u, "identity": rows,
            "max_rel_error": worst, "partial_sums_exact": bool(exact_ok),
            "increments_ok": bool(cauchy_ok), "partial_sum": float(partial)}


# --------------------------------------------- coarse connectivity

def dominated_edge_probability(k: float, lam_eff: float, params: ModelParams, **kw):
    """``E[1 - exp(-lam_eff W1 W2 / k^alpha)]`` with standard Pareto weights."""
    if lam_eff == 0:
        return 0.0, 0.0
    scale = math.log(lam_eff) - params.alpha * math.log(k)
    return pareto_product_expectation(lambda lx: -math.expm1(-math.exp(min(lx + scale, 700.0))),
                                      params.tau, 1.0, breakpoints=(-scale,), **kw)


def coarse_connectivity_domination(N: int, k: int, beta: float, params: ModelParams,
                                   n_accepted: int = 10_000, seed_base: int = 0,
                                   max_seeds: int = 10**7) -> BoundsReport:
    """Monte Carlo adjacency of two box maxima given both are heavy, against the dominated model.

    Box one is ``[0, N-1]^d``; box two is its translate by ``k N`` along the
    first axis.  Each seed draws all ``2 N^d`` weights and the single edge
    uniform of the maxima; seeds whose maxima are not both at least
    ``beta N^{alpha/2}`` are rejected.
    """
    law = params.weight_law
    if not isinstance(law, ParetoC):
        raise PreconditionError("needs a Pareto weight law")
    if beta <= 0:
        raise DomainError("beta must be positive")
    d, nbox = params.d, N ** params.d
    thr = beta * N ** (params.alpha / 2)
    geo = BoxGeometry.cube(d, N)
    local = geo.coords()
    coords = np.vstack([local, local + np.eye(d, dtype=np.int64)[0] * k * N])
    n_pts = coords.shape[0]
    lam_eff = params.lam * beta ** 2 * (3 * d) ** -params.alpha
    rhs, err = dominated_edge_probability(k, lam_eff, params)
    hits = accepted = seen = 0
    idx = np.arange(n_pts)
    while accepted < n_accepted and seen < max_seeds:
        s = seed_base + seen
        seen += 1
        w = law.quantile(uniforms(s, StreamKind.WEIGHTS, idx), params.tau)
        # ties impossible in practice; argmax takes the first (lexicographic) one
        a = int(np.argmax(w[:nbox]))
        b = nbox + int(np.argmax(w[nbox:]))
        if w[a] < thr or w[b] < thr:
            if seen >= 1000 and accepted / seen < 1e-3:
                raise PreconditionError(
                    f"conditioning acceptance {accepted}/{seen} below 1e-3; try a smaller beta")
            continue
        accepted += 1
        dist = int(np.abs(coords[a] - coords[b]).sum())
        p = edge_probability(w[a], w[b], dist, params.lam, params.alpha)
        u = uniform_ref(stream_key(s, StreamKind.EDGE), a * n_pts + b)
        hits += u < p
    if accepted == 0:
        raise PreconditionError("no seed satisfied the conditioning; try a smaller beta")
    lhs = hits / accepted
    se = math.sqrt(max(lhs * (1 - lhs), 1e-12) / accepted)
    return BoundsReport("coarse_connectivity",
                        {"N": N, "k": k, "beta": beta, "params": params.to_dict()},
                        lhs, rhs, ">=", slack=3 * se, quadrature_error=err,
                        extra={"accepted": accepted, "seeds": seen, "standard_error": se,
                               "lambda_dominated": lam_eff})


def cluster_connectivity_bound(N: int, k: int, beta: float, params: ModelParams) -> BoundsReport:
    """Lower bound on the chance that two large clusters ``k`` boxes apart share an edge."""
    law = params.weight_law
    if isinstance(law, Constant):
        wmin2 = law.w0 ** 2
    else:
        wmin2 = law.c ** (2 / (params.tau - 1))
    d = params.d
    x = params.lam * (3 * d) ** -params.alpha * beta ** 2 * wmin2 / k ** params.alpha
    bound = -math.expm1(-x)
    return BoundsReport("cluster_connectivity", {"N": N, "k": k, "beta": beta, "params": params.to_dict()},
                        bound, bound, ">=", extra={"exponent": x})


# ----------------------------------------------------------- coarse grain

@dataclass
class CoarseGrained:
    N: int
    mode: str
    threshold: float
    good: np.ndarray
    dominant: np.ndarray          # vertex index (max_weight) or cluster root (largest_cluster)
    edges: list                   # pairs of box indices whose dominants are joined
    dominated_params: ModelParams
    sizes: np.ndarray | None = None

    @property
    def good_fraction(self) -> float:
        return float(self.good.mean())


def coarse_grain(config, N: int, beta: float, mode: str = "max_weight") -> CoarseGrained:
    """Replace each N-box by its dominant vertex or its largest internal cluster."""
    from .graphs import clusters
    from .hierarchy import _group
    geo = config.geometry
    if geo.side % N:
        raise SizeError(f"box side {geo.side} is not divisible by N={N}")
    p = config.params
    d = geo.d
    thr = beta * N ** (p.alpha / 2)
    shape = (geo.side,) * d
    idx = np.arange(config.n_vertices).reshape(shape)
    members = _group(idx, N, d).reshape(-1, N ** d)
    u, v = config.edges()
    if mode == "max_weight":
        w = config.weights[members]
        top = w.max(axis=1)
        tied = np.where(w == top[:, None], members, np.iinfo(np.int64).max)
        dom = tied.min(axis=1)
        good = top >= thr
        key = set((u * config.n_vertices + v).tolist())
        gidx = np.flatnonzero(good)
        edges = [(int(i), int(j)) for a, i in enumerate(gidx) for j in gidx[a + 1:]
                 if min(dom[i], dom[j]) * config.n_vertices + max(dom[i], dom[j]) in key]
        dominated = ModelParams(d, p.alpha, p.tau, p.lam * beta ** 2 * (3 * d) ** -p.alpha,
                                StandardPareto(), norm=p.norm)
        return CoarseGrained(N, mode, thr, good.reshape((geo.side // N,) * d), dom, edges, dominated)
    if mode == "largest_cluster":
        box_of = np.empty(config.n_vertices, dtype=np.int64)
        box_of[members.ravel()] = np.repeat(np.arange(members.shape[0]), N ** d)
        inside = box_of[u] == box_of[v]
        from .sampler import Configuration, to_csr
        indptr, indices = to_csr(config.n_vertices, u[inside], v[inside])
        local = Configuration(geo, p, config.weights, config.green, indptr, indices,
                              config.master_seed, config.restricted_to_green)
        lab = clusters(local)
        label = lab.label
        best = np.full(members.shape[0], -1, dtype=np.int64)
        size = np.zeros(members.shape[0], dtype=np.int64)
        for b in range(members.shape[0]):
            ls = label[members[b]]
            ls = ls[ls >= 0]
            if ls.size:
                ids, cnt = np.unique(ls, return_counts=True)
                j = int(np.argmax(cnt))
                best[b], size[b] = ids[j], cnt[j]
        good = size >= thr
        across = ~inside
        lu, lv = label[u[across]], label[v[across]]
        bu, bv = box_of[u[across]], box_of[v[across]]
        sel = good[bu] & good[bv] & (lu == best[bu]) & (lv == best[bv])
        pairs = {(int(min(a, b)), int(max(a, b))) for a, b in zip(bu[sel], bv[sel])}
        law = p.weight_law
        wmin2 = law.w0 ** 2 if isinstance(law, Constant) else law.support_min(p.tau) ** 2
        dominated = ModelParams(d, p.alpha, p.tau, p.lam * (3 * d) ** -p.alpha * beta ** 2 * wmin2,
                                Constant(1.0), norm=p.norm)
        return CoarseGrained(N, mode, thr, good.reshape((geo.side // N,) * d), best, sorted(pairs),
                             dominated, sizes=size)
    raise DomainError(f"unknown mode {mode!r}")


def good_box_probability(N: int, beta: float, params: ModelParams) -> float:
    """``P(max of N^d weights >= beta N^{alpha/2}) = 1 - (1 - q)^{N^d}``."""
    law = params.weight_law
    thr = beta * N ** (params.alpha / 2)
    if isinstance(law, Constant):
        return 1.0 if law.w0 >= thr else 0.0
    q = float(min(1.0, law.c * thr ** -(params.tau - 1.0)))
    return -math.expm1(N ** params.d * math.log1p(-q)) if q < 1 else 1.0

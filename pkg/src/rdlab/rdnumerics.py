"""Rate-distortion function, excess-distortion exponents and the finite-n bound.

All logarithms and exponents are base 2, so the bound reads
``2.5 * 2^{-n * min(eta, gamma)}``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import ConfigError
from .prob import Channel, JointPmf, Pmf, compose, constant_channel, mutual_information
from .sources import DistortionMeasure

LN2 = math.log(2.0)
ORDER_EPS = 1e-6


# ---------------------------------------------------------------------------
# Blahut-Arimoto


@dataclass(frozen=True)
class RdPoint:
    D: float
    R: float
    channel: Channel
    slope: float  # -dR/dD in bits per unit distortion
    distortion: float  # E[d] achieved by ``channel``


def _ba_fixed_slope(px: np.ndarray, d: np.ndarray, s: float, tol: float, max_iter: int):
    """Alternating minimization at slope ``s`` (natural-log units)."""
    k_out = d.shape[1]
    q = np.full(k_out, 1.0 / k_out)
    shift = d.min(axis=1, keepdims=True)  # keeps exp() away from underflow at large s
    kernel = np.exp(-s * (d - shift))
    for _ in range(max_iter):
        w = kernel * q[None, :]
        cond = w / w.sum(axis=1, keepdims=True)
        q_new = px @ cond
        done = np.max(np.abs(q_new - q)) < tol
        q = q_new
        if done:
            break
    w = kernel * q[None, :]
    cond = w / w.sum(axis=1, keepdims=True)
    joint = px[:, None] * cond
    return cond, float((joint * d).sum()), mutual_information(JointPmf(joint))


def blahut_arimoto(p_x: Pmf, d: DistortionMeasure, D: float, tol: float = 1e-10,
                   max_iter: int = 20000) -> RdPoint:
    """``R(D)`` and an optimizing test channel; bisects the slope to meet ``D``."""
    if tol <= 0:
        raise ConfigError("tol must be positive")
    px = p_x.probs
    dm = d.matrix
    if dm.shape[0] != px.size:
        raise ConfigError("distortion rows must match the source alphabet")
    d_min = float(px @ dm.min(axis=1))
    if D < d_min - 1e-12:
        raise ConfigError(f"D = {D} is below the minimum achievable distortion {d_min}")
    col = px @ dm
    if D >= col.min():
        row = np.zeros(dm.shape[1])
        row[int(np.argmin(col))] = 1.0
        return RdPoint(D, 0.0, constant_channel(px.size, row), 0.0, float(col.min()))

    def at(s):
        return _ba_fixed_slope(px, dm, s, tol, max_iter)

    lo, hi = 0.0, 1.0
    cond, dist, rate = at(hi)
    while dist > D and hi < 1e3:
        lo, hi = hi, hi * 2
        cond, dist, rate = at(hi)
    if dist > D:
        # D sits at (or numerically at) the minimum distortion
        return RdPoint(D, rate, Channel(cond), hi / LN2, dist)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        c_mid, d_mid, r_mid = at(mid)
        if d_mid > D:
            lo = mid
        else:
            hi, cond, dist, rate = mid, c_mid, d_mid, r_mid
        if hi - lo < 1e-12 * max(1.0, hi) or abs(dist - D) < 1e-12:
            break
    return RdPoint(D, rate, Channel(cond), hi / LN2, dist)


def rd_curve(p_x: Pmf, d: DistortionMeasure, D_list, tol: float = 1e-10) -> list[RdPoint]:
    return [blahut_arimoto(p_x, d, float(D), tol) for D in D_list]


# ---------------------------------------------------------------------------
# Chernoff exponent


def _support(joint: JointPmf, d: DistortionMeasure, D: float):
    p = joint.probs.ravel()
    keep = p > 0
    return p[keep], d.matrix.ravel()[keep] - D


def exponent_eta(joint: JointPmf, d: DistortionMeasure, D: float) -> tuple[float, float]:
    """``eta = -log2 inf_{beta>0} E[2^{beta (d - D)}]`` and the minimizing ``beta``."""
    if joint.shape != d.shape:
        raise ConfigError(f"joint shape {joint.shape} does not match distortion {d.shape}")
    p, g = _support(joint, d, D)
    if float(p @ g) >= 0:
        return 0.0, 0.0
    if np.all(g <= 0):
        at_d = float(p[g == 0].sum())
        return (math.inf if at_d == 0 else -math.log2(at_d)), math.inf
    lp = np.log(p)

    def slope(beta):
        # sign of the derivative of log E[2^{beta g}], scaled to avoid overflow
        z = lp + LN2 * beta * g
        return float(np.sum(g * np.exp(z - z.max())))

    hi = 1.0
    while slope(hi) < 0:
        hi *= 2.0
    beta = brentq(slope, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    value = logsumexp(lp + LN2 * beta * g) / LN2
    return float(max(-value, 0.0)), float(beta)


def chernoff_objective(joint: JointPmf, d: DistortionMeasure, D: float, betas) -> np.ndarray:
    """``E[2^{beta (d - D)}]`` on an array of ``beta`` values."""
    p, g = _support(joint, d, D)
    betas = np.asarray(betas, dtype=float)
    return np.exp(logsumexp(np.log(p)[None, :] + LN2 * betas[:, None] * g[None, :], axis=1))


# ---------------------------------------------------------------------------
# Renyi-type informations


def _ratio_parts(joint: JointPmf):
    table = joint.probs
    if table.ndim != 2:
        raise ConfigError("expected a joint over two variables")
    px = table.sum(axis=1)
    py = table.sum(axis=0)
    denom = px[:, None] * py[None, :]
    if np.any((table > 0) & (denom <= 0)):
        raise ConfigError("joint mass on a cell whose product of marginals is zero")
    return table, px, denom


def renyi_check(joint: JointPmf, alpha: float) -> float:
    """``(1/(alpha-1)) log2 E[r^{alpha-1}]`` with ``r = P_XY / (P_X P_Y)``; I(X;Y) near ``alpha = 1``."""
    if abs(alpha - 1) < ORDER_EPS:
        return mutual_information(joint)
    table, _, denom = _ratio_parts(joint)
    keep = table > 0
    lp = np.log(table[keep])
    lr = lp - np.log(denom[keep])
    return float(logsumexp(lp + (alpha - 1) * lr) / LN2 / (alpha - 1))


def renyi_bar(joint: JointPmf, alpha_prime: float) -> float:
    """``(1/(a'-1)) log2 (E_X[Gamma])^2`` with ``Gamma(x) = sqrt(E_{Y|X=x}[r^{a'-1}])``."""
    if abs(alpha_prime - 1) < ORDER_EPS:
        return mutual_information(joint)
    table, px, denom = _ratio_parts(joint)
    log_gamma = np.full(px.size, -np.inf)
    for x in np.flatnonzero(px > 0):
        keep = table[x] > 0
        lp = np.log(table[x, keep] / px[x])
        lr = np.log(table[x, keep]) - np.log(denom[x, keep])
        log_gamma[x] = 0.5 * logsumexp(lp + (alpha_prime - 1) * lr)
    live = px > 0
    log_mean = logsumexp(np.log(px[live]) + log_gamma[live])
    return float(2 * log_mean / LN2 / (alpha_prime - 1))


def gamma_objective(R: float, alpha, alpha_prime, i_check, i_bar):
    """The maximand; ``-inf`` where ``2 alpha - alpha' <= 0``."""
    alpha = np.asarray(alpha, dtype=float)
    alpha_prime = np.asarray(alpha_prime, dtype=float)
    denom = 2 * alpha - alpha_prime
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (alpha - 1) / denom * (R - i_check + (alpha_prime - 1) * (i_check - i_bar))
    return np.where(denom > 0, val, -np.inf)


@dataclass(frozen=True)
class GammaGrid:
    alpha_max: float = 64.0
    n_alpha: int = 200
    alpha_prime_min: float = -8.0
    n_alpha_prime: int = 200
    refine: int = 1

    def alphas(self) -> np.ndarray:
        return np.geomspace(1.0, self.alpha_max, self.n_alpha * self.refine)

    def alpha_primes(self) -> np.ndarray:
        return np.linspace(self.alpha_prime_min, 2.0, self.n_alpha_prime * self.refine)


def exponent_gamma(joint: JointPmf, R: float, grid: GammaGrid = GammaGrid()):
    """Grid maximum of the soft-covering exponent.

    Returns ``(gamma, alpha_star, alpha_prime_star, i_check, i_bar, boundary)``;
    ``boundary`` is set when the maximizer sits on the ``alpha = alpha_max`` row or on
    either ``alpha'`` edge, i.e. the supremum may lie outside the grid.
    """
    if R < 0:
        raise ConfigError("R must be non-negative")
    alphas, primes = grid.alphas(), grid.alpha_primes()
    ic = np.array([renyi_check(joint, a) for a in alphas])
    ib = np.array([renyi_bar(joint, b) for b in primes])
    obj = gamma_objective(R, alphas[:, None], primes[None, :], ic[:, None], ib[None, :])
    i, j = np.unravel_index(int(np.argmax(obj)), obj.shape)
    boundary = bool(i == alphas.size - 1 or j == 0 or j == primes.size - 1)
    return float(max(obj[i, j], 0.0)), float(alphas[i]), float(primes[j]), float(ic[i]), float(ib[j]), boundary


@dataclass
class ExponentReport:
    eta: float
    beta_star: float
    gamma: float
    alpha_star: float
    alpha_prime_star: float
    i_check_at_alpha_star: float
    i_bar_at_alpha_prime_star: float
    boundary: bool
    grid: dict = field(default_factory=dict)

    @property
    def bound_exponent(self) -> float:
        return min(self.eta, self.gamma)


def exponent_report(joint: JointPmf, d: DistortionMeasure, D: float, R: float,
                    grid: GammaGrid = GammaGrid()) -> ExponentReport:
    eta, beta = exponent_eta(joint, d, D)
    g, a, ap, ic, ib, boundary = exponent_gamma(joint, R, grid)
    return ExponentReport(eta, beta, g, a, ap, ic, ib, boundary, grid=vars(grid).copy())


def finite_n_bound(exponent: float, n: int) -> float:
    return 2.5 * 2.0 ** (-n * exponent)


@dataclass
class BoundTable:
    reports: dict = field(default_factory=dict)  # channel_id -> ExponentReport
    skipped: list = field(default_factory=list)   # (channel_id, reason)
    best: int | None = None
    n_list: tuple = ()

    @property
    def feasible(self) -> bool:
        return self.best is not None

    def bound(self, n: int) -> float:
        return finite_n_bound(self.reports[self.best].bound_exponent, n)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["channel_id", "eta", "beta_star", "gamma", "alpha_star", "alpha_prime_star", "n", "bound"])
        for cid, rep in self.reports.items():
            for n in self.n_list:
                w.writerow([cid, repr(rep.eta), repr(rep.beta_star), repr(rep.gamma), repr(rep.alpha_star),
                            repr(rep.alpha_prime_star), n, repr(finite_n_bound(rep.bound_exponent, n))])
        return buf.getvalue()


def theorem1_bound(p_x: Pmf, candidates, d: DistortionMeasure, D: float, R: float, n_list,
                   grid: GammaGrid = GammaGrid()) -> BoundTable:
    """Best ``min(eta, gamma)`` over candidate test channels, with the bound per ``n``.

    Candidates with ``E[d] >= D`` or ``I(X;Y) >= R`` give a trivial exponent and are skipped.
    """
    table = BoundTable(n_list=tuple(int(n) for n in n_list))
    best_exp = -math.inf
    for cid, ch in enumerate(candidates):
        joint = compose(p_x, ch)
        ed = float((joint.probs * d.matrix).sum())
        mi = mutual_information(joint)
        if ed >= D:
            table.skipped.append((cid, f"E[d] = {ed:.6g} >= D"))
            continue
        if mi >= R:
            table.skipped.append((cid, f"I(X;Y) = {mi:.6g} >= R"))
            continue
        rep = exponent_report(joint, d, D, R, grid)
        table.reports[cid] = rep
        if rep.bound_exponent > best_exp:
            best_exp, table.best = rep.bound_exponent, cid
    return table

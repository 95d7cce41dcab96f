"""Monte Carlo and multilevel Monte Carlo estimation of the outflow flux.

Levels are numbered from the fine mesh (``l = 0``) to the coarsest
(``l = L``). ``Y_l = Q_l - Q_{l+1}`` for ``l < L`` and ``Y_L = Q_L``; both
members of a pair are computed from the same fine field, and the field for
sample ``i`` of ``Y_l`` comes from the stream keyed ``(seed, l, i)``.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .darcy import BoundaryConfig, DarcyOperator
from .sampler import FieldParams, FieldProjector, FieldSampler, TAG_FIELD, make_stream


# plain Monte Carlo ------------------------------------------------------------

def mc_estimate(samples):
    """Sample mean, unbiased variance and standard error."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise ValueError("at least two samples are needed")
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    return mean, var, math.sqrt(var / x.size)


def mc_sample_requirement(V, eps):
    """Samples for a sampling error of ``eps^2 / 2``: ``ceil(2 V / eps^2)``, at least one."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if V < 0:
        raise ValueError("variance must be nonnegative")
    return max(1, math.ceil(2.0 * V / eps ** 2))


# sample allocation --------------------------------------------------------------

@dataclass(frozen=True)
class MlmcPlan:
    epsilon: float
    N: tuple
    N_real: tuple
    V: tuple
    C: tuple
    root_cost: float | None = None

    @property
    def total_cost(self):
        return total_cost(self, self.C)

    @property
    def sampling_error(self):
        return float(sum(v / n for v, n in zip(self.V, self.N)))


def optimal_real_samples(V, C, eps):
    V = np.asarray(V, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if np.any(V <= 0) or np.any(C <= 0):
        raise ValueError("variances and costs must be positive")
    return 2.0 / eps ** 2 * np.sqrt(V / C) * np.sum(np.sqrt(V * C))


def optimal_samples(V, C, eps, floor=1) -> MlmcPlan:
    """Cost-optimal ``N_l = ceil(2 eps^-2 sqrt(V_l / C_l) sum_k sqrt(C_k V_k))``."""
    n_real = optimal_real_samples(V, C, eps)
    n = np.maximum(np.ceil(n_real), floor).astype(np.int64)
    root = float(np.sum(np.sqrt(np.asarray(V, dtype=np.float64) * np.asarray(C, dtype=np.float64))))
    return MlmcPlan(float(eps), tuple(int(x) for x in n), tuple(float(x) for x in n_real),
                    tuple(float(v) for v in V), tuple(float(c) for c in C), root)


def total_cost(plan_or_N, C):
    N = plan_or_N.N if isinstance(plan_or_N, MlmcPlan) else plan_or_N
    return float(sum(n * c for n, c in zip(N, C)))


# rates and regimes --------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    alpha: float
    beta: float
    gamma: float
    c1: float
    c2: float
    c3: float
    r2_alpha: float
    r2_beta: float
    r2_gamma: float
    n_points: int


def _loglog(M, y):
    x = np.log(np.asarray(M, dtype=np.float64))
    ly = np.log(np.asarray(y, dtype=np.float64))
    slope, intercept = np.polyfit(x, ly, 1)
    pred = slope * x + intercept
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ly - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(math.exp(intercept)), r2


def fit_rates(mean_Y, var_Y, cost, M) -> RateFit:
    """Log-log least squares of ``|E[Y_l]|``, ``V(Y_l)`` and cost against ``M_l``.

    The coarsest level is left out of the mean and variance fits, since
    ``Y_L = Q_L`` is not a difference; the cost fit uses every level.
    """
    M = np.asarray(M, dtype=np.float64)
    if len(M) < 3:
        raise ValueError("rate fits need at least three levels (two differences)")
    m = np.abs(np.asarray(mean_Y, dtype=np.float64))[:-1]
    v = np.asarray(var_Y, dtype=np.float64)[:-1]
    if np.any(m <= 0) or np.any(v <= 0):
        raise ValueError("mean and variance of the differences must be nonzero to fit rates")
    sa, c1, r2a = _loglog(M[:-1], m)
    sb, c2, r2b = _loglog(M[:-1], v)
    sg, c3, r2g = _loglog(M, cost)
    return RateFit(-sa, -sb, sg, c1, c2, c3, r2a, r2b, r2g, len(M) - 1)


@dataclass(frozen=True)
class Regime:
    kind: str
    label: str
    exponent: float
    log_power: int
    alpha_ok: bool


def classify_regime(fit, tol=1e-6) -> Regime:
    """Cost complexity class in terms of ``eps``.

    ``beta > gamma``: eps^-2; ``beta = gamma`` (within ``tol``):
    eps^-2 (log eps)^2; ``beta < gamma``: eps^(-2 - (gamma - beta) / alpha).
    A warning is issued when ``alpha < min(beta, gamma) / 2``.
    """
    alpha, beta, gamma = fit.alpha, fit.beta, fit.gamma
    ok = alpha >= 0.5 * min(beta, gamma)
    if not ok:
        warnings.warn(f"alpha={alpha:.4g} is below min(beta, gamma)/2; the complexity bound does not apply",
                      RuntimeWarning, stacklevel=2)
    if abs(beta - gamma) <= tol:
        return Regime("beta_eq_gamma", "ε⁻²(log ε)²", -2.0, 2, ok)
    if beta > gamma:
        return Regime("beta_gt_gamma", "ε⁻²", -2.0, 0, ok)
    if alpha <= 0:
        # no bias decay: the bound gives no finite exponent
        return Regime("beta_lt_gamma", "ε^(−2−(γ−β)/α)", -math.inf, 0, ok)
    return Regime("beta_lt_gamma", "ε^(−2−(γ−β)/α)", -2.0 - (gamma - beta) / alpha, 0, ok)


def predicted_cost(fit: RateFit, M):
    return fit.c3 * np.asarray(M, dtype=np.float64) ** fit.gamma


def scaled_root_cost(V_QL, C, fit: RateFit, M, L):
    """``sqrt(V(Q_L) C_L) + sum_{l<L} sqrt(c2 M_l^-beta C_l)``.

    ``C`` holds per-sample costs for at least levels ``0..L``.
    """
    if len(C) < L + 1 or len(M) < L + 1:
        raise ValueError(f"costs and element counts for levels 0..{L} are required")
    head = math.sqrt(V_QL * C[L])
    tail = sum(math.sqrt(fit.c2 * M[l] ** (-fit.beta) * C[l]) for l in range(L))
    return head + tail


def screen_levels(V_Q, C, fit: RateFit, M):
    """Scaled root cost for every candidate coarsest level, with the extend verdicts."""
    R = [scaled_root_cost(V_Q[L], C, fit, M, L) for L in range(len(M))]
    extend = [R[L + 1] ** 2 < R[L] ** 2 for L in range(len(R) - 1)]
    return R, extend


# level statistics and the estimator --------------------------------------------------

@dataclass
class LevelStats:
    level: int
    M: int
    nc: int
    n_samples: int
    mean_Q: float
    var_Q: float
    mean_Y: float
    var_Y: float
    cost: float
    solve_cost: float

    @classmethod
    def from_samples(cls, level, M, nc, q_fine, y, cost, solve_cost):
        q_fine = np.asarray(q_fine)
        y = np.asarray(y)
        n = len(y)
        return cls(level, int(M), int(nc), n, float(q_fine.mean()), float(q_fine.var(ddof=1)) if n > 1 else 0.0,
                   float(y.mean()), float(y.var(ddof=1)) if n > 1 else 0.0, float(cost), float(solve_cost))


class MlmcProblem:
    """Samples of ``(Q_l, Q_{l+1})`` on a hierarchy, with per-level costs.

    Parameters
    ----------
    mesh : Mesh
        Fine mesh (for element centroids).
    hierarchy : Hierarchy
        Levels sharing the fine mesh as origin.
    cost_model : {"ops", "walltime"}
        ``ops``: core count times the busiest core's share of the sparse LU
        fill of the reference system, plus ``message_cost`` per message that
        core receives during assembly. ``walltime``: core count times the
        mean measured solve time.
    """

    def __init__(self, mesh, hierarchy, params: FieldParams = FieldParams(), bc: BoundaryConfig = BoundaryConfig(),
                 seed=0, threads=None, cost_model="ops", message_cost=8.0, timing_solves=10):
        if cost_model not in ("ops", "walltime"):
            raise ValueError("cost_model must be 'ops' or 'walltime'")
        self.hierarchy = hierarchy
        self.levels = hierarchy.levels
        self.L = len(self.levels) - 1
        self.sampler = FieldSampler.for_mesh(mesh, params)
        self.projector = FieldProjector(hierarchy)
        self.ops = [DarcyOperator(lv) for lv in self.levels]
        self.bc = bc
        self.seed = int(seed)
        if threads is None:
            threads = int(os.environ.get("AMGE_REDIST_THREADS", "0") or 0)
        self.threads = max(0, int(threads))
        self.cost_model = cost_model
        self.message_cost = float(message_cost)
        self.timing_solves = timing_solves
        self._cache = {ell: ([], []) for ell in range(self.L + 1)}
        self._solve_costs = None

    @property
    def M(self):
        return [lv.n_elements for lv in self.levels]

    @property
    def nc(self):
        return [lv.n_active for lv in self.levels]

    def q_level(self, ell, u0):
        k = np.exp(self.projector.level(u0, ell))
        op = self.ops[ell]
        return op.qoi(op.solve(k, self.bc))

    def pair(self, ell, i):
        """``(Q_l, Q_{l+1})`` for sample ``i`` of ``Y_l`` (``Q_{L+1} = 0``)."""
        _, u0 = self.sampler.fine_field(make_stream(self.seed, ell, i, TAG_FIELD))
        try:
            qf = self.q_level(ell, u0)
            qc = self.q_level(ell + 1, u0) if ell < self.L else 0.0
        except Exception as exc:
            raise RuntimeError(f"sample {i} of level {ell} failed: {exc}") from exc
        return qf, qc

    def _map(self, fn, items):
        if self.threads > 0:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(x) for x in items]

    def ensure(self, ell, n):
        """Extend the cached samples of level ``ell`` to ``n``; earlier samples are reused."""
        qf, qc = self._cache[ell]
        start = len(qf)
        if n > start:
            out = self._map(lambda i: self.pair(ell, i), range(start, n))
            qf.extend(o[0] for o in out)
            qc.extend(o[1] for o in out)
        return np.array(qf[:max(n, start)]), np.array(qc[:max(n, start)])

    def samples(self, ell):
        qf, qc = self._cache[ell]
        return np.array(qf), np.array(qc)

    def solve_costs(self):
        """Cost of one solve at every level under the selected model."""
        if self._solve_costs is None:
            costs = []
            for lv, op in zip(self.levels, self.ops):
                if self.cost_model == "ops":
                    work = op.factor_fill() * lv.layout.max_local() / lv.n_elements
                    msgs = lv.ledger.filter(level=lv.index, op="truedof_truedof").max_core_messages()
                    costs.append(lv.n_active * (work + self.message_cost * msgs))
                else:
                    t0 = time.perf_counter()
                    for _ in range(self.timing_solves):
                        op.solve(None, self.bc)
                    costs.append(lv.n_active * (time.perf_counter() - t0) / self.timing_solves)
            self._solve_costs = costs
        return list(self._solve_costs)

    def sample_costs(self):
        """Cost of one sample of ``Y_l``: both members of the pair."""
        c = self.solve_costs()
        return [c[l] + (c[l + 1] if l < self.L else 0.0) for l in range(self.L + 1)]

    def stats(self):
        costs = self.sample_costs()
        solve = self.solve_costs()
        out = []
        for ell in range(self.L + 1):
            qf, qc = self.samples(ell)
            out.append(LevelStats.from_samples(ell, self.M[ell], self.nc[ell], qf, qf - qc, costs[ell], solve[ell]))
        return out


@dataclass
class MlmcResult:
    estimate: float
    stats: list
    plan: MlmcPlan
    epsilon: float
    iterations: int
    pilot: list = field(default_factory=list)

    @property
    def sampling_error(self):
        return float(sum(s.var_Y / s.n_samples for s in self.stats))

    @property
    def standard_error(self):
        return math.sqrt(self.sampling_error)

    @property
    def total_cost(self):
        return float(sum(s.n_samples * s.cost for s in self.stats))


def _allocate(V, C, eps, floor):
    """Optimal counts, with zero-variance levels held at the floor."""
    V = np.asarray(V, dtype=np.float64)
    pos = V > 0
    N = np.full(len(V), floor, dtype=np.int64)
    N_real = np.zeros(len(V))
    if pos.any():
        sub = optimal_samples(V[pos], np.asarray(C)[pos], eps, floor)
        N[pos] = sub.N
        N_real[pos] = sub.N_real
    return MlmcPlan(float(eps), tuple(int(x) for x in N), tuple(float(x) for x in N_real),
                    tuple(float(v) for v in V), tuple(float(c) for c in C))


def mlmc_estimate(problem: MlmcProblem, N):
    """``sum_l mean(Y_l)`` over the first ``N_l`` samples of every level."""
    if len(N) != problem.L + 1:
        raise ValueError("one sample count per level is required")
    for ell, n in enumerate(N):
        problem.ensure(ell, n)
    costs = problem.sample_costs()
    solve = problem.solve_costs()
    stats = []
    for ell, n in enumerate(N):
        qf, qc = problem.samples(ell)
        qf, qc = qf[:n], qc[:n]
        stats.append(LevelStats.from_samples(ell, problem.M[ell], problem.nc[ell], qf, qf - qc, costs[ell],
                                             solve[ell]))
    return float(sum(s.mean_Y for s in stats)), stats


def run_mlmc(problem: MlmcProblem, eps, n_pilot=10, floor=2, max_rounds=10) -> MlmcResult:
    """Pilot, allocate, sample, and re-allocate until the counts cover the plan."""
    if n_pilot < 2:
        raise ValueError("the pilot needs at least two samples per level")
    n = [n_pilot] * (problem.L + 1)
    _, pilot = mlmc_estimate(problem, n)
    C = problem.sample_costs()
    for rounds in range(1, max_rounds + 1):
        _, stats = mlmc_estimate(problem, n)
        plan = _allocate([s.var_Y for s in stats], C, eps, floor)
        if all(have >= want for have, want in zip(n, plan.N)):
            break
        n = [max(have, want) for have, want in zip(n, plan.N)]
    else:
        raise RuntimeError("sample allocation did not settle")
    est, stats = mlmc_estimate(problem, n)
    return MlmcResult(est, stats, plan, float(eps), rounds, pilot)


def plain_mc(problem: MlmcProblem, n, level=0, seed=None):
    """Independent single-level samples of ``Q_level`` (own stream tag)."""
    seed = problem.seed if seed is None else seed

    def one(i):
        from .sampler import TAG_MC
        _, u0 = problem.sampler.fine_field(make_stream(seed, level, i, TAG_MC))
        return problem.q_level(level, u0)

    return np.array(problem._map(one, range(n)))


# reports -------------------------------------------------------------------------------

LEVEL_COLUMNS = ["level", "M", "nc", "E[Q]", "E[Y]", "V[Q]", "V[Y]", "C", "N"]


def write_levels_csv(path, stats):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEVEL_COLUMNS)
        for s in stats:
            w.writerow([s.level, s.M, s.nc, repr(s.mean_Q), repr(s.mean_Y), repr(s.var_Q), repr(s.var_Y),
                        repr(s.cost), s.n_samples])


def read_levels_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_summary_json(path, summary):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def fit_to_dict(fit: RateFit):
    return asdict(fit)

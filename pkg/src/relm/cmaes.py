"""Full-covariance CMA-ES with an ask/tell interface (fitness is minimized).

Strategy constants follow the standard default parameter setting::

    w_i    ~ ln(mu + 1/2) - ln i,  normalized       mu_eff = 1 / sum(w_i^2)
    c_sigma = (mu_eff + 2) / (n + mu_eff + 5)
    d_sigma = 1 + 2 max(0, sqrt((mu_eff - 1)/(n + 1)) - 1) + c_sigma
    c_c     = (4 + mu_eff/n) / (n + 4 + 2 mu_eff/n)
    c_1     = 2 / ((n + 1.3)^2 + mu_eff)
    c_mu    = min(1 - c_1, 2 (mu_eff - 2 + 1/mu_eff) / ((n + 2)^2 + mu_eff))

The covariance is eigendecomposed after every update, which is affordable at
the few-thousand-dimension scale of the policy genomes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EIG_FLOOR = 1e-14


class CmaesError(RuntimeError):
    pass


@dataclass(eq=False)
class CmaesState:
    n: int
    mean: np.ndarray
    sigma: float
    C: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    lam: int
    mu: int
    weights: np.ndarray
    mu_eff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    chi_n: float
    rng: np.random.Generator
    generation: int = 0
    B: np.ndarray = None
    D: np.ndarray = None
    best_x: np.ndarray | None = None
    best_f: float = math.inf
    eigen_clamps: int = 0
    nonfinite_count: int = 0
    last_z: np.ndarray | None = field(default=None, repr=False)
    last_x: np.ndarray | None = field(default=None, repr=False)

    def decompose(self) -> None:
        """Refresh B, D from C, clamping tiny eigenvalues."""
        try:
            evals, B = np.linalg.eigh(self.C)
        except np.linalg.LinAlgError as exc:
            raise CmaesError(f"covariance eigendecomposition failed: {exc}") from exc
        if not np.all(np.isfinite(evals)):
            raise CmaesError("covariance has non-finite eigenvalues")
        floor = EIG_FLOOR * max(evals.max(), 0.0)
        if evals.min() <= floor or floor == 0.0:
            self.eigen_clamps += 1
            evals = np.maximum(evals, floor if floor > 0 else EIG_FLOOR)
            self.C = (B * evals) @ B.T
            self.C = (self.C + self.C.T) / 2
        self.B = B
        self.D = np.sqrt(evals)


def default_popsize(n: int) -> int:
    return 4 + int(math.floor(3 * math.log(n)))


def cmaes_init(n: int, mean0, sigma0: float, lam: int | None = None,
               seed: int = 0) -> CmaesState:
    if n < 1:
        raise CmaesError("dimension must be at least 1")
    if not sigma0 > 0:
        raise CmaesError(f"sigma0 must be positive, got {sigma0}")
    lam = default_popsize(n) if lam is None else int(lam)
    if lam < 2:
        raise CmaesError(f"population size must be at least 2, got {lam}")
    mean = np.array(mean0, dtype=float).reshape(-1)
    if mean.shape != (n,):
        raise CmaesError(f"mean0 has {mean.size} entries, expected {n}")
    mu = lam // 2
    w = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    w = w / w.sum()
    mu_eff = 1.0 / np.sum(w ** 2)
    c_sigma = (mu_eff + 2) / (n + mu_eff + 5)
    d_sigma = 1 + 2 * max(0.0, math.sqrt((mu_eff - 1) / (n + 1)) - 1) + c_sigma
    c_c = (4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)
    c_1 = 2 / ((n + 1.3) ** 2 + mu_eff)
    c_mu = min(1 - c_1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((n + 2) ** 2 + mu_eff))
    chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n ** 2))
    state = CmaesState(
        n=n, mean=mean, sigma=float(sigma0), C=np.eye(n),
        p_sigma=np.zeros(n), p_c=np.zeros(n), lam=lam, mu=mu, weights=w,
        mu_eff=float(mu_eff), c_sigma=c_sigma, d_sigma=d_sigma, c_c=c_c,
        c_1=c_1, c_mu=c_mu, chi_n=chi_n, rng=np.random.default_rng(seed),
        B=np.eye(n), D=np.ones(n))
    return state


def ask(state: CmaesState) -> np.ndarray:
    """Sample ``lam`` candidates as rows: mean + sigma * B D z."""
    z = state.rng.standard_normal((state.lam, state.n))
    y = (z * state.D) @ state.B.T
    x = state.mean + state.sigma * y
    if not np.all(np.isfinite(x)):
        raise CmaesError("sampled non-finite candidates")
    state.last_z, state.last_x = z, x
    return x.copy()


def tell(state: CmaesState, population, fitnesses) -> CmaesState:
    """Update the search distribution from the ranked candidates, in place."""
    x = np.asarray(population, dtype=float)
    f = np.asarray(fitnesses, dtype=float)
    if state.last_x is None:
        raise CmaesError("tell called without a preceding ask")
    if x.shape != state.last_x.shape or f.shape != (state.lam,):
        raise CmaesError(f"expected {state.lam} candidates and fitnesses, "
                         f"got {len(x)} and {len(f)}")
    if not np.array_equal(x, state.last_x):
        raise CmaesError("population does not match the last ask")
    bad = ~np.isfinite(f)
    state.nonfinite_count += int(bad.sum())
    f = np.where(bad, np.inf, f)
    order = np.argsort(f, kind="stable")

    if np.isfinite(f[order[0]]) and f[order[0]] < state.best_f:
        state.best_f = float(f[order[0]])
        state.best_x = x[order[0]].copy()

    n, w = state.n, state.weights
    sel = order[:state.mu]
    z_sel = state.last_z[sel]
    y_sel = (z_sel * state.D) @ state.B.T
    z_w = w @ z_sel
    y_w = w @ y_sel

    state.mean = state.mean + state.sigma * y_w

    cs, cc = state.c_sigma, state.c_c
    # C^(-1/2) y_w == B z_w
    state.p_sigma = (1 - cs) * state.p_sigma + math.sqrt(cs * (2 - cs) * state.mu_eff) * (state.B @ z_w)
    ps_norm = float(np.linalg.norm(state.p_sigma))
    g = state.generation + 1
    h_sigma = ps_norm / math.sqrt(1 - (1 - cs) ** (2 * g)) < (1.4 + 2 / (n + 1)) * state.chi_n
    state.p_c = (1 - cc) * state.p_c + h_sigma * math.sqrt(cc * (2 - cc) * state.mu_eff) * y_w

    c1, cmu = state.c_1, state.c_mu
    delta_h = (1 - h_sigma) * cc * (2 - cc)
    rank_mu = (y_sel.T * w) @ y_sel
    C = ((1 - c1 - cmu) * state.C
         + c1 * (np.outer(state.p_c, state.p_c) + delta_h * state.C)
         + cmu * rank_mu)
    state.C = (C + C.T) / 2

    state.sigma = state.sigma * math.exp((cs / state.d_sigma) * (ps_norm / state.chi_n - 1))
    state.generation = g
    state.last_z = state.last_x = None
    state.decompose()
    return state


@dataclass(frozen=True)
class StopCriteria:
    max_generations: int = 100
    target_fitness: float | None = None
    tol_fun: float = 0.0
    sigma_floor: float = 1e-12

    def __post_init__(self):
        if self.max_generations < 1:
            raise CmaesError("max_generations must be at least 1")


def should_stop(state: CmaesState, crit: StopCriteria,
                last_fitness_spread: float = math.inf) -> str | None:
    """Name of the first stop rule that fires, or None."""
    if state.generation >= crit.max_generations:
        return "max_generations"
    if crit.target_fitness is not None and state.best_f <= crit.target_fitness:
        return "target_fitness"
    if last_fitness_spread < crit.tol_fun:
        return "tol_fun"
    if state.sigma < crit.sigma_floor:
        return "sigma_floor"
    return None


def fmin(func, x0, sigma0: float, *, lam: int | None = None, seed: int = 0,
         stop: StopCriteria = StopCriteria(1000)) -> CmaesState:
    """Minimize ``func`` from ``x0``; returns the final state."""
    x0 = np.asarray(x0, dtype=float)
    state = cmaes_init(len(x0), x0, sigma0, lam, seed)
    spread = math.inf
    while should_stop(state, stop, spread) is None:
        pop = ask(state)
        fit = np.array([func(xi) for xi in pop])
        tell(state, pop, fit)
        finite = fit[np.isfinite(fit)]
        spread = float(finite.max() - finite.min()) if len(finite) else math.inf
    return state

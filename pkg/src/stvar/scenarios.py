"""Simulation scenarios on a jittered lattice and the replicate study driver."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .evaluation import estimation_errors, support_metrics
from .model import CoefficientStack, VarModel, forecast, is_stationary, simulate
from .selection import LASSO, CvPlan, forward_cv, rmsfe
from .spatial import SiteGeometry

log = logging.getLogger(__name__)

LATTICE_SIZE = 21
LATTICE_STEP = 0.05
LATTICE_JITTER = 0.01

FULL_SCALE_SITES = {1: 100, 2: 100, 3: 60}
DESK_SITES = 30


def make_lattice(seed=None, jitter: bool = True) -> np.ndarray:
    """Vertices ``(x_i, y_j)`` of a 21x21 lattice, ``x_i = 0.05 i + delta_i``, row-major in ``i``."""
    rng = np.random.default_rng(seed)
    idx = np.arange(1, LATTICE_SIZE + 1) * LATTICE_STEP
    if jitter:
        dx = rng.uniform(-LATTICE_JITTER, LATTICE_JITTER, LATTICE_SIZE)
        dy = rng.uniform(-LATTICE_JITTER, LATTICE_JITTER, LATTICE_SIZE)
    else:
        dx = dy = np.zeros(LATTICE_SIZE)
    xs, ys = idx + dx, idx + dy
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass(frozen=True)
class ScenarioSpec:
    order: int = 1
    setting: int = 1
    scenario: str = "a"
    m: int = DESK_SITES
    sigma_scale: float = 0.01
    seed: int = 0
    max_attempts: int = 10_000

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise ValueError("order must be 1, 2 or 3")
        if self.setting not in (1, 2):
            raise ValueError("setting must be 1 or 2")
        if self.setting == 2 and self.order != 1:
            raise ValueError("setting 2 is only defined for VAR(1)")
        if self.scenario not in ("a", "b", "c"):
            raise ValueError("scenario must be 'a', 'b' or 'c'")
        if not 1 <= self.m <= LATTICE_SIZE ** 2:
            raise ValueError("m must be between 1 and the lattice size")
        if self.sigma_scale <= 0:
            raise ValueError("sigma_scale must be positive")


def _magnitudes(spec: ScenarioSpec, d: np.ndarray, rng) -> np.ndarray:
    """``(p, m, m)`` absolute values of the true transition matrices."""
    shape = d.shape
    if spec.order == 1:
        if spec.scenario == "a":
            d0 = 0.05 if spec.setting == 1 else 0.06
            return (rng.uniform(0.1, 0.5, shape) * (d <= d0))[None]
        if spec.scenario == "b":
            return (0.55 * np.exp(-20.0 * d))[None]
        return (0.25 * np.exp(-5.0 * d))[None]
    if spec.order == 2:
        if spec.scenario == "a":
            return np.stack([rng.uniform(0.1, 0.6, shape) * (d <= 0.06),
                             rng.uniform(0.1, 0.4, shape) * (d <= 0.04)])
        if spec.scenario == "b":
            return np.stack([0.5 * np.exp(-20.0 * d), 0.3 * np.exp(-80.0 * d)])
        return np.stack([0.3 * np.exp(-5.0 * d), 0.15 * np.exp(-20.0 * d)])
    lags = range(1, 4)
    if spec.scenario == "a":
        return np.stack([rng.uniform(0.15, 0.6 - 0.1 * l, shape) * (d <= 0.07 - 0.01 * l) for l in lags])
    if spec.scenario == "b":
        return np.stack([0.3 * np.exp(-25.0 * l * d) for l in lags])
    return np.stack([0.25 * np.exp(-10.0 * l * d) for l in lags])


def select_sites(coords: np.ndarray, setting: int, m: int, rng) -> np.ndarray:
    if setting == 1:
        pool = np.arange(coords.shape[0])
    else:
        x, y = coords[:, 0], coords[:, 1]
        pool = np.flatnonzero(((x < 0.5) & (y < 0.5)) | ((x > 0.5) & (y > 0.5)))
    if m > pool.size:
        raise ValueError(f"cannot select {m} sites from {pool.size} candidates")
    return np.sort(rng.choice(pool, size=m, replace=False))


def generate_truth(spec: ScenarioSpec) -> tuple[SiteGeometry, VarModel]:
    """Sites and a stationary true model; magnitudes and signs are redrawn until stationary."""
    rng = np.random.default_rng(spec.seed)
    coords = make_lattice(rng)
    idx = select_sites(coords, spec.setting, spec.m, rng)
    geometry = SiteGeometry.from_coords(coords[idx], site_ids=tuple(f"s{i}" for i in idx))
    sigma = spec.sigma_scale * np.eye(spec.m)
    for _ in range(spec.max_attempts):
        mag = _magnitudes(spec, geometry.distances, rng)
        signs = rng.choice(np.array([-1.0, 1.0]), size=mag.shape)
        phis = mag * signs
        if is_stationary(phis):
            return geometry, VarModel(phis, sigma)
    raise RuntimeError(f"no stationary draw in {spec.max_attempts} attempts")


@dataclass(frozen=True)
class Estimator:
    name: str
    weight_kind: str
    c_candidates: tuple = (0.5, 5, 10, 15, 20, 25, 30)


DEFAULT_ESTIMATORS = (
    Estimator("LASSO", LASSO),
    Estimator("WLASSO1", "exp-lag-dist"),
    Estimator("WLASSO2", "power-lag-dist"),
)

METRICS = ("l1", "l2", "pfz", "pfnz")


@dataclass(frozen=True)
class StudyConfig:
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    replicates: int = 20
    t_len: int = 150
    train: int = 40
    validation: int = 30
    horizons: int = 5
    burn_in: int = 500
    p_candidates: tuple = (1, 2, 3, 4)
    lambda_count: int = 30
    estimators: tuple = DEFAULT_ESTIMATORS
    master_seed: int = 0

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.train + self.validation + self.horizons > self.t_len:
            raise ValueError("train + validation + horizons exceeds the series length")
        if not self.estimators:
            raise ValueError("at least one estimator is required")

    @property
    def baseline(self) -> str:
        return self.estimators[0].name


def replicate_seeds(master_seed: int, replicates: int) -> list[int]:
    """Independent per-replicate seeds spawned from the master seed."""
    children = np.random.SeedSequence(master_seed).spawn(replicates)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _pad(stack: CoefficientStack, p: int) -> np.ndarray:
    phis = stack.phis
    if phis.shape[0] < p:
        phis = np.concatenate([phis, np.zeros((p - phis.shape[0],) + phis.shape[1:])])
    return phis


def holdout_rmsfe(coeffs: CoefficientStack, panel: np.ndarray, first_target: int, horizons: int) -> list[float]:
    """h-step RMSFE over all targets at or after ``first_target`` for ``h = 1..horizons``."""
    t_len = panel.shape[0]
    out = []
    for h in range(1, horizons + 1):
        preds, actual = [], []
        for origin in range(first_target - 1, t_len - h):
            preds.append(forecast(coeffs, panel[:origin + 1], h)[-1])
            actual.append(panel[origin + h])
        out.append(rmsfe(preds, actual))
    return out


def run_replicate(config: StudyConfig, truth: VarModel, geometry: SiteGeometry, rep: int, seed: int,
                  threads: int = 1) -> list[dict]:
    panel = simulate(truth, config.t_len, config.burn_in, seed)
    fit_end = config.train + config.validation
    rows = []
    for est in config.estimators:
        plan = CvPlan(weight_kind=est.weight_kind, p_candidates=config.p_candidates,
                      c_candidates=est.c_candidates, lambda_count=config.lambda_count, train_end=config.train)
        cv = forward_cv(panel[:fit_end], geometry, plan, threads=threads)
        coeffs = cv.fit.coeffs
        p = max(coeffs.p, truth.p)
        est_phis, true_phis = _pad(coeffs, p), _pad(truth.coefficient_stack(), p)
        row = {"replicate": rep, "estimator": est.name, "p": cv.p, "c": cv.c, "lambda": cv.lam}
        row.update(estimation_errors(est_phis, true_phis))
        row.update(support_metrics(est_phis, true_phis))
        for h, err in enumerate(holdout_rmsfe(coeffs, panel, fit_end, config.horizons), start=1):
            row[f"rmsfe_h{h}"] = err
        rows.append(row)
    return rows


def ratio_rows(rows: list[dict], baseline: str, keys) -> list[dict]:
    """Per-replicate metric ratios against the baseline estimator.

    ``0/0`` is recorded as ``nan`` (no information) and ``x/0`` as ``inf``.
    """
    base = {r["replicate"]: r for r in rows if r["estimator"] == baseline}
    out = []
    for r in rows:
        b = base[r["replicate"]]
        ratio = {"replicate": r["replicate"], "estimator": r["estimator"]}
        for k in keys:
            num, den = r[k], b[k]
            if den != 0:
                ratio[k] = num / den
            else:
                ratio[k] = float("nan") if num == 0 else float("inf")
        out.append(ratio)
    return out


def summarize(ratios: list[dict], keys) -> list[dict]:
    """Mean and standard error of each ratio per estimator, ignoring undefined ratios."""
    names = list(dict.fromkeys(r["estimator"] for r in ratios))
    out = []
    for k in keys:
        for name in names:
            vals = np.array([r[k] for r in ratios if r["estimator"] == name], dtype=float)
            vals = vals[~np.isnan(vals)]
            n = vals.size
            with np.errstate(invalid="ignore"):
                mean = float(vals.mean()) if n else float("nan")
                se = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
            out.append({"metric": k, "estimator": name, "mean": mean, "se": se, "n": n})
    return out


@dataclass
class StudyResult:
    geometry: SiteGeometry
    truth: VarModel
    rows: list
    ratios: list
    summary: list


def run_study(config: StudyConfig, threads: int = 1) -> StudyResult:
    geometry, truth = generate_truth(config.scenario)
    seeds = replicate_seeds(config.master_seed, config.replicates)
    work = lambda rep: run_replicate(config, truth, geometry, rep, seeds[rep])  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_rep = list(pool.map(work, range(config.replicates)))
    else:
        per_rep = [work(rep) for rep in range(config.replicates)]
    rows = [row for rep_rows in per_rep for row in rep_rows]
    keys = METRICS + tuple(f"rmsfe_h{h}" for h in range(1, config.horizons + 1))
    ratios = ratio_rows(rows, config.baseline, keys)
    return StudyResult(geometry, truth, rows, ratios, summarize(ratios, keys))

"""Seeded benchmark harness for the synthetic estimation studies.

Scenarios
---------
``one_d``
    The 1-D pair N(0, 1.1^2) vs N(1, 0.9^2); closed-form KL 0.66353.
``iso``
    Isotropic unit-covariance Gaussians, mean difference sqrt(2) along the
    first axis; KL is exactly 1 in any dimension.
``nh``
    Equal means; unit covariance vs a scaled identity with one off-diagonal
    pair of 0.1. The diagonal value ``omega`` defaults to 0.750^2 in 10-D and
    0.863^2 in 20-D (KL approximately 1.0 and 0.5); other dimensions must
    supply ``omega`` explicitly.
``vmd``
    Isotropic unit-covariance pair with a configurable first-axis mean
    difference ``mean_diff``; sweep it by running one config per value.
``mixture``
    Two three-component Gaussian mixtures whose component means sit on a
    radius-2 triangle in the first two coordinates (the second mixture's
    triangle is rotated 60 degrees), unit isotropic covariances, equal
    weights; extra dimensions are shared standard normals. The single-Gaussian
    score model is deliberately misspecified here. Truth comes from a
    10^6-sample Monte Carlo estimate at a dedicated sub-seed.
``posterior_homoscedastic``
    Shared unit covariance, mean difference sqrt(2) along the first axis
    (20-D default); used by the posterior bias/variance sweep where the
    Bayes posterior is the reference.

Reports are CSV: one row per (estimator, h, trial) plus an aggregate section;
identical configs (same seed) produce byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .core import (
    Dataset,
    GaussianModel,
    SeedSpec,
    as_seed,
    fit_gaussian,
    gaussian_kl_closed_form,
    make_gaussian,
    mixture_log_density,
    sample_gaussian,
    sample_mixture,
)
from .errors import InvalidConfigError, NumericFailureError
from .estimators import kl_estimate_grid, posterior_grid
from .kde import default_bandwidth_grid, select_bandwidth
from .scores import GaussianScoreField, PairScores
from .weight import AlphaFunction, ConstantAlpha, analytic_alpha, fit_rkhs_alpha

__all__ = [
    "ExperimentConfig",
    "TrialRow",
    "AggregateRow",
    "TrialReport",
    "make_scenario",
    "run_kl_sweep",
    "run_posterior_bias_sweep",
    "write_report",
    "read_report",
    "load_config",
]

SCENARIOS = ("one_d", "iso", "nh", "vmd", "mixture", "posterior_homoscedastic")
ESTIMATORS = ("kde", "vwkde-mb")
MC_TRUTH_SAMPLES = 1_000_000


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one seeded experiment.

    ``h_grid`` of None means per-trial bandwidth selection: full-sample LOO
    for the plain KDE, the 25%-subsample heuristic for the bias-corrected
    estimator, both over ``selection_grid_size`` log-spaced candidates.
    ``scenario_params`` carries scenario-specific values (``omega``,
    ``mean_diff``, ``mixture`` overrides). ``weight_form`` picks the
    model-based weight: "rkhs" (the fitted quadratic program) or "analytic"
    (closed-form homoscedastic weight from pooled fitted parameters; the
    posterior scenario's default). "analytic-oracle" uses the true scenario
    parameters and exists for diagnostics.
    """

    scenario: str
    dim: int
    n_per_class: int
    trials: int
    seed: int | SeedSpec
    h_grid: tuple[float, ...] | None = None
    estimators: tuple[str, ...] = ESTIMATORS
    scenario_params: dict = field(default_factory=dict)
    sigma: float | None = None
    lam: float | None = None
    max_basis: int = 3000
    gamma: float | None = None
    weight_form: str | None = None
    eval_per_class: int = 1000
    selection_grid_size: int = 12

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise InvalidConfigError(
                f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}"
            )
        if self.trials < 1:
            raise InvalidConfigError(f"trials must be >= 1, got {self.trials}")
        if self.n_per_class < 2:
            raise InvalidConfigError(f"n_per_class must be >= 2, got {self.n_per_class}")
        if self.dim < 1:
            raise InvalidConfigError(f"dim must be >= 1, got {self.dim}")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise InvalidConfigError(f"unknown estimators {sorted(unknown)}")
        if not self.estimators:
            raise InvalidConfigError("estimator set is empty")
        if self.h_grid is not None:
            grid = tuple(float(h) for h in self.h_grid)
            if not grid:
                raise InvalidConfigError("h_grid must be nonempty (or None for selection)")
            if any(h <= 0 for h in grid):
                raise InvalidConfigError("h_grid entries must be positive")
            object.__setattr__(self, "h_grid", grid)
        if self.weight_form not in (None, "rkhs", "analytic", "analytic-oracle"):
            raise InvalidConfigError(f"unknown weight_form {self.weight_form!r}")
        object.__setattr__(self, "estimators", tuple(self.estimators))

    @property
    def seed_spec(self) -> SeedSpec:
        return as_seed(self.seed)


@dataclass(frozen=True)
class Scenario:
    """Samplers plus ground truth for one configuration."""

    name: str
    sample1: object
    sample2: object
    truth: float | None
    model1: GaussianModel | None = None
    model2: GaussianModel | None = None
    log_density1: object = None
    log_density2: object = None


def _nh_omega(config: ExperimentConfig) -> float:
    omega = config.scenario_params.get("omega")
    if omega is None:
        defaults = {10: 0.750**2, 20: 0.863**2}
        omega = defaults.get(config.dim)
        if omega is None:
            raise InvalidConfigError(
                f"nh scenario in {config.dim}-D needs an explicit 'omega' parameter"
            )
    omega = float(omega)
    if omega <= 0:
        raise InvalidConfigError(f"omega must be positive, got {omega}")
    return omega


def _mixture_components(config: ExperimentConfig, rotate_deg: float):
    d = config.dim
    if d < 2:
        raise InvalidConfigError("mixture scenario needs dim >= 2")
    params = config.scenario_params.get("mixture", {})
    radius = float(params.get("radius", 2.0))
    comps = []
    for k in range(3):
        angle = math.radians(90.0 + 120.0 * k + rotate_deg)
        mean = np.zeros(d)
        mean[0] = radius * math.cos(angle)
        mean[1] = radius * math.sin(angle)
        comps.append((1.0 / 3.0, make_gaussian(mean, np.eye(d))))
    return comps


def make_scenario(config: ExperimentConfig) -> Scenario:
    """Seeded samplers for both classes plus the scenario's analytic truth."""
    d = config.dim
    name = config.scenario
    if name == "one_d":
        if d != 1:
            raise InvalidConfigError("one_d scenario requires dim=1")
        m1 = make_gaussian([0.0], [[1.1**2]])
        m2 = make_gaussian([1.0], [[0.9**2]])
    elif name in ("iso", "posterior_homoscedastic"):
        mu2 = np.zeros(d)
        mu2[0] = float(config.scenario_params.get("mean_diff", math.sqrt(2.0)))
        m1 = make_gaussian(np.zeros(d), np.eye(d))
        m2 = make_gaussian(mu2, np.eye(d))
    elif name == "nh":
        omega = _nh_omega(config)
        if d < 2:
            raise InvalidConfigError("nh scenario needs dim >= 2")
        cov2 = omega * np.eye(d)
        cov2[0, 1] = cov2[1, 0] = 0.1
        m1 = make_gaussian(np.zeros(d), np.eye(d))
        m2 = make_gaussian(np.zeros(d), cov2)
    elif name == "vmd":
        if "mean_diff" not in config.scenario_params:
            raise InvalidConfigError("vmd scenario needs a 'mean_diff' parameter")
        diff = float(config.scenario_params["mean_diff"])
        if not 0 <= diff:
            raise InvalidConfigError(f"mean_diff must be >= 0, got {diff}")
        mu2 = np.zeros(d)
        mu2[0] = diff
        m1 = make_gaussian(np.zeros(d), np.eye(d))
        m2 = make_gaussian(mu2, np.eye(d))
    elif name == "mixture":
        comps1 = _mixture_components(config, 0.0)
        comps2 = _mixture_components(config, 60.0)
        truth_rng_seed = config.seed_spec.child(0, 0)
        mc = sample_mixture(comps1, MC_TRUTH_SAMPLES, truth_rng_seed)
        truth = float(
            np.mean(
                mixture_log_density(comps1, mc.points)
                - mixture_log_density(comps2, mc.points)
            )
        )
        return Scenario(
            name,
            lambda n, seed: sample_mixture(comps1, n, seed),
            lambda n, seed: sample_mixture(comps2, n, seed),
            truth,
            log_density1=lambda x: mixture_log_density(comps1, x),
            log_density2=lambda x: mixture_log_density(comps2, x),
        )
    else:  # pragma: no cover - guarded by ExperimentConfig
        raise InvalidConfigError(f"unknown scenario {name!r}")

    if name == "iso":
        truth = 1.0
    elif name == "vmd":
        diff = float(config.scenario_params["mean_diff"])
        truth = 0.5 * diff * diff
    else:
        truth = gaussian_kl_closed_form(m1, m2)
    return Scenario(
        name,
        lambda n, seed: sample_gaussian(m1, n, seed),
        lambda n, seed: sample_gaussian(m2, n, seed),
        truth,
        model1=m1,
        model2=m2,
        log_density1=m1.log_density,
        log_density2=m2.log_density,
    )


@dataclass(frozen=True)
class TrialRow:
    scenario: str
    estimator: str
    h: float
    trial: int
    estimate: float
    truth: float


@dataclass(frozen=True)
class AggregateRow:
    scenario: str
    estimator: str
    h_label: str
    mean: float
    std: float
    bias_sq: float
    variance: float
    n_trials: int


@dataclass(frozen=True)
class TrialReport:
    rows: tuple[TrialRow, ...]
    aggregates: tuple[AggregateRow, ...]
    n_failed: int
    kind: str = "kl"


def _pooled_weight(data1: Dataset, data2: Dataset, config: ExperimentConfig,
                   scenario: Scenario, seed: SeedSpec, form: str) -> AlphaFunction:
    """Model-based weight for one trial, per the resolved ``form``."""
    if form == "analytic-oracle":
        if scenario.model1 is None:
            raise InvalidConfigError("analytic-oracle weight needs Gaussian scenario truth")
        return analytic_alpha(
            scenario.model1.mean, scenario.model2.mean, scenario.model1.covariance
        )
    g1 = fit_gaussian(data1)
    g2 = fit_gaussian(data2)
    if form == "analytic":
        n1, n2 = len(data1), len(data2)
        pooled_cov = ((n1 - 1) * g1.covariance + (n2 - 1) * g2.covariance) / (n1 + n2 - 2)
        return analytic_alpha(g1.mean, g2.mean, pooled_cov)
    pair = PairScores(GaussianScoreField(g1), GaussianScoreField(g2))
    return fit_rkhs_alpha(
        data1, data2, pair,
        sigma=config.sigma, lam=config.lam, max_basis=config.max_basis, seed=seed,
    )


def _selection_grids(pooled, config: ExperimentConfig):
    return default_bandwidth_grid(pooled, size=config.selection_grid_size)


def _aggregate(rows: list[TrialRow], kind: str) -> list[AggregateRow]:
    """Group trial rows and attach mean/std/bias^2/variance.

    Fixed-grid runs group by (estimator, h); selection runs group by
    estimator with the label "selected". Variance uses the population
    convention so bias^2 + variance equals the mean squared error exactly.
    """
    groups: dict[tuple[str, str], list[TrialRow]] = {}
    for row in rows:
        label = format(row.h, ".17g") if kind != "selected" else "selected"
        groups.setdefault((row.estimator, label), []).append(row)
    out = []
    for (estimator, label), members in sorted(
        groups.items(), key=lambda kv: (kv[0][0], float(kv[1][0].h) if kv[1] else 0)
    ):
        est = np.array([m.estimate for m in members])
        truth = members[0].truth
        mean = float(est.mean())
        variance = float(np.mean((est - mean) ** 2))
        bias_sq = float((mean - truth) ** 2)
        out.append(
            AggregateRow(
                members[0].scenario, estimator, label, mean,
                math.sqrt(variance), bias_sq, variance, len(members),
            )
        )
    return out


def run_kl_sweep(config: ExperimentConfig) -> TrialReport:
    """KL estimates per (estimator, h, trial) with aggregates against truth.

    Trials failing with a numeric error are excluded from aggregates and
    counted in ``n_failed``; trial sub-seeds derive deterministically from the
    config seed, so reruns are bit-identical.
    """
    scenario = make_scenario(config)
    master = config.seed_spec
    rows: list[TrialRow] = []
    n_failed = 0
    selected_mode = config.h_grid is None
    form = config.weight_form or "rkhs"
    for t in range(config.trials):
        trial_seed = master.child(t + 1)
        try:
            d1 = scenario.sample1(config.n_per_class, trial_seed.child(0))
            d2 = scenario.sample2(config.n_per_class, trial_seed.child(1))
            alphas: dict[str, AlphaFunction] = {}
            if "kde" in config.estimators:
                alphas["kde"] = ConstantAlpha(1.0)
            if "vwkde-mb" in config.estimators:
                alphas["vwkde-mb"] = _pooled_weight(
                    d1, d2, config, scenario, trial_seed.child(2), form
                )
            if selected_mode:
                pooled = np.vstack([d1.points, d2.points])
                grid = _selection_grids(pooled, config)
                h_by_est = {
                    "kde": select_bandwidth(pooled, grid, 1.0, trial_seed.child(3)),
                    "vwkde-mb": select_bandwidth(pooled, grid, 0.25, trial_seed.child(4)),
                }
            for name, alpha in alphas.items():
                hs = [h_by_est[name]] if selected_mode else list(config.h_grid)
                results = kl_estimate_grid(d1, d2, alpha, hs)
                for h, res in zip(hs, results):
                    rows.append(
                        TrialRow(config.scenario, name, float(h), t, res.value,
                                 scenario.truth)
                    )
        except NumericFailureError:
            n_failed += 1
    kind = "selected" if selected_mode else "kl"
    return TrialReport(tuple(rows), tuple(_aggregate(rows, kind)), n_failed, kind="kl")


def run_posterior_bias_sweep(config: ExperimentConfig) -> TrialReport:
    """Posterior squared-error sweep against the Bayes posterior.

    Per trial and h, the posterior estimate is evaluated on a fixed fresh
    sample of ``eval_per_class`` points per class (drawn once per config).
    The trial row's estimate is its mean squared error over those points;
    aggregate ``bias_sq``/``variance`` split that error pointwise across
    trials, so bias_sq + variance equals the mean of the trial estimates.
    """
    if config.scenario != "posterior_homoscedastic":
        raise InvalidConfigError("posterior sweep requires the posterior_homoscedastic scenario")
    if config.h_grid is None:
        raise InvalidConfigError("posterior sweep needs an explicit h_grid")
    scenario = make_scenario(config)
    master = config.seed_spec
    # The homoscedastic posterior study defaults to the closed-form weight
    # built from pooled fitted parameters; "rkhs" must be requested explicitly.
    form = config.weight_form or "analytic"

    e1 = scenario.sample1(config.eval_per_class, master.child(0, 1))
    e2 = scenario.sample2(config.eval_per_class, master.child(0, 2))
    eval_pts = np.vstack([e1.points, e2.points])
    gamma = 1.0 if config.gamma is None else config.gamma
    lp1 = scenario.log_density1(eval_pts)
    lp2 = scenario.log_density2(eval_pts)
    bayes = expit(lp1 - lp2 - math.log(gamma))

    hs = list(config.h_grid)
    posts: dict[str, list[np.ndarray]] = {name: [] for name in config.estimators}
    rows: list[TrialRow] = []
    n_failed = 0
    for t in range(config.trials):
        trial_seed = master.child(t + 1)
        try:
            d1 = scenario.sample1(config.n_per_class, trial_seed.child(0))
            d2 = scenario.sample2(config.n_per_class, trial_seed.child(1))
            for name in config.estimators:
                if name == "kde":
                    alpha: AlphaFunction = ConstantAlpha(1.0)
                else:
                    alpha = _pooled_weight(d1, d2, config, scenario,
                                           trial_seed.child(2), form)
                f_hat = posterior_grid(d1, d2, alpha, hs, eval_pts, gamma=gamma)
                posts[name].append(f_hat)
                for j, h in enumerate(hs):
                    mse = float(np.mean((f_hat[j] - bayes) ** 2))
                    rows.append(TrialRow(config.scenario, name, float(h), t, mse, 0.0))
        except NumericFailureError:
            n_failed += 1

    aggregates = []
    for name in config.estimators:
        if not posts[name]:
            continue
        stack = np.stack(posts[name], axis=0)  # (trials, len(hs), n_eval)
        for j, h in enumerate(hs):
            fh = stack[:, j, :]
            mean_curve = fh.mean(axis=0)
            bias_sq = float(np.mean((mean_curve - bayes) ** 2))
            variance = float(np.mean((fh - mean_curve) ** 2))
            trial_mse = np.mean((fh - bayes) ** 2, axis=1)
            aggregates.append(
                AggregateRow(
                    config.scenario, name, format(float(h), ".17g"),
                    float(trial_mse.mean()), float(np.std(trial_mse)),
                    bias_sq, variance, fh.shape[0],
                )
            )
    return TrialReport(tuple(rows), tuple(aggregates), n_failed, kind="posterior")


def write_report(report: TrialReport, path) -> None:
    """Trial rows, then an aggregate section, full float precision."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("scenario,estimator,h,trial,estimate,truth\n")
        for r in report.rows:
            fh.write(
                f"{r.scenario},{r.estimator},{r.h:.17g},{r.trial},"
                f"{r.estimate:.17g},{r.truth:.17g}\n"
            )
        fh.write(f"# failed_trials={report.n_failed}\n")
        fh.write("# aggregates\n")
        fh.write("scenario,estimator,h,mean,std,bias_sq,variance,trials\n")
        for a in report.aggregates:
            fh.write(
                f"{a.scenario},{a.estimator},{a.h_label},{a.mean:.17g},"
                f"{a.std:.17g},{a.bias_sq:.17g},{a.variance:.17g},{a.n_trials}\n"
            )


def read_report(path) -> TrialReport:
    """Parse a report written by :func:`write_report`."""
    rows: list[TrialRow] = []
    aggregates: list[AggregateRow] = []
    n_failed = 0
    section = "rows"
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "scenario,estimator,h,trial,estimate,truth":
            raise InvalidConfigError(f"{path}: unexpected report header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("# failed_trials="):
                n_failed = int(line.split("=", 1)[1])
                continue
            if line == "# aggregates":
                section = "agg_header"
                continue
            if section == "agg_header":
                section = "agg"
                continue
            parts = line.split(",")
            if section == "rows":
                rows.append(
                    TrialRow(parts[0], parts[1], float(parts[2]), int(parts[3]),
                             float(parts[4]), float(parts[5]))
                )
            else:
                aggregates.append(
                    AggregateRow(parts[0], parts[1], parts[2], float(parts[3]),
                                 float(parts[4]), float(parts[5]), float(parts[6]),
                                 int(parts[7]))
                )
    return TrialReport(tuple(rows), tuple(aggregates), n_failed)


def config_from_dict(payload: dict) -> ExperimentConfig:
    """Build a config from the JSON schema (field names mirror the dataclass)."""
    if not isinstance(payload, dict):
        raise InvalidConfigError("experiment config must be a JSON object")
    known = {
        "scenario", "dim", "n_per_class", "trials", "seed", "h_grid",
        "estimators", "scenario_params", "sigma", "lam", "max_basis",
        "gamma", "weight_form", "eval_per_class", "selection_grid_size",
    }
    unknown = set(payload) - known
    if unknown:
        raise InvalidConfigError(f"unknown config fields: {sorted(unknown)}")
    payload = dict(payload)
    if "h_grid" in payload and payload["h_grid"] is not None:
        payload["h_grid"] = tuple(payload["h_grid"])
    if "estimators" in payload:
        payload["estimators"] = tuple(payload["estimators"])
    try:
        return ExperimentConfig(**payload)
    except TypeError as exc:
        raise InvalidConfigError(f"bad experiment config: {exc}") from exc


def load_config(path) -> list[ExperimentConfig]:
    """Read one config object or a list of them from JSON."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if isinstance(payload, list):
        return [config_from_dict(p) for p in payload]
    return [config_from_dict(payload)]

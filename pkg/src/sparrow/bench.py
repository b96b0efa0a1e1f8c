"""Monte-Carlo experiment runner and estimation-error metrics.

Frequencies live on the periodic interval [-1, 1), so deviations are
measured with the wrap-around distance.  Estimates are matched to ground
truth per trial (top magnitudes on over-estimation, seeded uniform
fill-ins on under-estimation, then a minimum-total-distance assignment),
and bias / standard deviation / RMSE / resolution aggregate over trials.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from . import baselines, grid, gridless, model
from .errors import SparrowError, ValidationError


def wrap_distance(a: float, b: float) -> float:
    """Distance on the circle of circumference 2: min_i |a - b + 2i|."""
    d = abs(a - b) % 2.0
    return min(d, 2.0 - d)


def wrap_distance_vec(a, b) -> np.ndarray:
    d = np.abs(np.asarray(a) - np.asarray(b)) % 2.0
    return np.minimum(d, 2.0 - d)


def match_estimates(truth, estimates, magnitudes, rng: np.random.Generator) -> np.ndarray:
    """Estimates matched to the truth vector, one per true frequency.

    Over-estimation keeps the largest magnitudes; under-estimation pads
    with uniform draws from ``rng``; the final pairing minimizes the total
    wrap-around distance.
    """
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    est = np.atleast_1d(np.asarray(estimates, dtype=float)) if np.size(estimates) else np.zeros(0)
    mags = np.atleast_1d(np.asarray(magnitudes, dtype=float)) if np.size(magnitudes) else np.zeros(0)
    l = truth.size
    if est.size > l:
        keep = np.argsort(mags)[::-1][:l]
        est = est[keep]
    elif est.size < l:
        est = np.concatenate([est, rng.uniform(-1.0, 1.0, l - est.size)])
    cost = wrap_distance_vec(truth[:, None], est[None, :])
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    matched = np.empty(l)
    matched[rows] = est[cols]
    return matched


def bias(matched_trials: np.ndarray, truth) -> float:
    """sqrt(mean_l (mu_l - Mean_t(muhat_l))^2) over per-frequency means."""
    truth = np.asarray(truth, dtype=float)
    means = np.mean(matched_trials, axis=0)
    return float(np.sqrt(np.mean((truth - means) ** 2)))


def std_wa(matched_trials: np.ndarray, truth=None) -> float:
    """sqrt(mean over trials and frequencies of wrapped deviations squared)."""
    means = np.mean(matched_trials, axis=0)
    dev = wrap_distance_vec(matched_trials, means[None, :])
    return float(np.sqrt(np.mean(dev**2)))


def rmse(matched_trials: np.ndarray, truth) -> float:
    truth = np.asarray(truth, dtype=float)
    dev = wrap_distance_vec(matched_trials, truth[None, :])
    return float(np.sqrt(np.mean(dev**2)))


def resolution_fraction(matched_trials: np.ndarray, truth) -> float:
    """Fraction of trials with total deviation within the pair separation.

    Defined for exactly two sources; the boundary counts as resolved.
    """
    truth = np.asarray(truth, dtype=float)
    if truth.size != 2:
        raise ValidationError("resolution criterion is defined for two sources")
    sep = wrap_distance(truth[0], truth[1])
    total = wrap_distance_vec(matched_trials, truth[None, :]).sum(axis=1)
    return float(np.mean(total <= sep))


# ---------------------------------------------------------------------------
# Estimator registry
# ---------------------------------------------------------------------------

def _peaks_from_spectrum(values: np.ndarray, grid_points: np.ndarray, delta_rel: float = 1e-3):
    """Circular local maxima above a relative floor, sorted by height."""
    vmax = values.max(initial=0.0)
    if vmax <= 0:
        return np.zeros(0), np.zeros(0)
    left = np.roll(values, 1)
    right = np.roll(values, -1)
    keep = (values > left) & (values >= right) & (values > delta_rel * vmax)
    idx = np.where(keep)[0]
    return grid_points[idx], values[idx]


def _sparse_support(values: np.ndarray, grid_points: np.ndarray, delta_rel: float = 1e-3):
    """Support entries of a sparse spectrum; ranking happens in matching."""
    vmax = values.max(initial=0.0)
    if vmax <= 0:
        return np.zeros(0), np.zeros(0)
    idx = np.where(values > delta_rel * vmax)[0]
    return grid_points[idx], values[idx]


@dataclass
class _Workspace:
    geometry: model.ArrayGeometry
    dictionary: grid.Dictionary | None
    lam: float
    n_sources: int


def _est_sparrow_cd(ws, batch, cov):
    sol = grid.sparrow_cd(ws.dictionary, cov, ws.lam)
    return _sparse_support(sol.s, ws.dictionary.grid.points)


def _est_sparrow_sdp(ws, batch, cov):
    sol = grid.sparrow_sdp_auto(ws.dictionary, batch, ws.lam)
    return _sparse_support(sol.s, ws.dictionary.grid.points)


def _est_l21(ws, batch, cov):
    sol = baselines.l21_solve(ws.dictionary, batch, ws.lam, tol=1e-8)
    s = np.linalg.norm(sol.x, axis=1) / np.sqrt(batch.n_snapshots)
    return _sparse_support(s, ws.dictionary.grid.points)


def _est_gl_sparrow(ws, batch, cov):
    sol = gridless.gl_sparrow_covariance(ws.geometry, cov, ws.lam)
    order = gridless.estimate_model_order(sol.u)
    if order == 0:
        return np.zeros(0), np.zeros(0)
    dec = gridless.vandermonde_decomposition(sol.u, order)
    return dec.frequencies, dec.magnitudes


def _est_anm(ws, batch, cov):
    sol = gridless.anm_sdp(ws.geometry, batch, ws.lam)
    u = sol.v / np.sqrt(batch.n_snapshots)
    order = gridless.estimate_model_order(u)
    if order == 0:
        return np.zeros(0), np.zeros(0)
    dec = gridless.vandermonde_decomposition(u, order)
    return dec.frequencies, dec.magnitudes


def _est_music(ws, batch, cov):
    spectrum, peaks = baselines.music_spectrum(
        cov, ws.n_sources, ws.dictionary.grid, ws.geometry
    )
    idx = np.searchsorted(ws.dictionary.grid.points, peaks)
    return peaks, spectrum[idx]


def _est_root_music(ws, batch, cov):
    freqs = baselines.root_music(cov, ws.n_sources, ws.geometry)
    return freqs, np.ones(freqs.size)


def _est_spice_us(ws, batch, cov):
    # estimator-level accuracy: the fine-grid programs are heavily
    # degenerate, and support extraction is insensitive below 1e-6
    sol = baselines.spice_undersampled(ws.dictionary, cov, tol=1e-6, accept_gap=1e-3)
    return _sparse_support(sol.p, ws.dictionary.grid.points)


def _est_spice_os(ws, batch, cov):
    sol = baselines.spice_oversampled(ws.dictionary, cov, tol=1e-6, accept_gap=1e-3)
    return _sparse_support(sol.p, ws.dictionary.grid.points)


METHODS = {
    "sparrow-cd": _est_sparrow_cd,
    "sparrow-sdp": _est_sparrow_sdp,
    "l21": _est_l21,
    "gl-sparrow": _est_gl_sparrow,
    "anm": _est_anm,
    "music": _est_music,
    "root-music": _est_root_music,
    "spice-us": _est_spice_us,
    "spice-os": _est_spice_os,
}

GRID_METHODS = {"sparrow-cd", "sparrow-sdp", "l21", "music", "spice-us", "spice-os"}


# ---------------------------------------------------------------------------
# Experiment configuration and runner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep of a Monte-Carlo scenario.

    ``sweep`` is either ("n_snapshots", values) with fixed frequencies, or
    ("delta_mu", values) where the first source sits at ``mu1`` and the
    second at ``mu1 - delta``.
    """

    geometry: model.ArrayGeometry
    frequencies: np.ndarray
    snr_db: float
    trials: int
    methods: tuple[str, ...]
    seed: int
    sweep: tuple[str, tuple] = ("n_snapshots", (50,))
    n_snapshots: int = 50
    mu1: float = 0.5
    grid_size: int = 200
    lam_rule: str | float = "auto"
    powers: np.ndarray | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError("need at least one trial")
        kind, values = self.sweep
        if kind not in ("n_snapshots", "delta_mu"):
            raise ValidationError(f"unknown sweep variable {kind!r}")
        if len(values) == 0:
            raise ValidationError("sweep values must be non-empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValidationError(f"unknown methods: {unknown} (available: {sorted(METHODS)})")


@dataclass
class TrialRecord:
    method: str
    sweep_value: float
    trial: int
    estimates: np.ndarray
    wall_ms: float
    status: str  # ok | failed


@dataclass
class AggregateRow:
    method: str
    sweep_value: float
    bias: float
    std: float
    rmse: float
    resolution: float | None
    mean_ms: float
    failures: int
    trials: int
    crb_rmse: float | None = None


@dataclass
class MetricsReport:
    config: ExperimentConfig
    sweep_variable: str
    rows: list[AggregateRow] = field(default_factory=list)
    records: list[TrialRecord] = field(default_factory=list)


def _scene_for(cfg: ExperimentConfig, sweep_value: float) -> tuple[model.SourceScene, int]:
    kind, _ = cfg.sweep
    if kind == "delta_mu":
        freqs = np.array([cfg.mu1 - sweep_value, cfg.mu1])
        n = cfg.n_snapshots
    else:
        freqs = np.asarray(cfg.frequencies, dtype=float)
        n = int(sweep_value)
    powers = cfg.powers if cfg.powers is not None else np.ones(freqs.size)
    return model.SourceScene(frequencies=freqs, powers=powers), n


def run_experiment(cfg: ExperimentConfig) -> MetricsReport:
    """Simulate, estimate, match and aggregate, deterministically in the seed.

    Per-trial solver failures are recorded with status "failed" and excluded
    from the aggregates; the failure count is reported per method and sweep
    point.  Wall time covers the estimator call only.
    """
    kind, values = cfg.sweep
    sigma2 = model.snr_to_noise_power(cfg.snr_db)
    report = MetricsReport(config=cfg, sweep_variable=kind)
    for sweep_idx, sweep_value in enumerate(values):
        scene, n = _scene_for(cfg, sweep_value)
        lam = (
            grid.select_lambda(sigma2, cfg.geometry.n_sensors)
            if cfg.lam_rule == "auto"
            else float(cfg.lam_rule)
        )
        dictionary = None
        if any(m in GRID_METHODS for m in cfg.methods):
            dictionary = grid.build_dictionary(cfg.geometry, model.uniform_grid(cfg.grid_size))
        ws = _Workspace(
            geometry=cfg.geometry,
            dictionary=dictionary,
            lam=lam,
            n_sources=scene.n_sources,
        )
        matched: dict[str, list[np.ndarray]] = {m: [] for m in cfg.methods}
        walls: dict[str, list[float]] = {m: [] for m in cfg.methods}
        failures: dict[str, int] = {m: 0 for m in cfg.methods}
        for trial in range(cfg.trials):
            batch = model.simulate_mmv(
                cfg.geometry, scene, n, sigma2, seed=cfg.seed,
                trial=sweep_idx * cfg.trials + trial,
            )
            cov = model.sample_covariance(batch)
            for mi, name in enumerate(cfg.methods):
                t0 = time.perf_counter()
                try:
                    est, mags = METHODS[name](ws, batch, cov)
                    status = "ok"
                except SparrowError:
                    est, mags, status = np.zeros(0), np.zeros(0), "failed"
                wall = (time.perf_counter() - t0) * 1e3
                if status == "ok":
                    rng = model.trial_rng(
                        cfg.seed ^ 0x5EED, (sweep_idx * len(cfg.methods) + mi) * cfg.trials + trial
                    )
                    m_est = match_estimates(scene.frequencies, est, mags, rng)
                    matched[name].append(m_est)
                    walls[name].append(wall)
                else:
                    failures[name] += 1
                report.records.append(
                    TrialRecord(
                        method=name, sweep_value=float(sweep_value), trial=trial,
                        estimates=np.asarray(est, dtype=float), wall_ms=wall, status=status,
                    )
                )
        crb_rmse = None
        if sigma2 > 0 and scene.n_sources < cfg.geometry.n_sensors:
            c = baselines.stochastic_crb(scene, sigma2, n, cfg.geometry)
            crb_rmse = float(np.sqrt(np.trace(c) / scene.n_sources))
        for name in cfg.methods:
            trials_ok = np.asarray(matched[name])
            if trials_ok.size == 0:
                row = AggregateRow(
                    method=name, sweep_value=float(sweep_value), bias=np.nan, std=np.nan,
                    rmse=np.nan, resolution=None, mean_ms=np.nan,
                    failures=failures[name], trials=0, crb_rmse=crb_rmse,
                )
            else:
                res = (
                    resolution_fraction(trials_ok, scene.frequencies)
                    if scene.n_sources == 2
                    else None
                )
                row = AggregateRow(
                    method=name,
                    sweep_value=float(sweep_value),
                    bias=bias(trials_ok, scene.frequencies),
                    std=std_wa(trials_ok),
                    rmse=rmse(trials_ok, scene.frequencies),
                    resolution=res,
                    mean_ms=float(np.mean(walls[name])),
                    failures=failures[name],
                    trials=trials_ok.shape[0],
                    crb_rmse=crb_rmse,
                )
            report.rows.append(row)
    return report

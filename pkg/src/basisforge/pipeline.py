"""The generate -> train -> extract -> solve / analyze stages.

Each stage reads and writes artifacts in ``config.out_dir`` so stages can be
recombined (a basis from one PDE driving the solve of another, several
freeze-time choices from one trained model, ...).
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import approximation as approx
from . import fourier, muscl
from .basis import (
    basis_eval,
    export_singular_values,
    fourier_basis,
    freeze_trunk,
    gram_deviation,
    legendre_project,
    load_basis,
    orthonormalize,
    save_basis,
    select_rank,
)
from .config import ExperimentConfig
from .fileio import read_container, write_container, write_csv
from .galerkin import (
    BOUNDARY_COUNT,
    assemble,
    averaged_error,
    evolve,
    initial_coefficients,
    relative_error,
)
from .network import (
    TrainConfig,
    TrainingSet,
    build_deeponet,
    evaluate_mse,
    load_model,
    save_model,
    train,
)
from .quadrature import TWO_PI, gauss_legendre_rule
from .random_fields import GrfSampler, sample_initial_condition, uniform_sensors
from .reference import evaluate_reference, save_trajectory, solve_reference

__all__ = [
    "MissingArtifact",
    "DegenerateBasis",
    "Paths",
    "make_initial_conditions",
    "initial_condition",
    "generate",
    "train_model",
    "extract",
    "solve",
    "analyze",
]

log = logging.getLogger(__name__)


class MissingArtifact(FileNotFoundError):
    """A stage's prerequisite file does not exist."""


class DegenerateBasis(RuntimeError):
    """Extraction retained no basis functions."""


@dataclass(frozen=True)
class Paths:
    root: Path

    @classmethod
    def of(cls, cfg: ExperimentConfig) -> "Paths":
        return cls(Path(cfg.out_dir))

    @property
    def train_set(self):
        return self.root / "data" / "train.bin"

    @property
    def test_set(self):
        return self.root / "data" / "test.bin"

    def trajectories(self, split):
        return self.root / "data" / f"trajectories_{split}.bin"

    @property
    def model(self):
        return self.root / "model.bin"

    @property
    def loss(self):
        return self.root / "loss.csv"

    @property
    def basis(self):
        return self.root / "basis.bin"

    @property
    def singular_values(self):
        return self.root / "singular_values.csv"


def _require(path):
    if not Path(path).exists():
        raise MissingArtifact(f"required file {path} not found; run the previous stage first")
    return path


def _stamp(cfg: ExperimentConfig) -> dict:
    stamp = {"config_hash": cfg.hash(), "pde": cfg.pde}
    stamp.update({f"seed_{k}": v for k, v in cfg.seeds.items()})
    return stamp


# -- initial conditions ------------------------------------------------------------


def make_initial_conditions(cfg: ExperimentConfig, count: int, seed: int) -> np.ndarray:
    sampler = GrfSampler(cfg.length_scale, uniform_sensors(cfg.n_sensors), seed)
    return sample_initial_condition(sampler, count)


def _resample(sensor_values, x):
    """Trigonometric interpolation of uniform sensor values to points ``x``."""
    return fourier.eval_modes(fourier.to_modes(sensor_values), x)


def initial_condition(cfg: ExperimentConfig, name: str):
    """Callable ``u0(x)`` for a named test initial condition."""
    if name == "sin":
        return np.sin
    if name == "in_distribution":
        values = make_initial_conditions(cfg, 1, cfg.seeds["solve_ic"])[0]
        return lambda x: _resample(values, x)
    raise ValueError(f"unknown test initial condition {name!r}")


# -- generate ----------------------------------------------------------------------


def _reference_for(cfg, u0_sensors, save_times, t_end):
    """Solve from sensor values; returns (trajectory, sample(row, x))."""
    if cfg.pde == "inviscid_burgers":
        u0 = _resample(u0_sensors, muscl.cell_centers(cfg.muscl_cells))
    else:
        u0 = u0_sensors
    traj = solve_reference(cfg.pde, u0, (0.0, t_end), nu=cfg.nu, save_times=save_times)
    return traj


def _generate_split(cfg, ics, rng):
    n = ics.shape[0]
    T = cfg.t_train
    coarse = np.linspace(0.0, T, int(round(T / cfg.trajectory_save_every)) + 1)
    sensors = uniform_sensors(cfg.n_sensors)
    trunk = np.empty((n, cfg.n_queries, 2))
    targets = np.empty((n, cfg.n_queries))
    stored = np.empty((n, coarse.size, cfg.n_sensors))
    for i in range(n):
        tq = rng.uniform(0.0, T, cfg.n_queries)
        xq = rng.uniform(0.0, TWO_PI, cfg.n_queries)
        times = np.unique(np.concatenate([coarse, tq]))
        traj = _reference_for(cfg, ics[i], times, T)
        rows = np.searchsorted(traj.times, tq)
        for q in range(cfg.n_queries):
            targets[i, q] = evaluate_reference(traj, rows[q], xq[q : q + 1])[0]
        trunk[i, :, 0] = tq
        trunk[i, :, 1] = xq
        keep = np.searchsorted(traj.times, coarse)
        stored[i] = evaluate_reference(traj, keep, sensors) if traj.metadata["scheme"] == "muscl" \
            else traj.states[keep]
    return TrainingSet(ics, trunk, targets), coarse, stored


def generate(cfg: ExperimentConfig) -> dict:
    """Sample ICs, solve the reference problem, and write training tuples.

    Query points are uniform on [0, T] x [0, 2*pi); each reference solve
    stops exactly at its query times, so targets carry no time-snapping error.
    """
    cfg = cfg.resolved()
    paths = Paths.of(cfg)
    (paths.root / "data").mkdir(parents=True, exist_ok=True)
    seeds = cfg.seeds
    meta = _stamp(cfg)
    meta.update(t_train=cfg.t_train, nu=cfg.nu, n_sensors=cfg.n_sensors)
    out = {}
    for split, count, seed in (
        ("train", cfg.n_train, seeds["train_ics"]),
        ("test", cfg.n_test, seeds["test_ics"]),
    ):
        t0 = time.perf_counter()
        ics = make_initial_conditions(cfg, count, seed)
        rng = np.random.default_rng(seeds["queries"] + (0 if split == "train" else 1000))
        data, times, stored = _generate_split(cfg, ics, rng)
        path = paths.train_set if split == "train" else paths.test_set
        write_container(
            path,
            {"branch": data.branch, "trunk": data.trunk, "targets": data.targets},
            dict(meta, split=split, query_law="uniform"),
        )
        write_container(
            paths.trajectories(split),
            {"times": times, "states": stored, "sensors": uniform_sensors(cfg.n_sensors)},
            dict(meta, split=split),
        )
        log.info("%s split: %d ICs in %.1fs", split, count, time.perf_counter() - t0)
        out[split] = data
    return out


def _load_set(path):
    arrays, meta = read_container(_require(path))
    return TrainingSet(arrays["branch"], arrays["trunk"], arrays["targets"]), meta


# -- train -------------------------------------------------------------------------


def train_model(cfg: ExperimentConfig, seed_offset: int = 0):
    """Train on the generated data; returns (model, loss history, test MSE)."""
    cfg = cfg.resolved()
    paths = Paths.of(cfg)
    train_set, data_meta = _load_set(paths.train_set)
    test_set, _ = _load_set(paths.test_set)
    seeds = cfg.seeds
    model = build_deeponet(
        n_sensors=cfg.n_sensors,
        width=cfg.width,
        branch_depth=cfg.branch_depth,
        trunk_depth=cfg.trunk_depth,
        seed=seeds["init"] + seed_offset,
        metadata=dict(
            _stamp(cfg),
            model_id=f"{cfg.pde}-{cfg.hash()}-{seed_offset}",
            t_final=float(data_meta.get("t_train", cfg.t_train)),
        ),
    )
    tc = TrainConfig(
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        seed=seeds["shuffle"] + seed_offset,
    )
    initial_mse = evaluate_mse(model, test_set)
    model, history = train(model, train_set, tc)
    test_mse = evaluate_mse(model, test_set)
    model.metadata.update(test_mse=test_mse, initial_test_mse=initial_mse)
    return model, history, test_mse


def write_training_outputs(cfg, model, history):
    cfg = cfg.resolved()
    paths = Paths.of(cfg)
    paths.root.mkdir(parents=True, exist_ok=True)
    save_model(model, paths.model)
    rows = ((e + 1, float(v)) for e, v in enumerate(history))
    write_csv(paths.loss, ["epoch", "train_loss"], rows, _stamp(cfg))


# -- extract -----------------------------------------------------------------------


def _trial_ics(cfg):
    draws = make_initial_conditions(cfg, cfg.stability_trials, cfg.seeds["stability_ics"])
    return [np.sin] + [lambda x, v=v: _resample(v, x) for v in draws]


def shock_time(u0, n=4096) -> float:
    """Breaking time ``-1 / min u0'`` of inviscid Burgers (inf if u0' >= 0)."""
    x = TWO_PI * np.arange(n) / n
    h = TWO_PI / n
    slope = np.min((u0(x + h) - u0(x - h)) / (2 * h))
    return float("inf") if slope >= 0 else -1.0 / slope


def _trial_horizon(cfg, u0) -> float:
    # a shock legitimately drains the resolved energy budget, so for inviscid
    # Burgers only a trip well before breaking counts as instability
    if cfg.pde == "inviscid_burgers":
        return min(cfg.stability_horizon, 0.5 * shock_time(u0))
    return cfg.stability_horizon


def is_stable(basis, cfg, grid=None) -> bool:
    """Trial evolutions stay within the energy guard over their horizons."""
    grid = grid or gauss_legendre_rule(cfg.m_solve, basis.domain)
    try:
        system = assemble(basis, cfg.pde, cfg.nu, grid)
    except ValueError:
        return False
    if system.metadata.get("tau_singular"):
        return False
    for u0 in _trial_ics(cfg):
        horizon = _trial_horizon(cfg, u0)
        if horizon < cfg.dt:
            continue
        a0 = initial_coefficients(u0(grid.nodes), basis, system, grid)
        run = evolve(
            system, a0, cfg.dt, horizon, cfg.guard,
            record_every=10**9, per_stage_tau=cfg.per_stage_tau,
        )
        if run.blowup:
            return False
    return True


def auto_threshold(full_basis, cfg):
    """Smallest decade threshold >= the floor whose truncation evolves stably."""
    grid = gauss_legendre_rule(cfg.m_solve, full_basis.domain)
    s = full_basis.singular_values
    b = BOUNDARY_COUNT[cfg.pde]
    tried = set()
    floor_exp = int(np.floor(np.log10(cfg.threshold_floor) + 1e-9))
    for e in range(floor_exp, 0):
        th = 10.0**e
        r = min(select_rank(s, th), full_basis.rank)
        if r <= b or r in tried:
            continue
        tried.add(r)
        if is_stable(full_basis.truncated(r), cfg, grid):
            return th, r
        log.info("threshold %.0e (r=%d) unstable", th, r)
    return None, 0


def extract(cfg: ExperimentConfig, model=None):
    """Freeze -> orthonormalize -> Legendre project -> select rank.

    Returns (basis, report dict).  ``basis_kind = fourier`` skips the model
    and builds the trigonometric oracle basis instead.
    """
    cfg = cfg.resolved()
    grid = gauss_legendre_rule(cfg.m_analysis)
    L = cfg.legendre_degree
    if cfg.basis_kind == "fourier":
        basis = fourier_basis(cfg.oracle_modes, grid, L)
        basis.metadata.update(_stamp(cfg))
        return basis, {"rank": basis.rank, "threshold": 0.0, "candidates": basis.rank}
    if model is None:
        model = load_model(_require(Paths.of(cfg).model))

    times = cfg.freeze_time_list
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        candidates = freeze_trunk(model, times, grid)
    for w in caught:
        log.warning("%s", w.message)
    cap = L + 1
    if cfg.threshold == "auto":
        full = orthonormalize(candidates, cfg.threshold_floor, max_rank=cap)
        if full.rank == 0:
            raise DegenerateBasis("no singular value above the floor")
        full = legendre_project(full, L)
        if cfg.retain:
            basis, threshold = full.truncated(min(cfg.retain, full.rank)), cfg.threshold_floor
        else:
            threshold, r = auto_threshold(full, cfg)
            if r == 0:
                raise DegenerateBasis("no threshold yields a stable truncation")
            basis = full.truncated(r)
        basis.threshold = float(threshold)
    else:
        threshold = float(cfg.threshold)
        max_rank = min(cap, cfg.retain) if cfg.retain else cap
        basis = orthonormalize(candidates, threshold, max_rank=max_rank)
        if basis.rank == 0:
            raise DegenerateBasis(f"no singular value above {threshold:g}")
        basis = legendre_project(basis, L)
    basis.metadata.update(_stamp(cfg))
    basis.metadata.update(
        source=model.metadata.get("model_id", ""), freeze_times=times, L=L,
        candidates=int(candidates.count),
    )
    s = basis.singular_values
    report = {
        "candidates": int(candidates.count),
        "rank": basis.rank,
        "threshold": basis.threshold,
        "condition": float(s[0] / s[basis.rank - 1]),
    }
    return basis, report


def write_basis_outputs(cfg, basis):
    cfg = cfg.resolved()
    paths = Paths.of(cfg)
    paths.root.mkdir(parents=True, exist_ok=True)
    save_basis(basis, paths.basis)
    export_singular_values(paths.singular_values, basis, _stamp(cfg))
    return gram_deviation(basis)


# -- solve -------------------------------------------------------------------------


@dataclass
class SolveResult:
    ic: str
    times: np.ndarray
    errors: np.ndarray
    mean_error: float
    blowup: bool
    blowup_time: float | None
    rank: int
    b: int
    threshold: float


def solve_one(cfg, basis, ic_name, grid=None, reference=True) -> SolveResult:
    cfg = cfg.resolved()
    grid = grid or gauss_legendre_rule(cfg.m_solve, basis.domain)
    u0 = initial_condition(cfg, ic_name)
    system = assemble(basis, cfg.pde, cfg.nu, grid)
    a0 = initial_coefficients(u0(grid.nodes), basis, system, grid)
    every = max(1, int(round(cfg.error_every / cfg.dt)))
    run = evolve(
        system, a0, cfg.dt, cfg.t_final, cfg.guard,
        record_every=every, per_stage_tau=cfg.per_stage_tau,
    )
    if cfg.pde == "inviscid_burgers":
        ref_u0 = u0(muscl.cell_centers(cfg.muscl_cells))
    else:
        ref_u0 = u0(uniform_sensors(cfg.n_sensors))
    traj = solve_reference(cfg.pde, ref_u0, (0.0, cfg.t_final), cfg.error_every, cfg.nu)
    if reference:
        out = Paths.of(cfg).root
        out.mkdir(parents=True, exist_ok=True)
        save_trajectory(out / f"reference_{ic_name}.bin", traj, _stamp(cfg))

    Phi = basis_eval(basis, grid.nodes)
    times, errors = [], []
    for t, a in zip(run.times, run.coefficients):
        row = traj.nearest(t)
        if abs(traj.times[row] - t) > 1e-9:
            continue
        ref = evaluate_reference(traj, row, grid.nodes)
        times.append(t)
        errors.append(relative_error(Phi @ a, ref))
    times = np.array(times)
    errors = np.array(errors)
    return SolveResult(
        ic_name, times, errors, averaged_error(errors, times), run.blowup, run.blowup_time,
        basis.rank, system.b, basis.threshold,
    )


def solve(cfg: ExperimentConfig, basis=None, cross_basis=None):
    """Evolve every configured test IC; writes error CSVs and a summary CSV."""
    cfg = cfg.resolved()
    paths = Paths.of(cfg)
    source = cross_basis or cfg.cross_basis
    if basis is None:
        basis = load_basis(_require(source or paths.basis))
    paths.root.mkdir(parents=True, exist_ok=True)
    stamp = _stamp(cfg)
    stamp["basis_source"] = basis.metadata.get("source", "")
    results = []
    for name in [s.strip() for s in cfg.test_ics.split(",") if s.strip()]:
        res = solve_one(cfg, basis, name)
        tag = f"{cfg.pde}_{name}"
        write_csv(
            paths.root / f"errors_{tag}.csv",
            ["t", "E2"],
            zip(map(float, res.times), map(float, res.errors)),
            stamp,
        )
        results.append(res)
    write_csv(
        paths.root / "summary.csv",
        ["pde", "ic", "r", "b", "threshold", "mean_E2", "blowup_time", "basis_source"],
        (
            (cfg.pde, r.ic, r.rank, r.b, float(r.threshold), float(r.mean_error),
             "none" if r.blowup_time is None else float(r.blowup_time),
             stamp["basis_source"] or "none")
            for r in results
        ),
        stamp,
    )
    return results


# -- analyze -----------------------------------------------------------------------


def analyze(cfg: ExperimentConfig, basis=None):
    """Bound decompositions, error profile and coefficient decay for f1, f2, f3."""
    cfg = cfg.resolved()
    paths = Paths.of(cfg)
    if basis is None:
        basis = load_basis(_require(cfg.cross_basis or paths.basis))
    paths.root.mkdir(parents=True, exist_ok=True)
    stamp = _stamp(cfg)
    r_leg = min(cfg.r_leg, basis.degree - 1)
    reports = {}
    for key, (label, f) in approx.TARGETS.items():
        rep = approx.ac3_bound(f, basis, r_leg, target=label)
        approx.write_bound_csv(paths.root / f"bound_{key}.csv", rep, stamp)
        approx.write_decay_csv(paths.root / f"decay_{key}.csv", rep.coefficients, stamp)
        reports[key] = rep
    profile = approx.legendre_error_profile(basis, basis.degree)
    approx.write_profile_csv(paths.root / "legendre_profile.csv", profile, stamp)
    write_csv(
        paths.root / "bounds_summary.csv",
        ["target", "projection_error", "tail", "damped_sum", "bound"],
        (
            (rep.target, rep.projection_error, rep.tail, rep.damped_sum, rep.bound)
            for rep in reports.values()
        ),
        stamp,
    )
    return reports, profile

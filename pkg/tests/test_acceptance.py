"""Acceptance criteria 1-10, each at its stated tolerance and runtime budget.

The desk-scale pipelines (criteria 4, 8, 9, 10) run once per session through
the ``forge`` command-line entry point.  Run with ``pytest -v`` and read the
"acceptance criteria" section of the terminal summary for the verdicts.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from basisforge import approximation as approx
from basisforge import fourier, muscl
from basisforge.basis import (
    basis_eval,
    candidates_from_values,
    covariance_route,
    freeze_trunk,
    gram_deviation,
    legendre_project,
    load_basis,
    orthonormalize,
    fourier_basis,
    time_samples,
)
from basisforge.cli import main
from basisforge.config import ExperimentConfig
from basisforge.fileio import read_csv
from basisforge.galerkin import assemble, evolve, initial_coefficients, relative_error
from basisforge.network import (
    TrainConfig,
    TrainingSet,
    build_deeponet,
    load_model,
    loss_and_gradients,
    train,
)
from basisforge.quadrature import TWO_PI, LegendreBasis, gauss_legendre_rule, legendre_vander, weighted_gram
from basisforge.reference import solve_reference

def note(record_property, text):
    record_property("note", text)


# -- desk pipelines ----------------------------------------------------------------


class Run:
    def __init__(self, out, seconds):
        self.out = out
        self.seconds = seconds

    def summary(self):
        header, rows, _ = read_csv(self.out / "summary.csv")
        return {r[1]: dict(zip(header, r)) for r in rows}


def _pipeline(out, pde, stages=("generate", "train", "extract", "solve")):
    t0 = time.perf_counter()
    for stage in stages:
        code = main([stage, "--pde", pde, "--preset", "desk", "--out", str(out)])
        assert code == 0, f"forge {stage} exited with {code}"
    return Run(out, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def advection_run(tmp_path_factory):
    return _pipeline(tmp_path_factory.mktemp("advection"), "advection")


@pytest.fixture(scope="session")
def inviscid_run(tmp_path_factory):
    return _pipeline(tmp_path_factory.mktemp("inviscid"), "inviscid_burgers")


@pytest.fixture(scope="session")
def viscous_run(tmp_path_factory):
    return _pipeline(tmp_path_factory.mktemp("viscous"), "viscous_burgers",
                     ("generate", "train", "extract"))


# -- 1 ---------------------------------------------------------------------------


@pytest.mark.criterion(1, "quadrature exactness and Legendre orthonormality")
def test_criterion_01_quadrature(record_property):
    t0 = time.perf_counter()
    worst = 0.0
    for M in (2, 8, 64):
        grid = gauss_legendre_rule(M)
        xi = (grid.nodes - np.pi) / np.pi
        for k in range(2 * M):
            # integral over [0, 2pi] of xi^k
            exact = TWO_PI / (k + 1) if k % 2 == 0 else 0.0
            err = abs(grid.integrate(xi**k) - exact) / max(1.0, abs(exact))
            worst = max(worst, err)
    grid = gauss_legendre_rule(1024)
    V = legendre_vander(grid.nodes, LegendreBasis(127))
    gram = float(np.max(np.abs(weighted_gram(V, V, grid) - np.eye(128))))
    elapsed = time.perf_counter() - t0
    note(record_property, f"max rel exactness error {worst:.1e}, Gram deviation {gram:.1e}")
    assert worst <= 1e-11
    assert gram <= 1e-12
    assert elapsed < 10


# -- 2 ---------------------------------------------------------------------------


def _synthetic_candidates(rng, M, p):
    grid = gauss_legendre_rule(M)
    x = grid.nodes
    freq = rng.uniform(0, 6, p)
    phase = rng.uniform(0, TWO_PI, p)
    decay = rng.uniform(-0.3, 0.3, p)
    values = np.cos(freq * x[:, None] + phase) * np.exp(decay * x[:, None])
    # mix to create correlated, partly redundant columns
    mix = np.eye(p) + 0.5 * rng.normal(size=(p, p)) * (rng.uniform(size=(p, p)) < 0.2)
    return candidates_from_values(values @ mix, grid)


@pytest.mark.criterion(2, "square-root SVD route equals covariance eigen-route")
def test_criterion_02_svd_route(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_eig = worst_hier = 0.0
    for _ in range(20):
        p = int(rng.integers(2, 65))
        M = int(rng.integers(max(p, 64), 513))
        cand = _synthetic_candidates(rng, M, p)
        basis = orthonormalize(cand)
        s2 = basis.singular_values**2
        D = weighted_gram(cand.values, cand.values, cand.grid)
        lam = np.sort(np.linalg.eigvalsh(D))[::-1]
        worst_eig = max(worst_eig, float(np.max(np.abs(s2 - lam)) / lam[0]))
        for s in range(0, basis.rank + 1, max(1, basis.rank // 5)):
            Q = basis.node_values[:, :s]
            resid = cand.values - Q @ weighted_gram(Q, cand.values, cand.grid)
            err = float(np.sum(cand.grid.weights[:, None] * resid**2))
            worst_hier = max(worst_hier, abs(err - float(np.sum(s2[s:]))))
    note(record_property, f"eigen mismatch {worst_eig:.1e} (rel. to sigma_1^2), "
                          f"hierarchy mismatch {worst_hier:.1e}")
    assert worst_eig <= 1e-10
    assert worst_hier <= 1e-9
    assert time.perf_counter() - t0 < 30


# -- 3 ---------------------------------------------------------------------------


@pytest.mark.criterion(3, "conditioning contrast of the two orthonormalization routes")
def test_criterion_03_conditioning(record_property):
    t0 = time.perf_counter()
    grid = gauss_legendre_rule(512)
    x = grid.nodes
    centres = np.linspace(0, TWO_PI, 20)
    cand = candidates_from_values(np.exp(-0.5 * (x[:, None] - centres) ** 2), grid)
    basis = orthonormalize(cand)
    s = basis.singular_values
    cond = s[0] / s[-1]
    # smooth target inside the candidate span
    f = cand.values.sum(axis=1)
    a_svd = np.abs(basis.node_values.T @ (grid.weights * f))
    with np.errstate(divide="ignore", invalid="ignore"):
        _, phi = covariance_route(cand)
        a_cov = np.abs(phi.T @ (grid.weights * f))
    # a negative eigenvalue leaves the covariance route with no usable direction
    a_cov = np.where(np.isfinite(a_cov), a_cov, np.inf)
    # tail: everything after the last coefficient the stable route sees as significant
    j0 = int(np.nonzero(a_svd > 1e-12)[0][-1]) + 1
    assert j0 < basis.rank
    svd_tail = a_svd[j0:]
    cov_floor = float(np.median(a_cov[j0:]))
    note(record_property, f"cond {cond:.1e}, tail from k={j0 + 1}: SVD max {svd_tail.max():.1e}, "
                          f"covariance median {cov_floor:.1e}")
    assert cond >= 1e8
    assert svd_tail.max() < 1e-12
    assert cov_floor > 1e-9
    assert time.perf_counter() - t0 < 30


# -- 4 ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def synthetic_basis():
    grid = gauss_legendre_rule(1024)
    x = grid.nodes
    cols = [np.exp(np.cos(x / 2 + 0.3 * k)) * np.sin(0.5 * k * x + 1) for k in range(24)]
    basis = orthonormalize(candidates_from_values(np.column_stack(cols), grid), 1e-12)
    return legendre_project(basis, 127)


@pytest.mark.criterion(4, "Legendre upper bound on the projection error")
def test_criterion_04_bound(record_property, synthetic_basis, advection_run):
    t0 = time.perf_counter()
    trained = load_basis(advection_run.out / "basis.bin")
    margins = []
    for label, basis in (("synthetic", synthetic_basis), ("trained", trained)):
        for key, (_, f) in approx.TARGETS.items():
            for r_leg in (5, 40, basis.degree - 1):
                rep = approx.ac3_bound(f, basis, r_leg, target=key)
                assert rep.projection_error <= rep.tail + rep.damped_sum + 1e-9
                margins.append(rep.bound - rep.projection_error)
    # the analyze stage asserts the same inequality and exits nonzero on violation
    assert main(["analyze", "--pde", "advection", "--out", str(advection_run.out)]) == 0
    note(record_property, f"smallest bound margin {min(margins):.1e}")
    assert time.perf_counter() - t0 < 60


# -- 5 ---------------------------------------------------------------------------


@pytest.mark.criterion(5, "reference solver oracles")
def test_criterion_05_reference(record_property):
    t0 = time.perf_counter()
    x = TWO_PI * np.arange(128) / 128
    u0 = np.exp(np.sin(x)) - 1

    adv = solve_reference("advection", u0, (0, 1), 1.0)
    e_adv = float(np.max(np.abs(adv.states[-1] - (np.exp(np.sin(x - 1)) - 1))))
    assert adv.metadata["rtol"] == 1e-10

    nu = 0.1
    ad = solve_reference("advection_diffusion", np.sin(x), (0, 1), 1.0, nu)
    e_ad = float(np.max(np.abs(ad.states[-1] - np.exp(-nu) * np.sin(x - 1))))

    rng = np.random.default_rng(5)
    M = 16
    k = fourier.wavenumbers(M)
    e_conv = 0.0
    for _ in range(10):
        a = rng.normal(size=M) + 1j * rng.normal(size=M)
        b = rng.normal(size=M) + 1j * rng.normal(size=M)
        a[M // 2] = b[M // 2] = 0
        direct = np.zeros(M, complex)
        for i in range(M):
            for j in range(M):
                s = k[i] + k[j]
                if -M // 2 < s < M // 2:
                    direct[int(s) % M] += a[i] * b[j]
        e_conv = max(e_conv, float(np.max(np.abs(fourier.dealias_product(a, b) - direct))))

    n = 1024
    xc = muscl.cell_centers(n)
    uL, uR, t_end = 1.0, 0.0, 1.5
    square = np.where((xc > 1.0) & (xc < 3.0), uL, uR)
    traj = solve_reference("inviscid_burgers", square, (0, t_end), 0.1)
    fronts = np.array([xc[np.argmin(np.diff(u))] for u in traj.states[5:]])
    speed = np.polyfit(traj.times[5:], fronts, 1)[0]
    speed_err = abs(speed - 0.5 * (uL + uR)) / (0.5 * (uL + uR))
    tv = np.array([muscl.total_variation(u) for u in traj.states])
    tv_rise = float(np.max(np.diff(tv)))

    note(record_property, f"advection {e_adv:.1e}, decay {e_ad:.1e}, convolution {e_conv:.1e}, "
                          f"shock speed error {100 * speed_err:.2f}%, max TV increase {tv_rise:.1e}")
    assert e_adv < 1e-8
    assert e_ad < 1e-8
    assert e_conv < 1e-12
    assert speed_err < 0.02
    assert tv_rise <= 1e-10
    assert time.perf_counter() - t0 < 120


# -- 6 ---------------------------------------------------------------------------


@pytest.mark.criterion(6, "network gradients, overfit and determinism")
def test_criterion_06_network(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    model = build_deeponet(n_sensors=16, width=4, seed=0)
    u0 = rng.normal(size=(3, 16))
    q = np.stack([rng.uniform(0, 1, (3, 7)), rng.uniform(0, TWO_PI, (3, 7))], axis=-1)
    y = rng.normal(size=(3, 7))
    _, grads = loss_and_gradients(model, u0, q, y)
    h = 1e-6
    worst = 0.0
    for P, G in zip(model.parameters(), grads):
        for idx in np.ndindex(P.shape):
            old = P[idx]
            P[idx] = old + h
            lp, _ = loss_and_gradients(model, u0, q, y)
            P[idx] = old - h
            lm, _ = loss_and_gradients(model, u0, q, y)
            P[idx] = old
            fd = (lp - lm) / (2 * h)
            worst = max(worst, abs(fd - G[idx]) / max(abs(fd), abs(G[idx]), 1e-8))
    assert worst < 1e-5

    one = TrainingSet(u0[:1], q[:1, :4], y[:1, :4])
    fitted, hist = train(build_deeponet(n_sensors=16, width=16, seed=1), one,
                         TrainConfig(epochs=3000, learning_rate=1e-3, batch_size=1))
    assert hist[-1] < 1e-6

    data = TrainingSet(u0, q, y)
    cfg = TrainConfig(epochs=50, learning_rate=1e-3, batch_size=2, seed=4)
    m1, h1 = train(build_deeponet(n_sensors=16, width=4, seed=2), data, cfg)
    m2, h2 = train(build_deeponet(n_sensors=16, width=4, seed=2), data, cfg)
    identical = h1.tobytes() == h2.tobytes() and all(
        a.tobytes() == b.tobytes() for a, b in zip(m1.parameters(), m2.parameters())
    )
    note(record_property, f"max gradient rel. error {worst:.1e}, overfit loss {hist[-1]:.1e}")
    assert identical
    assert time.perf_counter() - t0 < 120


# -- 7 ---------------------------------------------------------------------------


@pytest.mark.criterion(7, "trigonometric oracle basis in the Galerkin solver")
def test_criterion_07_oracle_galerkin(record_property):
    t0 = time.perf_counter()
    basis = fourier_basis(16, gauss_legendre_rule(1024))
    grid = gauss_legendre_rule(128)
    system = assemble(basis, "advection", grid=grid)
    assert basis.rank == 33 and system.b == 1
    u0 = lambda x: np.sin(x / 2) ** 2  # noqa: E731
    a0 = initial_coefficients(u0(grid.nodes), basis, system, grid)
    run = evolve(system, a0, 1e-3, 10.0, record_every=10)
    assert not run.blowup
    Phi = basis_eval(basis, grid.nodes)
    errors = [relative_error(Phi @ a, u0(grid.nodes - t))
              for t, a in zip(run.times, run.coefficients) if t <= 1.0 + 1e-12]
    drift = float(np.max(np.abs(run.energy - run.energy[0])) / run.energy[0])
    ends = basis_eval(basis, np.array([0.0, TWO_PI])) @ run.coefficients.T
    jump = float(np.max(np.abs(ends[0] - ends[1])))
    note(record_property, f"max E2 on [0,1] {max(errors):.1e}, energy drift {drift:.1e}, "
                          f"boundary mismatch {jump:.1e}")
    assert max(errors) < 1e-6
    assert drift < 1e-8
    assert jump < 1e-10
    assert time.perf_counter() - t0 < 120


# -- 8 ---------------------------------------------------------------------------


@pytest.mark.criterion(8, "desk-scale advection end to end")
def test_criterion_08_advection_end_to_end(record_property, advection_run):
    basis = load_basis(advection_run.out / "basis.bin")
    dev = gram_deviation(basis)
    summary = advection_run.summary()
    e_in = float(summary["in_distribution"]["mean_E2"])
    e_sin = float(summary["sin"]["mean_E2"])
    note(record_property, f"r={basis.rank}, threshold {basis.threshold:.0e}, Gram deviation "
                          f"{dev:.1e}, mean E2 in-dist {e_in:.2e}, sin {e_sin:.2e}, "
                          f"pipeline {advection_run.seconds:.0f}s")
    assert all(s["blowup_time"] == "none" for s in summary.values())
    assert dev < 1e-8
    assert e_in < 0.1 and e_sin < 0.1
    assert advection_run.seconds < 30 * 60


# -- 9 ---------------------------------------------------------------------------


@pytest.mark.criterion(9, "inviscid Burgers energy guard near the shock time")
def test_criterion_09_inviscid_guard(record_property, inviscid_run):
    summary = inviscid_run.summary()
    halt = summary["sin"]["blowup_time"]
    note(record_property, f"sin(x) halted at t={halt}, r={summary['sin']['r']}, "
                          f"pipeline {inviscid_run.seconds:.0f}s")
    assert halt != "none", "the energy guard never tripped"
    assert 0.5 < float(halt) < 1.5
    assert inviscid_run.seconds < 30 * 60


# -- 10 --------------------------------------------------------------------------


@pytest.mark.criterion(10, "time-sampled extraction and cross-basis solve")
def test_criterion_10_plumbing(record_property, advection_run, viscous_run, tmp_path):
    t0 = time.perf_counter()
    model = load_model(advection_run.out / "model.bin")
    dt = 0.05
    grid = gauss_legendre_rule(1024)
    cand = freeze_trunk(model, time_samples(1.0, dt), grid)
    p_expected = int(round(1 + 1 / dt)) * model.width
    assert cand.count == p_expected

    # the same through the command line, with the auto threshold rule
    ts_dir = tmp_path / "time_sampled"
    ts_dir.mkdir()
    (ts_dir / "model.bin").write_bytes((advection_run.out / "model.bin").read_bytes())
    assert main(["extract", "--pde", "advection", "--out", str(ts_dir),
                 "--time-sampled", str(dt)]) == 0
    ts_basis = load_basis(ts_dir / "basis.bin")
    assert ts_basis.metadata["candidates"] == p_expected
    ts_dev = gram_deviation(ts_basis)
    assert ts_dev < 1e-8

    cross = tmp_path / "cross"
    assert main(["solve", "--pde", "advection", "--out", str(cross),
                 "--cross-basis", str(viscous_run.out / "basis.bin")]) == 0
    cfg = ExperimentConfig(pde="advection").resolved()
    expected_rows = int(round(cfg.t_final / cfg.error_every)) + 1
    lengths = {}
    for ic in ("in_distribution", "sin"):
        header, rows, comments = read_csv(cross / f"errors_advection_{ic}.csv")
        assert header == ["t", "E2"]
        assert comments["basis_source"]
        lengths[ic] = len(rows)
    header, rows, _ = read_csv(cross / "summary.csv")
    summary = {r[1]: dict(zip(header, r)) for r in rows}
    elapsed = time.perf_counter() - t0 + viscous_run.seconds
    note(record_property, f"p={cand.count}, time-sampled r={ts_basis.rank} (Gram {ts_dev:.1e}); "
                          f"cross-basis mean E2 in-dist {summary['in_distribution']['mean_E2']:.2e}, "
                          f"sin {summary['sin']['mean_E2']:.2e}")
    assert all(s["blowup_time"] == "none" for s in summary.values())
    assert lengths == {"in_distribution": expected_rows, "sin": expected_rows}
    assert elapsed < 10 * 60

import numpy as np
import pytest

from sno.datagen import (
    ForcingSampler,
    TaskSpec,
    build_dataset,
    restrict_resolution,
    sample_forcing,
    solve_diffusion,
    solve_diffusion_reaction,
    solve_burgers,
    solve_duffing,
    solve_lorenz,
    solve_pendulum,
    task_grid,
)
from sno.dataset_io import load_dataset, save_dataset
from sno.errors import CFLViolation, ChecksumError, ConfigError, FormatError, GridIncompatible
from sno.polycore import Grid


ZERO = lambda t: 0.0


# -- forcing -------------------------------------------------------------------

def test_forcing_zero_scale():
    g = task_grid(64, 10.0)
    sig = sample_forcing(ForcingSampler(seed=1, band=5, scale=0.0), g)
    assert np.array_equal(sig.values, np.zeros(64))


def test_forcing_single_component_peaks_near_one():
    g = task_grid(512, 10.0)
    sig = sample_forcing(ForcingSampler(seed=3, band=1, scale=1.0), g, index=2)
    a1 = abs(sig.amplitudes[0])
    assert abs(np.max(np.abs(sig.values)) - a1) < a1 * 2e-3


def test_forcing_deterministic_per_seed_index():
    g = task_grid(64, 5.0)
    s = ForcingSampler(seed=9, band=4, scale=1.5)
    a = sample_forcing(s, g, index=7)
    b = sample_forcing(s, g, index=7)
    c = sample_forcing(s, g, index=8)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_forcing_near_zero_mean():
    g = task_grid(256, 10.0)
    for idx in range(5):
        sig = sample_forcing(ForcingSampler(seed=4, band=5, scale=1.0), g, index=idx)
        sd = np.std(sig.values)
        assert abs(np.mean(sig.values)) <= 3 * sd / np.sqrt(g.n) + 1e-12


def test_forcing_callable_matches_samples():
    g = task_grid(64, 10.0)
    sig = sample_forcing(ForcingSampler(seed=5, band=5, scale=1.0), g, index=1)
    assert np.allclose(sig(g.points), sig.values, rtol=0, atol=0)


# -- duffing -------------------------------------------------------------------

def test_duffing_fixed_point():
    g = task_grid(64, 10.0)
    assert np.array_equal(solve_duffing(ZERO, 0.0, g), np.zeros(64))


def test_duffing_linear_limit_matches_closed_form():
    # beta=0, c=0: x'' + x = sin(w t) has the closed form
    # x(t) = (sin(w t) - w sin(t)) / (1 - w^2) for zero ICs
    w = 2.0
    g = task_grid(256, 10.0)
    got = solve_duffing(lambda t: np.sin(w * t), 0.0, g, alpha=1.0, beta=0.0,
                        substeps=8)
    want = (np.sin(w * g.points) - w * np.sin(g.points)) / (1.0 - w * w)
    assert np.max(np.abs(got - want)) < 1e-6


def test_duffing_substep_halving_self_consistency():
    g = task_grid(64, 10.0)
    sig = sample_forcing(ForcingSampler(seed=2, band=3, scale=1.0), g)
    a = solve_duffing(sig, 0.5, g, substeps=8)
    b = solve_duffing(sig, 0.5, g, substeps=16)
    assert np.max(np.abs(a - b)) < 1e-8


def test_rk4_fourth_order_convergence():
    # error ratio under step halving sits in [12, 20] for smooth forcing
    g = task_grid(64, 10.0)
    sig = sample_forcing(ForcingSampler(seed=6, band=3, scale=1.0), g)
    ref = solve_duffing(sig, 0.5, g, substeps=64)
    e1 = np.linalg.norm(solve_duffing(sig, 0.5, g, substeps=1) - ref)
    e2 = np.linalg.norm(solve_duffing(sig, 0.5, g, substeps=2) - ref)
    assert 12.0 <= e1 / e2 <= 20.0


# -- pendulum ------------------------------------------------------------------

def test_pendulum_fixed_point():
    g = task_grid(64, 10.0)
    assert np.array_equal(solve_pendulum(ZERO, 0.0, g), np.zeros(64))


def test_pendulum_small_angle_linearization():
    # at amplitude ~1e-3 the pendulum matches the linear oscillator to O(theta^3)
    g = task_grid(128, 10.0)
    eps = 1e-3
    forcing = lambda t: eps * np.sin(2.0 * t)
    pend = solve_pendulum(forcing, 0.0, g, substeps=8)
    lin = solve_duffing(forcing, 0.0, g, alpha=1.0, beta=0.0, substeps=8)
    assert np.max(np.abs(pend - lin)) < 1e-8


def test_pendulum_energy_drift_small():
    # undamped unforced swing from rest at theta0: H = om^2/2 - cos(theta)
    g = task_grid(256, 10.0)
    th0 = 0.5
    from sno.datagen import rk4_solve
    traj = rk4_solve(lambda t, y: np.array([y[1], -np.sin(y[0])]),
                     np.array([th0, 0.0]), g, substeps=8)
    H = 0.5 * traj[:, 1] ** 2 - np.cos(traj[:, 0])
    assert np.max(np.abs(H - H[0])) < 1e-7


# -- lorenz --------------------------------------------------------------------

def test_lorenz_origin_equilibrium():
    g = task_grid(64, 4.0)
    traj = solve_lorenz(np.zeros(3), 0.0, g)
    assert np.array_equal(traj, np.zeros((64, 3)))


def test_lorenz_below_chaos_settles():
    # rho=5 is below the chaotic onset; long trajectories approach a fixed point
    g = task_grid(512, 30.0)
    traj = solve_lorenz(np.array([1.0, 1.0, 1.0]), 5.0, g)
    x, y, z = traj[-1]
    deriv = np.array([10.0 * (y - x), x * (5.0 - z) - y, x * y - (8.0 / 3.0) * z])
    assert np.linalg.norm(deriv) < 1e-3


def test_lorenz_substep_self_consistency():
    g = task_grid(128, 2.0)
    a = solve_lorenz(np.array([2.0, -1.0, 0.5]), 5.0, g, substeps=4)
    b = solve_lorenz(np.array([2.0, -1.0, 0.5]), 5.0, g, substeps=8)
    assert np.max(np.abs(a - b)) < 1e-6


# -- diffusion -----------------------------------------------------------------

def test_diffusion_single_mode_analytic():
    k = 0.02
    xg = task_grid(64, 1.0)
    tg = task_grid(64, 1.0)
    u0 = np.sin(2.0 * np.pi * xg.points)
    fld = solve_diffusion(u0, k, xg, tg)
    want = np.exp(-k * (2.0 * np.pi) ** 2 * tg.points)[None, :] * u0[:, None]
    assert np.max(np.abs(fld - want)) < 1e-4


def test_diffusion_constant_preserved():
    xg = task_grid(32, 1.0)
    tg = task_grid(32, 1.0)
    fld = solve_diffusion(np.full(32, 0.7), 0.1, xg, tg)
    assert np.allclose(fld, 0.7, rtol=0, atol=1e-14)


def test_diffusion_mean_conserved():
    rng = np.random.default_rng(8)
    xg = task_grid(64, 2.0)
    tg = task_grid(64, 1.0)
    u0 = rng.standard_normal(64)
    fld = solve_diffusion(u0, 0.05, xg, tg)
    means = fld.mean(axis=0)
    assert np.max(np.abs(means - u0.mean())) < 1e-12


# -- burgers -------------------------------------------------------------------

def test_burgers_zero_and_constant_solutions():
    xg = task_grid(64, 1.0)
    tg = task_grid(64, 1.0)
    assert np.array_equal(solve_burgers(np.zeros(64), 0.05, xg, tg), np.zeros((64, 64)))
    fld = solve_burgers(np.full(64, 0.3), 0.05, xg, tg)
    assert np.allclose(fld, 0.3, rtol=0, atol=1e-12)


def test_burgers_grid_refinement_consistency():
    nu = 0.05
    u0f = lambda x: np.sin(2 * np.pi * x) + 0.5 * np.cos(4 * np.pi * x)
    t128 = task_grid(128, 1.0)
    x128 = task_grid(128, 1.0)
    x256 = task_grid(256, 1.0)
    a = solve_burgers(u0f(x128.points), nu, x128, t128)
    b = solve_burgers(u0f(x256.points), nu, x256, t128)
    b_sub = b[::2, :]
    rel = np.linalg.norm(a - b_sub) / np.linalg.norm(b_sub)
    assert rel < 1e-2


def test_burgers_cfl_violation():
    xg = task_grid(64, 1.0)
    tg = task_grid(32, 1.0)
    with pytest.raises(CFLViolation):
        solve_burgers(10.0 * np.sin(2 * np.pi * xg.points), 0.05, xg, tg, substeps=1)


# -- diffusion-reaction ----------------------------------------------------------

def test_reaction_equilibria():
    xg = task_grid(32, 1.0)
    tg = task_grid(32, 1.0)
    assert np.allclose(solve_diffusion_reaction(np.zeros(32), 0.01, 1.0, xg, tg),
                       0.0, atol=1e-15)
    assert np.allclose(solve_diffusion_reaction(np.ones(32), 0.01, 1.0, xg, tg),
                       1.0, atol=1e-12)


def test_reaction_logistic_closed_form_when_k_zero():
    xg = task_grid(32, 1.0)
    tg = task_grid(64, 1.0)
    r = 1.3
    u0 = 0.5 + 0.3 * np.sin(2 * np.pi * xg.points)
    fld = solve_diffusion_reaction(u0, 0.0, r, xg, tg)
    e = np.exp(r * tg.points)[None, :]
    want = u0[:, None] * e / (1.0 + u0[:, None] * (e - 1.0))
    assert np.max(np.abs(fld - want)) < 1e-6


def test_reaction_step_halving_self_consistency():
    xg = task_grid(64, 1.0)
    u0 = 0.5 + 0.3 * np.sin(2 * np.pi * xg.points)
    a = solve_diffusion_reaction(u0, 0.01, 1.0, xg, task_grid(64, 1.0))
    b = solve_diffusion_reaction(u0, 0.01, 1.0, xg, task_grid(128, 1.0))
    assert np.max(np.abs(a[:, 32] - b[:, 64])) < 1e-6  # compare at t = 0.5


# -- dataset assembly -------------------------------------------------------------

def test_build_dataset_shapes_and_split():
    ds = build_dataset(TaskSpec(task="duffing", n_samples=10, resolution=32, seed=0))
    assert ds.inputs.shape == (10, 1, 32)
    assert ds.outputs.shape == (10, 1, 32)
    assert ds.n_train == 8 and ds.n_test == 2
    assert set(ds.train_idx) & set(ds.test_idx) == set()


def test_build_dataset_lorenz_channels():
    ds = build_dataset(TaskSpec(task="lorenz", n_samples=4, resolution=32, seed=1))
    assert ds.inputs.shape == (4, 4, 32)
    assert ds.outputs.shape == (4, 1, 32)
    # constant channels broadcast along time
    assert np.all(ds.inputs[:, :, :1] == ds.inputs)


def test_build_dataset_pde_layout():
    ds = build_dataset(TaskSpec(task="diffusion", n_samples=3, resolution=32,
                                n_time=16, seed=2))
    # transform axis is space; output channels are time slices
    assert ds.inputs.shape == (3, 1, 32)
    assert ds.outputs.shape == (3, 16, 32)
    assert ds.aux_grid is not None and ds.aux_grid.n == 16
    # the t=0 output channel equals the initial field
    assert np.allclose(ds.outputs[:, 0, :], ds.inputs[:, 0, :], atol=1e-12)


def test_build_dataset_deterministic_bytes(tmp_path):
    spec = TaskSpec(task="pendulum", n_samples=6, resolution=32, seed=3)
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_dataset(p1, build_dataset(spec))
    save_dataset(p2, build_dataset(spec))
    assert p1.read_bytes() == p2.read_bytes()


def test_build_dataset_threads_match_serial():
    spec = TaskSpec(task="diffusion", n_samples=5, resolution=32, n_time=16, seed=4)
    a = build_dataset(spec, threads=1)
    b = build_dataset(spec, threads=3)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.outputs, b.outputs)


def test_dataset_roundtrip(tmp_path):
    spec = TaskSpec(task="burgers", n_samples=4, resolution=32, n_time=16,
                    seed=5, forcing_scale=0.5)
    ds = build_dataset(spec)
    p = tmp_path / "d.bin"
    save_dataset(p, ds)
    back = load_dataset(p)
    assert back.spec == spec
    assert np.array_equal(back.inputs, ds.inputs)
    assert np.array_equal(back.outputs, ds.outputs)
    assert np.array_equal(back.grid.points, ds.grid.points)
    assert np.array_equal(back.aux_grid.points, ds.aux_grid.points)
    assert np.array_equal(back.train_idx, ds.train_idx)


def test_dataset_file_error_contracts(tmp_path):
    spec = TaskSpec(task="duffing", n_samples=3, resolution=32, seed=6)
    p = tmp_path / "d.bin"
    save_dataset(p, build_dataset(spec))
    blob = p.read_bytes()
    bad = tmp_path / "bad.bin"
    bad.write_bytes(blob[:-17])
    with pytest.raises(ChecksumError):
        load_dataset(bad)
    bad.write_bytes(b"NOTMAGIC" + blob[8:])
    with pytest.raises(FormatError):
        load_dataset(bad)


def test_restrict_resolution_nests():
    ds = build_dataset(TaskSpec(task="diffusion", n_samples=3, resolution=128,
                                n_time=16, seed=7))
    sub = restrict_resolution(ds, 32)
    assert sub.inputs.shape[-1] == 32
    assert np.array_equal(sub.grid.points, ds.grid.points[::4])
    assert np.array_equal(sub.outputs, ds.outputs[:, :, ::4])
    with pytest.raises(GridIncompatible):
        restrict_resolution(ds, 48)


def test_spec_validation():
    with pytest.raises(ConfigError):
        TaskSpec(task="nope", n_samples=4, resolution=32)
    with pytest.raises(ConfigError):
        TaskSpec(task="duffing", n_samples=4, resolution=16)


def test_diffusion_dataset_analytic_spot_check():
    # sinusoidal initial fields decay mode-by-mode; check the lowest mode
    # of a generated sample against the analytic factor
    spec = TaskSpec(task="diffusion", n_samples=2, resolution=64, n_time=64, seed=8)
    ds = build_dataset(spec)
    k = spec.physical()["k"]
    u0 = ds.inputs[0, 0, :]
    fld = ds.outputs[0]          # [n_t, n_x]
    m1_0 = np.fft.rfft(u0)[1]
    m1_T = np.fft.rfft(fld[-1, :])[1]
    t_last = ds.aux_grid.points[-1]
    want = m1_0 * np.exp(-k * (2 * np.pi / spec.domain_length) ** 2 * t_last)
    assert abs(m1_T - want) / abs(m1_0) < 1e-4

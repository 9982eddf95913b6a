import math

import numpy as np
import pytest

from exitgame import Grid, SolverConfig, load, solve
from exitgame.config import build
from exitgame.grid import NodeClass, ValueField
from exitgame.solver import (ConvergenceError, SolverError, apply_update, coarsen, extract_phi, residual,
                             sweep_orders)


def test_forced_lifeline_values(forced):
    cfg, vf, rep, _ = forced
    inner = vf.classes == NodeClass.INTERIOR
    assert np.all(np.abs(vf.u[inner] - 1.0) <= 1e-6)
    assert vf.u[0] == 0.0
    phi = extract_phi(vf)
    assert phi[0] == 0.0 and np.all(np.isinf(phi[inner]))


def test_reachable_matches_minimum_time(reachable):
    cfg, vf, rep, _ = reachable
    x = cfg.grid.coords()[:, 0]
    inner = vf.classes == NodeClass.INTERIOR
    assert np.max(np.abs(vf.u[inner] - (1 - np.exp(-x[inner])))) <= 0.01
    assert residual(vf, cfg.spec) <= 1e-9


def test_contraction_ratios(reachable, forced):
    for cfg, vf, rep, _ in (reachable, forced):
        bound = math.exp(-cfg.spec.b * rep.time_step)
        assert all(r <= bound + 1e-9 for r in rep.ratios)


def _small_pursuit(nodes):
    raw = {**load("pursuit_2d").raw, "grid": {"nodes": [nodes, nodes]}, "solver": {}}
    return build(raw)


def test_gauss_seidel_and_jacobi_share_the_fixed_point():
    cfg = _small_pursuit(21)
    gs, rg = solve(cfg.spec, cfg.grid, SolverConfig(residual_tol=1e-11, cascade=False))
    ja, rj = solve(cfg.spec, cfg.grid, SolverConfig(residual_tol=1e-11, mode="jacobi"))
    assert rj.iterations > rg.iterations
    np.testing.assert_allclose(gs.u, ja.u, atol=1e-8)
    gam = math.exp(-cfg.spec.b * rj.time_step)
    assert all(r <= gam + 1e-9 for r in rj.ratios[1:])


def test_cascade_does_not_change_the_fixed_point():
    cfg = _small_pursuit(41)
    a, ra = solve(cfg.spec, cfg.grid, SolverConfig(residual_tol=1e-11, cascade=True))
    b, rb = solve(cfg.spec, cfg.grid, SolverConfig(residual_tol=1e-11, cascade=False))
    np.testing.assert_allclose(a.u, b.u, atol=1e-8)
    assert coarsen(cfg.grid) == Grid(cfg.grid.lo, cfg.grid.hi, (21, 21))
    assert coarsen(Grid((0.0, 0.0), (1.0, 1.0), (40, 40))) is None


def test_update_is_monotone():
    cfg = _small_pursuit(21)
    vf, _ = solve(cfg.spec, cfg.grid, SolverConfig(residual_tol=1e-10))
    base = apply_update(vf, cfg.spec)
    rng = np.random.default_rng(0)
    inner = np.flatnonzero(vf.classes == NodeClass.INTERIOR)
    for j in rng.choice(inner, 10, replace=False):
        up = vf.u.copy()
        up[j] = min(1.0, up[j] + 0.1)
        bumped = apply_update(ValueField(vf.grid, up, vf.classes, vf.meta), cfg.spec)
        assert np.all(bumped[inner] >= base[inner] - 1e-15)


def test_sweep_orders_cover_every_direction():
    g = Grid((0.0, 0.0), (1.0, 1.0), (3, 3))
    orders = sweep_orders(g, np.arange(9))
    assert len(orders) == 4
    assert [o[0] for o in orders] == [0, 6, 2, 8]
    for o in orders:
        assert sorted(o) == list(range(9))


def test_convergence_error_carries_residual():
    cfg = load("reachable_1d")
    with pytest.raises(ConvergenceError) as err:
        solve(cfg.spec, cfg.grid, SolverConfig(max_iters=1))
    assert err.value.residual > 0


def test_non_finite_dynamics_rejected():
    raw = dict(load("reachable_1d").raw)
    raw["dynamics"] = {"model": "control-affine", "P": [[1.0]], "Q": [[0.0]],
                       "params": {"A": [[math.inf]], "B": [[1.0]], "C": [[0.0]]}}
    cfg = build(raw)
    with pytest.raises(SolverError, match="non-finite dynamics at node"):
        solve(cfg.spec, cfg.grid)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(mode="policy")
    with pytest.raises(ValueError):
        SolverConfig(time_step=0.0)

import numpy as np
import pytest

from drbem_cavity.geometry import LidSegment, SingleLid, SplitLid
from drbem_cavity.solver import (
    FieldState,
    FlowParams,
    PsiSolver,
    SolverConfig,
    SolverError,
    advance_vorticity,
    build_nonlinear_matrix,
    derive_alpha_beta,
    run,
    solve_psi_and_boundary_omega,
    stable_dt,
    stationary_residual,
    update_lid_flux,
    write_residual_log,
)


def mirror_permutation(mesh):
    pts = mesh.points
    target = pts.copy()
    target[:, 0] = 1.0 - target[:, 0]
    perm = np.array([np.argmin(np.linalg.norm(pts - t, axis=1)) for t in target])
    assert np.allclose(pts[perm], target)
    return perm


def porous(re=100.0, **kw):
    return FlowParams(reynolds=re, darcy=0.25, porosity=0.5, **kw)


def test_derive_alpha_beta():
    assert derive_alpha_beta(100, 0.25, 0.2, 1.0) == pytest.approx((0.8, 500.0))
    assert derive_alpha_beta(100, None, 1.0, 1.0, navier_stokes=True) == (0.0, 100.0)
    assert derive_alpha_beta(0, 0.25, 0.5, 1.0)[1] == 0.0


@pytest.mark.parametrize(
    "args",
    [(-1, 0.25, 0.5, 1.0), (100, 0.0, 0.5, 1.0), (100, None, 0.5, 1.0), (100, 0.25, 0.0, 1.0), (100, 0.25, 1.5, 1.0), (100, 0.25, 0.5, 0.0)],
)
def test_derive_alpha_beta_rejects(args):
    with pytest.raises(ValueError):
        derive_alpha_beta(*args)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(relax_omega=0.0)
    with pytest.raises(ValueError):
        SolverConfig(relax_omega_q=1.5)
    with pytest.raises(ValueError):
        SolverConfig(slip_derivative="bogus")
    assert stable_dt(39) == pytest.approx(0.9 / 1600)


def test_lid_flux_single(tiny):
    mesh, s = tiny
    state = FieldState.rest(mesh.n_boundary, mesh.n_total)
    q = update_lid_flux(s, mesh, FlowParams(reynolds=1, navier_stokes=True), state)
    lid = mesh.top_nodes()
    assert np.all(q[lid] == 1.0)
    assert np.count_nonzero(q) == len(lid)
    assert q[mesh.corner_indices[2]] == 0.0 and q[mesh.corner_indices[3]] == 0.0
    # zero field: the slip term vanishes
    q2 = update_lid_flux(s, mesh, FlowParams(reynolds=1, navier_stokes=True, lid=SingleLid(LidSegment(1, 0.1))), state)
    assert np.array_equal(q, q2)


def test_lid_flux_leaky(tiny):
    mesh, s = tiny
    state = FieldState.rest(mesh.n_boundary, mesh.n_total)
    q = update_lid_flux(s, mesh, FlowParams(reynolds=1, navier_stokes=True, leaky_corners=True), state)
    assert q[mesh.corner_indices[2]] == 1.0 and q[mesh.corner_indices[3]] == 1.0


def test_lid_flux_slip_term(tiny):
    mesh, s = tiny
    state = FieldState.rest(mesh.n_boundary, mesh.n_total)
    state.psi = mesh.points[:, 1] ** 2
    params = FlowParams(reynolds=1, navier_stokes=True, lid=SingleLid(LidSegment(1, 0.1)))
    q = update_lid_flux(s, mesh, params, state)
    lid = mesh.top_nodes()
    expected = 1.0 + 0.1 * (s.Dy @ (s.Dy @ state.psi))[lid]
    assert np.allclose(q[lid], expected, rtol=0, atol=1e-15)
    state.omega = np.full(mesh.n_total, -2.0)
    qv = update_lid_flux(s, mesh, params, state, slip_derivative="vorticity")
    assert np.allclose(qv[lid], 1.2)


def test_lid_flux_split_antisymmetric(tiny):
    mesh, s = tiny
    perm = mirror_permutation(mesh)
    n = mesh.n_boundary
    state = FieldState.rest(n, mesh.n_total)
    q = update_lid_flux(s, mesh, porous(lid=SplitLid()), state)
    assert np.max(np.abs(q + q[perm[:n]])) == 0.0
    assert q[mesh.top_nodes()].tolist().count(0.0) == 1  # the split node carries the mean


def test_zero_data_psi_step(tiny):
    mesh, s = tiny
    state = FieldState.rest(mesh.n_boundary, mesh.n_total)
    psi_int, omega_b = solve_psi_and_boundary_omega(s, state)
    assert np.all(psi_int == 0) and np.all(omega_b == 0)


def test_psi_step_mirror_equivariance(tiny):
    mesh, s = tiny
    n = mesh.n_boundary
    perm = mirror_permutation(mesh)
    rng = np.random.default_rng(3)
    solver = PsiSolver(s)
    q = rng.normal(size=n)
    w = rng.normal(size=mesh.n_total)
    psi1, ob1 = solver.solve(q, w[n:])
    # mirror: the data on node perm[i] moves to node i; normals flip in X only
    psi2, ob2 = solver.solve(q[perm[:n]], w[perm][n:])
    # relative to the field scale: random data gives |omega| of order 50
    assert np.max(np.abs(psi2 - psi1[perm[n:] - n])) < 1e-10 * np.max(np.abs(psi1))
    assert np.max(np.abs(ob2 - ob1[perm[:n]])) < 1e-10 * np.max(np.abs(ob1))


def test_harmonic_psi_recovered(small):
    mesh, s = small
    n = mesh.n_boundary
    pts = mesh.points
    # psi* = x y - x y restricted to vanish on the walls is not harmonic, so use
    # the harmonic field x^2 - y^2 with its true boundary values moved to the RHS
    u = pts[:, 0] ** 2 - pts[:, 1] ** 2
    gx, gy = 2 * pts[:n, 0], -2 * pts[:n, 1]
    q_next = gx * mesh.next_normals[:, 0] + gy * mesh.next_normals[:, 1]
    q_prev = gx * mesh.prev_normals[:, 0] + gy * mesh.prev_normals[:, 1]
    rhs = s.G_prev @ q_prev + s.G_next @ q_next - s.H[:, :n] @ u[:n]
    sol = np.linalg.lstsq(s.H[:, n:], rhs, rcond=None)[0]
    assert np.max(np.abs(sol - u[n:])) < 1e-3


def test_nonlinear_matrix(tiny):
    mesh, s = tiny
    psi = np.random.default_rng(0).normal(size=mesh.n_total)
    assert np.all(build_nonlinear_matrix(s, np.zeros(mesh.n_total), 100.0) == 0)
    assert np.all(build_nonlinear_matrix(s, psi, 0.0) == 0)
    nl = build_nonlinear_matrix(s, psi, 2.5)
    ref = 2.5 * (np.diag(s.Dy @ psi) @ s.Dx - np.diag(s.Dx @ psi) @ s.Dy)
    assert np.allclose(nl, ref, rtol=0, atol=1e-12 * np.abs(ref).max())


@pytest.mark.xfail(strict=True, reason="f = r interpolation does not differentiate X exactly, see assembly tests")
def test_stated_nonlinear_linear_field(tiny):
    mesh, s = tiny
    x = mesh.points[:, 0]
    nl = build_nonlinear_matrix(s, x, 1.0)
    assert np.max(np.abs(nl + s.Dy)) < 1e-5


def test_zero_lid_converges_immediately(tiny):
    mesh, s = tiny
    params = porous(lid=SingleLid(LidSegment(0.0, 0.0)))
    state, summary = run(mesh, s, params, SolverConfig())
    assert summary.converged and summary.iterations <= 2
    assert np.all(state.psi == 0) and np.all(state.omega == 0)


def test_stokes_limit_value(tiny):
    mesh, s = tiny
    state, summary = run(mesh, s, FlowParams(reynolds=0.0, navier_stokes=True), SolverConfig(tol=1e-10))
    assert summary.converged
    assert state.psi.min() == pytest.approx(-0.10078525, abs=1e-8)


def test_beta_zero_fixed_point_independent_of_relaxation(small):
    mesh, s = small
    params = FlowParams(reynolds=0.0, darcy=0.25, porosity=0.5)
    dt = stable_dt(15)
    settings = [(dt, 1.0, 1.0), (0.5 * dt, 0.8, 0.8), (0.5 * dt, 0.6, 0.9), (0.25 * dt, 0.5, 0.7)]
    fields = []
    for step, g, gq in settings:
        state, summary = run(mesh, s, params, SolverConfig(dt=step, relax_omega=g, relax_omega_q=gq, tol=1e-12, max_iters=20000))
        assert summary.converged
        fields.append(state.psi)
    for psi in fields[1:]:
        assert np.max(np.abs(psi - fields[0])) < 1e-8


def test_split_lid_mirror_equivariance(small):
    mesh, s = small
    perm = mirror_permutation(mesh)
    state, summary = run(mesh, s, porous(lid=SplitLid()), SolverConfig(tol=1e-10, max_iters=5000))
    assert summary.converged
    # reflecting the segments and their velocities maps the lid onto itself,
    # so the field must equal its own mirrored negative
    assert np.max(np.abs(state.psi + state.psi[perm])) < 1e-6


def test_single_lid_mirror_equivariance(tiny):
    mesh, s = tiny
    perm = mirror_permutation(mesh)
    right, _ = run(mesh, s, porous(), SolverConfig(tol=1e-10))
    left, _ = run(mesh, s, porous(lid=SingleLid(LidSegment(-1.0, 0.0))), SolverConfig(tol=1e-10))
    assert np.max(np.abs(left.psi + right.psi[perm])) < 1e-6


def test_converged_state_is_stationary(small):
    mesh, s = small
    params = porous()
    state, summary = run(mesh, s, params, SolverConfig(tol=1e-8))
    assert summary.converged
    assert stationary_residual(s, state, params) < 1e-4


def test_fixed_point_of_vorticity_step(small):
    mesh, s = small
    params = porous()
    cfg = SolverConfig(dt=stable_dt(15), tol=1e-10)
    state, _ = run(mesh, s, params, cfg)
    n = mesh.n_boundary
    nl = build_nonlinear_matrix(s, state.psi, params.beta)
    w_int, w_q = advance_vorticity(s, state, state.omega[:n], params, cfg, nl)
    scale = np.max(np.abs(state.omega))
    assert np.max(np.abs(w_int - state.omega[n:])) < 1e-6 * scale


def test_max_iters_flags_non_convergence(tiny):
    mesh, s = tiny
    state, summary = run(mesh, s, porous(), SolverConfig(max_iters=1))
    assert not summary.converged and summary.iterations == 1
    assert np.all(np.isfinite(state.psi))


def test_divergence_guard(tiny):
    mesh, s = tiny
    with pytest.raises(SolverError, match="diverged"):
        run(mesh, s, FlowParams(reynolds=100, navier_stokes=True), SolverConfig(dt=0.5, relax_omega=0.1, relax_omega_q=0.1))


def test_mismatched_system(tiny, small):
    with pytest.raises(ValueError):
        run(tiny[0], small[1], porous())


def test_warm_start(tiny):
    mesh, s = tiny
    state, first = run(mesh, s, porous(), SolverConfig(tol=1e-8))
    _, again = run(mesh, s, porous(), SolverConfig(tol=1e-8), initial=state)
    assert again.iterations < first.iterations


def test_residual_log(tiny, tmp_path):
    mesh, s = tiny
    path = tmp_path / "res.csv"
    _, summary = run(mesh, s, porous(), SolverConfig(), residual_log=path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,psi_residual,omega_residual"
    assert len(lines) == summary.iterations + 1
    assert write_residual_log([(1, 0.5, 0.25)], tmp_path / "x.csv").read_text().splitlines()[1] == "1,0.5,0.25"

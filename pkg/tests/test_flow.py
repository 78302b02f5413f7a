import io
import math

import numpy as np
import pytest

from subriem.errors import DimensionMismatchError, IntegrationError
from subriem.flow import (Ray, check_constant_speed, d_exp, exp_map,
                          integrate_extremal, integrate_extremal_batch)
from subriem.heisenberg import HeisCovector, heis_state
from subriem.structure import PolyVectorField, Structure

TWO_PI = 2 * math.pi


def test_straight_line_geodesic(heis):
    traj = integrate_extremal(heis, np.zeros(3), np.array([1.0, 0, 0]), 1.0)
    assert np.allclose(traj.states[-1][:3], [1, 0, 0], atol=1e-10)
    h_vals = traj.hamiltonian_values()
    assert np.allclose(h_vals, 0.5, atol=1e-11)


def test_zero_covector_is_stationary(heis):
    traj = integrate_extremal(heis, np.array([0.2, -0.4, 1.0]), np.zeros(3), 1.0)
    assert np.allclose(traj.states, traj.states[0], atol=1e-14)


def test_zero_energy_covector_is_stationary(heis):
    traj = integrate_extremal(heis, np.zeros(3), np.array([0.0, 0, 1.0]), 1.0)
    assert np.allclose(traj.states, traj.states[0], atol=1e-14)
    drift, gap = check_constant_speed(traj)
    assert gap == 0.0


def test_conjugate_covector_endpoint(heis):
    traj = integrate_extremal(heis, np.zeros(3), np.array([1.0, 0, TWO_PI]), 1.0)
    assert np.allclose(traj.states[-1][:3], [0, 0, 1 / (4 * math.pi)], atol=1e-8)


def test_exp_map_examples(heis):
    p = np.array([0.4, 0.1, -0.2])
    assert np.array_equal(exp_map(heis, p, np.zeros(3)), p)
    img1 = exp_map(heis, np.zeros(3), np.array([1.0, 0, TWO_PI]))
    img2 = exp_map(heis, np.zeros(3), np.array([0.0, 1.0, TWO_PI]))
    target = np.array([0, 0, 1 / (4 * math.pi)])
    assert np.allclose(img1, target, atol=1e-8)
    assert np.allclose(img2, target, atol=1e-8)


def test_d_exp_euclidean_is_identity(eucl3):
    mat = d_exp(eucl3, np.zeros(3), np.array([0.7, -0.3, 1.1]))
    assert np.allclose(mat, np.eye(3), atol=1e-10)


def test_d_exp_singular_at_conjugate_covector(heis):
    mat = d_exp(heis, np.zeros(3), np.array([1.0, 0, TWO_PI]))
    _, svals, vt = np.linalg.svd(mat)
    assert svals[-1] < 1e-6
    kernel = vt[-1]
    assert min(np.linalg.norm(kernel - [0, 1, 0]),
               np.linalg.norm(kernel + [0, 1, 0])) < 1e-6


def test_d_exp_regular_away_from_conjugate(heis):
    mat = d_exp(heis, np.zeros(3), np.array([1.0, 0, math.pi]))
    svals = np.linalg.svd(mat, compute_uv=False)
    assert svals[-1] / svals[0] > 1e-3


def test_ray_homogeneity(heis):
    lam = np.array([0.8, -0.5, 4.0])
    for t_val in (0.3, 0.7, 1.0):
        a = integrate_extremal(heis, np.zeros(3), lam, t_val,
                               samples=[t_val]).states[-1][:3]
        b = exp_map(heis, np.zeros(3), t_val * lam)
        assert np.allclose(a, b, atol=1e-8)


def test_batch_invariants_energy_symplecticity_velocity(heis):
    rng = np.random.default_rng(11)
    covs = rng.normal(size=(20, 3))
    covs /= np.linalg.norm(covs, axis=1)[:, None]
    covs *= rng.uniform(0.5, 3.0, 20)[:, None]
    trajs = integrate_extremal_batch(heis, np.zeros(3), covs, 1.0, 1e-10, samples=33)
    for cov, traj in zip(covs, trajs):
        assert traj.energy_drift() <= 1e-9
        assert traj.symplectic_defect() <= 1e-7
        h0 = heis.hamiltonian_raw(np.zeros(3), cov)
        floor = math.sqrt(2 * h0) - 1e-6
        for t_val, phi in zip(traj.ts[1:], traj.phis[1:]):
            assert np.linalg.norm(phi[:3, 3:] @ cov / t_val) >= floor


def test_oracle_agreement_small_sample(heis):
    rng = np.random.default_rng(12)
    covs = rng.normal(size=(10, 3))
    covs /= np.linalg.norm(covs, axis=1)[:, None]
    covs *= rng.uniform(0.5, 10.0, 10)[:, None]
    covs[0, 2] = 1e-5  # exercise the small-alpha branch
    trajs = integrate_extremal_batch(heis, np.zeros(3), covs, 1.0, 1e-10, samples=17)
    for cov, traj in zip(covs, trajs):
        hc = HeisCovector((0, 0, 0), tuple(cov))
        for t_val, st in zip(traj.ts, traj.states):
            assert np.max(np.abs(st - heis_state(hc, t_val))) <= 1e-8


def test_phi_initial_identity(traj_2pi):
    assert np.array_equal(traj_2pi.phis[0], np.eye(6))


def test_at_off_grid_matches_closed_form(heis, traj_2pi):
    hc = HeisCovector((0, 0, 0), (1.0, 0.0, TWO_PI))
    state, phi = traj_2pi.at(0.377)
    assert np.max(np.abs(state - heis_state(hc, 0.377))) < 1e-9
    with pytest.raises(ValueError):
        traj_2pi.at(1.5)
    with pytest.raises(ValueError):
        traj_2pi.at(-0.1)


def test_check_constant_speed_diagnostics(heis):
    traj = integrate_extremal(heis, np.zeros(3), np.array([1.0, 0, TWO_PI]), 1.0)
    drift, gap = check_constant_speed(traj)
    assert drift <= 1e-9
    assert gap <= 1e-9


def test_euclidean_speed_is_covector_norm(eucl3):
    lam = np.array([0.6, -1.1, 2.0])
    traj = integrate_extremal(eucl3, np.zeros(3), lam, 1.0, samples=9)
    drift, gap = check_constant_speed(traj)
    assert drift <= 1e-12
    assert 2 * traj.hamiltonian_values()[0] == pytest.approx(lam @ lam, rel=1e-15)


def test_csv_export_shape_and_format(heis):
    traj = integrate_extremal(heis, np.zeros(3), np.array([1.0, 0.5, 2.0]), 1.0,
                              samples=5)
    buf = io.StringIO()
    traj.write_csv(buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "t,q1,q2,q3,p1,p2,p3,H"
    assert len(lines) == 6
    buf = io.StringIO()
    traj.write_csv(buf, with_phi=True)
    header = buf.getvalue().split("\n")[0].split(",")
    assert len(header) == 8 + 36
    assert header[8] == "phi_1_1"


def test_integrator_input_validation(heis):
    with pytest.raises(ValueError):
        integrate_extremal(heis, np.zeros(3), np.ones(3), -1.0)
    with pytest.raises(ValueError):
        integrate_extremal(heis, np.zeros(3), np.ones(3), 1.0, tol=-1e-9)
    with pytest.raises(DimensionMismatchError):
        integrate_extremal(heis, np.zeros(2), np.ones(3), 1.0)


def test_general_degree_two_structure_flow_invariants():
    # degree-2 fields push the flow through the full polynomial-Hessian path
    f1 = PolyVectorField.from_lists(2, [[((2, 0), 0.3), ((0, 1), -0.4)],
                                        [((1, 1), 0.25)]])
    f2 = PolyVectorField.from_lists(2, [[((0, 0), 1.0)], [((0, 2), 0.2)]])
    struct = Structure(2, 2, (f1, f2), name="quadratic")
    traj = integrate_extremal(struct, np.array([0.3, -0.2]), np.array([0.8, 0.5]),
                              1.0, 1e-10, samples=17)
    assert traj.energy_drift() <= 1e-9
    assert traj.symplectic_defect() <= 1e-7
    drift, gap = check_constant_speed(traj)
    assert gap <= 1e-9 * max(1.0, 2 * traj.hamiltonian_values()[0])


def test_blowup_is_reported_as_integration_failure():
    # field (1 + q^2) d/dq reaches infinity in finite time
    field = PolyVectorField.from_lists(1, [[((0,), 1.0), ((2,), 1.0)]])
    struct = Structure(1, 1, (field,), name="blowup")
    with pytest.raises(IntegrationError):
        integrate_extremal(struct, np.zeros(1), np.array([1.0]), 3.0)


def test_ray_validation():
    ray = Ray(np.zeros(3), np.array([1.0, 0, 0]), 0.0, 2.0)
    assert np.allclose(ray(0.5), [0.5, 0, 0])
    with pytest.raises(ValueError):
        Ray(np.zeros(3), np.ones(3), 1.0, 0.5)


def test_batch_matches_single_integration(heis):
    covs = np.array([[1.0, 0.2, 3.0], [0.5, -0.8, 6.0]])
    batch = integrate_extremal_batch(heis, np.zeros(3), covs, 1.0, 1e-10, samples=9)
    for cov, traj in zip(covs, batch):
        single = integrate_extremal(heis, np.zeros(3), cov, 1.0, 1e-10, samples=9)
        assert np.max(np.abs(single.states - traj.states)) < 1e-9
        assert np.max(np.abs(single.phis - traj.phis)) < 1e-8

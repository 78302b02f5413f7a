import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from subriem.errors import ZeroHamiltonianError
from subriem.flow import d_exp, exp_map
from subriem.heisenberg import (ALPHA_STAR,
                                HeisCovector, classify_conjugate, find_collision,
                                fold_derivative, heis_conjugate_roots, heis_d_exp,
                                heis_exp_closed, heis_exp_point, heis_group_law,
                                heis_inverse, heis_jacobi_matrix,
                                heis_left_translation_differential, heis_state,
                                phi_conjugate, conjugate_locus_rows)
from subriem.linalg import omega_px, symplectic_defect

TWO_PI = 2 * math.pi
coord = st.floats(min_value=-2, max_value=2, allow_nan=False, allow_infinity=False)


def _rand_cov(rng, alpha_lo=0.5):
    u0, v0 = rng.uniform(-2, 2, 2)
    al = rng.uniform(alpha_lo, 9.0) * rng.choice([-1, 1])
    return (u0, v0, al)


# ---------------------------------------------------------------------------
# closed-form flow

def test_exp_closed_examples():
    z, tau, w, al = heis_exp_closed(HeisCovector((0, 0, 0), (1, 0, 0)), 1.0)
    assert abs(z - 1) < 1e-15 and abs(tau) < 1e-15

    z, tau, w, al = heis_exp_closed(HeisCovector((0, 0, 0), (1, 0, TWO_PI)), 1.0)
    assert abs(z) < 1e-14
    assert tau == pytest.approx(1 / (4 * math.pi), abs=1e-15)

    hc = HeisCovector((0.3, -0.7, 0.2), (1.1, 0.4, 2.5))
    z, tau, w, al = heis_exp_closed(hc, 0.0)
    assert z == hc.z0 and tau == 0.2 and w == hc.w0 and al == 2.5


def test_exp_closed_taylor_crossover_is_continuous():
    # seam between the Taylor branch and direct evaluation: two alpha values
    # a hair on either side of the cut give states differing only by the
    # genuine O(spacing) variation, with no branch jump
    base = (0.4, -0.2, 0.0)
    below = heis_state(HeisCovector(base, (1.0, 0.7, 1e-4 - 1e-12)), 1.0)
    above = heis_state(HeisCovector(base, (1.0, 0.7, 1e-4 + 1e-12)), 1.0)
    assert np.max(np.abs(below - above)) < 1e-10


def test_jacobi_matrix_taylor_crossover_is_continuous():
    # the second-order kernels switch branches at |theta| = 1e-2; with a large
    # horizontal momentum the matrix entries must still meet at the seam
    below = heis_jacobi_matrix(HeisCovector((0, 0, 0), (8.0, 0.0, 1e-2 - 1e-12)), 1.0)
    above = heis_jacobi_matrix(HeisCovector((0, 0, 0), (8.0, 0.0, 1e-2 + 1e-12)), 1.0)
    assert np.max(np.abs(below - above)) < 1e-9


def test_derived_quantities_recomputed():
    hc = HeisCovector((1.0, 2.0, 0.0), (0.5, -0.5, 4.0))
    assert hc.xi0 == 0.5 - 4.0 * 2.0 / 2
    assert hc.eta0 == -0.5 + 4.0 * 1.0 / 2
    assert hc.xi0_tilde == 0.5 + 4.0
    assert hc.eta0_tilde == -0.5 - 2.0
    assert hc.w0 == complex(0.5, -0.5)
    assert hc.zeta0 == complex(hc.xi0, hc.eta0)
    assert hc.hamiltonian == pytest.approx(0.5 * abs(hc.zeta0) ** 2)


# ---------------------------------------------------------------------------
# group structure

def test_group_law_examples():
    g = np.array([0.3, -1.2, 0.7])
    assert np.allclose(heis_group_law(g, [0, 0, 0]), g)
    assert np.allclose(heis_group_law(g, heis_inverse(g)), 0)
    assert np.allclose(heis_group_law([1, 0, 0], [0, 1, 0]), [1, 1, 0.5])


@given(a=st.tuples(coord, coord, coord), b=st.tuples(coord, coord, coord),
       c=st.tuples(coord, coord, coord))
def test_group_law_associative(a, b, c):
    left = heis_group_law(heis_group_law(a, b), c)
    right = heis_group_law(a, heis_group_law(b, c))
    assert np.allclose(left, right, atol=1e-12)


def test_left_invariance_of_geodesics():
    rng = np.random.default_rng(31)
    for _ in range(10):
        g = rng.uniform(-1.5, 1.5, 3)
        lam_g = rng.uniform(-2, 2, 3)
        dlg = heis_left_translation_differential(g)
        end_direct = heis_exp_point(HeisCovector(tuple(g), tuple(lam_g)), 1.0)
        lam0 = dlg.T @ lam_g
        end_translated = heis_group_law(g, heis_exp_point(
            HeisCovector((0, 0, 0), tuple(lam0)), 1.0))
        assert np.max(np.abs(end_direct - end_translated)) <= 1e-9


# ---------------------------------------------------------------------------
# fundamental matrix

def test_jacobi_matrix_at_zero_is_identity():
    hc = HeisCovector((0.2, 0.4, -0.1), (1.0, -0.7, 3.3))
    assert np.allclose(heis_jacobi_matrix(hc, 0.0), np.eye(6))


def test_jacobi_matrix_top_left_entry_at_conjugate_time():
    hc = HeisCovector((0, 0, 0), (1.0, 0.0, TWO_PI))
    m = heis_jacobi_matrix(hc, 1.0)
    assert m[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_jacobi_matrix_matches_finite_differences_of_closed_flow():
    # independent oracle: differentiate the closed-form flow in its initial data
    rng = np.random.default_rng(32)
    step = 1e-6
    for _ in range(12):
        base = tuple(rng.uniform(-1.5, 1.5, 3))
        cov = _rand_cov(rng)
        t_val = rng.uniform(0.2, 1.0)
        m = heis_jacobi_matrix(HeisCovector(base, cov), t_val)
        init = np.array(cov + base)  # (u, v, alpha, x, y, tau) ordering
        for j in range(6):
            dz = np.zeros(6)
            dz[j] = step
            plus = heis_state(HeisCovector(tuple(init[3:] + dz[3:]),
                                           tuple(init[:3] + dz[:3])), t_val)
            minus = heis_state(HeisCovector(tuple(init[3:] - dz[3:]),
                                            tuple(init[:3] - dz[:3])), t_val)
            fd = (plus - minus) / (2 * step)
            col = np.concatenate([fd[3:], fd[:3]])  # back to (p, x) order
            assert np.max(np.abs(m[:, j] - col)) <= 1e-7


def test_jacobi_matrix_symplectic():
    rng = np.random.default_rng(33)
    om = omega_px(3)
    for _ in range(20):
        hc = HeisCovector(tuple(rng.uniform(-1, 1, 3)), _rand_cov(rng))
        t_val = rng.uniform(0.0, 1.5)
        assert symplectic_defect(heis_jacobi_matrix(hc, t_val), om) <= 1e-10


def test_jacobi_matrix_small_alpha_branch():
    hc = HeisCovector((0.5, -0.3, 0.1), (1.0, 0.4, 1e-6))
    m = heis_jacobi_matrix(hc, 1.0)
    assert np.all(np.isfinite(m))
    assert symplectic_defect(m, omega_px(3)) <= 1e-10


# ---------------------------------------------------------------------------
# conjugate condition

def test_conjugate_roots_below_ten():
    roots = heis_conjugate_roots(10.0)
    assert len(roots) == 2
    assert roots[0].alpha == pytest.approx(TWO_PI, abs=1e-12)
    assert roots[0].branch == "sin-zero"
    assert roots[1].alpha == pytest.approx(8.986818916, abs=1e-8)
    assert roots[1].branch == "sin-nonzero"


def test_conjugate_roots_below_five_empty_with_sampling_oracle():
    assert heis_conjugate_roots(5.0) == []
    alphas = np.arange(1e-3, 5.0, 1e-3)
    values = np.array([phi_conjugate(a) for a in alphas])
    assert np.all(values < 0)  # no sign change anywhere below 5


def test_conjugate_roots_below_thirteen():
    roots = heis_conjugate_roots(13.0)
    assert [r.branch for r in roots] == ["sin-zero", "sin-nonzero", "sin-zero"]
    assert roots[2].alpha == pytest.approx(4 * math.pi, abs=1e-12)


def test_phi_at_two_pi_vanishes():
    # float rounding of 2 pi leaves phi(fl(2 pi)) at the 1e-15 scale
    assert phi_conjugate(TWO_PI) == pytest.approx(0.0, abs=1e-14)


def test_classification_examples():
    cls = classify_conjugate(HeisCovector((0, 0, 0), (1.0, 0, TWO_PI)))
    assert cls.tag == "C1"
    assert np.allclose(cls.kernel / np.linalg.norm(cls.kernel), [0, 1, 0])

    assert classify_conjugate(HeisCovector((0, 0, 0), (1.0, 0, math.pi))).tag == "none"

    cls = classify_conjugate(HeisCovector((0, 0, 0), (1.0, 0, ALPHA_STAR)))
    assert cls.tag == "C0"
    assert cls.kernel[2] == 1.0

    with pytest.raises(ZeroHamiltonianError):
        classify_conjugate(HeisCovector((0, 0, 0), (0.0, 0, 1.0)))
    assert classify_conjugate(HeisCovector((0, 0, 0), (1.0, 0, 0.0))).tag == "none"


def test_kernels_match_svd_of_closed_form_jacobian():
    rng = np.random.default_rng(34)
    cases = []
    for _ in range(6):
        base = tuple(rng.uniform(-1, 1, 3))
        u0, v0 = rng.uniform(-2, 2, 2)
        cases.append(HeisCovector(base, (u0, v0, TWO_PI)))
        cases.append(HeisCovector(base, (u0, v0, ALPHA_STAR)))
    for hc in cases:
        cls = classify_conjugate(hc)
        assert cls.is_conjugate
        mat = heis_d_exp(hc)
        _, svals, vt = np.linalg.svd(mat)
        assert svals[-1] <= 1e-10 * svals[0]
        kernel = vt[-1]
        unit = cls.kernel / np.linalg.norm(cls.kernel)
        assert min(np.linalg.norm(kernel - unit), np.linalg.norm(kernel + unit)) <= 1e-9


def test_kernel_matches_svd_of_numeric_d_exp(heis):
    hc = HeisCovector((0, 0, 0), (1.0, 0, TWO_PI))
    mat = d_exp(heis, np.zeros(3), np.array([1.0, 0, TWO_PI]))
    _, svals, vt = np.linalg.svd(mat)
    unit = classify_conjugate(hc).kernel / np.linalg.norm(classify_conjugate(hc).kernel)
    assert min(np.linalg.norm(vt[-1] - unit), np.linalg.norm(vt[-1] + unit)) <= 1e-6


# ---------------------------------------------------------------------------
# fold transversality

def test_fold_derivative_values():
    hc = HeisCovector((0, 0, 0), (1.0, 0, ALPHA_STAR))
    expected = 0.5 / (2 * ALPHA_STAR ** 2) * (2 - (2 + ALPHA_STAR ** 2) * math.cos(ALPHA_STAR))
    assert fold_derivative(hc) == pytest.approx(expected, rel=1e-14)
    assert fold_derivative(hc) != 0.0

    # zero fiber Hamiltonian kills the prefactor
    zero_h = HeisCovector((1.0, 0.5, 0.0), (ALPHA_STAR * 0.25, -ALPHA_STAR * 0.5, ALPHA_STAR))
    assert zero_h.hamiltonian == pytest.approx(0.0, abs=1e-14)
    assert fold_derivative(zero_h) == pytest.approx(0.0, abs=1e-14)

    with pytest.raises(ValueError):
        fold_derivative(HeisCovector((0, 0, 0), (1.0, 0, 0.0)))


def test_fold_derivative_sign_matches_determinant_derivative():
    # oracle: finite differences of det(d exp at t*lambda0) in t at t = 1,
    # with the Jacobian evaluated from the closed-form fundamental matrix
    rng = np.random.default_rng(35)
    second_c0 = heis_conjugate_roots(16.0)[-1].alpha  # next sin-nonzero root
    assert abs(phi_conjugate(second_c0)) < 1e-10
    cases = [
        HeisCovector((0, 0, 0), (1.0, 0.0, ALPHA_STAR)),
        HeisCovector((0, 0, 0), (0.3, -1.4, ALPHA_STAR)),
        HeisCovector(tuple(rng.uniform(-1, 1, 3)), (1.2, 0.5, ALPHA_STAR)),
        HeisCovector((0, 0, 0), (1.0, 0.0, second_c0)),
        HeisCovector(tuple(rng.uniform(-1, 1, 3)), (-0.8, 0.9, second_c0)),
    ]
    step = 1e-6
    for hc in cases:
        def det_at(t):
            scaled = HeisCovector(hc.base, tuple(t * np.array(hc.cov)))
            return np.linalg.det(heis_d_exp(scaled))

        fd = (det_at(1 + step) - det_at(1 - step)) / (2 * step)
        assert abs(fd) > 1e-12
        assert np.sign(fd) == np.sign(fold_derivative(hc))


# ---------------------------------------------------------------------------
# collisions

def test_collision_c1_circle(heis):
    hc = HeisCovector((0, 0, 0), (1.0, 0, TWO_PI))
    res = find_collision(hc, 1.0)
    assert res.gap <= 1e-12
    assert res.circle_angle >= 0.1
    assert res.separation >= 0.25
    target = np.array([0, 0, 1 / (4 * math.pi)])
    assert np.allclose(res.image1, target, atol=1e-12)
    assert np.allclose(res.image2, target, atol=1e-12)
    # the numeric flow confirms the collision
    num_gap = np.linalg.norm(exp_map(heis, np.zeros(3), res.lambda1)
                             - exp_map(heis, np.zeros(3), res.lambda2))
    assert num_gap <= 1e-9


def test_collision_c1_general_base():
    hc = HeisCovector((0.4, -0.3, 0.2), (1.0, 0.8, TWO_PI))
    res = find_collision(hc, 0.6)
    assert res.gap <= 1e-12
    assert np.allclose(res.image1, res.image2, atol=1e-12)


def test_collision_c0_fold(heis):
    hc = HeisCovector((0, 0, 0), (1.0, 0, ALPHA_STAR))
    for radius in (0.5, 0.1, 0.02):
        res = find_collision(hc, radius)
        assert res.gap <= 1e-9
        assert res.separation >= radius / 4
        assert np.linalg.norm(res.lambda1 - np.array(hc.cov)) <= radius
        assert np.linalg.norm(res.lambda2 - np.array(hc.cov)) <= radius
    num_gap = np.linalg.norm(exp_map(heis, np.zeros(3), res.lambda1)
                             - exp_map(heis, np.zeros(3), res.lambda2))
    assert num_gap <= 1e-9


def test_collision_rejects_bad_inputs():
    with pytest.raises(ValueError):
        find_collision(HeisCovector((0, 0, 0), (1.0, 0, 3.0)), 0.5)
    with pytest.raises(ValueError):
        find_collision(HeisCovector((0, 0, 0), (1.0, 0, TWO_PI)), 0.0)


def test_classification_agrees_with_ray_counts(heis):
    # along the ray through (u0, 0, alpha0), the conjugate times in (0, 1]
    # are exactly {root / alpha0 : root <= alpha0}
    from subriem.maslov import count_conjugate_on_ray

    for u0, al in ((0.7, 7.5), (1.3, 9.5), (0.4, 13.2)):
        reports = count_conjugate_on_ray(heis, np.zeros(3), np.array([u0, 0.0, al]),
                                         0.02, 1.0)
        expected = [r.alpha / al for r in heis_conjugate_roots(al) if r.alpha / al > 0.02]
        assert len(reports) == len(expected)
        for rep, t_expected in zip(reports, expected):
            assert rep.t == pytest.approx(t_expected, abs=1e-8)
            scaled = HeisCovector((0, 0, 0), (rep.t * u0, 0.0, rep.t * al))
            assert classify_conjugate(scaled, tol=1e-6).is_conjugate


def test_kernel_jacobi_field_equivalence(heis):
    # initial data (A, 0) closes up at t = 1 iff A lies in the kernel
    from subriem.jacobi import propagate_jacobi
    from subriem.flow import integrate_extremal

    grid = np.unique(np.concatenate([np.linspace(0, 1.0, 33), [1.0]]))
    traj = integrate_extremal(heis, np.zeros(3), np.array([1.0, 0, TWO_PI]), 1.0,
                              samples=grid)
    kernel = np.array([0.0, 1.0, 0.0])
    coords = propagate_jacobi(heis, traj, kernel, np.zeros(3))
    assert np.linalg.norm(coords.at(1.0)[1]) <= 1e-7 * np.linalg.norm(kernel)
    rng = np.random.default_rng(36)
    for _ in range(5):
        a_vec = rng.normal(size=3)
        a_vec -= (a_vec @ kernel) * kernel  # orthogonal to the kernel
        coords = propagate_jacobi(heis, traj, a_vec, np.zeros(3))
        assert np.linalg.norm(coords.at(1.0)[1]) > 1e-3 * np.linalg.norm(a_vec)


# ---------------------------------------------------------------------------
# locus export

def test_locus_rows_structure():
    rows = conjugate_locus_rows([1.0], [math.pi, TWO_PI])
    assert len(rows) == 2
    assert rows[0][3] == 0 and rows[0][4] == "-"
    assert rows[1][3] == 1 and rows[1][4] == "C1"
    kernel = np.array(rows[1][5:])
    assert np.allclose(np.abs(kernel), [0, 1, 0])

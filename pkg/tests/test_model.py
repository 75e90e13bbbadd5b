"""Constitutive terms, tendencies, and the deterministic initial states."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import random_state
from pttflow.model import (
    FlowState,
    ModelParams,
    deformation,
    full_to_sym,
    grad_u_physical,
    i3_residual,
    make_initial_data,
    momentum_rhs,
    pressure,
    q_bilinear,
    random_solenoidal_field,
    stress_rhs,
    sym_to_full,
    tau_sobolev_norm,
    tendency,
    trace_coeffs,
    trace_field,
)
from pttflow.spectral import (
    SYM_COMPONENTS,
    SYM_WEIGHTS,
    dealias,
    derivative,
    div_sym,
    gradient,
    sobolev_norm,
    solenoidal_residual,
    transform_backward,
    transform_forward,
)


def dense_q(grid, uhat, tauhat, slip):
    """Independent per-point 3x3 assembly of the rotation/slip coupling."""
    tau = np.moveaxis(sym_to_full(transform_backward(grid, tauhat)), (0, 1), (-2, -1))
    gu = np.empty((3, 3) + uhat.shape[-3:])
    for a in range(3):
        for b in range(3):
            gu[a, b] = transform_backward(grid, derivative(grid, uhat[b], a))
    g = np.moveaxis(gu, (0, 1), (-2, -1))  # g[..., a, b] = d_a u_b
    spin = 0.5 * (np.swapaxes(g, -1, -2) - g)
    strain = 0.5 * (g + np.swapaxes(g, -1, -2))
    q = tau @ spin - spin @ tau + slip * (strain @ tau + tau @ strain)
    return np.moveaxis(q, (-2, -1), (0, 1))


class TestBilinearCoupling:
    @pytest.mark.parametrize("slip", [0.0, 0.7])
    def test_matches_dense_matrix_oracle(self, grid8, slip):
        state = random_state(grid8, seed=1)
        got = q_bilinear(grid8, state.uhat, state.tauhat, slip)
        dense = dense_q(grid8, state.uhat, state.tauhat, slip)
        want = dealias(grid8, transform_forward(grid8, full_to_sym(dense)))
        scale = max(float(np.max(np.abs(want))), 1e-30)
        assert np.max(np.abs(got - want)) <= 1e-12 * scale

    def test_corotational_trace_vanishes(self, grid8):
        state = random_state(grid8, seed=2)
        qtr = trace_coeffs(q_bilinear(grid8, state.uhat, state.tauhat, 0.0))
        assert np.max(np.abs(qtr)) <= 1e-15

    def test_slip_trace_identity(self, grid8):
        # pointwise, tr Q = 2 * slip * tr(D tau); dealiasing is linear so
        # the identity survives the spectral cut
        state = random_state(grid8, seed=3)
        slip = 0.4
        qtr = trace_coeffs(q_bilinear(grid8, state.uhat, state.tauhat, slip))
        d_phys = transform_backward(grid8, deformation(grid8, state.uhat))
        tau = transform_backward(grid8, state.tauhat)
        pair = np.sum(SYM_WEIGHTS.reshape(6, 1, 1, 1) * d_phys * tau, axis=0)
        want = dealias(grid8, transform_forward(grid8, 2.0 * slip * pair))
        assert_allclose(qtr, want, atol=1e-13)


def test_sym_storage_roundtrip():
    rng = np.random.default_rng(0)
    comp6 = rng.standard_normal((6, 4, 4, 4))
    full = sym_to_full(comp6)
    assert_allclose(full, np.swapaxes(full, 0, 1))
    assert np.array_equal(full_to_sym(full), comp6)
    assert np.array_equal(full[0, 1], comp6[1])
    assert np.array_equal(full[2, 2], comp6[5])


def test_deformation_is_trace_free_for_solenoidal_velocity(grid8):
    rng = np.random.default_rng(1)
    uhat = random_solenoidal_field(grid8, rng)
    d = deformation(grid8, uhat)
    assert np.max(np.abs(d[0] + d[3] + d[5])) <= 1e-14


def test_grad_u_physical_matches_componentwise_derivatives(grid8):
    rng = np.random.default_rng(2)
    uhat = random_solenoidal_field(grid8, rng)
    gu = grad_u_physical(grid8, uhat)
    for a in range(3):
        for b in range(3):
            direct = transform_backward(grid8, derivative(grid8, uhat[b], a))
            assert_allclose(gu[a, b], direct, atol=1e-14)


class TestTendency:
    def test_pure_relaxation_matches_closed_form(self, grid8):
        # u = 0 and an isotropic stress: each diagonal slot must relax as
        # -(a + b psi) psi / 3 with no transport or coupling terms left
        x = grid8.mesh()[0]
        psi = 0.5 + 0.1 * np.sin(x)
        psihat = transform_forward(grid8, psi)
        tauhat = np.zeros((6, 8, 8, 8), dtype=complex)
        for slot in (0, 3, 5):
            tauhat[slot] = psihat / 3.0
        state = FlowState(0.0, grid8, np.zeros((3, 8, 8, 8), dtype=complex), tauhat)
        params = ModelParams(a=0.3, b=1.2, slip=0.0, mu=1.0, mu1=1.0, mu2=1.0)
        tend, _ = tendency(state, params)
        want = dealias(grid8, transform_forward(grid8, -(0.3 + 1.2 * psi) * psi / 3.0))
        for slot in (0, 3, 5):
            assert_allclose(tend.dtau[slot], want, atol=1e-14)
        for slot in (1, 2, 4):
            assert np.max(np.abs(tend.dtau[slot])) <= 1e-15
        assert np.max(np.abs(tend.du)) <= 1e-15

    def test_velocity_tendency_is_solenoidal_and_mean_free(self, grid16):
        state = random_state(grid16, seed=4)
        tend, _ = tendency(state, ModelParams())
        assert solenoidal_residual(grid16, tend.du) <= 1e-12
        assert np.max(np.abs(tend.du[:, 0, 0, 0])) == 0.0

    def test_forcing_term_scales_with_mu2(self, grid8):
        state = random_state(grid8, seed=5)
        base = ModelParams(mu2=1.0)
        bumped = ModelParams(mu2=2.0)
        t0, _ = tendency(state, base)
        t1, _ = tendency(state, bumped)
        d = deformation(grid8, state.uhat)
        assert_allclose(t1.dtau - t0.dtau, d, atol=1e-13)

    def test_monitors_match_direct_evaluation(self, grid8):
        state = random_state(grid8, seed=6)
        _, mon = tendency(state, ModelParams(), with_monitors=True)
        u = transform_backward(grid8, state.uhat)
        assert mon.umax == pytest.approx(
            np.sqrt((u**2).sum(axis=0)).max(), rel=1e-13
        )
        tr = trace_field(state).physical()
        assert mon.trace_min == pytest.approx(tr.min(), rel=1e-12)
        assert mon.trace_max == pytest.approx(tr.max(), rel=1e-12)
        assert tr[mon.trace_argmin] == pytest.approx(tr.min(), rel=1e-12)
        gu = grad_u_physical(grid8, state.uhat)
        assert mon.gradu_max == pytest.approx(
            np.sqrt((gu**2).sum(axis=(0, 1))).max(), rel=1e-13
        )
        assert mon.trq_rel <= 1e-13

    def test_momentum_rhs_adds_viscous_part(self, grid8):
        state = random_state(grid8, seed=7)
        params = ModelParams(mu=0.7)
        tend, _ = tendency(state, params)
        full = momentum_rhs(state, params)
        assert_allclose(full, tend.du - 0.7 * grid8.ksq * state.uhat, atol=1e-15)

    def test_stress_rhs_equals_tendency_dtau(self, grid8):
        state = random_state(grid8, seed=8)
        params = ModelParams()
        tend, _ = tendency(state, params)
        assert np.array_equal(stress_rhs(state, params), tend.dtau)


def test_stress_trace_follows_scalar_transport_law(grid16):
    # taking the trace of the stress tendency must reproduce
    # -u.grad(tr tau) - a tr tau - b (tr tau)^2: the deformation forcing is
    # trace-free for solenoidal u and the coupling trace vanishes at slip=0
    state = random_state(grid16, seed=12, amp=0.3)
    params = ModelParams(a=0.2, b=1.0, slip=0.0, mu2=1.4)
    got = trace_coeffs(stress_rhs(state, params))

    grid = grid16
    u = transform_backward(grid, state.uhat)
    tr = transform_backward(grid, trace_coeffs(state.tauhat))
    gtr = np.stack(
        [
            transform_backward(grid, derivative(grid, trace_coeffs(state.tauhat), a))
            for a in range(3)
        ]
    )
    advect = u[0] * gtr[0] + u[1] * gtr[1] + u[2] * gtr[2]
    want = dealias(grid, transform_forward(grid, -advect - 0.2 * tr - 1.0 * tr**2))
    scale = max(float(np.max(np.abs(want))), 1e-30)
    assert np.max(np.abs(got - want)) <= 1e-12 * scale


def test_pressure_completes_the_projection(grid8):
    # the projected momentum tendency plus grad p must recover the raw
    # (unprojected) right-hand side, mode by mode
    state = random_state(grid8, seed=9)
    params = ModelParams(mu1=1.3)
    tend, _ = tendency(state, params)
    p = pressure(state, params)
    grad_p = gradient(grid8, p.coeffs)

    u = transform_backward(grid8, state.uhat)
    prods = np.stack([u[i] * u[j] for (i, j) in SYM_COMPONENTS])
    uu_hat = dealias(grid8, transform_forward(grid8, prods))
    raw = -div_sym(grid8, uu_hat) + params.mu1 * div_sym(grid8, state.tauhat)
    raw[:, 0, 0, 0] = 0.0
    scale = max(float(np.max(np.abs(raw))), 1e-30)
    assert np.max(np.abs(tend.du + grad_p - raw)) <= 1e-12 * scale


def test_i3_residual_is_roundoff_for_any_pair(grid16):
    worst = 0.0
    for seed in range(4):
        state = random_state(grid16, seed=seed, amp=0.8)
        worst = max(worst, i3_residual(grid16, state.uhat, state.tauhat))
    assert worst <= 1e-12


def test_tau_sobolev_norm_counts_off_diagonals_twice(grid8):
    x = grid8.mesh()[0]
    chat = transform_forward(grid8, np.sin(x))
    tauhat = np.zeros((6, 8, 8, 8), dtype=complex)
    tauhat[1] = chat  # the (1,2) slot appears twice in the full tensor
    assert tau_sobolev_norm(grid8, tauhat) == pytest.approx(
        np.sqrt(2.0) * sobolev_norm(grid8, chat), rel=1e-13
    )
    tauhat *= 0
    tauhat[0] = chat
    assert tau_sobolev_norm(grid8, tauhat) == pytest.approx(
        sobolev_norm(grid8, chat), rel=1e-13
    )


class TestInitialData:
    def test_global_norm_is_exact(self, grid16):
        state = make_initial_data(grid16, "global", delta0=0.02, seed=1)
        total = np.sqrt(
            sobolev_norm(grid16, state.uhat, 2) ** 2
            + tau_sobolev_norm(grid16, state.tauhat, 2) ** 2
        )
        assert abs(total - 0.02) <= 1e-10 * 0.02

    def test_global_trace_has_positive_floor(self, grid16):
        state = make_initial_data(grid16, "global", delta0=0.02, seed=1)
        assert trace_field(state).physical().min() > 0.0

    def test_global_velocity_is_solenoidal_and_mean_free(self, grid16):
        state = make_initial_data(grid16, "global", delta0=0.02, seed=2)
        assert solenoidal_residual(grid16, state.uhat) <= 1e-13
        assert np.max(np.abs(state.uhat[:, 0, 0, 0])) == 0.0

    def test_global_rejects_bad_floor_parameters(self, grid8):
        with pytest.raises(ValueError):
            make_initial_data(grid8, "global", delta0=0.01, c0=-1.0)
        with pytest.raises(ValueError):
            make_initial_data(grid8, "global", delta0=0.01, c0=7.0, eps_tilde0=1.0)

    def test_blowup_minimum_value_is_grid_resolved(self, grid16):
        state = make_initial_data(grid16, "blowup", delta0=0.01, seed=0)
        tr = trace_field(state).physical()
        center = (8, 8, 8)  # index of x = pi on a 16-point axis
        assert tr[center] == pytest.approx(-2.0, abs=1e-12)
        assert tr.min() == pytest.approx(-2.0, abs=1e-12)

    def test_blowup_custom_minimum_and_validation(self, grid8):
        state = make_initial_data(grid8, "blowup", delta0=0.0, c0=-0.5)
        assert trace_field(state).physical().min() == pytest.approx(-0.5, abs=1e-13)
        assert np.max(np.abs(state.uhat)) == 0.0
        with pytest.raises(ValueError):
            make_initial_data(grid8, "blowup", c0=1.0)

    def test_linear_norm_split(self, grid8):
        state = make_initial_data(grid8, "linear", delta0=0.04, seed=3)
        assert sobolev_norm(grid8, state.uhat, 2) == pytest.approx(
            0.04 / np.sqrt(2.0), rel=1e-12
        )
        assert tau_sobolev_norm(grid8, state.tauhat, 2) == pytest.approx(
            0.04 / np.sqrt(2.0), rel=1e-12
        )

    def test_unknown_kind_rejected(self, grid8):
        with pytest.raises(ValueError):
            make_initial_data(grid8, "spiral")

    def test_same_seed_reproduces_bitwise(self, grid8):
        a = make_initial_data(grid8, "global", delta0=0.01, seed=9)
        b = make_initial_data(grid8, "global", delta0=0.01, seed=9)
        assert np.array_equal(a.uhat, b.uhat)
        assert np.array_equal(a.tauhat, b.tauhat)
        c = make_initial_data(grid8, "global", delta0=0.01, seed=10)
        assert not np.array_equal(a.uhat, c.uhat)


class TestFlowStateValidation:
    def test_rotational_velocity_rejected(self, grid8):
        u = np.zeros((3, 8, 8, 8), dtype=complex)
        u[0] = transform_forward(grid8, np.sin(grid8.mesh()[0]))
        tau = np.zeros((6, 8, 8, 8), dtype=complex)
        with pytest.raises(ValueError):
            FlowState(0.0, grid8, u, tau).validate()

    def test_nonzero_mean_rejected(self, grid8):
        u = np.zeros((3, 8, 8, 8), dtype=complex)
        u[1, 0, 0, 0] = 0.5  # constant drift, divergence-free but not mean-free
        tau = np.zeros((6, 8, 8, 8), dtype=complex)
        with pytest.raises(ValueError):
            FlowState(0.0, grid8, u, tau).validate()

    def test_copy_is_deep(self, grid8):
        state = random_state(grid8, seed=11)
        dup = state.copy()
        dup.uhat[0, 1, 0, 0] += 1.0
        assert state.uhat[0, 1, 0, 0] != dup.uhat[0, 1, 0, 0]


class TestModelParamsValidation:
    def test_preset_defaults(self):
        p = ModelParams()
        assert (p.a, p.b, p.slip) == (0.0, 1.0, 0.0)
        assert (p.mu, p.mu1, p.mu2) == (1.0, 1.0, 1.0)

    def test_nonpositive_viscosity_rejected(self):
        with pytest.raises(ValueError):
            ModelParams(mu=0.0)

    def test_negative_feedback_rejected(self):
        with pytest.raises(ValueError):
            ModelParams(b=-1.0)

    def test_slip_outside_unit_interval_rejected(self):
        with pytest.raises(ValueError):
            ModelParams(slip=2.0)

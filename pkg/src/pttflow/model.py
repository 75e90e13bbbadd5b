"""Stress-velocity model on the periodic box: tendencies and initial data.

The state couples a solenoidal velocity u with a symmetric stress tau:

    du/dt   = P(-u.grad u + mu1 div tau) + mu Lap u,
    dtau/dt = -u.grad tau - (a + b tr tau) tau - Q(tau, grad u) + mu2 D(u),

where P is the Leray projection, D and Omega are the symmetric and
antisymmetric parts of grad u, and the rotation/slip bilinear term is

    Q = tau Omega - Omega tau + slip (D tau + tau D),

with slip in [-1, 1] selecting the convected frame (slip=0 is the
corotational choice, the default here).  The default parameter set is
a=0, b=1, slip=0, mu=mu1=mu2=1.

Stress tensors use the 6-component storage order (11, 12, 13, 22, 23, 33)
from :mod:`pttflow.spectral`.  Velocities are kept mean-free and
divergence-free; tendencies come back dealiased, with the stiff viscous
term left to the integrator's integrating factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .spectral import (
    BOX_VOLUME,
    SYM_COMPONENTS,
    SYM_FULL,
    SYM_WEIGHTS,
    Grid,
    SpectralField,
    dealias,
    derivative,
    div_sym,
    divergence,
    forward_dealiased,
    inverse_laplacian,
    leray_project,
    sobolev_norm,
    solenoidal_residual,
    transform_backward,
    transform_forward,
)

# row/col index pairs of the stored components, as fancy-index arrays
_ROWS = np.array([ij[0] for ij in SYM_COMPONENTS])
_COLS = np.array([ij[1] for ij in SYM_COMPONENTS])


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the coupled system; defaults give the baseline set."""

    a: float = 0.0
    b: float = 1.0
    slip: float = 0.0
    mu: float = 1.0
    mu1: float = 1.0
    mu2: float = 1.0

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError(f"viscosity mu must be positive, got {self.mu}")
        if self.b < 0:
            raise ValueError(f"feedback coefficient b must be >= 0, got {self.b}")
        if not -1.0 <= self.slip <= 1.0:
            raise ValueError(f"slip parameter must lie in [-1, 1], got {self.slip}")


@dataclass
class FlowState:
    """Velocity and stress coefficients at one instant.

    uhat has shape (3, n, n, n), tauhat (6, n, n, n) in the symmetric
    storage order.  The velocity is mean-free and divergence-free; use
    :meth:`validate` to verify after external input.
    """

    t: float
    grid: Grid
    uhat: np.ndarray
    tauhat: np.ndarray

    def validate(self, tol=1e-12):
        res = solenoidal_residual(self.grid, self.uhat)
        if res > tol:
            raise ValueError(f"state velocity has divergence residual {res:.3e}")
        mean = np.max(np.abs(self.uhat[:, 0, 0, 0]))
        if mean > tol:
            raise ValueError(f"state velocity has nonzero mean {mean:.3e}")
        return self

    def copy(self):
        return FlowState(self.t, self.grid, self.uhat.copy(), self.tauhat.copy())


@dataclass
class Tendency:
    """Explicit time derivatives of (u, tau).

    ``du`` is the projected, dealiased non-viscous part of the velocity
    equation; the stiff mu*Lap u term is applied separately by the
    integrator.  ``dtau`` is the complete stress tendency.
    """

    du: np.ndarray
    dtau: np.ndarray


@dataclass
class StepMonitors:
    """Cheap pointwise extrema gathered during a tendency evaluation."""

    umax: float
    trace_min: float
    trace_max: float
    trace_argmin: tuple
    gradu_max: float
    trq_rel: float


def sym_to_full(comp6):
    """Expand 6-component symmetric storage to a full (3, 3, ...) array."""
    return comp6[SYM_FULL]


def full_to_sym(full):
    """Collapse a (structurally symmetric) full tensor to 6 components."""
    return full[_ROWS, _COLS]


def trace_coeffs(tauhat):
    return tauhat[0] + tauhat[3] + tauhat[5]


def trace_field(state):
    """Trace of the stress as a scalar SpectralField."""
    return SpectralField(state.grid, trace_coeffs(state.tauhat))


def deformation(grid, uhat):
    """Symmetric velocity gradient D(u) in 6-component spectral storage."""
    k = (grid.kx, grid.ky, grid.kz)
    out = np.empty((6,) + uhat.shape[-3:], dtype=complex)
    for c, (i, j) in enumerate(SYM_COMPONENTS):
        out[c] = 0.5j * (k[j] * uhat[i] + k[i] * uhat[j])
    return out


def vorticity_tensor(grid, uhat):
    """Antisymmetric velocity gradient as a full (3, 3, n, n, n) array."""
    k = (grid.kx, grid.ky, grid.kz)
    out = np.zeros((3, 3) + uhat.shape[-3:], dtype=complex)
    for i in range(3):
        for j in range(3):
            if i != j:
                out[i, j] = 0.5j * (k[j] * uhat[i] - k[i] * uhat[j])
    return out


def grad_u_physical(grid, uhat):
    """gu[a, b] = d_a u_b on the grid, via one batched transform."""
    k = (grid.kx, grid.ky, grid.kz)
    stack = np.stack([1j * k[a] * uhat[b] for a in range(3) for b in range(3)])
    n = grid.n
    return transform_backward(grid, stack).reshape(3, 3, n, n, n)


def _q_physical(tau_full, gu, slip):
    """Pointwise Q(tau, grad u) on the grid, full 3x3 layout.

    ``gu[a, b]`` holds d_a u_b, so (grad u)_{ij} = gu[j, i].
    """
    omega = 0.5 * (gu.transpose(1, 0, 2, 3, 4) - gu)   # omega[i,j] = (d_j u_i - d_i u_j)/2
    q = np.einsum("ab...,bc...->ac...", tau_full, omega)
    q -= np.einsum("ab...,bc...->ac...", omega, tau_full)
    if slip != 0.0:
        d = 0.5 * (gu.transpose(1, 0, 2, 3, 4) + gu)
        dt_ = np.einsum("ab...,bc...->ac...", d, tau_full)
        q += slip * (dt_ + dt_.transpose(1, 0, 2, 3, 4))
    return q


def q_bilinear(grid, uhat, tauhat, slip=0.0):
    """Rotation/slip coupling Q(tau, grad u), dealiased, 6-component spectral.

    Q is symmetric by construction.  Its pointwise trace is 2*slip*tr(D tau),
    which vanishes identically in the corotational case slip=0.
    """
    tau = transform_backward(grid, tauhat)
    gu = grad_u_physical(grid, uhat)
    q = _q_physical(sym_to_full(tau), gu, slip)
    return dealias(grid, transform_forward(grid, full_to_sym(q)))


def pdivtau_coeffs(grid, tauhat):
    """Leray-projected stress divergence, the solenoidal forcing seen by u."""
    return leray_project(grid, div_sym(grid, tauhat))


def tau_sobolev_norm(grid, tauhat, s=0):
    """H^s norm of a symmetric tensor, counting off-diagonal entries twice."""
    w = (1.0 + grid.ksq) ** s if s else 1.0
    mags = (tauhat.real**2 + tauhat.imag**2) * w
    total = np.sum(SYM_WEIGHTS.reshape(6, 1, 1, 1) * mags)
    return float(np.sqrt(BOX_VOLUME * total))


def tendency(state, params, with_monitors=False):
    """Explicit tendencies of both fields, sharing one set of transforms.

    Returns (Tendency, StepMonitors or None).  The velocity tendency is
    Leray-projected and excludes the viscous term; the momentum advection
    uses the divergence form div(u x u), which requires div u = 0.
    """
    grid = state.grid
    n = grid.n
    k = (grid.kx, grid.ky, grid.kz)
    uhat, tauhat = state.uhat, state.tauhat

    gradu_stack = np.stack([1j * k[a] * uhat[b] for a in range(3) for b in range(3)])
    phys = transform_backward(grid, np.concatenate([uhat, tauhat, gradu_stack]))
    u, tau, gu = phys[:3], phys[3:9], phys[9:].reshape(3, 3, n, n, n)
    trtau = tau[0] + tau[3] + tau[5]
    tau_full = sym_to_full(tau)

    q_phys = _q_physical(tau_full, gu, params.slip)

    products = np.empty((36, n, n, n))
    for l in range(3):
        for c in range(6):
            np.multiply(u[l], tau[c], out=products[6 * l + c])
    for c, (i, j) in enumerate(SYM_COMPONENTS):
        np.multiply(u[i], u[j], out=products[18 + c])
    relax = params.a + params.b * trtau
    for c in range(6):
        np.multiply(relax, tau[c], out=products[24 + c])
    products[30:] = full_to_sym(q_phys)

    hats = forward_dealiased(grid, products)
    adv_tau = hats[:18].reshape(3, 6, n, n, n)
    adv_u = hats[18:24]
    relax_tau = hats[24:30]
    q_hat = hats[30:]

    dtau = np.empty_like(tauhat)
    for c, (i, j) in enumerate(SYM_COMPONENTS):
        dhat_c = 0.5j * (k[j] * uhat[i] + k[i] * uhat[j])
        transport = 1j * (
            k[0] * adv_tau[0, c] + k[1] * adv_tau[1, c] + k[2] * adv_tau[2, c]
        )
        dtau[c] = -transport - relax_tau[c] - q_hat[c] + params.mu2 * dhat_c

    divtau = div_sym(grid, tauhat)
    du = np.empty_like(uhat)
    for i in range(3):
        adv_i = sum(1j * k[j] * adv_u[SYM_FULL[i][j]] for j in range(3))
        du[i] = -adv_i + params.mu1 * divtau[i]
    du = leray_project(grid, du)
    du[:, 0, 0, 0] = 0.0

    monitors = None
    if with_monitors:
        umax = float(np.sqrt((u**2).sum(axis=0).max()))
        gradu_max = float(np.sqrt((gu**2).sum(axis=(0, 1)).max()))
        flat = int(np.argmin(trtau))
        trq = q_phys[0, 0] + q_phys[1, 1] + q_phys[2, 2]
        scale = float(np.max(np.abs(tau))) * gradu_max
        trq_rel = float(np.max(np.abs(trq))) / scale if scale > 0 else 0.0
        monitors = StepMonitors(
            umax=umax,
            trace_min=float(trtau.min()),
            trace_max=float(trtau.max()),
            trace_argmin=np.unravel_index(flat, trtau.shape),
            gradu_max=gradu_max,
            trq_rel=trq_rel,
        )
    return Tendency(du, dtau), monitors


def momentum_rhs(state, params):
    """Full velocity tendency P(-u.grad u + mu1 div tau) + mu Lap u."""
    tend, _ = tendency(state, params)
    return tend.du - params.mu * state.grid.ksq * state.uhat


def stress_rhs(state, params):
    """Full stress tendency (transport, relaxation, Q coupling, forcing)."""
    tend, _ = tendency(state, params)
    return tend.dtau


def pressure(state, params):
    """Pressure recovered from the divergence of the momentum equation.

    Solves Lap p = div(mu1 div tau - u.grad u); the result is mean-free.
    """
    grid = state.grid
    k = (grid.kx, grid.ky, grid.kz)
    u = transform_backward(grid, state.uhat)
    prods = np.stack([u[i] * u[j] for (i, j) in SYM_COMPONENTS])
    phat = dealias(grid, transform_forward(grid, prods))
    # off-diagonal (i, j) pairs appear twice in the double divergence
    divdiv_uu = 0
    for c, (i, j) in enumerate(SYM_COMPONENTS):
        weight = 1.0 if i == j else 2.0
        divdiv_uu = divdiv_uu - weight * k[i] * k[j] * phat[c]
    rhs = params.mu1 * divergence(grid, div_sym(grid, state.tauhat)) - divdiv_uu
    return SpectralField(grid, inverse_laplacian(grid, rhs))


def i3_residual(grid, uhat, tauhat):
    """Relative defect of the stress-velocity coupling cancellation.

    For k = 0, 1, 2 the weighted pairings <grad^k div tau, grad^k u> and
    <grad^k D(u), grad^k tau> sum to zero by integration by parts; the
    return value is |sum| / sum(|terms|).
    """
    dvt = div_sym(grid, tauhat)
    dh = deformation(grid, uhat)
    terms = []
    for order in range(3):
        w = grid.ksq.astype(np.float64) ** order
        t1 = BOX_VOLUME * float(np.sum(w * (np.conj(uhat) * dvt).real))
        pair = (np.conj(tauhat) * dh).real
        t2 = BOX_VOLUME * float(np.sum(w * SYM_WEIGHTS.reshape(6, 1, 1, 1) * pair))
        terms.extend([t1, t2])
    scale = sum(abs(t) for t in terms)
    if scale == 0.0:
        return 0.0
    return abs(sum(terms)) / scale


# ---------------------------------------------------------------------------
# random fields and initial data
# ---------------------------------------------------------------------------


def _random_scalar(grid, rng, kmax=4):
    """Mean-free random scalar supported on 0 < |k| <= kmax with (1+|k|^2)^-2 falloff."""
    white = rng.standard_normal((grid.n,) * 3)
    c = transform_forward(grid, white)
    mask = (grid.ksq > 0) & (grid.ksq <= kmax * kmax)
    c *= mask / (1.0 + grid.ksq) ** 2
    return c


def random_solenoidal_field(grid, rng, kmax=4):
    """Mean-free divergence-free random velocity, low-mode band."""
    raw = np.stack([_random_scalar(grid, rng, kmax) for _ in range(3)])
    out = leray_project(grid, raw)
    out[:, 0, 0, 0] = 0.0
    return out


def _combined_norm(grid, uhat, tauhat, s=2):
    return float(
        np.sqrt(sobolev_norm(grid, uhat, s) ** 2 + tau_sobolev_norm(grid, tauhat, s) ** 2)
    )


def _build_global(grid, delta0, c0, eps_tilde0, rng):
    if c0 is None:
        c0 = delta0 / 2.0
    if c0 <= 0:
        raise ValueError(f"decay floor c0 must be positive for global data, got {c0}")
    if c0 * eps_tilde0 >= 6.0:
        raise ValueError(
            "trace oscillation would overwhelm its floor (c0 * eps_tilde0 >= 6)"
        )
    x1, x2, x3 = grid.mesh()
    phi = 1.5 * c0 + 0.25 * c0**2 * eps_tilde0 * np.sin(x1) * np.sin(x2) * np.sin(x3)
    phihat = transform_forward(grid, phi)

    tauhat = np.zeros((6,) + phihat.shape, dtype=complex)
    for slot in (0, 3, 5):
        tauhat[slot] = phihat / 3.0
    off = np.stack([_random_scalar(grid, rng) for _ in range(3)])
    diag_norm = tau_sobolev_norm(grid, tauhat, 2)
    off_norm = np.sqrt(sum(2.0 * sobolev_norm(grid, o, 2) ** 2 for o in off))
    if off_norm > 0:
        off *= 0.3 * diag_norm / off_norm
    for slot, comp in zip((1, 2, 4), off):
        tauhat[slot] = comp

    uhat = random_solenoidal_field(grid, rng)
    u_norm = sobolev_norm(grid, uhat, 2)
    if u_norm == 0:
        raise ValueError("random velocity draw degenerated to zero")
    uhat *= delta0 / np.sqrt(2.0) / u_norm
    tauhat *= delta0 / np.sqrt(2.0) / tau_sobolev_norm(grid, tauhat, 2)

    state = FlowState(0.0, grid, uhat, tauhat)
    total = _combined_norm(grid, uhat, tauhat)
    if abs(total - delta0) > 1e-10 * delta0:
        raise ValueError(f"normalization drifted: built norm {total!r} for target {delta0!r}")
    floor = transform_backward(grid, trace_coeffs(tauhat)).min()
    if floor <= 0:
        raise ValueError(f"constructed trace dips to {floor:.3e}; expected a positive floor")
    return state


def _build_blowup(grid, delta0, c0, rng):
    m = -2.0 if c0 is None else c0
    if m >= 0:
        raise ValueError(f"breakdown data needs a negative trace minimum, got {m}")
    amp = 0.75 * abs(m)
    x1, x2, x3 = grid.mesh()
    bump = 1.0 - np.cos(x1 - np.pi) * np.cos(x2 - np.pi) * np.cos(x3 - np.pi)
    phi = m + amp * bump
    phihat = transform_forward(grid, phi)
    tauhat = np.zeros((6,) + phihat.shape, dtype=complex)
    for slot in (0, 3, 5):
        tauhat[slot] = phihat / 3.0

    uhat = random_solenoidal_field(grid, rng)
    u_norm = sobolev_norm(grid, uhat, 2)
    if u_norm > 0 and delta0 > 0:
        uhat *= delta0 / u_norm
    else:
        uhat[:] = 0.0
    return FlowState(0.0, grid, uhat, tauhat)


def _build_linear(grid, delta0, rng):
    uhat = random_solenoidal_field(grid, rng)
    tauhat = np.stack([_random_scalar(grid, rng) for _ in range(6)])
    uhat *= delta0 / np.sqrt(2.0) / sobolev_norm(grid, uhat, 2)
    tauhat *= delta0 / np.sqrt(2.0) / tau_sobolev_norm(grid, tauhat, 2)
    return FlowState(0.0, grid, uhat, tauhat)


_KIND_CODES = {"global": 1, "blowup": 2, "linear": 3}


def make_initial_data(grid, kind, delta0=0.01, c0=None, eps_tilde0=1.0, seed=0):
    """Deterministic initial states for the three verification scenarios.

    kind="global": total H^2 size exactly delta0, trace floored at a
    positive value shaped by the smooth product-of-sines profile (the
    requested c0 sets the profile; the achieved floor is its rescaled
    image, read it off with trace_field(state)).
    kind="blowup": trace profile with an exact grid-point minimum at
    (pi, pi, pi); c0 (default -2) is the minimum value and must be
    negative; delta0 sizes the random stirring velocity.
    kind="linear": small random mean-free data of total H^2 size delta0
    for propagator comparisons.

    The same (kind, seed) pair always reproduces the same state.
    """
    if kind not in _KIND_CODES:
        raise ValueError(f"unknown data kind {kind!r}; expected one of {sorted(_KIND_CODES)}")
    if delta0 < 0 or (kind != "blowup" and delta0 <= 0):
        raise ValueError(f"amplitude delta0 must be positive, got {delta0}")
    rng = np.random.default_rng([int(seed), _KIND_CODES[kind]])
    if kind == "global":
        return _build_global(grid, delta0, c0, eps_tilde0, rng)
    if kind == "blowup":
        return _build_blowup(grid, delta0, c0, rng)
    return _build_linear(grid, delta0, rng)

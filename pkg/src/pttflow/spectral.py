"""Fourier toolbox for periodic fields on the cube [0, 2pi)^3.

Wavenumbers are integers, mode k contributing c(k) * exp(i k.x).
Coefficients are stored in numpy FFT layout and normalized as

    coeffs = fftn(samples) / n**3,   samples = real(ifftn(coeffs)) * n**3,

so c(k) is the amplitude of exp(i k.x) itself.  All norms carry the
physical volume factor (2pi)^3: ``sobolev_norm(grid, c, 0)**2`` equals the
integral of |f|^2 over the box, e.g. sin(x1) has squared L2 norm 4 pi^3.

Symmetric rank-2 tensors are stored with six components in the order
(11, 12, 13, 22, 23, 33); ``SYM_COMPONENTS`` and ``SYM_WEIGHTS`` encode
the index map and the off-diagonal multiplicity used in tensor norms.

Products of fields alias, so every routine that forms a pointwise product
truncates the result with the 2/3 rule (:func:`dealias`).  The cut
defaults to floor(n/3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

TWO_PI = 2.0 * np.pi
BOX_VOLUME = TWO_PI**3

# Symmetric tensor storage order (row, col) and the multiplicity of each
# stored component inside a full 3x3 contraction.
SYM_COMPONENTS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
SYM_WEIGHTS = np.array([1.0, 2.0, 2.0, 1.0, 2.0, 1.0])
# SYM_FULL[i][j] = storage slot of component (i, j)
SYM_FULL = np.array([[0, 1, 2], [1, 3, 4], [2, 4, 5]])


class MeanValueError(ValueError):
    """An operation that needs a mean-free field received one with mass."""


class Grid:
    """Cubic Fourier lattice with n samples per axis on [0, 2pi)^3.

    Parameters
    ----------
    n : int
        Samples per axis; must be even and at least 8.
    dealias_cut : int, optional
        Largest |k_i| retained by the 2/3 rule.  Defaults to floor(n/3)
        and must not exceed n/2 - 1.
    """

    def __init__(self, n, dealias_cut=None):
        n = int(n)
        if n % 2 != 0 or n < 8:
            raise ValueError(f"grid size must be even and >= 8, got {n}")
        if dealias_cut is None:
            dealias_cut = n // 3
        dealias_cut = int(dealias_cut)
        if not 1 <= dealias_cut <= n // 2 - 1:
            raise ValueError(
                f"dealias_cut must lie in [1, {n // 2 - 1}] for n={n}, got {dealias_cut}"
            )
        self.n = n
        self.dealias_cut = dealias_cut
        self.dx = TWO_PI / n
        k1 = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
        self.kx, self.ky, self.kz = np.meshgrid(k1, k1, k1, indexing="ij")
        self.ksq = self.kx**2 + self.ky**2 + self.kz**2
        cut = dealias_cut
        self.keep = (
            (np.abs(self.kx) <= cut) & (np.abs(self.ky) <= cut) & (np.abs(self.kz) <= cut)
        )
        # forward normalization and dealias mask fused into one multiply
        self._keep_scaled = self.keep.astype(np.float64) / n**3
        # 1/|k|^2 with the k=0 entry zeroed, for projections and Delta^{-1}
        self.inv_ksq = np.zeros_like(self.ksq, dtype=np.float64)
        np.divide(1.0, self.ksq, out=self.inv_ksq, where=self.ksq > 0)

    def mesh(self):
        """Physical coordinate arrays (x1, x2, x3), each shaped (n, n, n)."""
        x = TWO_PI * np.arange(self.n) / self.n
        return np.meshgrid(x, x, x, indexing="ij")

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.n == other.n
            and self.dealias_cut == other.dealias_cut
        )

    def __hash__(self):
        return hash((self.n, self.dealias_cut))

    def __repr__(self):
        return f"Grid(n={self.n}, dealias_cut={self.dealias_cut})"


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A scalar field bundled with its grid; coefficients treated as immutable."""

    grid: Grid
    coeffs: np.ndarray

    @classmethod
    def from_samples(cls, grid, samples):
        return cls(grid, transform_forward(grid, samples))

    def physical(self):
        return transform_backward(self.grid, self.coeffs)

    def norm(self, s=0):
        return sobolev_norm(self.grid, self.coeffs, s)


def _check_shape(grid, arr):
    if arr.shape[-3:] != (grid.n, grid.n, grid.n):
        raise ValueError(
            f"array shape {arr.shape} does not end in ({grid.n},)*3 for this grid"
        )


def transform_forward(grid, samples):
    """Real samples on the grid -> normalized coefficient array.

    Accepts any number of leading batch axes.  Complex input is rejected;
    physical fields here are real by construction.
    """
    samples = np.asarray(samples)
    if np.iscomplexobj(samples):
        raise TypeError("physical samples must be real")
    samples = samples.astype(np.float64, copy=False)
    _check_shape(grid, samples)
    return _fft.fftn(samples, axes=(-3, -2, -1)) / grid.n**3


def transform_backward(grid, coeffs):
    """Coefficients -> real samples (imaginary part discarded)."""
    coeffs = np.asarray(coeffs)
    _check_shape(grid, coeffs)
    return _fft.ifftn(coeffs, axes=(-3, -2, -1)).real * grid.n**3


def derivative(grid, coeffs, axis):
    """Spectral partial derivative along axis 0, 1, or 2 (x1, x2, x3)."""
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1, or 2, got {axis}")
    k = (grid.kx, grid.ky, grid.kz)[axis]
    return 1j * k * coeffs


def gradient(grid, coeffs):
    """Stack of the three partial derivatives, shape (3,) + coeffs.shape."""
    return np.stack([derivative(grid, coeffs, ax) for ax in range(3)])


def divergence(grid, vhat):
    """Divergence of a vector field stored as shape (3, n, n, n)."""
    return 1j * (grid.kx * vhat[0] + grid.ky * vhat[1] + grid.kz * vhat[2])


def div_sym(grid, tauhat):
    """Row divergence of a symmetric tensor in 6-component storage.

    Returns the vector (sum_j d_j tau_ij) as shape (3, n, n, n).
    """
    k = (grid.kx, grid.ky, grid.kz)
    out = np.empty((3,) + tauhat.shape[-3:], dtype=complex)
    for i in range(3):
        acc = 0
        for j in range(3):
            acc = acc + k[j] * tauhat[SYM_FULL[i][j]]
        out[i] = 1j * acc
    return out


def leray_project(grid, vhat):
    """Remove the gradient part of a vector field: vhat - k (k.vhat)/|k|^2.

    The k=0 mode passes through unchanged.  Output satisfies k.vhat = 0 up
    to roundoff on every mode.
    """
    kdotv = grid.kx * vhat[0] + grid.ky * vhat[1] + grid.kz * vhat[2]
    corr = kdotv * grid.inv_ksq
    out = np.empty_like(vhat)
    out[0] = vhat[0] - grid.kx * corr
    out[1] = vhat[1] - grid.ky * corr
    out[2] = vhat[2] - grid.kz * corr
    return out


def inverse_laplacian(grid, coeffs):
    """Solve Delta g = f spectrally; requires a mean-free right-hand side."""
    mean = np.asarray(coeffs)[..., 0, 0, 0]
    worst = np.max(np.abs(mean))
    if worst > 1e-12:
        raise MeanValueError(
            f"inverse_laplacian needs a mean-free field, got mean magnitude {worst:.3e}"
        )
    return -coeffs * grid.inv_ksq


def dealias(grid, coeffs):
    """Zero every mode with any |k_i| above the grid's dealias cut."""
    return coeffs * grid.keep


def forward_dealiased(grid, samples):
    """transform_forward followed by dealias, in one spectral multiply.

    The hot path of the tendency evaluator; identical in exact
    arithmetic to the two-step composition, and bitwise identical when
    n is a power of two (1/n^3 is then an exact binary scale).
    """
    samples = np.asarray(samples)
    if np.iscomplexobj(samples):
        raise TypeError("physical samples must be real")
    samples = samples.astype(np.float64, copy=False)
    _check_shape(grid, samples)
    out = _fft.fftn(samples, axes=(-3, -2, -1))
    out *= grid._keep_scaled
    return out


def sobolev_norm(grid, coeffs, s=0):
    """H^s norm: sqrt((2pi)^3 sum_k (1+|k|^2)^s |c(k)|^2).

    Sums over all leading batch axes, so a stacked field collection gets
    the combined norm.  s=0 reproduces the L2 integral norm over the box.
    """
    if s not in (0, 1, 2, 3):
        raise ValueError(f"Sobolev order must be one of 0,1,2,3, got {s}")
    c = np.asarray(coeffs)
    w = (1.0 + grid.ksq) ** s if s else 1.0
    total = np.sum((c.real**2 + c.imag**2) * w)
    return float(np.sqrt(BOX_VOLUME * total))


def seminorm(grid, coeffs, order):
    """L2 norm of the order-th gradient tensor: weight |k|^(2 order)."""
    c = np.asarray(coeffs)
    w = grid.ksq.astype(np.float64) ** order
    total = np.sum((c.real**2 + c.imag**2) * w)
    return float(np.sqrt(BOX_VOLUME * total))


def grid_max_abs(grid, coeffs):
    """Max of |f| over grid points (lower bound on the true sup)."""
    return float(np.max(np.abs(transform_backward(grid, coeffs))))


def solenoidal_residual(grid, vhat):
    """max_k |k.vhat| / max_k |vhat|, the divergence-free defect of a field."""
    kv = grid.kx * vhat[0] + grid.ky * vhat[1] + grid.kz * vhat[2]
    scale = np.max(np.abs(vhat))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(kv)) / scale)


def _require_solenoidal(grid, uhat, tol=1e-10):
    res = solenoidal_residual(grid, uhat)
    if res > tol:
        raise ValueError(f"velocity is not divergence-free (residual {res:.3e})")


def projection_identity_residuals(grid, uhat, tauhat):
    """Relative residuals of the two transport/stress projection identities.

    Identity 1 rewrites P div(u . grad tau) as
        P(u . grad P div tau) + P(grad u . grad tau)
        - P(grad u . grad Delta^{-1} div div tau),
    identity 2 rewrites P div((tr tau) tau) as
        P((tr tau) P div tau) + P(tau . grad tr tau)
        - P((grad tr tau) Delta^{-1} div div tau).

    Both hold exactly for band-limited fields; the returned values are
    ||LHS - RHS||_{L2} / ||LHS||_{L2} and should sit at roundoff level.
    u must be divergence-free; inputs are dealiased defensively.
    """
    uhat = dealias(grid, np.asarray(uhat))
    tauhat = dealias(grid, np.asarray(tauhat))
    _require_solenoidal(grid, uhat)

    u = transform_backward(grid, uhat)            # (3, n, n, n)
    tau = transform_backward(grid, tauhat)        # (6, n, n, n)
    # d_a of each stored tau component: gtau[a, c] = d_a tau_c
    gtau = np.stack(
        [transform_backward(grid, derivative(grid, tauhat, a)) for a in range(3)]
    )
    # gu[a, b] = d_a u_b
    gu = np.stack(
        [
            np.stack([transform_backward(grid, derivative(grid, uhat[b], a)) for b in range(3)])
            for a in range(3)
        ]
    )

    divtau = div_sym(grid, tauhat)
    pdiv = leray_project(grid, divtau)
    pdiv_phys = transform_backward(grid, pdiv)
    gpdiv = np.stack(
        [transform_backward(grid, derivative(grid, pdiv, a)) for a in range(3)]
    )  # gpdiv[a, i] = d_a (P div tau)_i
    shat = inverse_laplacian(grid, divergence(grid, divtau))
    s_phys = transform_backward(grid, shat)
    gs = np.stack([transform_backward(grid, derivative(grid, shat, a)) for a in range(3)])

    def fwd(prod):
        return dealias(grid, transform_forward(grid, prod))

    # -------- identity 1 --------
    adv = np.stack([fwd(sum(u[m] * gtau[m, c] for m in range(3))) for c in range(6)])
    lhs1 = leray_project(grid, div_sym(grid, adv))

    term1 = np.stack(
        [fwd(sum(u[m] * gpdiv[m, i] for m in range(3))) for i in range(3)]
    )
    term2 = np.stack(
        [
            fwd(sum(gu[j, m] * gtau[m, SYM_FULL[i][j]] for j in range(3) for m in range(3)))
            for i in range(3)
        ]
    )
    term3 = np.stack(
        [fwd(sum(gu[i, m] * gs[m] for m in range(3))) for i in range(3)]
    )
    rhs1 = leray_project(grid, term1 + term2 - term3)
    norm_lhs1 = sobolev_norm(grid, lhs1)
    resid1 = sobolev_norm(grid, lhs1 - rhs1) / max(norm_lhs1, 1e-300)

    # -------- identity 2 --------
    phi = tau[0] + tau[3] + tau[5]
    phihat = tauhat[0] + tauhat[3] + tauhat[5]
    gphi = np.stack(
        [transform_backward(grid, derivative(grid, phihat, a)) for a in range(3)]
    )
    tfull = tau[SYM_FULL]                          # (3, 3, n, n, n)
    scaled = np.stack([fwd(phi * tau[c]) for c in range(6)])
    lhs2 = leray_project(grid, div_sym(grid, scaled))

    t1 = np.stack([fwd(phi * pdiv_phys[i]) for i in range(3)])
    t2 = np.stack([fwd(sum(tfull[i, j] * gphi[j] for j in range(3))) for i in range(3)])
    t3 = np.stack([fwd(gphi[i] * s_phys) for i in range(3)])
    rhs2 = leray_project(grid, t1 + t2 - t3)
    norm_lhs2 = sobolev_norm(grid, lhs2)
    resid2 = sobolev_norm(grid, lhs2 - rhs2) / max(norm_lhs2, 1e-300)

    return resid1, resid2

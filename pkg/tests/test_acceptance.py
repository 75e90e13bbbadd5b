"""Ten end-to-end acceptance checks with fixed tolerances and time budgets.

Each test prints one PASS line with the measured quantities once its
assertions clear.  The two long simulation runs (trace blow-up and the
small-data global run) are computed once in module fixtures and shared
with the structural-invariant check, which audits them continuously
through the integrator's invariant log and an attached particle ensemble.
"""

import time

import numpy as np
import pytest

from conftest import random_state
from pttflow.diagnostics import decay_envelope_check, memory_integral_check
from pttflow.integrate import StepControl, blowup_rate_probe, run
from pttflow.model import ModelParams, make_initial_data, pdivtau_coeffs
from pttflow.semigroup import (
    ENVELOPE_CONSTANT,
    duhamel_defect,
    eigenvalues,
    evolve_linear,
    table_rows,
)
from pttflow.spectral import (
    Grid,
    dealias,
    leray_project,
    projection_identity_residuals,
    sobolev_norm,
    transform_forward,
)
from pttflow.tracking import (
    ParticleTracker,
    blowup_time,
    riccati_trace,
    trace_transport_check,
)


def _announce(capfd, line):
    """Print one verdict line that survives pytest's output capture."""
    with capfd.disabled():
        print(line)


@pytest.fixture(scope="module")
def blowup_run():
    """Blow-up scenario at n=32, dt=5e-4, with a particle ensemble riding along."""
    grid = Grid(32)
    params = ModelParams()
    state = make_initial_data(grid, "blowup", delta0=0.01, seed=0)
    tracker = ParticleTracker(state, params, count=64, seed=1)
    t0 = time.perf_counter()
    outcome = run(
        state, params,
        StepControl(dt=5e-4, t_max=1.0, record_interval=0.05),
        observers=(tracker,),
    )
    return {"outcome": outcome, "tracker": tracker,
            "elapsed": time.perf_counter() - t0}


@pytest.fixture(scope="module")
def global_run():
    """Small-data global scenario at n=32, delta0=0.02, out to t=20."""
    grid = Grid(32)
    params = ModelParams()
    delta0 = 0.02
    state = make_initial_data(grid, "global", delta0=delta0, seed=0)
    tracker = ParticleTracker(state, params, count=28, seed=1)
    t0 = time.perf_counter()
    outcome = run(
        state, params,
        StepControl(dt=2e-3, t_max=20.0, record_interval=0.05),
        observers=(tracker,),
    )
    return {"outcome": outcome, "tracker": tracker, "delta0": delta0,
            "elapsed": time.perf_counter() - t0}


def test_criterion_01_propagator_blocks_match_matrix_exponential(capfd):
    t0 = time.perf_counter()
    lam1, lam2 = eigenvalues(1)
    eig_err = max(abs(lam1 - (-0.5 + 0.5j)), abs(lam2 - (-0.5 - 0.5j)))
    assert eig_err <= 1e-14
    rows = table_rows(range(1, 65), (0.1, 1.0, 5.0))
    max_dev = max(row[-1] for row in rows)
    assert max_dev <= 1e-10
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    _announce(capfd, f"criterion 1: PASS - block deviation {max_dev:.3e} <= 1e-10 over "
          f"|k|^2 in 1..64 x t in (0.1, 1, 5), eigenvalue error {eig_err:.3e} "
          f"<= 1e-14, {elapsed:.2f}s < 1s")


def test_criterion_02_projection_identities_on_random_pairs(capfd):
    t0 = time.perf_counter()
    grid = Grid(32)
    worst = 0.0
    for seed in range(20):
        state = random_state(grid, seed=seed, amp=0.5)
        r1, r2 = projection_identity_residuals(grid, state.uhat, state.tauhat)
        worst = max(worst, r1, r2)
    assert worst <= 1e-10
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    _announce(capfd, f"criterion 2: PASS - both identity residuals <= {worst:.3e} "
          f"(bound 1e-10) over 20 random pairs at n=32, {elapsed:.1f}s < 30s")


def test_criterion_03_blowup_detection_transport_and_rate(blowup_run, capfd):
    t0 = time.perf_counter()
    outcome = blowup_run["outcome"]
    assert outcome.status == "blowup_detected"

    transport = trace_transport_check(blowup_run["tracker"], t_max=0.4)
    assert transport.max_rel_dev <= 1e-2

    report = outcome.blowup
    assert report.prediction.t_star == pytest.approx(0.5, abs=1e-9)
    assert 0.45 <= report.t_detected <= 0.55

    fit = blowup_rate_probe(outcome.trace_history)
    assert -1.1 <= fit.limit <= -0.9

    elapsed = blowup_run["elapsed"] + (time.perf_counter() - t0)
    assert elapsed < 600.0
    _announce(capfd, f"criterion 3: PASS - transport deviation {transport.max_rel_dev:.3e} "
          f"<= 1e-2 to t=0.4, detected t={report.t_detected:.4f} in "
          f"[0.45, 0.55] vs predicted 0.5, rate limit {fit.limit:.4f} in "
          f"[-1.1, -0.9], {elapsed:.0f}s < 600s")


def test_criterion_04_trace_closed_form_matches_rk4(capfd):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2026)
    tr0 = np.where(rng.uniform(size=100) < 0.5,
                   rng.uniform(-3.0, -0.2, size=100),
                   rng.uniform(0.2, 3.0, size=100))
    a = rng.uniform(-1.0, 1.0, size=100)
    b = rng.uniform(0.1, 2.0, size=100)
    t_eval = np.empty(100)
    for i in range(100):
        t_star = blowup_time(tr0[i], a[i], b[i])
        t_eval[i] = 0.3 * t_star if t_star is not None else 2.0
    t_eval = np.minimum(t_eval, 5.0)

    def rhs(y):
        return -(a + b * y) * y

    m = 4000
    dt = t_eval / m
    y = tr0.copy()
    for _ in range(m):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    closed = np.array(
        [riccati_trace(tr0[i], t_eval[i], a[i], b[i]) for i in range(100)]
    )
    max_dev = float(np.max(np.abs(y - closed)))
    assert max_dev <= 1e-10

    # threshold case: just above -a/b the solution relaxes instead of breaking
    a_thr, b_thr, tr_thr = 1.0, 1.0, -0.99
    assert blowup_time(tr_thr, a_thr, b_thr) is None
    yt = tr_thr
    dt_thr = 1e-3
    thr_dev = 0.0
    for step in range(1, 50001):
        f = lambda v: -(a_thr + b_thr * v) * v
        k1 = f(yt)
        k2 = f(yt + 0.5 * dt_thr * k1)
        k3 = f(yt + 0.5 * dt_thr * k2)
        k4 = f(yt + dt_thr * k3)
        yt = yt + dt_thr / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if step % 100 == 0:
            ref = riccati_trace(tr_thr, step * dt_thr, a_thr, b_thr)
            assert np.isfinite(ref)
            assert abs(ref) <= abs(tr_thr)
            thr_dev = max(thr_dev, abs(yt - ref))
    assert thr_dev <= 1e-10

    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    _announce(capfd, f"criterion 4: PASS - closed form vs RK4 deviation {max_dev:.3e} "
          f"<= 1e-10 over 100 random (tr0, a, b), threshold case finite on "
          f"[0, 50] with deviation {thr_dev:.3e}, {elapsed:.2f}s < 1s")


def test_criterion_05_global_run_stays_small_and_decays(global_run, capfd):
    t0 = time.perf_counter()
    outcome = global_run["outcome"]
    delta0 = global_run["delta0"]
    assert outcome.status == "completed"
    assert outcome.t_end >= 20.0 - 1e-9

    peak = max(r.h2_u ** 2 + r.h2_tau ** 2 for r in outcome.records)
    assert peak <= 25.0 * delta0 ** 2

    floor = min(r.min_trtau for r in outcome.records)
    assert floor > 0.0

    env = decay_envelope_check(outcome.records, eps=0.1)
    assert env.passed

    elapsed = global_run["elapsed"] + (time.perf_counter() - t0)
    assert elapsed < 1800.0
    _announce(capfd, f"criterion 5: PASS - completed to t=20, peak H2 energy {peak:.3e} "
          f"<= {25.0 * delta0 ** 2:.3e}, trace floor {floor:.3e} > 0, decay "
          f"envelope held (fitted exponent {env.fitted_exponent:.3f}, max "
          f"ratio {env.max_ratio:.3f}), {elapsed:.0f}s < 1800s")


def test_criterion_06_linear_pair_decays_under_envelope(capfd):
    t0 = time.perf_counter()
    grid = Grid(32)

    def white_solenoidal(tag):
        rng = np.random.default_rng([17, tag])
        coeffs = np.stack([
            transform_forward(grid, rng.standard_normal((grid.n,) * 3))
            for _ in range(3)
        ])
        coeffs = leray_project(grid, coeffs)
        coeffs = np.stack([dealias(grid, coeffs[c]) for c in range(3)])
        coeffs[:, 0, 0, 0] = 0.0
        return coeffs

    uhat = white_solenoidal(1)
    pdhat = white_solenoidal(2)

    def pairnorm(uh, pdh):
        s = sum(sobolev_norm(grid, uh[c], 0) ** 2 for c in range(3))
        s += sum(sobolev_norm(grid, pdh[c], 0) ** 2 for c in range(3))
        return np.sqrt(s)

    n0 = pairnorm(uhat, pdhat)
    ratios = {}
    for t in (0.5, 1.0, 2.0, 4.0, 8.0):
        uh, pdh = evolve_linear(grid, uhat, pdhat, t)
        ratios[t] = pairnorm(uh, pdh) / (np.exp(-0.5 * t) * n0)

    envelope_c = ratios[0.5]
    assert envelope_c <= ENVELOPE_CONSTANT
    seq = [ratios[t] for t in (0.5, 1.0, 2.0, 4.0, 8.0)]
    for earlier, later in zip(seq, seq[1:]):
        assert later <= earlier * (1.0 + 1e-9)

    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    _announce(capfd, f"criterion 6: PASS - envelope constant {envelope_c:.4f} at t=0.5, "
          f"ratio non-growing over t in (1, 2, 4, 8): "
          f"{', '.join(f'{r:.4f}' for r in seq[1:])}, {elapsed:.1f}s < 10s")


def test_criterion_07_duhamel_defect_scales_quadratically(capfd):
    t0 = time.perf_counter()
    grid = Grid(32)
    params = ModelParams()
    defects = []
    for delta0 in (0.01, 0.005):
        state = make_initial_data(grid, "linear", delta0=delta0, seed=0)
        pd0 = pdivtau_coeffs(grid, state.tauhat)
        outcome = run(
            state, params, StepControl(dt=2e-3, t_max=1.0, record_interval=0.25)
        )
        lin_u, lin_pd = evolve_linear(grid, state.uhat, pd0, outcome.t_end)
        defects.append(duhamel_defect(outcome.state, lin_u, lin_pd))
    ratio = defects[0] / defects[1]
    assert 3.2 <= ratio <= 4.8
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0
    _announce(capfd, f"criterion 7: PASS - defect halving ratio {ratio:.4f} in "
          f"[3.2, 4.8] at t=1 (defects {defects[0]:.3e} / {defects[1]:.3e}), "
          f"{elapsed:.0f}s < 300s")


def test_criterion_08_memory_integrals_stay_bounded(capfd):
    t0 = time.perf_counter()
    worst_late = 0.0
    for r in (0.5, 1.0, 2.0):
        for c0 in (0.01, 1.0):
            report = memory_integral_check(r, c0)
            assert report.passed, (r, c0)
            worst_late = max(worst_late, report.max_late)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    _announce(capfd, f"criterion 8: PASS - quadrature/bound ratios non-growing within 5% "
          f"across t in 1..32 for r in (0.5, 1, 2) x c0 in (0.01, 1), worst "
          f"late ratio {worst_late:.3f}, {elapsed:.1f}s < 5s")


def test_criterion_09_structural_invariants_hold_throughout(blowup_run, global_run, capfd):
    for name, bundle in (("blowup", blowup_run), ("global", global_run)):
        inv = bundle["outcome"].invariants
        assert inv.div_max <= 1e-11, name
        assert inv.mean_max == 0.0, name
        assert inv.trq_max <= 1e-12, name
        assert inv.i3_max <= 1e-10, name
        det_dev = max(
            float(np.max(np.abs(s.det - 1.0)))
            for s in bundle["tracker"].history
        )
        assert det_dev <= 1e-6, name
    div_worst = max(b["outcome"].invariants.div_max for b in (blowup_run, global_run))
    trq_worst = max(b["outcome"].invariants.trq_max for b in (blowup_run, global_run))
    i3_worst = max(b["outcome"].invariants.i3_max for b in (blowup_run, global_run))
    _announce(capfd, f"criterion 9: PASS - across both long runs: divergence "
          f"{div_worst:.3e} <= 1e-11, mean exactly 0, trace of the coupling "
          f"{trq_worst:.3e} <= 1e-12, cancellation residual {i3_worst:.3e} "
          f"<= 1e-10, flow-map determinant within 1e-6 of 1")


def test_criterion_10_integrator_self_convergence_order(capfd):
    t0 = time.perf_counter()
    grid = Grid(16)
    params = ModelParams()
    finals = []
    for dt in (4e-3, 2e-3, 1e-3):
        state = make_initial_data(grid, "global", delta0=0.05, seed=7)
        outcome = run(state, params, StepControl(dt=dt, t_max=0.2, record_interval=0.1))
        finals.append(outcome.state)

    def gap(sa, sb):
        d2 = sum(sobolev_norm(grid, sa.uhat[c] - sb.uhat[c], 0) ** 2 for c in range(3))
        d2 += sum(sobolev_norm(grid, sa.tauhat[c] - sb.tauhat[c], 0) ** 2 for c in range(6))
        return np.sqrt(d2)

    g_coarse = gap(finals[0], finals[1])
    g_fine = gap(finals[1], finals[2])
    order = np.log2(g_coarse / g_fine)
    assert order >= 1.9
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0
    _announce(capfd, f"criterion 10: PASS - Richardson order {order:.3f} >= 1.9 from dt "
          f"levels (4e-3, 2e-3, 1e-3) on smooth data, {elapsed:.0f}s < 300s")

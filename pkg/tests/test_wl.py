"""Unit tests for the weight-learning engine: particles, schedule, label
distribution, weight updates, flatness test, and the driver chain."""

import numpy as np
import pytest

from wlposterior.models.ising import IsingKernel, ising_model
from wlposterior.oracle import EnumerableInstance
from wlposterior.wl import (
    DETERMINISTIC,
    FLAT,
    ParticleSet,
    StepSchedule,
    WlChain,
    flat_histogram_test,
    label_distribution,
    next_gamma,
    rao_blackwell_update,
)


def rng_pair(seed):
    a, b = np.random.SeedSequence(seed).spawn(2)
    return (
        np.random.Generator(np.random.PCG64(a)),
        np.random.Generator(np.random.PCG64(b)),
    )


def small_chain(seed=3, d=5, rows=1, cols=2, **kwargs):
    model = ising_model(rows, cols, observed_stats=np.array([1.0]))
    pts = ParticleSet(np.linspace(0.1, 0.9, d))
    rng_k, rng_l = rng_pair(seed)
    return WlChain(model, pts, IsingKernel(rows, cols), rng_k, rng_l, **kwargs)


# ---------------------------------------------------------------- particles


def test_particles_promote_1d_and_freeze():
    ps = ParticleSet(np.array([0.1, 0.2, 0.3]))
    assert ps.points.shape == (3, 1)
    assert ps.count == 3 and ps.dim == 1
    with pytest.raises(ValueError):
        ps.points[0, 0] = 0.5


def test_particles_reject_empty_and_nonfinite():
    with pytest.raises(ValueError):
        ParticleSet(np.empty((0, 2)))
    with pytest.raises(ValueError):
        ParticleSet(np.array([[0.1], [np.inf]]))


def test_uniform_box_particles_land_inside():
    model = ising_model(2, 2)
    rng, _ = rng_pair(11)
    ps = ParticleSet.uniform_box(model, 50, rng)
    assert ps.points.shape == (50, 1)
    assert np.all((ps.points > 0.0) & (ps.points < 1.0))
    ps.validate_inside(model)


def test_gaussian_particles_respect_box_by_redraw():
    # variance much wider than the box forces many redraws
    model = ising_model(2, 2)
    rng, _ = rng_pair(12)
    ps = ParticleSet.gaussian(model, 200, 0.0, 25.0, rng)
    assert ps.points.shape == (200, 1)
    assert np.all((ps.points > 0.0) & (ps.points < 1.0))


def test_validate_inside_raises_for_outside_particle():
    model = ising_model(2, 2)
    ps = ParticleSet(np.array([0.5, 1.5]))
    with pytest.raises(ValueError):
        ps.validate_inside(model)


# ----------------------------------------------------------------- schedule


def test_schedule_validation():
    with pytest.raises(ValueError):
        StepSchedule(gamma=0.0)
    with pytest.raises(ValueError):
        StepSchedule(eps1=-1.0)
    with pytest.raises(ValueError):
        StepSchedule(tail_exponent=0.5)
    with pytest.raises(ValueError):
        StepSchedule(tail_exponent=1.2)
    with pytest.raises(ValueError):
        StepSchedule(phase="warm")
    StepSchedule(tail_exponent=1.0)  # closed right endpoint is legal


def test_next_gamma_keeps_gamma_without_flat_signal():
    s = StepSchedule()
    s2, reset = next_gamma(s, False)
    assert s2 == s and not reset


def test_next_gamma_halves_on_flat():
    s = StepSchedule(gamma=0.5)
    s2, reset = next_gamma(s, True)
    assert reset
    assert s2.phase == FLAT
    assert s2.gamma == 0.25


def test_next_gamma_enters_deterministic_phase():
    # halving 0.002 reaches eps1: the first tail value eps1/1**a is emitted
    s = StepSchedule(gamma=0.002)
    s2, reset = next_gamma(s, True)
    assert reset
    assert s2.phase == DETERMINISTIC
    assert s2.gamma == pytest.approx(1e-3)
    assert s2.n_det == 2


def test_deterministic_tail_values():
    # (deterministic, n_det=1) emits eps1 / 1**0.7 = 1e-3
    s = StepSchedule(gamma=1e-3, phase=DETERMINISTIC, n_det=1)
    s2, reset = next_gamma(s, False)
    assert not reset
    assert s2.gamma == pytest.approx(1e-3)
    assert s2.n_det == 2
    # (deterministic, n_det=100) emits eps1 / 100**0.7
    s = StepSchedule(gamma=1e-3, phase=DETERMINISTIC, n_det=100)
    s2, _ = next_gamma(s, False)
    assert s2.gamma == pytest.approx(3.98107170553497e-05, rel=1e-12)


def test_deterministic_tail_ignores_flat_flag():
    s = StepSchedule(gamma=1e-3, phase=DETERMINISTIC, n_det=5)
    a, _ = next_gamma(s, True)
    b, _ = next_gamma(s, False)
    assert a == b


def test_tail_is_strictly_decreasing_and_slowly_summable():
    s = StepSchedule(gamma=2e-3)
    s, _ = next_gamma(s, True)  # enter the tail
    gammas = []
    for _ in range(2000):
        gammas.append(s.gamma)
        s, _ = next_gamma(s, False)
    gammas = np.array(gammas)
    assert np.all(np.diff(gammas) < 0)
    # exponent in (0.5, 1]: partial sums keep growing, squared sums level off
    n = np.arange(1, gammas.size + 1)
    assert np.allclose(gammas, 1e-3 / n**0.7)


# ------------------------------------------------------- label distribution


def test_label_distribution_two_particle_hand_case():
    # logits th_i * s - c_i with s=2, c=0: softmax([0.2, 1.8])
    pts = ParticleSet(np.array([0.1, 0.9]))
    p = label_distribution(np.array([2.0]), pts, np.zeros(2))
    expect = np.exp([0.2, 1.8])
    expect /= expect.sum()
    assert np.allclose(p, expect, atol=1e-15)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_label_distribution_single_particle_is_one():
    pts = ParticleSet(np.array([0.4]))
    p = label_distribution(np.array([5.0]), pts, np.array([2.0]))
    assert p.shape == (1,)
    assert p[0] == 1.0


def test_label_distribution_survives_extreme_logits():
    pts = ParticleSet(np.array([-600.0, 0.0, 600.0]) [:, None])
    model_stats = np.array([3.0])
    p = label_distribution(model_stats, pts, np.zeros(3))
    assert np.all(np.isfinite(p))
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert p[2] == pytest.approx(1.0)
    assert np.all(p >= 0.0) and np.all(p <= 1.0)


def test_weight_update_adds_exactly_gamma_of_mass():
    rng = np.random.default_rng(5)
    for _ in range(50):
        d = int(rng.integers(1, 30))
        c = rng.normal(size=d) * 10
        logits = rng.normal(size=d)
        p = np.exp(logits - logits.max())
        p /= p.sum()
        gamma = float(rng.uniform(0.001, 1.0))
        c2 = rao_blackwell_update(c, p, gamma)
        assert abs(np.sum(c2 - c) - gamma) < 1e-12


def test_weight_update_shape_mismatch():
    with pytest.raises(ValueError):
        rao_blackwell_update(np.zeros(3), np.full(2, 0.5), 1.0)


# ------------------------------------------------------------ flatness test


def test_flat_histogram_examples():
    assert not flat_histogram_test(np.zeros(4, dtype=np.int64), 0.2)
    assert flat_histogram_test(np.array([60, 40]), 0.2)
    assert not flat_histogram_test(np.array([61, 39]), 0.2)
    assert flat_histogram_test(np.array([1]), 0.2)


def test_flat_histogram_scale_free():
    occ = np.array([60, 40])
    assert flat_histogram_test(occ * 1000, 0.2) == flat_histogram_test(occ, 0.2)


# ------------------------------------------------------------------- chain


def test_chain_rejects_dimension_mismatch():
    model = ising_model(1, 2)
    pts = ParticleSet(np.array([[0.2, 0.3]]))
    rng_k, rng_l = rng_pair(0)
    with pytest.raises(ValueError):
        WlChain(model, pts, IsingKernel(1, 2), rng_k, rng_l)


def test_chain_rejects_outside_particles():
    model = ising_model(1, 2)
    pts = ParticleSet(np.array([0.5, 1.5]))
    rng_k, rng_l = rng_pair(0)
    with pytest.raises(ValueError):
        WlChain(model, pts, IsingKernel(1, 2), rng_k, rng_l)


def test_chain_c0_shape_check():
    model = ising_model(1, 2)
    pts = ParticleSet(np.array([0.2, 0.8]))
    rng_k, rng_l = rng_pair(0)
    with pytest.raises(ValueError):
        WlChain(model, pts, IsingKernel(1, 2), rng_k, rng_l, c0=np.zeros(3))


def test_step_increments_exactly_one_occupancy_entry():
    wl = small_chain(seed=21)
    before = wl.occupancy.copy()
    wl.step()
    diff = wl.occupancy - before
    assert diff.sum() == 1
    assert np.count_nonzero(diff) == 1
    assert wl.iteration == 1


def test_mass_conservation_over_run():
    wl = small_chain(seed=22)
    for _ in range(2000):
        wl.step()
    assert wl.max_mass_residual <= 1e-12


def test_single_particle_c_grows_by_gamma_each_step():
    model = ising_model(1, 2, observed_stats=np.array([1.0]))
    pts = ParticleSet(np.array([0.5]))
    rng_k, rng_l = rng_pair(9)
    wl = WlChain(model, pts, IsingKernel(1, 2), rng_k, rng_l)
    g = wl.schedule.gamma
    c0 = wl.c[0]
    wl.step()
    assert wl.c[0] == pytest.approx(c0 + g, abs=1e-12)
    assert wl.label == 0


def test_halvings_record_passing_occupancies():
    wl = small_chain(seed=23)
    wl.run_flat_phase(500_000)
    assert wl.schedule.phase == DETERMINISTIC
    assert len(wl.halvings) == 10  # gamma: 1 -> 2^-9 flat, then tail
    for h in wl.halvings:
        assert flat_histogram_test(h["occupancy"], wl.schedule.eps2)
        assert h["gamma_after"] in (h["gamma_before"] / 2, wl.schedule.eps1)
    # occupancy was reset after the last halving
    gammas = [h["gamma_before"] for h in wl.halvings]
    assert gammas == sorted(gammas, reverse=True)


def test_recentering_zeroes_mean_and_sets_flag():
    wl = small_chain(seed=24, recenter_every=50)
    for _ in range(49):
        wl.step()
        assert not wl.recentered_now
    wl.step()
    assert wl.recentered_now
    assert abs(wl.c.mean()) < 1e-12
    wl.step()
    assert not wl.recentered_now


def test_recording_starts_with_deterministic_phase():
    from wlposterior.zsurface import SampleStore

    store = SampleStore(5, 1)
    wl = small_chain(seed=25, store=store)
    # force the slow path so recording flags are exercised step by step
    assert not wl.recording
    wl.run_flat_phase(500_000)
    flat_records = store.visits.sum()
    assert flat_records == 0
    assert wl.recording
    for _ in range(100):
        wl.step()
    assert store.visits.sum() == 100


def test_record_from_start_records_flat_phase_too():
    from wlposterior.zsurface import SampleStore

    store = SampleStore(5, 1)
    wl = small_chain(seed=26, store=store, record_from_start=True)
    assert wl.recording
    for _ in range(50):
        wl.step()
    assert store.visits.sum() == 50


def test_run_flat_phase_raises_on_budget_overrun():
    wl = small_chain(seed=27)
    with pytest.raises(RuntimeError, match="did not finish"):
        wl.run_flat_phase(10)


def test_fast_and_slow_flat_phase_agree_statistically():
    """The batched and plain flat loops must learn the same weights."""
    inst = EnumerableInstance.ising(1, 2)
    model = ising_model(1, 2, observed_stats=np.array([1.0]))
    pts = ParticleSet(np.linspace(0.1, 0.9, 5))
    logz = inst.exact_log_z_many(pts.points)
    errs = {}
    for fast in (True, False):
        rng_k, rng_l = rng_pair(31)
        kernel = IsingKernel(1, 2)
        if not fast:
            kernel.fast_spec = None
        wl = WlChain(model, pts, kernel, rng_k, rng_l)
        wl.run_flat_phase(500_000)
        cc = wl.c - wl.c.mean()
        zz = logz - logz.mean()
        errs[fast] = np.max(np.abs(cc - zz))
        assert wl.schedule.phase == DETERMINISTIC
        assert wl.max_mass_residual <= 1e-12
        assert all(
            flat_histogram_test(h["occupancy"], 0.2) for h in wl.halvings
        )
    assert errs[True] < 0.2 and errs[False] < 0.2


def test_fast_flat_phase_is_deterministic_per_seed():
    runs = []
    for _ in range(2):
        wl = small_chain(seed=32)
        wl.run_flat_phase(500_000)
        runs.append((wl.iteration, wl.c.copy(), wl.label, wl.occupancy.copy()))
    assert runs[0][0] == runs[1][0]
    assert np.array_equal(runs[0][1], runs[1][1])
    assert runs[0][2] == runs[1][2]
    assert np.array_equal(runs[0][3], runs[1][3])


def test_frozen_weights_visit_labels_per_conditional():
    """With c frozen at the exact weights, long-run label frequencies match
    the enumerated stationary label law."""
    inst = EnumerableInstance.ising(1, 2)
    model = ising_model(1, 2, observed_stats=np.array([1.0]))
    pts = ParticleSet(np.array([0.2, 0.8]))
    logz = inst.exact_log_z_many(pts.points)
    c0 = logz - logz.mean()

    rng_k, rng_l = rng_pair(33)
    wl = WlChain(
        model,
        pts,
        IsingKernel(1, 2),
        rng_k,
        rng_l,
        schedule=StepSchedule(gamma=1e-3, phase=DETERMINISTIC, n_det=1),
        c0=c0,
        track_mass=False,
    )
    wl.c[:] = c0  # keep weights effectively frozen apart from tiny tail steps
    n = 40_000
    counts = np.zeros(2)
    for _ in range(n):
        wl.step()
    counts = wl.occupancy.astype(float)

    # stationary label law: sum_x pi_i(x) with pi_i prop to kappa-free joint
    # p(i, x) prop exp(<S(x), th_i> - c_i); enumerate the four states
    stats = inst.stats  # distinct stat values with multiplicities
    weights = np.exp(inst.log_counts)
    joint = np.zeros(2)
    for i in range(2):
        joint[i] = np.sum(weights * np.exp(stats @ pts.points[i] - c0[i]))
    target = joint / joint.sum()
    freq = counts / counts.sum()
    se = np.sqrt(target * (1 - target) / n)
    assert np.all(np.abs(freq - target) < 5 * se + 0.01)

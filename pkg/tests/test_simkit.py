import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ccss import local_detect as ld
from ccss import simkit, streams
from ccss.channels import FadingLink

TEN_SENSE = [-4, -2, 0, 2, 3, 5, 10, 8, 7, 11]
TEN_REPORT = [-5, -3, -1, 0, 2, 4, 7, 12, 10, 14]


def small_scenario(**kw):
    base = dict(N=10, local_pf=0.05, system_pf=0.05, seed=3, fading="snapshot")
    base.update(kw)
    return simkit.NetworkScenario.from_db([0, 4, 8], [2, 5, 9], **base)


def test_scenario_validation():
    link = FadingLink.from_snr_db(0, 1.0)
    with pytest.raises(ValueError):
        simkit.NetworkScenario([link], [link, link], 10, 0.05)
    with pytest.raises(ValueError):
        simkit.NetworkScenario([link], [link], 10, 0.05, fading="fast")
    with pytest.raises(ValueError):
        simkit.NetworkScenario([link], [link], 10, 1.5)


def test_h0_energy_is_gamma():
    link = FadingLink.from_snr_db(0, 1.0)
    t = simkit.simulate_energy(link, 10, simkit.H0, 200_000, seed=1)
    tau = ld.threshold_from_pf(10, 1.0, 0.03)
    p = float(np.mean(t > tau))
    assert abs(p - 0.03) <= simkit.ci_half_width(0.03, t.size)
    assert_allclose(t.mean(), 20.0, rtol=0.01)


@pytest.mark.parametrize("m,snr", [(1.0, 4.0), (2.0, 10.0), (1.5, 0.0)])
def test_snapshot_model_matches_closed_form(m, snr):
    link = FadingLink.from_snr_db(snr, m)
    spec = ld.DetectorSpec.from_pf(10, 0.03)
    t = simkit.simulate_energy(link, 10, simkit.H1, 200_000, seed=2, fading="snapshot")
    mc = float(np.mean(t > spec.tau))
    assert abs(mc - ld.pd_closed(link, spec).pd) <= simkit.ci_half_width(mc, t.size) + 0.005


def test_fading_variants_order():
    # per-sample fading averages the envelope over the window; one envelope
    # per window is noisier; the single faded sample carries the least energy
    link = FadingLink.from_snr_db(4.0, 1.0)
    tau = ld.threshold_from_pf(10, 1.0, 0.03)
    pd = {
        f: float(np.mean(simkit.simulate_energy(link, 10, simkit.H1, 20_000, seed=4, fading=f) > tau))
        for f in simkit.FADING_MODELS
    }
    assert pd["per_sample"] > pd["block"] > pd["snapshot"]


def test_block_fading_mean_energy():
    link = FadingLink.from_snr_db(3.0, 2.0)
    t = simkit.simulate_energy(link, 10, simkit.H1, 100_000, seed=5, fading="block")
    # E[t] = N (E h^2 + 2 sigma_n^2)
    assert_allclose(t.mean(), 10 * (link.omega + 2.0), rtol=0.01)


def test_streams_are_keyed_by_block():
    a = streams.stream(7, streams.TAG_SENSE_H1, 2, 5).standard_normal(4)
    b = streams.stream(7, streams.TAG_SENSE_H1, 2, 5).standard_normal(4)
    c = streams.stream(7, streams.TAG_SENSE_H1, 2, 6).standard_normal(4)
    assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert list(streams.block_sizes(2500)) == [1000, 1000, 500]


def test_reports_independent_of_worker_count():
    scn = small_scenario()
    u1, y1 = simkit.simulate_reports(scn, simkit.H1, 3000, workers=1)
    u2, y2 = simkit.simulate_reports(scn, simkit.H1, 3000, workers=2)
    assert_array_equal(u1, u2)
    assert_array_equal(y1, y2)


def test_estimate_partition_invariance():
    scn = small_scenario()
    ev = simkit.LocalDetection(1)
    a = simkit.estimate(scn, simkit.H1, ev, 4000, workers=1)
    b = simkit.estimate(scn, simkit.H1, ev, 4000, workers=3)
    assert (a.hits, a.trials) == (b.hits, b.trials)


def test_estimate_of_local_pf():
    scn = simkit.NetworkScenario.from_db([0], [0], N=10, local_pf=0.03, seed=0)
    est = simkit.estimate(scn, simkit.H0, simkit.LocalDetection(0), 100_000)
    assert abs(est.estimate - 0.03) <= est.ci95 + 1e-9
    with pytest.raises(ValueError):
        simkit.estimate(scn, simkit.H0, simkit.LocalDetection(0), 10)


def test_run_trial_reproducible():
    scn = small_scenario()
    a = simkit.run_trial(scn, simkit.H1, np.random.default_rng(12))
    b = simkit.run_trial(scn, simkit.H1, np.random.default_rng(12))
    assert_array_equal(a.reports, b.reports)
    assert a.statistic == b.statistic and a.decision == b.decision


def test_trivial_extremes():
    # a huge threshold silences every SU; an overwhelming signal fires them all
    quiet = small_scenario(local_pf=1e-12)
    u, _ = simkit.simulate_reports(quiet, simkit.H0, 1000)
    assert np.all(u == -1)
    loud = simkit.NetworkScenario.from_db([60, 60], [0, 0], N=10, local_pf=0.05, fading="block")
    u, _ = simkit.simulate_reports(loud, simkit.H1, 1000)
    assert np.all(u == 1)


def test_counting_rule_matches_poisson_binomial():
    scn = small_scenario()
    rows = simkit.experiment_system_roc(scn, ("counting",), trials=50_000)
    for r in rows:
        assert abs(r["pd_mc"] - r["pd_analytic"]) <= 1.96 * np.sqrt(0.25 / 50_000) + 0.005
        assert abs(r["pf_mc"] - r["pf_analytic"]) <= 1.96 * np.sqrt(0.25 / 50_000) + 0.005


def test_calibrated_lambda_holds_out():
    scn = small_scenario(system_pf=0.02)
    cal = simkit.calibrate_lambda(scn, 0.02, 100_000)
    held = simkit.collect_statistics(simkit.replace(scn, seed=scn.seed + 100), simkit.H0, ("lrt",), 100_000)["lrt"]
    achieved = float(np.mean(held > cal.log_lambda))
    assert abs(achieved - 0.02) <= simkit.ci_half_width(0.02, 100_000) + 0.002


def test_local_roc_rows():
    link = FadingLink.from_snr_db(4.0, 1.0)
    rows = simkit.experiment_local_roc(link, 10, [0.01, 0.1, 0.5], trials=20_000, fading="snapshot")
    assert len(rows) == 3
    for r in rows:
        assert abs(r["pd_mc"] - r["pd_analytic"]) <= r["mc_ci"] + 0.01
    mc = simkit.experiment_local_roc(link, 10, [0.1], trials=20_000, model="mc")
    assert mc[0]["pd_analytic"] == mc[0]["pd_mc"]


def test_heterogeneous_links_help():
    grid = [0.01, 0.02, 0.05, 0.1, 0.2]
    base = simkit.NetworkScenario.from_db(TEN_SENSE, TEN_REPORT, N=20, local_pf=0.03, fading="snapshot")
    mixed = simkit.NetworkScenario.from_db(
        TEN_SENSE, TEN_REPORT, N=20, local_pf=0.03, fading="snapshot",
        sensing_m=[1] * 6 + [2] * 4, reporting_m=[1] * 6 + [2] * 4,
    )
    out = []
    for scn in (base, mixed):
        h0 = simkit.collect_statistics(scn, simkit.H0, ("lrt",), 20_000)["lrt"]
        h1 = simkit.collect_statistics(scn, simkit.H1, ("lrt",), 20_000)["lrt"]
        out.append(simkit.roc_at(h0, h1, grid)[2])
    assert np.all(out[1] >= out[0])


def test_more_sus_help_at_matched_mean():
    ten = simkit.NetworkScenario.from_db(TEN_SENSE, TEN_REPORT, N=20, local_pf=0.03, fading="snapshot")
    five = simkit.NetworkScenario.from_db([-2, 2, 5, 8, 7], [-3, 0, 4, 12, 10], N=20, local_pf=0.03, fading="snapshot")
    grid = [0.01, 0.02, 0.05, 0.1, 0.2]
    res = []
    for scn in (ten, five):
        h0 = simkit.collect_statistics(scn, simkit.H0, ("lrt",), 20_000)["lrt"]
        h1 = simkit.collect_statistics(scn, simkit.H1, ("lrt",), 20_000)["lrt"]
        res.append(simkit.roc_at(h0, h1, grid)[2])
    assert np.all(res[0] > res[1])


def test_shift_sensing_mean():
    scn = simkit.NetworkScenario.from_db(TEN_SENSE, TEN_REPORT, N=20, local_pf=0.03)
    moved = simkit.shift_sensing_mean(scn, 5.0)
    assert_allclose(np.mean([l.avg_snr_db for l in moved.sensing]), 5.0, atol=1e-12)
    assert_allclose([l.avg_snr_db for l in moved.sensing], np.array(TEN_SENSE) + 1.0, atol=1e-12)


def test_l_sweep_reports_optimum():
    rows, l_opt = simkit.experiment_l_sweep(12, 0.7, 0.1)
    best = min(rows, key=lambda r: r["p_tot"])
    assert best["l"] == l_opt

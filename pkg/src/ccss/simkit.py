"""Monte Carlo harness for the PU -> SU -> FC chain.

Trials are grouped into fixed-size blocks.  Every (hypothesis, SU, block)
triple owns a counter-based stream, so a block's samples do not depend on
which worker simulates it or in what order.  Tallies are merged by plain
addition and sample arrays by concatenation in block order, so results are
bitwise identical for any worker count.

Three sensing-fading variants are available:

``block``
    one envelope per sensing window, random phase per sample;
``per_sample``
    an independent envelope and phase for every sample;
``snapshot``
    the window holds ``N`` noise-only samples and, under H1, one further
    sample carrying a single faded signal draw.  This is the statistic whose
    law is the negative-binomial gamma mixture behind the closed-form
    detection probabilities.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial

import numpy as np

from . import fusion, local_detect, streams, sysperf
from .channels import FadingLink, sample_nakagami_envelope

__all__ = [
    "FADING_MODELS",
    "NetworkScenario",
    "TrialOutcome",
    "EstimateWithCI",
    "ci_half_width",
    "simulate_energy",
    "simulate_reports",
    "run_trial",
    "estimate",
    "fusion_statistics",
    "collect_statistics",
    "calibrate_lambda",
    "experiment_local_roc",
    "experiment_system_roc",
    "experiment_pd_vs_snr",
    "experiment_l_sweep",
    "roc_at",
    "shift_sensing_mean",
    "LocalDetection",
    "FusionAbove",
    "CountAtLeast",
]

FADING_MODELS = ("block", "per_sample", "snapshot")
H0, H1 = 0, 1


def ci_half_width(p: float, n: int) -> float:
    return 1.96 * math.sqrt(max(p * (1.0 - p), 0.0) / n)


@dataclass(frozen=True)
class EstimateWithCI:
    estimate: float
    trials: int
    hits: int

    @property
    def ci95(self) -> float:
        return ci_half_width(self.estimate, self.trials)


@dataclass(frozen=True)
class NetworkScenario:
    """K SUs with their sensing and reporting links.

    ``local_pf`` sets every SU's threshold; ``pd_model`` chooses the analytic
    detection probabilities the LRT is built from.
    """

    sensing: tuple
    reporting: tuple
    N: int
    local_pf: float
    system_pf: float = 0.02
    seed: int = 0
    fading: str = "block"
    pd_model: str = "closed"
    rule: str = "lrt"
    J: int | None = None
    pd_override: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "sensing", tuple(self.sensing))
        object.__setattr__(self, "reporting", tuple(self.reporting))
        if len(self.sensing) < 1:
            raise ValueError("a scenario needs at least one SU")
        if len(self.sensing) != len(self.reporting):
            raise ValueError("sensing and reporting links must pair up")
        if self.fading not in FADING_MODELS:
            raise ValueError(f"fading must be one of {FADING_MODELS}")
        if not 0.0 < self.local_pf < 1.0 or not 0.0 < self.system_pf < 1.0:
            raise ValueError("false-alarm targets must lie in (0, 1)")
        fusion.FusionRule(self.rule, self.J)

    @classmethod
    def from_db(
        cls,
        sensing_db,
        reporting_db,
        *,
        N: int,
        local_pf: float,
        sensing_m=1.0,
        reporting_m=1.0,
        noise_sigma2: float = 1.0,
        **kw,
    ) -> "NetworkScenario":
        K = len(sensing_db)
        sm = np.broadcast_to(np.asarray(sensing_m, dtype=float), (K,))
        rm = np.broadcast_to(np.asarray(reporting_m, dtype=float), (K,))
        sensing = tuple(FadingLink.from_snr_db(s, m, noise_sigma2) for s, m in zip(sensing_db, sm))
        reporting = tuple(FadingLink.from_snr_db(s, m, noise_sigma2) for s, m in zip(reporting_db, rm))
        return cls(sensing, reporting, N, local_pf, **kw)

    @property
    def K(self) -> int:
        return len(self.sensing)

    @property
    def taus(self) -> np.ndarray:
        return np.array(
            [local_detect.threshold_from_pf(self.N, l.noise_sigma2, self.local_pf) for l in self.sensing]
        )

    def local_pds(self) -> np.ndarray:
        if self.pd_override is not None:
            return np.array(self.pd_override, dtype=float)
        out = []
        for link, tau in zip(self.sensing, self.taus):
            spec = local_detect.DetectorSpec(self.N, self.local_pf, float(tau), link.noise_sigma2)
            out.append(local_detect.local_pd(link, spec, self.pd_model).pd)
        return np.array(out)

    def local_pfs(self) -> np.ndarray:
        return np.full(self.K, self.local_pf)


@dataclass(frozen=True)
class TrialOutcome:
    hypothesis: int
    decisions: np.ndarray
    reports: np.ndarray
    statistic: float
    decision: int


# ---------------------------------------------------------------------------
# Sample-level simulation
# ---------------------------------------------------------------------------


def _noise(rng: np.random.Generator, sigma2: float, shape) -> np.ndarray:
    w = rng.standard_normal(tuple(shape) + (2,))
    return math.sqrt(sigma2) * (w[..., 0] + 1j * w[..., 1])


def _energy(rng: np.random.Generator, link: FadingLink, N: int, hyp: int, n: int, fading: str) -> np.ndarray:
    """Energy statistics of ``n`` windows drawn from ``rng`` in a fixed order."""
    w = _noise(rng, link.noise_sigma2, (n, N))
    if hyp == H0:
        return np.sum(w.real**2 + w.imag**2, axis=1)
    if fading == "snapshot":
        h = sample_nakagami_envelope(link, rng, n)
        theta = rng.uniform(0.0, 2.0 * math.pi, n)
        w0 = _noise(rng, link.noise_sigma2, (n,))
        x0 = h * np.exp(1j * theta) + w0
        return np.sum(w.real**2 + w.imag**2, axis=1) + (x0.real**2 + x0.imag**2)
    if fading == "block":
        h = sample_nakagami_envelope(link, rng, (n, 1))
    else:
        h = sample_nakagami_envelope(link, rng, (n, N))
    theta = rng.uniform(0.0, 2.0 * math.pi, (n, N))
    x = h * np.exp(1j * theta) + w
    return np.sum(x.real**2 + x.imag**2, axis=1)


def _sense_tag(hyp: int) -> int:
    return streams.TAG_SENSE_H1 if hyp == H1 else streams.TAG_SENSE_H0


def _energy_block(link, N, hyp, fading, seed, su, size_and_index):
    size, index = size_and_index
    rng = streams.stream(seed, _sense_tag(hyp), su, index)
    return _energy(rng, link, N, hyp, size, fading)


def _map_blocks(fn, trials: int, workers: int):
    jobs = [(size, i) for i, size in enumerate(streams.block_sizes(trials))]
    if workers <= 1 or len(jobs) == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def simulate_energy(
    link: FadingLink,
    N: int,
    hyp: int,
    trials: int,
    *,
    seed: int = 0,
    fading: str = "block",
    su: int = 0,
    workers: int = 1,
) -> np.ndarray:
    """Energy statistics of ``trials`` sensing windows at one SU."""
    if fading not in FADING_MODELS:
        raise ValueError(f"fading must be one of {FADING_MODELS}")
    fn = partial(_energy_block, link, N, hyp, fading, seed, su)
    return np.concatenate(_map_blocks(fn, trials, workers))


def _reports_for(scn: NetworkScenario, hyp: int, size: int, index: int):
    K = scn.K
    u = np.empty((size, K), dtype=np.int8)
    y = np.empty((size, K))
    taus = scn.taus
    for k in range(K):
        rng = streams.stream(scn.seed, _sense_tag(hyp), k, index)
        t = _energy(rng, scn.sensing[k], scn.N, hyp, size, scn.fading)
        u[:, k] = np.where(t > taus[k], 1, -1)
        rep = scn.reporting[k]
        h = sample_nakagami_envelope(rep, rng, size)
        g = math.sqrt(rep.noise_sigma2) * rng.standard_normal(size)
        y[:, k] = u[:, k] * h + g
    return u, y


def _reports_block(scn, hyp, size_and_index):
    size, index = size_and_index
    return _reports_for(scn, hyp, size, index)


def simulate_reports(scn: NetworkScenario, hyp: int, trials: int, *, workers: int = 1):
    """Local decisions ``u`` and FC observations ``y``, each of shape (trials, K)."""
    parts = _map_blocks(partial(_reports_block, scn, hyp), trials, workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def run_trial(scn: NetworkScenario, hypothesis: int, rng: np.random.Generator, *, log_lambda: float = 0.0) -> TrialOutcome:
    """Simulate one window end to end with an explicit stream ``rng``."""
    K = scn.K
    u = np.empty(K, dtype=np.int8)
    y = np.empty(K)
    for k in range(K):
        t = _energy(rng, scn.sensing[k], scn.N, hypothesis, 1, scn.fading)[0]
        u[k] = 1 if t > scn.taus[k] else -1
        rep = scn.reporting[k]
        h = sample_nakagami_envelope(rep, rng)
        y[k] = u[k] * h + math.sqrt(rep.noise_sigma2) * rng.standard_normal()
    stat = float(fusion_statistics(scn, y[None, :], scn.rule)[0])
    if scn.rule == "counting":
        decision = int(fusion.counting_fuse(np.where(y >= 0, 1, -1), scn.J))
    else:
        decision = 1 if stat > log_lambda else -1
    return TrialOutcome(hypothesis, u, y, stat, decision)


# ---------------------------------------------------------------------------
# Statistics and estimation
# ---------------------------------------------------------------------------


def fusion_statistics(scn: NetworkScenario, y: np.ndarray, rule: str, pds=None) -> np.ndarray:
    """Per-trial FC statistic for ``rule``; LRT values are log L."""
    if rule == "lrt":
        pd = scn.local_pds() if pds is None else pds
        return fusion.log_lrt_statistic(y, pd, scn.local_pfs(), scn.reporting)
    if rule == "egc":
        return fusion.egc_statistic(y)
    if rule == "mrc":
        return fusion.mrc_statistic(y, fusion.mrc_weights(scn.reporting))
    if rule == "counting":
        return fusion.sign_count(y).astype(float)
    raise ValueError(f"unknown rule {rule!r}")


@dataclass(frozen=True)
class LocalDetection:
    """Event: SU ``k`` declares the band busy."""

    k: int

    def __call__(self, scn, u, y):
        return u[:, self.k] == 1


@dataclass(frozen=True)
class FusionAbove:
    """Event: the FC statistic of ``rule`` exceeds ``threshold``."""

    rule: str
    threshold: float

    def __call__(self, scn, u, y):
        return fusion_statistics(scn, y, self.rule) > self.threshold


@dataclass(frozen=True)
class CountAtLeast:
    """Event: at least ``J`` non-negative reports."""

    J: int

    def __call__(self, scn, u, y):
        return fusion.sign_count(y) >= self.J


def _tally_block(scn, hyp, event, size_and_index):
    size, index = size_and_index
    u, y = _reports_for(scn, hyp, size, index)
    return int(np.count_nonzero(event(scn, u, y))), size


def estimate(scn: NetworkScenario, hypothesis: int, event, trials: int, *, workers: int = 1) -> EstimateWithCI:
    """Frequency of ``event`` over ``trials`` simulated windows."""
    if trials < 1000:
        raise ValueError("estimate needs at least 1000 trials")
    parts = _map_blocks(partial(_tally_block, scn, hypothesis, event), trials, workers)
    hits = sum(p[0] for p in parts)
    n = sum(p[1] for p in parts)
    return EstimateWithCI(hits / n, n, hits)


def _stats_block(scn, hyp, rules, size_and_index):
    size, index = size_and_index
    u, y = _reports_for(scn, hyp, size, index)
    return {r: fusion_statistics(scn, y, r) for r in rules}


def collect_statistics(scn: NetworkScenario, hyp: int, rules, trials: int, *, workers: int = 1) -> dict:
    """FC statistics for each rule on common simulated reports."""
    rules = tuple(rules)
    parts = _map_blocks(partial(_stats_block, scn, hyp, rules), trials, workers)
    return {r: np.concatenate([p[r] for p in parts]) for r in rules}


def calibrate_lambda(scn: NetworkScenario, target_pf: float, trials: int, *, rule: str = "lrt", workers: int = 1) -> fusion.Calibration:
    """Calibrate the FC threshold for ``rule`` on simulated H0 windows."""
    stats = collect_statistics(scn, H0, (rule,), trials, workers=workers)[rule]
    return fusion.calibrate_lambda(stats, target_pf, rng=streams.stream(scn.seed, streams.TAG_BOOTSTRAP))


def roc_at(h0: np.ndarray, h1: np.ndarray, pf_grid) -> tuple:
    """(thresholds, achieved P_F, P_D) of a statistic at target false-alarm rates."""
    s0 = np.sort(h0)
    thr, pf, pd = [], [], []
    for p in pf_grid:
        t = fusion._upper_quantile(s0, float(p))
        thr.append(t)
        pf.append(float(np.mean(h0 > t)))
        pd.append(float(np.mean(h1 > t)))
    return np.array(thr), np.array(pf), np.array(pd)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def experiment_local_roc(
    link: FadingLink,
    N: int,
    pf_grid,
    *,
    trials: int = 10_000,
    seed: int = 0,
    fading: str = "snapshot",
    model: str = "closed",
    workers: int = 1,
) -> list[dict]:
    """Rows of (pf, tau, analytic pd, complex-model pd, Monte Carlo pd, CI)."""
    grid = local_detect._check_grid(pf_grid)
    t1 = simulate_energy(link, N, H1, trials, seed=seed, fading=fading, workers=workers)
    rows = []
    for pf in grid:
        spec = local_detect.DetectorSpec.from_pf(N, pf, link.noise_sigma2)
        pd_mc = float(np.mean(t1 > spec.tau))
        if model == "mc":
            analytic = pd_mc
        else:
            analytic = local_detect.local_pd(link, spec, model).pd
        rows.append(
            {
                "pf": float(pf),
                "tau": spec.tau,
                "pd_analytic": analytic,
                "pd_complex_model": local_detect.pd_complex_regime(link, spec).pd,
                "pd_mc": pd_mc,
                "mc_ci": ci_half_width(pd_mc, trials),
            }
        )
    return rows


def _success_pair(pd: float, pf: float, link: FadingLink) -> sysperf.SuccessProbs:
    if link.m == 1.0:
        return sysperf.success_probs_m1(pd, pf, link)
    return sysperf.success_probs(pd, pf, link)


def experiment_system_roc(
    scn: NetworkScenario,
    rules=("lrt", "egc", "mrc", "counting"),
    pf_grid=(0.01, 0.02, 0.05, 0.1, 0.2),
    *,
    trials: int = 10_000,
    workers: int = 1,
) -> list[dict]:
    """System ROC rows for each rule.

    Continuous rules are swept over ``pf_grid`` with thresholds taken from
    the simulated H0 statistics.  The counting rule is swept over every
    count threshold and carries its Poisson-binomial prediction.
    """
    rules = tuple(rules)
    h0 = collect_statistics(scn, H0, rules, trials, workers=workers)
    h1 = collect_statistics(scn, H1, rules, trials, workers=workers)
    rows = []
    for r in rules:
        if r == "counting":
            pds = scn.local_pds()
            sp = [_success_pair(pd, scn.local_pf, l) for pd, l in zip(pds, scn.reporting)]
            for J in range(scn.K + 1):
                pd_mc = float(np.mean(h1[r] >= J))
                rows.append(
                    {
                        "rule": r,
                        "threshold": float(J),
                        "pf_analytic": sysperf.poisson_binomial_upper_tail([s.p0 for s in sp], J),
                        "pd_analytic": sysperf.poisson_binomial_upper_tail([s.p1 for s in sp], J),
                        "pf_mc": float(np.mean(h0[r] >= J)),
                        "pd_mc": pd_mc,
                        "pd_ci": ci_half_width(pd_mc, trials),
                    }
                )
            continue
        thr, pf, pd = roc_at(h0[r], h1[r], pf_grid)
        for t, a, b in zip(thr, pf, pd):
            rows.append(
                {
                    "rule": r,
                    "threshold": float(t),
                    "pf_analytic": None,
                    "pd_analytic": None,
                    "pf_mc": float(a),
                    "pd_mc": float(b),
                    "pd_ci": ci_half_width(float(b), trials),
                }
            )
    return rows


def shift_sensing_mean(scn: NetworkScenario, mean_db: float) -> NetworkScenario:
    """Shift every sensing SNR by the same dB offset so their dB mean is ``mean_db``."""
    cur = np.array([l.avg_snr_db for l in scn.sensing])
    delta = mean_db - float(np.mean(cur))
    sensing = tuple(FadingLink.from_snr_db(s + delta, l.m, l.noise_sigma2) for s, l in zip(cur, scn.sensing))
    return replace(scn, sensing=sensing)


def experiment_pd_vs_snr(
    scn: NetworkScenario,
    mean_snr_db,
    *,
    trials: int = 10_000,
    workers: int = 1,
) -> list[dict]:
    """Cooperative LRT detection probability against the mean sensing SNR.

    The non-cooperative column is one SU at the mean SNR with the local
    false-alarm target, from the analytic model.
    """
    rows = []
    for mean in mean_snr_db:
        s = shift_sensing_mean(scn, float(mean))
        h0 = collect_statistics(s, H0, ("lrt",), trials, workers=workers)["lrt"]
        h1 = collect_statistics(s, H1, ("lrt",), trials, workers=workers)["lrt"]
        thr, pf, pd = roc_at(h0, h1, [s.system_pf])
        ref = FadingLink.from_snr_db(float(mean), s.sensing[0].m, s.sensing[0].noise_sigma2)
        spec = local_detect.DetectorSpec.from_pf(s.N, s.local_pf, ref.noise_sigma2)
        rows.append(
            {
                "mean_snr_db": float(mean),
                "pd_local": local_detect.local_pd(ref, spec, s.pd_model).pd,
                "pf_mc": float(pf[0]),
                "pd_mc": float(pd[0]),
                "pd_ci": ci_half_width(float(pd[0]), trials),
            }
        )
    return rows


def experiment_l_sweep(K: int, p1: float, p0: float) -> tuple[list[dict], int]:
    """P_D, P_F and P_TOT for every count threshold l, plus the optimum."""
    rows = []
    for l in range(1, K + 1):
        op = sysperf.operating_point(K, l, p1, p0)
        rows.append({"l": l, "pd": op.P_D, "pf": op.P_F, "p_tot": op.P_TOT})
    return rows, sysperf.optimal_l(K, p1, p0)

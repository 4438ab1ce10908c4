"""Command-line runner for the sensing, fusion and complexity experiments.

Every command reads a YAML scenario, validates it before doing any work and
writes one table as CSV (default) or JSON.  Exit status is 0 on success,
1 when ``validate`` finds a failing check and 2 on any scenario or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import local_detect, nfg, simkit, streams, sysperf
from .channels import FadingLink

__all__ = ["ScenarioFile", "ConfigError", "load_scenario", "format_table", "read_table", "main"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
SIG_DIGITS = 9
RULES = ("lrt", "egc", "mrc", "counting")


class ConfigError(Exception):
    """Scenario could not be read or failed schema validation."""


# ---------------------------------------------------------------------------
# Scenario schema
# ---------------------------------------------------------------------------


def _check_m(v):
    vals = v if isinstance(v, list) else [v]
    for m in vals:
        if not m >= 0.5:
            raise ValueError(f"fading parameter m must be >= 1/2, got {m}")
    return v


class GridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pf: list[float] = Field(default_factory=lambda: [0.01, 0.02, 0.05, 0.1, 0.2])
    K: list[int] = Field(default_factory=lambda: [1])
    card: list[int] = Field(default_factory=lambda: [2])

    @field_validator("pf")
    @classmethod
    def _pf_open(cls, v):
        if not v:
            raise ValueError("pf grid must not be empty")
        for p in v:
            if not 0.0 < p < 1.0:
                raise ValueError(f"pf grid values must lie in (0, 1), got {p}")
        return v

    @field_validator("K", "card")
    @classmethod
    def _positive(cls, v):
        if not v or any(x < 1 for x in v):
            raise ValueError("values must be positive integers")
        return v


class ScenarioFile(BaseModel):
    """Scenario document: network, local detector and experiment grid."""

    model_config = ConfigDict(extra="forbid")

    N: int = Field(ge=1)
    local_pf: float = Field(gt=0.0, lt=1.0)
    system_pf: float = Field(default=0.02, gt=0.0, lt=1.0)
    sensing_snr_db: list[float] = Field(min_length=1)
    reporting_snr_db: list[float] | None = None
    sensing_m: float | list[float] = 1.0
    reporting_m: float | list[float] = 1.0
    noise_sigma2: float = Field(default=1.0, gt=0.0)
    fading: Literal["block", "per_sample", "snapshot"] = "block"
    rules: list[Literal["lrt", "egc", "mrc", "counting"]] = Field(default_factory=lambda: list(RULES))
    grid: GridSpec = Field(default_factory=GridSpec)
    trials: int = Field(default=10_000, ge=1000)
    seed: int = Field(default=0, ge=0)
    model: Literal["phi2", "closed", "complex", "mc"] = "closed"
    workers: int = Field(default=1, ge=1)

    @field_validator("sensing_m", "reporting_m")
    @classmethod
    def _m_domain(cls, v):
        return _check_m(v)

    @model_validator(mode="after")
    def _lengths(self):
        K = len(self.sensing_snr_db)
        if self.reporting_snr_db is not None and len(self.reporting_snr_db) != K:
            raise ValueError("reporting_snr_db must have one entry per SU")
        for name in ("sensing_m", "reporting_m"):
            v = getattr(self, name)
            if isinstance(v, list) and len(v) != K:
                raise ValueError(f"{name} must be a scalar or have one entry per SU")
        return self

    @property
    def K(self) -> int:
        return len(self.sensing_snr_db)

    def _ms(self, v) -> list[float]:
        return list(v) if isinstance(v, list) else [float(v)] * self.K

    def sensing_links(self) -> list[FadingLink]:
        return [
            FadingLink.from_snr_db(s, m, self.noise_sigma2)
            for s, m in zip(self.sensing_snr_db, self._ms(self.sensing_m))
        ]

    def reporting_links(self) -> list[FadingLink]:
        if self.reporting_snr_db is None:
            raise ConfigError("this command needs reporting_snr_db")
        return [
            FadingLink.from_snr_db(s, m, self.noise_sigma2)
            for s, m in zip(self.reporting_snr_db, self._ms(self.reporting_m))
        ]

    def network(self) -> simkit.NetworkScenario:
        pd_model = "closed" if self.model == "mc" else self.model
        return simkit.NetworkScenario(
            self.sensing_links(),
            self.reporting_links(),
            self.N,
            self.local_pf,
            system_pf=self.system_pf,
            seed=self.seed,
            fading=self.fading,
            pd_model=pd_model,
        )


def _node_at(node, loc):
    """Deepest YAML node reachable along a pydantic error location."""
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    break
            if nxt is None:
                break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
    return node


def _locate_key(node, loc):
    """Line of an unknown key, which lives on the mapping key node."""
    parent = _node_at(node, loc[:-1])
    if isinstance(parent, yaml.MappingNode):
        for k, _ in parent.value:
            if k.value == loc[-1]:
                return k
    return parent


def _available_presets() -> list[str]:
    root = resources.files("ccss") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def _read_source(path: str) -> tuple[str, str]:
    p = Path(path)
    if p.is_file():
        return p.read_text(), str(p)
    name = path[:-5] if path.endswith(".yaml") else path
    if name in _available_presets():
        res = resources.files("ccss") / "presets" / f"{name}.yaml"
        return res.read_text(), f"preset:{name}"
    raise ConfigError(f"{path}: no such scenario file or preset")


def load_scenario(path: str, overrides: dict | None = None) -> ScenarioFile:
    """Parse and validate a scenario; errors carry the offending line number."""
    text, label = _read_source(path)
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{label}: malformed YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{label}: scenario must be a mapping")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return ScenarioFile.model_validate(data)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = tuple(err["loc"])
            node = _locate_key(root, loc) if err["type"] == "extra_forbidden" else _node_at(root, loc)
            line = node.start_mark.line + 1 if node is not None else 0
            where = ".".join(str(x) for x in loc) or "<root>"
            msg = err["msg"].removeprefix("Value error, ")
            lines.append(f"{label}:{line}: {where}: {msg}")
        raise ConfigError("\n".join(lines)) from None


# ---------------------------------------------------------------------------
# Table output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{SIG_DIGITS}g}"
    return str(v)


def _json_value(v):
    if v is None or isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(f"{float(v):.{SIG_DIGITS}g}")


def format_table(columns, rows, *, note: str = "", fmt: str = "csv") -> str:
    """Render rows as CSV with a leading ``#`` provenance line, or as JSON."""
    if fmt == "json":
        doc = {
            "note": note,
            "columns": list(columns),
            "rows": [{c: _json_value(r.get(c)) for c in columns} for r in rows],
        }
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    if note:
        buf.write(f"# {note}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _parse_cell(s: str):
    if s == "":
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_table(text: str) -> tuple[list[str], list[dict]]:
    """Inverse of ``format_table`` for CSV output."""
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.reader(body)
    columns = next(reader)
    rows = [{c: _parse_cell(v) for c, v in zip(columns, rec)} for rec in reader]
    return columns, rows


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _empirical_pds(sc: ScenarioFile) -> np.ndarray:
    """Local detection probabilities estimated by simulation, one per SU."""
    net = sc.network()
    out = []
    for k, (link, tau) in enumerate(zip(net.sensing, net.taus)):
        t = simkit.simulate_energy(link, sc.N, simkit.H1, sc.trials, seed=sc.seed, fading=sc.fading, su=k, workers=sc.workers)
        out.append(float(np.mean(t > tau)))
    return np.array(out)


def cmd_local_roc(sc: ScenarioFile):
    link = sc.sensing_links()[0]
    rows = simkit.experiment_local_roc(
        link, sc.N, sc.grid.pf, trials=sc.trials, seed=sc.seed, fading=sc.fading, model=sc.model, workers=sc.workers
    )
    note = (
        f"SU 0 at {link.avg_snr_db:g} dB, m={link.m:g}, N={sc.N}; tau in units of noise power; "
        f"pd_analytic={sc.model}; pd_complex_model=complex-sample regime; pd_mc={sc.fading} fading, {sc.trials} trials"
    )
    return ["pf", "tau", "pd_analytic", "pd_complex_model", "pd_mc", "mc_ci"], rows, note


def cmd_croc(sc: ScenarioFile):
    cols, rows, note = cmd_local_roc(sc)
    out = []
    for r in rows:
        out.append(
            {
                "pf": r["pf"],
                "tau": r["tau"],
                "pm_analytic": 1.0 - r["pd_analytic"],
                "pm_complex_model": 1.0 - r["pd_complex_model"],
                "pm_mc": 1.0 - r["pd_mc"],
                "mc_ci": r["mc_ci"],
            }
        )
    return ["pf", "tau", "pm_analytic", "pm_complex_model", "pm_mc", "mc_ci"], out, note.replace("pd_", "pm_")


def cmd_system_roc(sc: ScenarioFile):
    net = sc.network()
    if sc.model == "mc":
        net = _with_pds(net, _empirical_pds(sc))
    rows = simkit.experiment_system_roc(net, sc.rules, sc.grid.pf, trials=sc.trials, workers=sc.workers)
    note = (
        f"K={net.K}, N={sc.N}, local pf={sc.local_pf:g}; LRT weights from {sc.model} local pd; "
        f"threshold is log-lambda (lrt), statistic level (egc/mrc) or count (counting); "
        f"analytic columns for counting only; mc from {sc.fading} fading, {sc.trials} trials per hypothesis"
    )
    return ["rule", "threshold", "pf_analytic", "pd_analytic", "pf_mc", "pd_mc", "pd_ci"], rows, note


def _with_pds(net: simkit.NetworkScenario, pds) -> simkit.NetworkScenario:
    return replace(net, pd_override=tuple(float(p) for p in pds))


def cmd_lopt(sc: ScenarioFile):
    sense = sc.sensing_links()[0]
    rep = sc.reporting_links()[0]
    spec = local_detect.DetectorSpec.from_pf(sc.N, sc.local_pf, sc.noise_sigma2)
    pd = local_detect.local_pd(sense, spec, "closed" if sc.model == "mc" else sc.model).pd
    sp = simkit._success_pair(pd, sc.local_pf, rep)
    rows = []
    for K in sc.grid.K:
        sweep, l_opt = simkit.experiment_l_sweep(K, sp.p1, sp.p0)
        for r in sweep:
            rows.append({"K": K, **r, "l_opt": l_opt})
    note = (
        f"identical SUs at {sense.avg_snr_db:g} dB sensing, {rep.avg_snr_db:g} dB reporting; "
        f"local pd={pd:.6g}, p1={sp.p1:.6g}, p0={sp.p0:.6g}; p_tot = 1 - pd + pf"
    )
    return ["K", "l", "pd", "pf", "p_tot", "l_opt"], rows, note


def cmd_complexity(sc: ScenarioFile):
    rows = []
    for K in sc.grid.K:
        for q in sc.grid.card:
            v, cfg, ccn = nfg.complexity_row(K, q)
            rows.append({"variables": v, "c_fg": cfg, "c_cn": ccn, "K": K, "card": q})
    note = "message-count cost of sum-product (c_fg) against explicit marginalisation (c_cn); K > 1 counts clamped branches"
    return ["variables", "c_fg", "c_cn", "K", "card"], rows, note


def _validation_checks(sc: ScenarioFile) -> list[dict]:
    """Oracle matrix: each entry is (check, passed, measured, tolerance)."""
    checks = []

    def add(name, value, tol, ok=None):
        passed = bool(value <= tol) if ok is None else bool(ok)
        checks.append({"check": name, "passed": passed, "value": float(value), "tolerance": float(tol)})

    # threshold round trip
    worst = 0.0
    for N in (10, 20):
        for pf in (0.01, 0.03, 0.1):
            tau = local_detect.threshold_from_pf(N, 1.0, pf)
            worst = max(worst, abs(local_detect.pf_from_threshold(N, 1.0, tau) - pf))
    add("threshold_round_trip", worst, 1e-9)

    # general-m route against the special closed forms
    worst = 0.0
    for m in (1.0, 2.0):
        link = FadingLink.from_snr_db(sc.sensing_snr_db[0], m, sc.noise_sigma2)
        for tau in np.linspace(5.0, 60.0, 20):
            spec = local_detect.DetectorSpec(sc.N, local_detect.pf_from_threshold(sc.N, sc.noise_sigma2, tau), float(tau), sc.noise_sigma2)
            a = local_detect.pd_general_m(link, spec).pd
            b = local_detect.pd_closed(link, spec).pd
            worst = max(worst, abs(a - b))
    add("general_m_vs_closed", worst, 1e-7)

    # local pd against simulation, for each SU's sensing link
    net = sc.network()
    for fading in dict.fromkeys(("snapshot", sc.fading)):
        worst = -1.0
        for k, (link, tau) in enumerate(zip(net.sensing, net.taus)):
            t = simkit.simulate_energy(link, sc.N, simkit.H1, sc.trials, seed=sc.seed, fading=fading, su=k, workers=sc.workers)
            mc = float(np.mean(t > tau))
            worst = max(worst, abs(mc - net.local_pds()[k]) - simkit.ci_half_width(mc, sc.trials))
        add(f"local_pd_vs_mc_{fading}", worst, 0.005)

    # SPA on the reference seven-variable graph
    rng = streams.stream(sc.seed, streams.TAG_ORACLE)
    cards = dict(zip([f"x{i}" for i in range(1, 8)], (2, 3, 2, 2, 3, 2, 4)))

    def table(*vs):
        return rng.random([cards[v] for v in vs]) + 0.05

    factors = {
        "fA": (("x1", "x2", "x3", "x4"), table("x1", "x2", "x3", "x4")),
        "fB": (("x1", "x5"), table("x1", "x5")),
        "fC": (("x2", "x7"), table("x2", "x7")),
        "fD": (("x4",), table("x4")),
        "fE": (("x5",), table("x5")),
        "fF": (("x5", "x6"), table("x5", "x6")),
    }
    res = nfg.run_spa(nfg.NfgGraph.from_factors(factors, cards))
    ref = nfg.brute_force_marginals(factors, cards)
    add("spa_exactness", max(float(np.max(np.abs(res.beliefs[v] - ref[v]) / ref[v])) for v in ref), 1e-12)

    rows = {(1, 2): (6, 60, 384), (10, 2): (40, 280, 640), (10, 4): (40, 1040, 10240)}
    bad = sum(nfg.complexity_row(K, q) != want for (K, q), want in rows.items())
    add("complexity_counts", bad, 0)

    # l_opt against brute force
    bad = 0
    for _ in range(200):
        K = int(rng.integers(1, 51))
        p0, p1 = sorted(rng.uniform(0.01, 0.99, 2))
        if p1 - p0 < 1e-3:
            continue
        errs = [sysperf.total_error(K, l, p1, p0) for l in range(1, K + 1)]
        best = min(errs)
        l = sysperf.optimal_l(K, p1, p0)
        bad += sysperf.total_error(K, l, p1, p0) > best + 1e-12
    add("l_opt_vs_brute_force", bad, 0)

    # calibration of the LRT threshold on held-out windows
    cal = simkit.calibrate_lambda(net, sc.system_pf, sc.trials, workers=sc.workers)
    held = replace(net, seed=sc.seed + 1)
    h0 = simkit.collect_statistics(held, simkit.H0, ("lrt",), sc.trials, workers=sc.workers)["lrt"]
    achieved = float(np.mean(h0 > cal.log_lambda))
    add("calibrated_system_pf", abs(achieved - sc.system_pf), simkit.ci_half_width(sc.system_pf, sc.trials) + 0.002)
    return checks


def cmd_validate(sc: ScenarioFile):
    checks = _validation_checks(sc)
    note = f"oracle matrix; {sc.trials} trials per simulated check, seed {sc.seed}"
    return ["check", "passed", "value", "tolerance"], checks, note


COMMANDS = {
    "local-roc": cmd_local_roc,
    "croc": cmd_croc,
    "system-roc": cmd_system_roc,
    "lopt": cmd_lopt,
    "complexity": cmd_complexity,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccss", description="Cooperative spectrum sensing experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--scenario", required=True, help="scenario YAML file or preset name")
        s.add_argument("--out", default="-", help="output path, '-' for stdout")
        s.add_argument("--trials", type=int, help="Monte Carlo trials per hypothesis (>= 1000)")
        s.add_argument("--seed", type=int, help="base seed for the random streams")
        s.add_argument("--model", choices=("phi2", "closed", "complex", "mc"), help="route for the local detection probability")
        s.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
        s.add_argument("--workers", type=int, help="worker processes; results do not depend on it")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"trials": args.trials, "seed": args.seed, "model": args.model, "workers": args.workers}
    try:
        sc = load_scenario(args.scenario, overrides)
        columns, rows, note = COMMANDS[args.command](sc)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, local_detect.SeriesError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = format_table(columns, rows, note=note, fmt=args.format)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    if args.command == "validate":
        failed = [r["check"] for r in rows if not r["passed"]]
        for r in rows:
            print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['check']}", file=sys.stderr)
        return EXIT_FAIL if failed else EXIT_OK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Experiment harness: method registry, sweeps, CSV rows and sanity checks.

A method is a named curve. Analytic and quadrature methods are evaluated
point by point; Monte Carlo methods of one family share a single run, so
requesting several decoders costs one simulation. Each MC family draws from
its own sub-stream of the configured seed, so results do not depend on the
order in which methods are listed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import netcode, oracle, sampling
from .chansim import CanonicalConfig, simulate_canonical
from .config import ExperimentConfig
from .numerics import RngStream, db_to_linear

CSV_HEADER = ("experiment", "method", "source", "snr_db", "value", "errors", "trials",
              "half_width_95")

HALF_DB = 10.0 * math.log10(2.0)


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    method: str
    source: int | None
    snr_db: float
    value: float
    errors: int | None = None
    trials: int | None = None
    half_width_95: float | None = None
    budget_exhausted: bool = False

    def as_csv(self):
        dash = "-"
        return [self.experiment, self.method, dash if self.source is None else str(self.source),
                f"{self.snr_db:g}", repr(float(self.value)),
                dash if self.errors is None else str(self.errors),
                dash if self.trials is None else str(self.trials),
                dash if self.half_width_95 is None else repr(float(self.half_width_95))]


@dataclass(frozen=True)
class Method:
    kind: str  # "analytic", "oracle" or "mc"
    description: str
    fn: Callable
    per_source: bool = False


class _Context:
    def __init__(self, cfg: ExperimentConfig, threads: int):
        self.cfg = cfg
        self.threads = threads
        self.rng = RngStream(cfg.seed)
        self.code = cfg.network_code or netcode.NetworkCode.default()
        self._cache = {}

    def cached(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]


def _analytic(f):
    def run(ctx, name):
        return [ResultRow(ctx.cfg.experiment, name, None, db, float(f(db_to_linear(db))))
                for db in ctx.cfg.snr_db_grid]
    return run


def _mc_rows(ctx, name, curve, source=None):
    return [ResultRow(ctx.cfg.experiment, name, source, p.snr_db, p.ber, p.errors, p.trials,
                      p.half_width_95, p.budget_exhausted) for p in curve.points]


def _direct_half_snr(ctx, name):
    """BPSK over one Rayleigh link at half the mean SNR: E[Q(sqrt X)], X of mean snr."""
    def make():
        grid = [db - HALF_DB for db in ctx.cfg.snr_db_grid]
        return simulate_canonical(CanonicalConfig(), grid, ctx.cfg.stopping, ctx.rng.substream(1),
                                  relay=False, threads=ctx.threads)
    curve = ctx.cached("direct_half", make)
    rows = _mc_rows(ctx, name, curve)
    return [ResultRow(r.experiment, r.method, None, db, r.value, r.errors, r.trials,
                      r.half_width_95, r.budget_exhausted)
            for r, db in zip(rows, ctx.cfg.snr_db_grid)]


def _mrc_sim(ctx, name):
    """Two-branch MRC over iid Rayleigh links: E[Q(sqrt(2X + 2Y))]."""
    def make():
        code = netcode.NetworkCode([[1, 1]], [1, 1])
        res = netcode.simulate_network(code, ctx.cfg.snr_db_grid, ctx.cfg.stopping,
                                       ctx.rng.substream(3), decoders=("eq_joint",),
                                       threads=ctx.threads)
        return res.curve("eq_joint", 1)
    return _mc_rows(ctx, name, ctx.cached("mrc", make))


def _canonical_sim(ctx, name):
    var = ctx.cfg.canonical_variances
    make = lambda: simulate_canonical(CanonicalConfig(*var), ctx.cfg.snr_db_grid, ctx.cfg.stopping,
                                      ctx.rng.substream(2), threads=ctx.threads)
    return _mc_rows(ctx, name, ctx.cached("canonical", make))


def _network_sim(decoder):
    def run(ctx, name):
        def make():
            wanted = tuple(d for d in netcode.DECODERS
                           if d in (ctx.cfg.methods or default_methods(ctx.cfg.experiment)))
            return netcode.simulate_network(ctx.code, ctx.cfg.snr_db_grid, ctx.cfg.stopping,
                                            ctx.rng.substream(4), decoders=wanted,
                                            threads=ctx.threads)
        res = ctx.cached("network", make)
        rows = []
        for s in range(1, ctx.code.k + 1):
            rows += _mc_rows(ctx, name, res.curve(decoder, s), s)
        return rows
    return run


def _nc_closed(constants):
    def run(ctx, name):
        rows = []
        for s in range(1, ctx.code.k + 1):
            form = sampling.approx_nc_ber_generic(s, code=ctx.code, constants=constants)
            rows += [ResultRow(ctx.cfg.experiment, name, s, db, form(db_to_linear(db)))
                     for db in ctx.cfg.snr_db_grid]
        return rows
    return run


def _nc_u1(ctx, name):
    form = sampling.approx_nc_ber_u1()
    return [ResultRow(ctx.cfg.experiment, name, 1, db, form(db_to_linear(db)))
            for db in ctx.cfg.snr_db_grid]


def _oracle_I0(snr):
    fam = sampling.ConstituentFamily(a=(1.0,))
    return oracle.expect(oracle.ExpectationProblem(lambda x: np.exp(fam.log_g(x)), (snr,)),
                         rel_tol=1e-8).value


def _oracle_I1(snr):
    fam = sampling.ConstituentFamily(a=(2.0, 2.0))
    return oracle.expect(oracle.ExpectationProblem(lambda x, y: np.exp(fam.log_g(x, y)), (snr, snr)),
                         rel_tol=1e-8).value


METHODS = {
    "I0_sim": Method("mc", "Monte Carlo of E[Q(sqrt X)] (BPSK, one Rayleigh link, mean snr/2)",
                     _direct_half_snr),
    "I0_oracle": Method("oracle", "quadrature of E[Q(sqrt X)]", _analytic(_oracle_I0)),
    "I0_exact": Method("analytic", "closed form 0.5(1 - sqrt(snr/(snr+2)))",
                       _analytic(sampling.exact_I0)),
    "I0_h": Method("analytic", "impulse at 1.4157", _analytic(sampling.approx_I0_h)),
    "I0_h2": Method("analytic", "impulse at 2 (earlier location)",
                    _analytic(lambda s: sampling.approx_I0_h(s, 2.0))),
    "I0_g": Method("analytic", "low-SNR form Q(sqrt snr)", _analytic(sampling.approx_I0_g)),
    "I0_piecewise": Method("analytic", "piecewise approximant", _analytic(sampling.approx_I0)),
    "I1_approx": Method("analytic", "two-variable impulse, a = (2, 2)",
                        _analytic(lambda s: sampling.approx_I1(2.0, 2.0, s))),
    "I1_oracle": Method("oracle", "quadrature of E[Q(sqrt(2X + 2Y))]", _analytic(_oracle_I1)),
    "I1_exact": Method("analytic", "two-branch MRC closed form", _analytic(sampling.mrc_dual_branch)),
    "I1_sim": Method("mc", "Monte Carlo of two-branch MRC", _mrc_sim),
    "I2_approx": Method("analytic", "union-bound impulse form", _analytic(sampling.approx_I2)),
    "I2_exact": Method("analytic", "min-exponential closed form", _analytic(sampling.min_exponential)),
    "I2_sim": Method("mc", "Monte Carlo of E[Q(sqrt(2 min(X, Y)))]", _direct_half_snr),
    "I34_approx": Method("analytic", "three-term closed form of the relay system",
                         _analytic(lambda s: sampling.approx_canonical_ber()(s))),
    "canonical_oracle": Method("oracle", "quadrature of the instantaneous relay BER",
                               _analytic(lambda s: oracle.expect_canonical_ber(s).value)),
    "canonical_sim": Method("mc", "Monte Carlo of the relay system with C-MRC", _canonical_sim),
    "opt_ind": Method("mc", "optimal individual MAP", _network_sim("opt_ind"), True),
    "opt_joint": Method("mc", "optimal joint MAP", _network_sim("opt_joint"), True),
    "eq_ind": Method("mc", "equivalent-channel individual", _network_sim("eq_ind"), True),
    "eq_joint": Method("mc", "equivalent-channel joint", _network_sim("eq_joint"), True),
    "nc_approx": Method("analytic", "union-bound closed form, published constants",
                        _nc_closed("published"), True),
    "nc_approx_computed": Method("analytic", "union-bound closed form, computed constants",
                                 _nc_closed("computed"), True),
    "nc_u1": Method("analytic", "published closed form for source 1", _nc_u1, True),
}

DEFAULT_METHODS = {
    "fig2": ("I0_sim", "I0_oracle", "I0_h", "I0_h2", "I0_g", "I0_piecewise"),
    "fig4": ("I1_approx", "I1_exact", "I1_sim", "I2_approx", "I2_exact", "I2_sim",
             "I34_approx", "canonical_oracle", "canonical_sim"),
    "fig6": ("opt_ind", "opt_joint", "eq_ind", "eq_joint"),
    "fig7": ("eq_joint", "nc_approx"),
    "custom": (),
}

EXPERIMENT_HELP = {
    "fig2": "E[Q(sqrt X)]: simulation, quadrature and the impulse/low-SNR approximants",
    "fig4": "I1, I2 and the relay-system closed form against closed forms, quadrature and MC",
    "fig6": "network-coded BER of the optimal and equivalent-channel decoders per source",
    "fig7": "equivalent-channel joint decoder: MC against the union-bound closed forms",
    "custom": "any methods listed in the config",
}


def default_methods(experiment: str):
    return DEFAULT_METHODS[experiment]


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list:
    ctx = _Context(cfg, threads)
    rows = []
    for name in cfg.methods or default_methods(cfg.experiment):
        rows += METHODS[name].fn(ctx, name)
    return rows


def to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.as_csv())
    return buf.getvalue()


# -- sanity checks printed with the run summary ------------------------------

def _index(rows):
    return {(r.method, r.source, r.snr_db): r for r in rows}


def _rel(a, b):
    return abs(a - b) / abs(b)


def checks(cfg: ExperimentConfig, rows) -> list:
    """(name, passed, detail) tuples for the tolerances each figure is known for."""
    idx = _index(rows)
    out = []

    def pairs(m1, m2, source=None, pred=lambda db: True):
        for db in cfg.snr_db_grid:
            a, b = idx.get((m1, source, db)), idx.get((m2, source, db))
            if a is not None and b is not None and pred(db) and b.value > 0:
                yield db, a, b

    def rel_check(label, m1, m2, tol, source=None, pred=lambda db: True):
        worst = [(db, _rel(a.value, b.value)) for db, a, b in pairs(m1, m2, source, pred)]
        if worst:
            db, err = max(worst, key=lambda t: t[1])
            out.append((label, err <= tol, f"worst {err:.1%} at {db:g} dB (tol {tol:.0%})"))

    rel_check("g-based vs simulation, <= 0 dB", "I0_g", "I0_sim", 0.10, pred=lambda db: db <= 0)
    rel_check("impulse 1.4157 vs quadrature, >= 10 dB", "I0_h", "I0_oracle", 0.05,
              pred=lambda db: db >= 10)
    rel_check("I1 impulse vs MRC closed form, >= 10 dB", "I1_approx", "I1_exact", 0.10,
              pred=lambda db: db >= 10)
    rel_check("I2 impulse vs closed form, >= 10 dB", "I2_approx", "I2_exact", 0.10,
              pred=lambda db: db >= 10)
    rel_check("relay closed form vs simulation, 15-30 dB", "I34_approx", "canonical_sim", 0.20,
              pred=lambda db: 15 <= db <= 30)
    k = (cfg.network_code or netcode.NetworkCode.default()).k
    for s in range(1, k + 1):
        rel_check(f"u{s} closed form vs simulation, 15-30 dB", "nc_approx", "eq_joint", 0.25, s,
                  pred=lambda db: 15 <= db <= 30)
        bad = []
        for db in cfg.snr_db_grid:
            r = {d: idx.get((d, s, db)) for d in netcode.DECODERS}
            if any(v is None for v in r.values()):
                continue
            slack = lambda a, b: 2.0 * math.hypot(a.half_width_95, b.half_width_95) / 1.96
            opt, joint = r["opt_ind"], r["opt_joint"]
            ok = opt.value <= joint.value + slack(opt, joint)
            ok &= all(joint.value <= r[d].value + slack(joint, r[d]) for d in ("eq_ind", "eq_joint"))
            if not ok:
                bad.append(f"{db:g}")
        if any(idx.get(("opt_ind", s, db)) for db in cfg.snr_db_grid) and \
                any(idx.get(("eq_joint", s, db)) for db in cfg.snr_db_grid):
            out.append((f"u{s} decoder ordering", not bad,
                        "holds at every point" if not bad else f"violated at {', '.join(bad)} dB"))
    return out

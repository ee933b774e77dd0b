"""Command-line front end.

Exit status: 0 when every requested certificate holds, 2 when one is
falsified by simulation, 1 for invalid input or a failed construction.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import itertools
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import design as dz
from .analysis import (DEFAULT_SEED, DecayCertificate, EnvelopeBound, ExponentialBound,
                       NoDecay, certify, check_times, construct_slow_solution,
                       energy_lower_bound, log_energy_slope, second_order_residual)
from .core import Constant, DampingProfile, Spectrum, propagate_modes
from .errors import PulsedampError
from .fileio import (format_report, read_envelope, read_profile, write_csv, write_profile,
                     atomic_write)
from .spectra import ModelOperator, claimed_growth, growth_order_check, model_spectrum, \
    pde_schedule_table

EXIT_OK, EXIT_INPUT, EXIT_FALSIFIED = 0, 1, 2
THREADS_ENV = "PULSEDAMP_THREADS"


class ConfigError(ValueError):
    """A command-line field failed validation."""

    def __init__(self, name: str, message: str):
        super().__init__(f"--{name.replace('_', '-')}: {message}")


# ----------------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------------


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)

    POSITIVE = ("lambda_", "rate", "epsilon", "horizon", "scale", "constant", "t_end")
    NONNEG = ("T", "start", "offset")
    COUNTS = ("batch", "periods", "blocks", "count", "dim", "n_cap", "n_max", "max_blocks")

    @classmethod
    def from_namespace(cls, ns: argparse.Namespace) -> "RunConfig":
        params = {k: v for k, v in vars(ns).items() if k not in ("command", "handler")}
        cfg = cls(ns.command, params)
        cfg.validate()
        return cfg

    def __getattr__(self, name):
        try:
            return self.__dict__["params"][name]
        except KeyError:
            raise AttributeError(name) from None

    def validate(self) -> None:
        p = self.params
        for k in self.POSITIVE:
            v = p.get(k)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ConfigError(k.rstrip("_"), "must be a finite number > 0")
        for k in self.NONNEG:
            v = p.get(k)
            if v is not None and not (math.isfinite(v) and v >= 0):
                raise ConfigError(k, "must be a finite number >= 0")
        for k in self.COUNTS:
            v = p.get(k)
            if v is not None and v < 1:
                raise ConfigError(k, "must be >= 1")
        m = p.get("margin")
        if m is not None and not 0 < m < 1:
            raise ConfigError("margin", "must lie in (0, 1)")
        if p.get("seed") is not None and p["seed"] < 0:
            raise ConfigError("seed", "must be >= 0")
        if p.get("spectrum") is not None and p.get("model") is not None:
            raise ConfigError("spectrum", "give either --spectrum or --model, not both")


def _float_list(text: str) -> list:
    try:
        vals = [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _int(text: str) -> int:
    # accepts 2**24-style powers as well as plain integers
    try:
        if "**" in text:
            a, b = text.split("**")
            return int(a) ** int(b)
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def _spectrum(cfg: RunConfig, name_if_missing: str = "spectrum") -> Spectrum:
    if cfg.params.get("spectrum") is not None:
        return Spectrum(tuple(cfg.spectrum))
    if cfg.params.get("model") is not None:
        if cfg.count is None:
            raise ConfigError("count", "required with --model")
        op = ModelOperator(cfg.model, cfg.dim, cfg.count, cfg.scale, cfg.constant)
        return model_spectrum(op)
    if cfg.params.get("lambda_") is not None:
        return Spectrum((cfg.lambda_,))
    raise ConfigError(name_if_missing, "required (or --model with --count)")


# ----------------------------------------------------------------------------
# Shared output
# ----------------------------------------------------------------------------


def _sample_rows(profile: DampingProfile, spectrum: Spectrum, cert: DecayCertificate):
    for t, w in zip(cert.times, cert.worst_ratio):
        yield [float(t), float(profile.value(t)), float(w), float(cert.bound(t))]


def _emit(cfg: RunConfig, title: str, fields: dict, notes=(), profile=None,
          spectrum=None, cert=None, rows=None, header=None) -> None:
    if profile is not None and cfg.params.get("profile_out"):
        write_profile(cfg.profile_out, profile)
    if cfg.params.get("samples_out"):
        if rows is not None:
            write_csv(cfg.samples_out, header, rows)
        elif cert is not None and cert.times is not None:
            write_csv(cfg.samples_out, ["t", "delta", "worst_energy_ratio", "bound"],
                      _sample_rows(profile, spectrum, cert))
    text = format_report(title, fields, notes)
    if cfg.params.get("report_out"):
        atomic_write(cfg.report_out, text)
    sys.stdout.write(text)


def _cert_fields(cert: DecayCertificate) -> dict:
    return {
        "certificate": cert.describe(),
        "measured_margin": float(cert.measured_margin),
        "verified": bool(cert.verified),
        "checks": len(cert.times),
        "batch": cert.batch,
        "seed": "" if cert.seed is None else cert.seed,
    }


def _finish_design(cfg: RunConfig, title: str, d: dz.Design, extra=None) -> int:
    fields = {"period": d.period, "horizon": cfg.horizon or d.horizon}
    fields.update({k: v for k, v in d.info.items() if not isinstance(v, dict)})
    fields.update(extra or {})
    if not cfg.certify:
        fields["certificate"] = d.certificate.describe()
        _emit(cfg, title, fields, profile=d.profile)
        return EXIT_OK
    cert = d.certify(cfg.horizon, cfg.batch, cfg.seed)
    fields.update(_cert_fields(cert))
    _emit(cfg, title, fields, profile=d.profile, spectrum=d.spectrum, cert=cert)
    return EXIT_OK if cert.verified else EXIT_FALSIFIED


# ----------------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------------


def cmd_design_ode(cfg: RunConfig) -> int:
    d = dz.design_ode_exponential(cfg.lambda_, cfg.rate, cfg.margin, cfg.n_cap,
                                  smooth=cfg.smooth, periods=cfg.periods)
    return _finish_design(cfg, "single-mode exponential design", d)


def cmd_design_any(cfg: RunConfig) -> int:
    env = read_envelope(cfg.envelope)
    d = dz.design_ode_any_rate(cfg.lambda_, env, cfg.blocks, cfg.margin, cfg.n_cap)
    return _finish_design(cfg, "single-mode envelope design", d)


def cmd_design_system(cfg: RunConfig) -> int:
    sp = _spectrum(cfg)
    d = dz.design_system(sp, cfg.rate, cfg.margin, cfg.n_cap, cfg.common_n, cfg.smooth,
                         cfg.periods)
    return _finish_design(cfg, "finite-system exponential design", d)


def cmd_design_pde(cfg: RunConfig) -> int:
    sp = _spectrum(cfg)
    d = dz.design_pde_exponential(sp, cfg.rate, cfg.high_level, cfg.margin, cfg.n_cap,
                                  cfg.common_n, cfg.smooth, cfg.periods)
    return _finish_design(cfg, "truncated-spectrum split design", d,
                          {"modes": len(sp)})


def cmd_design_ultra(cfg: RunConfig) -> int:
    sp = _spectrum(cfg)
    d = dz.design_pde_ultra(sp, cfg.max_blocks, cfg.margin, cfg.n_cap, cfg.common_n)
    reach = d.info["reachable"]
    extra = {"modes": len(sp), "S_reached": [d.info["S"][n] for n in reach],
             "U_reached": [d.info["U"][n] for n in reach]}
    return _finish_design(cfg, "ultra-exponential schedule design", d, extra)


def cmd_design_lip(cfg: RunConfig) -> int:
    d = dz.design_lipschitz(cfg.lambda_, cfg.rate, cfg.epsilon, cfg.periods)
    det = d.details
    extra = {"epsilon": det.epsilon, "t0_bound": det.t0_bound, "t2_bound": det.t2_bound,
             "log_energy_ratio_v": det.log_energy_ratio_v,
             "alignment_residual": det.alignment_residual,
             "lipschitz_constant": max(abs(getattr(s, "slope", 0.0)) for s in d.profile.segments),
             "minimum": d.profile.minimum()}
    return _finish_design(cfg, "piecewise-linear design", d, extra)


def _bound_from(cfg: RunConfig):
    if cfg.envelope:
        return EnvelopeBound(read_envelope(cfg.envelope), start=cfg.start or 0.0)
    if cfg.rate is not None:
        return ExponentialBound(cfg.rate, cfg.offset or 0.0)
    return NoDecay()


def cmd_certify(cfg: RunConfig) -> int:
    profile = read_profile(cfg.profile)
    sp = _spectrum(cfg)
    horizon = cfg.horizon or (10 * profile.duration if profile.periodic else profile.duration)
    cert = certify(profile, sp, DecayCertificate(_bound_from(cfg)), horizon, cfg.batch, cfg.seed)
    fields = {"profile": str(cfg.profile), "modes": len(sp), "horizon": horizon}
    fields.update(_cert_fields(cert))
    _emit(cfg, "certificate check", fields, spectrum=sp, cert=cert, profile=profile)
    return EXIT_OK if cert.verified else EXIT_FALSIFIED


def _profile_or_constant(cfg: RunConfig) -> DampingProfile:
    if cfg.profile:
        return read_profile(cfg.profile)
    if cfg.delta is None:
        raise ConfigError("profile", "give --profile or --delta")
    if not (math.isfinite(cfg.delta) and cfg.delta >= 0):
        raise ConfigError("delta", "must be a finite number >= 0")
    return DampingProfile((Constant(cfg.delta, 1.0),), periodic=True)


def cmd_lower_bound(cfg: RunConfig) -> int:
    from .analysis import random_states

    profile = _profile_or_constant(cfg)
    lams = [cfg.lambda_]
    times = sorted(set(cfg.times or check_times(profile, cfg.horizon or profile.duration)))
    x0 = random_states(lams, cfg.batch, cfg.seed)
    traj = propagate_modes(x0, lams, profile, max(times), sample_times=times)
    e = traj.total_energy()
    rows, worst = [], math.inf
    for t in times:
        i = int(np.argmin(np.abs(traj.times - t)))
        ratio = float(np.min(e[i] / e[0]))
        bound = energy_lower_bound(profile, t)
        worst = min(worst, ratio / bound)
        rows.append([float(t), ratio, bound])
    ok = worst >= 1.0 - 1e-9
    fields = {"bound": "exp(-4*int_0^t delta)", "worst_ratio_over_bound": worst, "holds": ok}
    _emit(cfg, "energy lower bound", fields, rows=rows,
          header=["t", "min_energy_ratio", "lower_bound"])
    return EXIT_OK if ok else EXIT_FALSIFIED


def cmd_slow_solution(cfg: RunConfig) -> int:
    profile = _profile_or_constant(cfg)
    sol = construct_slow_solution(cfg.lambda_, profile, cfg.T or 0.0, cfg.t_end or 50.0)
    resc = sol.rescaled()
    ref = sol.times * np.exp(-cfg.lambda_ * sol.times)
    ok = bool(np.all(np.abs(resc) >= ref) and sol.sandwich_ok)
    fields = {"t_plus": sol.t_plus, "scale": sol.scale, "sandwich_ok": sol.sandwich_ok,
              "residual": second_order_residual(sol, profile),
              "log_energy_slope": log_energy_slope(sol, sol.times[len(sol.times) // 2],
                                                   sol.times[-1]),
              "lower_envelope_holds": ok}
    rows = ([float(t), float(u), float(r), float(p)]
            for t, u, r, p in zip(sol.times, sol.u, resc, sol.phi))
    _emit(cfg, "slow solution", fields, rows=rows, header=["t", "u", "u_rescaled", "phi"])
    return EXIT_OK if ok else EXIT_FALSIFIED


def cmd_spectrum_table(cfg: RunConfig) -> int:
    op = ModelOperator(cfg.model, cfg.dim, cfg.count, cfg.scale, cfg.constant)
    table = pde_schedule_table(model_spectrum(op), cfg.n_max or cfg.count)
    table.check_bookkeeping()
    cols = ["n", "lam", "R", "T", "S", "U", "phi"]
    rows = [[getattr(r, c) for c in cols] for r in table.rows]
    fields = {"model": op.equation, "dim": op.dimension, "count": op.count, "n0": table.n0,
              "rows": len(rows), "bookkeeping_ok": True}
    notes = ()
    if cfg.check_growth:
        rep = growth_order_check(table, claimed_growth(op))
        notes = tuple(rep.lines())
        fields["growth_passed"] = rep.passed
        fields["bounded_T"] = rep.bounded
    _emit(cfg, "schedule table", fields, notes, rows=rows, header=cols)
    if not cfg.params.get("samples_out"):
        sys.stdout.write(",".join(cols) + "\n")
        for r in rows:
            sys.stdout.write(",".join(format(float(x), ".17g") if isinstance(x, float) else str(x)
                                      for x in r) + "\n")
    if cfg.check_growth and not fields["growth_passed"]:
        return EXIT_FALSIFIED
    return EXIT_OK


def _sweep_one(job):
    lam, rate, kind, eps, margin, n_cap, batch, seed = job
    try:
        if kind == "lip":
            d = dz.design_lipschitz(lam, rate, eps)
        else:
            d = dz.design_ode_exponential(lam, rate, margin, n_cap)
        c = d.certify(batch=batch, seed=seed)
        return [lam, rate, float(d.period), float(c.measured_margin), int(c.verified), ""]
    except (PulsedampError, ValueError, RuntimeError) as exc:
        return [lam, rate, math.nan, math.nan, 0, str(exc)]


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("threads", f"{THREADS_ENV} must be a positive integer") from None
    if n < 1:
        raise ConfigError("threads", f"{THREADS_ENV} must be a positive integer")
    return n


def cmd_sweep(cfg: RunConfig) -> int:
    jobs = [(float(l), float(r), cfg.kind, cfg.epsilon, cfg.margin, cfg.n_cap, cfg.batch,
             cfg.seed) for l, r in itertools.product(cfg.lambdas, cfg.rates)]
    if cfg.kind == "lip" and cfg.epsilon is None:
        raise ConfigError("epsilon", "required for --kind lip")
    workers = min(thread_cap(), len(jobs))
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    header = ["lambda", "rate", "period", "measured_margin", "verified", "error"]
    if cfg.samples_out:
        write_csv(cfg.samples_out, header, rows)
    failed = sum(1 for r in rows if r[5])
    falsified = sum(1 for r in rows if not r[5] and not r[4])
    fields = {"kind": cfg.kind, "runs": len(rows), "verified": len(rows) - failed - falsified,
              "falsified": falsified, "failed": failed}
    text = format_report("parameter sweep", fields)
    if cfg.report_out:
        atomic_write(cfg.report_out, text)
    sys.stdout.write(text)
    if failed:
        return EXIT_INPUT
    return EXIT_FALSIFIED if falsified else EXIT_OK


# ----------------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------------


def _outputs(p):
    p.add_argument("--profile-out", type=Path, help="write the damping profile here")
    p.add_argument("--samples-out", type=Path, help="write plot-ready CSV samples here")
    p.add_argument("--report-out", type=Path, help="write the report here (also printed)")


def _check_opts(p, certify_flag=True):
    if certify_flag:
        p.add_argument("--certify", action="store_true", help="simulate and check the certificate")
    p.add_argument("--horizon", type=float, help="simulation horizon (default: design horizon)")
    p.add_argument("--batch", type=int, default=64, help="number of random initial states")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="random seed")


def _calib_opts(p):
    p.add_argument("--margin", type=float, default=dz.DEFAULT_MARGIN,
                   help="calibration safety factor in (0, 1)")
    p.add_argument("--n-cap", type=_int, default=dz.N_CAP, help="largest pulse index tried")


def _spectrum_opts(p, allow_lambda=False):
    if allow_lambda:
        p.add_argument("--lambda", dest="lambda_", type=float, help="single frequency")
    p.add_argument("--spectrum", type=_float_list, help="frequencies, comma separated")
    p.add_argument("--model", choices=("wave", "beam"), help="synthetic spectrum model")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--count", type=int, help="number of modes for --model")
    p.add_argument("--scale", type=float, default=math.pi, help="interval length (wave, dim 1)")
    p.add_argument("--constant", type=float, default=1.0, help="growth constant of the model")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pulsedamp",
                                 description="Design and check time-dependent damping profiles.")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, handler, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(handler=handler)
        return p

    p = add("design-ode", cmd_design_ode, "periodic bipulse for one mode at a fixed rate")
    p.add_argument("--lambda", dest="lambda_", type=float, required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--smooth", action="store_true", help="mollify the pulses")
    p.add_argument("--periods", type=int, default=10)
    _calib_opts(p), _check_opts(p), _outputs(p)

    p = add("design-any", cmd_design_any, "bipulse chain following a tabulated envelope")
    p.add_argument("--lambda", dest="lambda_", type=float, required=True)
    p.add_argument("--envelope", type=Path, required=True, help="CSV of t,phi pairs")
    p.add_argument("--blocks", type=int, default=8)
    _calib_opts(p), _check_opts(p), _outputs(p)

    p = add("design-system", cmd_design_system, "one bipulse per mode of a finite spectrum")
    _spectrum_opts(p)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--common-n", action="store_true", help="same pulse index for every mode")
    p.add_argument("--smooth", action="store_true")
    p.add_argument("--periods", type=int, default=6)
    _calib_opts(p), _check_opts(p), _outputs(p)

    p = add("design-pde", cmd_design_pde, "low-mode bipulses plus a coercive plateau")
    _spectrum_opts(p)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--high-level", type=float, help="plateau value (default R + lambda_1)")
    p.add_argument("--common-n", action="store_true")
    p.add_argument("--smooth", action="store_true")
    p.add_argument("--periods", type=int, default=5)
    _calib_opts(p), _check_opts(p), _outputs(p)

    p = add("design-ultra", cmd_design_ultra, "faster-than-exponential schedule")
    _spectrum_opts(p)
    p.add_argument("--max-blocks", type=int)
    p.add_argument("--common-n", action="store_true")
    _calib_opts(p), _check_opts(p), _outputs(p)

    p = add("design-lip", cmd_design_lip, "piecewise-linear profile with slopes +-epsilon")
    p.add_argument("--lambda", dest="lambda_", type=float, required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--periods", type=int, default=5)
    _check_opts(p), _outputs(p)

    p = add("certify", cmd_certify, "check a decay claim for a profile file")
    p.add_argument("--profile", type=Path, required=True)
    _spectrum_opts(p, allow_lambda=True)
    p.add_argument("--rate", type=float, help="claim exp(-rate (t - offset)^+)")
    p.add_argument("--offset", type=float, default=0.0)
    p.add_argument("--envelope", type=Path, help="claim a tabulated envelope instead")
    p.add_argument("--start", type=float, default=0.0, help="envelope applies from here")
    _check_opts(p, certify_flag=False), _outputs(p)

    p = add("lower-bound", cmd_lower_bound, "compare simulated energy with exp(-4 int delta)")
    p.add_argument("--lambda", dest="lambda_", type=float, required=True)
    p.add_argument("--profile", type=Path)
    p.add_argument("--delta", type=float, help="constant damping instead of a profile")
    p.add_argument("--times", type=_float_list, help="check times (default: segment ends)")
    _check_opts(p, certify_flag=False), _outputs(p)

    p = add("slow-solution", cmd_slow_solution, "solution decaying no faster than t exp(-lambda t)")
    p.add_argument("--lambda", dest="lambda_", type=float, required=True)
    p.add_argument("--profile", type=Path)
    p.add_argument("--delta", type=float, help="constant damping instead of a profile")
    p.add_argument("--T", type=float, default=0.0, help="damping exceeds lambda after T")
    p.add_argument("--t-end", type=float, default=50.0)
    _outputs(p)

    p = add("spectrum-table", cmd_spectrum_table, "ultra-exponential schedule columns")
    p.add_argument("--model", choices=("wave", "beam"), required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--n-max", type=int)
    p.add_argument("--scale", type=float, default=math.pi)
    p.add_argument("--constant", type=float, default=1.0)
    p.add_argument("--check-growth", action="store_true", help="fit the asymptotic orders")
    _outputs(p)

    p = add("sweep", cmd_sweep, "design and certify over a grid of frequencies and rates")
    p.add_argument("--lambdas", type=_float_list, required=True)
    p.add_argument("--rates", type=_float_list, required=True)
    p.add_argument("--kind", choices=("ode", "lip"), default="ode")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    _calib_opts(p)
    p.add_argument("--samples-out", type=Path, help="summary CSV, one row per run")
    p.add_argument("--report-out", type=Path)
    return ap


_DEFAULTS = {"certify": False, "horizon": None, "profile_out": None, "samples_out": None,
             "report_out": None, "smooth": False, "common_n": False, "high_level": None,
             "max_blocks": None, "envelope": None, "rate": None, "check_growth": False,
             "times": None, "profile": None, "delta": None, "n_max": None, "epsilon": None,
             "spectrum": None, "model": None, "lambda_": None, "margin": None, "batch": None,
             "seed": None, "T": None, "t_end": None, "offset": None, "start": None}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors itself
        return EXIT_INPUT if exc.code else EXIT_OK
    for k, v in _DEFAULTS.items():
        if not hasattr(ns, k):
            setattr(ns, k, v)
    try:
        cfg = RunConfig.from_namespace(ns)
        return ns.handler(cfg)
    except (PulsedampError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

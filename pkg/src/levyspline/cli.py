"""Command-line front end.

Subcommands: generate (impulse field plus synthesized realization),
reference (exact limit path for the first-derivative operator), verify
(rate-ladder functional convergence study), plotdata (gnuplot data, and
PGM for two-dimensional grids), selftest (internal consistency checks).

Configuration is plain key=value text, one pair per line with '#'
comments; command-line flags override file values, and every run writes
its fully resolved configuration next to its outputs so reruns are exact.
Exit codes: 0 pass, 1 verification threshold failure, 2 usage or config
error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .exponents import (
    ExponentError,
    cauchy,
    exponent_from_kv,
    gaussian,
    poissonization_contraction_check,
    poissonize,
)
from .grid import Box, Grid, GridSpecError, fmt17
from .noise import NoiseError, RngStream, sample_impulse_field, write_impulse_csv
from .operators import OperatorError, make_operator, margin_rule
from .synthesis import (
    SynthesisError,
    ensemble,
    read_realization_binary,
    read_realization_csv,
    reference_levy_path,
    synthesize_spline,
    write_realization_binary,
    write_realization_csv,
)
from .verify import (
    NoiseFloor,
    VerifyError,
    analytic_cf,
    build_cf_bank,
    build_identity_bank,
    convergence_study,
    empirical_cf,
    left_inverse_residual,
)

SEED_ENV_VAR = "LEVYSPLINE_SEED"
SLOPE_BAND = (-1.3, -0.7)

_CONFIG_KEYS = (
    "command",
    "operator",
    "n",
    "alpha",
    "gamma",
    "dim",
    "family",
    "sigma2",
    "c",
    "lambda",
    "ladder",
    "box",
    "step",
    "margin",
    "ensemble",
    "seed",
    "threads",
    "format",
)

_DEFAULTS = {
    "operator": "D",
    "n": 1,
    "alpha": 0.1,
    "gamma": 1.5,
    "dim": None,
    "family": "gaussian",
    "sigma2": 1.0,
    "c": 1.0,
    "lam": 3.0,
    "ladder": "1,4,16,64",
    "box": "0:10",
    "step": 0.01,
    "margin": None,
    "ensemble": 1000,
    "threads": 1,
    "fmt": "csv",
}


class ConfigError(Exception):
    """Unusable configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run parameters; serializes losslessly to key=value."""

    command: str
    operator: str
    n: int
    alpha: float
    gamma: float
    dim: int
    family: str
    sigma2: float
    c: float
    lam: float
    ladder: tuple
    box: str
    step: float
    margin: float
    ensemble: int
    seed: int
    threads: int
    fmt: str

    def to_kv(self):
        lines = [
            f"command={self.command}",
            f"operator={self.operator}",
            f"n={self.n}",
            f"alpha={fmt17(self.alpha)}",
            f"gamma={fmt17(self.gamma)}",
            f"dim={self.dim}",
            f"family={self.family}",
            f"sigma2={fmt17(self.sigma2)}",
            f"c={fmt17(self.c)}",
            f"lambda={fmt17(self.lam)}",
            "ladder=" + ",".join(fmt17(v) for v in self.ladder),
            f"box={self.box}",
            f"step={fmt17(self.step)}",
            f"margin={fmt17(self.margin)}",
            f"ensemble={self.ensemble}",
            f"seed={self.seed}",
            f"threads={self.threads}",
            f"format={self.fmt}",
        ]
        return "\n".join(lines) + "\n"


def parse_config_file(path):
    pairs = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, value = line.split("=", 1)
                key = key.strip()
                if key == "exponent":
                    key = "family"
                if key not in _CONFIG_KEYS:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                pairs[key] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return pairs


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="levyspline",
        description="Sample random L-splines driven by impulsive noise and "
        "verify their convergence in law to the matching Levy process.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--outdir", default=".", help="output directory (default: .)")
        p.add_argument("--operator", help="D | DaI | DxDy | DaIxDaIy | frac_laplacian")
        p.add_argument("--n", type=int, help="derivative order for the D family")
        p.add_argument("--alpha", type=float, help="decay rate for the D+alphaI families")
        p.add_argument("--gamma", type=float, help="fractional Laplacian exponent")
        p.add_argument("--dim", type=int, choices=(1, 2), help="ambient dimension")
        p.add_argument(
            "--exponent", dest="family", help="gaussian | laplace | cauchy (noise family)"
        )
        p.add_argument("--sigma2", type=float, help="variance parameter")
        p.add_argument("--c", type=float, help="Cauchy scale parameter")
        p.add_argument("--lambda", dest="lam", type=float, help="impulse rate per unit volume")
        p.add_argument("--ladder", help="comma-separated ascending rate ladder")
        p.add_argument("--box", help="window as lo:hi, applied on every axis")
        p.add_argument("--step", type=float, help="grid step")
        p.add_argument("--margin", type=float, help="sampling margin per side")
        p.add_argument("--ensemble", type=int, help="ensemble size M")
        p.add_argument("--seed", type=int, help=f"root seed (fallback: ${SEED_ENV_VAR}, then 0)")
        p.add_argument("--threads", type=int, help="worker cap (orchestration is serial)")
        p.add_argument("--format", dest="fmt", choices=("csv", "bin"), help="realization format")

    for name, helptext in (
        ("generate", "sample an impulse field and synthesize its L-spline"),
        ("reference", "draw an exact limit-process path (first derivative only)"),
        ("verify", "run the rate-ladder functional convergence study"),
        ("plotdata", "emit gnuplot data (and PGM for 2-D) from a realization"),
        ("selftest", "run internal consistency checks"),
    ):
        p = sub.add_parser(name, help=helptext)
        add_common(p)
        if name == "plotdata":
            p.add_argument("--input", help="realization file produced by generate/reference")
    return parser


def _resolve(ns):
    file_cfg = parse_config_file(ns.config) if ns.config else {}

    def pick(flag_name, file_key, cast, default):
        flag = getattr(ns, flag_name, None)
        if flag is not None:
            return flag
        if file_key in file_cfg:
            try:
                return cast(file_cfg[file_key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {file_key}: {file_cfg[file_key]!r}") from exc
        return default

    operator = pick("operator", "operator", str, _DEFAULTS["operator"])
    n = pick("n", "n", int, _DEFAULTS["n"])
    alpha = pick("alpha", "alpha", float, _DEFAULTS["alpha"])
    gamma = pick("gamma", "gamma", float, _DEFAULTS["gamma"])
    dim = pick("dim", "dim", int, _DEFAULTS["dim"])
    if operator in ("DxDy", "DaIxDaIy"):
        if dim not in (None, 2):
            raise ConfigError(f"operator {operator} is two dimensional")
        dim = 2
    elif operator in ("D", "DaI"):
        if dim not in (None, 1):
            raise ConfigError(f"operator {operator} is one dimensional")
        dim = 1
    elif dim is None:
        dim = 1
    family = pick("family", "family", str, _DEFAULTS["family"])
    sigma2 = pick("sigma2", "sigma2", float, _DEFAULTS["sigma2"])
    c = pick("c", "c", float, _DEFAULTS["c"])
    lam = pick("lam", "lambda", float, _DEFAULTS["lam"])
    ladder_text = pick("ladder", "ladder", str, _DEFAULTS["ladder"])
    try:
        ladder = tuple(float(v) for v in str(ladder_text).split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad ladder {ladder_text!r}") from exc
    box = pick("box", "box", str, _DEFAULTS["box"])
    step = pick("step", "step", float, _DEFAULTS["step"])
    margin = pick("margin", "margin", float, _DEFAULTS["margin"])
    ensemble_size = pick("ensemble", "ensemble", int, _DEFAULTS["ensemble"])
    threads = pick("threads", "threads", int, _DEFAULTS["threads"])
    fmt = pick("fmt", "format", str, _DEFAULTS["fmt"])
    if fmt not in ("csv", "bin"):
        raise ConfigError(f"format must be csv or bin, got {fmt!r}")

    seed = getattr(ns, "seed", None)
    if seed is None and "seed" in file_cfg:
        seed = int(file_cfg["seed"])
    if seed is None:
        env = os.environ.get(SEED_ENV_VAR)
        if env is not None:
            try:
                seed = int(env)
            except ValueError as exc:
                raise ConfigError(f"bad {SEED_ENV_VAR} value {env!r}") from exc
    if seed is None:
        seed = 0

    try:
        op = make_operator(operator, n=n, alpha=alpha, gamma=gamma, dim=dim)
        grid = _make_grid(box, step, dim)
    except (OperatorError, GridSpecError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if margin is None:
        margin = margin_rule(op, grid.box)
    if margin < 0:
        raise ConfigError("margin must be nonnegative")
    # Snap the margin up to a whole number of grid bins.
    margin = math.ceil(margin / step - 1e-9) * step

    return RunConfig(
        command=ns.command,
        operator=operator,
        n=n,
        alpha=alpha,
        gamma=gamma,
        dim=dim,
        family=family,
        sigma2=sigma2,
        c=c,
        lam=lam,
        ladder=ladder,
        box=box,
        step=step,
        margin=margin,
        ensemble=ensemble_size,
        seed=int(seed),
        threads=threads,
        fmt=fmt,
    )


def _make_grid(box_text, step, dim):
    try:
        lo_s, _, hi_s = str(box_text).partition(":")
        if not _:
            raise ValueError(f"box must be lo:hi, got {box_text!r}")
        box = Box.cube(float(lo_s), float(hi_s), dim)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return Grid(box, step)


def _operator(cfg):
    return make_operator(cfg.operator, n=cfg.n, alpha=cfg.alpha, gamma=cfg.gamma, dim=cfg.dim)


def _exponent(cfg):
    try:
        return exponent_from_kv({"family": cfg.family, "sigma2": cfg.sigma2, "c": cfg.c})
    except ExponentError as exc:
        raise ConfigError(str(exc)) from exc


def _field_box(cfg, op, grid):
    if cfg.margin == 0:
        return grid.box
    return grid.box.expand(cfg.margin, 0.0 if op.causal else cfg.margin)


def _write_cfg(cfg, outdir):
    with open(os.path.join(outdir, "run.cfg"), "w") as fh:
        fh.write(cfg.to_kv())


def _write_realization(real, cfg, outdir):
    if cfg.fmt == "bin":
        write_realization_binary(real, os.path.join(outdir, "realization.bin"))
    else:
        write_realization_csv(real, os.path.join(outdir, "realization.csv"))


def cmd_generate(cfg, outdir):
    op = _operator(cfg)
    grid = _make_grid(cfg.box, cfg.step, cfg.dim)
    f = _exponent(cfg)
    jump_law = poissonize(f, cfg.lam).jump_law
    field = sample_impulse_field(
        op.dim, _field_box(cfg, op, grid), cfg.lam, jump_law, RngStream(cfg.seed, 0)
    )
    real = synthesize_spline(field, op, grid)
    os.makedirs(outdir, exist_ok=True)
    write_impulse_csv(field, os.path.join(outdir, "impulses.csv"))
    _write_realization(real, cfg, outdir)
    _write_cfg(cfg, outdir)
    return 0


def cmd_reference(cfg, outdir):
    op = _operator(cfg)
    grid = _make_grid(cfg.box, cfg.step, cfg.dim)
    f = _exponent(cfg)
    real = reference_levy_path(f, op, grid, RngStream(cfg.seed, 0))
    os.makedirs(outdir, exist_ok=True)
    _write_realization(real, cfg, outdir)
    _write_cfg(cfg, outdir)
    return 0


def cmd_verify(cfg, outdir):
    op = _operator(cfg)
    grid = _make_grid(cfg.box, cfg.step, cfg.dim)
    f = _exponent(cfg)
    bank = build_cf_bank(grid, op)
    os.makedirs(outdir, exist_ok=True)
    verdict = []
    report = None
    try:
        report = convergence_study(f, op, cfg.ladder, cfg.ensemble, bank, base_seed=cfg.seed)
        ok_slope = SLOPE_BAND[0] <= report.slope <= SLOPE_BAND[1]
        ok_monotone = report.mean_monotone(2.0)
        verdict.append(f"slope_band={SLOPE_BAND[0]:g}..{SLOPE_BAND[1]:g}")
        verdict.append(f"slope_in_band={'yes' if ok_slope else 'no'}")
        verdict.append(f"monotone={'yes' if ok_monotone else 'no'}")
        passed = ok_slope and ok_monotone
        verdict.append(f"verdict={'PASS' if passed else 'FAIL'}")
        code = 0 if passed else 1
    except NoiseFloor as exc:
        report = exc.report
        verdict.append("verdict=FAIL reason=NOISE_FLOOR")
        print(f"verify: NOISE_FLOOR: {exc}", file=sys.stderr)
        code = 1
    if report is not None:
        report.to_csv(os.path.join(outdir, "cfreport.csv"))
        summary = report.summary_text() + "\n"
    else:
        summary = "no rungs completed\n"
    with open(os.path.join(outdir, "summary.txt"), "w") as fh:
        fh.write(summary + "\n".join(verdict) + "\n")
    _write_cfg(cfg, outdir)
    return code


def _load_realization(path):
    if path.endswith(".bin"):
        return read_realization_binary(path)
    return read_realization_csv(path)


def cmd_plotdata(cfg, outdir, input_path):
    if not input_path:
        print("plotdata: --input is required", file=sys.stderr)
        return 2
    try:
        real = _load_realization(input_path)
    except (OSError, SynthesisError, OperatorError, KeyError, ValueError) as exc:
        print(f"plotdata: cannot read {input_path}: {exc}", file=sys.stderr)
        return 2
    os.makedirs(outdir, exist_ok=True)
    axes = real.grid.axes
    dat = os.path.join(outdir, "plot.dat")
    if real.dim == 1:
        with open(dat, "w") as fh:
            for x, v in zip(axes[0], real.samples):
                fh.write(f"{fmt17(x)} {fmt17(v)}\n")
        script = (
            "set terminal pngcairo size 900,600\n"
            "set output 'plot.png'\n"
            "plot 'plot.dat' using 1:2 with lines title 'realization'\n"
        )
    else:
        with open(dat, "w") as fh:
            for i, x in enumerate(axes[0]):
                for y, v in zip(axes[1], real.samples[i]):
                    fh.write(f"{fmt17(x)} {fmt17(y)} {fmt17(v)}\n")
                fh.write("\n")
        script = (
            "set terminal pngcairo size 800,700\n"
            "set output 'plot.png'\n"
            "set view map\n"
            "splot 'plot.dat' using 1:2:3 with pm3d notitle\n"
        )
        write_pgm(real.samples, os.path.join(outdir, "image.pgm"))
    with open(os.path.join(outdir, "plot.gp"), "w") as fh:
        fh.write(script)
    return 0


def write_pgm(samples, path):
    """8-bit binary PGM, linear gray from the sample range (min 0, max 255)."""
    arr = np.asarray(samples, dtype=float)
    lo = float(arr.min())
    hi = float(arr.max())
    if hi > lo:
        scaled = np.round((arr - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        scaled = np.zeros(arr.shape, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())
    return path


def cmd_selftest(cfg, outdir):
    os.makedirs(outdir, exist_ok=True)
    results = []
    count = max(500, min(cfg.ensemble, 5000))

    grid = _make_grid("0:10", 0.01, 1)
    op = make_operator("D")
    bank = build_cf_bank(grid, op)
    for f, label in ((gaussian(1.0), "gaussian"), (cauchy(1.0), "cauchy")):

        def make(stream, f=f):
            return reference_levy_path(f, op, grid, stream)

        paths = list(ensemble(make, count, cfg.seed))
        ok = True
        detail = []
        for name, phi in zip(bank.names, bank.phis):
            est = empirical_cf(paths, phi)
            ana = analytic_cf(f, op, phi, grid)
            err = abs(est.value - ana)
            tol = 4.0 * max(est.se, 1e-6)
            ok = ok and err <= tol
            detail.append(f"{name}:err={err:.3g},tol={tol:.3g}")
        results.append((f"reference-vs-analytic[{label}]", ok, " ".join(detail)))

    fine = _make_grid("0:10", 0.001, 1)
    bank1 = build_identity_bank(fine)
    for opspec in (make_operator("D"), make_operator("DaI", alpha=0.1)):
        worst = max(left_inverse_residual(opspec, phi, fine.step) for phi in bank1.phis)
        results.append(
            (f"left-inverse[{opspec.family}]", worst < 1e-3, f"max_residual={worst:.3g}")
        )
    zm = build_identity_bank(fine, zero_mean=True)
    opf = make_operator("frac_laplacian", gamma=1.5, dim=1)
    worst = max(left_inverse_residual(opf, phi, fine.step) for phi in zm.phis)
    results.append(("left-inverse[frac_laplacian]", worst < 1e-8, f"max_residual={worst:.3g}"))

    for f, label in ((gaussian(1.0), "gaussian"), (cauchy(2.0), "cauchy")):
        ok = all(poissonization_contraction_check(f, n) for n in (1, 10, 100))
        results.append((f"poissonization-contraction[{label}]", ok, "n in {1,10,100}"))

    lines = []
    all_ok = True
    for name, ok, detail in results:
        all_ok = all_ok and ok
        lines.append(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
    text = "\n".join(lines) + "\n"
    with open(os.path.join(outdir, "selftest.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0 if all_ok else 1


def main(argv=None):
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        cfg = _resolve(ns)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    outdir = ns.outdir
    try:
        if cfg.command == "generate":
            return cmd_generate(cfg, outdir)
        if cfg.command == "reference":
            return cmd_reference(cfg, outdir)
        if cfg.command == "verify":
            return cmd_verify(cfg, outdir)
        if cfg.command == "plotdata":
            return cmd_plotdata(cfg, outdir, getattr(ns, "input", None))
        return cmd_selftest(cfg, outdir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (
        ExponentError,
        NoiseError,
        OperatorError,
        SynthesisError,
        VerifyError,
        GridSpecError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: ``misspec <command> [--scenario FILE] [--out DIR] [--seed N] [--set key=value]``.

Every output file starts with one ``#`` header line carrying a timestamp;
everything after it is a deterministic function of the configuration and
seed.  The exit status is 0 iff every contract checked by the command holds;
failed contracts are also listed in ``failures.csv``.
"""
from __future__ import annotations

import argparse
import configparser
import datetime as _dt
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import posterior as post
from .divergence import transform_curve
from .entropy import local_cover_for_testing, mixture_entropy_curve
from .measures import derive_seed, normal
from .models import normal_location_family
from .projection import coefficient_table, mixing_table, mixture_gap, project_mixture, project_parametric, project_regression
from .settings import ORACLE_LIMITS, transform_oracle, transform_setting
from .testing import build_shell_cover, iid_power_bound, lr_test, shell_test, test_risk
from .verify import run_checks

COMMANDS = ("curve", "project", "test-bounds", "cover", "rate", "verify")


def _intlist(s):
    return tuple(int(v) for v in str(s).replace(" ", "").split(",") if v)


def _floatlist(s):
    return tuple(float(v) for v in str(s).replace(" ", "").split(",") if v)


def _strlist(s):
    return tuple(v for v in str(s).replace(" ", "").split(",") if v)


def _opt_float(s):
    return None if s in (None, "", "none") else float(s)


# key -> (parser, default); None means "use the model's own default"
SCHEMA = {
    # rate
    "model": (str, "parametric_interior"),
    "n_list": (_intlist, "100,200,400,800,1600,3200,6400"),
    "reps": (int, 32),
    "tail_factor": (float, 3.0),
    "grid_points": (int, None),
    "truth_var": (float, None),
    "support_points": (int, None),
    "base_mass": (float, None),
    "mcmc_steps": (int, None),
    "mcmc_burnin": (int, None),
    "mcmc_thin": (int, None),
    "proposal_scale": (float, None),
    "bins": (int, None),
    "box": (float, None),
    "error_median": (float, None),
    "points_per_axis": (int, None),
    "beta_min": (_opt_float, None),
    "beta_max": (_opt_float, None),
    "mixture_slack": (float, 1.25),
    # curve
    "setting": (_strlist, "left,right"),
    "n_alphas": (int, 99),
    # project
    "mixture_tol": (float, 1e-8),
    "n_mc": (int, 20000),
    # test-bounds
    "power_n": (_intlist, "5,10,20"),
    "power_reps": (int, 100000),
    "shell_eps": (float, 0.3),
    "shell_n": (int, 50),
    "shell_J": (int, 2),
    "shell_reps": (int, 20000),
    # cover
    "cover_eps": (_floatlist, "0.2,0.1,0.05,0.02"),
    "entropy_mixtures": (int, 10000),
    "gamma_min": (float, 1.3),
    "gamma_max": (float, 2.7),
    "local_eps": (_floatlist, "0.5,0.6"),
    "n_probe": (int, 100),
    # verify
    "verify_scale": (str, "quick"),
}

DEFAULT_WINDOWS = {
    "parametric_interior": (-0.65, -0.35),
    "parametric_boundary": (-1.2, -0.8),
    "regression_normal": (-0.7, -0.3),
    "regression_laplace": (-0.7, -0.3),
}

SCENARIO_OPTION_KEYS = (
    "grid_points", "truth_var", "support_points", "base_mass", "mcmc_steps", "mcmc_burnin",
    "mcmc_thin", "proposal_scale", "bins", "box", "error_median", "points_per_axis", "tail_factor",
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    scenario: str | None
    out: Path
    seed: int
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]


def _set_value(values, key, raw, origin):
    if key not in SCHEMA:
        raise ConfigError(f"unknown key {key!r} in {origin}; valid keys: {', '.join(sorted(SCHEMA))}")
    parser = SCHEMA[key][0]
    try:
        values[key] = parser(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r} in {origin}: {raw!r} ({exc})") from None


def load_config(command: str, scenario: str | None, out: str, seed: int, overrides=()) -> RunConfig:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; valid: {', '.join(COMMANDS)}")
    values = {k: (p(d) if d is not None else None) for k, (p, d) in SCHEMA.items()}
    if scenario:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        with open(scenario, encoding="utf-8") as fh:
            cp.read_file(fh)
        for section in cp.sections():
            for key, raw in cp.items(section):
                _set_value(values, key, raw, f"{scenario} [{section}]")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        _set_value(values, key.strip(), raw.strip(), "--set")
    return RunConfig(command, scenario, Path(out), int(seed), values)


# ---------------------------------------------------------------------------
# output helpers

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


class Writer:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        cfg.out.mkdir(parents=True, exist_ok=True)
        self.stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        self.contracts: list[tuple[str, bool, str]] = []

    def _header(self) -> str:
        return f"# misspec {self.cfg.command} seed={self.cfg.seed} generated {self.stamp}\n"

    def text(self, name: str, body: str):
        (self.cfg.out / name).write_text(self._header() + body, encoding="utf-8")

    def table(self, name: str, header, rows):
        lines = [",".join(header)] + [",".join(_fmt(v) for v in r) for r in rows]
        self.text(name, "\n".join(lines) + "\n")

    def summary(self, name: str, pairs):
        self.text(name, "".join(f"{k}={_fmt(v)}\n" for k, v in pairs))

    def contract(self, name: str, ok: bool, detail: str = ""):
        self.contracts.append((name, bool(ok), detail.replace(",", ";")))

    def finish(self) -> int:
        self.table("contracts.csv", ["contract", "passed", "detail"], self.contracts)
        failed = [c for c in self.contracts if not c[1]]
        self.table("failures.csv", ["contract", "passed", "detail"], failed)
        return 0 if not failed else 1


# ---------------------------------------------------------------------------
# commands

def cmd_curve(cfg: RunConfig, w: Writer):
    for side in cfg["setting"]:
        p0, q = transform_setting(side)
        c = transform_curve(p0, q, cfg["n_alphas"])
        w.text(f"curve_{side}.csv", c.to_table())
        w.summary(f"curve_{side}_summary.txt", [
            ("left_limit", c.left_limit), ("right_limit", c.right_limit), ("slope_at_zero", c.slope_at_zero),
        ])
        dev = max(abs(v - transform_oracle(side, a)) for a, v in zip(c.alphas, c.values))
        lim = ORACLE_LIMITS[side]
        ldev = max(abs(c.left_limit - lim[0]), abs(c.right_limit - lim[1]), abs(c.slope_at_zero - lim[2]))
        w.contract(f"curve_{side}_oracle", dev <= 1e-6, f"max deviation {dev:.3e}")
        w.contract(f"curve_{side}_limits", ldev <= 1e-6, f"max deviation {ldev:.3e}")
        w.contract(f"curve_{side}_convex", c.is_convex(), "")


def cmd_project(cfg: RunConfig, w: Writer):
    rows = []
    for label, fam, p0, expect in (
        ("interior", normal_location_family(-3, 3), normal(0, 2), 0.0),
        ("boundary", normal_location_family(1, 2), normal(0, 1), 1.0),
    ):
        t, kl = project_parametric(fam, p0)
        rows.append((label, t, kl))
        w.contract(f"theta_star_{label}", abs(t - expect) <= 1e-6, f"theta*={t:.17g}")
    w.table("theta_star.csv", ["setting", "theta_star", "kl_min"], rows)
    z = np.linspace(-2, 2, int(cfg["support_points"] or 41))
    p0 = normal(0, cfg["truth_var"] or 2.25)
    tol = cfg["mixture_tol"]
    F = project_mixture(p0, z, tol=tol)
    w.text("mixing_star.csv", mixing_table(F))
    gmax = float(mixture_gap(p0, F).max())
    w.contract("mixture_certificate", gmax <= 1 + max(tol, 1e-6), f"max_j gradient {gmax:.17g}")
    for model in ("regression_normal", "regression_laplace"):
        spec = post.ScenarioSpec(model, (1, 2, 3, 4), 8, cfg.seed, _scenario_options(cfg))
        rspec = post.regression_scenario_spec(spec)
        c = project_regression(rspec, cfg["n_mc"], derive_seed(cfg.seed, f"project/{model}"))
        w.text(f"f_star_{model}.csv", coefficient_table(c))
        levels = np.array(spec.option("f0_levels", [0.5, -0.3, 0.2][:rspec.dim]))
        target = post.regression_target(rspec, levels)
        err = float(np.max(np.abs(c - target)))
        w.contract(f"f_star_{model}", err <= 0.05, f"max coefficient deviation from closed form {err:.3e}")


def cmd_test_bounds(cfg: RunConfig, w: Writer):
    p, q = normal(0, 1), normal(1, 1)
    risk = test_risk(lr_test(p, q), p, q)
    w.table("lr_risk.csv", ["risk", "affinity_bound"], [(risk, math.exp(-1 / 8))])
    w.contract("lr_risk_bound", risk <= math.exp(-1 / 8), f"risk {risk:.17g}")
    rows = []
    lq = transform_setting("left")
    for label, (a, b) in (("normal_pair", (p, q)), ("transform_left", lq)):
        for n in cfg["power_n"]:
            try:
                r = iid_power_bound(a, b, n, cfg["power_reps"], derive_seed(cfg.seed, f"power/{label}", n))
            except ArithmeticError as exc:
                w.contract(f"power_{label}_n{n}", False, str(exc))
                continue
            rows.append((label, n, r.type1, r.type2, r.stderr, r.bound, r.ess))
            w.contract(f"power_{label}_n{n}", r.total <= r.bound + 3 * r.stderr, f"{r.total:.6g} vs {r.bound:.6g}")
    w.table("iid_power.csv", ["setting", "n", "type1", "type2", "stderr", "bound", "ess"], rows)
    fam = normal_location_family(1.0, 2.5)
    p0, pstar = normal(0, 1), normal(1, 1)
    eps = cfg["shell_eps"]
    n_shells = int(math.floor(1.5 / eps))
    cover = build_shell_cover(fam, p0, pstar, 1.0, eps, n_shells, seed=derive_seed(cfg.seed, "shell-cover"))
    w.text("shell_cover.csv", cover.to_table())
    J = cfg["shell_J"]
    probes = [t for t in np.linspace(1.0, 2.5, 16) if abs(t - 1.0) > J * eps]
    rep = shell_test(cover, fam, p0, pstar, cfg["shell_n"], J, probes, cfg["shell_reps"], derive_seed(cfg.seed, "shell-test"))
    rows = [("type1", math.nan, rep.type1, rep.type1_se, rep.type1_bound, rep.type1_bound_uniform)]
    rows += [("type2", t, v, s, rep.type2_bound, math.nan) for t, (v, s) in rep.type2.items()]
    w.table("shell_test.csv", ["error", "theta", "estimate", "stderr", "bound", "bound_uniform"], rows)
    w.contract("shell_test_bounds", rep.passed, f"type1 {rep.type1:.4g} <= {rep.type1_bound:.4g}")


def cmd_cover(cfg: RunConfig, w: Writer):
    ec = mixture_entropy_curve(eps_list=cfg["cover_eps"], n_mixtures=cfg["entropy_mixtures"], seed=derive_seed(cfg.seed, "entropy"))
    w.text("mixture_entropy.csv", ec.to_table())
    w.summary("mixture_entropy_fit.txt", [("c", ec.c), ("gamma", ec.gamma)])
    ok = cfg["gamma_min"] <= ec.gamma <= cfg["gamma_max"]
    w.contract("entropy_exponent", ok, f"gamma {ec.gamma:.4f}")
    w.contract("entropy_monotone", bool(np.all(np.diff(ec.log_cover) >= 0)), "log cover non-increasing in eps")
    th = np.linspace(1.0, 2.0, 201)
    for eps in cfg["local_eps"]:
        rep = local_cover_for_testing(
            list(th), lambda i: normal(float(th[i]), 1.0), normal(0, 1), normal(1, 1), eps,
            np.sqrt(th - 1.0), d=lambda a, b: math.sqrt(abs(a - b)), n_probe=cfg["n_probe"],
            seed=derive_seed(cfg.seed, "local-cover"), raise_on_failure=False,
        )
        w.text(f"local_cover_{eps:g}.csv", rep.to_table())
        w.contract(f"local_cover_{eps:g}", rep.certified, f"{rep.n_balls} cells")


def _scenario_options(cfg: RunConfig) -> dict:
    return {k: cfg[k] for k in SCENARIO_OPTION_KEYS if cfg[k] is not None}


def cmd_rate(cfg: RunConfig, w: Writer):
    spec = post.ScenarioSpec(cfg["model"], cfg["n_list"], cfg["reps"], cfg.seed, _scenario_options(cfg))
    threads = int(os.environ.get("MISSPEC_THREADS", "1"))
    summaries = post.run_scenario(spec, threads)
    rows = []
    for i, s in enumerate(summaries):
        diag = ";".join(f"{k}:{_fmt(v)}" for k, v in sorted(s.diagnostics.items()))
        rows.append((spec.model, s.n, i % spec.reps, s.seed, s.tail_mass, s.quantile_radius, s.evidence, diag))
    w.table("records.csv", ["scenario", "n", "rep", "seed", "tail_mass", "quantile_radius", "evidence", "diagnostics"], rows)
    mixture = spec.model == "mixture"
    fit = post.rate_fit(summaries, log_rate_ratio=mixture, attr="median_radius" if mixture else "quantile_radius")
    pairs = [("model", spec.model), ("beta", fit.beta), ("intercept", fit.intercept), ("r2", fit.r2)]
    pairs += [(f"radius_n{int(n)}", r) for n, r in zip(fit.n, fit.radius)]
    if mixture:
        K = cfg["mixture_slack"] * float(fit.log_ratio[0])
        pairs += [("K", K)] + [(f"ratio_n{int(n)}", r) for n, r in zip(fit.n, fit.log_ratio)]
        w.contract("mixture_radius_envelope", bool(np.all(fit.log_ratio <= K)), f"K {K:.4g}")
    else:
        lo, hi = DEFAULT_WINDOWS[spec.model]
        lo = cfg["beta_min"] if cfg["beta_min"] is not None else lo
        hi = cfg["beta_max"] if cfg["beta_max"] is not None else hi
        pairs += [("beta_min", lo), ("beta_max", hi)]
        w.contract("rate_exponent", lo <= fit.beta <= hi, f"beta {fit.beta:.4f} in [{lo}; {hi}]")
    if spec.model == "regression_laplace":
        last = [s.diagnostics for s in summaries if s.n == spec.n_list[-1]]
        d = {k: float(np.median([g[k] for g in last])) for k in ("mean_dist_target", "mean_dist_f0", "mean_dist_f0_plus_mean")}
        pairs += [(f"{k}_n{spec.n_list[-1]}", v) for k, v in d.items()]
        ok = d["mean_dist_target"] < 0.25 * min(d["mean_dist_f0"], d["mean_dist_f0_plus_mean"])
        w.contract("laplace_centre_is_median", ok, f"distances target/f0/f0+mean {d['mean_dist_target']:.4g}/{d['mean_dist_f0']:.4g}/{d['mean_dist_f0_plus_mean']:.4g}")
    if spec.model == "parametric_boundary":
        masses = [post.boundary_posterior_mass(n, 0.0, 1.0 + 2.0 / n) for n in spec.n_list]
        pairs += [(f"boundary_mass_n{n}", m) for n, m in zip(spec.n_list, masses)]
        w.contract("boundary_mass_stable", max(masses) / min(masses) < 3.0, "factor-3 window")
    w.summary("summary.txt", pairs)


def cmd_verify(cfg: RunConfig, w: Writer):
    results = run_checks(cfg["verify_scale"])
    w.table("verify.csv", ["check", "passed", "detail"], [(r.name, r.passed, r.detail.replace(",", ";")) for r in results])
    for r in results:
        w.contract(r.name, r.passed, r.detail)


HANDLERS = {
    "curve": cmd_curve,
    "project": cmd_project,
    "test-bounds": cmd_test_bounds,
    "cover": cmd_cover,
    "rate": cmd_rate,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="misspec", description="Posterior concentration under misspecification: experiments and checks.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--scenario", help="INI file with [section] key = value lines")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--seed", type=int, default=0, help="master seed (unsigned 64-bit)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.command, args.scenario, args.out, args.seed, args.set)
    except ConfigError as exc:
        print(f"misspec: {exc}", file=sys.stderr)
        return 2
    w = Writer(cfg)
    HANDLERS[cfg.command](cfg, w)
    status = w.finish()
    for name, ok, detail in w.contracts:
        print(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
    return status


if __name__ == "__main__":
    sys.exit(main())

"""Command-line experiment runner.

Usage::

    lqteam [SUBCOMMAND] --config run.json [--seed S] [--workers K] [--out DIR]

The subcommand may also be given as ``"command"`` inside the JSON config.
Exit status: 0 success, 1 configuration/validation error, 2 numerical
failure (singular linear-policy system, PBP non-convergence).
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from ._random import substream
from .bounds import (
    BoundConstants,
    envelope_budget,
    explicit_gap_bound,
    fundamental_bounds,
    matrix_rank_info,
    tail_weight,
    uniform_density_bound,
)
from .diagnostics import clt_sweep, gap_sweep, tail_mass
from .errors import ConfigError, ConvergenceError, InstanceFormatError, SingularSystemError, SpecError
from .noise import FAMILIES, NoiseModel
from .pbp import PbpConfig, pbp_solve, truncated_gaussian_value
from .stiefel import sample_stiefel
from .team import (
    EstimateWithError,
    LinearPolicy,
    TeamSpec,
    build_instance,
    gaussian_cost,
    policy_losses,
    solve_linear,
)

log = logging.getLogger("lqteam")

COMMANDS = (
    "validate-spec",
    "solve-linear",
    "solve-pbp",
    "gap-sweep",
    "clt-diagnostics",
    "bounds",
    "tail-mass",
    "sample-instance",
)

GAP_COLUMNS = [
    "n", "seed", "J_linear", "J_linear_se", "J_pbp", "J_pbp_se", "gap",
    "bound_upper", "bound_lower", "bound_valid",
    "gap_paired_se", "v_t", "v_t_se", "pbp_iterations", "error",
]
CLT_COLUMNS = ["n", "l", "samples", "bandwidth", "grid_sup_ratio_err", "ratio_stderr", "tv_estimate", "tv_floor"]
TAIL_COLUMNS = ["n", "seed", "k", "value", "stderr", "samples"]
COST_COLUMNS = ["n", "seed", "policy_kind", "value", "stderr", "samples"]


class Run:
    """Validated view of one JSON config plus command-line overrides."""

    def __init__(self, config, base_dir, seed=None, workers=1, out=None):
        if not isinstance(config, dict):
            raise ConfigError("config must be a JSON object")
        self.cfg = config
        self.base = Path(base_dir)
        raw_seed = seed if seed is not None else config.get("seed")
        if raw_seed is None:
            raise ConfigError("seed: required (no wall-clock seeding)")
        if isinstance(raw_seed, bool) or not isinstance(raw_seed, int) or not 0 <= raw_seed < 2**64:
            raise ConfigError(f"seed: must be an unsigned 64-bit integer, got {raw_seed!r}")
        self.seed = raw_seed
        if not isinstance(workers, int) or workers < 1:
            raise ConfigError("workers: must be a positive integer")
        self.workers = workers
        self.out = Path(out) if out is not None else self.path(config.get("out", "."))
        self.out.mkdir(parents=True, exist_ok=True)

    def path(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    def get(self, key, kind=None, default=None, required=True):
        if key not in self.cfg:
            if required and default is None:
                raise ConfigError(f"{key}: required field missing")
            return default
        value = self.cfg[key]
        if kind is not None and not _is(value, kind):
            raise ConfigError(f"{key}: expected {kind}, got {value!r}")
        return value

    def spec(self):
        if "spec" in self.cfg:
            raw = self.cfg["spec"]
        elif "spec_path" in self.cfg:
            p = self.path(self.cfg["spec_path"])
            if not p.exists():
                raise ConfigError(f"spec_path: file {p} does not exist")
            raw = _read_json(p, "spec_path")
        else:
            raise ConfigError("spec: provide 'spec' inline or 'spec_path'")
        if not isinstance(raw, dict):
            raise ConfigError("spec: must be an object with m, obs_dims, Q, W")
        try:
            return TeamSpec.from_dict(raw)
        except SpecError as exc:
            raise SpecError(f"spec.{exc.field}", str(exc).split(": ", 1)[-1]) from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"spec: {exc}") from None

    def noise_family(self):
        fam = self.get("noise", str)
        if fam not in FAMILIES:
            raise ConfigError(f"noise: unknown family {fam!r}; choose from {', '.join(FAMILIES)}")
        return fam

    def pbp(self):
        raw = self.get("pbp", dict, default={}, required=False)
        try:
            return PbpConfig(**raw)
        except TypeError as exc:
            raise ConfigError(f"pbp: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"pbp: {exc}") from None

    def constants(self):
        try:
            return BoundConstants.from_dict(self.get("constants", dict, default={}, required=False))
        except ValueError as exc:
            raise ConfigError(f"constants: {exc}") from None

    def positive_int(self, key, default=None):
        v = self.get(key, int, default=default, required=default is None)
        if v is None or isinstance(v, bool) or v <= 0:
            raise ConfigError(f"{key}: must be a positive integer")
        return v

    def int_list(self, key):
        v = self.get(key, list)
        if not v or not all(isinstance(x, int) and not isinstance(x, bool) and x > 0 for x in v):
            raise ConfigError(f"{key}: must be a non-empty list of positive integers")
        return v

    def instance(self):
        """Instance from ``instance_path`` or a fresh Haar draw for ``(spec, n, seed)``."""
        if "instance_path" in self.cfg:
            p = self.path(self.cfg["instance_path"])
            if not p.exists():
                raise ConfigError(f"instance_path: file {p} does not exist")
            return io.load_instance(p)
        spec = self.spec()
        n = self.positive_int("n")
        if n < spec.ell:
            raise ConfigError(f"n: must be at least l = {spec.ell}")
        return build_instance(spec, n, sample_stiefel(n, spec.ell, substream(self.seed, n, 0)))

    def emit(self, name, text):
        p = self.out / name
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        return p

    def emit_json(self, name, obj):
        return self.emit(name, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _is(value, kind):
    if kind is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return isinstance(value, kind)


def _read_json(p, field):
    try:
        with open(p, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{field}: invalid JSON in {p}: {exc}") from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, EstimateWithError):
        return obj.to_dict()
    return obj


def _summary(p, what):
    print(f"wrote {p}: {what}")


def cmd_validate_spec(run):
    spec = run.spec()
    rank, sigma_min = matrix_rank_info(spec.W)
    report = {
        "valid": True,
        "m": spec.m,
        "obs_dims": list(spec.obs_dims),
        "l": spec.ell,
        "l_bar": spec.ell_bar,
        "Q_eigenvalues": np.linalg.eigvalsh(spec.Q),
        "W_rank": rank,
        "W_sigma_min": sigma_min,
        "gaussian_cost": gaussian_cost(spec),
    }
    _summary(run.emit_json("spec_report.json", report), f"spec valid, l={spec.ell}, rank(W)={rank}")


def cmd_solve_linear(run):
    spec = run.spec()
    policy = solve_linear(spec)
    jg = gaussian_cost(spec)
    doc = {
        "gamma": [g for g in policy.gains],
        "gamma_flat": policy.flat,
        "gaussian_cost": jg,
        "spec": spec.to_dict(),
    }
    _summary(run.emit_json("policy.json", doc), f"linear policy, gaussian_cost={jg:.6g}")


def cmd_sample_instance(run):
    inst = run.instance()
    p = run.out / run.get("instance_file", str, default="instance.txt", required=False)
    io.save_instance(inst, p)
    _summary(p, f"instance n={inst.n}, l={inst.spec.ell}")


def cmd_solve_pbp(run):
    inst = run.instance()
    spec = inst.spec
    cfg = run.pbp()
    noise = NoiseModel(run.noise_family(), inst.n)
    fit_rng, eval_rng = substream(run.seed, inst.n, 1).spawn(2)
    policy = pbp_solve(inst, noise, cfg, fit_rng, run.workers)
    xhat = inst.sample_projected(noise, cfg.samples, eval_rng, run.workers)
    a = policy_losses(spec, solve_linear(spec), xhat)
    b = policy_losses(spec, policy, xhat)
    j_lin, j_pbp = EstimateWithError.from_samples(a), EstimateWithError.from_samples(b)
    _summary(run.emit("policy.txt", io.dumps_policy(policy)), f"tabulated policy, {policy.trace.iterations} sweeps")
    doc = {
        "n": inst.n,
        "seed": run.seed,
        "noise": noise.family,
        "pbp": cfg.to_dict(),
        "J_linear": j_lin,
        "J_pbp": j_pbp,
        "gap": j_lin.value - j_pbp.value,
        "gap_paired_stderr": EstimateWithError.from_samples(a - b).stderr,
        "gaussian_cost": gaussian_cost(spec),
        "iterations": policy.trace.iterations,
        "converged": policy.trace.converged,
        "sweep_costs": policy.trace.costs,
        "sweep_changes": policy.trace.changes,
    }
    _summary(run.emit_json("pbp.json", doc), f"J_linear={j_lin.value:.6g}, J_pbp={j_pbp.value:.6g}")
    rows = [
        [inst.n, run.seed, "linear", j_lin.value, j_lin.stderr, j_lin.samples],
        [inst.n, run.seed, "pbp", j_pbp.value, j_pbp.stderr, j_pbp.samples],
    ]
    p = run.out / "costs.csv"
    io.write_csv(p, COST_COLUMNS, rows)
    _summary(p, "policy costs")


def cmd_gap_sweep(run):
    spec = run.spec()
    n_list = run.int_list("n_list")
    if min(n_list) < spec.ell:
        raise ConfigError(f"n_list: every n must be at least l = {spec.ell}")
    consts = run.constants()
    rows = gap_sweep(spec, run.noise_family(), n_list, run.pbp(), consts, run.seed, run.workers)
    table = []
    for r in rows:
        b = r.bounds_record
        table.append([
            r.n, r.seed, r.J_linear.value, r.J_linear.stderr, r.J_pbp.value, r.J_pbp.stderr, r.gap,
            b.upper, b.lower, int(b.valid), r.gap_paired_stderr, r.v_t.value, r.v_t.stderr,
            r.pbp_iterations, r.error or "",
        ])
    p = run.out / "gap_sweep.csv"
    io.write_csv(p, GAP_COLUMNS, table)
    _summary(p, f"{len(rows)} rows")
    p = run.out / "gap_sweep.svg"
    io.write_svg(p, "Optimality gap vs n", n_list, {"gap": [r.gap for r in rows]}, ylabel="J_linear - J_pbp")
    _summary(p, "gap chart")
    records = [
        {"n": r.n, "v_t": r.v_t, "bounds": r.bounds_record.to_dict(), "constants": consts.to_dict(),
         "illustrative": consts.illustrative, "error": r.error}
        for r in rows
    ]
    _summary(run.emit_json("gap_sweep_bounds.json", records), "two-sided bounds per n")
    failed = [r.n for r in rows if r.error]
    if failed:
        log.warning("PBP did not converge for n in %s", failed)


def cmd_clt(run):
    fam = run.noise_family()
    l = run.positive_int("l")
    n_list = run.int_list("n_list")
    if min(n_list) < l:
        raise ConfigError(f"n_list: every n must be at least l = {l}")
    samples = run.positive_int("samples")
    if samples < 1000:
        raise ConfigError("samples: density diagnostics need at least 1000 samples")
    reports = clt_sweep(fam, l, n_list, samples, run.seed, run.workers)
    p = run.out / "clt.csv"
    io.write_csv(p, CLT_COLUMNS, [[getattr(r, c) for c in CLT_COLUMNS] for r in reports])
    _summary(p, f"{len(reports)} density reports")
    p = run.out / "clt.svg"
    series = {"TV estimate": [r.tv_estimate for r in reports], "sup |f/phi - 1|": [r.grid_sup_ratio_err for r in reports]}
    io.write_svg(p, f"Projection CLT, {fam}, l={l}", n_list, series)
    _summary(p, "density convergence chart")


def cmd_bounds(run):
    spec = run.spec()
    n_list = run.int_list("n_list")
    consts = run.constants()
    mc = run.positive_int("mc_samples", default=100_000)
    cfg = run.pbp()
    env = run.get("envelope", dict, default={"a": 1.0, "b": 0.0}, required=False)
    a, b = float(env.get("a", 1.0)), float(env.get("b", 0.0))
    if a <= 0:
        raise ConfigError("envelope.a: must be positive")
    policy = solve_linear(spec)
    jg = gaussian_cost(spec)
    rank, _ = matrix_rank_info(spec.W)
    records = []
    for idx, n in enumerate(n_list):
        gap_rng, trunc_rng = substream(run.seed, n, idx).spawn(2)
        gb = explicit_gap_bound(spec, n, consts, policy, mc, gap_rng, run.workers)
        v_t = truncated_gaussian_value(spec, consts.radius(n), cfg, trunc_rng, run.workers)
        records.append({
            "n": n,
            "l": spec.ell,
            "rank_W": rank,
            "tau": tail_weight(spec.ell, rank, consts.radius(n)),
            "gaussian_cost": jg,
            "explicit_gap_bound": gb.to_dict(),
            "fundamental_bounds": fundamental_bounds(jg, v_t, n, consts).to_dict(),
            "v_t": v_t,
            "envelope": {"a": a, "b": b},
            "envelope_budget": envelope_budget(a, b, n, spec.ell) if n > spec.ell else None,
            "uniform_density_bound": uniform_density_bound(consts, spec.ell, n, a, b),
            "constants": consts.to_dict(),
            "illustrative": consts.illustrative,
            "mc_samples": mc,
            "seed": run.seed,
        })
    _summary(run.emit_json("bounds.json", records), f"{len(records)} bound records")


def cmd_tail_mass(run):
    inst = run.instance()
    noise = NoiseModel(run.noise_family(), inst.n)
    if "policy_path" in run.cfg:
        p = run.path(run.cfg["policy_path"])
        if not p.exists():
            raise ConfigError(f"policy_path: file {p} does not exist")
        policy = io.loads_policy(p.read_text(encoding="ascii"))
    else:
        policy = solve_linear(inst.spec)
    k_list = run.get("k_list", list)
    if not k_list or not all(_is(k, float) and k >= 0 for k in k_list):
        raise ConfigError("k_list: must be a non-empty list of nonnegative numbers")
    samples = run.positive_int("samples")
    est = tail_mass(inst, noise, policy, k_list, samples, substream(run.seed, inst.n, 2), run.workers)
    p = run.out / "tail_mass.csv"
    io.write_csv(p, TAIL_COLUMNS, [[inst.n, run.seed, float(k), e.value, e.stderr, e.samples] for k, e in zip(k_list, est)])
    _summary(p, f"{len(est)} tail masses")
    p = run.out / "tail_mass.svg"
    io.write_svg(p, f"Tail mass T(n={inst.n}, k)", k_list, {"T(k)": [e.value for e in est]}, xlabel="k", logx=False)
    _summary(p, "tail mass chart")


DISPATCH = {
    "validate-spec": cmd_validate_spec,
    "solve-linear": cmd_solve_linear,
    "solve-pbp": cmd_solve_pbp,
    "gap-sweep": cmd_gap_sweep,
    "clt-diagnostics": cmd_clt,
    "bounds": cmd_bounds,
    "tail-mass": cmd_tail_mass,
    "sample-instance": cmd_sample_instance,
}


def run(config_path, command=None, seed=None, workers=1, out=None):
    """Execute one configured experiment; returns the process exit status."""
    try:
        config_path = Path(config_path)
        if not config_path.exists():
            raise ConfigError(f"config: file {config_path} does not exist")
        config = _read_json(config_path, "config")
        cmd = command or (config.get("command") if isinstance(config, dict) else None)
        if cmd not in DISPATCH:
            raise ConfigError(f"command: expected one of {', '.join(COMMANDS)}, got {cmd!r}")
        r = Run(config, config_path.parent, seed=seed, workers=workers, out=out)
        DISPATCH[cmd](r)
    except (ConfigError, SpecError, InstanceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SingularSystemError as exc:
        print(f"numerical error (team): {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"numerical error (pbp): {exc}", file=sys.stderr)
        return 2
    except np.linalg.LinAlgError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="lqteam", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", nargs="?", choices=COMMANDS, help="overrides the config's 'command'")
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="master seed (unsigned 64-bit), overrides config")
    parser.add_argument("--workers", type=int, default=1, help="threads for Monte Carlo chunks; never changes results")
    parser.add_argument("--out", help="output directory, overrides config")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    return run(args.config, args.command, args.seed, args.workers, args.out)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: free-energy, tap-curve, verify and finite-n."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .errors import (ConvergenceError, DomainError, GridError, OptimizerError, SpecParseError,
                     TapfeError)
from .mixture import MixtureSpec
from .profiles import StepProfile, support_max

log = logging.getLogger("tapfe")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3
COMMANDS = ("free-energy", "tap-curve", "verify", "finite-n")


class InputError(TapfeError):
    """Bad command line, config or manifest."""


@dataclass
class RunConfig:
    """Every knob a command reads; all numeric fields have defaults."""

    command: str
    spec_path: str | None = None
    output_dir: str = "."
    seed: int = 0
    k: int = 3
    n_starts: int = 8
    curve_starts: int = 1
    n_paths: int = 100_000
    n_steps: int = 2000
    dx: float = 2e-3
    gamma_max: float = 50.0
    u_grid: list | None = None
    epsilon: float = 0.2
    window: list | None = None
    dump_pde: bool = False
    perturb_top: float = 0.0
    manifest_path: str | None = None
    n_samples: int = 16
    workers: int = 1
    pair_tol: float = 1e-6
    assembly_tol: float = 1e-10
    se_factor: float = 3.0

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InputError(f"unknown command {self.command!r}")
        if self.k < 1 or self.n_paths < 2 or self.n_steps < 1 or self.dx <= 0:
            raise InputError("k, paths, steps and dx must be positive")
        if self.window is not None and len(self.window) != 2:
            raise InputError("window needs two values lo,hi")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        extra = sorted(set(d) - names)
        if extra:
            raise InputError(f"unknown config keys: {extra}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self, spec: MixtureSpec | None = None) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in ("output_dir", "workers")}
        payload = {"config": d, "spec": spec.to_dict() if spec else None, "version": __version__}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------- formatting

def fmt(x) -> str:
    """Locale-free text with 17 significant digits for floats."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if x is None:
        return ""
    return str(x)


def write_csv(path: str, columns, rows, config_hash: str):
    with open(path, "w", newline="") as fh:
        fh.write(f"# tapfe {__version__} config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c, "")) for c in columns])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path: str, payload: dict, cfg: RunConfig, spec: MixtureSpec | None):
    doc = {"tool": "tapfe", "version": __version__, "config": cfg.to_dict(),
           "config_hash": cfg.hash(spec), "spec": spec.to_dict() if spec else None}
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- helpers

def load_spec(path: str) -> MixtureSpec:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read spec {path}: {exc}") from exc
    return MixtureSpec.from_json(text)


def parse_u_grid(text: str) -> list:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--u-grid expects a:b:n")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad --u-grid {text!r}") from exc
    if n < 0:
        raise argparse.ArgumentTypeError("--u-grid needs n >= 0")
    return [float(u) for u in np.linspace(a, b, n)] if n else []


def parse_window(text: str) -> list:
    try:
        lo, hi = (float(t) for t in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--window expects lo,hi, got {text!r}") from exc
    return [lo, hi]


def _grid(cfg: RunConfig):
    from .pde import GridConfig
    return GridConfig(dx=cfg.dx)


def _out(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


def _parisi(spec, cfg, diagnostics=False):
    from .optimize import minimize_parisi
    return minimize_parisi(spec, k=cfg.k, n_starts=cfg.n_starts, seed=cfg.seed, grid=_grid(cfg),
                           diagnostics=diagnostics)


def perturb_top(alpha: StepProfile, delta: float) -> StepProfile:
    """Shift the top atom of alpha by delta (negative-control helper)."""
    kn = list(alpha.knots)
    q, v = kn[-1]
    lower = kn[-2][0] if len(kn) > 1 else 0.0
    qn = min(max(q + delta, lower + 1e-6, 0.0), 1.0)
    kn[-1] = (qn, v)
    return StepProfile(tuple(kn), alpha.domain_end, alpha.mode)


# ---------------------------------------------------------------- commands

def cmd_free_energy(cfg: RunConfig) -> int:
    spec = load_spec(cfg.spec_path)
    res = _parisi(spec, cfg, diagnostics=True)
    print(f"F = {fmt(res.value)}")
    print(f"q_P = {fmt(res.q_P)}")
    print("alpha_P = " + ", ".join(f"({fmt(q)}, {fmt(w)})" for q, w in res.profile.atoms))
    write_json(_out(cfg, "free_energy.json"), {"result": res.to_dict()}, cfg, spec)
    if cfg.dump_pde:
        from .pde import solve_parisi
        solve_parisi(spec, res.profile, cfg=_grid(cfg)).to_csv(_out(cfg, "pde_alpha_P.csv"))
    return EXIT_OK


TAP_COLUMNS = ["u", "F_TAP", "lambda_star", "gamma_star_summary", "gap_to_F", "P_u", "C", "status"]


def cmd_tap_curve(cfg: RunConfig) -> int:
    from .optimize import tap_limit_curve
    spec = load_spec(cfg.spec_path)
    res = _parisi(spec, cfg)
    F, qp = res.value, res.q_P
    u_grid = cfg.u_grid
    if u_grid is None:
        u_grid = [qp + (1.0 - qp) * i / 20.0 for i in range(1, 21)]
    rows = []
    if u_grid:
        pts = tap_limit_curve(spec, u_grid, k=cfg.k, alpha_p=res.profile, seed=cfg.seed,
                              n_starts=cfg.curve_starts,
                              gamma_max=cfg.gamma_max, grid=_grid(cfg),
                              progress=lambda p: log.info("u=%.6g F_TAP=%.10g %s", p.u, p.F_TAP,
                                                          p.status))
        for p in pts:
            summary = ""
            if p.gamma is not None:
                summary = ";".join(f"{fmt(q)}:{fmt(v)}" for q, v in p.gamma.knots)
            rows.append({"u": p.u, "F_TAP": p.F_TAP, "lambda_star": p.lam,
                         "gamma_star_summary": summary, "gap_to_F": F - p.F_TAP,
                         "P_u": p.P_u, "C": p.C, "status": p.status})
    write_csv(_out(cfg, "tap_curve.csv"), TAP_COLUMNS, rows, cfg.hash(spec))
    write_json(_out(cfg, "tap_curve.json"), {"F": F, "q_P": qp,
                                            "alpha_P": res.profile.to_dict()}, cfg, spec)
    print(f"F = {fmt(F)}  q_P = {fmt(qp)}  points = {len(rows)}")
    return EXIT_OK


def verify_checks(spec: MixtureSpec, alpha: StepProfile, value: float, cfg: RunConfig,
                  profile_path: str | None = None) -> list:
    """The four named identity checks at alpha; each is {name, residual, tolerance, pass}."""
    from .pde import pair_identity_residual, solve_parisi
    from .sde import delta_and_energy, optimality_profile, profile_csv, simulate
    grid = _grid(cfg)
    qp = support_max(alpha)
    checks = []
    r = abs(pair_identity_residual(spec, alpha, qp, grid))
    checks.append({"name": "pair_identity", "residual": r, "tolerance": cfg.pair_tol,
                   "pass": r < cfg.pair_tol})
    pde = solve_parisi(spec, alpha, cfg=grid)
    atom_qs = sorted({q for q, _ in alpha.knots})
    run = simulate(spec, alpha, pde, end_s=qp, n_paths=cfg.n_paths, n_steps=cfg.n_steps,
                   seed=cfg.seed, checkpoints=sorted({0.0, qp} | set(atom_qs)))
    if profile_path:
        profile_csv(run, spec, profile_path)
    i = run.checkpoint_index(qp)
    worst, worst_tol, ok = 0.0, 0.0, True
    terms = [(run.v_sq_mean[i] - qp, run.v_sq_se[i])]
    terms += [(g, se) for s, g, se in optimality_profile(run, spec) if s in atom_qs]
    for val, se in terms:
        tol = cfg.se_factor * se + 1e-12
        if abs(val) >= tol:
            ok = False
        if abs(val) / tol >= (worst / worst_tol if worst_tol else 0.0):
            worst, worst_tol = abs(val), tol
    checks.append({"name": "optimality", "residual": worst, "tolerance": worst_tol, "pass": ok})
    d = delta_and_energy(spec, alpha, run, value)
    r = abs(d["Delta_mc"] - d["Delta_identity"])
    tol = cfg.se_factor * d["Delta_mc_se"] + 1e-12
    checks.append({"name": "delta_identity", "residual": r, "tolerance": tol, "pass": r < tol})
    checks.append({"name": "assembly", "residual": d["assembly_residual"],
                   "tolerance": cfg.assembly_tol, "pass": d["assembly_residual"] < cfg.assembly_tol})
    return checks


def cmd_verify(cfg: RunConfig) -> int:
    from .pde import parisi_functional
    spec = load_spec(cfg.spec_path)
    res = _parisi(spec, cfg)
    alpha, value = res.profile, res.value
    if cfg.perturb_top:
        alpha = perturb_top(alpha, cfg.perturb_top)
        value = parisi_functional(spec, alpha, _grid(cfg))
    checks = verify_checks(spec, alpha, value, cfg, _out(cfg, "optimality_profile.csv"))
    for c in checks:
        print(f"{c['name']:16s} residual={fmt(c['residual'])} tol={fmt(c['tolerance'])} "
              f"{'PASS' if c['pass'] else 'FAIL'}")
    write_json(_out(cfg, "verify.json"), {"alpha": alpha.to_dict(), "parisi_value": value,
                                         "checks": checks}, cfg, spec)
    if cfg.dump_pde:
        from .pde import solve_parisi
        solve_parisi(spec, alpha, cfg=_grid(cfg)).to_csv(_out(cfg, "pde_alpha.csv"))
    return EXIT_OK if all(c["pass"] for c in checks) else EXIT_VERIFY


MANIFEST_KEYS = {"spec", "N_list", "seeds", "epsilon", "window", "outputs", "n_samples"}


def load_manifest(path: str, cfg: RunConfig) -> dict:
    try:
        with open(path) as fh:
            man = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecParseError(f"manifest line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(man, dict):
        raise InputError("manifest must be a JSON object")
    extra = sorted(set(man) - MANIFEST_KEYS)
    if extra:
        raise InputError(f"unknown manifest keys: {extra}")
    if "N_list" not in man or "seeds" not in man:
        raise InputError("manifest needs N_list and seeds")
    spec = man.get("spec")
    if isinstance(spec, dict):
        man["spec"] = MixtureSpec.from_dict(spec)
    elif isinstance(spec, str):
        base = os.path.dirname(os.path.abspath(path))
        man["spec"] = load_spec(spec if os.path.isabs(spec) else os.path.join(base, spec))
    elif cfg.spec_path:
        man["spec"] = load_spec(cfg.spec_path)
    else:
        raise InputError("no spec in manifest and no --spec given")
    seeds = man["seeds"]
    man["seeds"] = list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds]
    return man


def cmd_finite_n(cfg: RunConfig) -> int:
    from .finite import ROW_COLUMNS, run_manifest
    from .optimize import rs_fixed_point
    if not cfg.manifest_path:
        raise InputError("finite-n needs --manifest")
    man = load_manifest(cfg.manifest_path, cfg)
    spec = man["spec"]
    eps = float(man.get("epsilon", cfg.epsilon))
    q_p = _parisi(spec, cfg).q_P
    window = man.get("window") or cfg.window or [max(q_p - 0.05, 0.0), 1.0]
    q_star = rs_fixed_point(spec)
    rows = run_manifest(spec, man["N_list"], man["seeds"], eps, tuple(window), q_p, q_star,
                        int(man.get("n_samples", cfg.n_samples)), cfg.workers)
    name = man.get("outputs") or "finite_n.csv"
    h = cfg.hash(spec)
    write_csv(_out(cfg, name), ROW_COLUMNS, rows, h)
    summary = {}
    for n in sorted(set(int(r["N"]) for r in rows)):
        d = [r["F_TAP_at_gibbs_mag"] - r["F_N"] for r in rows
             if r["N"] == n and "F_TAP_at_gibbs_mag" in r]
        if d:
            summary[n] = {"rms_tap_gap": float(np.sqrt(np.mean(np.square(d)))), "count": len(d)}
    write_json(_out(cfg, os.path.splitext(name)[0] + ".json"),
               {"q_P": q_p, "q_star": q_star, "window": window, "epsilon": eps,
                "manifest": {k: v for k, v in man.items() if k != "spec"}, "summary": summary},
               cfg, spec)
    for n, s in summary.items():
        print(f"N={n} rms(F_TAP(<sigma>) - F_N) = {fmt(s['rms_tap_gap'])} over {s['count']} seeds")
    return EXIT_OK


HANDLERS = {"free-energy": cmd_free_energy, "tap-curve": cmd_tap_curve, "verify": cmd_verify,
            "finite-n": cmd_finite_n}


# ---------------------------------------------------------------- argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--spec", dest="spec_path", help="mixture spec JSON")
    common.add_argument("--out", dest="output_dir", default=None, help="output directory")
    common.add_argument("--config", help="JSON file with RunConfig overrides")
    common.add_argument("--seed", type=int)
    common.add_argument("--k", type=int, help="maximum number of atoms")
    common.add_argument("--starts", dest="n_starts", type=int, help="optimizer multistarts")
    common.add_argument("--curve-starts", dest="curve_starts", type=int,
                        help="random starts per tap-curve point (besides warm starts)")
    common.add_argument("--paths", dest="n_paths", type=int)
    common.add_argument("--steps", dest="n_steps", type=int)
    common.add_argument("--dx", type=float, help="PDE grid spacing")
    common.add_argument("--gamma-max", dest="gamma_max", type=float)
    common.add_argument("--u-grid", dest="u_grid", type=parse_u_grid, metavar="a:b:n")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--window", type=parse_window, metavar="lo,hi")
    common.add_argument("--dump-pde", dest="dump_pde", action="store_const", const=True)
    common.add_argument("--perturb-top", dest="perturb_top", type=float,
                        help="shift the top atom before verifying (negative control)")
    common.add_argument("--manifest", dest="manifest_path")
    common.add_argument("--workers", type=int)
    common.add_argument("-v", "--verbose", action="store_true")
    p = _Parser(prog="tapfe", description=__doc__)
    p.add_argument("--version", action="version", version=f"tapfe {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    d = {}
    if ns.config:
        try:
            with open(ns.config) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot load config {ns.config}: {exc}") from exc
        if not isinstance(d, dict):
            raise InputError("config must be a JSON object")
    d["command"] = ns.command
    skip = {"command", "config", "verbose"}
    for k, v in vars(ns).items():
        if k not in skip and v is not None:
            d[k] = v
    try:
        cfg = RunConfig.from_dict(d)
    except TypeError as exc:
        raise InputError(f"bad config value: {exc}") from exc
    if cfg.command != "finite-n" and not cfg.spec_path:
        raise InputError(f"{cfg.command} needs --spec")
    return cfg


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(ns)
        return HANDLERS[cfg.command](cfg)
    except (SpecParseError, InputError, DomainError, OSError) as exc:
        print(f"tapfe: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OptimizerError, ConvergenceError, GridError, TapfeError, FloatingPointError) as exc:
        print(f"tapfe: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

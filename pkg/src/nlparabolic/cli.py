"""Command-line front end.

Exit codes: 0 success, 1 mathematical failure, 2 no contraction horizon,
64 configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import fixed_point as fp
from .holder import SpaceTimeSection, parabolic_holder_norm
from .jet_core import NotEllipticError
from .linear_solver import export_trajectory
from .problems import ellipticity_at_initial, get_card
from .verify import PARTS, SUITES, run_suite

EXIT_OK, EXIT_MATH, EXIT_NO_HORIZON, EXIT_CONFIG = 0, 1, 2, 64


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str = "heat"
    n: int | None = None
    grid_n: int | None = None
    dt: float | None = None
    delta: float | None = None
    alpha: float = 0.5
    tol: float = 1e-9
    residual_tol: float = 1e-3
    max_iter: int = 50
    seed: int = 12345
    out: str = "out"
    suite: str = "all"

    def validate(self) -> "RunConfig":
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.grid_n is not None and (self.grid_n % 2 or self.grid_n < 8):
            raise ConfigError(f"grid-n must be even and >= 8, got {self.grid_n}")
        for name in ("tol", "residual_tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("dt", "delta"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive")
        return self


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    if args.config:
        try:
            values.update(read_config_file(args.config))
        except OSError as exc:
            raise ConfigError(str(exc)) from exc
    for key in types:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    conf = {}
    for key, v in values.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        kind = str(types[key])
        try:
            if "int" in kind:
                conf[key] = int(v)
            elif "float" in kind:
                conf[key] = float(v)
            else:
                conf[key] = str(v)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {v!r}") from exc
    return RunConfig(**conf).validate()


def _card_and_grid(cfg: RunConfig):
    try:
        card = get_card(cfg.problem)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from exc
    if cfg.n is not None and cfg.n != card.n:
        raise ConfigError(f"problem {card.name!r} lives on T^{card.n}, not T^{cfg.n}")
    return card, card.grid(cfg.grid_n)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_check_ellipticity(cfg: RunConfig) -> int:
    card, grid = _card_and_grid(cfg)
    report = ellipticity_at_initial(card, grid.N)
    payload = {"problem": card.name, **report.as_dict()}
    print(json.dumps(payload, sort_keys=True))
    _write_json(Path(cfg.out) / "ellipticity.json", payload)
    return EXIT_OK if report.elliptic else EXIT_MATH


def cmd_solve(cfg: RunConfig) -> int:
    card, grid = _card_and_grid(cfg)
    delta = cfg.delta or card.defaults.get("delta", 0.05)
    dt = cfg.dt or card.defaults.get("dt", 1e-4)
    try:
        res = fp.solve_nonlinear(card.spec, card.u0(grid), grid, delta, dt, tol=cfg.tol,
                                 max_iter=cfg.max_iter, alpha=cfg.alpha, seed=cfg.seed)
    except NotEllipticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MATH
    except fp.NoContractionHorizon as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_HORIZON
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    export_trajectory(res.solution, out / "trajectory.csv")
    res.trace.to_csv(out / "trace.csv")
    extra = {"problem": card.name, "N": grid.N, "dt": dt, "alpha": cfg.alpha,
             "residual_ok": bool(res.residual <= cfg.residual_tol)}
    if card.exact is not None:
        exact = np.stack([card.exact.sample(grid, t) for t in res.solution.times])
        extra["max_error_vs_exact"] = float(np.abs(exact - res.solution.values).max())
    res.write_summary(out / "summary.json", **extra)
    print(json.dumps({k: v for k, v in {**res.summary(), **extra}.items() if k != "norm"}, sort_keys=True))
    if not res.converged:
        return EXIT_NO_HORIZON
    if not extra["residual_ok"]:
        print(f"error: residual {res.residual:.3e} exceeds residual_tol {cfg.residual_tol:g}; "
              "reduce dt", file=sys.stderr)
        return EXIT_MATH
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    if cfg.suite != "all" and cfg.suite not in SUITES and cfg.suite not in PARTS:
        raise ConfigError(f"unknown suite {cfg.suite!r}; choose from {sorted(SUITES) + ['all']}")
    rows = run_suite(cfg.suite, cfg.seed)
    for row in rows:
        print(row.line())
    _write_json(Path(cfg.out) / f"verify_{cfg.suite}.json", [asdict(r) for r in rows])
    return EXIT_OK if all(r.passed for r in rows) else EXIT_MATH


def cmd_holder_norm(cfg: RunConfig) -> int:
    """Norm report of the card's exact solution, or of the fixed-point solution when none exists."""
    card, grid = _card_and_grid(cfg)
    delta = cfg.delta or card.defaults.get("delta", 0.05)
    dt = cfg.dt or card.defaults.get("dt", 1e-4)
    if card.exact is not None:
        times = np.linspace(0, delta, int(round(delta / dt)) + 1)
        u = SpaceTimeSection(grid, times, np.stack([card.exact.sample(grid, t) for t in times]))
    else:
        u = fp.solve_nonlinear(card.spec, card.u0(grid), grid, delta, dt, tol=cfg.tol,
                               alpha=cfg.alpha, seed=cfg.seed).solution
    report = parabolic_holder_norm(u, card.order, cfg.alpha, seed=cfg.seed)
    payload = {"problem": card.name, "alpha": cfg.alpha, **report.as_dict()}
    for key, value in payload.items():
        print(f"{key} = {value}")
    _write_json(Path(cfg.out) / "holder_norm.json", payload)
    return EXIT_OK


COMMANDS = {
    "check-ellipticity": cmd_check_ellipticity,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "holder-norm": cmd_holder_norm,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nlparabolic", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--problem")
        p.add_argument("--config")
        p.add_argument("--n", type=int)
        p.add_argument("--grid-n", dest="grid_n", type=int)
        p.add_argument("--dt", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--tol", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--suite")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

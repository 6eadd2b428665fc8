"""Command-line experiment runner.

Every subcommand accepts ``--config`` (TOML or JSON, chosen by extension),
explicit flags that override the file, ``--dry-run`` and ``--save-config``.
Exit codes: 0 success, 1 numerical failure, 2 configuration error,
3 game-rule violation, 4 strict-positivity precondition failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from . import analysis
from .errors import (
    ArgumentError,
    DomainError,
    GameRuleViolation,
    PotentialGamesError,
    PreconditionError,
    ResourceError,
)
from .games import (
    ExpertLossAdversary,
    GameConfig,
    make_adversary,
    make_learner,
    random_expert_losses,
    run_game,
)
from .potential import parse_final, parse_potential
from .serialize import fmt

SUBCOMMANDS = ("integer-game", "discrete-game", "continuous-game", "convergence",
               "monotonicity", "bounds", "verify-bounds")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_RULE, EXIT_PRECONDITION = 0, 1, 2, 3, 4


class ConfigError(ArgumentError):
    """Invalid experiment configuration; the message names the key."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key {key!r}: {message}")


@dataclass
class ExperimentConfig:
    subcommand: str
    T: int | None = None
    horizon: float | None = None
    k: int | None = None
    kmax: int | None = None
    final: str = "expfinal"
    potential: str | None = None
    adversary: str = "random-walk"
    learner: str = "potential"
    eps: list = field(default_factory=lambda: [0.1, 0.01])
    nu: float | None = None
    seed: int = 0
    out: str | None = None
    jobs: int = 1
    probe: list | None = None
    kind: str | None = None
    t: float | None = None
    max_step: float | None = None
    n_steps: int | None = None
    n_experts: int | None = None
    runs: int = 1
    c: float = 1.0

    # -- construction and serialization -----------------------------------

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = sorted(set(data) - set(cls.keys()))
        if unknown:
            raise ConfigError(unknown[0], "unknown key")
        if "subcommand" not in data:
            raise ConfigError("subcommand", "missing")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None) -> "ExperimentConfig":
        path = Path(path)
        try:
            if path.suffix.lower() == ".toml":
                data = tomllib.loads(path.read_text())
            elif path.suffix.lower() == ".json":
                data = json.loads(path.read_text())
            else:
                raise ConfigError("config", f"unsupported config extension {path.suffix!r}")
        except (OSError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a table/object")
        data.update(overrides or {})
        return cls.from_dict(data)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        data = self.to_dict()
        if path.suffix.lower() == ".toml":
            path.write_text(tomli_w.dumps(data))
        elif path.suffix.lower() == ".json":
            path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        else:
            raise ConfigError("save_config", f"unsupported config extension {path.suffix!r}")

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError("subcommand", f"must be one of {SUBCOMMANDS}")
        self._coerce()
        need = {
            "integer-game": ("T",),
            "discrete-game": ("horizon", "k"),
            "continuous-game": ("horizon", "max_step"),
            "convergence": ("horizon", "kmax"),
            "monotonicity": ("horizon", "kmax"),
            "bounds": ("kind", "t"),
            "verify-bounds": ("T", "n_experts"),
        }[self.subcommand]
        for key in need:
            if getattr(self, key) is None:
                raise ConfigError(key, f"required by {self.subcommand}")
        if self.jobs < 1:
            raise ConfigError("jobs", "must be at least 1")
        if self.runs < 1:
            raise ConfigError("runs", "must be at least 1")
        for e in self.eps:
            if not 0 < e < 1:
                raise ConfigError("eps", f"values must be in (0, 1), got {e}")
        for p in self.probe or []:
            if len(p) != 2:
                raise ConfigError("probe", f"expected [t, R], got {p}")
        if self.subcommand in ("integer-game", "discrete-game", "convergence", "monotonicity"):
            self.parsed_final()
        if self.subcommand in ("continuous-game", "verify-bounds"):
            self.parsed_potential()
        if self.subcommand.endswith("-game"):
            self._checked("adversary", make_adversary, self.adversary)
            self._checked("learner", make_learner, self.learner)
        if self.subcommand in ("bounds", "verify-bounds") and self.kind is not None:
            self._checked("kind", analysis._bound_kind, self.kind)
            if analysis._bound_kind(self.kind) == "uniform" and not (self.nu or 0) > 0:
                raise ConfigError("nu", "the uniform bound needs nu > 0")

    def _coerce(self):
        casts = {"T": int, "k": int, "kmax": int, "seed": int, "jobs": int, "runs": int,
                 "n_steps": int, "n_experts": int, "horizon": float, "nu": float, "t": float,
                 "max_step": float, "c": float}
        for key, cast in casts.items():
            val = getattr(self, key)
            if val is None:
                continue
            if isinstance(val, bool) or (cast is int and isinstance(val, float)
                                         and not val.is_integer()):
                raise ConfigError(key, f"expected {cast.__name__}, got {val!r}")
            try:
                setattr(self, key, cast(val))
            except (TypeError, ValueError):
                raise ConfigError(key, f"expected {cast.__name__}, got {val!r}") from None
        for key in ("final", "adversary", "learner"):
            if not isinstance(getattr(self, key), str):
                raise ConfigError(key, "expected a string")
        try:
            self.eps = [float(e) for e in self.eps]
            if self.probe is not None:
                self.probe = [[float(x) for x in p] for p in self.probe]
        except (TypeError, ValueError) as exc:
            raise ConfigError("eps" if "eps" in str(exc) else "probe", str(exc)) from None

    @staticmethod
    def _checked(key, fn, *args):
        try:
            return fn(*args)
        except (ConfigError, PreconditionError):
            raise
        except (PotentialGamesError, ValueError, OSError) as exc:
            raise ConfigError(key, str(exc)) from None

    def parsed_final(self):
        return self._checked("final", parse_final, self.final)

    def parsed_potential(self):
        desc = self.potential or ("normalhedge" if self.subcommand == "verify-bounds" else None)
        if desc is None:
            raise ConfigError("potential", f"required by {self.subcommand}")
        return self._checked("potential", parse_potential, desc)


# -- execution -------------------------------------------------------------

def _game_config(cfg: ExperimentConfig) -> GameConfig:
    common = dict(seed=cfg.seed, eps=tuple(cfg.eps), c=cfg.c)
    if cfg.subcommand == "integer-game":
        return GameConfig.integer(cfg.T, cfg.parsed_final(), **common)
    if cfg.subcommand == "discrete-game":
        return GameConfig.discrete(cfg.horizon, cfg.k, cfg.parsed_final(), **common)
    adversary = make_adversary(cfg.adversary)
    if isinstance(adversary, ExpertLossAdversary):
        return GameConfig.experts(cfg.parsed_potential(), adversary.losses.shape[1],
                                  adversary.losses.shape[0], **common)
    return GameConfig.continuous(cfg.parsed_potential(), cfg.max_step, cfg.horizon,
                                 cfg.n_steps, **common)


def _run_game_cmd(cfg: ExperimentConfig) -> str:
    gc = _game_config(cfg)
    adversary = make_adversary(cfg.adversary)
    initial = None
    if isinstance(adversary, ExpertLossAdversary):
        from .measure import RegretState
        initial = RegretState.experts(len(adversary.names), adversary.names)
    trace = run_game(gc, cfg.learner, adversary, initial_state=initial, record_history=False)
    if cfg.out:
        trace.to_csv(cfg.out)
    max_eps = max((max(r.eps_regret) for r in trace.records), default=float("nan"))
    parts = [f"final_score={fmt(trace.final_score)}", f"max_eps_regret={fmt(max_eps)}",
             f"iterations={len(trace.records) - 1}"]
    if gc.mode == "continuous":
        parts += [f"V_n={fmt(trace.V_n)}", f"t_reached={fmt(trace.t_reached)}"]
        if trace.terminated_early:
            parts.append("terminated_early=true")
    return " ".join(parts)


def _report_out(cfg: ExperimentConfig, report: analysis.StudyReport) -> str:
    report = analysis.StudyReport(**{**report.to_dict(), "seed": cfg.seed})
    text = report.to_json()
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    failed = [k for k, v in report.verdicts.items() if not v]
    return f"study={report.study} passed={str(report.passed).lower()}" + (
        f" failed={','.join(failed)}" if failed else "")


def _convergence_point(args):
    final_desc, horizon, kmax, probe = args
    return analysis.convergence_study(parse_final(final_desc), horizon, kmax, [probe])


def _convergence_cmd(cfg: ExperimentConfig) -> str:
    final = cfg.parsed_final()
    probes = cfg.probe or [[0.0, 0.0]]
    if cfg.jobs > 1 and len(probes) > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            parts = list(pool.map(_convergence_point,
                                  [(cfg.final, cfg.horizon, cfg.kmax, tuple(p)) for p in probes]))
        report = analysis.StudyReport(
            "convergence", parts[0].params, [p for r in parts for p in r.probes],
            {k: v for r in parts for k, v in r.values.items()},
            {k: v for r in parts for k, v in r.verdicts.items()}, parts[0].tolerances)
    else:
        report = analysis.convergence_study(final, cfg.horizon, cfg.kmax, probes)
    values = report.values[next(iter(report.values))]
    return _report_out(cfg, report) + f" lower_kmax={fmt(values['lower'][-1])} limit={fmt(values['limit'])}"


def _monotonicity_cmd(cfg: ExperimentConfig) -> str:
    report = analysis.monotonicity_study(cfg.parsed_final(), cfg.horizon, cfg.kmax,
                                         probes=cfg.probe)
    return _report_out(cfg, report)


def _bounds_cmd(cfg: ExperimentConfig) -> str:
    vals = [analysis.bound_value(cfg.kind, cfg.t, e, cfg.nu) for e in cfg.eps]
    if len(vals) == 1:
        return fmt(vals[0])
    return " ".join(f"eps={fmt(e)}:{fmt(v)}" for e, v in zip(cfg.eps, vals))


def _expert_trace(args):
    potential_desc, n_experts, T, seed, eps = args
    gc = GameConfig.experts(parse_potential(potential_desc), n_experts, T, seed=seed,
                            eps=tuple(eps))
    losses = random_expert_losses(n_experts, T, seed)
    return run_game(gc, "potential", ExpertLossAdversary(losses), record_history=False)


def _verify_bounds_cmd(cfg: ExperimentConfig) -> str:
    pot = cfg.potential or "normalhedge"
    kind = cfg.kind or "normal_hedge"
    tasks = [(pot, cfg.n_experts, cfg.T, cfg.seed + r, cfg.eps) for r in range(cfg.runs)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            traces = list(pool.map(_expert_trace, tasks))
    else:
        traces = [_expert_trace(t) for t in tasks]
    report = analysis.bound_verification(traces, kind, cfg.eps, cfg.nu)
    report = analysis.StudyReport(report.study, {**report.params, "potential": pot,
                                                 "n_experts": cfg.n_experts, "T": cfg.T,
                                                 "runs": cfg.runs},
                                  report.probes, report.values, report.verdicts,
                                  report.tolerances)
    return _report_out(cfg, report) + f" violations={len(report.values['violations'])}"


_COMMANDS = {
    "integer-game": _run_game_cmd,
    "discrete-game": _run_game_cmd,
    "continuous-game": _run_game_cmd,
    "convergence": _convergence_cmd,
    "monotonicity": _monotonicity_cmd,
    "bounds": _bounds_cmd,
    "verify-bounds": _verify_bounds_cmd,
}


def execute(cfg: ExperimentConfig) -> str:
    """Run a validated config and return the one-line summary."""
    return _COMMANDS[cfg.subcommand](cfg)


# -- argument parsing --------------------------------------------------------

def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _probe(text: str) -> list[float]:
    vals = _float_list(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"probe must be 't,R', got {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="TOML or JSON experiment file")
    common.add_argument("--save-config", dest="save_config",
                        help="write the merged config to this path")
    common.add_argument("--dry-run", dest="dry_run", action="store_true",
                        help="validate the config and exit")
    common.add_argument("--T", type=int, help="integer horizon / number of rounds")
    common.add_argument("--horizon", type=float, help="real time horizon")
    common.add_argument("--k", type=int, help="lattice level")
    common.add_argument("--kmax", type=int, help="largest lattice level of a study")
    common.add_argument("--final", help="final potential, e.g. expfinal")
    common.add_argument("--potential", help="potential, e.g. exp:eta=1 or normalhedge")
    common.add_argument("--adversary", help="adversary, e.g. random-walk or biased:p=0.75")
    common.add_argument("--learner", help="potential, uniform or random")
    common.add_argument("--eps", type=_float_list, help="comma-separated eps list")
    common.add_argument("--nu", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output CSV/JSON path")
    common.add_argument("--jobs", type=int, help="worker processes for sweeps")
    common.add_argument("--probe", type=_probe, action="append", help="probe point 't,R'")
    common.add_argument("--kind", help="bound kind: exp, normalhedge or uniform")
    common.add_argument("--t", type=float, help="time at which to evaluate a bound")
    common.add_argument("--max-step", dest="max_step", type=float)
    common.add_argument("--n-steps", dest="n_steps", type=int)
    common.add_argument("--n-experts", dest="n_experts", type=int)
    common.add_argument("--runs", type=int, help="number of seeds (seed, seed+1, ...)")
    common.add_argument("--c", type=float, help="aggregate-loss constant")
    parser = argparse.ArgumentParser(prog="potgames", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = vars(parser.parse_args(argv))
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    config_path = ns.pop("config", None)
    save_path = ns.pop("save_config", None)
    dry = ns.pop("dry_run", False)
    try:
        if config_path:
            cfg = ExperimentConfig.load(config_path, ns)
        else:
            cfg = ExperimentConfig.from_dict(ns)
        if save_path:
            cfg.save(save_path)
        if dry:
            print(f"config ok: {cfg.subcommand}")
            return EXIT_OK
        print(execute(cfg))
        return EXIT_OK
    except GameRuleViolation as exc:
        print(f"game rule violation: {exc}", file=sys.stderr)
        return EXIT_RULE
    except PreconditionError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ArgumentError, DomainError, ResourceError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PotentialGamesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

"""Command line: ``run`` one configuration, ``sweep`` an axis, or print ``alpha``.

Configuration files are flat YAML (or JSON) mappings whose keys are the
:class:`~ehfl.sim.SimConfig` field names. A file that also carries ``axis``
and ``values`` is a sweep specification.

Exit codes: 0 success, 1 configuration or I/O error, 2 simulation invariant
violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import yaml

from ehfl.errors import ConfigError, SimulationInvariantError
from ehfl.policy import Variant
from ehfl.sim import ExperimentResult, SimConfig, resolve_alpha, run_experiment

log = logging.getLogger("ehfl")

AXES = {
    "iterations": "T",
    "mean_income": "m",
    "users": "K",
    "threshold": "xi",
}
AXIS_ALIASES = {"t": "iterations", "m": "mean_income", "k": "users", "xi": "threshold"}
SWEEP_KEYS = {"axis", "values", "strategies", "report_iterations", "output_path"}

# record field -> CSV column stem
COLUMNS = {
    "mean_battery_norm": "battery_norm",
    "error": "error",
    "engaged": "engaged",
    "attempted": "attempted",
    "successes": "successes",
    "lam": "lambda",
}
HEADER = ["axis", "axis_value", "strategy", "alpha", "t"] + [
    f"{stem}_{stat}" for stem in COLUMNS.values() for stat in ("mean", "std")
]

_FIELD_TYPES = {f.name: f.type for f in fields(SimConfig)}


@dataclass(frozen=True)
class SweepSpec:
    """One axis swept over ``values`` for each strategy.

    ``threshold`` values are fractions of ``B_max``. For the ``iterations``
    axis a single run to ``max(values)`` is reported at each listed
    iteration; other axes report at ``report_iterations`` (default: the
    final iteration).
    """

    axis: str
    values: tuple
    base: SimConfig
    strategies: tuple[Variant, ...]
    output_path: Path | None = None
    report_iterations: tuple[int, ...] = field(default=())

    def __post_init__(self):
        axis = AXIS_ALIASES.get(str(self.axis).lower(), str(self.axis).lower())
        if axis not in AXES:
            raise ConfigError(f"axis: must be one of {sorted(AXES)} (got {self.axis!r})")
        object.__setattr__(self, "axis", axis)
        if not self.values:
            raise ConfigError("values: must be a non-empty list")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ConfigError("values: must be strictly increasing")
        if not self.strategies:
            raise ConfigError("strategies: must be a non-empty list")
        object.__setattr__(self, "strategies", tuple(Variant.parse(s) for s in self.strategies))
        for v in self.values:
            self.point(v, self.strategies[0])  # validates every sweep point

    def point(self, value, strategy: Variant) -> SimConfig:
        name = AXES[self.axis]
        if self.axis == "threshold":
            value = float(value) * self.base.B_max
        elif self.axis in ("iterations", "users"):
            value = _as_int(name, value)
        else:
            value = float(value)
        if self.axis == "iterations":
            return replace(self.base, strategy=strategy, T=max(self.values))
        return replace(self.base, strategy=strategy, **{name: value})

    def report_at(self, cfg: SimConfig) -> tuple[int, ...]:
        if self.axis == "iterations":
            return tuple(int(v) for v in self.values)
        return self.report_iterations or (cfg.T,)


def _as_int(name, value):
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected an integer (got {value!r})")
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, int):
        return value
    raise ConfigError(f"{name}: expected an integer (got {value!r})")


def _coerce(name: str, value):
    kind = _FIELD_TYPES[name]
    if value is None:
        return None
    try:
        if kind == "int":
            return _as_int(name, value)
        if kind == "bool":
            if not isinstance(value, bool):
                raise ConfigError(f"{name}: expected true/false (got {value!r})")
            return value
        if "float" in kind:
            if isinstance(value, bool):
                raise ConfigError(f"{name}: expected a number (got {value!r})")
            return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected a number (got {value!r})") from exc
    return value


def config_from_mapping(data: dict, allow_sweep: bool = True) -> SimConfig | SweepSpec:
    """Validate a flat mapping into a :class:`SimConfig` or :class:`SweepSpec`."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a key-value mapping")
    sweep = {k: data[k] for k in SWEEP_KEYS & data.keys()}
    params = {k: v for k, v in data.items() if k not in SWEEP_KEYS}
    unknown = sorted(set(params) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(map(str, unknown))}")
    base = SimConfig(**{k: _coerce(k, v) for k, v in params.items()})
    if not sweep:
        return base
    if not allow_sweep:
        raise ConfigError(f"sweep keys not allowed here: {', '.join(sorted(sweep))}")
    for required in ("axis", "values"):
        if required not in sweep:
            raise ConfigError(f"{required}: required in a sweep specification")
    values = sweep["values"]
    if not isinstance(values, list):
        raise ConfigError("values: must be a list")
    strategies = sweep.get("strategies") or [base.strategy]
    report = sweep.get("report_iterations") or ()
    if isinstance(report, int):
        report = [report]
    out = sweep.get("output_path")
    return SweepSpec(
        axis=sweep["axis"],
        values=tuple(values),
        base=base,
        strategies=tuple(strategies),
        output_path=Path(out) if out else None,
        report_iterations=tuple(_as_int("report_iterations", t) for t in report),
    )


def parse_config(file: str | Path | None) -> SimConfig | SweepSpec:
    """Read a configuration file; ``None`` means all defaults."""
    if file is None:
        return SimConfig()
    path = Path(file)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    return config_from_mapping(data)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def result_rows(result: ExperimentResult, axis: str, axis_value, report_at: Sequence[int]) -> list[list[str]]:
    """CSV rows of ``result`` at each iteration in ``report_at``.

    ``axis_value=None`` labels each row with its own iteration number.
    """
    mean, std = result.mean, result.std
    rows = []
    for t in report_at:
        if not 1 <= t <= result.cfg.T:
            raise ConfigError(f"report iteration {t} outside 1..{result.cfg.T}")
        row = [axis, _fmt(t if axis_value is None else axis_value), result.cfg.strategy.value, _fmt(result.alpha), str(t)]
        for name in COLUMNS:
            row += [_fmt(float(mean[name][t - 1])), _fmt(float(std[name][t - 1]))]
        rows.append(row)
    return rows


def write_csv(path: Path, rows: list[list[str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        writer.writerows(rows)


def write_metadata(path: Path, meta: dict) -> None:
    from ehfl import __version__

    meta = {"package_version": __version__, **meta}
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def run_single(cfg: SimConfig, out_dir: Path, workers: int = 1) -> Path:
    """Run one configuration and write ``trace.csv`` plus ``trace.meta.json``."""
    log.info("running %s: K=%d T=%d, %d replications", cfg.strategy.value, cfg.K, cfg.T, cfg.replications)
    result = run_experiment(cfg, workers=workers)
    rows = result_rows(result, "iterations", None, range(1, cfg.T + 1))
    path = out_dir / "trace.csv"
    write_csv(path, rows)
    write_metadata(out_dir / "trace.meta.json", {"config": cfg.to_dict(), "alpha": result.alpha})
    return path


def run_sweep(spec: SweepSpec, out_dir: Path | None = None, workers: int = 1) -> Path:
    """Run every (axis value, strategy) pair and write one CSV.

    Row groups are ordered by axis value, then strategy, in the order given.
    """
    out_dir = Path(out_dir or spec.output_path or ".")
    rows: list[list[str]] = []
    done: dict[SimConfig, ExperimentResult] = {}
    points = []
    for value in spec.values:
        for strategy in spec.strategies:
            cfg = spec.point(value, strategy)
            if cfg not in done:
                log.info("sweep %s=%s strategy=%s", spec.axis, value, strategy.value)
                done[cfg] = run_experiment(cfg, workers=workers)
            result = done[cfg]
            rows += result_rows(result, spec.axis, value, spec.report_at(cfg) if spec.axis != "iterations" else [int(value)])
            points.append({"axis_value": value, "strategy": strategy.value, "alpha": result.alpha})
    path = out_dir / f"sweep_{spec.axis}.csv"
    write_csv(path, rows)
    write_metadata(
        out_dir / f"sweep_{spec.axis}.meta.json",
        {
            "axis": spec.axis,
            "values": list(spec.values),
            "strategies": [s.value for s in spec.strategies],
            "report_iterations": list(spec.report_iterations),
            "base_config": spec.base.to_dict(),
            "points": points,
        },
    )
    return path


def alpha_report(cfg: SimConfig) -> dict[str, float | None]:
    return {
        "strategy": cfg.strategy.value,
        "alpha": resolve_alpha(cfg),
        "alpha_edk": resolve_alpha(replace(cfg, strategy=Variant.EDK_AC, alpha=None)),
        "alpha_emk": resolve_alpha(replace(cfg, strategy=Variant.EMK_AC, alpha=None)),
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ehfl", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "simulate one configuration"),
        ("sweep", "simulate a sweep specification"),
        ("alpha", "print the broadcast sleep slope without simulating"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--replications", type=int, default=None)
        if name != "alpha":
            p.add_argument("--out", type=Path, default=None, help="output directory")
            p.add_argument("--workers", type=int, default=1, help="processes for replications")
        p.add_argument("-q", "--quiet", action="store_true", help="no progress on stderr")
    return parser


def _apply_overrides(cfg: SimConfig, args) -> SimConfig:
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.replications is not None:
        changes["replications"] = args.replications
    return replace(cfg, **changes) if changes else cfg


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        parsed = parse_config(args.config)
        if args.command == "sweep":
            if not isinstance(parsed, SweepSpec):
                raise ConfigError("sweep needs a config with 'axis' and 'values'")
            spec = replace(parsed, base=_apply_overrides(parsed.base, args))
            path = run_sweep(spec, args.out, workers=args.workers)
            print(path)
            return 0
        if isinstance(parsed, SweepSpec):
            raise ConfigError(f"{args.command} takes a plain config, not a sweep specification")
        cfg = _apply_overrides(parsed, args)
        if args.command == "alpha":
            for key, value in alpha_report(cfg).items():
                print(f"{key} {'none' if value is None else value}")
            return 0
        path = run_single(cfg, args.out or Path("."), workers=args.workers)
        print(path)
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    except SimulationInvariantError as exc:
        print(f"simulation invariant violated: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

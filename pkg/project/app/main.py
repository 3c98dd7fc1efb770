from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from .engine import Cell, run_cells
from .errors import ConfigError, EntrouteError
from .log_config import configure_logging, get_logger
from .results import provenance_lines, summary_line, write_csv
from .schemas import ExperimentConfig, RootStrategy, Scheme, SchemeKind, TopologySpec
from .settings import Settings, get_settings
from .topology import build_topology, describe, select_roots

logger = get_logger("app.main")

# file/flag key -> ExperimentConfig field
CONFIG_KEYS = {
    "topology": "topology",
    "scheme": "schemes",
    "p": "p",
    "q": "q",
    "tco": "t_co",
    "roots": "roots",
    "distances": "distances",
    "attempts": "attempts_per_point",
    "warmup": "warmup_steps",
    "seed": "seed",
    "output": "output",
    "slow-control": "slow_control",
    "via-root-strict": "via_root_strict",
}
FIELD_KEYS = {field: key for key, field in CONFIG_KEYS.items()}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


# ---------- Argument and file parsing ----------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entroute",
        description="Entanglement routing rate experiments over multi-tree, single-tree and synchronous schemes.",
    )
    parser.add_argument("--config", type=Path, help="key = value config file; flags override it")
    parser.add_argument("--topology", help="grid:RxC, er:N:P, barbell:N[:P], path:N or file:PATH")
    parser.add_argument("--scheme", help="comma list of multi-tree, single-tree, synchronous, or 'all'")
    parser.add_argument("--p", help="direct-link generation probability")
    parser.add_argument("--q", help="swap success probability")
    parser.add_argument("--tco", help="coherence time in unit times")
    parser.add_argument(
        "--roots", action="append", metavar="SCHEME=STRATEGY",
        help="root strategy for one scheme, e.g. multi-tree=grid-quadrants (repeatable)",
    )
    parser.add_argument("--distances", help="'2..10' or '2,3,5'")
    parser.add_argument("--attempts", help="attempts per distance")
    parser.add_argument("--warmup", help="unit times between asynchronous attempts")
    parser.add_argument("--seed", help="master seed")
    parser.add_argument("--output", help="CSV path")
    parser.add_argument("--slow-control", action="store_true", default=None, help="one DODAG hop per step")
    parser.add_argument("--via-root-strict", action="store_true", default=None, help="single-tree paths must pass the root")
    parser.add_argument("--log-level", help="override ENTROUTE_LOG_LEVEL")
    return parser


def read_config_file(path: Path) -> Dict[str, str]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError("config", f"{path}:{lineno}: expected 'key = value'")
        if key not in CONFIG_KEYS:
            raise ConfigError(key, f"unknown key ({path}:{lineno})")
        raw[key] = value.strip()
    return raw


def _flag_values(args: argparse.Namespace) -> Dict[str, str]:
    raw: Dict[str, str] = {}
    for key in CONFIG_KEYS:
        value = getattr(args, key.replace("-", "_"), None)
        if value is None:
            continue
        if isinstance(value, bool):
            raw[key] = "true" if value else "false"
        elif isinstance(value, list):
            raw[key] = ";".join(value)
        else:
            raw[key] = str(value)
    return raw


def parse_distances(text: str) -> List[int]:
    text = text.strip()
    if ".." in text:
        lo, _, hi = text.partition("..")
        start, stop = int(lo), int(hi)
        if stop < start:
            raise ValueError(f"empty range {text!r}")
        return list(range(start, stop + 1))
    return [int(part) for part in text.split(",") if part.strip()]


def parse_schemes(text: str) -> List[SchemeKind]:
    if text.strip() == "all":
        return list(SchemeKind)
    return [SchemeKind(part.strip()) for part in text.split(",") if part.strip()]


def parse_roots(text: str) -> Dict[SchemeKind, RootStrategy]:
    roots: Dict[SchemeKind, RootStrategy] = {}
    for entry in text.split(";"):
        if not entry.strip():
            continue
        scheme, sep, strategy = entry.partition("=")
        if not sep:
            raise ValueError(f"expected SCHEME=STRATEGY, got {entry.strip()!r}")
        roots[SchemeKind(scheme.strip())] = RootStrategy.parse(strategy)
    return roots


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


_CONVERTERS = {
    "topology": TopologySpec.parse,
    "scheme": parse_schemes,
    "roots": parse_roots,
    "distances": parse_distances,
    "slow-control": _parse_bool,
    "via-root-strict": _parse_bool,
}


def _field_error(exc: ValidationError) -> ConfigError:
    first = exc.errors()[0]
    loc = [str(part) for part in first.get("loc", ())]
    key = FIELD_KEYS.get(loc[0], loc[0]) if loc else "config"
    return ConfigError(key, first.get("msg", str(exc)))


def build_config(raw: Dict[str, str]) -> ExperimentConfig:
    """Typed, validated config from raw key/value strings."""
    if "topology" not in raw:
        raise ConfigError("topology", "required (e.g. --topology grid:10x10)")
    values: Dict[str, Any] = {"schemes": list(SchemeKind)}
    for key, text in raw.items():
        convert = _CONVERTERS.get(key)
        try:
            values[CONFIG_KEYS[key]] = convert(text) if convert else text
        except ValidationError as exc:
            raise ConfigError(key, _field_error(exc).args[0]) from exc
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from exc
    try:
        return ExperimentConfig(**values)
    except ValidationError as exc:
        raise _field_error(exc) from exc


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    raw = read_config_file(args.config) if args.config is not None else {}
    raw.update(_flag_values(args))
    config = build_config(raw)
    echo_config(config)
    return config


def echo_config(config: ExperimentConfig) -> None:
    for name in ExperimentConfig.model_fields:
        value = getattr(config, name)
        if name == "schemes":
            value = ",".join(kind.value for kind in value)
        elif name == "roots":
            value = "; ".join(f"{kind.value}={strategy}" for kind, strategy in value.items())
        elif name == "distances":
            value = ",".join(str(d) for d in value)
        logger.info("config %s = %s", FIELD_KEYS.get(name, name), value)


def parse_config(argv: Optional[Sequence[str]] = None) -> ExperimentConfig:
    return config_from_args(build_parser().parse_args(argv))


# ---------- Orchestration ----------

def run_cli(config: ExperimentConfig, settings: Optional[Settings] = None) -> int:
    settings = settings or get_settings()
    output = Path(config.output)
    if not output.parent.is_dir():
        logger.error("cannot write %s: directory %s does not exist", output, output.parent)
        return 1

    topo = build_topology(config.topology, config.seed)
    facts = describe(topo)
    logger.info(
        "Topology %s: %d nodes, %d edges, %d component(s), diameter %d",
        topo.name, facts["nodes"], facts["edges"], facts["components"], facts["diameter"],
    )

    options = config.options(trace_control=settings.trace_control, audit=settings.audit)
    workload = config.workload()
    params = config.params()
    resolved: Dict[SchemeKind, List[int]] = {}
    cells: List[Cell] = []
    for kind in config.schemes:
        roots = select_roots(topo, config.roots[kind]) if kind.is_asynchronous else []
        if kind.is_asynchronous:
            resolved[kind] = roots
            logger.info("%s roots (%s): %s", kind.value, config.roots[kind], roots)
        try:
            scheme = Scheme(kind=kind, roots=roots)
        except ValidationError as exc:
            raise ConfigError("roots", f"{kind.value}: {exc.errors()[0]['msg']}") from exc
        cells.extend(
            Cell(topo, scheme, params, distance, workload, config.seed, options)
            for distance in workload.distances
        )

    records = run_cells(cells, settings.worker_count())
    try:
        write_csv(output, records, provenance_lines(config, resolved))
    except OSError as exc:
        logger.error("cannot write %s: %s", output, exc.strerror or exc)
        return 1
    logger.info("Wrote %d record(s) to %s", len(records), output)
    for kind in config.schemes:
        print(summary_line(kind, records))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings = get_settings()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or settings.log_level)
    try:
        config = config_from_args(args)
        return run_cli(config, settings)
    except ConfigError as exc:
        logger.error("Invalid configuration: %s", exc)
        return 2
    except (EntrouteError, OSError) as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())

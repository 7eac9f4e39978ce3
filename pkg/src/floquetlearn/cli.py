"""Command-line entry point: ``floquetlearn run|validate|list-scenarios``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import yaml
from threadpoolctl import threadpool_limits

from . import __version__
from .magnus import BranchAmbiguityError
from .scenarios import SCENARIOS, ConfigError, ScenarioResult, template_text, validate

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_UNRESOLVED = 4
THREADS_ENV = "FLOQUETLEARN_THREADS"

log = logging.getLogger("floquetlearn")


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row.get(c)) for c in columns])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def load_config(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    return validate(raw)


def _threads() -> int | None:
    val = os.environ.get(THREADS_ENV)
    if not val:
        return None
    try:
        n = int(val)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"must be a positive integer, got {val!r}") from None
    if n < 1:
        raise ConfigError(THREADS_ENV, f"must be a positive integer, got {val!r}")
    return n


def run(config_path: str | Path) -> int:
    try:
        cfg = load_config(config_path)
        threads = _threads()
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_VALIDATION
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    scenario = SCENARIOS[cfg["scenario"]]
    start = time.perf_counter()
    try:
        with threadpool_limits(limits=threads):
            result: ScenarioResult = scenario.runner(cfg)
    except (BranchAmbiguityError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.error("numerical guard in %s: %s", scenario.name, exc)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # ConfigError, too few constraints for the ansatz, sizes beyond a simulator limit
        log.error("invalid configuration: %s", exc)
        return EXIT_VALIDATION
    wall = time.perf_counter() - start
    write_csv(out / "results.csv", result.columns, result.rows)
    if result.coefficients is not None:
        write_csv(out / "coefficients.csv", result.coef_columns, result.coefficients)
    manifest = dict(
        scenario=scenario.name,
        config=cfg,
        master_seed=cfg.get("master_seed", 0),
        versions=dict(floquetlearn=__version__, python=platform.python_version(), numpy=np.__version__,
                      scipy=scipy.__version__, pyyaml=yaml.__version__),
        threads=threads,
        wall_time_s=wall,
        unresolved=result.unresolved,
        summary=result.summary,
    )
    with open(out / "manifest.json", "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("%s finished in %.1f s; outputs in %s", scenario.name, wall, out)
    if result.unresolved:
        log.warning("%s: unresolved terms or exhausted budget (see manifest summary)", scenario.name)
        return EXIT_UNRESOLVED
    return EXIT_OK


def list_scenarios(show_templates: bool = False) -> str:
    width = max(len(n) for n in SCENARIOS)
    lines = [f"{name:<{width}}  {s.description}" for name, s in SCENARIOS.items()]
    if show_templates:
        for name in SCENARIOS:
            lines += ["", f"# --- {name}", template_text(name).rstrip()]
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="floquetlearn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a scenario configuration")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate", help="check a configuration without running it")
    p_val.add_argument("config")
    p_list = sub.add_parser("list-scenarios", help="list scenarios and their default templates")
    p_list.add_argument("--templates", action="store_true", help="also print every template")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return run(args.config)
    if args.command == "validate":
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        print(f"ok: {cfg['scenario']}")
        return EXIT_OK
    print(list_scenarios(args.templates))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

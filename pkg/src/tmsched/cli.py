"""Command-line front end.

Experiment configs are INI files read with :mod:`configparser`::

    [system]
    m = 4
    k = 2
    horizon = 100000
    seed = 1
    ; n = 2            (distributed only)

    [scheduler]
    kind = centralized            ; or: distributed
    ; phase3_serves_blocks = false

    [adversary]
    kind = token-bucket           ; or: lower-bound, replay
    rho = 1/8
    b = 1
    ; shape = uniform             (uniform | singleton)
    ; attempts = 4
    ; owner_policy = least-loaded
    ; stream = generations.csv    (replay only)

    [output]
    dir = out
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import sys
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .adversary import (
    AdversaryParams,
    LowerBoundGenerator,
    ReplayGenerator,
    StreamFormatError,
    TokenBucketGenerator,
    WorkloadShape,
    dump_stream,
    load_stream,
    verify_admissibility,
)
from .analysis import analyze
from .centralized import CentralizedScheduler, centralized_bounds
from .combinatorics import (
    ConflictGraph,
    alternative_greedy_coloring,
    build_set_family,
    primary_greedy_coloring,
)
from .distributed import DistributedScheduler, distributed_bounds
from .engine import run_simulation
from .model import QUEUE_BASED, QUEUE_FREE, InvalidInput, SystemConfig

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, msg: str, line: Optional[int] = None) -> None:
        super().__init__(f"line {line}: {msg}" if line else msg)
        self.line = line


@dataclass
class ExperimentConfig:
    system: SystemConfig
    scheduler: str
    adversary: str
    params: AdversaryParams
    shape: WorkloadShape = WorkloadShape()
    stream: Optional[Path] = None
    out_dir: Path = Path("tmsched-out")
    phase3_serves_blocks: bool = False

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        s = self.system
        cp["system"] = {"m": str(s.m), "k": str(s.k), "horizon": str(s.horizon), "seed": str(s.seed)}
        if self.scheduler == "distributed":
            cp["system"]["n"] = str(s.n)
        cp["scheduler"] = {"kind": self.scheduler}
        if self.phase3_serves_blocks:
            cp["scheduler"]["phase3_serves_blocks"] = "true"
        adv = {"kind": self.adversary, "rho": str(self.params.rho), "b": str(self.params.b)}
        if self.adversary == "token-bucket":
            adv["shape"] = self.shape.kind
            if self.shape.attempts:
                adv["attempts"] = str(self.shape.attempts)
            adv["owner_policy"] = self.shape.owner_policy
        if self.stream is not None:
            adv["stream"] = str(self.stream)
        cp["adversary"] = adv
        cp["output"] = {"dir": str(self.out_dir)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _line_of(text: str, section: str, key: Optional[str] = None) -> Optional[int]:
    current = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if key is None and current == section:
                return i
        elif current == section and key is not None:
            name = line.split("=", 1)[0].split(":", 1)[0].strip()
            if name == key:
                return i
    return None


def parse_config(text: str, base: Path = Path(".")) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError(str(exc).splitlines()[0], line) from None

    def need(section: str, key: str) -> str:
        if not cp.has_section(section):
            raise ConfigError(f"missing section [{section}]")
        if not cp.has_option(section, key):
            raise ConfigError(f"[{section}] needs '{key}'", _line_of(text, section))
        return cp.get(section, key)

    def as_int(section: str, key: str, default: Optional[int] = None) -> int:
        raw = cp.get(section, key, fallback=None) if cp.has_section(section) else None
        if raw is None:
            if default is None:
                need(section, key)
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {raw!r}", _line_of(text, section, key)) from None

    scheduler = need("scheduler", "kind").strip()
    if scheduler not in ("centralized", "distributed"):
        raise ConfigError(f"unknown scheduler {scheduler!r}", _line_of(text, "scheduler", "kind"))
    model = QUEUE_BASED if scheduler == "distributed" else QUEUE_FREE

    m, k = as_int("system", "m"), as_int("system", "k")
    horizon, seed = as_int("system", "horizon"), as_int("system", "seed", 0)
    n = as_int("system", "n", 1 if scheduler == "centralized" else None)
    if k > m or k < 1:
        raise ConfigError(f"k must lie in [1, m]; got k={k}, m={m}", _line_of(text, "system", "k"))
    try:
        system = SystemConfig(m=m, k=k, horizon=horizon, n=n, seed=seed, model=model)
    except InvalidInput as exc:
        raise ConfigError(str(exc), _line_of(text, "system")) from None

    adversary = need("adversary", "kind").strip()
    if adversary not in ("token-bucket", "lower-bound", "replay"):
        raise ConfigError(f"unknown adversary {adversary!r}", _line_of(text, "adversary", "kind"))
    rho_raw = need("adversary", "rho")
    try:
        rho = Fraction(rho_raw.strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"rho must be a rational such as 1/8, got {rho_raw!r}",
                          _line_of(text, "adversary", "rho")) from None
    b = as_int("adversary", "b")
    try:
        params = AdversaryParams(rho, b, model)
    except InvalidInput as exc:
        raise ConfigError(str(exc), _line_of(text, "adversary", "rho")) from None
    if adversary == "lower-bound" and scheduler != "centralized":
        raise ConfigError("the lower-bound adversary drives the centralized scheduler",
                          _line_of(text, "adversary", "kind"))

    shape = WorkloadShape(
        kind=cp.get("adversary", "shape", fallback="uniform").strip(),
        k=k,
        attempts=as_int("adversary", "attempts", 0) or None,
        owner_policy=cp.get("adversary", "owner_policy", fallback="least-loaded").strip(),
    )
    if shape.kind not in ("uniform", "singleton"):
        raise ConfigError(f"unknown shape {shape.kind!r}", _line_of(text, "adversary", "shape"))
    if shape.owner_policy not in ("least-loaded", "round-robin"):
        raise ConfigError(f"unknown owner policy {shape.owner_policy!r}", _line_of(text, "adversary", "owner_policy"))
    stream = None
    if adversary == "replay":
        stream = base / need("adversary", "stream").strip()

    p3 = cp.get("scheduler", "phase3_serves_blocks", fallback="false").strip().lower()
    if p3 not in ("true", "false", "yes", "no", "1", "0"):
        raise ConfigError(f"phase3_serves_blocks must be a boolean, got {p3!r}",
                          _line_of(text, "scheduler", "phase3_serves_blocks"))
    out_dir = Path(cp.get("output", "dir", fallback="tmsched-out").strip()) if cp.has_section("output") else Path("tmsched-out")
    return ExperimentConfig(system, scheduler, adversary, params, shape, stream, out_dir,
                            p3 in ("true", "yes", "1"))


def build_run(exp: ExperimentConfig):
    """Instantiate (scheduler, adversary, bounds-or-None) for an experiment."""
    s, params = exp.system, exp.params
    if exp.scheduler == "centralized":
        scheduler = CentralizedScheduler()
        cb = centralized_bounds(s.m, s.k, params.b)
        bounds = cb if params.rho <= cb.rho_max else None
    else:
        scheduler = DistributedScheduler(s.n, s.m, exp.phase3_serves_blocks)
        db = distributed_bounds(s.n, s.m, s.k, params.b, params.rho)
        bounds = db if db.stable_regime(params.rho) else None
    if exp.adversary == "token-bucket":
        adversary = TokenBucketGenerator(params, s.m, exp.shape, seed=s.seed, n=s.n)
    elif exp.adversary == "lower-bound":
        adversary = LowerBoundGenerator(params, s.m, s.k)
        bounds = None
    else:
        gens, _ = load_stream(exp.stream.read_text(), s.horizon)
        adversary = ReplayGenerator(gens)
        if verify_admissibility(gens[: s.horizon], params) is not None:
            bounds = None
    return scheduler, adversary, bounds


def cmd_run(config_path: str, out: Optional[str] = None, seed: Optional[int] = None) -> int:
    path = Path(config_path)
    try:
        text = path.read_text()
    except OSError as exc:
        print(f"{config_path}: {exc.strerror}", file=sys.stderr)
        return EXIT_ERROR
    try:
        exp = parse_config(text, path.parent)
        if seed is not None:
            exp.system = replace(exp.system, seed=seed)
        scheduler, adversary, bounds = build_run(exp)
    except ConfigError as exc:
        print(f"{config_path}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, StreamFormatError, InvalidInput) as exc:
        print(f"{config_path}: {exc}", file=sys.stderr)
        return EXIT_ERROR

    trace = run_simulation(exp.system, scheduler, adversary)
    report = analyze(trace, bounds)
    if bounds is None:
        report.notices.append("no stability bound is claimed for these parameters; only the trend is reported")
    out_dir = Path(out) if out else exp.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trace.csv").write_text(trace.to_csv())
    (out_dir / "trace.jsonl").write_text(trace.to_jsonl())
    (out_dir / "generations.csv").write_text(dump_stream(trace.generations(), exp.system.m))
    (out_dir / "report.json").write_text(report.to_json())
    (out_dir / "report.txt").write_text(report.to_table())
    sys.stdout.write(report.to_table())
    return EXIT_OK if report.ok else EXIT_VIOLATION


def cmd_verify(stream_path: str, rho: str, b: int, model: str) -> int:
    try:
        text = Path(stream_path).read_text()
        gens, _ = load_stream(text)
        params = AdversaryParams(Fraction(rho), b, QUEUE_BASED if model in ("qb", QUEUE_BASED) else QUEUE_FREE)
        verdict = verify_admissibility(gens, params)
    except OSError as exc:
        print(f"{stream_path}: {exc.strerror}", file=sys.stderr)
        return EXIT_ERROR
    except (StreamFormatError, InvalidInput, ValueError, ZeroDivisionError) as exc:
        print(f"{stream_path}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if verdict is None:
        print("admissible")
        return EXIT_OK
    print(f"violation: {verdict}")
    return EXIT_VIOLATION


def cmd_setfamily(n: int) -> int:
    try:
        fam = build_set_family(n)
    except InvalidInput as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ERROR
    for s in fam.sets:
        print(" ".join(map(str, sorted(s))))
    return EXIT_OK


def cmd_color(graph_path: str, variant: str, order: Optional[str] = None) -> int:
    try:
        data = json.loads(Path(graph_path).read_text())
        g = ConflictGraph.from_edges(data["vertices"], (tuple(e) for e in data.get("edges", [])))
        seq = None
        if order:
            by_name = {str(v): v for v in g.vertices}
            seq = [by_name[name.strip()] for name in order.split(",")]
        fn = primary_greedy_coloring if variant == "primary" else alternative_greedy_coloring
        colors = fn(g, seq)
    except OSError as exc:
        print(f"{graph_path}: {exc.strerror}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, KeyError, TypeError) as exc:
        print(f"{graph_path}: bad graph or order: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for v in (seq or g.vertices):
        print(f"{v} {colors[v]}")
    print(f"colors: {max(colors.values(), default=0)}")
    return EXIT_OK


def cmd_bounds(scheduler: str, m: int, k: int, b: int, n: Optional[int] = None, rho: Optional[str] = None) -> int:
    try:
        if scheduler == "centralized":
            cb = centralized_bounds(m, k, b)
            print(f"rho_max = {cb.rho_max}")
            print(f"pending_bound = {cb.pending_bound}")
            print(f"latency_bound = {cb.latency_bound}")
            print(f"milestone_len = {cb.milestone_len}")
            return EXIT_OK
        if n is None:
            print("distributed bounds need --n", file=sys.stderr)
            return EXIT_ERROR
        db = distributed_bounds(n, m, k, b, Fraction(rho) if rho else Fraction(0))
    except (InvalidInput, ValueError, ZeroDivisionError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ERROR
    for name in ("P", "L", "C", "epoch_len", "interval_len", "bulk", "bulk_ok", "rho_max",
                 "pending_bound", "latency_bound", "entropy_ok"):
        print(f"{name} = {getattr(db, name)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tmsched", description="Transactional-memory scheduling under adversarial arrivals")
    ap.add_argument("--seed", type=int, help="override the configured seed")
    ap.add_argument("--out", help="output directory for run artifacts")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")

    p = sub.add_parser("verify", help="check a generation stream against (rho, b)")
    p.add_argument("stream")
    p.add_argument("--rho", required=True)
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--model", choices=("qf", "qb"), default="qf")

    p = sub.add_parser("setfamily", help="print the pairwise-intersecting set family")
    p.add_argument("n", type=int)

    p = sub.add_parser("color", help="greedy-color a graph given as JSON")
    p.add_argument("graph")
    p.add_argument("--variant", choices=("primary", "alternative"), default="primary")
    p.add_argument("--order", help="comma-separated vertex order")

    p = sub.add_parser("bounds", help="evaluate a scheduler's bound formulas")
    p.add_argument("scheduler", choices=("centralized", "distributed"))
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--rho")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out, args.seed)
    if args.command == "verify":
        return cmd_verify(args.stream, args.rho, args.b, args.model)
    if args.command == "setfamily":
        return cmd_setfamily(args.n)
    if args.command == "color":
        return cmd_color(args.graph, args.variant, args.order)
    return cmd_bounds(args.scheduler, args.m, args.k, args.b, args.n, args.rho)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

    ged serve FILE [--seed N] [-o PATH]     write the design table as CSV
    ged check FILE                          report problems; exit 0 only if none
    ged graph FILE --kind factor|level [-o PATH]   write a DOT digraph

Exit codes: 0 success, 1 invalid program or design, 2 I/O or usage failure.
Diagnostics go to stderr as ``FILE:LINE:COL: message``.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

from .dsl import ParseError, parse
from .engine import build
from .model import DesignError, validate
from .serve import factor_graph_dot, level_graph_dot, serve_table, to_csv

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


@dataclass
class CliConfig:
    command: str
    input_path: Path
    seed_override: int | None = None
    output_path: Path | None = None
    graph_kind: str = "factor"
    format: str = "csv"


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_IO, f"{self.prog}: error: {message}\n")


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return value


def _argparser() -> argparse.ArgumentParser:
    p = _ArgumentParser(prog="ged", description="Build experimental designs from .ged programs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    s = sub.add_parser("serve", help="write the design table as CSV")
    s.add_argument("file", type=Path)
    s.add_argument("--seed", type=_seed, help="overrides the program's assign seed")
    s.add_argument("-o", "--output", type=Path)
    c = sub.add_parser("check", help="validate a program")
    c.add_argument("file", type=Path)
    g = sub.add_parser("graph", help="write the factor or level graph as DOT")
    g.add_argument("file", type=Path)
    g.add_argument("--kind", choices=("factor", "level"), default="factor")
    g.add_argument("-o", "--output", type=Path)
    return p


def parse_args(argv: list[str]) -> CliConfig:
    ns = _argparser().parse_args(argv)
    return CliConfig(
        command=ns.command,
        input_path=ns.file,
        seed_override=getattr(ns, "seed", None),
        output_path=getattr(ns, "output", None),
        graph_kind=getattr(ns, "kind", "factor"),
        format="dot" if ns.command == "graph" else "csv",
    )


def _read(path: Path) -> str:
    """Read UTF-8 text; undecodable bytes become a ParseError at their position."""
    data = path.read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        good = data[:exc.start].decode("utf-8")
        line = good.count("\n") + 1
        column = len(good) - (good.rfind("\n") + 1) + 1
        raise ParseError(line, column, f"invalid UTF-8 byte 0x{data[exc.start]:02x}") from None


def _write(path: Path | None, payload: bytes) -> None:
    if path is None:
        sys.stdout.buffer.write(payload)
        sys.stdout.flush()
    else:
        path.write_bytes(payload)


def _report(cfg: CliConfig, message: str, line: int = 1, column: int = 1) -> None:
    print(f"{cfg.input_path}:{line}:{column}: {message}", file=sys.stderr)


def execute(cfg: CliConfig) -> int:
    try:
        source = _read(cfg.input_path)
    except OSError as exc:
        print(f"{cfg.input_path}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except ParseError as exc:
        _report(cfg, exc.message, exc.line, exc.column)
        return EXIT_INVALID

    try:
        spec = parse(source)
        design = build(spec, seed=cfg.seed_override)
        if cfg.command == "check":
            problems = [str(v) for v in validate(design)]
            if not problems:
                try:
                    serve_table(design)
                except DesignError as exc:
                    problems.append(str(exc))
            for problem in problems:
                _report(cfg, problem)
            return EXIT_INVALID if problems else EXIT_OK
        if cfg.command == "serve":
            payload = to_csv(serve_table(design))
        elif cfg.graph_kind == "level":
            payload = level_graph_dot(design).encode("utf-8")
        else:
            payload = factor_graph_dot(design).encode("utf-8")
    except ParseError as exc:
        _report(cfg, exc.message, exc.line, exc.column)
        return EXIT_INVALID
    except DesignError as exc:
        _report(cfg, str(exc))
        return EXIT_INVALID

    try:
        _write(cfg.output_path, payload)
    except OSError as exc:
        print(f"{cfg.output_path}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def run(argv: list[str] | None = None) -> int:
    try:
        cfg = parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_IO
    return execute(cfg)


def main() -> None:
    sys.exit(run())

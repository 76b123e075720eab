"""Command-line front end: ``cumsig build-db | fit-pca | sweep | tables | inspect-db``."""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .harness import (
    METHOD_HEADINGS,
    METHODS,
    OMEGAS,
    ExperimentConfig,
    MissingPrerequisiteError,
    build_models,
    emit_report,
    fit_reduction,
    format_table,
    parse_omega,
    read_report_csv,
    run_sweep,
    summary_table,
)
from .modem import ALL_SCHEMES, parse_scheme
from .signature import DEFAULT_DB_COUNT, DEFAULT_DB_SNR, RankError, WS_LABELS, build_database
from .storage import FormatError, db_filename, read_db, read_reduction, write_db, write_reduction

log = logging.getLogger("cumsig")

EXIT_OK, EXIT_USAGE, EXIT_PREREQ, EXIT_IO = 0, 2, 3, 4
SEED_ENV = "CUMSIG_SEED"
DEFAULT_OUT = Path("artifacts")
TABLE_SNRS = (5.0, 10.0, 16.0)


class UsageError(ValueError):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    values: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"config line {n}: expected 'key = value', got {line!r}")
        values[key.strip().lower()] = value.strip()
    return values


def format_config(config: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config.snapshot().items())


def reduction_tag(subset: str, source: str = "ideal") -> str:
    return f"{source}14" if subset == "all14" else f"{source}-{subset}"


def reduction_path(out: Path, tag: str, rho: int) -> Path:
    return out / "pca" / f"{tag}_rho{rho}.wspc"


# ---------------------------------------------------------------------------
# subcommands


def cmd_build_db(args) -> int:
    labels = list(ALL_SCHEMES) if args.scheme.lower() == "all14" else [parse_scheme(args.scheme)]
    out = Path(args.out) / "db"
    out.mkdir(parents=True, exist_ok=True)
    targets = [(s, out / db_filename(s.value, args.channel)) for s in labels]
    existing = [str(p) for _, p in targets if p.exists()]
    if existing and not args.force:
        raise UsageError(f"refusing to overwrite {', '.join(existing)}; pass --force")
    snr = math.inf if args.channel == "ideal" else args.snr
    for s, path in targets:
        db = build_database(s, args.channel, args.count, snr, args.seed, snr_reference=args.snr_reference)
        write_db(db, path)
        print(f"{path}  {len(db)}x{db.rows.shape[1]}")
    return EXIT_OK


def cmd_fit_pca(args) -> int:
    subset = "all14" if args.subset.lower() == "all14" else parse_omega(args.subset)
    labels = ALL_SCHEMES if subset == "all14" else OMEGAS[subset]
    db_dir = Path(args.db_dir) if args.db_dir else Path(args.out) / "db"
    paths = [db_dir / db_filename(s.value, args.source) for s in labels]
    missing = [p.name for p in paths if not p.exists()]
    if missing:
        raise MissingPrerequisiteError(
            f"missing {args.source} database(s): {', '.join(missing)}; run 'cumsig build-db all14 {args.source}' first"
        )
    tag = reduction_tag(subset, args.source)
    red = fit_reduction((read_db(p) for p in paths), args.rho, tag)
    path = reduction_path(Path(args.out), tag, args.rho)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_reduction(red, path)
    print(f"{path}  source={tag} rho={red.rho} explained={', '.join(f'{v:.4g}' for v in red.explained)}")
    return EXIT_OK


def resolve_config(args) -> tuple[ExperimentConfig, dict]:
    values = parse_config_text(Path(args.config).read_text()) if args.config else {}
    if os.environ.get(SEED_ENV):
        values["seed"] = os.environ[SEED_ENV]
    flags = {
        "channel": args.channel,
        "omega": args.omega,
        "methods": args.methods,
        "trials": args.trials,
        "snr": args.snr,
        "rho": args.rho,
        "seed": args.seed,
        "lr": args.lr,
        "ne": args.ne,
        "snr_reference": args.snr_reference,
    }
    values.update({k: str(v) for k, v in flags.items() if v is not None})
    if args.stratified:
        values["stratified"] = "true"
    try:
        return ExperimentConfig.from_mapping(values), values
    except NotImplementedError as exc:
        raise UsageError(str(exc)) from None


@contextlib.contextmanager
def _lock(directory: Path):
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OSError(f"{lock} exists: another sweep is writing here (remove it if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _load_models(config: ExperimentConfig, out: Path):
    dbs, db_paths = {}, {}
    if any(m != "od63" for m in config.methods):
        for s in config.labels:
            p = out / "db" / db_filename(s.value, "awgn")
            if not p.exists():
                raise MissingPrerequisiteError(f"missing database {p}; run 'cumsig build-db {s.value} awgn' (or all14) first")
            dbs[s] = read_db(p)
            db_paths[s.value] = str(p)
    reductions, red_paths = {}, {}
    for method, key, subset in (("ws_reduced_14", "14", "all14"), ("ws_reduced_omega", "omega", config.omega)):
        if method not in config.methods:
            continue
        p = reduction_path(out, reduction_tag(subset), config.rho)
        if not p.exists():
            raise MissingPrerequisiteError(f"missing reduction {p}; run 'cumsig fit-pca {subset} --rho {config.rho}' first")
        reductions[key] = read_reduction(p)
        red_paths[key] = str(p)
    return build_models(config, dbs, reductions), {"databases": db_paths, "reductions": red_paths}


def cmd_sweep(args) -> int:
    config, _ = resolve_config(args)
    out = Path(args.out)
    models, artifacts = _load_models(config, out)
    name = args.name or f"{config.channel}_{config.omega}"
    report_dir = out / "reports" / name
    with _lock(out / "reports"):
        report = run_sweep(config, models, workers=args.workers)
        files = emit_report(report, report_dir)
        manifest = {
            "config_path": str(args.config) if args.config else None,
            "parameters": config.snapshot(),
            "artifacts": {**artifacts, "report": [str(f) for f in files]},
            "tool_version": __version__,
            "master_seed": config.seed,
            "provenance": report.provenance,
            # offset of the SNR axis relative to a per-sample SNR reading
            "snr_offset_db": round(10 * math.log10(config.sps), 4) if config.snr_reference == "symbol" else 0.0,
        }
        (report_dir / "config.txt").write_text(format_config(config))
        (report_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"{report_dir / 'report.csv'}  {len(report.cells)} cells")
    return EXIT_OK


def cmd_tables(args) -> int:
    rows = []
    for p in args.reports:
        rows += read_report_csv(Path(p).read_text())
    snrs = args.snr or list(TABLE_SNRS)
    blocks_txt, csv_lines = [], ["snr_db,channel,omega," + ",".join(METHOD_HEADINGS[m] for m in METHODS)]
    for snr in snrs:
        table = summary_table(rows, snr)
        blocks_txt.append(f"P_cc (%) at {snr:g} dB\n" + format_table(table))
        csv_lines += [f"{snr:g}," + ",".join(r) for r in table[1:]]
    text = "\n".join(blocks_txt)
    print(text, end="")
    if args.csv:
        Path(args.csv).write_text("\n".join(csv_lines) + "\n")
    return EXIT_OK


def cmd_inspect_db(args) -> int:
    db = read_db(args.path)
    print(f"modulation: {db.modulation.value}")
    print(f"channel:    {db.channel_tag}")
    print(f"build SNR:  {db.build_snr_db:g} dB")
    print(f"rows:       {len(db)}")
    print(f"seed:       {db.seed}")
    means = db.rows.mean(axis=0) if len(db) else np.full(len(WS_LABELS), np.nan)
    for label, m in zip(WS_LABELS, means):
        print(f"  {label:>6}  {m:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cumsig", description="Cumulant waveform-signature modulation classification experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-db", help="simulate signature databases")
    b.add_argument("scheme", help="modulation label or 'all14'")
    b.add_argument("channel", help="ideal, awgn, clarke, turin, clarke5, clarke70, clarke200")
    b.add_argument("--count", type=int, default=DEFAULT_DB_COUNT)
    b.add_argument("--snr", type=float, default=DEFAULT_DB_SNR, help="build SNR in dB (ignored for ideal)")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--snr-reference", choices=("symbol", "sample"), default="symbol")
    b.add_argument("--out", default=DEFAULT_OUT)
    b.add_argument("--force", action="store_true", help="overwrite existing files")
    b.set_defaults(func=cmd_build_db)

    f = sub.add_parser("fit-pca", help="fit PCA loadings on ideal databases")
    f.add_argument("subset", help="'all14' or a modulation set name (omega1, omega2, omega3)")
    f.add_argument("--rho", type=int, default=3)
    f.add_argument("--source", default="ideal", help="channel tag of the databases to fit on")
    f.add_argument("--db-dir", default=None)
    f.add_argument("--out", default=DEFAULT_OUT)
    f.set_defaults(func=cmd_fit_pca)

    s = sub.add_parser("sweep", help="run a Monte-Carlo P_cc sweep")
    s.add_argument("--config", default=None, help="key = value file; flags override it")
    s.add_argument("--channel")
    s.add_argument("--omega")
    s.add_argument("--methods", help=f"comma-separated subset of {', '.join(METHODS)}")
    s.add_argument("--trials", type=int)
    s.add_argument("--snr", help="grid 'a:b:step' or list 'x,y,z' in dB")
    s.add_argument("--rho", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--lr", type=int)
    s.add_argument("--ne", type=int)
    s.add_argument("--snr-reference", choices=("symbol", "sample"))
    s.add_argument("--stratified", action="store_true", help="exactly trials/|set| blocks per class")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--name", help="report subdirectory (default <channel>_<omega>)")
    s.add_argument("--out", default=DEFAULT_OUT)
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("tables", help="summary tables from report CSVs")
    t.add_argument("reports", nargs="*")
    t.add_argument("--snr", type=float, action="append", help="SNR column to tabulate (repeatable; default 5, 10, 16)")
    t.add_argument("--csv", help="also write the tables as CSV")
    t.set_defaults(func=cmd_tables)

    i = sub.add_parser("inspect-db", help="print a database header and column means")
    i.add_argument("path")
    i.set_defaults(func=cmd_inspect_db)
    return p


def _join_negative_values(argv: list[str]) -> list[str]:
    # let "--snr -5:16:1" through; argparse would read "-5:16:1" as an option
    out: list[str] = []
    it = iter(argv)
    for a in it:
        if a == "--snr":
            nxt = next(it, None)
            if nxt is not None and nxt.startswith("-") and nxt[1:2].isdigit():
                out.append(f"--snr={nxt}")
                continue
            out.append(a)
            if nxt is not None:
                out.append(nxt)
            continue
        out.append(a)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(_join_negative_values(list(sys.argv[1:] if argv is None else argv)))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MissingPrerequisiteError as exc:
        print(f"cumsig: {exc}", file=sys.stderr)
        return EXIT_PREREQ
    except (FormatError, OSError) as exc:
        print(f"cumsig: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, RankError, ValueError) as exc:
        print(f"cumsig: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

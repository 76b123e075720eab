"""Seeded Monte-Carlo classification sweeps and P_cc reports."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .baseline import DEFAULT_LR, ClassificationFailure, classify_od
from .channel import CHANNEL_TAGS
from .cumulants import DegenerateEnergyError
from .modem import SAMPLES_PER_SYMBOL, SYMBOLS_PER_BLOCK, ModulationScheme, parse_scheme
from .signature import (
    DEFAULT_DB_COUNT,
    DEFAULT_DB_SNR,
    ClassifierModel,
    ReductionMatrix,
    SignatureDatabase,
    build_database,
    classify_l1,
    compute_ws,
    pca_fit,
    simulate_block,
)

log = logging.getLogger(__name__)

S = ModulationScheme
OMEGAS: dict[str, tuple[ModulationScheme, ...]] = {
    "omega1": (S.BPSK, S.QPSK),
    "omega2": (S.QPSK, S.QAM16, S.QAM64),
    "omega3": (S.BPSK, S.QPSK, S.PSK8, S.PAM4, S.QAM16),
}
METHODS = ("ws_full", "ws_reduced_14", "ws_reduced_omega", "od63")
METHOD_HEADINGS = {"ws_full": "ws", "ws_reduced_14": "ws3_14", "ws_reduced_omega": "ws3_omega", "od63": "od63"}
TABLE_CHANNELS = ("clarke", "turin", "clarke5", "clarke70", "clarke200")
DEFAULT_SNR_GRID = tuple(float(s) for s in range(-5, 17))
SEED_SCHEME = "numpy-SeedSequence(master_seed, spawn_key=(snr_index, trial_index)) v1"


class MissingPrerequisiteError(RuntimeError):
    """A database or reduction needed by a method is not available."""


def parse_omega(name: str) -> str:
    """Canonical omega key from ``omega2``, ``Omega2``, ``Ω2`` or ``2``."""
    key = str(name).strip().lower().replace("ω", "omega")
    if key.isdigit():
        key = "omega" + key
    if key not in OMEGAS:
        raise ValueError(f"unknown modulation set {name!r}; valid: {', '.join(OMEGAS)}")
    return key


@dataclass(frozen=True)
class ExperimentConfig:
    channel: str
    omega: str
    snr_grid: tuple[float, ...] = DEFAULT_SNR_GRID
    trials: int = 2000
    methods: tuple[str, ...] = ("ws_full",)
    rho: int = 3
    n_symbols: int = SYMBOLS_PER_BLOCK
    sps: int = SAMPLES_PER_SYMBOL
    lr: int = DEFAULT_LR
    ne: int = 1
    seed: int = 0
    stratified: bool = False
    snr_reference: str = "symbol"

    def __post_init__(self) -> None:
        if self.channel not in CHANNEL_TAGS:
            raise ValueError(f"unknown channel {self.channel!r}; valid: {', '.join(CHANNEL_TAGS)}")
        object.__setattr__(self, "omega", parse_omega(self.omega))
        object.__setattr__(self, "snr_grid", tuple(float(s) for s in self.snr_grid))
        object.__setattr__(self, "methods", tuple(self.methods))
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown method(s) {', '.join(bad)}; valid: {', '.join(METHODS)}")
        if self.trials < 0:
            raise ValueError("trials must be >= 0")
        if not 1 <= self.rho <= 20:
            raise ValueError("rho must be in 1..20")
        if self.ne != 1:
            raise NotImplementedError("only ne = 1 (a single channel estimate per reference lag) is supported")
        if self.snr_reference not in ("symbol", "sample"):
            raise ValueError("snr_reference must be 'symbol' or 'sample'")

    @property
    def labels(self) -> tuple[ModulationScheme, ...]:
        return OMEGAS[self.omega]

    def snapshot(self) -> dict[str, str]:
        """Flat ``key -> text`` view; feeding it back through :meth:`from_mapping` gives an equal config."""
        return {
            "channel": self.channel,
            "omega": self.omega,
            "snr": ",".join(_fmt_num(s) for s in self.snr_grid),
            "trials": str(self.trials),
            "methods": ",".join(self.methods),
            "rho": str(self.rho),
            "n_symbols": str(self.n_symbols),
            "sps": str(self.sps),
            "lr": str(self.lr),
            "ne": str(self.ne),
            "seed": str(self.seed),
            "stratified": str(self.stratified).lower(),
            "snr_reference": self.snr_reference,
        }

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__) | {"snr"}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
        if "channel" not in values or "omega" not in values:
            raise ValueError("config needs at least 'channel' and 'omega'")
        kw: dict = {"channel": values["channel"].strip(), "omega": values["omega"].strip()}
        if "snr" in values:
            kw["snr_grid"] = parse_snr_grid(values["snr"])
        if "methods" in values:
            kw["methods"] = tuple(m.strip() for m in values["methods"].split(",") if m.strip())
        for key in ("trials", "rho", "n_symbols", "sps", "lr", "ne", "seed"):
            if key in values:
                kw[key] = int(values[key])
        if "stratified" in values:
            kw["stratified"] = values["stratified"].strip().lower() in ("1", "true", "yes", "on")
        if "snr_reference" in values:
            kw["snr_reference"] = values["snr_reference"].strip()
        return cls(**kw)

    def digest(self) -> str:
        text = "\n".join(f"{k} = {v}" for k, v in sorted(self.snapshot().items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _fmt_num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def parse_snr_grid(text: str) -> tuple[float, ...]:
    """``"a:b:step"`` (inclusive of ``b``) or a comma-separated list of values."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) not in (2, 3):
            raise ValueError(f"bad SNR range {text!r}; expected a:b or a:b:step")
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) == 3 else 1.0
        if step <= 0:
            raise ValueError("SNR step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 10) for i in range(max(n, 0)))
    return tuple(float(p) for p in text.split(",") if p.strip())


# ---------------------------------------------------------------------------
# classifier models


@dataclass(frozen=True)
class ModelSet:
    """Everything a sweep needs besides the config: one classifier per WS method."""

    models: Mapping[str, ClassifierModel] = field(default_factory=dict)

    def __getitem__(self, method: str) -> ClassifierModel:
        try:
            return self.models[method]
        except KeyError:
            raise MissingPrerequisiteError(f"no model prepared for method {method!r}") from None


def build_models(
    config: ExperimentConfig,
    databases: Mapping[ModulationScheme, SignatureDatabase],
    reductions: Mapping[str, ReductionMatrix] | None = None,
) -> ModelSet:
    """Assemble classifiers from 20 dB AWGN databases and fitted reductions.

    ``reductions`` maps ``"14"`` and/or ``"omega"`` to a :class:`ReductionMatrix`.
    """
    reductions = reductions or {}
    ws_methods = [m for m in config.methods if m != "od63"]
    if not ws_methods:
        return ModelSet({})
    missing = [s.value for s in config.labels if s not in databases]
    if missing:
        raise MissingPrerequisiteError(
            f"missing awgn database(s) for {', '.join(missing)}; run 'cumsig build-db <scheme> awgn' first"
        )
    dbs = [databases[s] for s in config.labels]
    out: dict[str, ClassifierModel] = {}
    for m in ws_methods:
        if m == "ws_full":
            out[m] = ClassifierModel.from_databases(dbs)
            continue
        key = "14" if m == "ws_reduced_14" else "omega"
        if key not in reductions:
            subset = "all14" if key == "14" else config.omega
            raise MissingPrerequisiteError(f"method {m} needs a reduction; run 'cumsig fit-pca {subset} --rho {config.rho}' first")
        red = reductions[key]
        if red.rho != config.rho:
            raise MissingPrerequisiteError(f"reduction for {m} has rho={red.rho}, config asks for rho={config.rho}; re-run fit-pca")
        out[m] = ClassifierModel.from_databases(dbs, red)
    return ModelSet(out)


def fit_reduction(ideal: Iterable[SignatureDatabase], rho: int, source_tag: str) -> ReductionMatrix:
    """PCA loadings from the row-wise concatenation of ideal databases."""
    return pca_fit(np.vstack([db.rows for db in ideal]), rho, source_tag)


def prepare_models(
    config: ExperimentConfig,
    count: int = DEFAULT_DB_COUNT,
    seed: int = 0,
    builder: Callable[..., SignatureDatabase] = build_database,
) -> ModelSet:
    """Build every database and reduction the config needs in memory (no artifacts on disk)."""
    needed = {m for m in config.methods if m != "od63"}
    if not needed:
        return ModelSet({})
    awgn = {s: builder(s, "awgn", count, DEFAULT_DB_SNR, seed, snr_reference=config.snr_reference) for s in config.labels}
    reductions = {}
    ideal_set = ()
    if "ws_reduced_14" in needed:
        ideal_set = tuple(ModulationScheme)
    elif "ws_reduced_omega" in needed:
        ideal_set = config.labels
    ideal = {s: builder(s, "ideal", count, math.inf, seed) for s in ideal_set}
    if "ws_reduced_14" in needed:
        reductions["14"] = fit_reduction(ideal.values(), config.rho, "ideal14")
    if "ws_reduced_omega" in needed:
        reductions["omega"] = fit_reduction([ideal[s] for s in config.labels], config.rho, f"ideal-{config.omega}")
    return build_models(config, awgn, reductions)


# ---------------------------------------------------------------------------
# trials


class TrialResult(NamedTuple):
    truth: ModulationScheme
    predictions: dict  # method -> ModulationScheme, or None when the method failed


def trial_rng(master_seed: int, snr_index: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(snr_index, trial_index)))


def _draw_truth(config: ExperimentConfig, trial_index: int, rng: np.random.Generator) -> ModulationScheme:
    labels = config.labels
    if config.stratified:
        return labels[trial_index % len(labels)]
    return labels[int(rng.integers(len(labels)))]


def _simulate(config: ExperimentConfig, snr_index: int, trial_index: int):
    rng = trial_rng(config.seed, snr_index, trial_index)
    truth = _draw_truth(config, trial_index, rng)
    samples, sigma = simulate_block(
        truth, config.channel, config.snr_grid[snr_index], rng, config.n_symbols, config.sps, config.snr_reference
    )
    return truth, samples, sigma


def _classify(config: ExperimentConfig, models: ModelSet, samples, sigma, ws) -> dict:
    preds = {}
    for m in config.methods:
        if m == "od63":
            try:
                preds[m] = classify_od(samples, config.lr, config.labels, sigma, config.ne).label
            except (DegenerateEnergyError, ClassificationFailure) as exc:
                log.debug("od63 failed: %s", exc)
                preds[m] = None
        else:
            preds[m] = classify_l1(ws, models[m]).label
    return preds


def run_trial(config: ExperimentConfig, models: ModelSet, snr_index: int, trial_index: int) -> TrialResult:
    """One block through the channel at ``config.snr_grid[snr_index]``, judged by every configured method."""
    truth, samples, sigma = _simulate(config, snr_index, trial_index)
    ws = compute_ws(samples, sigma, on_degenerate="zero") if any(m != "od63" for m in config.methods) else None
    return TrialResult(truth, _classify(config, models, samples, sigma, ws))


def _run_chunk(config: ExperimentConfig, models: ModelSet, task: tuple[int, int, int]) -> list[TrialResult]:
    snr_index, start, stop = task
    sims = [_simulate(config, snr_index, t) for t in range(start, stop)]
    if not sims:
        return []
    need_ws = any(m != "od63" for m in config.methods)
    if need_ws:
        ws = compute_ws(np.stack([s[1] for s in sims]), np.array([s[2] for s in sims]), on_degenerate="zero")
    return [
        TrialResult(truth, _classify(config, models, samples, sigma, ws[i] if need_ws else None))
        for i, (truth, samples, sigma) in enumerate(sims)
    ]


# ---------------------------------------------------------------------------
# reports


@dataclass
class CellResult:
    labels: tuple[ModulationScheme, ...]
    confusion: np.ndarray  # true x predicted counts
    error_trials: np.ndarray  # per true class

    @property
    def trials(self) -> int:
        return int(self.confusion.sum() + self.error_trials.sum())

    @property
    def pcc(self) -> float:
        n = self.trials
        return float(np.trace(self.confusion)) / n if n else float("nan")

    @property
    def errors(self) -> int:
        return int(self.error_trials.sum())


@dataclass
class PccReport:
    cells: dict = field(default_factory=dict)  # (channel, omega, snr_db, method) -> CellResult
    provenance: dict = field(default_factory=dict)


def _tally(config: ExperimentConfig, per_snr: Sequence[Sequence[TrialResult]]) -> PccReport:
    labels = config.labels
    index = {s: i for i, s in enumerate(labels)}
    report = PccReport(provenance={"config_hash": config.digest(), "seed": config.seed, "seed_scheme": SEED_SCHEME})
    k = len(labels)
    for snr_index, results in enumerate(per_snr):
        snr = config.snr_grid[snr_index]
        for m in config.methods:
            conf = np.zeros((k, k), dtype=np.int64)
            err = np.zeros(k, dtype=np.int64)
            for r in results:
                p = r.predictions[m]
                if p is None:
                    err[index[r.truth]] += 1
                else:
                    conf[index[r.truth], index[p]] += 1
            report.cells[(config.channel, config.omega, snr, m)] = CellResult(labels, conf, err)
    return report


def run_sweep(config: ExperimentConfig, models: ModelSet | None = None, workers: int = 1, chunk: int = 50) -> PccReport:
    """Every (SNR, method) cell of ``config``; trials can run in ``workers`` processes.

    Each trial's randomness depends only on (seed, SNR index, trial index),
    so the report is identical for any worker count.
    """
    if models is None:
        models = prepare_models(config)
    tasks = [
        (i, start, min(config.trials, start + chunk))
        for i in range(len(config.snr_grid))
        for start in range(0, config.trials, chunk)
    ]
    job = partial(_run_chunk, config, models)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(job, tasks))
    else:
        chunks = [job(t) for t in tasks]
    per_snr: list[list[TrialResult]] = [[] for _ in config.snr_grid]
    for (i, _, _), res in zip(tasks, chunks):
        per_snr[i].extend(res)
    return _tally(config, per_snr)


REPORT_COLUMNS = ("channel", "omega", "snr_db", "method", "pcc", "trials", "errors")


def report_csv(report: PccReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for (channel, omega, snr, method), cell in report.cells.items():
        w.writerow([channel, omega, _fmt_num(snr), method, f"{cell.pcc:.4f}", cell.trials, cell.errors])
    return buf.getvalue()


def confusion_csv(report: PccReport, channel: str, omega: str, method: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    labels = OMEGAS[omega]
    w.writerow(["snr_db", "true"] + [s.value for s in labels] + ["errors"])
    for (c, o, snr, m), cell in report.cells.items():
        if (c, o, m) != (channel, omega, method):
            continue
        for i, s in enumerate(labels):
            w.writerow([_fmt_num(snr), s.value] + cell.confusion[i].tolist() + [int(cell.error_trials[i])])
    return buf.getvalue()


def emit_report(report: PccReport, out_dir: str | Path, stem: str = "report") -> list[Path]:
    """Write the P_cc CSV, one plot-data file per curve, and per-curve confusion CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / f"{stem}.csv"]
    written[0].write_text(report_csv(report))
    curves: dict[tuple[str, str, str], list[tuple[float, float]]] = {}
    for (channel, omega, snr, method), cell in report.cells.items():
        curves.setdefault((channel, omega, method), []).append((snr, cell.pcc))
    for (channel, omega, method), points in curves.items():
        name = f"{channel}_{omega}_{method}"
        dat = out / f"{name}.dat"
        lines = [f"# channel={channel} omega={omega} method={method}", "# snr_db pcc"]
        lines += [f"{_fmt_num(s)} {p:.4f}" for s, p in points]
        dat.write_text("\n".join(lines) + "\n")
        conf = out / f"confusion_{name}.csv"
        conf.write_text(confusion_csv(report, channel, omega, method))
        written += [dat, conf]
    return written


def read_report_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and set(REPORT_COLUMNS) - set(rows[0]):
        raise ValueError("not a P_cc report CSV")
    return rows


def summary_table(rows: Iterable[Mapping[str, str]], snr_db: float) -> list[list[str]]:
    """Rows channel x omega, columns per method, at one SNR; ``"-"`` where a cell is absent.

    Only channel/omega combinations present in ``rows`` appear; empty input
    gives just the header.
    """
    header = ["channel", "omega"] + [METHOD_HEADINGS[m] for m in METHODS]
    values: dict[tuple[str, str], dict[str, str]] = {}
    for r in rows:
        if not math.isclose(float(r["snr_db"]), snr_db):
            continue
        values.setdefault((r["channel"], r["omega"]), {})[r["method"]] = f"{100 * float(r['pcc']):.1f}"
    order = {c: i for i, c in enumerate(TABLE_CHANNELS)}
    keys = sorted(values, key=lambda k: (order.get(k[0], len(order)), k[0], k[1]))
    table = [header]
    for channel, omega in keys:
        cells = values[(channel, omega)]
        table.append([channel, omega] + [cells.get(m, "-") for m in METHODS])
    return table


def format_table(table: Sequence[Sequence[str]]) -> str:
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in table) + "\n"


def with_overrides(config: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cumsig.harness import (
    DEFAULT_SNR_GRID,
    METHODS,
    OMEGAS,
    ExperimentConfig,
    MissingPrerequisiteError,
    PccReport,
    build_models,
    emit_report,
    fit_reduction,
    format_table,
    parse_omega,
    parse_snr_grid,
    read_report_csv,
    report_csv,
    run_sweep,
    run_trial,
    summary_table,
)
from cumsig.modem import ModulationScheme as S
from cumsig.signature import build_database


@pytest.fixture(scope="module")
def small_dbs():
    labels = {s for om in OMEGAS.values() for s in om}
    return {s: build_database(s, "awgn", 120, seed=1) for s in labels}


@pytest.fixture(scope="module")
def small_ideal():
    return {s: build_database(s, "ideal", 60, seed=2) for s in S}


def models_for(config, dbs, ideal):
    reds = {
        "14": fit_reduction(ideal.values(), config.rho, "ideal14"),
        "omega": fit_reduction([ideal[s] for s in config.labels], config.rho, f"ideal-{config.omega}"),
    }
    return build_models(config, dbs, reds)


def test_omega_sets():
    assert OMEGAS["omega1"] == (S.BPSK, S.QPSK)
    assert OMEGAS["omega2"] == (S.QPSK, S.QAM16, S.QAM64)
    assert OMEGAS["omega3"] == (S.BPSK, S.QPSK, S.PSK8, S.PAM4, S.QAM16)
    assert parse_omega("Ω2") == parse_omega("2") == parse_omega("Omega2") == "omega2"
    with pytest.raises(ValueError):
        parse_omega("omega4")


def test_config_defaults():
    c = ExperimentConfig("clarke", "omega1")
    assert c.trials == 2000 and c.rho == 3 and c.lr == 10 and c.n_symbols == 640 and c.sps == 3 and c.ne == 1
    assert c.snr_grid == DEFAULT_SNR_GRID and DEFAULT_SNR_GRID[0] == -5 and DEFAULT_SNR_GRID[-1] == 16


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("mars", "omega1")
    with pytest.raises(ValueError):
        ExperimentConfig("clarke", "omega1", methods=("svm",))
    with pytest.raises(NotImplementedError):
        ExperimentConfig("clarke", "omega1", ne=2)
    with pytest.raises(ValueError, match="unknown config key"):
        ExperimentConfig.from_mapping({"channel": "clarke", "omega": "omega1", "colour": "red"})


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from(["clarke", "turin", "clarke70"]),
    st.sampled_from(list(OMEGAS)),
    st.lists(st.floats(-20, 30, allow_nan=False).map(lambda x: round(x, 3)), min_size=1, max_size=5),
    st.lists(st.sampled_from(METHODS), min_size=0, max_size=4, unique=True),
    st.integers(0, 5000),
    st.integers(0, 2**40),
    st.booleans(),
)
def test_config_snapshot_roundtrip(channel, omega, snrs, methods, trials, seed, stratified):
    c = ExperimentConfig(channel, omega, tuple(snrs), trials, tuple(methods), seed=seed, stratified=stratified)
    again = ExperimentConfig.from_mapping(c.snapshot())
    assert again == c
    assert again.snapshot() == c.snapshot()
    assert again.digest() == c.digest()


def test_parse_snr_grid():
    assert parse_snr_grid("-5:16:1") == tuple(float(x) for x in range(-5, 17))
    assert len(parse_snr_grid("-5:16:1")) == 22
    assert parse_snr_grid("0:1:0.25") == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert parse_snr_grid("5, 10,16") == (5.0, 10.0, 16.0)
    with pytest.raises(ValueError):
        parse_snr_grid("0:5:0")


def test_run_trial_deterministic_and_empty_methods(small_dbs, small_ideal):
    c = ExperimentConfig("turin", "omega3", (5.0,), 10, METHODS)
    m = models_for(c, small_dbs, small_ideal)
    a, b = run_trial(c, m, 0, 3), run_trial(c, m, 0, 3)
    assert a == b and set(a.predictions) == set(METHODS)
    bare = run_trial(ExperimentConfig("turin", "omega3", (5.0,), 10, ()), m, 0, 3)
    assert bare.predictions == {} and bare.truth == a.truth


def test_noiseless_clarke_omega1_perfect(small_dbs):
    c = ExperimentConfig("clarke", "omega1", (math.inf,), 200, ("ws_full",))
    rep = run_sweep(c, build_models(c, small_dbs))
    cell = rep.cells[("clarke", "omega1", math.inf, "ws_full")]
    assert cell.pcc == 1.0 and cell.trials == 200


def test_report_invariants(small_dbs, small_ideal):
    c = ExperimentConfig("clarke", "omega3", (0.0, 10.0), 300, METHODS)
    rep = run_sweep(c, models_for(c, small_dbs, small_ideal))
    assert len(rep.cells) == 2 * 4
    for cell in rep.cells.values():
        per_class = cell.confusion.sum(axis=1) + cell.error_trials
        assert per_class.sum() == 300
        assert cell.pcc == pytest.approx(np.trace(cell.confusion) / 300)
        # equal priors: each class count within 4 sigma of trials / |set|
        p = 1 / len(c.labels)
        assert np.all(np.abs(per_class - 300 * p) <= 4 * math.sqrt(300 * p * (1 - p)))
    assert rep.provenance["config_hash"] == c.digest() and rep.provenance["seed"] == 0


def test_stratified_exact_counts(small_dbs):
    c = ExperimentConfig("awgn", "omega2", (10.0,), 31, ("ws_full",), stratified=True)
    cell = next(iter(run_sweep(c, build_models(c, small_dbs)).cells.values()))
    assert (cell.confusion.sum(axis=1) + cell.error_trials).tolist() == [11, 10, 10]


def test_seed_changes_results(small_dbs):
    c = ExperimentConfig("clarke", "omega2", (0.0,), 60, ("ws_full",))
    a = run_sweep(c, build_models(c, small_dbs))
    b = run_sweep(ExperimentConfig.from_mapping({**c.snapshot(), "seed": "1"}), build_models(c, small_dbs))
    assert report_csv(a) == report_csv(run_sweep(c, build_models(c, small_dbs)))
    assert next(iter(a.cells.values())).confusion.tolist() != next(iter(b.cells.values())).confusion.tolist()


def test_missing_prerequisites(small_dbs):
    c = ExperimentConfig("clarke", "omega2", (0.0,), 5, ("ws_reduced_14",))
    with pytest.raises(MissingPrerequisiteError, match="fit-pca all14"):
        build_models(c, small_dbs, {})
    with pytest.raises(MissingPrerequisiteError, match="build-db"):
        build_models(c, {S.QPSK: small_dbs[S.QPSK]})
    only_od = ExperimentConfig("clarke", "omega2", (0.0,), 5, ("od63",))
    assert build_models(only_od, {}).models == {}


def test_emit_report_empty_and_single(tmp_path):
    files = emit_report(PccReport(), tmp_path / "empty")
    assert files[0].read_text() == "channel,omega,snr_db,method,pcc,trials,errors\n"
    c = ExperimentConfig("clarke", "omega1", (5.0,), 7, ("od63",))
    rep = run_sweep(c, build_models(c, {}))
    text = report_csv(rep)
    lines = text.splitlines()
    assert len(lines) == 2
    pcc = lines[1].split(",")[4]
    assert len(pcc.split(".")[1]) == 4


def test_emit_report_curve_files(tmp_path, small_dbs, small_ideal):
    c = ExperimentConfig("clarke", "omega2", (0.0, 5.0), 20, METHODS)
    files = emit_report(run_sweep(c, models_for(c, small_dbs, small_ideal)), tmp_path)
    curves = sorted(p.name for p in files if p.suffix == ".dat")
    assert curves == sorted(f"clarke_omega2_{m}.dat" for m in METHODS)
    dat = (tmp_path / "clarke_omega2_od63.dat").read_text().splitlines()
    assert dat[0].startswith("# channel=clarke omega=omega2 method=od63")
    assert [line.split()[0] for line in dat[2:]] == ["0", "5"]
    conf = (tmp_path / "confusion_clarke_omega2_ws_full.csv").read_text().splitlines()
    assert conf[0] == "snr_db,true,QPSK,16QAM,64QAM,errors" and len(conf) == 1 + 2 * 3


def _rows(channels, omegas, snr, methods):
    return [
        {"channel": ch, "omega": om, "snr_db": str(snr), "method": m, "pcc": "0.5", "trials": "10", "errors": "0"}
        for ch in channels for om in omegas for m in methods
    ]


def test_summary_table_layout():
    chans = ["clarke", "turin", "clarke5", "clarke70", "clarke200"]
    rows = _rows(chans, ["omega2"], 5, METHODS) + _rows(chans, ["omega1", "omega3"], 5, ["ws_full", "ws_reduced_14", "od63"])
    table = summary_table(rows, 5.0)
    assert table[0] == ["channel", "omega", "ws", "ws3_14", "ws3_omega", "od63"]
    assert len(table) == 1 + 15 and all(len(r) == 6 for r in table)
    omega1 = [r for r in table if r[1] == "omega1"]
    assert all(r[4] == "-" for r in omega1) and omega1[0][2] == "50.0"
    assert [r[0] for r in table[1:4]] == ["clarke"] * 3
    assert summary_table([], 5.0) == [table[0]]
    assert summary_table(rows, 10.0) == [table[0]]
    assert format_table(table).count("\n") == 16


def test_read_report_csv_roundtrip(small_dbs):
    c = ExperimentConfig("clarke", "omega1", (3.0,), 10, ("ws_full",))
    rows = read_report_csv(report_csv(run_sweep(c, build_models(c, small_dbs))))
    assert rows[0]["method"] == "ws_full" and rows[0]["trials"] == "10"
    with pytest.raises(ValueError):
        read_report_csv("a,b\n1,2\n")

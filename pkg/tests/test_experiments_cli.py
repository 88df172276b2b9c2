import csv

from hypothesis import given, settings, strategies as st
import pytest

from pansketch import cli
from pansketch.cli import ATTACK_COLUMNS, main
from pansketch.errors import ConfigError
from pansketch.experiments import COLUMNS, ExperimentSpec, read_csv, run_experiment
from pansketch.stable import CALIBRATION_ENV, Calibration
from pansketch.stream import StreamSpec, write_updates, Update


def parse(path, columns=COLUMNS):
    """Strict reader: fixed header, equal row widths, numeric fields numeric."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == columns
    for row in rows[1:]:
        assert len(row) == len(columns)
        for cell in row:
            if cell not in ("", "summary", "exact", "ppdistinct"):
                float(cell)
    return rows


def test_zero_trials_header_and_empty_summary(tmp_path):
    out = tmp_path / "e.csv"
    rows, summary = run_experiment(ExperimentSpec("croppedsum", StreamSpec(m=50), {"tau": 4,
                                   "priv_eps": 0.5}, trials=0), out)
    assert rows == []
    parsed = parse(out)
    assert len(parsed) == 2 and parsed[1][0] == "summary" and set(parsed[1][1:]) == {""}


def test_same_spec_byte_identical(tmp_path, small_cal):
    spec = ExperimentSpec("distinct", StreamSpec(m=2000, generator="binary-support", support=40),
                          {"Z": 10, "approx_eps": 0.25, "alpha_total": 64.0}, trials=3, seed=5)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_experiment(spec, a, small_cal)
    run_experiment(spec, b, small_cal, workers=2)
    assert a.read_bytes() == b.read_bytes()


def test_missing_calibration_and_unknown_kind():
    with pytest.raises(ConfigError):
        run_experiment(ExperimentSpec("distinct", StreamSpec(m=10), {"Z": 10}))
    with pytest.raises(ConfigError):
        run_experiment(ExperimentSpec("median", StreamSpec(m=10)))


def test_timing_column(tmp_path):
    out = tmp_path / "t.csv"
    run_experiment(ExperimentSpec("t2", StreamSpec(m=30, length=40), {"tau": 4, "priv_eps": 0.5},
                                  trials=2, timing=True), out)
    assert parse(out, COLUMNS + ["elapsed_s"])


@settings(max_examples=12, deadline=None)
@given(st.sampled_from(["croppedsum", "hh", "dot", "t2"]), st.integers(0, 3), st.integers(0, 99))
def test_every_emitted_csv_parses(tmp_path_factory, kind, trials, seed):
    out = tmp_path_factory.mktemp("csv") / "x.csv"
    params = {"tau": 4, "priv_eps": 0.5} if kind != "hh" else {"k": 5}
    stream = StreamSpec(m=300, generator="zipf", length=500)
    run_experiment(ExperimentSpec(kind, stream, params, trials, seed, right_stream=stream), out)
    rows = parse(out)
    assert len(rows) == trials + 2
    for rec in read_csv(out)[:-1]:
        truth, est = float(rec["truth"]), float(rec["estimate"])
        assert float(rec["abs_error"]) == abs(est - truth)


# command line

@pytest.fixture
def cal_file(tmp_path, small_cal):
    path = tmp_path / "cal.json"
    small_cal.save(path)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_calibrate(tmp_path, capsys):
    out = tmp_path / "cal.bin"
    code, text, _ = run(capsys, "calibrate", "--p", 0.05, "--m", 100_000, "--r", 800,
                        "--seed", 1, "--out", out)
    assert code == 0 and "sfp=" in text
    cal = Calibration.load(out)
    assert (cal.params.p, cal.params.m, cal.params.r) == (0.05, 100_000, 800)


def test_cli_ingest_query_matches_in_process(tmp_path, capsys, cal_file, small_cal):
    stream = [Update(i, 1 + i % 3) for i in range(0, 2000, 7)]
    upd = tmp_path / "s.updates"
    write_updates(upd, stream)
    snap = tmp_path / "snap.bin"
    assert run(capsys, "ingest", upd, "--calibration", cal_file, "--z", 10, "--seed", 3,
               "--out", snap)[0] == 0
    code, text, _ = run(capsys, "query", snap)
    assert code == 0
    raw = float(text.splitlines()[0].split("estimate=")[1])
    args = cli.build_parser().parse_args(["ingest", str(upd), "--out", "x", "--z", "10",
                                          "--seed", "3"])
    expect = cli.distinct.NoisySketch(cli._distinct_config(args, small_cal))
    assert raw == expect.update_many(stream).estimate()


def test_cli_env_calibration(tmp_path, capsys, cal_file, monkeypatch):
    monkeypatch.setenv(CALIBRATION_ENV, str(cal_file))
    upd = tmp_path / "s.updates"
    write_updates(upd, [Update(1, 1)])
    assert run(capsys, "ingest", upd, "--z", 10, "--out", tmp_path / "s.bin")[0] == 0


def test_cli_missing_calibration(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(CALIBRATION_ENV, raising=False)
    upd = tmp_path / "s.updates"
    write_updates(upd, [Update(1, 1)])
    code, _, err = run(capsys, "ingest", upd, "--out", tmp_path / "s.bin")
    assert code == 1
    assert err.count("\n") == 1 and err.startswith("error: ConfigError: missing calibration")


def test_cli_summary_clamps_but_raw_does_not(tmp_path, capsys):
    upd = tmp_path / "s.updates"
    write_updates(upd, [Update(1, 1)])
    snap = tmp_path / "cs.bin"
    run(capsys, "ingest", upd, "--estimator", "croppedsum", "--m", 400, "--seed", 0,
        "--out", snap)
    # find a seed whose raw estimate is negative
    for seed in range(20):
        run(capsys, "ingest", upd, "--estimator", "croppedsum", "--m", 400, "--seed", seed,
            "--out", snap)
        _, text, _ = run(capsys, "query", snap)
        raw = float(text.splitlines()[0].split("estimate=")[1])
        if raw < 0:
            assert text.splitlines()[1].endswith(": 0")
            return
    pytest.fail("no negative estimate found")


def test_cli_unknown_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["query", "--bogus", "x"])
    assert exc.value.code != 0
    assert "usage:" in capsys.readouterr().err


def test_cli_bad_snapshot(tmp_path, capsys):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"garbage")
    code, _, err = run(capsys, "query", bad)
    assert code == 1 and err.startswith("error: SnapshotError:")


def test_cli_experiment_and_unwritable(tmp_path, capsys):
    out = tmp_path / "hh.csv"
    code, text, _ = run(capsys, "experiment", "hh", "--generator", "zipf", "--length", 3000,
                        "--m", 500, "--trials", 2, "--out", out)
    assert code == 0 and "within bound" in text
    parse(out)
    code, _, err = run(capsys, "experiment", "croppedsum", "--out", tmp_path / "no" / "x.csv")
    assert code == 1 and err.startswith("error: InputError: cannot write")


def test_cli_attack_csv(tmp_path, capsys):
    out = tmp_path / "a.csv"
    code, _, _ = run(capsys, "attack", "union", "--n", 10, "--l", 2, "--trials", 2,
                     "--target", "ppdistinct", "--alpha-total", "inf,1", "--csv", out)
    assert code == 0
    rows = parse(out, ATTACK_COLUMNS)
    assert len(rows) == 5 and {r[1] for r in rows[1:]} == {"ppdistinct"}


def test_cli_neighbor_test(capsys, cal_file):
    code, text, _ = run(capsys, "neighbor-test", "--calibration", cal_file, "--z", 10,
                        "--alpha-total", 64, "--runs", 100_000)
    assert code == 0 and "violations=0" in text


def test_cli_dot_and_t2(tmp_path, capsys):
    left, right = tmp_path / "l.updates", tmp_path / "r.updates"
    write_updates(left, [Update(1, 2), Update(3, 1)])
    write_updates(right, [Update(1, 5)])
    code, text, _ = run(capsys, "dot", left, right, "--m", 10, "--tau", 4, "--priv-eps", 0.5)
    assert code == 0 and text.startswith("kind=dot estimate=")
    code, text, _ = run(capsys, "t2", left, "--m", 10, "--tau", 5)
    assert code == 1


def test_cli_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        run(capsys, "experiment", "dot", "--trials", 3, "--seed", 4, "--m", 200, "--out", out)
    assert a.read_bytes() == b.read_bytes()

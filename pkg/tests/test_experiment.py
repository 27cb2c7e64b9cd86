import csv
import io
import subprocess
import sys
from pathlib import Path

import pytest

from symdp.cli import main
from symdp.experiment import (
    ALGORITHMS,
    HEADER,
    ExperimentConfig,
    ExperimentError,
    Row,
    csv_text,
    emit_csv,
    log_rows,
    run_experiment,
    run_rngs,
)
from symdp.model import TINY_CHAIN, parse_model
from symdp.oracle import oracle_value_iteration
from symdp.planners import TrialLog

DATA = Path(__file__).parent / "data"
TINY = str(DATA / "tiny_chain.mdp")


def read_csv(text):
    return list(csv.reader(io.StringIO(text)))


def without_cpu(rows):
    return [r[:3] + r[4:] for r in rows]


# ---------------------------------------------------------------- CSV output


def test_empty_log_is_header_only(tmp_path):
    path = tmp_path / "out.csv"
    emit_csv(TrialLog(), path)
    assert path.read_bytes() == b"algo,run,trial,cpu_ms,v_start,trial_reward\n"


def test_hundred_trials_hundred_and_one_lines(tmp_path):
    log = TrialLog()
    for t in range(100):
        log.trial_rewards.append(float(t))
        log.trial_v_start.append(1.0 / (t + 1))
        log.trial_cpu.append(0.001 * t)
    path = tmp_path / "out.csv"
    emit_csv(log, path, "rtdp", 2)
    lines = path.read_bytes().split(b"\n")
    assert lines[-1] == b"" and len(lines) - 1 == 101
    assert b"\r" not in path.read_bytes()
    assert lines[1] == b"rtdp,2,1,0,1,0"
    assert lines[3] == b"rtdp,2,3,2,0.333333,2"


def test_six_significant_digits():
    text = csv_text([Row("vi", 0, 1, 1234.56789, 3.14159265, None), Row("rtdp", 0, 1, 0.5, -1e-7, 12345678.0)])
    rows = read_csv(text)
    assert rows[0] == list(HEADER)
    assert rows[1] == ["vi", "0", "1", "1234.57", "3.14159", ""]
    assert rows[2] == ["rtdp", "0", "1", "0.5", "-1e-07", "1.23457e+07"]


def test_emit_to_stream_and_io_error(tmp_path):
    buf = io.StringIO()
    emit_csv([Row("vi", 0, 1, 0.0, 1.0)], buf)
    assert buf.getvalue().splitlines()[1] == "vi,0,1,0,1,"
    with pytest.raises(OSError):
        emit_csv([], tmp_path / "missing" / "out.csv")


def test_log_rows_number_trials_from_one():
    log = TrialLog(trial_rewards=[1.0, 2.0], trial_v_start=[5.0, 4.0], trial_cpu=[0.1, 0.2])
    rows = log_rows(log, "artdp", 3)
    assert [(r.trial, r.run, r.cpu_ms) for r in rows] == [(1, 3, 100.0), (2, 3, 200.0)]


# ---------------------------------------------------------------- config


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(algo="nope", model_path=TINY),
        dict(algo="vi"),
        dict(algo="vi", model_path=TINY, generate=(0, 2, 2, 1)),
        dict(algo="rtdp", model_path=TINY, steps=0),
        dict(algo="rtdp", model_path=TINY, trials=-1),
        dict(algo="rtdp", model_path=TINY, runs=0),
        dict(algo="rtdp", model_path=TINY, heuristic="other"),
        dict(algo="artdp", model_path=TINY, epsilon=2.0),
        dict(algo="srtdp-value", model_path=TINY, delta=-1.0),
        dict(algo="vi", model_path=TINY, tol=0.0),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ExperimentError):
        ExperimentConfig(**kwargs)


def test_steps_irrelevant_for_vi():
    ExperimentConfig(algo="vi", model_path=TINY, steps=0)


def test_run_streams_do_not_depend_on_run_count():
    a = [r.random() for r in run_rngs(4, 2)]
    b = [r.random() for r in run_rngs(4, 5)][:2]
    assert a == b and a[0] != a[1]


# ---------------------------------------------------------------- runs


def test_vi_final_row_matches_oracle():
    tol = 1e-6
    rows = run_experiment(ExperimentConfig(algo="vi", model_path=TINY, tol=tol))
    v_star = oracle_value_iteration(parse_model(TINY_CHAIN)).value((0, 0))
    assert abs(rows[-1].v_start - v_star) <= tol * 0.9 / (1 - 0.9)
    assert [r.trial for r in rows] == list(range(1, len(rows) + 1))
    assert all(r.trial_reward is None for r in rows)


def test_lao_rows():
    rows = run_experiment(ExperimentConfig(algo="lao", model_path=TINY, tol=1e-8))
    v_star = oracle_value_iteration(parse_model(TINY_CHAIN)).value((0, 0))
    assert abs(rows[-1].v_start - v_star) <= 1e-6
    assert all(r.trial_reward is None for r in rows)


def test_srtdp_value_on_twenty_variables():
    rows = run_experiment(ExperimentConfig(algo="srtdp-value", generate=(0, 20, 25, 3), trials=100, steps=20))
    assert len(rows) == 100
    cpu = [r.cpu_ms for r in rows]
    assert cpu == sorted(cpu)
    assert [r.trial for r in rows] == list(range(1, 101))


@pytest.mark.parametrize("algo", ALGORITHMS)
def test_every_algorithm_runs(algo, tmp_path):
    out = tmp_path / "out.csv"
    rows = run_experiment(ExperimentConfig(algo=algo, model_path=TINY, trials=3, steps=5, runs=2, out=str(out)))
    text = out.read_text()
    assert text.startswith(",".join(HEADER) + "\n")
    assert len(text.splitlines()) == len(rows) + 1
    assert {r.run for r in rows} == {0, 1}


def test_golden_csv():
    got = []
    for algo in ("vi", "rtdp", "srtdp-reach", "asrtdp-value"):
        rows = run_experiment(ExperimentConfig(algo=algo, model_path=TINY, trials=5, steps=10, seed=3, tol=1e-3))
        got.extend(read_csv(csv_text(rows))[1:])
    golden = read_csv((DATA / "tiny_golden.csv").read_text())
    assert golden[0] == list(HEADER)
    assert without_cpu(got) == without_cpu(golden[1:])


def test_rerun_identical_except_cpu(tmp_path):
    texts = []
    for k in range(2):
        out = tmp_path / f"{k}.csv"
        run_experiment(ExperimentConfig(algo="asrtdp-reach", model_path=TINY, trials=10, steps=10, seed=1, out=str(out)))
        texts.append(without_cpu(read_csv(out.read_text())))
    assert texts[0] == texts[1]


def test_invalid_model_file(tmp_path):
    bad = tmp_path / "bad.mdp"
    bad.write_text("(variables x) (discount 0.9) (start (x 0)) (action a (x 1.5) (reward 0))")
    with pytest.raises(ValueError):
        run_experiment(ExperimentConfig(algo="vi", model_path=str(bad)))


# ---------------------------------------------------------------- command line


def test_cli_writes_file(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["run", "--model", TINY, "--algo", "rtdp", "--trials", "4", "--steps", "5", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 5
    assert capsys.readouterr().out == ""


def test_cli_stdout(capsys):
    assert main(["run", "--generate", "1,4,3,2", "--algo", "srtdp-reach", "--trials", "2", "--steps", "5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == ",".join(HEADER) and len(lines) == 3


def test_cli_unknown_algorithm(capsys):
    with pytest.raises(SystemExit) as err:
        main(["run", "--model", TINY, "--algo", "dijkstra"])
    assert err.value.code != 0
    assert "dijkstra" in capsys.readouterr().err


def test_cli_bad_arguments(capsys):
    for argv in (
        ["run", "--algo", "vi"],
        ["run", "--model", TINY, "--generate", "1,2,2,1", "--algo", "vi"],
        ["run", "--generate", "1,2", "--algo", "vi"],
        ["run", "--model", TINY, "--algo", "rtdp", "--steps", "0"],
    ):
        with pytest.raises(SystemExit) as err:
            main(argv)
        assert err.value.code == 2


def test_cli_load_failure(tmp_path, capsys):
    assert main(["run", "--model", str(tmp_path / "none.mdp"), "--algo", "vi"]) == 1
    assert capsys.readouterr().err.startswith("symdp: ")
    bad = tmp_path / "bad.mdp"
    bad.write_text("(variables x) (discount 0.9)")
    assert main(["run", "--model", str(bad), "--algo", "vi"]) == 1
    assert "start" in capsys.readouterr().err
    assert main(["run", "--generate", "0,3,1,5", "--algo", "vi"]) == 1


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "symdp", "run", "--model", TINY, "--algo", "lao"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith(",".join(HEADER) + "\n")
    proc = subprocess.run([sys.executable, "-m", "symdp", "run", "--algo", "x"], capture_output=True, text=True)
    assert proc.returncode != 0

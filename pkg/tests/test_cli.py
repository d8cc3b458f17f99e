import csv
import json
import subprocess
import sys

import pytest

from rotated_mondrian import __version__
from rotated_mondrian.cli import build_parser, main


def _run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def _header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_seed_is_required():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["converge"])


def test_converge_outputs(tmp_path):
    assert _run(tmp_path, "converge", "--seed", "1", "--points", "15", "--features", "4",
                "--repeats", "2", "--methods", "mondrian,binning") == 0
    assert _header(tmp_path / "converge.csv") == ["method", "M", "repeat", "max_error"]
    assert len(_rows(tmp_path / "converge.csv")) == 2 * 4 * 2
    meta = json.loads((tmp_path / "converge.csv.meta.json").read_text())
    assert meta["seed"] == 1 and meta["version"].startswith(__version__)
    assert meta["config"]["methods"] == ["mondrian", "binning"]
    assert "jobs" not in meta["config"] and "out" not in meta["config"]
    assert (tmp_path / "converge.svg").read_text().startswith("<svg")
    assert (tmp_path / "converge.svg.meta.json").exists()


def test_no_svg(tmp_path):
    _run(tmp_path, "kernel-table", "--seed", "0", "--points", "5", "--no-svg")
    assert not (tmp_path / "kernel_table.svg").exists()
    rows = _rows(tmp_path / "kernel_table.csv")
    assert len(rows) == 5 and float(rows[0]["value"]) == 1.0


def test_unknown_method_rejected(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        _run(tmp_path, "converge", "--seed", "0", "--methods", "gaussian")
    assert exc.value.code == 2
    assert "unknown method" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        _run(tmp_path, "mondrian-line", "--seed", "0", "--methods", "fourier")


def test_recover_outputs(tmp_path, capsys):
    assert _run(tmp_path, "recover", "--seed", "2", "--points", "30", "--features", "8") == 0
    assert "lambda_hat" in capsys.readouterr().out
    assert _header(tmp_path / "recover.csv") == ["lambda", "train", "validation", "test"]
    summary = json.loads((tmp_path / "recover.json").read_text())
    assert 0 < summary["lambda_hat"] <= 30


def test_regress_outputs(tmp_path):
    assert _run(tmp_path, "regress", "--seed", "3", "--points", "120", "--features", "4",
                "--repeats", "1", "--time", "--time-features", "3", "--budget", "4") == 0
    assert _header(tmp_path / "regress_features.csv") == [
        "method", "repeat", "M", "n_features", "validation_error"]
    assert len(_rows(tmp_path / "regress_features.csv")) == 4 * 4
    assert _header(tmp_path / "regress_time_cpu.csv") == ["method", "step", "cpu_seconds"]
    trail = _rows(tmp_path / "regress_time.csv")
    assert len(trail) == len(_rows(tmp_path / "regress_time_cpu.csv"))
    summary = json.loads((tmp_path / "regress.json").read_text())
    assert summary["n_train"] == 72 and set(summary["selected"]) == {
        "mondrian", "rotated-mondrian", "binning", "fourier"}


def test_regress_from_csv(tmp_path):
    data = tmp_path / "data.csv"
    lines = ["a,b,y"] + [f"{i % 7},{i % 5},{(i % 7) * 0.5 + i % 3}" for i in range(60)]
    data.write_text("\n".join(lines) + "\n")
    out = tmp_path / "out"
    assert main(["regress", "--seed", "0", "--input", str(data), "--target", "y",
                 "--features", "3", "--repeats", "1", "--methods", "mondrian",
                 "--lifetime", "1.0", "--out", str(out)]) == 0
    assert len(_rows(out / "regress_features.csv")) == 3
    assert main(["regress", "--seed", "0", "--input", str(data), "--out", str(out)]) == 2
    assert main(["regress", "--seed", "0", "--input", str(data), "--target", "zz",
                 "--out", str(out)]) == 2
    assert main(["regress", "--seed", "0", "--input", str(tmp_path / "missing.csv"),
                 "--target", "y", "--out", str(out)]) == 2


def test_mondrian_line_outputs(tmp_path):
    assert _run(tmp_path, "mondrian-line", "--seed", "4", "--points", "40", "--features", "6",
                "--lifetime-max", "50") == 0
    assert _header(tmp_path / "mondrian_line.csv") == ["method", "lambda", "split",
                                                       "relative_error"]
    summary = json.loads((tmp_path / "mondrian_line.json").read_text())
    assert "rotated_not_worse" in summary


def test_typical_cell_exit_codes(tmp_path):
    assert _run(tmp_path, "typical-cell", "--seed", "0", "--samples", "5000") == 0
    report = json.loads((tmp_path / "typical_cell.json").read_text())
    assert report["pass"] is True and report["params"]["n_samples"] == 5000
    assert (tmp_path / "typical_cell.json.meta.json").exists()
    assert _run(tmp_path, "typical-cell", "--seed", "0", "--dim", "4", "--samples", "2000") == 2


def test_typical_cell_failure_exit_code(tmp_path, monkeypatch):
    from rotated_mondrian import cli
    real = cli.typical_cell_stats

    def broken(*a, **kw):
        rep = real(*a, **kw)
        rep["pass"] = False
        return rep
    monkeypatch.setattr(cli, "typical_cell_stats", broken)
    assert _run(tmp_path, "typical-cell", "--seed", "0", "--samples", "2000") == 1


def test_samples_csv(tmp_path):
    _run(tmp_path, "typical-cell", "--seed", "1", "--samples", "1500", "--samples-csv")
    assert len(_rows(tmp_path / "typical_cell_samples.csv")) == 1500


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "rotated_mondrian.cli", "kernel-table", "--seed",
                          "0", "--points", "3", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "kernel_table.csv").exists()

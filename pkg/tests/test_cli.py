# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors

"""
Test set for the command-line front end: argument parsing and exit codes.
"""
import json

import pytest

from multifix.cli import _overrides, build_parser, main
from multifix.errors import NumericAbort
from multifix.synthdata import load_dataset


def test_parser_gen():
    args = build_parser().parse_args(["gen", "--problem", "xor", "--img-size", "32",
                                      "--set", "data.seed=4", "--set", "data.n_samples=50"])
    assert args.command == "gen"
    assert args.overrides == ["data.seed=4", "data.n_samples=50"]
    assert ("data.img_size", 32) in _overrides(args)


def test_parser_sweep_search():
    """Sampling architectures switches the run to a NAS search."""
    args = build_parser().parse_args(["sweep", "--resolutions", "100", "50", "--nas-sample", "5"])
    pairs = dict(_overrides(args))
    assert pairs["run.resolutions"] == [100, 50]
    assert pairs["nas.sample"] == 5
    assert pairs["run.search"] == "nas"


@pytest.mark.parametrize('argv', [[], ["distill"], ["gen", "--problem", "mnist"]])
def test_parser_rejects(argv):
    with pytest.raises(SystemExit):
        build_parser().parse_args(argv)


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert "multifix" in capsys.readouterr().out


def test_gen(tmp_path):
    code = main(["gen", "--problem", "multiclass", "--n-samples", "40", "--img-size", "16",
                 "--seed", "3", "--out", str(tmp_path / "data")])
    assert code == 0
    dataset = load_dataset(tmp_path / "data")
    assert dataset.image_shape == (16, 16)
    assert dataset.provenance["seed"] == 3


@pytest.mark.parametrize('argv', [["gen", "--set", "data.problem=bogus"],
                                  ["gen", "--set", "nonsense"],
                                  ["train", "--set", "pipeline.epochs=0"]])
def test_configuration_errors_exit_2(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path / "out")]) == 2


def test_bad_config_file_exit_2(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"run": {"variant": "ensemble"}}))
    assert main(["train", "--config", str(path), "--out", str(tmp_path / "out")]) == 2


def test_missing_data_exit_3(tmp_path, caplog):
    code = main(["train", "--data", str(tmp_path / "absent"), "--out", str(tmp_path / "run")])
    assert code == 3
    assert "DataError" in caplog.text
    assert not (tmp_path / "run").exists()


@pytest.mark.parametrize('argv', [["distill", "--run"], ["explain", "--run"], ["report"]])
def test_missing_run_exit_3(argv, tmp_path):
    assert main(argv + [str(tmp_path)]) == 3


def test_numeric_abort_exit_4(tmp_path, mocker):
    mocker.patch("multifix.experiment.Experiment.generate",
                 side_effect=NumericAbort("loss is nan", 3, 0.01))
    assert main(["gen", "--out", str(tmp_path)]) == 4


def test_report_prints(tmp_path, capsys):
    run = tmp_path / "cell"
    run.mkdir()
    (run / "results.csv").write_text("problem,cell,fold,bacc,loss,n_classes\n"
                                     "xor,kind=fusion,0,0.900000,,2\n")
    assert main(["report", str(tmp_path)]) == 0
    assert "kind=fusion" in capsys.readouterr().out

import csv
import math
import sys

import numpy as np
import pytest

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from gaborcnn.cli import main
from gaborcnn.dataset import DatasetConfig, generate_dataset, load_dataset
from gaborcnn.experiment import (
    ExperimentConfig,
    ResultRow,
    ResultTable,
    config_from_dict,
    emit_report,
    load_config,
    run_experiment,
)
from gaborcnn.imgio import GrayImage, read_pgm, write_pgm
from gaborcnn.nn import load_checkpoint
from gaborcnn.optim import OptimConfig
from gaborcnn.tensorio import TensorFormatError, decode_tensor, encode_tensor, read_tensor, write_tensor

TINY = DatasetConfig.desk(n_objects=2, n_distances=2, n_heights=1, n_angles=4, size=28)

TOML = """
[dataset]
n_objects = 2
distances = [39.5, 47.0]
heights = [10.0]
n_angles = 4
width = 28
height = 28
seed = 3

[optim]
total_epochs = 2
warmup_epochs = 1
batch_size = 4

[experiment]
variants = ["a", "b"]
architectures = ["MiniCNN"]
train_distances = [39.5]
trials = 2
net_size = 24
"""


@pytest.fixture(scope="module")
def tiny_cfg():
    return config_from_dict(tomllib.loads(TOML))


def test_config_parsing(tiny_cfg, tmp_path):
    assert tiny_cfg.dataset_seed == 3 and tiny_cfg.batch_size == 4
    assert tiny_cfg.optim.total_epochs == 2 and tiny_cfg.optim.base_lr == 1e-2
    assert tiny_cfg.variants == ("a", "b") and tiny_cfg.dataset.distances == (39.5, 47.0)
    path = tmp_path / "c.toml"
    path.write_text(TOML)
    assert load_config(path) == tiny_cfg


def test_config_rejects_unknowns():
    with pytest.raises(ValueError):
        config_from_dict({"optim": {"learning_rate": 0.1}})
    with pytest.raises(ValueError):
        ExperimentConfig(variants=("e",))
    with pytest.raises(ValueError):
        ExperimentConfig(architectures=("AlexNet",))


def test_standard_defaults():
    cfg = ExperimentConfig()
    assert cfg.batch_size == 64 and cfg.net_size == 224 and cfg.trials == 5
    assert cfg.optim == OptimConfig()


@pytest.fixture(scope="module")
def tiny_table(tiny_cfg):
    return run_experiment(tiny_cfg)


def test_matrix_rows(tiny_table):
    assert len(tiny_table) == 4
    assert {(r.variant, r.trial) for r in tiny_table.rows} == {("a", 0), ("a", 1), ("b", 0), ("b", 1)}
    for r in tiny_table.rows:
        assert not r.error and 0 <= r.train_acc <= 1 and 0 <= r.test_acc <= 1 and r.epoch_seconds > 0


def test_matrix_is_deterministic(tiny_cfg, tiny_table):
    again = run_experiment(tiny_cfg)
    assert [(r.train_acc, r.test_acc) for r in again.rows] == [(r.train_acc, r.test_acc) for r in tiny_table.rows]


def test_failed_cell_is_marked(tiny_cfg):
    # a training distance absent from the dataset makes the split fail
    from dataclasses import replace

    cfg = replace(tiny_cfg, train_distances=(99.0,), trials=1, variants=("a",))
    table = run_experiment(cfg)
    assert len(table) == 1 and table.rows[0].error and math.isnan(table.rows[0].test_acc)


def synthetic_table(seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for arch in ("MiniResNet8", "MiniCNN"):
        for variant in "abcd":
            for dist in (39.5, 47.0, 54.5, 62.0):
                for trial in range(5):
                    rows.append(ResultRow(arch, variant, dist, trial, rng.random(), rng.random(), 1.0))
    return ResultTable(rows)


def test_report_structure_and_means(tmp_path):
    table = synthetic_table()
    results, summary = emit_report(table, tmp_path)
    assert len(ResultTable.from_csv(results)) == 160
    with open(summary) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 4 * 5
    by_key = {}
    for r in table.rows:
        by_key.setdefault((r.architecture, r.variant, r.train_distance), []).append(r)
    for row in rows:
        arch, variant = row["architecture"], row["variant"]
        if row["train_distance"] == "average":
            cells = [v for k, v in by_key.items() if k[:2] == (arch, variant)]
            expect = np.mean([np.mean([r.test_acc for r in c]) for c in cells])
        else:
            cells = by_key[(arch, variant, float(row["train_distance"]))]
            expect = np.mean([r.test_acc for r in cells])
        assert abs(float(row["mean_test_acc"]) - expect) < 1e-12


def test_results_csv_round_trip(tmp_path):
    table = synthetic_table(1)
    table.to_csv(tmp_path / "r.csv")
    back = ResultTable.from_csv(tmp_path / "r.csv")
    assert [(r.train_acc, r.test_acc, r.train_distance) for r in back.rows] == [
        (r.train_acc, r.test_acc, r.train_distance) for r in table.rows]


def test_empty_report_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_report(ResultTable(), tmp_path)


@pytest.mark.parametrize("shape", [(), (3,), (2, 5), (16, 4, 4)])
def test_tensor_round_trip(shape, tmp_path):
    arr = np.random.default_rng(0).standard_normal(shape).astype(np.float32)
    assert np.array_equal(decode_tensor(encode_tensor(arr)), arr)
    write_tensor(tmp_path / "t.gbtf", arr)
    assert np.array_equal(read_tensor(tmp_path / "t.gbtf"), arr)


def test_tensor_errors():
    good = encode_tensor(np.zeros((2, 2)))
    for bad in (b"", b"NOPE" + good[4:], good[:-1], good[:4] + b"\x02" + good[5:]):
        with pytest.raises(TensorFormatError):
            decode_tensor(bad)


# --------------------------------------------------------------------- CLI


def test_cli_dataset_gen(tmp_path):
    out = tmp_path / "ds"
    main(["dataset", "gen", "--objects", "2", "--distances", "39.5,54.5", "--heights", "1",
          "--angles", "3", "--size", "20", "--seed", "4", "--out", str(out)])
    ds = load_dataset(out)
    assert len(ds) == 12 and ds.image_size == (20, 20)
    ref = generate_dataset(DatasetConfig(2, (39.5, 54.5), (10.0,), 3, 20, 20), 4)
    assert all(ds.images[k] == ref.images[k] for k in ref.images)


def test_cli_genbank(tmp_path):
    main(["genbank", "--out", str(tmp_path)])
    k = np.loadtxt(tmp_path / "d_00.csv", delimiter=",")
    assert k.shape == (21, 21) and abs(k.sum()) < 1e-9
    assert read_pgm(tmp_path / "b_03.pgm").width == 15
    assert len((tmp_path / "bank_c.csv").read_text().splitlines()) == 9


def test_cli_preprocess(tmp_path):
    src = tmp_path / "in.pgm"
    write_pgm(src, GrayImage(np.random.default_rng(0).random((12, 10))))
    main(["preprocess", "--variant", "c", "--input", str(src), "--debug", "--out", str(tmp_path / "o")])
    x = read_tensor(tmp_path / "o" / "tensor.gbtf")
    assert x.shape == (16, 12, 10)
    assert len(list((tmp_path / "o").glob("channel_*.pgm"))) == 16


def test_cli_train_probe_report(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(TOML.replace('["a", "b"]', '["a"]').replace("trials = 2", "trials = 1")
                   .replace('["MiniCNN"]', '["MiniResNet8"]'))
    out = tmp_path / "run"
    main(["train", "--config", str(cfg), "--out", str(out)])
    assert (out / "results.csv").exists() and (out / "summary.csv").exists()
    ckpt = next((out / "checkpoints").glob("*.gbnn"))
    assert load_checkpoint(ckpt).arch == "MiniResNet8"

    main(["probe", "--config", str(cfg), "--checkpoint", str(ckpt), "--variant", "a",
          "--train-distance", "39.5", "--out", str(tmp_path / "p")])
    lines = (tmp_path / "p" / "probe.csv").read_text().splitlines()
    assert len(lines) == 9

    main(["report", "--results", str(out / "results.csv"), "--out", str(tmp_path / "rep")])
    assert (tmp_path / "rep" / "summary.csv").read_text() == (out / "summary.csv").read_text()


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])

import csv
import json

import numpy as np
import pytest

from boda import cli, trainer
from boda.datagen import save_spec, spec_to_dict
from boda.trainer import TrainConfig

from conftest import tiny_spec


@pytest.fixture()
def spec_path(tmp_path):
    path = tmp_path / "spec.json"
    save_spec(tiny_spec(seed=13), path)
    return path


@pytest.fixture()
def dataset_path(tmp_path, spec_path):
    out = tmp_path / "data.csv"
    assert cli.main(["gen", "--spec", str(spec_path), "--out", str(out)]) == 0
    return out


def write_config(tmp_path, **kwargs):
    defaults = dict(steps=40, batch_per_domain=8, eval_every=20, seed=2,
                    hidden=(12,), rep_dim=5)
    defaults.update(kwargs)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(trainer.config_to_dict(TrainConfig(**defaults))))
    return path


@pytest.fixture()
def run_dir(tmp_path, dataset_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert cli.main(["train", "--data", str(dataset_path),
                     "--config", str(cfg), "--out", str(out)]) == 0
    return out


class TestGen:
    def test_writes_dataset_and_manifest(self, tmp_path, spec_path):
        out = tmp_path / "ds.csv"
        assert cli.main(["gen", "--spec", str(spec_path),
                         "--out", str(out)]) == 0
        assert out.exists()
        manifest = json.loads((tmp_path / "ds.csv.manifest.json").read_text())
        assert manifest["command"] == "gen"
        with open(out) as fh:
            n_rows = sum(1 for _ in fh) - 1
        # row count = train + val + test
        from boda.datagen import generate
        ds = generate(tiny_spec(seed=13))
        assert n_rows == len(ds.train) + len(ds.val) + len(ds.test)

    def test_deterministic_bytes(self, tmp_path, spec_path):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        cli.main(["gen", "--spec", str(spec_path), "--out", str(out1)])
        cli.main(["gen", "--spec", str(spec_path), "--out", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()

    def test_missing_field_exit_2(self, tmp_path, capsys):
        data = spec_to_dict(tiny_spec())
        del data["input_dim"]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(data))
        code = cli.main(["gen", "--spec", str(bad),
                         "--out", str(tmp_path / "x.csv")])
        assert code == 2
        assert "input_dim" in capsys.readouterr().err


class TestTrain:
    def test_outputs_exist(self, run_dir):
        assert (run_dir / "checkpoint.json").exists()
        assert (run_dir / "log.csv").exists()
        assert (run_dir / "manifest.json").exists()

    def test_omega_zero_boda_column_zero(self, tmp_path, dataset_path):
        cfg = write_config(tmp_path, omega=0.0)
        out = tmp_path / "erm"
        assert cli.main(["train", "--data", str(dataset_path),
                         "--config", str(cfg), "--out", str(out)]) == 0
        with open(out / "log.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert all(float(r["boda"]) == 0.0 for r in rows)

    def test_decouple_stage_marker(self, tmp_path, dataset_path):
        cfg = write_config(tmp_path, decouple=True, decouple_steps=20)
        out = tmp_path / "two_stage"
        assert cli.main(["train", "--data", str(dataset_path),
                         "--config", str(cfg), "--out", str(out)]) == 0
        with open(out / "log.csv") as fh:
            stages = {r["stage"] for r in csv.DictReader(fh)}
        assert stages == {"1", "2"}

    def test_missing_data_exit_2(self, tmp_path):
        cfg = write_config(tmp_path)
        code = cli.main(["train", "--data", str(tmp_path / "nope.csv"),
                         "--config", str(cfg),
                         "--out", str(tmp_path / "o")])
        assert code == 2

    def test_seed_flag_overrides_config(self, tmp_path, dataset_path):
        cfg = write_config(tmp_path, steps=25)
        ckpts = {}
        for seed in (1, 2):
            out = tmp_path / f"seed{seed}"
            assert cli.main(["train", "--data", str(dataset_path),
                             "--config", str(cfg), "--out", str(out),
                             "--seed", str(seed)]) == 0
            ckpts[seed] = (out / "checkpoint.json").read_bytes()
        assert ckpts[1] != ckpts[2]
        manifest = json.loads(
            (tmp_path / "seed2" / "manifest.json").read_text()
        )
        assert manifest["seed"] == 2


class TestAnalyze:
    def test_artifacts(self, tmp_path, dataset_path, run_dir):
        out = tmp_path / "analysis"
        assert cli.main(["analyze",
                         "--checkpoint", str(run_dir / "checkpoint.json"),
                         "--data", str(dataset_path),
                         "--out", str(out), "--nu", "1.0"]) == 0
        graph = json.loads((out / "graph.json").read_text())
        n_pairs = len(graph["keys"])
        assert len(graph["weights"]) == n_pairs * n_pairs
        stats = json.loads((out / "transfer_stats.json").read_text())
        assert {"alpha", "beta", "gamma", "calibrated"} <= set(stats)
        with open(out / "mds.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == n_pairs

    def test_graph_dimension_excludes_zero_pairs(self, tmp_path):
        import dataclasses

        from boda.datagen import save_spec

        spec = dataclasses.replace(tiny_spec(seed=17),
                                   zero_pairs=frozenset({(0, 0), (1, 2)}))
        spec_path = tmp_path / "zspec.json"
        save_spec(spec, spec_path)
        data_path = tmp_path / "zdata.csv"
        assert cli.main(["gen", "--spec", str(spec_path),
                         "--out", str(data_path)]) == 0
        cfg = write_config(tmp_path, steps=25)
        run = tmp_path / "zrun"
        assert cli.main(["train", "--data", str(data_path),
                         "--config", str(cfg), "--out", str(run)]) == 0
        out = tmp_path / "zanalysis"
        assert cli.main(["analyze",
                         "--checkpoint", str(run / "checkpoint.json"),
                         "--data", str(data_path),
                         "--out", str(out)]) == 0
        graph = json.loads((out / "graph.json").read_text())
        nonzero = spec.num_domains * spec.num_classes - 2
        assert len(graph["keys"]) == nonzero
        assert [0, 0] not in graph["keys"]

    def test_nu_zero_calibrated_equals_plain(self, tmp_path, dataset_path,
                                             run_dir):
        out = tmp_path / "analysis0"
        assert cli.main(["analyze",
                         "--checkpoint", str(run_dir / "checkpoint.json"),
                         "--data", str(dataset_path),
                         "--out", str(out), "--nu", "0.0"]) == 0
        stats = json.loads((out / "transfer_stats.json").read_text())
        assert stats["calibrated"]["alpha"] == stats["alpha"]
        assert stats["calibrated"]["beta"] == stats["beta"]
        assert stats["calibrated"]["gamma"] == stats["gamma"]


class TestVerifyBound:
    def test_report_and_exit_code(self, tmp_path, dataset_path, run_dir):
        out = tmp_path / "bound.json"
        code = cli.main(["verify-bound",
                         "--checkpoint", str(run_dir / "checkpoint.json"),
                         "--data", str(dataset_path),
                         "--out", str(out), "--calibrated"])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["gap"] >= -1e-9
        assert {"empirical", "theoretical", "gap", "relative_gap"} \
            <= set(report)

    def test_untrained_model_still_valid(self, tmp_path, dataset_path):
        # the bound holds for any representations, trained or not
        from boda import model
        from boda.datagen import load_dataset
        ds = load_dataset(dataset_path)
        params = model.init(ds.input_dim, (8,), 4, ds.num_classes, seed=1)
        ckpt = tmp_path / "untrained.json"
        model.save_checkpoint(params, ckpt)
        out = tmp_path / "bound0.json"
        assert cli.main(["verify-bound", "--checkpoint", str(ckpt),
                         "--data", str(dataset_path),
                         "--out", str(out)]) == 0
        assert json.loads(out.read_text())["gap"] >= -1e-9


class TestGradcheck:
    def test_passes_and_reports(self, tmp_path):
        out = tmp_path / "grad.json"
        assert cli.main(["gradcheck", "--seed", "5", "--trials", "10",
                         "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert set(report) == {"da", "boda", "calibrated_boda", "boda_m"}
        assert all(v <= 1e-4 for v in report.values())

    def test_zero_trials_exit_2(self, tmp_path):
        code = cli.main(["gradcheck", "--seed", "1", "--trials", "0",
                         "--out", str(tmp_path / "g.json")])
        assert code == 2

    def test_fixed_seed_identical_report(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        cli.main(["gradcheck", "--seed", "3", "--trials", "5", "--out", str(a)])
        cli.main(["gradcheck", "--seed", "3", "--trials", "5", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()


class TestSweep:
    def test_rows_equal_trials(self, tmp_path, dataset_path):
        cfg = write_config(tmp_path, steps=25)
        out = tmp_path / "sweep"
        assert cli.main(["sweep", "--data", str(dataset_path),
                         "--config", str(cfg), "--trials", "3",
                         "--out", str(out), "--seed", "4"]) == 0
        with open(out / "trials.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        corr = json.loads((out / "correlation.json").read_text())
        assert {"pearson", "spearman"} <= set(corr)

    def test_deterministic_outputs(self, tmp_path, dataset_path):
        cfg = write_config(tmp_path, steps=25)
        outs = []
        for name in ("s1", "s2"):
            out = tmp_path / name
            assert cli.main(["sweep", "--data", str(dataset_path),
                             "--config", str(cfg), "--trials", "2",
                             "--out", str(out), "--seed", "4"]) == 0
            outs.append((out / "trials.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_thread_env_var(self, tmp_path, dataset_path, monkeypatch):
        cfg = write_config(tmp_path, steps=25)
        monkeypatch.setenv("BODA_THREADS", "2")
        out = tmp_path / "par"
        assert cli.main(["sweep", "--data", str(dataset_path),
                         "--config", str(cfg), "--trials", "2",
                         "--out", str(out), "--seed", "4"]) == 0
        seq = tmp_path / "seq"
        monkeypatch.setenv("BODA_THREADS", "1")
        assert cli.main(["sweep", "--data", str(dataset_path),
                         "--config", str(cfg), "--trials", "2",
                         "--out", str(seq), "--seed", "4"]) == 0
        assert (out / "trials.csv").read_bytes() == \
            (seq / "trials.csv").read_bytes()

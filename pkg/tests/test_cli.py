import hashlib
import json

import pytest

from treeconv.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main

from conftest import DECL_TREE_DOC


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One small end-to-end pipeline shared by the read-only assertions."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data.jsonl"
    emb = root / "emb.json"
    model = root / "model.json"
    curve = root / "curve.tsv"
    cfg = root / "train.cfg"
    cfg.write_text("n_features = 8\nn_conv = 8\nn_hidden = 8\nepochs = 3\nseed = 1\n")

    assert main(["gen", "--classes", "4", "--per-class", "6", "--seed", "3",
                 "--out", str(data)]) == EXIT_OK
    assert main(["pretrain", "--data", str(data), "--nf", "8", "--epochs", "2",
                 "--seed", "1", "--out", str(emb)]) == EXIT_OK
    assert main(["train", "--data", str(data), "--config", str(cfg),
                 "--init", "pretrained", "--embeddings", str(emb),
                 "--out", str(model), "--curve-out", str(curve)]) == EXIT_OK
    return root


class TestPipeline:
    def test_outputs_exist(self, workdir):
        for name in ("data.jsonl", "emb.json", "model.json", "curve.tsv", "curve.png"):
            assert (workdir / name).exists(), name

    def test_eval_writes_report_and_figure(self, workdir, capsys):
        report = workdir / "report.json"
        assert main(["eval", "--model", str(workdir / "model.json"),
                     "--data", str(workdir / "data.jsonl"), "--split", "test",
                     "--out", str(report)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "error_rate:" in out
        doc = json.loads(report.read_text())
        assert set(doc) >= {"split", "error_rate", "mean_cost", "confusion"}
        assert (workdir / "report.png").exists()

    def test_predict_probabilities(self, workdir, capsys, tmp_path):
        ast_path = tmp_path / "snippet.json"
        ast_path.write_text(DECL_TREE_DOC)
        assert main(["predict", "--model", str(workdir / "model.json"),
                     "--ast", str(ast_path)]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert len(doc["probabilities"]) == 4
        assert abs(sum(doc["probabilities"]) - 1.0) < 1e-12
        assert doc["predicted"] in range(4)

    def test_cluster_formats(self, workdir, capsys, tmp_path):
        out = tmp_path / "dendrogram.json"
        csv = tmp_path / "dist.csv"
        assert main(["cluster", "--embeddings", str(workdir / "emb.json"),
                     "--out", str(out), "--distances-out", str(csv)]) == EXIT_OK
        assert out.exists() and csv.exists()
        assert (tmp_path / "dendrogram.png").exists()
        assert main(["cluster", "--embeddings", str(workdir / "emb.json"),
                     "--format", "newick"]) == EXIT_OK
        assert capsys.readouterr().out.strip().endswith(";")

    def test_baseline(self, workdir, capsys, tmp_path):
        ckpt = tmp_path / "baseline.json"
        report = tmp_path / "baseline-report.json"
        assert main(["baseline", "--data", str(workdir / "data.jsonl"),
                     "--method", "lr", "--epochs", "10",
                     "--out", str(ckpt), "--report-out", str(report)]) == EXIT_OK
        assert "test error" in capsys.readouterr().out
        doc = json.loads(report.read_text())
        assert doc["method"] == "lr"
        assert set(doc["error_rates"]) == {"train", "cv", "test"}

    def test_inputs_never_mutated(self, workdir):
        data = workdir / "data.jsonl"
        before = sha(data)
        main(["eval", "--model", str(workdir / "model.json"), "--data", str(data)])
        main(["baseline", "--data", str(data), "--epochs", "2"])
        assert sha(data) == before

    def test_gen_deterministic(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (a, b):
            assert main(["gen", "--per-class", "4", "--seed", "9",
                         "--out", str(out)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_train_deterministic(self, workdir, tmp_path):
        outs = []
        for name in ("m1.json", "m2.json"):
            out = tmp_path / name
            assert main(["train", "--data", str(workdir / "data.jsonl"),
                         "--config", str(workdir / "train.cfg"),
                         "--init", "pretrained",
                         "--embeddings", str(workdir / "emb.json"),
                         "--out", str(out)]) == EXIT_OK
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_no_figure_flag(self, workdir, tmp_path):
        curve = tmp_path / "curve2.tsv"
        assert main(["train", "--data", str(workdir / "data.jsonl"),
                     "--config", str(workdir / "train.cfg"),
                     "--init", "pretrained",
                     "--embeddings", str(workdir / "emb.json"),
                     "--out", str(tmp_path / "m.json"),
                     "--curve-out", str(curve), "--no-figure"]) == EXIT_OK
        assert curve.exists()
        assert not (tmp_path / "curve2.png").exists()


class TestExitCodes:
    def test_usage_error_is_one(self):
        with pytest.raises(SystemExit) as err:
            main(["gen"])  # --out missing
        assert err.value.code == EXIT_USAGE
        with pytest.raises(SystemExit) as err:
            main(["no-such-command"])
        assert err.value.code == EXIT_USAGE

    def test_missing_file_is_two(self, tmp_path):
        assert main(["pretrain", "--data", str(tmp_path / "absent.jsonl"),
                     "--out", str(tmp_path / "e.json")]) == EXIT_DATA

    def test_malformed_data_is_two(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("this is not json\n")
        assert main(["pretrain", "--data", str(bad),
                     "--out", str(tmp_path / "e.json")]) == EXIT_DATA

    def test_divergence_is_three(self, workdir, tmp_path):
        cfg = tmp_path / "explode.cfg"
        cfg.write_text("n_features = 8\nn_conv = 8\nn_hidden = 8\n"
                       "epochs = 5\nlearning_rate = 1e9\n")
        rc = main(["train", "--data", str(workdir / "data.jsonl"),
                   "--config", str(cfg), "--init", "random",
                   "--out", str(tmp_path / "m.json")])
        assert rc == EXIT_NUMERIC

    def test_gradcheck_passes(self, capsys):
        assert main(["gradcheck", "--seed", "7", "--dims", "4"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "PASS" in out

    def test_gradcheck_coefficient_table(self, capsys):
        assert main(["gradcheck", "--seed", "0", "--dims", "3",
                     "--show-window-coefficients"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "(1.0, 0.0, 0.0)" in out

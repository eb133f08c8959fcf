import json

import pytest

from cingest.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from cingest.convert import IngestError
from cingest.pipeline import IngestManifest, ingest_corpus, ingest_file

# Deterministic desk-scale corpus: 25 loop-flavored and 25 branch-flavored
# programs assembled from numbered fragments.


def loop_program(k):
    return f"""
int f{k}(int n) {{
    int i;
    int total = {k};
    for (i = 0; i < n; i = i + 1) {{
        total = total + i * {k + 1};
    }}
    while (total > {10 + k}) {{
        total = total - 2;
    }}
    return total;
}}
"""


def branch_program(k):
    return f"""
int g{k}(int n) {{
    int value = n + {k};
    if (value > {k * 2}) {{
        value = value - 1;
    }} else {{
        value = value + 1;
    }}
    if (value == {k}) {{
        value = 0;
    }}
    return value;
}}
"""


@pytest.fixture
def corpus_dir(tmp_path):
    loops = tmp_path / "loops"
    branches = tmp_path / "branches"
    loops.mkdir()
    branches.mkdir()
    for k in range(25):
        (loops / f"prog_{k:02d}.c").write_text(loop_program(k))
        (branches / f"prog_{k:02d}.c").write_text(branch_program(k))
    return tmp_path


class TestIngestCorpus:
    def test_two_subdirs_two_labels(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        (tmp_path / "a" / "one.c").write_text("int x;")
        (tmp_path / "b" / "two.c").write_text("int y;")
        out = tmp_path / "data.jsonl"
        report = ingest_corpus(IngestManifest(tmp_path, out))
        lines = out.read_text().splitlines()
        assert len(lines) == 2
        assert [json.loads(line)["label"] for line in lines] == [0, 1]
        assert report.per_label == {0: 1, 1: 1}

    def test_sorted_deterministic_output(self, corpus_dir, tmp_path):
        outs = []
        for name in ("one.jsonl", "two.jsonl"):
            out = tmp_path / name
            ingest_corpus(IngestManifest(corpus_dir, out))
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_syntax_errors_skipped_and_reported(self, corpus_dir, tmp_path):
        (corpus_dir / "loops" / "broken.c").write_text("int = ;")
        out = tmp_path / "data.jsonl"
        report = ingest_corpus(IngestManifest(corpus_dir, out))
        assert report.total == 50
        assert len(report.skipped) == 1
        assert "broken.c" in report.skipped[0][0]

    def test_nothing_parses_is_fatal(self, tmp_path):
        (tmp_path / "only").mkdir()
        (tmp_path / "only" / "bad.c").write_text("not C at all {{{")
        with pytest.raises(IngestError, match="no file parsed"):
            ingest_corpus(IngestManifest(tmp_path, tmp_path / "data.jsonl"))

    def test_explicit_label_table(self, corpus_dir, tmp_path):
        out = tmp_path / "data.jsonl"
        manifest = IngestManifest(corpus_dir, out, labels={"loops": 1, "branches": 0})
        ingest_corpus(manifest)
        first = json.loads(out.read_text().splitlines()[0])
        assert first["label"] == 0  # branches sorted first under its label

    def test_sparse_label_table_rejected(self, corpus_dir, tmp_path):
        manifest = IngestManifest(corpus_dir, tmp_path / "d.jsonl",
                                  labels={"loops": 0, "branches": 2})
        with pytest.raises(IngestError, match="dense"):
            ingest_corpus(manifest)


class TestPrimaryContract:
    """Every emitted document must be accepted by the downstream toolkit."""

    def test_fifty_file_corpus_loads_downstream(self, corpus_dir, tmp_path):
        treeconv = pytest.importorskip("treeconv")
        out = tmp_path / "data.jsonl"
        report = ingest_corpus(IngestManifest(corpus_dir, out))
        assert report.total == 50
        vocab = treeconv.Vocab()
        ds = treeconv.load_dataset(out, vocab, unknown="add")
        assert len(ds) == 50
        assert ds.n_classes == 2
        import pycparser.c_ast as c_ast
        for symbol in vocab.symbols:  # alphabet closed over parser node kinds
            assert hasattr(c_ast, symbol) or symbol == "FileAST"

    def test_single_file_loads_downstream(self, tmp_path):
        treeconv = pytest.importorskip("treeconv")
        path = tmp_path / "snippet.c"
        path.write_text("int a = b + 3;")
        line = ingest_file(path)
        ast = treeconv.load_ast(line, treeconv.Vocab(), unknown="add")
        assert len(ast) == 6


class TestCli:
    def test_end_to_end(self, corpus_dir, tmp_path, capsys):
        out = tmp_path / "data.jsonl"
        report = tmp_path / "report.json"
        assert main([str(corpus_dir), "--out", str(out),
                     "--report-out", str(report)]) == EXIT_OK
        printed = capsys.readouterr().out
        assert "ingested 50 files" in printed
        doc = json.loads(report.read_text())
        assert doc["total"] == 50
        assert doc["per_label"] == {"0": 25, "1": 25}

    def test_usage_error(self):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == EXIT_USAGE

    def test_missing_root_is_data_error(self, tmp_path):
        assert main([str(tmp_path / "absent"), "--out",
                     str(tmp_path / "d.jsonl")]) == EXIT_DATA

    def test_bad_label_entry(self, corpus_dir, tmp_path):
        assert main([str(corpus_dir), "--out", str(tmp_path / "d.jsonl"),
                     "--label", "loops=x"]) == EXIT_DATA

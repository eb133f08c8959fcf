import numpy as np
import pytest

from treeconv.baselines import bow_features
from treeconv.datagen import GenConfig, MOTIFS, generate_corpus, random_tree
from treeconv.errors import ValidationError
from treeconv.numerics import SeededRng
from treeconv.trees import dump_ast


class TestGenerateCorpus:
    def test_deterministic(self):
        cfg = GenConfig(per_class=5, seed=11)
        vocab_a, ds_a = generate_corpus(cfg)
        vocab_b, ds_b = generate_corpus(cfg)
        assert vocab_a == vocab_b
        docs_a = [dump_ast(a.ast, vocab_a) for a, _ in ds_a.samples]
        docs_b = [dump_ast(a.ast, vocab_b) for a, _ in ds_b.samples]
        assert docs_a == docs_b
        assert ds_a.labels().tolist() == ds_b.labels().tolist()

    def test_different_seeds_differ(self):
        _, ds_a = generate_corpus(GenConfig(per_class=5, seed=1))
        _, ds_b = generate_corpus(GenConfig(per_class=5, seed=2))
        sizes_a = [len(a.ast) for a, _ in ds_a.samples]
        sizes_b = [len(a.ast) for a, _ in ds_b.samples]
        assert sizes_a != sizes_b

    def test_sizes_within_bounds_and_valid(self):
        cfg = GenConfig(per_class=10, seed=3, min_nodes=12, max_nodes=50)
        _, ds = generate_corpus(cfg)
        for annotated, _ in ds.samples:
            assert 12 <= len(annotated.ast) <= 50  # Ast validated on construction

    def test_exactly_balanced(self):
        for count_matched in (False, True):
            _, ds = generate_corpus(GenConfig(per_class=7, seed=5,
                                              count_matched=count_matched))
            labels = ds.labels()
            for c in range(4):
                assert int(np.sum(labels == c)) == 7

    def test_count_matched_groups_share_counts(self):
        cfg = GenConfig(per_class=8, seed=9, count_matched=True)
        vocab, ds = generate_corpus(cfg)
        n = cfg.n_classes
        for g in range(cfg.per_class):
            group = ds.samples[g * n:(g + 1) * n]
            assert [label for _, label in group] == list(range(n))
            counts = [bow_features(a.ast, vocab) for a, _ in group]
            for other in counts[1:]:
                assert np.array_equal(counts[0], other)

    def test_count_matched_bow_is_uninformative(self):
        # every sample has a different-class partner with identical counts
        cfg = GenConfig(per_class=6, seed=2, count_matched=True)
        vocab, ds = generate_corpus(cfg)
        feats = [tuple(bow_features(a.ast, vocab)) for a, _ in ds.samples]
        labels = ds.labels()
        for i, f in enumerate(feats):
            partners = [j for j, g in enumerate(feats)
                        if g == f and labels[j] != labels[i]]
            assert partners

    def test_motifs_shape_trees_differently(self):
        cfg = GenConfig(per_class=3, seed=4, count_matched=True)
        vocab, ds = generate_corpus(cfg)
        group = ds.samples[:4]
        docs = {dump_ast(a.ast, vocab) for a, _ in group}
        assert len(docs) == 4  # same symbols, four distinct shapes

    def test_infeasible_bounds_rejected(self):
        with pytest.raises(ValidationError, match="infeasible"):
            generate_corpus(GenConfig(per_class=1, seed=0, min_nodes=1, max_nodes=2))

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            GenConfig(n_classes=1)
        with pytest.raises(ValidationError):
            GenConfig(motifs=("left",))  # one motif per class required
        with pytest.raises(ValidationError):
            GenConfig(motifs=("left", "right", "spiral", "middle"))

    def test_explicit_motifs_accepted(self):
        cfg = GenConfig(n_classes=2, per_class=2, seed=0,
                        motifs=("left", "right"))
        _, ds = generate_corpus(cfg)
        assert ds.n_classes == 2

    def test_provenance_tag(self):
        _, ds = generate_corpus(GenConfig(per_class=2, seed=0, count_matched=True))
        assert "count-matched" in ds.provenance


class TestRandomTree:
    def test_node_count_and_validity(self, rng):
        for n in (1, 2, 17):
            ast = random_tree(rng, n, 4)
            assert len(ast) == n

    def test_deterministic(self):
        a = random_tree(SeededRng(5), 20, 3)
        b = random_tree(SeededRng(5), 20, 3)
        assert a == b

    def test_bad_arguments(self, rng):
        with pytest.raises(ValidationError):
            random_tree(rng, 0, 3)


def test_motif_list_is_stable():
    assert MOTIFS == ("left", "right", "middle", "zigzag", "zigzag_reverse")

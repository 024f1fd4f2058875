import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advrep import (
    Dataset,
    SynthConfig,
    collapse_duplicate_genes,
    log_transform,
    synth_generate,
)
from advrep.data import load_expression_csv, save_dataset_csv
from advrep.errors import ContractError, ParseError


class TestSynth:
    def test_deterministic_per_seed(self):
        cfg = SynthConfig(n_per_domain=20, n_domains=2, n_features=40, seed=5)
        a, b = synth_generate(cfg), synth_generate(cfg)
        assert np.array_equal(a.X, b.X)
        assert np.array_equal(a.label, b.label)

    def test_metadata_records_planted_subsets(self):
        ds = synth_generate(SynthConfig(n_per_domain=20, n_domains=2, n_features=40, seed=1))
        assert len(ds.metadata["label_features"]) == 12
        assert set(ds.metadata["domain_features"]) == {"0", "1"}

    def test_disjoint_subsets(self):
        ds = synth_generate(SynthConfig(n_per_domain=20, n_domains=3, n_features=60, seed=2))
        label_set = set(ds.metadata["label_features"])
        for feats in ds.metadata["domain_features"].values():
            assert not label_set & set(feats)

    def test_label_rate_imbalance(self):
        ds = synth_generate(
            SynthConfig(n_per_domain=100, n_domains=2, n_features=40, label_rate=0.7, seed=3)
        )
        for dom in range(2):
            rate = ds.label[ds.domain == dom].mean()
            assert rate == pytest.approx(0.7, abs=0.01)

    def test_k1_rejected(self):
        with pytest.raises(ContractError):
            SynthConfig(n_per_domain=20, n_domains=1, n_features=40)

    def test_label_effect_zero_leaves_no_signal(self):
        cfg = SynthConfig(
            n_per_domain=400, n_domains=2, n_features=30, domain_effect=2.0,
            label_effect=0.0, domain_subset_size=4, label_subset_size=4, seed=4,
        )
        ds = synth_generate(cfg)
        pos = ds.X[ds.label == 1].mean(axis=0)
        neg = ds.X[ds.label == 0].mean(axis=0)
        # no feature separates labels beyond sampling noise (~4 sd of the mean gap)
        gap_sd = np.sqrt(1.0 / np.sum(ds.label == 1) + 1.0 / np.sum(ds.label == 0))
        assert np.max(np.abs(pos - neg)) < 4.5 * gap_sd

    def test_domain_probe_beats_label_probe_on_raw_features(self):
        from sklearn.linear_model import LogisticRegression

        ds = synth_generate(SynthConfig(seed=6))
        domain_probe = LogisticRegression(max_iter=2000).fit(ds.X, ds.domain)
        label_probe = LogisticRegression(max_iter=2000).fit(ds.X, ds.label)
        domain_acc = domain_probe.score(ds.X, ds.domain)
        label_acc = label_probe.score(ds.X, ds.label)
        assert domain_acc > label_acc


class TestCollapse:
    def test_definition(self):
        X = np.array([[1.0, 2.0, 3.0]])
        out, names = collapse_duplicate_genes(X, ["A", "B", "A"])
        assert names == ["A", "B"]
        assert np.array_equal(out, [[4.0, 2.0]])

    def test_no_duplicates_identity(self):
        X = np.arange(6.0).reshape(2, 3)
        out, names = collapse_duplicate_genes(X, ["A", "B", "C"])
        assert names == ["A", "B", "C"]
        assert np.array_equal(out, X)

    def test_paper_scale_duplicate_counts(self):
        # 41124 raw symbols collapsing onto 39979 uniques
        rng = np.random.default_rng(7)
        uniques = [f"sym{i}" for i in range(39979)]
        extras = rng.choice(39979, size=41124 - 39979, replace=True)
        names = uniques + [uniques[i] for i in extras]
        order = rng.permutation(len(names))
        names = [names[i] for i in order]
        X = np.ones((1, len(names)))
        out, collapsed = collapse_duplicate_genes(X, names)
        assert len(collapsed) == 39979
        assert out.sum() == pytest.approx(41124.0)

    @given(st.lists(st.sampled_from("ABCD"), min_size=1, max_size=12))
    @settings(max_examples=40, deadline=None)
    def test_column_sums_preserved(self, names):
        X = np.arange(float(len(names))).reshape(1, -1) + 1.0
        out, collapsed = collapse_duplicate_genes(X, names)
        assert out.sum() == pytest.approx(X.sum())
        assert collapsed == list(dict.fromkeys(names))


class TestLogTransform:
    def test_fixed_points(self):
        assert log_transform(np.array([[0.0]]))[0, 0] == 0.0
        assert log_transform(np.array([[np.e - 1.0]]))[0, 0] == pytest.approx(1.0, rel=1e-12)

    def test_negative_rejected_with_position(self):
        with pytest.raises(ContractError, match="row 1, column 0"):
            log_transform(np.array([[1.0, 2.0], [-0.5, 3.0]]))

    def test_monotone_preserves_order(self):
        rng = np.random.default_rng(8)
        col = rng.uniform(0, 50, 30)
        transformed = log_transform(col.reshape(-1, 1))[:, 0]
        assert np.array_equal(np.argsort(col, kind="stable"),
                              np.argsort(transformed, kind="stable"))


class TestCsvIo:
    def _write(self, tmp_path, expr_lines, label_lines):
        expr = tmp_path / "expr.csv"
        labels = tmp_path / "labels.csv"
        expr.write_text("\n".join(expr_lines) + "\n")
        labels.write_text("\n".join(label_lines) + "\n")
        return expr, labels

    def test_roundtrip(self, tmp_path):
        ds = synth_generate(
            SynthConfig(n_per_domain=5, n_domains=2, n_features=8,
                        domain_subset_size=2, label_subset_size=2, seed=9)
        )
        expr, labels = tmp_path / "e.csv", tmp_path / "l.csv"
        save_dataset_csv(ds, expr, labels)
        loaded = load_expression_csv(expr, labels)
        assert np.array_equal(loaded.X, ds.X)
        assert np.array_equal(loaded.domain, ds.domain)
        assert np.array_equal(loaded.label, ds.label)
        assert loaded.sample_ids == ds.sample_ids

    def test_hand_written_3x2(self, tmp_path):
        expr, labels = self._write(
            tmp_path,
            ["sample_id,gA,gB", "s1,1.5,2.5", "s2,3.0,4.0", "s3,5.0,6.0"],
            ["sample_id,domain,label", "s2,lung,1", "s1,brain,0", "s3,lung,0"],
        )
        ds = load_expression_csv(expr, labels)
        # labels-file order wins
        assert ds.sample_ids == ["s2", "s1", "s3"]
        assert np.array_equal(ds.X[0], [3.0, 4.0])
        # domains encode in sorted order: brain=0, lung=1
        assert ds.domain.tolist() == [1, 0, 1]
        assert ds.metadata["domain_names"] == ["brain", "lung"]

    def test_missing_label_row_names_sample(self, tmp_path):
        expr, labels = self._write(
            tmp_path,
            ["sample_id,gA", "s1,1.0", "s2,2.0", "s3,3.0", "s4,4.0"],
            ["sample_id,domain,label", "s1,a,0", "s2,b,1", "s3,a,1"],
        )
        with pytest.raises(ParseError, match="s4"):
            load_expression_csv(expr, labels)

    def test_unknown_sample_id(self, tmp_path):
        expr, labels = self._write(
            tmp_path,
            ["sample_id,gA", "s1,1.0", "s2,2.0"],
            ["sample_id,domain,label", "s1,a,0", "sX,b,1"],
        )
        with pytest.raises(ParseError, match="sX"):
            load_expression_csv(expr, labels)

    def test_duplicate_sample_id(self, tmp_path):
        expr, labels = self._write(
            tmp_path,
            ["sample_id,gA", "s1,1.0", "s1,2.0"],
            ["sample_id,domain,label", "s1,a,0"],
        )
        with pytest.raises(ParseError, match="duplicate"):
            load_expression_csv(expr, labels)

    def test_non_numeric_cell_position(self, tmp_path):
        expr, labels = self._write(
            tmp_path,
            ["sample_id,gA,gB", "s1,1.0,oops"],
            ["sample_id,domain,label", "s1,a,0"],
        )
        with pytest.raises(ParseError, match="row 2, column 3"):
            load_expression_csv(expr, labels)

    def test_ragged_row(self, tmp_path):
        expr, labels = self._write(
            tmp_path,
            ["sample_id,gA,gB", "s1,1.0"],
            ["sample_id,domain,label", "s1,a,0"],
        )
        with pytest.raises(ParseError, match="row 2"):
            load_expression_csv(expr, labels)


class TestDatasetValidation:
    def test_rejects_nan(self):
        with pytest.raises(ContractError):
            Dataset(np.array([[np.nan, 1.0], [1.0, 2.0], [1.0, 2.0], [0.0, 1.0]]),
                    [0, 0, 1, 1], [0, 1, 0, 1], ["a", "b"], ["s1", "s2", "s3", "s4"])

    def test_singleton_class_rejected_at_training_entry(self):
        from advrep.data import check_stratifiable

        X = np.ones((4, 2))
        ds = Dataset(X, [0, 0, 0, 1], [0, 1, 0, 1], ["a", "b"], list("abcd"))
        with pytest.raises(ContractError):
            check_stratifiable(ds)

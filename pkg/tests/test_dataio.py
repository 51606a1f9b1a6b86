import numpy as np
import pytest

from adcsd import dataio
from adcsd.engine import AblationMode, init_state, predict
from adcsd.errors import ConfigError, DataFormatError, ShapeError

from conftest import tensor


class TestDatasetFile:
    def test_roundtrip_is_byte_identical(self, rng, tmp_path):
        vals = rng.uniform(-10, 10, size=(3, 5, 2))
        vals[0, 1, 0] = np.nan
        data = tensor(vals)
        p1 = tmp_path / "a.sttf"
        p2 = tmp_path / "b.sttf"
        dataio.save_dataset(p1, data)
        loaded = dataio.load_dataset(p1)
        dataio.save_dataset(p2, loaded)
        assert p1.read_bytes() == p2.read_bytes()
        assert np.array_equal(loaded.values, data.values)
        assert np.array_equal(loaded.mask, data.mask)

    def test_nan_token_marks_missing(self, tmp_path):
        p = tmp_path / "d.sttf"
        p.write_text("STTF v1\nN=2 T=2 C=1\n1.0 nan\n3.0 4.0\n")
        data = dataio.load_dataset(p)
        assert data.mask[1, 0, 0] == False  # noqa: E712
        assert data.values[1, 0, 0] == 0.0

    def test_header_and_dims_validated(self, tmp_path):
        p = tmp_path / "bad.sttf"
        p.write_text("WRONG\n")
        with pytest.raises(DataFormatError):
            dataio.load_dataset(p)
        p.write_text("STTF v1\nN=x T=2 C=1\n")
        with pytest.raises(DataFormatError, match="line 2"):
            dataio.load_dataset(p)

    def test_row_count_mismatch_names_line(self, tmp_path):
        p = tmp_path / "short.sttf"
        p.write_text("STTF v1\nN=1 T=3 C=1\n1.0\n2.0\n")
        with pytest.raises(DataFormatError, match="line"):
            dataio.load_dataset(p)

    def test_column_count_mismatch_names_line(self, tmp_path):
        p = tmp_path / "wide.sttf"
        p.write_text("STTF v1\nN=2 T=2 C=1\n1.0 2.0\n3.0\n")
        with pytest.raises(DataFormatError, match="line 4"):
            dataio.load_dataset(p)


class TestPredictionsFile:
    def test_roundtrip(self, rng, tmp_path):
        entries = [tensor(rng.normal(size=(3, 4, 2))) for _ in range(5)]
        p1 = tmp_path / "a.pred"
        p2 = tmp_path / "b.pred"
        dataio.save_predictions(p1, entries)
        loaded = dataio.load_predictions(p1)
        dataio.save_predictions(p2, loaded)
        assert p1.read_bytes() == p2.read_bytes()
        assert len(loaded) == 5
        for a, b in zip(entries, loaded):
            assert np.array_equal(a.values, b.values)

    def test_line_count_validated(self, tmp_path):
        p = tmp_path / "bad.pred"
        p.write_text("PRED v1\nE=2 N=1 H=2 C=1\n1.0\n2.0\n3.0\n")
        with pytest.raises(DataFormatError):
            dataio.load_predictions(p)

    def test_inhomogeneous_entries_rejected(self, rng, tmp_path):
        entries = [tensor(rng.normal(size=(2, 3, 1))), tensor(rng.normal(size=(2, 4, 1)))]
        with pytest.raises(ShapeError):
            dataio.save_predictions(tmp_path / "x.pred", entries)


class TestSplit:
    def test_floor_arithmetic(self):
        tr, va, te = dataio.split(10, (0.6, 0.2, 0.2))
        assert (tr.start, tr.stop) == (0, 6)
        assert (va.start, va.stop) == (6, 8)
        assert (te.start, te.stop) == (8, 10)

    def test_covers_everything_without_overlap(self, rng):
        for _ in range(30):
            n = int(rng.integers(10, 500))
            fracs = rng.dirichlet([3, 2, 2])
            try:
                tr, va, te = dataio.split(n, tuple(fracs))
            except ConfigError:
                continue
            assert tr.stop == va.start and va.stop == te.start
            assert len(tr) + len(va) + len(te) == n

    def test_empty_split_rejected(self):
        with pytest.raises(ConfigError):
            dataio.split(10, (1.0, 0.0, 0.0))

    def test_table_style_fractions_accepted(self):
        fracs = dataio.parse_fractions("6:2:2")
        assert fracs == (0.6, 0.2, 0.2)
        dataio.split(100, fracs)

    def test_fraction_sum_checked(self):
        with pytest.raises(ConfigError):
            dataio.split(10, (0.5, 0.2, 0.2))


class TestMakeEntries:
    def test_count_formula(self, rng):
        data = tensor(rng.normal(size=(2, 5, 1)))
        assert len(dataio.make_entries(data, 2, 1, range(0, 5))) == 3

    def test_boundary_single_entry(self, rng):
        data = tensor(rng.normal(size=(2, 7, 1)))
        entries = dataio.make_entries(data, 4, 3, range(0, 7))
        assert len(entries) == 1

    def test_windows_tile_the_source(self, rng):
        data = tensor(rng.normal(size=(2, 12, 1)))
        entries = dataio.make_entries(data, 3, 2, range(2, 11))
        assert len(entries) == 9 - 3 - 2 + 1
        for k, (x, y) in enumerate(entries):
            assert np.array_equal(x.values, data.values[:, 2 + k : 2 + k + 3])
            assert np.array_equal(y.values, data.values[:, 2 + k + 3 : 2 + k + 5])

    def test_too_short_range_rejected(self, rng):
        data = tensor(rng.normal(size=(1, 5, 1)))
        with pytest.raises(ConfigError):
            dataio.make_entries(data, 4, 2, range(0, 5))


class TestCheckpoint:
    def test_save_load_save_byte_identical(self, rng, tmp_path):
        meta = {"alpha": "1", "beta": format(0.1, ".17g")}
        sections = {
            "one": rng.normal(size=7),
            "two": rng.normal(size=(3, 4)),
            "three": rng.normal(size=(2, 3, 2)),
        }
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        dataio.save_checkpoint(p1, "test-kind", meta, sections)
        kind, meta2, sections2 = dataio.load_checkpoint(p1)
        assert kind == "test-kind" and meta2 == meta
        dataio.save_checkpoint(p2, kind, meta2, sections2)
        assert p1.read_bytes() == p2.read_bytes()
        for name, arr in sections.items():
            assert np.array_equal(sections2[name], arr)

    def test_malformed_section_names_line(self, tmp_path):
        p = tmp_path / "bad.ckpt"
        p.write_text("CKPT v1 thing\nsection s 2\n1.0\n")
        with pytest.raises(DataFormatError, match="line 3"):
            dataio.load_checkpoint(p)

    def test_unrecognized_line_rejected(self, tmp_path):
        p = tmp_path / "bad.ckpt"
        p.write_text("CKPT v1 thing\ngarbage here\n")
        with pytest.raises(DataFormatError, match="line 2"):
            dataio.load_checkpoint(p)


class TestStateCheckpoint:
    def test_fresh_state_roundtrips_with_zero_scales(self, tmp_path):
        state = init_state(n_nodes=3, horizon=4, seed=1)
        path = tmp_path / "s.ckpt"
        dataio.save_state(path, state)
        text = path.read_text()
        assert "section seasonal_scale 3" in text
        loaded = dataio.load_state(path)
        assert not loaded.seasonal_scale.values.any()
        assert not loaded.trend_scale.values.any()
        assert loaded.mode is AblationMode.M5
        assert np.array_equal(loaded.seasonal_net.w1, state.seasonal_net.w1)

    def test_save_load_save_byte_identical(self, tmp_path, rng):
        state = init_state(n_nodes=2, horizon=3, seed=7, lr=0.05)
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        dataio.save_state(p1, state)
        dataio.save_state(p2, dataio.load_state(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_mismatched_node_count_raises_at_use(self, tmp_path, rng):
        state = init_state(n_nodes=3, horizon=4, seed=1)
        path = tmp_path / "s.ckpt"
        dataio.save_state(path, state)
        loaded = dataio.load_state(path)
        with pytest.raises(ShapeError):
            predict(loaded, tensor(rng.normal(size=(5, 4, 1))))

    def test_sgd_state_roundtrip(self, tmp_path):
        state = init_state(n_nodes=2, horizon=3, seed=0, optimizer="sgd", lr=0.2)
        path = tmp_path / "sgd.ckpt"
        dataio.save_state(path, state)
        loaded = dataio.load_state(path)
        assert loaded.opt.lr == 0.2
        assert not hasattr(loaded.opt, "m")

import numpy as np
import pytest

from smokeda.figures import (
    emit_bar_plot,
    emit_feature_plot,
    emit_line_plot,
    group_index,
)


def scatter_inputs(n=30, seed=0):
    rng = np.random.default_rng(seed)
    emb = rng.normal(size=(n, 2))
    y_s = rng.integers(0, 2, n)
    y_d = rng.integers(0, 2, n)
    return emb, y_s, y_d


class TestGroupIndex:
    def test_mapping(self):
        assert group_index(1, 0) == 0  # synthetic smoke
        assert group_index(1, 1) == 1  # real smoke
        assert group_index(0, 1) == 2  # non-smoke


class TestFeaturePlot:
    def test_writes_svg_with_group_ids(self, tmp_path):
        emb, y_s, y_d = scatter_inputs()
        path = tmp_path / "f.svg"
        emit_feature_plot(emb, y_s, y_d, str(path))
        text = path.read_text()
        assert text.lstrip().startswith("<?xml")
        for gid in ("points-synthetic-smoke", "points-real-smoke", "points-non-smoke"):
            assert gid in text

    def test_byte_deterministic(self, tmp_path):
        emb, y_s, y_d = scatter_inputs()
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        emit_feature_plot(emb, y_s, y_d, str(a))
        emit_feature_plot(emb, y_s, y_d, str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_feature_plot(np.empty((0, 2)), [], [], str(tmp_path / "e.svg"))

    def test_length_mismatch_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_feature_plot(np.zeros((3, 2)), [1, 1], [0, 0, 0],
                              str(tmp_path / "e.svg"))


class TestLineAndBar:
    def test_line_plot(self, tmp_path):
        path = tmp_path / "l.svg"
        emit_line_plot([1, 2, 3], {"CD": [0.7, 0.8, 0.9]}, str(path), "x", "CD")
        assert path.read_text().lstrip().startswith("<?xml")

    def test_line_plot_deterministic(self, tmp_path):
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        series = {"coral": [0.8, 0.9], "no_coral": [0.7, 0.85]}
        emit_line_plot([0.1, 0.2], series, str(a), "beta", "CD")
        emit_line_plot([0.1, 0.2], series, str(b), "beta", "CD")
        assert a.read_bytes() == b.read_bytes()

    def test_bar_plot(self, tmp_path):
        path = tmp_path / "b.svg"
        emit_bar_plot(["BASELINE", "GRL_ONLY"], [0.8, 0.85], str(path), "mean CD")
        assert path.read_text().lstrip().startswith("<?xml")

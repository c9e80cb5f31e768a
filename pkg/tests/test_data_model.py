import numpy as np
import pytest

from lotspace.data_model import (CellTable, LabelMap, ParseError, PointCloud,
                                 Schema, SchemaError, assign_labels_from_key,
                                 binarize_labels, filter_replicates,
                                 group_point_clouds, load_cells_csv)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(map(str, r)) + "\n")


SCHEMA2 = Schema(("Patient",), ("CD3", "CD8"))


class TestLoadCellsCsv:
    def test_small_table(self, tmp_path):
        p = tmp_path / "cells.csv"
        write_csv(p, ["Patient", "CD3", "CD8"],
                  [["p1", 0.1, 0.2], ["p1", 0.3, 0.4], ["p2", 0.5, 0.6]])
        table = load_cells_csv(p, SCHEMA2)
        assert table.d == 2 and table.n_rows == 3
        assert table.meta[0] == ("p1",)
        assert np.allclose(table.markers[2], [0.5, 0.6])

    def test_missing_column(self, tmp_path):
        p = tmp_path / "cells.csv"
        write_csv(p, ["Patient", "CD8"], [["p1", 0.2]])
        with pytest.raises(SchemaError, match="CD3"):
            load_cells_csv(p, SCHEMA2)

    def test_non_numeric_marker(self, tmp_path):
        p = tmp_path / "cells.csv"
        write_csv(p, ["Patient", "CD3", "CD8"], [["p1", "oops", 0.2]])
        with pytest.raises(ParseError, match="row 0"):
            load_cells_csv(p, SCHEMA2)

    def test_sixteen_marker_layout(self, tmp_path):
        markers = [f"mk{i}" for i in range(16)]
        schema = Schema(("Patient",), tuple(markers))
        p = tmp_path / "cells.csv"
        write_csv(p, ["Patient"] + markers, [["p1"] + [0.0] * 16])
        table = load_cells_csv(p, schema)
        assert len(table.marker_names) == 16

    def test_optional_transform(self, tmp_path):
        schema = Schema(("Patient",), ("CD3", "CD8"),
                        transforms={"CD3": np.arcsinh})
        p = tmp_path / "cells.csv"
        write_csv(p, ["Patient", "CD3", "CD8"], [["p1", 10.0, 10.0]])
        table = load_cells_csv(p, schema)
        assert table.markers[0, 0] == pytest.approx(np.arcsinh(10.0))
        assert table.markers[0, 1] == 10.0


class TestGroupPointClouds:
    def table(self):
        meta = [("p1",), ("p1",), ("p1",), ("p2",), ("p2",), ("p2",)]
        return CellTable(meta, np.arange(12.0).reshape(6, 2),
                         ("CD3", "CD8"), ("Patient",))

    def test_partition(self):
        clouds = group_point_clouds(self.table(), ["Patient"])
        assert len(clouds) == 2
        assert all(c.n == 3 for c in clouds)
        assert np.allclose(clouds[0].weights, 1 / 3)

    def test_singleton(self):
        table = CellTable([("p1",)], np.array([[1.0, 2.0]]),
                          ("CD3", "CD8"), ("Patient",))
        clouds = group_point_clouds(table, ["Patient"])
        assert clouds[0].n == 1 and clouds[0].weights[0] == 1.0

    def test_empty_keys_rejected(self):
        with pytest.raises(ValueError):
            group_point_clouds(self.table(), [])

    def test_roundtrip_multiset(self):
        table = self.table()
        clouds = group_point_clouds(table, ["Patient"])
        recovered = np.vstack([c.points for c in clouds])
        assert sorted(map(tuple, recovered)) == sorted(map(tuple, table.markers))
        assert sum(c.n for c in clouds) == table.n_rows


class TestFilterReplicates:
    def table(self):
        meta = [("p1", "A"), ("p1", "AA"), ("p2", "BB"), ("p2", "B")]
        return CellTable(meta, np.arange(8.0).reshape(4, 2),
                         ("CD3", "CD8"), ("Patient", "Replicate"))

    def test_identity(self):
        t = self.table()
        assert filter_replicates(t, [], "Replicate") is t

    def test_exclude(self):
        out = filter_replicates(self.table(), ["AA", "BB", "CC"], "Replicate")
        assert out.n_rows == 2
        assert [m[1] for m in out.meta] == ["A", "B"]

    def test_all_excluded_is_valid(self):
        out = filter_replicates(self.table(), ["A", "AA", "B", "BB"], "Replicate")
        assert out.n_rows == 0

    def test_idempotent(self):
        once = filter_replicates(self.table(), ["AA"], "Replicate")
        twice = filter_replicates(once, ["AA"], "Replicate")
        assert once.meta == twice.meta
        assert np.array_equal(once.markers, twice.markers)


class TestBinarizeLabels:
    def clouds(self, labels):
        return [PointCloud(np.zeros((1, 2)), [1.0], (f"s{i}",), lab)
                for i, lab in enumerate(labels)]

    def test_unmapped_dropped(self):
        lm = LabelMap({"HCW": 0, "0.0": 1, "1.0": 1})
        labels = ["HCW"] * 50 + ["0.0"] * 50 + ["1.0"] * 48 + ["?"] * 2
        kept, dropped = binarize_labels(self.clouds(labels), lm)
        assert len(kept) == 148 and dropped == 2
        assert {c.label for c in kept} == {0, 1}

    def test_identity_map(self):
        lm = LabelMap({0: 0, 1: 1})
        kept, dropped = binarize_labels(self.clouds([0, 1, 1]), lm)
        assert dropped == 0
        assert [c.label for c in kept] == [0, 1, 1]

    def test_empty(self):
        kept, dropped = binarize_labels([], LabelMap({}))
        assert kept == [] and dropped == 0


def test_assign_labels_from_key():
    table = CellTable([("p1", "sick"), ("p2", "well")],
                      np.zeros((2, 1)), ("m",), ("Patient", "Status"))
    clouds = group_point_clouds(table, ["Patient", "Status"])
    labeled = assign_labels_from_key(clouds, ["Patient", "Status"], "Status")
    assert sorted(c.label for c in labeled) == ["sick", "well"]


def test_point_cloud_invariants():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((2, 2)), [0.6, 0.6])
    with pytest.raises(ValueError):
        PointCloud(np.array([[np.inf, 0.0]]), [1.0])

import numpy as np
import pytest

from symmpi.calibrate import PredictionSet
from symmpi.dataio import (
    DataError,
    read_adjacency,
    read_generators,
    read_graph_values_csv,
    read_hierarchical_csv,
    write_bench_rows,
    write_prediction_set,
)
from symmpi.sim import BenchRow


def test_read_hierarchical_unsup(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("branch_id,y\na,1.0\na,2.0\nb,3.0\nb,\n")
    order, xs, ys, target = read_hierarchical_csv(p)
    assert order == ["a", "b"] and xs is None
    assert target == (1, 1)
    assert np.array_equal(ys[0], [1.0, 2.0])
    assert np.isnan(ys[1][1])


def test_read_hierarchical_sup_multivariate(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("branch_id,x_1,x_2,y\n0,0.1,0.2,1.0\n0,0.3,0.4,\n")
    order, xs, ys, target = read_hierarchical_csv(p)
    assert xs[0].shape == (2, 2)
    assert target == (0, 1)


def test_read_hierarchical_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("branch_id,y\n0,1.0\n")
    with pytest.raises(DataError):
        read_hierarchical_csv(p)  # no target
    p.write_text("branch_id,y\n0,\n1,\n")
    with pytest.raises(DataError):
        read_hierarchical_csv(p)  # two targets
    p.write_text("foo,bar\n1,2\n")
    with pytest.raises(DataError):
        read_hierarchical_csv(p)


def test_read_graph_values(tmp_path):
    p = tmp_path / "v.csv"
    p.write_text("vertex_id,value\n1,2.0\n0,1.0\n2,\n")
    vals, missing = read_graph_values_csv(p)
    assert missing == 2
    assert np.array_equal(vals[:2], [1.0, 2.0])
    p.write_text("vertex_id,value\n0,\n1,\n")
    with pytest.raises(DataError):
        read_graph_values_csv(p)


def test_read_adjacency_dense_and_edges(tmp_path):
    dense = tmp_path / "a.csv"
    dense.write_text("0,1,0\n1,0,1\n0,1,0\n")
    A = read_adjacency(dense)
    assert A.shape == (3, 3) and A[0, 1] == 1.0
    edges = tmp_path / "e.txt"
    edges.write_text("0 1\n1 2 2.5\n2 3\n")
    B = read_adjacency(edges)
    assert B.shape == (4, 4)
    assert B[1, 2] == 2.5 and B[2, 1] == 2.5
    dense.write_text("0,1\n0,0\n")
    with pytest.raises(DataError):
        read_adjacency(dense)  # asymmetric dense matrix


def test_read_generators(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("1 2 0\n0,2,1\n")
    gens = read_generators(p, 3)
    assert len(gens) == 2
    assert gens[0](0) == 1
    with pytest.raises(DataError):
        read_generators(p, 4)


def test_write_prediction_set_csv_and_json(tmp_path):
    ps = PredictionSet(np.linspace(0, 1, 5), np.array([0, 1, 1, 0, 0], dtype=bool))
    j = tmp_path / "s.json"
    write_prediction_set(ps, j, "json")
    import json

    payload = json.load(open(j))
    assert payload["unbounded"] is False
    assert payload["member"] == [0, 1, 1, 0, 0]
    c = tmp_path / "s.csv"
    write_prediction_set(ps, c, "csv")
    lines = c.read_text().strip().splitlines()
    assert lines[0] == "candidate,member"
    assert len(lines) == 6


def test_write_bench_rows_inf_handling(tmp_path):
    rows = [
        BenchRow("single_tree", 0.05, 10.0, float("inf"), 0.0, 1.0, 0.0, 1.0),
        BenchRow("symmpi", 0.05, 10.0, 2.05, 0.01, 0.95, 0.02, 0.0),
    ]
    p = tmp_path / "b.csv"
    write_bench_rows(rows, p, "csv")
    text = p.read_text()
    assert "Inf" in text and "2.05" in text
    pj = tmp_path / "b.json"
    write_bench_rows(rows, pj, "json")
    import json

    payload = json.load(open(pj))
    assert payload[0]["mean_length"] == "Inf"

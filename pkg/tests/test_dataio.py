import json

import numpy as np
import pytest

from dibpnmf import dataio
from dibpnmf.errors import ContractError, ParseError, SnapshotError
from dibpnmf.factorization import GibbsSampler, ModelConfig


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_dense_csv_basic(tmp_path):
    d = dataio.load_dense_csv(_write(tmp_path, "y.csv", "0,1\n1,0\n"))
    np.testing.assert_array_equal(d.values, [[0, 1], [1, 0]])
    assert d.mask is None


def test_dense_csv_header(tmp_path):
    d = dataio.load_dense_csv(_write(tmp_path, "y.csv", "a,b\n2,3.5\n"), header=True)
    np.testing.assert_array_equal(d.values, [[2, 3.5]])


def test_dense_csv_ragged_names_line(tmp_path):
    with pytest.raises(ParseError) as info:
        dataio.load_dense_csv(_write(tmp_path, "y.csv", "0,1\n1\n"))
    assert info.value.line == 2 and "line 2" in str(info.value)


@pytest.mark.parametrize("text,line,col", [("0,1\n1,-1\n", 2, 2), ("0,x\n", 1, 2), ("nan,1\n", 1, 1)])
def test_dense_csv_bad_cells(tmp_path, text, line, col):
    with pytest.raises(ParseError) as info:
        dataio.load_dense_csv(_write(tmp_path, "y.csv", text))
    assert (info.value.line, info.value.column) == (line, col)


def test_dense_csv_empty(tmp_path):
    with pytest.raises(ParseError):
        dataio.load_dense_csv(_write(tmp_path, "y.csv", "\n"))


def test_matrix_csv_round_trip(tmp_path):
    X = np.random.default_rng(0).random((4, 3)) * 1e-5
    dataio.write_matrix_csv(tmp_path / "x.csv", X)
    np.testing.assert_array_equal(dataio.load_dense_csv(tmp_path / "x.csv").values, X)


def test_triplets_basic(tmp_path):
    d = dataio.load_triplets(_write(tmp_path, "r.txt", "1 1 5\n"), 1, 1)
    np.testing.assert_array_equal(d.values, [[5]])
    np.testing.assert_array_equal(d.mask, [[1]])


def test_triplets_tabs_and_comments(tmp_path):
    d = dataio.load_triplets(_write(tmp_path, "r.txt", "# ratings\n1\t2\t4\n\n2 1 3\n"), 2, 2)
    np.testing.assert_array_equal(d.values, [[0, 4], [3, 0]])
    np.testing.assert_array_equal(d.mask, [[0, 1], [1, 0]])


@pytest.mark.parametrize("text,M,line,word", [
    ("1 1 5\n1 1 3\n", 1, 2, "duplicate"),
    ("2 1 4\n", 1, 1, "row index"),
    ("1 1\n", 1, 1, "expected"),
    ("1 a 3\n", 1, 1, "integers"),
])
def test_triplets_errors(tmp_path, text, M, line, word):
    with pytest.raises(ParseError) as info:
        dataio.read_triplets(_write(tmp_path, "r.txt", text), M, 3)
    assert info.value.line == line and word in str(info.value)


def test_rating_triplets_contract():
    with pytest.raises(ContractError):
        dataio.RatingTriplets(np.array([0, 0]), np.array([1, 1]), np.array([1.0, 2.0]), (2, 2))


def test_synth_binary():
    a = dataio.synth_binary(seed=4)
    assert a.shape == (20, 30) and set(np.unique(a.values)) <= {0.0, 1.0}
    assert np.array_equal(a.values, dataio.synth_binary(seed=4).values)
    assert abs(a.values.mean() - 0.5) <= 0.05
    assert np.all(dataio.synth_binary(5, 5, 1.0, seed=1).values == 1)


def test_synth_planted():
    d, A, X = dataio.synth_planted(20, 30, 3, 0.5, seed=2)
    d2, A2, X2 = dataio.synth_planted(20, 30, 3, 0.5, seed=2)
    assert np.array_equal(d.values, d2.values) and np.array_equal(A, A2) and np.array_equal(X, X2)
    assert A.shape == (20, 3) and X.shape == (30, 3) and np.all(A >= 0)
    # averaging many draws recovers the planted mean
    big, A1, X1 = dataio.synth_planted(400, 400, 1, 1.0, seed=5)
    ratio = big.values / (A1 @ X1.T + 0.01)
    assert ratio.mean() == pytest.approx(1.0, abs=0.01)


@pytest.fixture(params=["bb", "copula", "gp"])
def sampler(request):
    s = GibbsSampler(dataio.synth_binary(6, 7, seed=1), ModelConfig(model=request.param, K=5, max_iter=30, seed=4))
    s.run(10)
    return s


def test_snapshot_round_trip(tmp_path, sampler):
    snap = dataio.sampler_snapshot(sampler)
    dataio.save_snapshot(snap, tmp_path / "s.json")
    back = dataio.load_snapshot(tmp_path / "s.json")
    assert back == snap
    assert back.iteration == 10 and back.config == sampler.config
    np.testing.assert_array_equal(back.factor.Z1, sampler.state.Z1)
    assert back.factor.Z1.dtype == sampler.state.Z1.dtype
    assert type(back.sticks) is type(sampler.sticks)


def test_resume_matches_uninterrupted(tmp_path, sampler):
    data = sampler.Y
    dataio.save_snapshot(dataio.sampler_snapshot(sampler), tmp_path / "s.json")
    _, t_full = sampler.run(8)
    resumed = dataio.resume_sampler(data, dataio.load_snapshot(tmp_path / "s.json"))
    _, t_res = resumed.run(8)
    assert t_full.loglik == t_res.loglik
    np.testing.assert_array_equal(resumed.state.V2, sampler.state.V2)


def test_best_snapshot_resumes_from_best(tmp_path, sampler):
    snap = dataio.sampler_snapshot(sampler, best=True)
    assert snap.iteration == sampler.best_iteration + 1
    np.testing.assert_array_equal(snap.factor.V1, sampler.best_state.V1)


def test_snapshot_truncated(tmp_path, sampler):
    text = dataio.snapshot_to_text(dataio.sampler_snapshot(sampler))
    p = _write(tmp_path, "s.json", text[: len(text) // 2])
    with pytest.raises(SnapshotError, match="corrupt"):
        dataio.load_snapshot(p)


def test_snapshot_tampered(tmp_path, sampler):
    doc = json.loads(dataio.snapshot_to_text(dataio.sampler_snapshot(sampler)))
    doc["payload"]["iteration"] += 1
    with pytest.raises(SnapshotError, match="checksum"):
        dataio.snapshot_from_text(json.dumps(doc))


def test_snapshot_version(tmp_path, sampler):
    doc = json.loads(dataio.snapshot_to_text(dataio.sampler_snapshot(sampler)))
    doc["version"] = 99
    with pytest.raises(SnapshotError, match="version"):
        dataio.snapshot_from_text(json.dumps(doc))


def test_atomic_write_leaves_no_temp(tmp_path):
    dataio.atomic_write_text(tmp_path / "a.txt", "x")
    dataio.atomic_write_text(tmp_path / "a.txt", "y")
    assert (tmp_path / "a.txt").read_text() == "y"
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]

import math
import struct

import numpy as np
import pytest

from dsvpr.errors import ConfigurationError, DataError, DimensionError, FormatError, ParameterError
from dsvpr.retrieval import (
    DbEntry,
    GroundTruth,
    build_db,
    decode_db,
    encode_db,
    load_db,
    persist_db,
    recall_at_n,
    search_topk,
)


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def random_db(rng, n, d, tag="d", positions=None, frames=None):
    vecs = rng.normal(size=(n, d))
    return build_db(
        DbEntry(f"{tag}{i:03d}", unit(v),
                None if positions is None else positions[i],
                None if frames is None else frames[i])
        for i, v in enumerate(vecs)
    )


# ------------------------------------------------------------------ build
def test_build_db_examples():
    with pytest.raises(DataError):
        build_db([])
    db = build_db(DbEntry(k, unit(v)) for k, v in [("c", [1, 0]), ("a", [0, 1]), ("b", [1, 1])])
    assert len(db) == 3 and db.ids == ["c", "a", "b"]
    with pytest.raises(DataError, match="norm"):
        build_db([DbEntry("x", np.array([0.9, 0.0]))])


def test_build_db_rejects_mixed_dims_and_duplicates():
    with pytest.raises(DataError, match="dim"):
        build_db([DbEntry("a", unit([1, 0])), DbEntry("b", unit([1, 0, 0]))])
    with pytest.raises(DataError, match="duplicate"):
        build_db([DbEntry("a", unit([1, 0])), DbEntry("a", unit([0, 1]))])


def test_db_is_read_only():
    db = build_db([DbEntry("a", unit([1, 0]))])
    with pytest.raises(ValueError):
        db.matrix[0, 0] = 0.0


# ------------------------------------------------------------------ DSFV
def test_dsfv_hand_layout():
    db = build_db([DbEntry("ab", np.array([1.0, 0.0]), (3.5, -2.0), 7), DbEntry("z", np.array([0.0, 1.0]))])
    expected = (
        b"DSFV" + bytes([1]) + struct.pack("<IQ", 2, 2)
        + struct.pack("<H", 2) + b"ab" + bytes([3]) + struct.pack("<ddq", 3.5, -2.0, 7) + struct.pack("<2f", 1, 0)
        + struct.pack("<H", 1) + b"z" + bytes([0]) + struct.pack("<2f", 0, 1)
    )
    assert encode_db(db) == expected


def test_dsfv_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    n = 25
    pos = [None if i % 3 == 0 else tuple(rng.uniform(0, 1e6, 2)) for i in range(n)]
    frames = [None if i % 4 == 1 else int(i * 10) for i in range(n)]
    entries = [DbEntry(f"é{i}", unit(rng.normal(size=16)), pos[i], frames[i]) for i in range(n)]
    db = build_db(entries)
    path = tmp_path / "db.dsfv"
    persist_db(db, path)
    back = load_db(path)
    assert back.ids == db.ids and back.positions == db.positions and back.frames == db.frames
    assert np.array_equal(back.matrix, db.matrix)
    persist_db(back, tmp_path / "again.dsfv")
    assert (tmp_path / "again.dsfv").read_bytes() == path.read_bytes()


def test_dsfv_truncation_names_offset():
    db = build_db([DbEntry("ab", np.array([1.0, 0.0]), (3.5, -2.0), 7)])
    blob = encode_db(db)
    for cut in (3, 10, 20, len(blob) - 1):
        with pytest.raises(FormatError) as exc:
            decode_db(blob[:cut])
        assert exc.value.offset is not None and exc.value.offset <= cut
        assert "offset" in str(exc.value)


def test_dsfv_bad_magic_version_flags_and_trailing():
    blob = encode_db(build_db([DbEntry("a", np.array([1.0, 0.0]))]))
    with pytest.raises(FormatError):
        decode_db(b"XXXX" + blob[4:])
    with pytest.raises(FormatError):
        decode_db(blob[:4] + bytes([2]) + blob[5:])
    flag_at = 4 + 1 + 4 + 8 + 2 + 1
    with pytest.raises(FormatError):
        decode_db(blob[:flag_at] + bytes([0x80]) + blob[flag_at + 1:])
    with pytest.raises(FormatError):
        decode_db(blob + b"\0")


# ---------------------------------------------------------------- search
def test_search_self_first_and_decoys():
    e = np.eye(4)
    db = build_db(DbEntry(f"x{i}", e[i]) for i in range(4))
    ranked = search_topk(db, e[2], 4)
    assert ranked[0][0] == "x2" and abs(ranked[0][1] - 1.0) < 1e-6
    assert all(abs(s) < 1e-12 for _, s in ranked[1:])
    assert [r for r, _ in ranked[1:]] == ["x0", "x1", "x3"]  # ties by id


def test_search_matches_brute_force_oracle():
    rng = np.random.default_rng(1)
    for trial in range(20):
        db = random_db(rng, 100, 8)
        q = unit(rng.normal(size=8))
        got = search_topk(db, q, 10)
        mat = db.matrix.astype(np.float64)
        sims = [(-float(np.dot(mat[i], q)), db.ids[i]) for i in range(len(db))]
        oracle = [rid for _, rid in sorted(sims)[:10]]
        assert [rid for rid, _ in got] == oracle


def test_search_clamps_k_and_validates():
    db = build_db([DbEntry("a", unit([1, 0])), DbEntry("b", unit([0, 1]))])
    assert len(search_topk(db, unit([1, 1]), 10)) == 2
    with pytest.raises(ParameterError):
        search_topk(db, unit([1, 1]), 0)
    with pytest.raises(DimensionError):
        search_topk(db, unit([1, 1, 1]), 1)


# ---------------------------------------------------------------- recall
def test_recall_perfect_matches():
    pts = [(100.0 * i, 0.0) for i in range(5)]
    e = np.eye(5)
    db = build_db(DbEntry(f"d{i}", e[i], pts[i]) for i in range(5))
    qs = build_db(DbEntry(f"q{i}", e[i], (pts[i][0] + 10, 0.0)) for i in range(5))
    assert recall_at_n(db, qs, GroundTruth("geo", 25), [1]).recalls == [1.0]


def test_recall_third_rank_construction():
    # query aligned best with two far decoys, then the true neighbour
    q = unit([1.0, 0.2, 0.1])
    db = build_db([
        DbEntry("decoy1", unit([1.0, 0.2, 0.09]), (1000.0, 0.0)),
        DbEntry("decoy2", unit([1.0, 0.25, 0.1]), (2000.0, 0.0)),
        DbEntry("true", unit([1.0, 0.5, 0.1]), (5.0, 0.0)),
        DbEntry("far", unit([0.0, 0.0, 1.0]), (3000.0, 0.0)),
    ])
    assert [r for r, _ in search_topk(db, q, 3)][2] == "true"
    qs = build_db([DbEntry("q", q, (0.0, 0.0))])
    rep = recall_at_n(db, qs, GroundTruth("geo", 25), [1, 5])
    assert rep[1] == 0.0 and rep[5] == 1.0


def _oracle_recall(db, qs, tol, n):
    """Hand enumeration: sort every database row per query in plain Python."""
    mat = db.matrix.astype(np.float64)
    hits = 0
    for qi in range(len(qs)):
        q = qs.matrix[qi].astype(np.float64)
        order = sorted(range(len(db)), key=lambda i: (-float(np.dot(mat[i], q)), db.ids[i]))[:n]
        qp = qs.positions[qi]
        hits += any(math.dist(db.positions[i], qp) <= tol for i in order)
    return hits / len(qs)


def test_recall_equals_enumerated_oracle_on_planted_queries():
    rng = np.random.default_rng(2)
    places = rng.uniform(0, 2000, size=(30, 2))
    base = rng.normal(size=(30, 16))
    db = build_db(DbEntry(f"d{i:02d}", unit(base[i]), tuple(places[i])) for i in range(30))
    # 20 queries: a noisy copy of a planted place, placed within 20 m of it
    planted = rng.integers(30, size=20)
    qs = build_db(
        DbEntry(f"q{j:02d}", unit(base[p] + 0.9 * rng.normal(size=16)), tuple(places[p] + rng.uniform(-14, 14, 2)))
        for j, p in enumerate(planted)
    )
    ns = [1, 2, 5, 10]
    rep = recall_at_n(db, qs, GroundTruth("geo", 25), ns)
    assert rep.recalls == [_oracle_recall(db, qs, 25, n) for n in ns]
    assert 0 < rep[1] < 1  # the planted noise makes the case non-trivial


def test_recall_non_decreasing_in_n():
    rng = np.random.default_rng(3)
    for _ in range(100):
        m, q = rng.integers(5, 30), rng.integers(1, 10)
        db = random_db(rng, m, 4, positions=[tuple(p) for p in rng.uniform(0, 200, (m, 2))])
        qs = random_db(rng, q, 4, "q", positions=[tuple(p) for p in rng.uniform(0, 200, (q, 2))])
        r = recall_at_n(db, qs, GroundTruth("geo", 25), [1, 2, 3, 5, 10, 20]).recalls
        assert all(a <= b for a, b in zip(r, r[1:]))


def test_frame_ground_truth():
    e = np.eye(6)
    db = build_db(DbEntry(f"d{i}", e[i], frame_index=i * 10) for i in range(6))
    qs = build_db(DbEntry(f"q{i}", e[i], frame_index=i * 10 + (2 if i < 3 else 3)) for i in range(6))
    assert recall_at_n(db, qs, GroundTruth.parse("frames:2"), [1]).recalls == [0.5]


def test_missing_metadata_is_configuration_error():
    rng = np.random.default_rng(4)
    db, qs = random_db(rng, 5, 3), random_db(rng, 2, 3, "q")
    with pytest.raises(ConfigurationError, match="positions"):
        recall_at_n(db, qs, GroundTruth("geo", 25))
    with pytest.raises(ConfigurationError, match="frame"):
        recall_at_n(db, qs, GroundTruth("frames", 2))


def test_ground_truth_parsing_and_report():
    assert GroundTruth.parse("geo:25") == GroundTruth("geo", 25.0)
    assert str(GroundTruth.parse("frames:2")) == "frames:2"
    for bad in ("geo", "gps:25", "geo:-1"):
        with pytest.raises(ConfigurationError):
            GroundTruth.parse(bad)
    e = np.eye(2)
    db = build_db([DbEntry("a", e[0], (0.0, 0.0)), DbEntry("b", e[1], (100.0, 0.0))])
    rep = recall_at_n(db, db, GroundTruth("geo", 25), [5, 1, 1])
    assert rep.ns == [1, 5]
    assert rep.as_dict()["recall_at"] == {"1": 1.0, "5": 1.0}
    assert rep.num_queries == rep.num_database == 2

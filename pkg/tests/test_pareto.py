import numpy as np
import pytest

from hlsdse.designspace import enumerate_space
from hlsdse.explore import OracleEvaluator
from hlsdse.pareto import (ParetoArchive, ParetoError, adrs, adrs_report, dominates,
                           objectives_from_metrics, read_front, reference_front,
                           write_front)


def brute_force_front(points):
    """Independent non-dominated filter: keep a point iff nothing dominates it."""
    keep = []
    for i, (key, obj) in enumerate(points):
        dominated = any(dominates(other, obj) for j, (_, other) in enumerate(points)
                        if j != i)
        if not dominated:
            keep.append((key, tuple(obj)))
    return set(keep)


# ---------------------------------------------------------------------------
# dominance
# ---------------------------------------------------------------------------

def test_dominates_strictly_better():
    assert dominates((1, 2), (2, 3))


def test_incomparable_points_do_not_dominate():
    assert not dominates((1, 3), (3, 1))
    assert not dominates((3, 1), (1, 3))


def test_equal_vectors_do_not_dominate():
    assert not dominates((2, 2), (2, 2))


def test_length_mismatch_rejected():
    with pytest.raises(ParetoError, match="mismatch"):
        dominates((1, 2), (1, 2, 3))


# ---------------------------------------------------------------------------
# archive
# ---------------------------------------------------------------------------

def test_insert_into_empty_accepts():
    archive = ParetoArchive()
    assert archive.insert("a", np.array([1.0, 2.0]), key="a")
    assert len(archive) == 1


def test_dominated_insert_rejected_archive_unchanged():
    archive = ParetoArchive()
    archive.insert("a", np.array([1.0, 1.0]), key="a")
    before = {(e.key, tuple(e.objectives)) for e in archive.entries}
    assert not archive.insert("b", np.array([2.0, 2.0]), key="b")
    assert {(e.key, tuple(e.objectives)) for e in archive.entries} == before


def test_duplicate_config_rejected():
    archive = ParetoArchive()
    archive.insert("a", np.array([1.0, 1.0]), key="a")
    assert not archive.insert("a", np.array([0.5, 0.5]), key="a")


def test_insert_evicts_dominated_members():
    archive = ParetoArchive()
    archive.insert("a", np.array([3.0, 3.0]), key="a")
    archive.insert("b", np.array([1.0, 4.0]), key="b")
    assert archive.insert("c", np.array([1.0, 1.0]), key="c")
    assert {e.key for e in archive.entries} == {"c"}


def test_500_random_inserts_equal_brute_force_filter(rng):
    archive = ParetoArchive()
    points = []
    for i in range(500):
        obj = rng.integers(0, 30, size=2).astype(float)
        key = f"cfg{i}"
        points.append((key, obj))
        archive.insert(key, obj, key=key)
    got = {(e.key, tuple(e.objectives)) for e in archive.entries}
    assert got == brute_force_front(points)


def test_archive_insert_order_insensitive_as_objective_set(rng):
    pts = [rng.integers(0, 12, size=2).astype(float) for _ in range(60)]
    orders = [range(60), reversed(range(60)), rng.permutation(60)]
    fronts = []
    for order in orders:
        archive = ParetoArchive()
        for i in order:
            archive.insert(f"k{i}", pts[i], key=f"k{i}")
        fronts.append({tuple(e.objectives) for e in archive.entries})
    assert fronts[0] == fronts[1] == fronts[2]


# ---------------------------------------------------------------------------
# reference front
# ---------------------------------------------------------------------------

def test_single_config_space_reference(flat_model, small_space):
    one = type(small_space)((small_space.directives[2],))  # tile only, 2 configs
    evaluator = OracleEvaluator(flat_model, one)
    front = reference_front(one, evaluator)
    assert 1 <= len(front) <= 2


def test_24_config_space_matches_hand_filter(flat_model, small_space):
    evaluator = OracleEvaluator(flat_model, small_space)
    front = reference_front(small_space, evaluator)
    points = []
    for config in enumerate_space(small_space):
        res = evaluator(config)
        if res.feasible:
            points.append((config.key(), res.objectives))
    expect_objectives = {obj for _, obj in brute_force_front(points)}
    assert {tuple(e.objectives) for e in front.entries} == expect_objectives
    # self-check: the front is mutually non-dominated
    objs = front.objectives_array()
    for i in range(len(objs)):
        for j in range(len(objs)):
            if i != j:
                assert not dominates(objs[i], objs[j])


def test_reference_front_respects_exhaustive_limit(flat_model, small_space):
    with pytest.raises(ParetoError, match="exhaustive limit"):
        reference_front(small_space, OracleEvaluator(flat_model, small_space),
                        exhaustive_limit=5)


def test_objectives_from_metrics(flat_model, small_space):
    from hlsdse.oracle import QorMetrics
    m = QorMetrics(latency_cycles=100, lut=300, dsp=8, ff=250, bram=16)
    caps = {"lut": 3000, "dsp": 32, "ff": 2500, "bram": 32}
    two = objectives_from_metrics(m, caps)
    assert two[0] == 100.0
    assert np.isclose(two[1], 16 / 32)  # bram is the utilization peak
    five = objectives_from_metrics(m, caps, mode="5d")
    assert np.array_equal(five, [100, 300, 8, 250, 16])


# ---------------------------------------------------------------------------
# ADRS
# ---------------------------------------------------------------------------

def test_adrs_of_front_with_itself_is_zero(rng):
    front = rng.random((6, 2)) + 0.1
    assert adrs(front, front) == 0.0


def test_adrs_superset_contains_reference_is_zero(rng):
    ref = rng.random((5, 2)) + 0.1
    approx = np.vstack([ref, rng.random((4, 2)) + 5.0])
    assert adrs(ref, approx) == 0.0


def test_adrs_hand_example_point_one():
    assert abs(adrs(np.array([[100.0, 10.0]]), np.array([[110.0, 10.0]])) - 0.1) <= 1e-12


def test_adrs_hand_example_point_five():
    ref = np.array([[100.0, 10.0], [50.0, 20.0]])
    approx = np.array([[100.0, 10.0]])
    assert abs(adrs(ref, approx) - 0.5) <= 1e-12


def test_adrs_zero_reference_coordinate_uses_absolute_difference():
    ref = np.array([[0.0, 10.0]])
    approx = np.array([[0.25, 10.0]])
    assert abs(adrs(ref, approx) - 0.25) <= 1e-12


def test_adrs_superset_monotonicity_200_random_pairs(rng):
    for _ in range(200):
        ref = rng.random((int(rng.integers(1, 6)), 2)) + 0.05
        omega = rng.random((int(rng.integers(1, 6)), 2)) + 0.05
        extra = rng.random((int(rng.integers(1, 4)), 2)) + 0.05
        bigger = np.vstack([omega, extra])
        assert adrs(ref, bigger) <= adrs(ref, omega) + 1e-15


def test_adrs_empty_sets_rejected():
    with pytest.raises(ParetoError, match="non-empty"):
        adrs(np.zeros((0, 2)), np.ones((1, 2)))


def test_adrs_report_fields(rng):
    ref = rng.random((3, 2)) + 0.1
    report = adrs_report(ref, ref)
    assert report["adrs"] == 0.0
    assert report["reference_size"] == 3
    assert report["distances"] == [0.0, 0.0, 0.0]


# ---------------------------------------------------------------------------
# front files
# ---------------------------------------------------------------------------

def test_front_file_roundtrip(tmp_path, rng):
    archive = ParetoArchive()
    for i in range(20):
        archive.insert(f"c{i}", rng.integers(0, 50, size=2).astype(float), key=f"c{i}")
    path = tmp_path / "front.csv"
    write_front(path, archive)
    loaded = read_front(path)
    assert {tuple(e.objectives) for e in loaded.entries} == \
        {tuple(e.objectives) for e in archive.entries}


def test_read_front_rejects_non_front_files(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ParetoError, match="front file"):
        read_front(path)

import numpy as np
import pytest

from hlsdse.dataset import (DatasetError, TargetScaler, gen_dataset, load_dataset,
                            save_dataset)
from hlsdse.oracle import evaluate, max_latency
from hlsdse.textembed import HashedTextProvider


def test_scaler_roundtrip_is_exact_on_in_range_integers(rng):
    scaler = TargetScaler(capacities={"lut": 5000, "dsp": 64, "ff": 4000, "bram": 64},
                          c_max=123456)
    for _ in range(200):
        raw = np.array([rng.integers(1, 123456), rng.integers(0, 5000),
                        rng.integers(0, 64), rng.integers(0, 4000),
                        rng.integers(0, 64)], dtype=np.float64)
        back = scaler.denormalize(scaler.normalize(raw))
        assert np.array_equal(back, raw)


def test_scaler_document_roundtrip():
    scaler = TargetScaler(capacities={"lut": 10, "dsp": 2, "ff": 8, "bram": 4}, c_max=99)
    assert TargetScaler.from_document(scaler.to_document()) == scaler


def test_gen_dataset_full_enumeration_on_small_space(flat_model, small_space):
    data = gen_dataset(flat_model, small_space, small_space.size, 0,
                       HashedTextProvider(d_text=32))
    keys = {s.config.key() for s in data.samples}
    assert len(keys) == small_space.size


def test_gen_dataset_same_seed_identical(flat_model, small_space):
    p = HashedTextProvider(d_text=32)
    a = gen_dataset(flat_model, small_space, 10, 42, p)
    b = gen_dataset(flat_model, small_space, 10, 42, p)
    assert [s.config.key() for s in a.samples] == [s.config.key() for s in b.samples]
    for x, y in zip(a.samples, b.samples):
        assert np.array_equal(x.targets, y.targets)
        assert np.array_equal(x.text_embedding.vector, y.text_embedding.vector)


def test_gen_dataset_rejects_oversized_request(flat_model, small_space):
    with pytest.raises(DatasetError, match="space of size"):
        gen_dataset(flat_model, small_space, small_space.size + 1, 0,
                    HashedTextProvider(d_text=32))


def test_targets_rederivable_from_config(flat_model, small_space):
    data = gen_dataset(flat_model, small_space, 12, 3, HashedTextProvider(d_text=32))
    for s in data.samples:
        metrics = evaluate(flat_model, small_space, s.config)
        assert np.allclose(s.targets, data.scaler.normalize(metrics.as_vector()),
                           atol=1e-15)


def test_c_max_is_identity_latency(flat_model, small_space):
    data = gen_dataset(flat_model, small_space, 4, 0, HashedTextProvider(d_text=32))
    assert data.scaler.c_max == max_latency(flat_model, small_space)


def test_dataset_save_load_roundtrip(tmp_path, flat_model, small_space):
    data = gen_dataset(flat_model, small_space, 8, 5, HashedTextProvider(d_text=32))
    save_dataset(data, tmp_path)
    loaded = load_dataset(tmp_path / "manifest.json")
    assert loaded.kernel_id == data.kernel_id
    assert loaded.scaler == data.scaler
    assert loaded.d_node == data.d_node
    assert len(loaded.samples) == len(data.samples)
    for a, b in zip(data.samples, loaded.samples):
        assert a.graph == b.graph
        assert np.array_equal(a.targets, b.targets)
        assert np.array_equal(a.text_embedding.vector, b.text_embedding.vector)
        assert np.array_equal(a.node_features, b.node_features)
        assert a.config == b.config

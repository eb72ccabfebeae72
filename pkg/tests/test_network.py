import io
import json
import zipfile

import numpy as np
import pytest

import zeroshot as zs
from zeroshot.errors import ConfigError, FormatError, NumericError
from zeroshot.network import (
    LayerSpec,
    Model,
    ModelConfig,
    forward,
    init_model,
    load_model,
    predict_semantic,
    reduce_visual,
    save_model,
)
from zeroshot.zslf import ClassVectorSet


def small_cv(rng, n, dim):
    return ClassVectorSet(dim, {f"c{i:03d}": rng.standard_normal(dim).astype(np.float32) for i in range(n)})


def small_config(**overrides):
    params = dict(
        n1=10,
        n2=6,
        reducer_widths=(8,),
        trunk_widths=(7,),
        sem_dim=5,
        semantic_activation="relu",
        reducer_dropout=0.0,
        trunk_dropout=0.0,
        reducer_batchnorm=True,
        seed=0,
    )
    params.update(overrides)
    return ModelConfig(**params)


class TestInit:
    def test_output_weights_shape_171_classes(self):
        rng = np.random.default_rng(0)
        cv = small_cv(rng, 171, 300)
        cfg = small_config(sem_dim=300)
        model = init_model(cv, cv.labels, cfg)
        assert model.output_weights.shape == (300, 171)
        for c, label in enumerate(model.label_order):
            assert np.array_equal(model.output_weights[:, c], cv[label])

    def test_single_class_column(self):
        rng = np.random.default_rng(1)
        cv = small_cv(rng, 1, 5)
        model = init_model(cv, cv.labels, small_config())
        assert model.output_weights.shape == (5, 1)
        assert np.array_equal(model.output_weights[:, 0], cv[cv.labels[0]])

    def test_init_deterministic_bitwise(self):
        rng = np.random.default_rng(2)
        cv = small_cv(rng, 4, 5)
        a = init_model(cv, cv.labels, small_config(seed=9))
        b = init_model(cv, cv.labels, small_config(seed=9))
        for (na, ta), (nb, tb) in zip(a.named_tensors(), b.named_tensors()):
            assert na == nb and ta.tobytes() == tb.tobytes()

    def test_missing_class_vector_rejected(self):
        rng = np.random.default_rng(3)
        cv = small_cv(rng, 3, 5)
        with pytest.raises(ValueError):
            init_model(cv, cv.labels + ["ghost"], small_config())

    def test_sem_dim_mismatch_rejected(self):
        rng = np.random.default_rng(4)
        cv = small_cv(rng, 3, 4)
        with pytest.raises(ConfigError):
            init_model(cv, cv.labels, small_config(sem_dim=5))

    def test_layer_spec_validation(self):
        with pytest.raises(ConfigError):
            LayerSpec(0, 3)
        with pytest.raises(ConfigError):
            LayerSpec(3, 3, activation="softmax")
        with pytest.raises(ConfigError):
            LayerSpec(3, 3, dropout_rate=1.0)
        with pytest.raises(ConfigError):
            ModelConfig(n1=4, n2=3, reducer_widths=(0,), trunk_widths=(), sem_dim=2)

    def test_layer_specs_chain(self):
        cfg = small_config()
        reducer, trunk = cfg.layer_specs()
        assert reducer[0].in_dim == cfg.n1
        assert trunk[0].in_dim == cfg.reduced_dim + cfg.n2
        assert trunk[-1].out_dim == cfg.sem_dim
        dims = [s.in_dim for s in reducer + trunk]
        outs = [s.out_dim for s in reducer + trunk]
        assert dims[1:] == outs[:-1][:len(dims) - 1] or len(reducer) <= 1


class TestReduceVisual:
    def test_default_reduction_4096_to_1024(self):
        rng = np.random.default_rng(5)
        cv = small_cv(rng, 2, 300)
        model = init_model(cv, cv.labels, ModelConfig(seed=0))
        out = reduce_visual(model, rng.standard_normal(4096).astype(np.float32))
        assert out.shape == (1024,)

    def test_zero_input_zero_output(self):
        rng = np.random.default_rng(6)
        cv = small_cv(rng, 3, 5)
        model = init_model(cv, cv.labels, small_config())
        out = reduce_visual(model, np.zeros(10, np.float32), training=False)
        assert np.array_equal(out, np.zeros(8, np.float32))

    def test_inference_deterministic(self):
        rng = np.random.default_rng(7)
        cv = small_cv(rng, 3, 5)
        model = init_model(cv, cv.labels, small_config(reducer_dropout=0.4))
        x = rng.standard_normal(10).astype(np.float32)
        a = reduce_visual(model, x, training=False)
        b = reduce_visual(model, x, training=False)
        assert a.tobytes() == b.tobytes()

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(8)
        cv = small_cv(rng, 3, 5)
        model = init_model(cv, cv.labels, small_config())
        with pytest.raises(ValueError):
            reduce_visual(model, np.zeros(9, np.float32))


class TestForward:
    def test_probs_sum_to_one(self):
        rng = np.random.default_rng(9)
        cv = small_cv(rng, 6, 5)
        model = init_model(cv, cv.labels, small_config())
        X = rng.standard_normal((64, 10)).astype(np.float32)
        T = rng.standard_normal((64, 6)).astype(np.float32)
        probs, _ = forward(model, X, T)
        assert probs.shape == (64, 6)
        assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-6
        assert (probs >= 0).all()

    def test_orthonormal_class_vectors_identify_class(self):
        # Force the semantic activation to equal class vector c of an
        # orthonormal set; softmax over the frozen output must pick c.
        dim = 4
        cv = ClassVectorSet(dim, {f"c{i}": np.eye(dim, dtype=np.float32)[i] for i in range(dim)})
        model = init_model(cv, cv.labels, small_config(sem_dim=dim))
        for c in range(dim):
            probs, _ = model.class_probs_from_semantic(cv[f"c{c}"][None, :])
            assert int(np.argmax(probs[0])) == c

    def test_identical_class_vectors_give_uniform_probs(self):
        vec = np.array([0.3, -1.2, 0.8, 0.1, 2.0], np.float32)
        cv = ClassVectorSet(5, {"first": vec, "second": vec.copy()})
        model = init_model(cv, ["first", "second"], small_config())
        rng = np.random.default_rng(10)
        probs, _ = forward(
            model,
            rng.standard_normal(10).astype(np.float32),
            rng.standard_normal(6).astype(np.float32),
        )
        assert probs.tolist() == [0.5, 0.5]

    def test_relu_activations_nonnegative(self):
        rng = np.random.default_rng(11)
        cv = small_cv(rng, 4, 5)
        model = init_model(cv, cv.labels, small_config())
        X = rng.standard_normal((16, 10)).astype(np.float32)
        T = rng.standard_normal((16, 6)).astype(np.float32)
        _, trace = forward(model, X, T)
        for layer, rec in zip(model.layers, trace.layer_recs):
            if layer.spec.activation == "relu":
                assert (rec["out"] >= 0).all()

    def test_non_finite_input_rejected(self):
        rng = np.random.default_rng(12)
        cv = small_cv(rng, 3, 5)
        model = init_model(cv, cv.labels, small_config())
        bad = np.full(10, np.nan, np.float32)
        with pytest.raises(NumericError):
            forward(model, bad, np.zeros(6, np.float32))

    def test_batch_size_mismatch_rejected(self):
        rng = np.random.default_rng(13)
        cv = small_cv(rng, 3, 5)
        model = init_model(cv, cv.labels, small_config())
        with pytest.raises(ValueError):
            forward(model, np.zeros((2, 10), np.float32), np.zeros((3, 6), np.float32))

    def test_training_mode_requires_rng_for_dropout(self):
        rng = np.random.default_rng(14)
        cv = small_cv(rng, 3, 5)
        model = init_model(cv, cv.labels, small_config(reducer_dropout=0.5))
        x = np.zeros((4, 10), np.float32)
        t = np.zeros((4, 6), np.float32)
        with pytest.raises(ValueError):
            forward(model, x, t, training=True)
        forward(model, x, t, training=True, rng=np.random.default_rng(0))


class TestPredictSemantic:
    def test_output_dim_is_semantic_dim(self):
        rng = np.random.default_rng(15)
        cv = small_cv(rng, 4, 300)
        model = init_model(cv, cv.labels, small_config(sem_dim=300))
        sem = predict_semantic(
            model,
            rng.standard_normal(10).astype(np.float32),
            rng.standard_normal(6).astype(np.float32),
        )
        assert sem.shape == (300,)

    def test_consistency_with_forward_probs(self):
        rng = np.random.default_rng(16)
        cv = small_cv(rng, 5, 5)
        model = init_model(cv, cv.labels, small_config())
        x = rng.standard_normal(10).astype(np.float32)
        t = rng.standard_normal(6).astype(np.float32)
        sem = predict_semantic(model, x, t)
        probs, _ = forward(model, x, t)
        recomposed = model.class_probs_from_semantic(sem[None, :])[0][0]
        assert np.abs(recomposed - probs).max() < 1e-6


class TestCheckpoint:
    def build(self, seed=0):
        rng = np.random.default_rng(seed)
        cv = small_cv(rng, 4, 5)
        return init_model(cv, cv.labels, small_config(seed=seed, reducer_dropout=0.2))

    def test_round_trip_bitwise(self, tmp_path):
        model = self.build()
        path = tmp_path / "model.zip"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.label_order == model.label_order
        assert loaded.config == model.config
        for (na, ta), (nb, tb) in zip(model.named_tensors(), loaded.named_tensors()):
            assert na == nb and ta.tobytes() == tb.tobytes()

    def test_archive_bytes_deterministic(self, tmp_path):
        model = self.build()
        save_model(model, tmp_path / "a.zip")
        save_model(model, tmp_path / "b.zip")
        assert (tmp_path / "a.zip").read_bytes() == (tmp_path / "b.zip").read_bytes()

    def test_not_an_archive(self, tmp_path):
        path = tmp_path / "junk.zip"
        path.write_bytes(b"not a zip")
        with pytest.raises(FormatError):
            load_model(path)

    def test_tampered_shape_rejected(self, tmp_path):
        model = self.build()
        path = tmp_path / "model.zip"
        save_model(model, path)
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("config.json"))
            payload = {n: zf.read(n) for n in zf.namelist() if n != "config.json"}
        meta["tensors"]["reducer0.W"] = [3, 3]
        tampered = tmp_path / "tampered.zip"
        with zipfile.ZipFile(tampered, "w") as zf:
            zf.writestr("config.json", json.dumps(meta))
            for name, blob in payload.items():
                zf.writestr(name, blob)
        with pytest.raises(ConfigError):
            load_model(tampered)

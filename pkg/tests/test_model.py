import json

import numpy as np
import pytest

from ssimm.image_blocks import InvalidParameterError
from ssimm.llise_embed import constraint_residuals
from ssimm.model import (
    ExperimentConfig,
    decode_array,
    embed_images,
    encode_array,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    train,
)

FAST = dict(q=16, p=2, k=4, recon_max_iter=300, embed_max_iter=300)


@pytest.fixture(scope="module")
def data(small_dataset):
    return [it.image for it in small_dataset], [it.label for it in small_dataset]


@pytest.fixture(scope="module", params=["llise", "kllise", "lle", "klle"])
def trained(request, data):
    images, labels = data
    cfg = ExperimentConfig(method=request.param, **FAST)
    return train(images, cfg, labels=labels)


def test_config_defaults_and_validation():
    assert (ExperimentConfig().recon_rho, ExperimentConfig().recon_eta) == (0.1, 0.1)
    k = ExperimentConfig(method="kllise")
    assert (k.recon_rho, k.recon_eta, k.embed_rho, k.embed_eta) == (0.01, 0.1, 0.01, 0.01)
    assert ExperimentConfig(recon_rho=0.5).recon_rho == 0.5
    with pytest.raises(InvalidParameterError):
        ExperimentConfig(method="pca")
    with pytest.raises(InvalidParameterError):
        ExperimentConfig(q=4, p=5)
    with pytest.raises(ValueError):
        ExperimentConfig(kernel="cosine")


def test_k_must_be_below_n(data):
    images, labels = data
    with pytest.raises(InvalidParameterError):
        train(images[:4], ExperimentConfig(**{**FAST, "k": 4}))


def test_shapes_and_constraints(trained):
    b, n, p = trained.embeddings.shape
    assert n == 19 and p == 2
    assert trained.neighbors.shape == (b, n, 4)
    assert not np.any(trained.neighbors == np.arange(n)[None, :, None])
    if trained.config.blockwise:
        assert b == 64
        for Y in trained.embeddings:
            assert max(constraint_residuals(Y)) < 1e-9
        np.testing.assert_allclose(np.linalg.norm(trained.weights, axis=2), 1.0, atol=1e-12)
    else:
        assert b == 1
        np.testing.assert_allclose(trained.weights.sum(axis=2), 1.0, atol=1e-10)


def test_archive_roundtrip(tmp_path, trained):
    path = tmp_path / "m.json"
    save_model(trained, path)
    back = load_model(path)
    assert back.config == trained.config and back.names == trained.names
    for name in ("features", "neighbors", "weights", "embeddings", "labels", "recon_converged"):
        np.testing.assert_array_equal(getattr(back, name), getattr(trained, name))
    save_model(back, tmp_path / "m2.json")
    assert path.read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_archive_rejects_inconsistent(trained):
    doc = model_to_dict(trained)
    doc["config"]["p"] = 3
    with pytest.raises(InvalidParameterError):
        model_from_dict(doc)
    with pytest.raises(InvalidParameterError):
        model_from_dict({"format": "something-else"})


def test_array_codec_is_little_endian_float64():
    a = np.arange(6, dtype=float).reshape(2, 3) / 7
    enc = encode_array(a)
    assert enc["dtype"] == "<f8" and enc["shape"] == [2, 3]
    np.testing.assert_array_equal(decode_array(enc), a)
    b = decode_array(encode_array(np.array([True, False])))
    assert b.dtype == bool and b.tolist() == [True, False]


def test_self_query_reproduces_training_rows(trained, data):
    images, _ = data
    res = embed_images(trained, images)
    assert res.embeddings.shape == (19,) + trained.embeddings.shape[::2]
    Y = np.swapaxes(trained.embeddings, 0, 1)
    d = np.linalg.norm(res.embeddings - Y, axis=2)
    F = trained.features
    for j in range(19):
        for i in range(F.shape[0]):
            # blocks whose first zero-distance training match is themselves
            same = np.flatnonzero(np.all(F[i] == F[i, j], axis=1))
            if same[0] == j:
                assert d[j, i] < 1e-9, (j, i)


def test_oos_size_mismatch(trained, small_dataset):
    from ssimm.image_blocks import GrayImage

    with pytest.raises(InvalidParameterError):
        embed_images(trained, [GrayImage.from_array(np.zeros((8, 8)))])


def test_training_is_deterministic(data):
    images, labels = data
    cfg = ExperimentConfig(**FAST)
    a = json.dumps(model_to_dict(train(images, cfg, labels=labels)), sort_keys=True)
    b = json.dumps(model_to_dict(train(images, cfg, labels=labels)), sort_keys=True)
    assert a == b

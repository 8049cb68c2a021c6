import json

import numpy as np
import pytest

from seqveritas import model_zoo, textprep
from seqveritas.model_zoo import (BadMagic, ModelConfig, ShapeMismatchOnLoad,
                                  VersionMismatch, VocabMissing, build, load,
                                  preset_config)
from seqveritas.numerics import Prng


def _vocab(n_tokens):
    return textprep.Vocabulary([f"w{i:05d}" for i in range(n_tokens)])


def test_baseline_param_count_v20000():
    vocab = _vocab(19_998)  # V = 20,000 with PAD and OOV
    model = build("baseline", vocab)
    expected = (20_000 * 100        # embedding
                + 150_600           # LSTM 4H(d+H+1)
                + 150 * 64 + 64     # dense0
                + 64 * 16 + 16      # dense1
                + 16 * 1 + 1)       # output
    assert expected == 2_161_321
    assert model.num_params() == expected


def test_optimized_has_three_batchnorm_stages():
    cfg = preset_config("optimized", vocab_size=50)
    assert sum(1 for s in cfg.dense_stack if s.batchnorm) == 3
    assert [s.width for s in cfg.dense_stack] == [128, 64, 16, 1]
    assert cfg.lr == 5e-4


def test_final_stack_entry_is_sigmoid_unregularized():
    for preset in model_zoo.PRESETS:
        cfg = preset_config(preset, vocab_size=50)
        last = cfg.dense_stack[-1]
        assert (last.width, last.activation) == (1, "sigmoid")
        assert last.regularizers == () and not last.batchnorm


def test_preset_expansion_pure():
    a = preset_config("regularized", vocab_size=100, seed=5)
    b = preset_config("regularized", vocab_size=100, seed=5)
    assert a == b


def test_unknown_preset():
    with pytest.raises(ValueError) as exc:
        preset_config("huge", vocab_size=10)
    for name in model_zoo.PRESETS:
        assert name in str(exc.value)


def test_build_requires_vocab():
    with pytest.raises(VocabMissing):
        build("baseline", None)


def test_same_seed_identical_init():
    vocab = _vocab(30)
    m1 = build("baseline", vocab, maxlen=8, seed=9)
    m2 = build("baseline", vocab, maxlen=8, seed=9)
    for a, b in zip(m1.params, m2.params):
        assert np.array_equal(a.value, b.value)


def test_forget_gate_bias_initialized_to_one():
    model = build("baseline", _vocab(10), maxlen=4, seed=0)
    h = model.config.lstm_units
    assert np.all(model.lstm_b.value[h:2 * h] == 1.0)
    assert np.all(model.lstm_b.value[:h] == 0.0)


def test_pad_embedding_row_zero():
    model = build("baseline", _vocab(10), maxlen=4, seed=0)
    assert np.array_equal(model.emb.value[0], np.zeros(100))


def test_config_round_trip_dict():
    cfg = preset_config("optimized", vocab_size=52, maxlen=6, seed=3)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


def _tiny_model(preset="baseline", seed=1):
    vocab = textprep.Vocabulary([f"t{i}" for i in range(20)])
    return build(preset, vocab, maxlen=6, seed=seed, embed_dim=8,
                 lstm_units=8)


def _random_inputs(model, n, seed=0):
    rng = Prng(seed)
    v = len(model.vocab)
    return np.array([[rng.randbelow(v) for _ in range(model.config.maxlen)]
                     for _ in range(n)])


@pytest.mark.parametrize("preset", model_zoo.PRESETS)
def test_checkpoint_round_trip_bitwise(tmp_path, preset):
    model = _tiny_model(preset)
    path = str(tmp_path / "m.svchk")
    model.save(path)
    loaded = load(path)
    x = _random_inputs(model, 100)
    before = model.predict_proba(x)
    after = loaded.predict_proba(x)
    assert np.array_equal(before, after)  # deltas exactly zero


def test_checkpoint_preserves_preset(tmp_path):
    model = _tiny_model("regularized")
    path = str(tmp_path / "m.svchk")
    model.save(path)
    assert load(path).config.preset == "regularized"


def test_checkpoint_truncated(tmp_path):
    model = _tiny_model()
    path = str(tmp_path / "m.svchk")
    model.save(path)
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[:len(blob) // 2])
    with pytest.raises(BadMagic):
        load(path)


def test_checkpoint_bad_magic(tmp_path):
    path = str(tmp_path / "m.svchk")
    with open(path, "w") as f:
        json.dump({"magic": "other", "version": 1}, f)
    with pytest.raises(BadMagic):
        load(path)


def test_checkpoint_version_mismatch(tmp_path):
    model = _tiny_model()
    path = str(tmp_path / "m.svchk")
    model.save(path)
    doc = json.load(open(path))
    doc["version"] = 99
    json.dump(doc, open(path, "w"))
    with pytest.raises(VersionMismatch):
        load(path)


def test_checkpoint_shape_mismatch_on_load(tmp_path):
    model = _tiny_model()
    path = str(tmp_path / "m.svchk")
    model.save(path)
    doc = json.load(open(path))
    doc["params"][1]["shape"][0] += 1
    json.dump(doc, open(path, "w"))
    with pytest.raises(ShapeMismatchOnLoad):
        load(path)


def test_predict_untrained_zeroed_output_layer_is_half():
    model = _tiny_model()
    out = model.dense[-1]
    out["w"].value[...] = 0.0
    out["b"].value[...] = 0.0
    p, label = model.predict("some words here")
    assert p == 0.5
    assert label == 1  # p >= 0.5 counts as fake by the threshold rule


def test_predict_deterministic_and_case_invariant():
    model = _tiny_model()
    p1, _ = model.predict("The Quick Brown Fox")
    p2, _ = model.predict("the quick brown fox   ")
    p3, _ = model.predict("The Quick Brown Fox")
    assert p1 == p2 == p3


def test_predict_empty_text_defined():
    model = _tiny_model()
    p, label = model.predict("")
    assert 0.0 <= p <= 1.0
    assert label in (0, 1)


def test_predict_trained_toy_sentence(toy_encoded):
    from seqveritas.optim import TrainConfig, fit
    x, y, vocab, maxlen = toy_encoded
    model = build("baseline", vocab, maxlen=maxlen, seed=42)
    fit(model, x, y, x, y, TrainConfig(epochs=30, batch_size=8, seed=42,
                                       patience=100))
    p_fake, label_fake = model.predict("zorblat market crumpet harbor zorblat")
    p_true, label_true = model.predict("quintar city verity garden quintar")
    assert label_fake == 1
    assert label_true == 0
    assert p_fake > p_true

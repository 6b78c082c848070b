import numpy as np
import pytest

from atscal import kvfile
from atscal.calibrators import apply, fit
from atscal.dataset import load_logits, make_rng, predictions
from atscal.errors import InvalidInputError, ParseError
from atscal.mathkit import log_normalized_entropy, softplus
from atscal.metrics import ece, nll
from atscal.synthgen import (
    EntropyLinear,
    Global,
    PerClass,
    SynthConfig,
    SynthOracle,
    distortion_temperature,
    entropy_linear_temperature,
    generate,
    oracle_temperature,
    sample_calibrated,
    write_task,
)


def test_generate_is_deterministic():
    cfg = SynthConfig(k=4, n_val=300, n_test=200, distortion=EntropyLinear(0.8, 0.5), seed=9)
    (a, oa), (b, ob) = generate(cfg), generate(cfg)
    assert np.array_equal(a.validation.logits, b.validation.logits)
    assert np.array_equal(a.test.labels, b.test.labels)
    assert oa == ob
    c, _ = generate(SynthConfig(k=4, n_val=300, n_test=200, distortion=EntropyLinear(0.8, 0.5), seed=10))
    assert not np.array_equal(a.validation.logits, c.validation.logits)


def test_calibrated_data_has_small_ece():
    split, _ = generate(SynthConfig(k=10, n_val=1, n_test=50000, distortion=Global(1.0), seed=1))
    assert ece(split.test, 15) < 0.02


def test_global_distortion_recovered_by_ts():
    split, _ = generate(SynthConfig(k=10, n_val=10000, n_test=1, distortion=Global(2.5), seed=2))
    assert 2.375 <= fit("ts", split.validation).t0 <= 2.625


def test_entropy_linear_hts_beats_ts():
    cfg = SynthConfig(k=10, n_val=10000, n_test=10000, dirichlet_alpha=0.1,
                      distortion=EntropyLinear(0.8, 0.5), seed=3)
    split, _ = generate(cfg)
    hts, ts = fit("hts", split.validation), fit("ts", split.validation)
    assert nll(apply(hts, split.test)) < nll(apply(ts, split.test))


def test_labels_follow_calibrated_posterior():
    n, k, alpha = 60000, 6, 1.0
    zstar, labels = sample_calibrated(make_rng(4), n, k, alpha)
    q = np.exp(zstar)
    top = q.max(axis=1)
    correct = (q.argmax(axis=1) == labels).astype(float)
    se = np.sqrt(np.mean(top * (1 - top)) / n)
    assert abs(correct.mean() - top.mean()) < 3 * se
    np.testing.assert_allclose(q.sum(axis=1), 1.0, rtol=1e-12)


@pytest.mark.parametrize("dist", [Global(0.4), PerClass((1.5, 3.0, 0.7)), EntropyLinear(0.8, 0.5),
                                  EntropyLinear(-0.5, 1.0)])
def test_distortion_preserves_argmax(dist):
    cfg = SynthConfig(k=3, n_val=2000, n_test=10, dirichlet_alpha=0.3, distortion=dist, seed=5)
    split, _ = generate(cfg)
    zstar, _ = sample_calibrated(make_rng(5), 2010, 3, 0.3)
    np.testing.assert_array_equal(predictions(split.validation.logits), predictions(zstar[:2000]))


def test_oracle_temperature_inverts_distortion():
    for dist in (Global(2.5), PerClass((1.5, 3.0, 2.0, 0.5)), EntropyLinear(0.8, 0.5)):
        cfg = SynthConfig(k=4, n_val=500, n_test=10, dirichlet_alpha=0.5, distortion=dist, seed=6)
        split, oracle = generate(cfg)
        zstar, _ = sample_calibrated(make_rng(6), 510, 4, 0.5)
        t_used = distortion_temperature(zstar[:500], dist)
        np.testing.assert_allclose(oracle_temperature(oracle, split.validation.logits), t_used, rtol=1e-9)


def test_entropy_linear_fixed_point():
    zstar, _ = sample_calibrated(make_rng(7), 1000, 10, 0.2)
    t = entropy_linear_temperature(zstar, 0.8, 0.5)
    emitted = zstar * t[:, None]
    np.testing.assert_allclose(t, softplus(0.8 * log_normalized_entropy(emitted) + 0.5), rtol=1e-9)


def test_config_validation():
    with pytest.raises(InvalidInputError):
        SynthConfig(k=1)
    with pytest.raises(InvalidInputError):
        SynthConfig(n_val=0)
    with pytest.raises(InvalidInputError):
        SynthConfig(dirichlet_alpha=0.0)
    with pytest.raises(InvalidInputError):
        SynthConfig(distortion=Global(0.0))
    with pytest.raises(InvalidInputError):
        SynthConfig(k=3, distortion=PerClass((1.0, 2.0)))
    with pytest.raises(InvalidInputError):
        SynthConfig(distortion=EntropyLinear(float("nan"), 0.0))


def test_config_items_round_trip():
    for dist in (Global(2.5), PerClass((1.5, 3.0, 1.5)), EntropyLinear(0.8, 0.5)):
        cfg = SynthConfig(k=3, n_val=7, n_test=8, dirichlet_alpha=0.3, distortion=dist, seed=12)
        text = kvfile.dumps(cfg.as_items())
        assert SynthConfig.from_items(kvfile.loads(text)) == cfg
        oracle = SynthOracle(cfg)
        assert SynthOracle.from_items(kvfile.loads(kvfile.dumps(oracle.as_items()))) == oracle


def test_per_class_list_repeats_cyclically():
    cfg = SynthConfig.from_items({"k": "4", "distortion": "per_class", "t_star": "1.5,3.0"})
    assert cfg.distortion.t_star == (1.5, 3.0, 1.5, 3.0)
    with pytest.raises(ParseError):
        SynthConfig.from_items({"distortion": "sideways"})


def test_write_task_files(tmp_path):
    cfg = SynthConfig(k=3, n_val=20, n_test=30, distortion=Global(2.0), seed=1)
    split, oracle = generate(cfg)
    out = write_task(split, oracle, tmp_path / "task")
    val = load_logits(out / "val.csv")
    assert np.array_equal(val.logits, split.validation.logits)
    assert load_logits(out / "test.csv").n == 30
    assert SynthOracle.from_items(kvfile.read(out / "oracle.kv")) == oracle

"""Tests for the autoencoder, noise schedule, score network and conditional synthesis."""
import numpy as np
import pytest

from models.dataset import Dataset
from models.errors import DimensionError, SchemaMismatchError, SimplexError, StateError
from models.experiment import GeneratorConfig
from models.generator import AutoencoderSpec, ScoreNetSpec
from services.codsa_service import CodsaService
from services.generator_service import GeneratorService
from conftest import make_dataset


def _rank3(n=500, seed=0):
    rng = np.random.default_rng(seed)
    latent = rng.standard_normal((n, 3))
    mixing = rng.standard_normal((3, 5))
    return Dataset(features=latent @ mixing, region=np.ones(n, dtype=np.int64), n_regions=1)


# Schedule and forward process

def test_schedule_endpoints():
    sched = GeneratorService.make_schedule(1000, 1e-4, 0.02)
    assert sched.alpha_bars[0] == 1.0
    assert sched.alpha_bars[1] == pytest.approx(0.9999)
    assert sched.betas[-1] == pytest.approx(0.02)
    assert np.all(np.diff(sched.alpha_bars) < 0)
    single = GeneratorService.make_schedule(1, 1e-4, 0.02)
    assert single.betas.tolist() == [1e-4]


def test_schedule_validation():
    with pytest.raises(ValueError):
        GeneratorService.make_schedule(0)
    with pytest.raises(ValueError):
        GeneratorService.make_schedule(10, 0.1, 0.01)


def test_forward_marginal_variance(rng):
    sched = GeneratorService.make_schedule(1000)
    n = 100000
    u0 = 2.0 * rng.standard_normal((n, 1))
    for t in (1, 100, 500, 1000):
        u_t = GeneratorService.forward_diffuse(sched, u0, t, rng.standard_normal((n, 1)))
        expected = sched.alpha_bars[t] * 4.0 + 1.0 - sched.alpha_bars[t]
        assert u_t.var() == pytest.approx(expected, rel=0.02)


def test_forward_diffuse_rejects_bad_step(rng):
    sched = GeneratorService.make_schedule(10)
    with pytest.raises(ValueError):
        GeneratorService.forward_diffuse(sched, np.zeros((2, 1)), 0, np.zeros((2, 1)))


# Reverse sampling with exact noise predictors

def test_sampler_recovers_standard_gaussian(rng):
    sched = GeneratorService.make_schedule(1000)

    def exact(u, t):
        return np.sqrt(1.0 - sched.alpha_bars[t]) * u

    samples = GeneratorService.ancestral_sample(sched, exact, 10000, 1, rng)
    assert abs(samples.mean()) < 0.05
    assert abs(samples.var() - 1.0) < 0.1


def test_sampler_separates_two_conditionals(rng):
    sched = GeneratorService.make_schedule(1000)
    centres = {1: -5.0, 2: 5.0}
    for k, mu in centres.items():
        def exact(u, t, mu=mu):
            abar = sched.alpha_bars[t]
            return np.sqrt(1.0 - abar) * (u - np.sqrt(abar) * mu)

        samples = GeneratorService.ancestral_sample(sched, exact, 2000, 1, rng)
        assert np.mean(np.sign(samples[:, 0]) == np.sign(mu)) >= 0.99


def test_sampler_zero_count(rng):
    sched = GeneratorService.make_schedule(5)
    assert GeneratorService.ancestral_sample(sched, lambda u, t: u, 0, 3, rng).shape == (0, 3)


# Autoencoder

def test_linear_autoencoder_reconstructs_rank3_data():
    ae = GeneratorService.train_autoencoder(_rank3(), AutoencoderSpec((), 3), epochs=600, lr=1e-2, seed=0)
    assert ae.recon_error < 0.01
    assert ae.input_dim == 5


def test_default_autoencoder_has_three_hidden_layers():
    assert AutoencoderSpec().hidden_sizes == (256, 256, 256)
    assert GeneratorConfig().ae_hidden == (256, 256, 256)
    assert GeneratorConfig.for_task('regression').ae_hidden == (128,)
    ae = GeneratorService.train_autoencoder(_rank3(20), AutoencoderSpec(), epochs=0, lr=1e-3, seed=0)
    assert ae.encoder.spec.layer_sizes == (5, 256, 256, 256, 3)
    assert ae.decoder.spec.layer_sizes == (3, 256, 256, 256, 5)


def test_autoencoder_shapes_and_limits():
    data = _rank3(50)
    ae = GeneratorService.train_autoencoder(data, AutoencoderSpec((4,), 2), epochs=1, lr=1e-3, seed=0)
    u = GeneratorService.encode(ae, data.features)
    assert u.shape == (50, 2)
    assert GeneratorService.decode(ae, u).shape == (50, 5)
    with pytest.raises(DimensionError):
        GeneratorService.decode(ae, np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        GeneratorService.train_autoencoder(data, AutoencoderSpec((4,), 6), epochs=1, lr=1e-3, seed=0)


def test_autoencoder_includes_continuous_target(reg_data):
    ae = GeneratorService.train_autoencoder(reg_data, AutoencoderSpec((4,), 2), epochs=1, lr=1e-3, seed=0)
    assert ae.with_target and ae.input_dim == reg_data.d + 1


def test_pretrain_transfer_marks_and_checks_schema(reg_data):
    spec = AutoencoderSpec((4,), 2)
    ae = GeneratorService.pretrain_transfer(reg_data, spec, epochs=1, lr=1e-3, seed=0, target=reg_data)
    assert ae.pretrained
    with pytest.raises(SchemaMismatchError):
        GeneratorService.pretrain_transfer(reg_data, spec, 1, 1e-3, 0, target=make_dataset((5, 5), d=3))


# Score network and generator

def test_score_network_layout(rng):
    sched = GeneratorService.make_schedule(20)
    latents = rng.standard_normal((40, 2))
    regions = np.repeat([1, 2], 20)
    model = GeneratorService.train_score_network(latents, regions, sched, ScoreNetSpec(3, 16, 4), epochs=2,
                                                 lr=1e-3, seed=0)
    assert model.trained and np.isfinite(model.final_loss)
    assert model.score_net.spec.layer_sizes == (2 + 2 + 4, 16, 16, 2)
    assert GeneratorService.sample_latents(model, 2, 7, seed=1).shape == (7, 2)
    with pytest.raises(ValueError):
        GeneratorService.sample_latents(model, 3, 1, seed=1)


def test_sampling_untrained_model_is_state_error():
    with pytest.raises(StateError):
        GeneratorService.sample_latents(None, 1, 5, seed=0)


def test_allocate_counts():
    assert GeneratorService.allocate_counts((0.6, 0.4), 10).tolist() == [6, 4]
    assert GeneratorService.allocate_counts((0.5, 0.5), 0).tolist() == [0, 0]
    assert GeneratorService.allocate_counts((1 / 3, 1 / 3, 1 / 3), 10).sum() == 10
    with pytest.raises(SimplexError):
        GeneratorService.allocate_counts((0.7, 0.4), 10)


def test_synthesize_counts_labels_and_provenance(class_data, tiny_gen_cfg):
    generator = GeneratorService.train_generator(class_data, tiny_gen_cfg, seed=0)
    assert generator.class_labels == [0.0, 1.0]
    synthetic = GeneratorService.synthesize(generator, (0.6, 0.4), 10, seed=3)
    assert np.bincount(synthetic.region, minlength=3)[1:].tolist() == [6, 4]
    assert synthetic.synthetic.all()
    np.testing.assert_array_equal(synthetic.target, synthetic.region - 1)
    assert GeneratorService.synthesize(generator, (0.6, 0.4), 0, seed=3).n == 0


def test_synthesize_is_deterministic_and_prefix_stable(class_data, tiny_gen_cfg):
    a = GeneratorService.train_generator(class_data, tiny_gen_cfg, seed=5)
    b = GeneratorService.train_generator(class_data, tiny_gen_cfg, seed=5)
    small = GeneratorService.synthesize(a, (1.0, 0.0), 4, seed=1)
    large = GeneratorService.synthesize(b, (1.0, 0.0), 9, seed=1)
    np.testing.assert_array_equal(small.features, large.features[:4])


def test_transfer_autoencoder_stays_frozen(reg_data, tiny_gen_cfg):
    ae = GeneratorService.pretrain_transfer(reg_data, AutoencoderSpec((8,), 2), 2, 1e-2, seed=0)
    before = ae.fingerprint()
    generator = GeneratorService.train_generator(reg_data, tiny_gen_cfg, seed=0, transfer=ae)
    assert generator.transfer_tag == 'pretrained-autoencoder'
    assert ae.fingerprint() == before
    assert generator.autoencoder.fingerprint() == before
    with pytest.raises(SchemaMismatchError):
        GeneratorService.train_generator(make_dataset((10, 10), d=3, kind='continuous'), tiny_gen_cfg, 0,
                                         transfer=ae)


def test_generator_checkpoint_round_trip(tmp_path, reg_data, tiny_gen_cfg):
    generator = GeneratorService.train_generator(reg_data, tiny_gen_cfg, seed=2)
    path = str(tmp_path / 'gen.json')
    GeneratorService.save_generator(generator, path)
    loaded = GeneratorService.load_generator(path)
    first = GeneratorService.synthesize(generator, (0.5, 0.5), 6, seed=4)
    second = GeneratorService.synthesize(loaded, (0.5, 0.5), 6, seed=4)
    assert first.equals(second)
    ae_path = str(tmp_path / 'ae.json')
    GeneratorService.save_autoencoder(generator.autoencoder, ae_path)
    assert GeneratorService.load_autoencoder(ae_path).fingerprint() == generator.autoencoder.fingerprint()


def _fit_sampler(latents, regions, epochs=300):
    sched = GeneratorService.make_schedule(200, 1e-4, 0.05)
    return GeneratorService.train_score_network(latents, regions, sched, ScoreNetSpec(3, 64, 16), epochs=epochs,
                                                lr=2e-3, seed=0)


@pytest.mark.slow
def test_trained_score_network_separates_regions():
    rng = np.random.default_rng(0)
    latents = np.concatenate([rng.normal(-5.0, 0.5, (1000, 1)), rng.normal(5.0, 0.5, (1000, 1))])
    model = _fit_sampler(latents, np.repeat([1, 2], 1000), epochs=400)
    low = GeneratorService.sample_latents(model, 1, 1000, seed=1)
    high = GeneratorService.sample_latents(model, 2, 1000, seed=2)
    assert np.mean(np.abs(low + 5.0) < np.abs(low - 5.0)) >= 0.99
    assert np.mean(np.abs(high - 5.0) < np.abs(high + 5.0)) >= 0.99
    assert low.mean() == pytest.approx(-5.0, abs=0.1)
    assert high.mean() == pytest.approx(5.0, abs=0.1)


@pytest.mark.slow
def test_trained_sampler_recovers_standard_gaussian():
    rng = np.random.default_rng(1)
    model = _fit_sampler(rng.standard_normal((4000, 1)), np.ones(4000, dtype=np.int64))
    samples = GeneratorService.sample_latents(model, 1, 10000, seed=3)
    assert abs(samples.mean()) < 0.05
    assert abs(samples.var() - 1.0) < 0.1


@pytest.mark.slow
def test_trained_sampler_sliced_w1_on_isotropic_gaussian():
    rng = np.random.default_rng(2)
    model = _fit_sampler(rng.standard_normal((4000, 2)), np.ones(4000, dtype=np.int64))
    synthetic = GeneratorService.sample_latents(model, 1, 10000, seed=4)
    real = rng.standard_normal((10000, 2))
    assert CodsaService.sliced_w1(real, synthetic, 64, np.random.default_rng(5)) < 0.15

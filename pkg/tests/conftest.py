import numpy as np
import pytest

from comfort_index.features import label_windows
from comfort_index.pipeline import PipelineConfig, train_pipeline
from comfort_index.synth import SynthConfig, spike_latent, synth_generate


@pytest.fixture(scope="session")
def small_dataset():
    """Three subjects x two trials; S01T01 carries three uncomfort spikes."""
    cfg = SynthConfig(seed=3, n_subjects=3, trials_per_subject=2,
                      latent_overrides={"S01T01": spike_latent()})
    records, truth = synth_generate(cfg)
    samples = [s for r in records for s in label_windows(r)]
    return records, truth, samples


@pytest.fixture(scope="session")
def small_pipeline(small_dataset):
    records, _, samples = small_dataset
    train = [s for s in samples if s.trial_id != "S01T01"]
    return train_pipeline(train, PipelineConfig(models=("rf", "nn"), seed=0, n_estimators=40, epochs=40))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

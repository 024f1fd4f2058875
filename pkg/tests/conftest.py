import numpy as np
import pytest

from advrep import SynthConfig, TrainConfig, run_training_with_snapshots, synth_generate


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


@pytest.fixture(scope="session")
def tiny_dataset():
    """Small domain-confounded set shared by training/attribution tests."""
    return synth_generate(
        SynthConfig(
            n_per_domain=40, n_domains=3, n_features=16,
            domain_subset_size=3, label_subset_size=4,
            domain_effect=2.5, label_effect=1.0, noise_sd=1.0, seed=11,
        )
    )


@pytest.fixture(scope="session")
def tiny_trained(tiny_dataset):
    """A briefly trained model, enough for label signal to emerge."""
    cfg = TrainConfig(epochs=30, batch_size=16, seed=5)
    record = run_training_with_snapshots(tiny_dataset, cfg, [1, 30])
    return tiny_dataset, cfg, record

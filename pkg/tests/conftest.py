import numpy as np
import pytest

from dualfuse.config import ExperimentConfig


def tiny_config(**overrides):
    """Small but complete configuration for fast structural tests."""
    raw = {
        "seed": 0,
        "data": {
            "n_samples": 80,
            "n_classes": 3,
            "noise_rate": 0.5,
            "missing_rate": 0.25,
            "fluctuation_rate": 0.5,
            "run_len": 5,
            "seed": 0,
            "modalities": [
                {"name": "physio", "window": 16, "channels": 2, "encoder": "conv",
                 "noise_kind": "additive-gaussian"},
                {"name": "visual", "window": 8, "channels": 6, "encoder": "mlp",
                 "noise_kind": "occlusion-zeroing"},
                {"name": "inertial", "window": 16, "channels": 3, "encoder": "conv",
                 "noise_kind": "baseline-wander"},
            ],
        },
        "model": {"dim": 8, "layers": 2, "heads": 1, "tokens_per_modality": 1,
                  "history": 3},
        "optim": {"lr": 1e-3, "batch_size": 16, "epochs": 2, "mask_prob": 0.3},
        "train_frac": 0.7,
    }
    for key, val in overrides.items():
        if isinstance(val, dict) and key in raw:
            raw[key].update(val)
        else:
            raw[key] = val
    return ExperimentConfig.from_dict(raw)


@pytest.fixture
def rng():
    return np.random.default_rng(0)

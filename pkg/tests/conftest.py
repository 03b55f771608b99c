import numpy as np
import pytest

from mvdrift.types import ArchitectureSpec, TrainConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_arch():
    """Small networks so tape gradients and short trainings stay fast."""

    def make(variant: str, dim: int = 2, **kwargs) -> ArchitectureSpec:
        fields = dict(
            variant=variant,
            dim=dim,
            hidden_width=6,
            f_layers=1,
            phi_layers=1,
            activation="tanh",
            width=3,
            flow_layers=2,
            flow_hidden_layers=1,
            flow_hidden_width=5,
        )
        fields.update(kwargs)
        return ArchitectureSpec(**fields)

    return make


@pytest.fixture
def quick_train():
    def make(**kwargs) -> TrainConfig:
        fields = dict(epochs=2, batch_size=4, lr=1e-2, n_bridges=2, cc_samples=2, fp_steps=3, fp_paths=2, log_every=0)
        fields.update(kwargs)
        return TrainConfig(**fields)

    return make

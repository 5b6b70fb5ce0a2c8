import numpy as np
import pytest

from motionprop.engine.optim import OptimizerConfig
from motionprop.guidance import SamplingConfig
from motionprop.model import ArchConfig
from motionprop.training import DataConfig, SyntheticSpec, TrainConfig

TINY_ARCH = ArchConfig(
    encoder_channels=(8, 12),
    encoder_stride=2,
    encoder_out_channels=12,
    motion_channels=8,
    propagation_strides=(1, 2),
    num_bins=9,
    bound=8.0,
    fusion_channels=12,
)


def tiny_train_config(out_dir, total_iterations=10, **overrides) -> TrainConfig:
    base = dict(
        arch=TINY_ARCH,
        optimizer=OptimizerConfig(total_iterations=total_iterations),
        sampling=SamplingConfig(9, 16, border_margin=2),
        data=DataConfig(synthetic=SyntheticSpec(corpus_size=30, image_size=40, seed=3)),
        batch_size=2,
        short_side=40,
        crop=32,
        checkpoint_every=0,
        log_every=1,
        out_dir=str(out_dir),
    )
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance criterion verdicts after capture ends."""
    try:
        from test_acceptance import CRITERION_LINES
    except ImportError:
        return
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)

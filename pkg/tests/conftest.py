import os

# pin BLAS threading before numpy loads so timings and results are stable
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np
import pytest

from npt import TrainConfig, make_dataset, train
from npt.trainer import evaluate

DESK_DATASET_SEED = 7
DESK_TRAIN_SEED = 0


@pytest.fixture(scope="session")
def small_body():
    from npt import make_body
    return make_body(rings=3, segments=6)


@pytest.fixture(scope="session")
def small_dataset():
    return make_dataset(2, 4, seed=11, eval_identities=2, eval_pairs_per_split=3,
                        rings=3, segments=6)


@pytest.fixture(scope="session")
def desk_dataset():
    return make_dataset(8, 50, seed=DESK_DATASET_SEED, rings=6, segments=8)


@pytest.fixture(scope="session")
def desk_config():
    return TrainConfig(seed=DESK_TRAIN_SEED)


@pytest.fixture(scope="session")
def trained_desk_model(desk_dataset, desk_config):
    """The full-variant desk training run, shared by the slow acceptance tests."""
    import time
    t0 = time.perf_counter()
    params, log, _ = train(desk_dataset, desk_config)
    seconds = time.perf_counter() - t0
    report = evaluate(params, desk_config.model_config(), desk_dataset.eval_pairs,
                      dtype=desk_config.dtype)
    return {"params": params, "log": log, "report": report, "seconds": seconds}

import numpy as np
import pytest

from hgclust.config import parse_config_text
from hgclust.pipeline import run_training
from hgclust.synthetic import SyntheticSpec, generate_synthetic

TINY_CONFIG = """
alpha = 1
beta = 0.1
k = 3
margin = 1
lr = 5e-3
epochs = 16
warmup_epochs = 8
seed = 3
layers = 2
heads = 2
hidden = 16
ffn_hidden = 16
head_hidden = 16
d_structural = 16
walk_length = 10
walks_per_node = 4
window = 4
negatives = 4
sg_epochs = 2
text_dim = 16
text_mode = fallback
"""


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    """Small planted-subtype dataset shared across integration tests."""
    path = tmp_path_factory.mktemp("tiny_data")
    spec = SyntheticSpec(n_subtypes=3, concepts_per_subtype=10,
                         shared_concepts=0, n_visits=200,
                         codes_per_visit_min=3, codes_per_visit_max=6,
                         label_rule=(0.9, 0.4, 0.05), noise_rate=0.1, seed=7)
    generate_synthetic(spec, path)
    return path


@pytest.fixture(scope="session")
def tiny_run(tiny_data, tmp_path_factory):
    """A completed training run over the tiny dataset."""
    rundir = tmp_path_factory.mktemp("tiny_run")
    settings = parse_config_text(TINY_CONFIG)
    summary = run_training(tiny_data, settings, rundir)
    return {"rundir": rundir, "data": tiny_data, "summary": summary,
            "config_text": TINY_CONFIG}


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))

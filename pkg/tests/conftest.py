import pytest
import torch
from hypothesis import settings

settings.register_profile("ci", deadline=None, max_examples=25)
settings.load_profile("ci")


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)

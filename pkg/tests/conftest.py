import numpy as np
import pytest
import torch

from ifdsed.config import CorpusConfig, FeatureConfig, IfdConfig, ModelConfig, RunConfig, TrainConfig
from ifdsed.corpus import generate_corpus

TINY_MODEL = ModelConfig(channels=(3, 4, 5), freq_pool=(2, 2, 1), domain_dim=4)

_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@torch.no_grad()
def central_difference(f, x: torch.Tensor, eps: float = 1e-4) -> torch.Tensor:
    """Entry-wise central-difference gradient of a scalar function of ``x``."""
    grad = torch.zeros_like(x)
    flat = x.detach().clone().reshape(-1)
    for k in range(flat.numel()):
        orig = flat[k].item()
        flat[k] = orig + eps
        up = float(f(flat.reshape(x.shape)))
        flat[k] = orig - eps
        down = float(f(flat.reshape(x.shape)))
        flat[k] = orig
        grad.reshape(-1)[k] = (up - down) / (2 * eps)
    return grad


def relative_error(a, b) -> float:
    a = torch.as_tensor(a, dtype=torch.float64).reshape(-1)
    b = torch.as_tensor(b, dtype=torch.float64).reshape(-1)
    scale = max(a.norm().item(), b.norm().item(), 1e-12)
    return (a - b).norm().item() / scale


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion for the summary."""

    def record(name: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE[name] = (passed, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


def tiny_config(**train) -> RunConfig:
    """Small everything: 2 s clips, 16 mel bands, narrow encoder."""
    defaults = dict(batch_size=4, epochs=2, seed=0)
    defaults.update(train)
    return RunConfig(
        corpus=CorpusConfig(clips_per_domain=12, real_test_clips=6, synthetic_test_clips=4, duration_s=2.0, seed=3),
        features=FeatureConfig(n_mels=16),
        model=ModelConfig(channels=(4, 6, 8), freq_pool=(2, 2, 2), domain_dim=8),
        ifd=IfdConfig(warmup_epochs=0),
        train=TrainConfig(**defaults),
    )


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    generate_corpus(tiny_config().corpus, out)
    return out / "manifest.jsonl"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

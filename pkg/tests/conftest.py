from __future__ import annotations

import numpy as np
import pytest
import torch

from ransomgraph.graph import build_series
from ransomgraph.ingest import fit_tool_profiles, normalize_stream
from ransomgraph.nn.model import AlertGraphModel, ModelConfig
from ransomgraph.simulate import run_template
from ransomgraph.templates import builtin_templates

# narrow model so forward/backward passes stay fast in unit tests
SMALL_MODEL = ModelConfig(hidden_dim=8, transformer_heads=2, transformer_ff_dim=16, conv_channels=(4, 4),
                          embedding_dim=16, classifier_widths=(24, 16, 8, 1))


@pytest.fixture(scope="session")
def templates():
    return builtin_templates()


def simulated_series(template_id: str, seed: int, stride: int = 1, fp_rate: float = 0.1):
    camp = run_template(builtin_templates()[template_id], seed, fp_rate=fp_rate)
    profiles = fit_tool_profiles(camp.alerts)
    alerts = normalize_stream(camp.alerts, profiles)
    return build_series(alerts, camp.is_ransomware, camp.template_id, camp.campaign_id, stride=stride)


@pytest.fixture(scope="session")
def small_corpus():
    """Snapshots of two ransomware and two other campaigns, strided."""
    series = [simulated_series(t, 3, stride=12) for t in ("rw_small", "rw_rapid", "botnet_relay", "cryptominer")]
    return series


@pytest.fixture
def small_model():
    return AlertGraphModel(SMALL_MODEL, seed=0)


def random_graph(rng: np.random.Generator, n: int, m: int):
    """Graph-like object with random features and m distinct non-loop edges."""
    from ransomgraph.augment import AugmentedGraph

    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    idx = rng.choice(len(pairs), size=min(m, len(pairs)), replace=False)
    edges = np.array([pairs[i] for i in sorted(idx)], dtype=np.int64).reshape(-1, 2)
    return AugmentedGraph("g", n - 1, bool(rng.integers(2)), "c", rng.random((n, 4)), edges, np.arange(n))


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)
    yield


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

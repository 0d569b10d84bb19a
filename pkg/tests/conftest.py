"""Session-wide fixtures: one synthetic dataset plus its replay fixtures."""

from types import SimpleNamespace

import pytest

import synth
from searchpipe.fixtures import FixtureMode, FixtureStore
from searchpipe.model import PipelineConfig
from searchpipe.webio import WebClient


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    dataset_dir = root / "dataset"
    records = synth.build_dataset(dataset_dir)
    fixture_dir = root / "fixtures"
    config = PipelineConfig()
    synth.build_fixtures(fixture_dir, records, config)
    return SimpleNamespace(
        root=root,
        dataset_dir=dataset_dir,
        fixture_dir=fixture_dir,
        records=records,
        by_id={r.id: r for r in records},
        config=config,
    )


@pytest.fixture
def replay_client(corpus):
    return WebClient(corpus.config, mode=FixtureMode.REPLAY,
                     store=FixtureStore(corpus.fixture_dir))

from __future__ import annotations

import pytest

from skillfence import synth
from skillfence.bundle import load_bundle
from skillfence.oracle import RuleOracle


@pytest.fixture
def rule_oracle():
    return RuleOracle()


@pytest.fixture
def deep_work_bundle(tmp_path):
    return load_bundle(synth.materialize(synth.deep_work_files(), tmp_path / "deep-work"))


@pytest.fixture
def repo_assistant_bundle(tmp_path):
    return load_bundle(
        synth.materialize(synth.repo_assistant_files(), tmp_path / "repo-assistant")
    )


@pytest.fixture
def benign_bundle(tmp_path):
    return load_bundle(synth.materialize(synth.benign_files(), tmp_path / "benign"))


@pytest.fixture
def mixed_script_bundle(tmp_path):
    return load_bundle(
        synth.materialize(synth.mixed_script_files(), tmp_path / "dataset-stats")
    )

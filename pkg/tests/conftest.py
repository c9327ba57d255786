"""Shared fixtures: the default seeded synthetic benchmark, built once."""

import pytest

from odakit.data import Domain, SynthConfig, generate_synthetic


@pytest.fixture(scope="session")
def seed7():
    config = SynthConfig()
    dataset, bank = generate_synthetic(config)
    return config, dataset, bank


@pytest.fixture(scope="session")
def seed7_split(seed7):
    _, dataset, bank = seed7
    return dataset.subset(Domain.SOURCE), dataset.subset(Domain.TARGET), bank

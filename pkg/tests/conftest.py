"""Shared fixtures: tiny deterministic worlds that train in seconds."""

import dataclasses

import numpy as np
import pytest

from snnplace.ensemble import EnsembleModel
from snnplace.expert import ExpertConfig, ExpertModel
from snnplace.imaging import EncodingConfig, PatchNormConfig
from snnplace.network import SimulationParams


def tiny_sim(**overrides) -> SimulationParams:
    """Simulation constants scaled for 8x8 inputs (weight sums scale with K_P)."""
    params = dataclasses.replace(SimulationParams.defaults(), weight_norm_target=20.0)
    return dataclasses.replace(params, **overrides) if overrides else params


def tiny_encoding(**overrides) -> EncodingConfig:
    """Encoder config with re-presentation disabled, as unit tests require."""
    return EncodingConfig(min_output_spikes=0, **overrides)


def tiny_expert_cfg(**overrides) -> ExpertConfig:
    base = dict(
        n_inputs=64, n_excitatory=8, places_per_expert=2,
        epochs=4, record_last_epochs=2, seed=0,
    )
    base.update(overrides)
    return ExpertConfig(**base)


def tiny_textures(n_places: int, seed: int = 0, size: int = 8) -> np.ndarray:
    """Unit-intensity random textures usable directly as encoder input."""
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=(n_places, size, size))


def handmade_ensemble(
    counts_per_expert,
    assignments_per_expert,
    totals_per_expert=None,
    places_per_expert: int = 25,
    place_count: int | None = None,
    theta: float | None = None,
) -> EnsembleModel:
    """A fully synthetic ensemble whose experts never simulate anything.

    Only the matching-side fields matter: assignments, reference totals,
    and hyperactive flags.  Weights are zeros of a minimal shape.
    """
    experts = []
    for i, assignments in enumerate(assignments_per_expert):
        n = len(assignments)
        totals = (
            np.zeros(n, dtype=np.int64)
            if totals_per_expert is None
            else np.asarray(totals_per_expert[i], dtype=np.int64)
        )
        experts.append(ExpertModel(
            weights=np.zeros((4, n), dtype=np.float32),
            theta=np.zeros(n),
            assignments=np.asarray(assignments, dtype=np.int64),
            global_start=i * places_per_expert,
            n_places=places_per_expert,
            reference_totals=totals,
        ))
    model = EnsembleModel(
        experts=experts,
        place_count=place_count or places_per_expert * len(experts),
        sim=SimulationParams.defaults(),
        encoding=tiny_encoding(),
        patch=PatchNormConfig(),
        image_size=(2, 2),
        global_seed=0,
        regularized=True,
    )
    if theta is not None:
        from snnplace.ensemble import apply_threshold

        apply_threshold(model, theta)
    else:
        for expert, counts in zip(model.experts, counts_per_expert):
            expert.hyperactive = np.zeros(len(counts), dtype=bool)
    return model


@pytest.fixture(scope="session")
def two_pattern_expert():
    """One expert trained on two orthogonal binary patterns (shared, slow-ish)."""
    from snnplace.expert import RegionData, train_expert

    rng = np.random.default_rng(7)
    a = np.zeros((8, 8))
    b = np.zeros((8, 8))
    a[:4] = rng.uniform(size=(4, 8)) < 0.5
    b[4:] = rng.uniform(size=(4, 8)) < 0.5
    images = np.stack([a, b])[None]
    region = RegionData(images=images, image_ids=np.array([[0, 1]]), global_start=0)
    cfg = tiny_expert_cfg(n_excitatory=10, epochs=30, record_last_epochs=10, seed=3)
    model, table = train_expert(region, cfg, tiny_sim(), tiny_encoding())
    return model, table, images

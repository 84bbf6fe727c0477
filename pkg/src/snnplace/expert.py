"""Training and querying of one compact region expert.

An expert sees only the places of its own contiguous region.  Training
presents every reference image of the region for a fixed number of epochs
with plasticity on, records per-neuron spike counts over the trailing
epochs, and then freezes the weights and adaptive thresholds.  Each neuron
is afterwards assigned to the place it responded to most; neurons that
never fired stay unassigned and are excluded from matching.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .imaging import (
    STREAM_QUERY,
    STREAM_TRAINING,
    STREAM_WEIGHT_INIT,
    EncodingConfig,
    SpikeTrain,
    derive_seed,
)
from .network import (
    ExpertNetwork,
    SimulationParams,
    SynapseMatrix,
    init_weights,
    normalize_columns,
)

UNASSIGNED = -1


@dataclass(frozen=True)
class ExpertConfig:
    """Architecture and schedule of one expert."""

    n_inputs: int = 784
    n_excitatory: int = 400
    places_per_expert: int = 25
    epochs: int = 60
    record_last_epochs: int = 10
    seed: int = 0

    def validate(self) -> None:
        if self.n_inputs < 1 or self.n_excitatory < 1:
            raise ConfigError("layer sizes must be >= 1")
        if self.n_excitatory < self.places_per_expert:
            raise ConfigError(
                "n_excitatory must be >= places_per_expert "
                f"({self.n_excitatory} < {self.places_per_expert})"
            )
        if not 1 <= self.record_last_epochs <= self.epochs:
            raise ConfigError("need epochs >= record_last_epochs >= 1")


@dataclass
class RegionData:
    """Reference images of one region, ready for the encoder.

    ``images`` has shape (n_traverses, n_places, H, W) with intensities in
    [0, 1] (already resized, patch-normalized, and unit-rescaled);
    ``image_ids`` are globally unique per (traverse, place) and seed the
    encoder so that results do not depend on scheduling.
    """

    images: np.ndarray
    image_ids: np.ndarray
    global_start: int = 0

    @property
    def n_places(self) -> int:
        return self.images.shape[1]

    @property
    def n_traverses(self) -> int:
        return self.images.shape[0]


@dataclass
class ExpertModel:
    """One trained, frozen region expert."""

    weights: np.ndarray            # (n_inputs, n_excitatory) float32, frozen
    theta: np.ndarray              # adaptive-threshold snapshot, mV
    assignments: np.ndarray        # local place id per neuron, UNASSIGNED if silent
    global_start: int              # first global place id of the region
    n_places: int                  # places in the region (L)
    reference_totals: np.ndarray = field(default=None)  # filled by regularization
    hyperactive: np.ndarray = field(default=None)       # flags at the current threshold

    def __post_init__(self):
        if self.reference_totals is None:
            self.reference_totals = np.zeros(self.weights.shape[1], dtype=np.int64)
        if self.hyperactive is None:
            self.hyperactive = np.zeros(self.weights.shape[1], dtype=bool)

    @property
    def n_excitatory(self) -> int:
        return self.weights.shape[1]

    @property
    def n_inputs(self) -> int:
        return self.weights.shape[0]

    def place_range(self) -> tuple[int, int]:
        return self.global_start, self.global_start + self.n_places

    def build_network(self, sim: SimulationParams, encoding: EncodingConfig) -> ExpertNetwork:
        """Instantiate a canonical inference network from the frozen arrays."""
        syn = SynapseMatrix(self.weights.astype(np.float64))
        return ExpertNetwork(syn, sim, encoding, theta=self.theta)


def train_expert(
    region: RegionData,
    cfg: ExpertConfig,
    sim: SimulationParams,
    encoding: EncodingConfig,
) -> tuple[ExpertModel, np.ndarray]:
    """Train one expert on its region; return the model and the spike table.

    Every epoch presents the region's places in order, alternating the
    traverses of each place, with plasticity on throughout.  The returned
    table S[e, l] sums neuron e's spike counts on place l over the trailing
    ``record_last_epochs`` epochs (recording piggybacks on training).
    """
    cfg.validate()
    if region.n_places == 0 or region.images.shape[0] == 0:
        raise ConfigError("expert region has no reference images")
    if region.images.shape[2] * region.images.shape[3] != cfg.n_inputs:
        raise ConfigError(
            f"image size {region.images.shape[2]}x{region.images.shape[3]} "
            f"does not match n_inputs={cfg.n_inputs}"
        )

    weights = init_weights(
        cfg.n_inputs, cfg.n_excitatory,
        derive_seed(cfg.seed, STREAM_WEIGHT_INIT),
        sim.weight_init_max,
    )
    net = ExpertNetwork(SynapseMatrix(weights), sim, encoding)
    spike_counts = np.zeros((cfg.n_excitatory, region.n_places), dtype=np.int64)
    record_from = cfg.epochs - cfg.record_last_epochs

    for epoch in range(cfg.epochs):
        for place in range(region.n_places):
            for traverse in range(region.n_traverses):
                counts = net.present_with_retry(
                    region.images[traverse, place],
                    (cfg.seed, STREAM_TRAINING, epoch, int(region.image_ids[traverse, place])),
                    learn=True,
                )
                if sim.weight_norm_enabled:
                    normalize_columns(net.syn.w, sim.weight_norm_target, sim.stdp.w_max)
                if epoch >= record_from:
                    spike_counts[:, place] += counts

    model = ExpertModel(
        weights=net.syn.w.astype(np.float32),
        theta=net.exc.theta.copy(),
        assignments=assign_neurons(spike_counts),
        global_start=region.global_start,
        n_places=region.n_places,
    )
    return model, spike_counts


def assign_neurons(spike_counts: np.ndarray) -> np.ndarray:
    """Label each neuron with the place it fired for most.

    Ties break toward the lowest place index; neurons whose row is all
    zero carry no evidence and become UNASSIGNED.
    """
    spike_counts = np.asarray(spike_counts)
    assignments = np.argmax(spike_counts, axis=1).astype(np.int64)
    assignments[spike_counts.sum(axis=1) == 0] = UNASSIGNED
    return assignments


def expert_respond(
    model: ExpertModel,
    query: SpikeTrain,
    sim: SimulationParams,
    encoding: EncodingConfig,
) -> np.ndarray:
    """Per-neuron spike counts of a frozen expert for one query train.

    Runs from the canonical rest state with plasticity and threshold
    adaptation frozen, so the result depends only on (model, query).
    """
    net = model.build_network(sim, encoding)
    return net.present(query, learn=False, run_rest=False)


def query_seed(global_seed: int, query_id: int) -> int:
    """Encoder seed for query image ``query_id`` (shared by all experts)."""
    return derive_seed(global_seed, STREAM_QUERY, query_id)

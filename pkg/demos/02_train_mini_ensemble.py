"""Train a miniature two-expert ensemble and watch it recognize places.

Builds eight synthetic places, trains two experts of four places each,
computes reference totals, and matches noisy queries back to their
places. About a minute of compute.
"""

from snnplace import (
    EncodingConfig,
    ExpertConfig,
    PatchNormConfig,
    SimulationParams,
    detect_hyperactive,
    match_query,
    partition_reference,
    train_ensemble,
)
from snnplace.synthetic import corrupt_queries, make_textures, preprocess_stack

N_PLACES = 8
PLACES_PER_EXPERT = 4

raw = make_textures(N_PLACES, (28, 28), seed=3)
reference = preprocess_stack(raw)[None]          # one reference traverse
queries = preprocess_stack(corrupt_queries(raw, seed=4))

partition = partition_reference(N_PLACES, PLACES_PER_EXPERT)
print(f"partition: {partition.n_regions} regions -> {partition.ranges}")

cfg = ExpertConfig(
    n_inputs=784, n_excitatory=40, places_per_expert=PLACES_PER_EXPERT,
    epochs=15, record_last_epochs=5,
)
model = train_ensemble(
    reference, partition, cfg,
    SimulationParams.defaults(), EncodingConfig(), PatchNormConfig(),
    global_seed=1, workers=2,
)
for i, (expert, seconds) in enumerate(zip(model.experts, model.train_seconds)):
    assigned = int((expert.assignments >= 0).sum())
    print(f"expert {i}: trained in {seconds:.1f}s, "
          f"{assigned}/{expert.n_excitatory} neurons assigned")

# One inference pass over the whole reference set fills the totals that
# hyperactivity detection thresholds; no query data is needed for it.
detect_hyperactive(model, reference, theta=None, workers=2)

correct = 0
for place in range(N_PLACES):
    result = match_query(model, queries[place], query_id=place)
    hit = result.top == place
    correct += hit
    print(f"query {place}: matched place {result.top:2d} "
          f"(score {result.scores[0]:3d}) {'ok' if hit else 'MISS'}")
print(f"precision at 100% recall: {correct / N_PLACES:.2f}")

"""
Reading pairwise importance out of the attention weights
========================================================

Turn token attention and quarter attention into a symmetric token-pair
matrix, per patient and averaged over predicted cases.
"""

# %%
# Train on a cohort with one planted pair, C001 with C002.
import numpy as np

from savehr.cohort import (
    CohortSpec,
    GeneratorConfig,
    build_vocab,
    enroll,
    extract_all,
    generate_population,
    split_cohort,
    target_codes,
)
from savehr.interpret import patient_importance, population_heatmap, quarter_attention_summary
from savehr.model import ModelConfig, train
from savehr.training import TrainHyper

gen = GeneratorConfig(pair_carrier_rate=0.3)
spec = CohortSpec(target_codes(0))
enrolled, _ = enroll(generate_population(1, 2000, 50, [(1, 2, 3.0)], config=gen), spec)
tr, va, te = split_cohort(enrolled, 1, (0.7, 0.15, 0.15))
vocab = build_vocab(tr, spec)
tr, va, te = (extract_all(x, spec, vocab) for x in (tr, va, te))
model, _ = train(tr, va, ModelConfig(e=8, d_a=16, r=8, d_h=16, d_att=16, seed=1), vocab,
                 TrainHyper(lr=3e-3, epochs=60, patience=10, seed=1))

# %%
# One patient: the matrix is symmetric and its entries add up to one.
imp = patient_importance(model, te[0])
print(te[0].patient_id, "risk", round(imp.risk, 3), "total mass", imp.matrix.sum().round(12))
print(imp.top_pairs(3))

# %%
# Averaged over predicted cases, the planted pair should rise to the top.
cases = [t for t, p in zip(te, model.predict_proba(te)) if p >= 0.5]
heat = population_heatmap(model, cases, top_k=15)
for a, b, w in heat.top_pairs(5):
    print(f"{a} x {b}: {w:.4f}")

# %%
# Quarter weights, and diagnosis counts per quarter by predicted label.
print(quarter_attention_summary(model, te).to_text())

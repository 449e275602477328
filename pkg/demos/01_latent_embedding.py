"""Train the autoencoder on upstream cells and look at its latent space.

Walks the first half of the pipeline at desk scale: synthesize a
three-population lineage, fit preprocessing on the progenitor train
split, train the autoencoder by reconstruction MSE, and project every
population's embedding to 2-d for plotting.

Run:  python demos/01_latent_embedding.py
"""

import numpy as np

from hemalearn.data import ExpressionPreprocess, SyntheticConfig, generate_synthetic_lineage, split_indices
from hemalearn.embedding import AutoencoderSpec, TrainConfig, reconstruction_mse, train_autoencoder
from hemalearn.metrics import pca_project

config = SyntheticConfig(
    genes=400,
    factor_count=10,
    progenitor_count=4000,
    monocyte_count=800,
    lymphocyte_count=300,
    shared_signal_strength=1.0,
    seed=0,
)
progenitor, monocyte, lymphocyte = generate_synthetic_lineage(config)
print(f"populations: {progenitor.X.shape}, {monocyte.X.shape}, {lymphocyte.X.shape}")

# preprocessing is fit on the upstream train split only, then reused everywhere
train_idx, test_idx = split_indices(progenitor.n, 0.7, seed=0)
preprocess = ExpressionPreprocess.fit(progenitor.X[train_idx])

spec = AutoencoderSpec(input_width=config.genes, latent_width=32, encoder_widths=(128, 64))
model, history = train_autoencoder(
    preprocess.transform(progenitor.X[train_idx]),
    spec,
    TrainConfig(batch_size=256, epochs=20, seed=0),
    val_data=preprocess.transform(progenitor.X[test_idx]),
)
print("\nepoch  train mse   val mse")
for row in history[::4] + [history[-1]]:
    print(f"{row['epoch']:>5}  {row['train_mse']:>9.4f}  {row['val_mse']:>8.4f}")

# the lineage premise: an upstream-trained model reconstructs downstream
# populations nearly as well as its own held-out cells
upstream = reconstruction_mse(model, preprocess.transform(progenitor.X[test_idx]))
for ds in (monocyte, lymphocyte):
    downstream = reconstruction_mse(model, preprocess.transform(ds.X))
    print(f"{ds.cell_type.value:>11} reconstruction mse {downstream:.4f} "
          f"({downstream / upstream:.2f}x upstream test mse)")

# 2-d view of each population's embedding, the raw material for a scatter plot
print("\nPCA of the latent embeddings (variance explained by 2 components):")
for ds in (progenitor, monocyte, lymphocyte):
    z = model.encode(preprocess.transform(ds.X))
    projection, ratios = pca_project(z, k=2)
    spread = np.linalg.norm(projection.std(axis=0))
    print(f"{ds.cell_type.value:>11}: {ratios.sum():.1%} explained, projection std {spread:.2f}")

"""Feed-forward and attention classifiers on latent embeddings.

Reproduces the protocol's sweeps at desk scale: dropout rates for the
feed-forward head (0 overfits, 0.1-0.2 close the train/test gap) and
head counts for the attention model.

Run:  python demos/02_disease_classifiers.py
"""

from hemalearn.classifiers import (
    AttentionSpec,
    FFNSpec,
    run_dropout_sweep,
    run_head_sweep,
    train_classifier,
)
from hemalearn.data import ExpressionPreprocess, SyntheticConfig, generate_synthetic_lineage, split_indices
from hemalearn.embedding import AutoencoderSpec, TrainConfig, train_autoencoder

config = SyntheticConfig(
    genes=300,
    factor_count=8,
    progenitor_count=4000,
    monocyte_count=600,
    lymphocyte_count=300,
    shared_signal_strength=1.0,
    seed=1,
)
progenitor, _, _ = generate_synthetic_lineage(config)
train_idx, _ = split_indices(progenitor.n, 0.7, seed=1)
preprocess = ExpressionPreprocess.fit(progenitor.X[train_idx])
autoencoder, _ = train_autoencoder(
    preprocess.transform(progenitor.X[train_idx]),
    AutoencoderSpec(input_width=config.genes, latent_width=32, encoder_widths=(96,)),
    TrainConfig(batch_size=256, epochs=15, seed=1),
)
embeddings = autoencoder.encode(preprocess.transform(progenitor.X))
labels = progenitor.labels
clf_config = TrainConfig(batch_size=256, epochs=20, seed=1)

print("=== feed-forward network, dropout sweep ===")
ffn_base = FFNSpec(input_width=32, num_classes=7, hidden1=128, hidden2=64, dropout=0.1)
for rate, history in run_dropout_sweep(embeddings, labels, ffn_base, clf_config).items():
    last = history.rows[-1]
    gap = last["train_accuracy"] - last["test_accuracy"]
    print(f"dropout {rate:.1f}: train {last['train_accuracy']:.4f}  "
          f"test {last['test_accuracy']:.4f}  gap {gap:+.4f}")

print("\n=== attention classifier, head-count sweep ===")
attn_base = AttentionSpec(token_count=32, num_classes=7, hidden_width=64, heads=1, ff_widths=(64,))
for heads, history in run_head_sweep(embeddings, labels, attn_base, clf_config).items():
    last = history.rows[-1]
    print(f"{heads} heads: train {last['train_accuracy']:.4f}  test {last['test_accuracy']:.4f}")

print("\n=== learning curve for the protocol's preferred setup ===")
_, history = train_classifier(
    embeddings,
    labels,
    FFNSpec(input_width=32, num_classes=7, dropout=0.1),
    clf_config,
)
print("epoch,split,loss,accuracy")
print("\n".join(history.to_csv().splitlines()[1:7]))
print("...")

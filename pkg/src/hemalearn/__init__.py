"""hemalearn: compact latent embeddings of blood-cell expression profiles,
from-scratch neural classifiers on top of them, and zero-shot transfer
evaluation across the hematopoietic lineage."""

from . import classifiers, data, embedding, graph, metrics, nn, pipeline
from .data import (
    CellType,
    DiseaseLabel,
    ExpressionPreprocess,
    LabeledDataset,
    SyntheticConfig,
    binarize_labels,
    generate_synthetic_lineage,
    load_matrix,
    save_matrix,
    split,
)
from .embedding import (
    Autoencoder,
    AutoencoderSpec,
    LatentEmbedding,
    TrainConfig,
    embed_dataset,
    reconstruction_mse,
    train_autoencoder,
)
from .classifiers import (
    AttentionClassifier,
    AttentionSpec,
    FFNClassifier,
    FFNSpec,
    multi_head_attention,
    predict,
    scaled_dot_attention,
    train_classifier,
)
from .graph import (
    GCNClassifier,
    GCNSpec,
    SampleGraph,
    build_graph,
    cosine_similarity,
    normalize_adjacency,
    train_gcn,
)
from .metrics import EvalReport, accuracy, confusion_matrix, f1_binary, pca_project

__version__ = "0.1.0"

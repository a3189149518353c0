from .skipgram import TrainConfig, embed_graph, pair_grad, pair_loss, train_skipgram
from .table import EmbeddingTable, read_emb, write_emb
from .walks import (WalkConfig, sample_walks, transition_probabilities, transition_weights,
                    write_walks)

__all__ = [
    "EmbeddingTable", "TrainConfig", "WalkConfig", "embed_graph", "pair_grad", "pair_loss",
    "read_emb", "sample_walks", "train_skipgram", "transition_probabilities",
    "transition_weights", "write_emb", "write_walks",
]

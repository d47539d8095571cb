"""Structural knowledge: centralities, similarities, node2vec, the knowledge bank."""

from .bank import (NUM_CENTRALITIES, NUM_SLOTS, KnowledgeBank, Perceptron, SubnetworkKnowledge,
                   bank_manifest, build_knowledge_bank, disable_knowledge, load_bank, save_bank, slot_embeddings,
                   vectorize_centrality)
from .centrality import MEASURES, CentralityVector, compute_centralities
from .node2vec import Node2VecParams, random_walk_embed
from .similarity import attribute_similarity_graph, pathsim, similarity_embedding, top_k_graph

__all__ = [
    "bank_manifest",
    "MEASURES", "NUM_CENTRALITIES", "NUM_SLOTS", "CentralityVector", "KnowledgeBank", "Node2VecParams",
    "Perceptron", "SubnetworkKnowledge", "attribute_similarity_graph", "build_knowledge_bank",
    "compute_centralities", "disable_knowledge", "load_bank", "pathsim", "random_walk_embed", "save_bank",
    "similarity_embedding", "slot_embeddings", "top_k_graph", "vectorize_centrality",
]

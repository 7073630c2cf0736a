"""Task-guided co-clustering of coded visit records over a hypergraph.

Nodes are clinical concept codes, hyperedges are visits. An attention
message-passing transformer predicts multi-label visit outcomes while
dual deep-embedded clustering and a contrastive centroid-alignment
objective discover matched concept/visit subgroups.
"""

__version__ = "0.1.0"

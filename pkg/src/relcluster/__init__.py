"""Unsupervised relation extraction at desk scale.

Pipeline: ingest a JSONL corpus of entity-annotated sentences, mine
within-sentence and cross-sentence positive pairs, train relation
representations with a margin pair loss plus a hierarchical exemplar
loss, cluster with K-Means, and score against gold labels with B-cubed,
V-measure, and ARI.
"""

__version__ = "0.1.0"

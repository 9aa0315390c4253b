"""curato: feature-space data curation toolkit.

Train a small network, extract penultimate-layer features, embed them with
PCA + t-SNE, flag per-class noise with DBSCAN, filter the dataset, and
retrain - plus a batch-size sweep harness and a discrete-event simulator of
static-order vs. dynamic-queue gradient allreduce scheduling.
"""

__version__ = "0.1.0"

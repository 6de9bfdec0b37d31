"""Graph node embeddings trained against neighbourhood summaries, on a small numpy autodiff core."""

from .datasets import Dataset, load_dataset, make_citation_like
from .estimators import LinearProbe, N2NClassifier, N2NEmbedder, NFN2NEmbedder
from .graph import Graph, Split, load_edge_list, make_split
from .metrics import collapse_report, micro_f1
from .taps import build_positive_table, taps_partition
from .trainer import TrainConfig, run

__all__ = [
    "Dataset", "Graph", "LinearProbe", "N2NClassifier", "N2NEmbedder", "NFN2NEmbedder",
    "Split", "TrainConfig", "build_positive_table", "collapse_report", "load_dataset",
    "load_edge_list", "make_citation_like", "make_split", "micro_f1", "run", "taps_partition",
]

__version__ = "0.1.0"

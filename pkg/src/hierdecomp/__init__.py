"""hierdecomp: decompose a flat classification problem into a confusion-driven
hierarchy of small classifiers, with adaptive per-cluster network selection
and exact deployment memory accounting."""

from .confmat import (
    ConfusionMatrix,
    DissimilarityMatrix,
    PosteriorMatrix,
    build_confusion,
    column_normalize,
    load_confusion_csv,
    save_confusion_csv,
    sub_confusion,
    to_dissimilarity,
)
from .datagen import Dataset, SynthSpec, generate, load_dataset_csv, save_dataset_csv, split
from .hiernet import (
    HierarchicalModel,
    Prediction,
    coarse_labels,
    evaluate_hierarchical,
    infer,
    infer_batch,
    load_bundle,
    save_bundle,
    train_hierarchical,
)
from .linkage import (
    Clustering,
    Dendrogram,
    Merge,
    cut_clusters,
    export_dot,
    load_clustering_json,
    save_clustering_json,
    upgma_linkage,
)
from .memcost import (
    LayerSpec,
    MemoryReport,
    NetworkSpec,
    builtin_network,
    hierarchical_memory,
    layer_data_memory,
    layer_param_memory,
    network_memory,
)
from .mlp import (
    MLPConfig,
    MLPModel,
    TrainSpec,
    evaluate,
    gradient_check,
    predict_proba,
    train,
    train_regressor,
)
from .netselect import (
    Candidate,
    CandidateSet,
    ClusterFeatures,
    MetaDataset,
    MetaRow,
    Selector,
    build_adaptive_hierarchical,
    cluster_features,
    predict_config,
    select_best,
    train_selector,
)
from .overlap import expand_overlap, overlap_threshold

__version__ = "0.1.0"

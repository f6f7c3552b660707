"""encmap: spectral feature vectors and map analytics for sentence encoders.

The pipeline in one breath: an encoder's embedding matrix becomes a density
spectrum (io, spectral), the spectrum becomes an N-dimensional feature vector
of per-axis divergence contributions against the maximally mixed reference
state (qre), and collections of feature vectors support l1 geometry
(distance), 2D maps and PCA (projection), synthetic validation data
(synthetic), downstream-score prediction (prediction), and rendered artifacts
(report), all orchestrated by the ``encmap`` CLI (cli).
"""

__version__ = "0.1.0"

from .errors import (
    ComparabilityError,
    CorruptionError,
    DegenerateInputError,
    EncmapError,
    FormatError,
    NumericalError,
    ParameterError,
    ResourceLimitError,
    ShapeError,
    UndefinedCorrelationError,
    UnknownIdError,
    ValidationError,
)
from .io import (
    EmbeddingMatrix,
    EncoderRecord,
    l2_normalize_rows,
    read_embedding_matrix,
    read_sidecar,
    write_embedding_matrix,
    write_sidecar,
)
from .spectral import (
    DEFAULT_RANK_TOLERANCE,
    DensitySpectrum,
    compute_spectrum,
    explicit_spectrum_oracle,
    max_principal_angle,
    read_spectrum,
    unit_base_spectrum,
    von_neumann_entropy,
    write_spectrum,
)
from .qre import (
    DEFAULT_EPSILON,
    FeatureVector,
    QreBreakdown,
    closed_form_qre_total,
    feature_vector,
    qre,
    qre_dense_oracle,
    read_feature_vector,
    write_feature_vector,
)
from .distance import (
    DendrogramNode,
    DistanceMatrix,
    cut_dendrogram,
    distance_matrix_from_csv,
    distance_matrix_to_csv,
    hierarchical_cluster,
    l1_distance,
    leaf_ids,
    nearest_neighbors,
    pairwise_distances,
    to_newick,
)
from .projection import (
    MapLayout,
    PcaModel,
    TsneParams,
    apply_pca,
    fit_pca,
    transform_pca,
    tsne,
    write_layout_csv,
)
from .synthetic import (
    GeneratedEmbedding,
    GroupSpec,
    SyntheticSpec,
    base_matrix,
    generate,
    perturb,
)
from .prediction import (
    ElasticNetModel,
    EnetCvResult,
    PredictionReport,
    Standardizer,
    alpha_max,
    elastic_net_cv,
    elastic_net_fit,
    load_scores_csv,
    make_folds,
    pearson,
    run_prediction_suite,
    spearman,
    standardize_apply,
    standardize_fit,
)
from .report import (
    PlotSpec,
    dendrogram_layout,
    minmax_task_average,
    render_dendrogram,
    render_scatter,
    stable_color,
)

__all__ = [name for name in dir() if not name.startswith("_")]

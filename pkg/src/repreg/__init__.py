"""Regression on weighted representative points of partitioned data.

Partition the rows into blocks, replace each block by one weighted
representative point (mean, median, grid mid-point, or a score-matching
point rebuilt at every iterate) and fit linear models / GLMs on the
representative set.
"""

__version__ = "0.1.0"

from .baselines import dc_fit, full_fit
from .errors import (
    AggregationError,
    ConfigError,
    DataFormatError,
    DomainError,
    GenerationError,
    IllConditionedWarning,
    RankError,
    ReprError,
)
from .glm import (
    Dataset,
    FitResult,
    GlmFamily,
    WeightedData,
    family_from_name,
    fisher_scoring_fit,
    information,
    link_eval,
    log_likelihood,
    score,
    wls_fit,
)
from .partition import (
    BlockGeometry,
    PartitionSpec,
    block_geometry,
    by_distinct_x_partition,
    discretize_column,
    equal_depth_partition,
    kmeans_partition,
    natural_partition,
)
from .representatives import (
    RepresentativeSet,
    mean_representatives,
    median_representatives,
    midpoint_representatives,
    smr_fit,
    smr_predictor,
    smr_representatives,
    smr_response,
    solve_eta,
    split_block_by_sign,
)

__all__ = [name for name in dir() if not name.startswith("_")]

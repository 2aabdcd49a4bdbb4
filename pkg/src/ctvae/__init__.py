"""Conditional tabular VAE: learn target-given-condition distributions from
tabular data and simulate what-if condition overrides."""

__version__ = "0.1.0"

from .schema import (  # noqa: F401
    ColumnSpec,
    Dataset,
    Schema,
    SplitResult,
    ingest_table,
    load_schema,
    split_by_group,
    validation_split,
    write_csv,
)
from .transform import (  # noqa: F401
    ContinuousTransform,
    DiscreteTransform,
    GaussianMixture,
    TransformBundle,
    decode_continuous,
    decode_target,
    encode_continuous,
    encode_discrete,
    encode_row,
    fit_bundle,
    fit_gaussian_mixture,
)
from .model import (  # noqa: F401
    ArchitectureSpec,
    LossBreakdown,
    ModelParams,
    TrainConfig,
    TrainHistory,
    elbo_loss,
    init_model,
    load_model,
    save_model,
    train,
)
from .sampler import (  # noqa: F401
    ConditionSpec,
    DistributionSummary,
    SyntheticBatch,
    build_condition,
    compare,
    generate,
    summarize,
)
from .metrics import (  # noqa: F401
    AggregateScore,
    ColumnScore,
    ProductScore,
    aggregate,
    ks_complement,
    mean_complement,
    tv_complement,
)

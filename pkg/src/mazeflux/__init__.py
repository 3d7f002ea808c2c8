"""mazeflux: Monte Carlo maze transport plus operator-learning surrogates.

The package generates its own training data with a one-group 2D Monte Carlo
simulator (Gaussian sources in a concrete serpentine maze, track-length flux
tally), assembles operator-learning datasets from it, trains a branch-trunk
operator network against fully-connected and convolutional baselines, and
benchmarks accuracy and inference speed.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    DatasetChecksumError,
    DatasetError,
    DatasetTruncatedError,
    DatasetVersionError,
    GeometryError,
    MazefluxError,
    MetricsError,
    ProtocolError,
    ShapeError,
    TrainingError,
)
from .geometry import MaterialXS, MazeConfig, MazeGeometry, Rect, build_maze, default_maze
from .source import (
    SensorGrid,
    SensorVector,
    SourceRanges,
    SourceSpec,
    discretize_source,
    gaussian_density,
    make_covariance,
    sample_source_spec,
    source_intensity,
)
from .transport import (
    FluxField,
    RunPlan,
    TallyAccumulator,
    TallyGrid,
    load_flux_csv,
    sample_birth,
    save_flux_csv,
    simulate_flux,
    timing_probe,
    transport_history,
)
from .dataset import (
    Corpus,
    CorpusEntry,
    CorpusView,
    Dataset,
    NormalizationMeta,
    OperatorSample,
    PointSubset,
    SplitCorpus,
    assemble_operator_samples,
    fit_normalization,
    generate_corpus,
    read_dataset,
    split_functions,
    subsample_points,
    write_dataset,
)
from .metrics import MetricsReport, compute_metrics
from .models import (
    CnnBaseline,
    DeepONetModel,
    FcnBaseline,
    TrainConfig,
    deeponet_predict,
    evaluate_on_function,
    inference_timing,
    init_deeponet,
    load_checkpoint,
    predict_field,
    save_checkpoint,
    train_cnn,
    train_deeponet,
    train_fcn,
)
from .nets import (
    AdamState,
    GradientBundle,
    MLPParams,
    adam_step,
    backward,
    forward,
    init_adam,
    init_params,
    mean_l2_relative_error,
)

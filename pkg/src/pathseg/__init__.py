"""Indoor positioning on a known path as multivariate time series classification."""

from .dataset import (
    AMBIENT_FEATURES,
    FEATURE_SETS,
    FULL_FEATURES,
    IMU_FEATURES,
    PathSpec,
    SensorRun,
    WindowedDataset,
    load_run_csv,
    load_runs_csv,
    save_run_csv,
    split_runs,
)
from .simulate import SegmentSignature, SimConfig, default_path, generate_runs, signature_bank
from .preprocess import (
    NormParams,
    RunPreprocessor,
    fill_missing,
    load_norm_params,
    make_windows,
    max_gap,
    minmax_apply,
    minmax_fit,
    rolling_mean,
    save_norm_params,
    select_features,
)
from .tree import DecisionTreeClassifier, RandomForestClassifier, entropy
from .nn import (
    ArchitectureSpec,
    LayerSpec,
    Network,
    NeuralNetClassifier,
    build_architecture,
    train_network,
)
from .metrics import (
    PredictionTrace,
    RunTrace,
    accuracy_score,
    confusion_counts,
    loc_score,
    trace_from_windows,
)
from .envelope import LoadedModel, load_model, read_envelope, save_model
from .bench import (
    BenchProtocol,
    BenchResult,
    bench_suite,
    measure_latency,
    memory_footprint,
    tile_batch,
)

__version__ = "0.1.0"

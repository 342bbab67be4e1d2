"""outliernets: compact convolutional autoencoders for acoustic anomaly
detection on CPU, with constrained architecture search.

The package is self-contained: WAV parsing, log-mel features, the neural
network core (with a compiled kernel extension and a pure-numpy fallback),
training, scoring, AUC, architecture search, and latency benchmarking are
all implemented here on top of numpy alone.
"""

__version__ = "0.1.0"

from .anomaly import (
    AnomalyScore,
    EvalReport,
    TrainConfig,
    TrainResult,
    compute_auc,
    evaluate,
    score_clip,
    train,
)
from .arch import (
    ArchSpec,
    EfficiencyReport,
    ModelBundle,
    count_flops,
    count_macs,
    count_params,
    efficiency_report,
    load_bundle,
    make_template,
    reference_fan_686,
    save_bundle,
)
from .audio_io import (
    AudioClip,
    DatasetIndex,
    SynthSpec,
    index_dataset,
    read_wav,
    synthesize_corpus,
    write_wav,
)
from .bench import BenchConfig, BenchResult, run_bench
from .errors import (
    ArchError,
    AudioFormatError,
    BundleFormatError,
    DatasetError,
    FeatureError,
    OutlierNetsError,
    SearchExhaustedError,
    ShapeError,
    SingleClassError,
    TrainingDivergedError,
    UnsupportedEncodingError,
)
from .explore import (
    Candidate,
    Constraints,
    PerfFnConfig,
    SearchData,
    SearchPoint,
    SearchSpace,
    evaluate_candidate,
    indicator,
    perf_fn,
    search,
)
from .features import (
    CropWindow,
    FeatureConfig,
    MelSpectrogram,
    crop_windows,
    log_mel,
    mel_filterbank,
    read_tensor,
    stft_power,
    write_tensor,
)

__all__ = [
    "AnomalyScore", "ArchError", "ArchSpec", "AudioClip", "AudioFormatError",
    "BenchConfig", "BenchResult", "BundleFormatError", "Candidate",
    "Constraints", "CropWindow", "DatasetError", "DatasetIndex",
    "EfficiencyReport", "EvalReport", "FeatureConfig", "FeatureError",
    "MelSpectrogram", "ModelBundle", "OutlierNetsError", "PerfFnConfig",
    "SearchData", "SearchExhaustedError", "SearchPoint", "SearchSpace",
    "ShapeError", "SingleClassError", "SynthSpec", "TrainConfig",
    "TrainResult", "TrainingDivergedError", "UnsupportedEncodingError",
    "compute_auc", "count_flops", "count_macs", "count_params",
    "crop_windows", "efficiency_report", "evaluate", "evaluate_candidate",
    "index_dataset", "indicator", "load_bundle", "log_mel", "make_template",
    "mel_filterbank", "perf_fn", "read_tensor", "read_wav",
    "reference_fan_686", "run_bench", "save_bundle", "score_clip", "search",
    "stft_power", "synthesize_corpus", "train", "write_tensor", "write_wav",
]

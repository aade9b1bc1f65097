"""e3lab: desk-scale continual-learning laboratory for synthetic-image
detection.

The heavy lifting lives in the compiled extension; this package re-exports
its public surface.
"""

from e3lab._core import (  # noqa: F401
    ConfigError,
    Corpus,
    Detector,
    E3LabError,
    RunConfig,
    __version__,
    accuracy,
    apply_trace,
    buffer_quota,
    build_corpus,
    embed,
    extract_patch,
    generate_real,
    import_corpus,
    load_detector,
    predict_scores,
    roc_auc,
    rer,
    run_protocol,
    save_detector,
    train_baseline,
)

__all__ = [
    "ConfigError",
    "Corpus",
    "Detector",
    "E3LabError",
    "RunConfig",
    "__version__",
    "accuracy",
    "apply_trace",
    "buffer_quota",
    "build_corpus",
    "embed",
    "extract_patch",
    "generate_real",
    "import_corpus",
    "load_detector",
    "predict_scores",
    "roc_auc",
    "rer",
    "run_protocol",
    "save_detector",
    "train_baseline",
]

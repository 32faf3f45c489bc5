from .export import (
    DEFAULT_MODEL,
    EXPECTED_DIM,
    ExportError,
    ExportJob,
    HashEncoder,
    SentenceEncoder,
    make_encoder,
    run_export,
)

__all__ = [
    "DEFAULT_MODEL",
    "EXPECTED_DIM",
    "ExportError",
    "ExportJob",
    "HashEncoder",
    "SentenceEncoder",
    "make_encoder",
    "run_export",
]

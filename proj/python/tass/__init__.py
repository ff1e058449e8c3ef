"""Target-aware single-stream audio-visual question answering.

Thin wrapper over the compiled `_tass` extension: tensor file IO, the core
numerical operations, dataset generation, training and evaluation.
"""

try:
    from ._tass import (  # noqa: F401
        TassError,
        __version__,
        evaluate,
        generate_dataset,
        gradcheck,
        js_divergence,
        pool_sequence,
        read_tensor,
        softmax,
        train,
        write_tensor,
    )
except ImportError:  # build-tree layout keeps the extension on sys.path
    from _tass import (  # noqa: F401
        TassError,
        __version__,
        evaluate,
        generate_dataset,
        gradcheck,
        js_divergence,
        pool_sequence,
        read_tensor,
        softmax,
        train,
        write_tensor,
    )

__all__ = [
    "TassError",
    "evaluate",
    "generate_dataset",
    "gradcheck",
    "js_divergence",
    "pool_sequence",
    "read_tensor",
    "softmax",
    "train",
    "write_tensor",
]

"""Elephant activation laboratory (elephantlab).

Numpy MLPs with exact backward passes, kernel and sparsity diagnostics, and
harnesses for streaming regression, class-incremental MNIST and small-buffer
DQN.
"""

from .common.errors import ElephantLabError

__version__ = "0.1.0"

__all__ = ["ElephantLabError", "__version__", "cli_main"]


def cli_main():
    """Console script entry point; exits with the command's return code."""
    import sys

    from .cli.commands import main
    sys.exit(main())

"""Main entry point for running elephantlab as a module.

This allows running the package with 'python -m elephantlab'.
"""

from . import cli_main

if __name__ == "__main__":
    cli_main()

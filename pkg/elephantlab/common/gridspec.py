import itertools
import re
from typing import Any, Dict, Iterable, List

import numpy as np

from .config import coerce_scalar
from .errors import ValidationError


class GridSpec:
    """
    Class for validating and expanding a single sweep axis string.

    Supports syntax like:
    - optimizer.learning_rate=1e-3,3e-4,1e-4 (comma separated list)
    - activation.d=2:8:4 (linear range start:stop:count, endpoints included)
    - optimizer.learning_rate=log1e-5:1e-2:4 (log-spaced range)
    - network.hidden=[1000],[100|100] (list values, items separated by '|')
    - activation.kind=relu,elephant (strings)

    Usage:
        axis = GridSpec("optimizer.learning_rate=1e-3,3e-4")
        if axis.is_valid_syntax():
            values = axis.expand()
    """

    KEY_PATTERN = r'[A-Za-z_]\w*(?:\.[A-Za-z_]\w*)*'
    NUMBER = r'[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?'
    RANGE_PATTERN = fr'^(log)?({NUMBER}):({NUMBER}):(\d+)$'
    TOKEN_PATTERN = r'(?:\[[^\]]*\]|[^,\[\]]+)'
    GRID_PATTERN = fr'^({KEY_PATTERN})=({TOKEN_PATTERN}(?:,{TOKEN_PATTERN})*)$'

    def __init__(self, grid_str: str = ""):
        """
        Initialize with an axis string.

        Args:
            grid_str: A string of the form key=values
        """
        self.original_str = grid_str.strip()
        self.key = ""
        self.values_str = ""
        match = re.match(self.GRID_PATTERN, self.original_str)
        if match:
            self.key, self.values_str = match.group(1), match.group(2)

    def is_valid_syntax(self) -> bool:
        """
        Check if the axis string has valid syntax.

        Returns:
            bool: True if syntax is valid, False otherwise
        """
        return bool(self.key and self.values_str)

    @staticmethod
    def parse_value(token: str) -> Any:
        """Convert one token to its typed value."""
        token = token.strip()
        if token.startswith('[') and token.endswith(']'):
            inner = token[1:-1].strip()
            if not inner:
                return []
            return [coerce_scalar(item) for item in inner.split('|')]
        return coerce_scalar(token)

    def expand(self) -> List[Any]:
        """
        Expand the axis into its list of values.

        Returns:
            List of typed values in the order given

        Raises:
            ValidationError: If the syntax is invalid or the axis is empty
        """
        if not self.is_valid_syntax():
            raise ValidationError(f"Invalid grid specification: '{self.original_str}'")

        values: List[Any] = []
        for token in re.findall(self.TOKEN_PATTERN, self.values_str):
            range_match = re.match(self.RANGE_PATTERN, token.strip())
            if range_match:
                log, start, stop, count = range_match.groups()
                values.extend(self._expand_range(float(start), float(stop), int(count), bool(log)))
            else:
                values.append(self.parse_value(token))

        if not values:
            raise ValidationError(f"Grid axis '{self.key}' is empty")
        return values

    @staticmethod
    def _expand_range(start: float, stop: float, count: int, log: bool) -> List[float]:
        if count < 1:
            raise ValidationError("Grid range count must be at least 1")
        if log:
            if start <= 0 or stop <= 0:
                raise ValidationError("Log-spaced grid ranges need positive endpoints")
            points = np.geomspace(start, stop, count)
        else:
            points = np.linspace(start, stop, count)
        return [float(p) for p in points]

    def __str__(self) -> str:
        return self.original_str


def parse_grid(axis_strings: Iterable[str]) -> Dict[str, List[Any]]:
    """Parse several axis strings into an ordered key -> values mapping."""
    grid: Dict[str, List[Any]] = {}
    for axis_str in axis_strings:
        axis = GridSpec(axis_str)
        values = axis.expand()
        if axis.key in grid:
            raise ValidationError(f"Grid key '{axis.key}' given more than once")
        grid[axis.key] = values
    return grid


def grid_cells(grid: Dict[str, List[Any]]) -> List[Dict[str, Any]]:
    """Return the Cartesian product of a grid as a list of key -> value dicts."""
    if not grid:
        return [{}]
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]

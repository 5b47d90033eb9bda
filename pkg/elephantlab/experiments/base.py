"""Shared pieces of the experiment harnesses."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from tqdm import tqdm

from ..nn.network import Network


@dataclass
class HarnessReport:
    """Outcome of one harness run for one seed.

    Subclasses add their own fields; ``metrics`` returns the JSON-ready scalar
    summary and ``write_artifacts`` writes curve/matrix files into ``run_dir``
    and returns their paths keyed by artifact name.
    """

    seed: int = 0
    config_hash: str = ""
    aborted: bool = False
    abort_reason: Optional[str] = None
    network: Optional[Network] = field(default=None, repr=False, compare=False)

    def abort(self, reason: str) -> None:
        self.aborted = True
        self.abort_reason = reason

    def metrics(self) -> Dict[str, Any]:
        return {}

    def write_artifacts(self, run_dir: Path) -> Dict[str, str]:
        return {}


def progress(iterable: Iterable, enabled: bool, desc: str, total: Optional[int] = None):
    """Wrap ``iterable`` in a tqdm bar when ``enabled``."""
    return tqdm(iterable, desc=desc, total=total, disable=not enabled, leave=False)

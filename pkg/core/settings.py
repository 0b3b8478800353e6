"""
settings.py - Tolerances and runtime configuration.

Every numeric knob used by the analysis lives on `Tolerances`. Values can be
overridden through DSQ_TOL_<FIELD> environment variables (a .env file is
honoured, see load_environment) and, on the command line, through --tol-<field> flags.
"""

import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)

ENV_PREFIX = "DSQ_TOL_"
THREADS_ENV = "DSQ_THREADS"
ENV_FILE_ENV = "DSQ_ENV_FILE"
OUTPUT_DIR_ENV = "DSQ_OUTPUT_DIR"

PROJECT_ROOT = Path(__file__).resolve().parent.parent


@lru_cache(maxsize=None)
def load_environment() -> Optional[Path]:
    """
    Load DSQ_* settings from a .env file, once per process.

    DSQ_ENV_FILE names the file explicitly; otherwise the working directory and
    then the project root are tried. Variables already set in the process win.

    Returns:
        The file that was loaded, or None
    """
    explicit = os.getenv(ENV_FILE_ENV)
    candidates = [Path(explicit)] if explicit else [Path.cwd() / ".env", PROJECT_ROOT / ".env"]
    for env_file in candidates:
        if env_file.is_file():
            load_dotenv(env_file, override=False)
            logger.debug("Loaded settings from %s", env_file)
            return env_file
    if explicit:
        logger.warning("%s=%s does not exist; using the process environment", ENV_FILE_ENV, explicit)
    return None


def output_path(path: Union[str, Path]) -> Path:
    """Resolve a relative output path against DSQ_OUTPUT_DIR when it is set."""
    load_environment()
    target = Path(path)
    base = os.getenv(OUTPUT_DIR_ENV)
    if base and not target.is_absolute():
        target = Path(base) / target
    target.parent.mkdir(parents=True, exist_ok=True)
    return target


class Tolerances(BaseModel):
    """All thresholds used by singular-point, crossing and search numerics."""

    model_config = ConfigDict(frozen=True)

    # singular points
    grid_samples: int = Field(default=2048, description="Root-detection samples per component")
    root_tol: float = Field(default=1e-10, description="Refinement target |g| for singular points")
    companion_tol: float = Field(default=1e-8, description="Acceptance bound on the companion equation")
    merge_tol: float = Field(default=1e-7, description="Parameter distance below which roots merge")

    # double points
    image_tol: float = Field(default=1e-9, description="Image coincidence tolerance after refinement")
    transversality_tol: float = Field(default=1e-6, description="Relative span determinant threshold")
    cluster_fraction: float = Field(default=1e-3, description="Cluster radius as a fraction of domain length")
    initial_boxes: int = Field(default=16, description="Initial subdivision boxes per axis")
    leaf_divisor: int = Field(default=8, description="Leaf box size = cluster radius / leaf_divisor")
    max_boxes: int = Field(default=400_000, description="Surviving box budget per component pair")
    newton_max_iter: int = Field(default=50, description="Newton iteration cap")
    multiplicity_tol: float = Field(default=1e-6, description="Image distance joining double points")

    # affine normalization
    collinearity_tol: float = Field(default=1e-9, description="Relative distance to the anchor line")
    lambda_gap: float = Field(default=1e-12, description="Minimum |lambda1 - lambda2|")

    # condition (*)
    kappa_min: float = Field(default=1e-6, description="Curvature witness threshold")
    star_window_fraction: float = Field(default=1e-2, description="Window length as a fraction of domain length")
    star_samples: int = Field(default=64, description="Samples per checked window")

    # constructive search
    nondegeneracy_theta: float = Field(default=1e-3, description="Normalized |phi| threshold")
    det_theta: float = Field(default=1e-6, description="Minimum |det J Phi| at the base state")
    perturbation_fraction: float = Field(default=1e-2, description="Perturbation radius over chord length")
    inversion_tol: float = Field(default=1e-10, description="Newton inversion residual for Phi")
    diagonal_tol: float = Field(default=1e-9, description="Rejection distance from the diagonal")

    @classmethod
    def from_env(cls, overrides: Optional[Dict[str, Any]] = None) -> "Tolerances":
        """Build tolerances from defaults, DSQ_TOL_* variables and explicit overrides."""
        load_environment()
        values: Dict[str, Any] = {}
        for name in cls.model_fields:
            raw = os.getenv(ENV_PREFIX + name.upper())
            if raw is not None:
                values[name] = raw
                logger.debug("Tolerance %s overridden from environment: %s", name, raw)
        if overrides:
            values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.model_validate(values)


def worker_count() -> int:
    """Maximum worker threads, capped by DSQ_THREADS."""
    load_environment()
    default = os.cpu_count() or 1
    raw = os.getenv(THREADS_ENV)
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Ignoring non-integer %s=%r", THREADS_ENV, raw)
        return default
    return max(1, value)

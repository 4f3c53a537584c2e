"""
Utility functions for the FMSE lab.
"""
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np


def load_env_file(env_file_path: Optional[str] = None) -> Dict[str, str]:
    """
    Load FMSE_* and Django variables from a development .env file.

    Lines may carry an `export ` prefix and single- or double-quoted values.
    Variables already present in the environment win over the file.

    Args:
        env_file_path: Path to .env file (defaults to the project root)

    Returns:
        Dict of the variables this call actually set
    """
    path = Path(env_file_path) if env_file_path else get_project_root() / '.env'
    applied: Dict[str, str] = {}
    if not path.is_file():
        return applied

    for raw in path.read_text(encoding='utf-8').splitlines():
        line = raw.strip()
        if not line or line.startswith('#') or '=' not in line:
            continue
        key, value = line.removeprefix('export ').split('=', 1)
        key, value = key.strip(), value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in '"\'':
            value = value[1:-1]
        if key not in os.environ:
            os.environ[key] = value
            applied[key] = value
    return applied


def is_production() -> bool:
    """Check if running in production environment."""
    return os.getenv('ENVIRONMENT', 'development').lower() == 'production'


def is_development() -> bool:
    """Check if running in development environment."""
    return not is_production()


def get_project_root() -> Path:
    """Get the project root directory (the one holding requirements.txt)."""
    return Path(__file__).parent.parent.parent.parent


def tool_version() -> str:
    """Version string embedded in every report."""
    from fmse_lab import __version__
    return __version__


def array_digest(*arrays: Any) -> str:
    """
    Stable sha256 digest of one or more arrays (dtype, shape and bytes).

    Used for grid, potentials and config hashes in reports and DnMatrix provenance.
    """
    digest = hashlib.sha256()
    for array in arrays:
        values = np.ascontiguousarray(np.asarray(array))
        digest.update(str(values.dtype).encode('utf-8'))
        digest.update(str(values.shape).encode('utf-8'))
        digest.update(values.tobytes())
    return digest.hexdigest()


def json_digest(payload: Any) -> str:
    """sha256 of a JSON document serialized with sorted keys."""
    text = json.dumps(payload, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(text.encode('utf-8')).hexdigest()

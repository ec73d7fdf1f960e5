import json
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

import numpy as np
import pandas as pd

from vortex_thermal.analysis import OamSpectrum
from vortex_thermal.errors import ConfigError

FLOAT_FORMAT = '%.12g'


def write_table(df: pd.DataFrame, path, header: Mapping[str, Any]) -> Path:
    """
    Write a comma-separated table preceded by '# key=value' header lines.

    Args:
        df: Table to write
        path: Output file path (parent directories are created)
        header: Metadata written above the table, in insertion order

    Returns:
        Path: The written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {key}={value}\n" for key, value in header.items()]
    with open(path, 'w', newline='') as f:
        f.writelines(lines)
        df.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def read_table(path) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """
    Read a table written by write_table.

    Returns:
        (table, header) where header maps every '# key=value' line to its string value
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"table not found: {path}")
    header = {}
    with open(path) as f:
        for line in f:
            if not line.startswith('#'):
                break
            key, _, value = line[1:].strip().partition('=')
            header[key.strip()] = value.strip()
    try:
        df = pd.read_csv(path, comment='#')
    except Exception as e:
        raise ConfigError(f"cannot parse table {path}: {e}") from e
    return df, header


def spectrum_from_table(df: pd.DataFrame) -> OamSpectrum:
    """Rebuild a spectrum from a table with columns ell, probability and optionally counts/error."""
    missing = {'ell', 'probability'} - set(df.columns)
    if missing:
        raise ConfigError(f"spectrum table lacks columns {sorted(missing)}")
    df = df.sort_values('ell')
    ell = df['ell'].to_numpy()
    L_max = int(np.max(np.abs(ell)))
    if not np.array_equal(ell, np.arange(-L_max, L_max + 1)):
        raise ConfigError("spectrum table must cover every ell in [-L_max, L_max] exactly once")
    if 'counts' in df.columns and df['counts'].notna().all():
        return OamSpectrum.from_counts(df['counts'].to_numpy(dtype=np.int64))
    stderr = df['error'].to_numpy(dtype=float) if 'error' in df.columns and df['error'].notna().all() else None
    return OamSpectrum.normalized(df['probability'].to_numpy(dtype=float), stderr=stderr)


def write_manifest(path, manifest: Mapping[str, Any]) -> Path:
    """Run manifest as JSON with sorted keys."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=_json_default)
        f.write('\n')
    return path


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")

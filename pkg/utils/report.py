import json
import logging
import os
import platform
from typing import Dict

import numpy as np
import pandas as pd
import scipy

CSV_FLOAT_FORMAT = '%.10e'


def _json_serializer(obj):
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    elif isinstance(obj, (np.bool_,)):
        return bool(obj)
    elif isinstance(obj, (np.ndarray,)):
        return obj.tolist()
    return str(obj)


def versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def write_csv(frame: pd.DataFrame, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    logging.getLogger(__name__).info(f"Wrote {len(frame)} rows to {path}")
    return path


def write_json(payload: Dict, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_serializer)
        f.write("\n")
    logging.getLogger(__name__).info(f"Wrote report {path}")
    return path


def to_json_text(payload: Dict) -> str:
    return json.dumps(payload, sort_keys=True, default=_json_serializer)

import json
import os

import json5
import numpy as np

from .errors import InputError


def save_json(data, file_path):
    """Write ``data`` as JSON with sorted keys so reruns are byte-identical."""
    parent = os.path.dirname(file_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(file_path, 'w', encoding='utf-8') as json_file:
        json.dump(data, json_file, indent=2, sort_keys=True)
        json_file.write("\n")


def read_json_file(file_path):
    """
    Read and parse a JSON (or JSON5) file.

    Args:
    - file_path: str, the path of the JSON file.

    Returns:
    - The parsed document.

    Raises:
    - InputError when the file is missing or not parseable.
    """
    try:
        with open(file_path, 'r', encoding='utf-8') as file:
            return json5.load(file)
    except FileNotFoundError:
        raise InputError(f"File not found: {file_path}")
    except ValueError as e:
        raise InputError(f"Invalid JSON format in file {file_path}: {e}")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Seeded generator; extra integers select an independent sub-stream."""
    return np.random.default_rng([seed, *stream])


def ensure_dir(path):
    if path and not os.path.exists(path):
        os.makedirs(path)
    return path

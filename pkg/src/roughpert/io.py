"""Flat JSON files for the objects exchanged by the command line."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Union

from .analysis import Control, control_from_json
from .functional import GridFunctional
from .perturb import HElement, IncrementPath

PathLike = Union[str, os.PathLike]


class InputError(ValueError):
    """A file that is missing, unreadable or not the expected object."""


def load_json(path: PathLike) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"{path}: no such file") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def save_json(obj: Any, path: PathLike) -> None:
    """Write atomically: a crash never leaves a half-written file behind."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=1)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _parse(kind: str, path: PathLike, fn):
    obj = load_json(path)
    if not isinstance(obj, dict):
        raise InputError(f"{path}: expected a JSON object holding {kind}")
    try:
        return fn(obj)
    except KeyError as exc:
        raise InputError(f"{path}: {kind} is missing field {exc}") from exc
    except (TypeError, IndexError) as exc:
        raise InputError(f"{path}: malformed {kind} ({exc})") from exc


def load_functional(path: PathLike) -> GridFunctional:
    return _parse("a grid functional", path, GridFunctional.from_json)


def load_control(path: PathLike) -> Control:
    return _parse("a control", path, control_from_json)


def load_increment_path(path: PathLike) -> IncrementPath:
    return _parse("an increment path", path, IncrementPath.from_json)


def load_h_element(path: PathLike) -> HElement:
    return _parse("an H-space element", path, HElement.from_json)

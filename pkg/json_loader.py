"""
Reading and writing distributions, hypotheses and results as JSON.

A distribution file looks like
    {"support": ["a", "b"], "probs": [0.5, 0.5]}
optionally with "coords" (one row per point); a hypothesis file like
    {"support": ["a", "b"], "values": [0.0, 1.0], "range_bound": 1.0}
"""

import json
import logging
from pathlib import Path
from typing import Any, List, Optional, Sequence, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from core_model import Dist, Hypothesis, InputValidationError, SimplexWeights, Support

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
M = TypeVar("M", bound=BaseModel)


class DistFile(BaseModel):
    support: List[str]
    probs: List[float]
    coords: Optional[List[List[float]]] = None


class HypothesisFile(BaseModel):
    support: List[str]
    values: List[float]
    range_bound: float = 1.0


def _read_model(path: PathLike, model: Type[M]) -> M:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise InputValidationError(f"{path}: cannot read file: {e.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputValidationError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    try:
        return model.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        where = ".".join(str(part) for part in err["loc"]) or "<root>"
        raise InputValidationError(f"{path}: {where}: {err['msg']}") from None


def _with_path(path: PathLike, build):
    try:
        return build()
    except InputValidationError as e:
        raise type(e)(f"{path}: {e}") from None


def load_dist(path: PathLike) -> Dist:
    spec = _read_model(path, DistFile)
    return _with_path(path, lambda: Dist(Support(tuple(spec.support), spec.coords), spec.probs))


def load_hypothesis(path: PathLike) -> Hypothesis:
    spec = _read_model(path, HypothesisFile)
    return _with_path(path, lambda: Hypothesis(Support(tuple(spec.support)), spec.values, spec.range_bound))


def load_dists(paths: Sequence[PathLike]) -> List[Dist]:
    return [load_dist(p) for p in paths]


def load_hypotheses(paths: Sequence[PathLike]) -> List[Hypothesis]:
    return [load_hypothesis(p) for p in paths]


def parse_weights(text: str) -> SimplexWeights:
    """Comma-separated simplex weights, e.g. "0.3,0.7"."""
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputValidationError(f"cannot parse weights from {text!r}") from None
    return SimplexWeights(values)


def dist_to_dict(d: Dist) -> dict:
    data = {"support": list(d.support.points), "probs": [float(v) for v in d.probs]}
    if d.support.coords is not None:
        data["coords"] = d.support.coords.tolist()
    return data


def hypothesis_to_dict(h: Hypothesis) -> dict:
    return {
        "support": list(h.support.points),
        "values": [float(v) for v in h.values],
        "range_bound": h.range_bound,
    }


def to_jsonable(obj: Any) -> Any:
    """Plain JSON data for result models and the core types they carry."""
    if isinstance(obj, BaseModel):
        return to_jsonable(obj.model_dump(by_alias=True))
    if isinstance(obj, dict):
        return {key: to_jsonable(value) for key, value in obj.items()}
    if isinstance(obj, Dist):
        return dist_to_dict(obj)
    if isinstance(obj, Hypothesis):
        return hypothesis_to_dict(obj)
    if isinstance(obj, SimplexWeights):
        return obj.tolist()
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(o) for o in obj]
    return obj


def dumps(obj: Any) -> str:
    """JSON text; infinite values are written as Infinity."""
    return json.dumps(to_jsonable(obj))


def write_json(obj: Any, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj) + "\n")
    logger.info(f"wrote {path}")

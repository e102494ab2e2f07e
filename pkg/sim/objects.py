"""Parametric object library: training shapes and the Easy/Hard held-out sets."""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
from pydantic import ValidationError
from scipy.spatial import ConvexHull, QhullError

from errors import InvalidObjectError, MissingInputError
from models.schemas import ObjectSpec
from sim.geometry import is_convex_ccw, points_in_convex_polygon, polygon_centroid, signed_area

logger = logging.getLogger(__name__)

LIBRARY_SEED = 20180530
MIN_AREA = 1e-8


def validate_object_spec(spec: ObjectSpec) -> ObjectSpec:
    poly = np.asarray(spec.vertices, dtype=np.float64)
    if poly.ndim != 2 or poly.shape[0] < 3 or poly.shape[1] != 2:
        raise InvalidObjectError(f"{spec.name}: footprint needs at least 3 two-dimensional vertices")
    if not np.all(np.isfinite(poly)):
        raise InvalidObjectError(f"{spec.name}: non-finite vertex")
    if signed_area(poly) <= MIN_AREA:
        raise InvalidObjectError(f"{spec.name}: footprint must have positive counter-clockwise area")
    if not is_convex_ccw(poly):
        raise InvalidObjectError(f"{spec.name}: footprint is not convex")
    cx, cy, cz = spec.com
    if not (0.0 <= cz <= spec.height):
        raise InvalidObjectError(f"{spec.name}: com.z={cz} outside [0, {spec.height}]")
    if not points_in_convex_polygon(np.array([[cx, cy]]), poly, eps=1e-12)[0]:
        raise InvalidObjectError(f"{spec.name}: center of mass lies outside the footprint")
    return spec


def _centered(poly: np.ndarray) -> np.ndarray:
    return poly - polygon_centroid(poly)


def _box(rng: np.random.Generator, radius: float) -> np.ndarray:
    angle = rng.uniform(math.radians(25), math.radians(65))
    a, b = radius * math.cos(angle), radius * math.sin(angle)
    return np.array([[a, -b], [a, b], [-a, b], [-a, -b]])


def _regular(n: int, radius: float, phase: float = 0.0) -> np.ndarray:
    angles = phase + 2.0 * math.pi * np.arange(n) / n
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def _triangle(rng: np.random.Generator, radius: float, irregular: bool) -> np.ndarray:
    if not irregular:
        return _regular(3, radius)
    angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, size=3))
    # keep every interior gap reasonable so the triangle is not a sliver
    while np.min(np.diff(np.append(angles, angles[0] + 2.0 * math.pi))) < 1.2:
        angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, size=3))
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def _hull(rng: np.random.Generator, radius: float) -> np.ndarray:
    """Irregular convex polygon: jittered points on an ellipse, kept in angular order."""
    n = int(rng.integers(5, 9))
    base = np.sort(rng.uniform(0.0, 2.0 * math.pi, size=n))
    aspect = rng.uniform(0.55, 1.0)
    pts = radius * np.column_stack([np.cos(base), aspect * np.sin(base)])
    return _convex_hull(pts)


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull vertices, collinear boundary points dropped."""
    points = np.asarray(points, dtype=np.float64)
    try:
        return points[ConvexHull(points).vertices]
    except QhullError as e:
        raise InvalidObjectError(f"footprint has no 2-D hull: {e}") from e


def _make_object(
    rng: np.random.Generator,
    name: str,
    kind: str,
    radius_range: Sequence[float],
    height_range: Sequence[float],
    mass_range: Sequence[float],
    friction_range: Sequence[float],
    compliance_range: Sequence[float],
    com_shift_max: float,
) -> ObjectSpec:
    radius = rng.uniform(*radius_range)
    if kind == "box":
        poly = _box(rng, radius)
    elif kind == "hexagon":
        poly = _regular(6, radius, phase=rng.uniform(0.0, math.pi / 3))
    elif kind == "triangle":
        poly = _triangle(rng, radius, irregular=False)
    elif kind == "irregular_triangle":
        poly = _triangle(rng, radius, irregular=True)
    elif kind == "hull":
        poly = _hull(rng, radius)
    else:
        raise InvalidObjectError(f"unknown shape kind '{kind}'")
    poly = _centered(_convex_hull(poly))

    height = rng.uniform(*height_range)
    # COM shifted part of the way toward a random vertex
    vertex = poly[int(rng.integers(len(poly)))]
    shift = rng.uniform(0.0, com_shift_max)
    com = (float(shift * vertex[0]), float(shift * vertex[1]), float(rng.uniform(0.3, 0.7) * height))

    spec = ObjectSpec(
        name=name,
        vertices=[(float(x), float(y)) for x, y in poly],
        height=float(height),
        mass=float(rng.uniform(*mass_range)),
        com=com,
        friction=float(rng.uniform(*friction_range)),
        compliance=float(rng.uniform(*compliance_range)),
    )
    return validate_object_spec(spec)


def build_library(seed: int = LIBRARY_SEED) -> Dict[str, List[ObjectSpec]]:
    """Training shapes and two held-out sets from disjoint parameter ranges.

    Training footprints have circumradius 18-32 mm; Easy test objects are
    larger (34-40 mm), regular and grippy; Hard test objects are small
    (11-16.5 mm), irregular, slippery, compliant and heavy.
    """
    rng = np.random.default_rng(seed)
    train_kinds = ["box", "triangle", "hexagon", "hull"]
    train = [
        _make_object(
            rng, f"train_{i:02d}_{train_kinds[i % 4]}", train_kinds[i % 4],
            radius_range=(0.018, 0.032), height_range=(0.04, 0.12), mass_range=(0.01, 0.4),
            friction_range=(0.2, 0.8), compliance_range=(0.0, 0.6), com_shift_max=0.4,
        )
        for i in range(24)
    ]
    easy_kinds = ["box", "hexagon"]
    easy = [
        _make_object(
            rng, f"easy_{i:02d}_{easy_kinds[i % 2]}", easy_kinds[i % 2],
            radius_range=(0.034, 0.040), height_range=(0.05, 0.14), mass_range=(0.02, 0.2),
            friction_range=(0.6, 0.9), compliance_range=(0.0, 0.2), com_shift_max=0.1,
        )
        for i in range(6)
    ]
    hard_kinds = ["hull", "irregular_triangle"]
    hard = [
        _make_object(
            rng, f"hard_{i:02d}_{hard_kinds[i % 2]}", hard_kinds[i % 2],
            radius_range=(0.011, 0.0165), height_range=(0.03, 0.10), mass_range=(0.15, 0.4),
            friction_range=(0.15, 0.3), compliance_range=(0.4, 0.8), com_shift_max=0.4,
        )
        for i in range(6)
    ]
    return {"train": train, "easy": easy, "hard": hard}


_LIBRARY_CACHE: Dict[str, List[ObjectSpec]] = {}


def object_sets() -> Dict[str, List[ObjectSpec]]:
    if not _LIBRARY_CACHE:
        library = build_library()
        _LIBRARY_CACHE.update(library)
        _LIBRARY_CACHE["test"] = library["easy"] + library["hard"]
        _LIBRARY_CACHE["all"] = library["train"] + library["easy"] + library["hard"]
    return _LIBRARY_CACHE


def save_library(path: Path, objects: Sequence[ObjectSpec]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = [obj.model_dump(mode="json") for obj in objects]
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")


def load_library(path: Path) -> List[ObjectSpec]:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"object library not found: {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(payload, list):
        raise InvalidObjectError(f"{path}: object library must be a JSON array")
    objects = []
    for entry in payload:
        try:
            spec = ObjectSpec.model_validate(entry)
        except ValidationError as e:
            raise InvalidObjectError(f"{path}: {e.errors()[0]['msg']}") from e
        objects.append(validate_object_spec(spec))
    logger.info(f"Loaded {len(objects)} objects from {path}")
    return objects


def resolve_object_set(name_or_path: str) -> List[ObjectSpec]:
    """A built-in set name (train, easy, hard, test, all) or a library JSON file."""
    sets = object_sets()
    if name_or_path in sets:
        return list(sets[name_or_path])
    return load_library(Path(name_or_path))


def find_object(name: str, objects: Sequence[ObjectSpec] = ()) -> ObjectSpec:
    for spec in list(objects) or object_sets()["all"]:
        if spec.name == name:
            return spec
    raise MissingInputError(f"unknown object '{name}'")

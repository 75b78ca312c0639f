"""On-disk formats: scene documents, pose files, PPM/PFM images, match dumps.

All formats are text-based or bit-exact binary so repeated runs with the
same inputs produce byte-identical files. Poses are written with 17
significant digits and round-trip exactly through the parser.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .geometry import Pose
from .matching import MatchSet
from .rendering import Scene, Splat


class SceneFormatError(ValueError):
    """Malformed scene document; the message names the offending field."""


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise SceneFormatError(f"{where}.{key}: missing required field")
    return doc[key]


def save_scene(scene: Scene, path) -> None:
    doc = {
        "splats": [
            {
                "center": s.center.tolist(),
                "scale": s.scale.tolist(),
                "orientation_wxyz": s.orientation_wxyz.tolist(),
                "color": s.color.tolist(),
                "opacity": s.opacity,
            }
            for s in scene.splats
        ],
        "background_color": np.asarray(scene.background_color).tolist(),
    }
    if scene.trajectory is not None:
        doc["trajectory"] = [p.matrix.tolist() for p in scene.trajectory]
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_scene(path) -> Scene:
    if not os.path.exists(path):
        raise SceneFormatError(f"scene file not found: {path}")
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise SceneFormatError(f"scene file {path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise SceneFormatError("scene document: expected a mapping at top level")
    splats = []
    for i, raw in enumerate(_require(doc, "splats", "scene")):
        where = f"splats[{i}]"
        try:
            splats.append(Splat(
                center=_require(raw, "center", where),
                scale=_require(raw, "scale", where),
                orientation_wxyz=_require(raw, "orientation_wxyz", where),
                color=_require(raw, "color", where),
                opacity=_require(raw, "opacity", where),
            ))
        except SceneFormatError:
            raise
        except (ValueError, TypeError) as e:
            raise SceneFormatError(f"{where}: {e}") from e
    try:
        bg = _require(doc, "background_color", "scene")
        trajectory = None
        if "trajectory" in doc:
            trajectory = [Pose.from_matrix(m) for m in doc["trajectory"]]
        return Scene(splats=splats, background_color=bg, trajectory=trajectory)
    except SceneFormatError:
        raise
    except (ValueError, TypeError) as e:
        raise SceneFormatError(f"scene: {e}") from e


POSE_HEADER = "# camera-to-world pose, row-major 4x4, +x right / +y down / +z forward"


def save_pose_txt(pose: Pose, path) -> None:
    with open(path, "w") as f:
        f.write(POSE_HEADER + "\n")
        for row in pose.matrix:
            f.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_pose_txt(path) -> Pose:
    values = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            values.extend(float(tok) for tok in line.split())
    if len(values) != 16:
        raise ValueError(f"pose file {path}: expected 16 numbers, got {len(values)}")
    return Pose.from_matrix(np.array(values).reshape(4, 4))


def write_ppm(color: np.ndarray, path) -> None:
    """Binary P6 portable pixmap from a float [0, 1] HxWx3 buffer."""
    arr = np.asarray(color, dtype=np.float64)
    h, w, _ = arr.shape
    data = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P6":
            raise ValueError(f"{path}: not a binary PPM (P6) file")
        fields = []
        while len(fields) < 3:
            line = f.readline()
            if not line:
                raise ValueError(f"{path}: truncated PPM header")
            line = line.split(b"#")[0]
            fields.extend(int(t) for t in line.split())
        w, h, maxval = fields
        data = np.frombuffer(f.read(w * h * 3), dtype=np.uint8)
    return data.reshape(h, w, 3).astype(np.float64) / maxval


def write_pfm(depth: np.ndarray, path) -> None:
    """Grayscale portable float map; negative scale marks little endian.

    Rows are stored bottom-up per the format convention. Infinities are
    preserved, so the no-hit depth sentinel survives a round trip.
    """
    arr = np.asarray(depth, dtype=np.float32)
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(arr[::-1].tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"Pf":
            raise ValueError(f"{path}: not a grayscale PFM file")
        w, h = (int(t) for t in f.readline().split())
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(w * h * 4), dtype=dtype)
    return data.reshape(h, w)[::-1].astype(np.float32)


def save_matches_txt(matches: MatchSet, path) -> None:
    """One pair per line: uq_x uq_y ur_x ur_y score."""
    with open(path, "w") as f:
        f.write("# uq_x uq_y ur_x ur_y score\n")
        for i in range(len(matches)):
            f.write(f"{matches.query_px[i, 0]:.17g} {matches.query_px[i, 1]:.17g} "
                    f"{matches.rendered_px[i, 0]:.17g} {matches.rendered_px[i, 1]:.17g} "
                    f"{matches.scores[i]:.17g}\n")


def load_matches_txt(path) -> MatchSet:
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(t) for t in line.split()])
    if not rows:
        return MatchSet(np.empty((0, 2)), np.empty((0, 2)), np.empty(0))
    arr = np.array(rows)
    return MatchSet(arr[:, 0:2], arr[:, 2:4], arr[:, 4])


def dump_json(doc, path) -> None:
    """Deterministic JSON: sorted keys, fixed separators."""
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")

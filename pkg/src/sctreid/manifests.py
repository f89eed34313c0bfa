"""Dataset manifests and the single-camera-training (SCT) constraint.

A manifest is a JSON-lines file: a header line with counts and mode, then one
sample per line carrying id, identity, camera, domain and either an inline
feature vector or a path to an .npy array (image mode). Labels are densified
on load; the original-to-dense maps are kept on the manifest.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from sctreid.errors import DataError

MANIFEST_VERSION = 1


@dataclass
class PersonSample:
    """One observation: raw input, identity label, camera label, domain tag."""

    sample_id: str
    input: np.ndarray
    identity: int
    camera: int
    domain: str  # "source" | "target"


@dataclass
class DatasetManifest:
    samples: list
    num_identities: int
    num_cameras: int
    domain: str
    mode: str  # "feature" | "image"
    feature_dim: int = 0            # width of inline features (feature mode)
    image_shape: tuple = ()         # (H, W, C) for image mode
    sct: bool = False               # declared flag; verified by validate_sct
    identity_map: dict = field(default_factory=dict)  # original -> dense
    camera_map: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    def identities(self):
        return np.array([s.identity for s in self.samples], dtype=np.int64)

    def cameras(self):
        return np.array([s.camera for s in self.samples], dtype=np.int64)

    def inputs(self):
        return np.stack([s.input for s in self.samples])

    def equals(self, other):
        """Structural equality including sample inputs (exact)."""
        if (self.num_identities, self.num_cameras, self.domain, self.mode,
                self.feature_dim, tuple(self.image_shape), self.sct) != (
                other.num_identities, other.num_cameras, other.domain,
                other.mode, other.feature_dim, tuple(other.image_shape),
                other.sct):
            return False
        if len(self.samples) != len(other.samples):
            return False
        for a, b in zip(self.samples, other.samples):
            if (a.sample_id, a.identity, a.camera, a.domain) != (
                    b.sample_id, b.identity, b.camera, b.domain):
                return False
            if a.input.shape != b.input.shape or not np.array_equal(a.input, b.input):
                return False
        return True


@dataclass
class SCTConstraintReport:
    is_sct: bool
    violating_identity_ids: list
    cross_camera_positive_pairs: int

    def summary(self):
        if self.is_sct:
            return "SCT constraint holds: no identity appears under more than one camera"
        return (f"SCT constraint violated by {len(self.violating_identity_ids)} "
                f"identities ({self.cross_camera_positive_pairs} cross-camera "
                f"positive pairs)")


def validate_sct(manifest):
    """Report every identity seen under two or more cameras.

    Pure reporting: a violating manifest is not an error here; callers that
    require the constraint (the trainer) reject on is_sct == False.
    """
    cams_of = {}
    for s in manifest.samples:
        cams_of.setdefault(s.identity, set()).add(s.camera)
    violating = sorted(y for y, cams in cams_of.items() if len(cams) > 1)

    pairs = 0
    by_identity = {}
    for s in manifest.samples:
        by_identity.setdefault(s.identity, []).append(s.camera)
    for y in violating:
        cams = by_identity[y]
        same_cam = sum(c1 == c2 for i, c1 in enumerate(cams) for c2 in cams[i + 1:])
        total = len(cams) * (len(cams) - 1) // 2
        pairs += total - same_cam
    return SCTConstraintReport(not violating, violating, pairs)


def _densify(values):
    """Order-preserving relabeling of sorted-unique values to 0..n-1."""
    uniq = sorted(set(values))
    mapping = {v: i for i, v in enumerate(uniq)}
    return mapping


def build_manifest(samples, domain, mode, feature_dim=0, image_shape=(), sct=False):
    """Assemble a manifest from already-dense samples and check invariants."""
    if not samples:
        raise DataError("empty manifest")
    seen = set()
    for s in samples:
        if s.sample_id in seen:
            raise DataError(f"duplicate sample_id '{s.sample_id}'")
        seen.add(s.sample_id)
    ids = sorted({s.identity for s in samples})
    cams = sorted({s.camera for s in samples})
    if ids != list(range(len(ids))) or cams != list(range(len(cams))):
        raise DataError("labels must be dense; use load_manifest to densify")
    return DatasetManifest(
        samples=list(samples), num_identities=len(ids), num_cameras=len(cams),
        domain=domain, mode=mode, feature_dim=feature_dim,
        image_shape=tuple(image_shape), sct=sct)


def save_manifest(manifest, path):
    """Write JSON-lines: header first, then one line per sample.

    Image-mode inputs go to .npy files in a sibling '<name>_data' directory.
    """
    path = str(path)
    data_dir = None
    if manifest.mode == "image":
        data_dir = os.path.splitext(path)[0] + "_data"
        os.makedirs(data_dir, exist_ok=True)
    header = {
        "kind": "header", "version": MANIFEST_VERSION,
        "domain": manifest.domain, "mode": manifest.mode,
        "num_identities": manifest.num_identities,
        "num_cameras": manifest.num_cameras,
        "sct": manifest.sct,
    }
    if manifest.mode == "feature":
        header["feature_dim"] = manifest.feature_dim
    else:
        header["image_shape"] = list(manifest.image_shape)
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for s in manifest.samples:
            row = {"id": s.sample_id, "identity": int(s.identity),
                   "camera": int(s.camera), "domain": s.domain}
            if manifest.mode == "feature":
                row["feature"] = [float(v) for v in s.input]
            else:
                rel = os.path.join(os.path.basename(data_dir), s.sample_id + ".npy")
                np.save(os.path.join(data_dir, s.sample_id + ".npy"),
                        s.input.astype(np.float32))
                row["path"] = rel
            fh.write(json.dumps(row) + "\n")


def load_manifest(path):
    """Load and validate a manifest; densify sparse labels, record the maps."""
    path = str(path)
    if not os.path.exists(path):
        raise DataError(f"manifest not found: {path}")
    with open(path) as fh:
        lines = [ln for ln in (l.strip() for l in fh) if ln]
    if not lines:
        raise DataError("empty manifest")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest header does not parse: {exc}") from exc
    if header.get("kind") != "header":
        raise DataError("first line must be the manifest header")
    mode = header.get("mode")
    if mode not in ("feature", "image"):
        raise DataError(f"unknown manifest mode {mode!r}")
    domain = header.get("domain")
    if domain not in ("source", "target"):
        raise DataError(f"unknown manifest domain {domain!r}")
    feature_dim = int(header.get("feature_dim", 0))
    image_shape = tuple(header.get("image_shape", ()))

    raw = []
    seen_ids = set()
    base_dir = os.path.dirname(os.path.abspath(path))
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {lineno} does not parse: {exc}") from exc
        for key in ("id", "identity", "camera", "domain"):
            if key not in row:
                raise DataError(f"line {lineno}: missing field '{key}'")
        sid = str(row["id"])
        if sid in seen_ids:
            raise DataError(f"duplicate sample_id '{sid}'")
        seen_ids.add(sid)
        if row["domain"] != domain:
            raise DataError(f"line {lineno}: sample domain {row['domain']!r} "
                            f"differs from header domain {domain!r}")
        if mode == "feature":
            if "feature" not in row:
                raise DataError(f"line {lineno}: feature mode needs an inline feature")
            arr = np.asarray(row["feature"], dtype=np.float32)
            if arr.ndim != 1 or (feature_dim and arr.shape[0] != feature_dim):
                raise DataError(
                    f"line {lineno}: feature shape {arr.shape} does not match "
                    f"declared width {feature_dim}")
        else:
            if "path" not in row:
                raise DataError(f"line {lineno}: image mode needs a 'path' field")
            arr = np.load(os.path.join(base_dir, row["path"])).astype(np.float32)
            if image_shape and tuple(arr.shape) != image_shape:
                raise DataError(
                    f"line {lineno}: image shape {arr.shape} does not match "
                    f"declared shape {image_shape}")
        raw.append((sid, arr, int(row["identity"]), int(row["camera"])))
    if not raw:
        raise DataError("empty manifest")

    id_map = _densify([r[2] for r in raw])
    cam_map = _densify([r[3] for r in raw])
    if "num_identities" in header and header["num_identities"] != len(id_map):
        raise DataError(
            f"header declares {header['num_identities']} identities, "
            f"found {len(id_map)}")
    if "num_cameras" in header and header["num_cameras"] != len(cam_map):
        raise DataError(
            f"header declares {header['num_cameras']} cameras, found {len(cam_map)}")

    samples = [PersonSample(sid, arr, id_map[y], cam_map[c], domain)
               for sid, arr, y, c in raw]
    return DatasetManifest(
        samples=samples, num_identities=len(id_map), num_cameras=len(cam_map),
        domain=domain, mode=mode, feature_dim=feature_dim,
        image_shape=image_shape, sct=bool(header.get("sct", False)),
        identity_map=id_map, camera_map=cam_map)


def intra_camera_classes(manifest):
    """Dense class index over (camera, identity) pairs, plus per-sample map.

    Returns (class_of: sample_id -> int, num_classes). Under SCT each class
    is one identity seen by one camera; the index exists for any manifest.
    """
    pairs = sorted({(s.camera, s.identity) for s in manifest.samples})
    index = {pair: i for i, pair in enumerate(pairs)}
    class_of = {s.sample_id: index[(s.camera, s.identity)] for s in manifest.samples}
    return class_of, len(pairs)


def joint_camera_index(camera, domain, num_source_cameras):
    """Joint camera label space: source cameras first, then target cameras."""
    return camera if domain == "source" else num_source_cameras + camera

"""Shape containers, surface sampling, unit normalization and Chamfer distance.

Point clouds and triangle meshes are plain numpy containers. The Chamfer
kernel here is the scalar (non-differentiable) one used for evaluation and
dataset preparation; the differentiable counterpart for training lives in
``shapestyle.losses``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


class GeometryError(ValueError):
    """Invalid shape data or a geometric precondition violation."""


class PointCloud:
    """An ordered set of N >= 1 finite 3D points, shape (N, 3)."""

    __slots__ = ("points",)

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise GeometryError("point cloud must be a non-empty (N, 3) array")
        if not np.isfinite(pts).all():
            raise GeometryError("point cloud contains non-finite coordinates")
        self.points = pts

    def __len__(self):
        return self.points.shape[0]

    def __repr__(self):
        return f"PointCloud({len(self)} points)"


class TriangleMesh:
    """Triangle mesh: (V, 3) float vertices and (F, 3) integer faces.

    Faces are zero-based index triples. Construction rejects out-of-range or
    repeated indices and fully degenerate surfaces (total area zero).
    """

    __slots__ = ("vertices", "faces")

    def __init__(self, vertices, faces):
        verts = np.asarray(vertices, dtype=np.float64)
        tris = np.asarray(faces, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 3 or verts.shape[0] < 1:
            raise GeometryError("vertices must be a non-empty (V, 3) array")
        if not np.isfinite(verts).all():
            raise GeometryError("mesh contains non-finite vertices")
        if tris.ndim != 2 or tris.shape[1] != 3 or tris.shape[0] < 1:
            raise GeometryError("faces must be a non-empty (F, 3) array")
        if tris.min() < 0 or tris.max() >= verts.shape[0]:
            raise GeometryError("face index out of range")
        if (
            (tris[:, 0] == tris[:, 1])
            | (tris[:, 1] == tris[:, 2])
            | (tris[:, 0] == tris[:, 2])
        ).any():
            raise GeometryError("face with repeated vertex index")
        self.vertices = verts
        self.faces = tris
        if triangle_areas(self).sum() <= 0.0:
            raise GeometryError("degenerate surface")

    def __repr__(self):
        return f"TriangleMesh({self.vertices.shape[0]} verts, {self.faces.shape[0]} faces)"


@dataclass(frozen=True)
class NormalizationTransform:
    """Centering/scaling map p -> (p - center) / scale and its inverse."""

    center: np.ndarray
    scale: float

    def apply(self, points):
        return (np.asarray(points, dtype=np.float64) - self.center) / self.scale

    def invert(self, points):
        return np.asarray(points, dtype=np.float64) * self.scale + self.center


def triangle_areas(mesh):
    """Per-face areas, shape (F,)."""
    v = mesh.vertices
    a, b, c = v[mesh.faces[:, 0]], v[mesh.faces[:, 1]], v[mesh.faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def sample_surface(mesh, n, seed=0):
    """Draw n points uniformly from the surface of a triangle mesh.

    Faces are chosen with probability proportional to area, then a uniform
    barycentric point is drawn on each chosen face. Deterministic per seed.
    """
    if n < 1:
        raise GeometryError("sample count must be >= 1")
    areas = triangle_areas(mesh)
    total = areas.sum()
    if total <= 0.0:
        raise GeometryError("degenerate surface")
    rng = np.random.default_rng(seed)
    face_idx = rng.choice(len(areas), size=n, p=areas / total)
    r1 = rng.random(n)
    r2 = rng.random(n)
    # uniform barycentric coordinates via the sqrt trick
    su1 = np.sqrt(r1)
    u = 1.0 - su1
    v = su1 * (1.0 - r2)
    w = su1 * r2
    tri = mesh.vertices[mesh.faces[face_idx]]  # (n, 3, 3)
    pts = u[:, None] * tri[:, 0] + v[:, None] * tri[:, 1] + w[:, None] * tri[:, 2]
    return PointCloud(pts)


def normalize_unit(cloud):
    """Center a cloud at the origin and scale its farthest point to radius 1.

    Returns the normalized cloud and the transform that was applied; the
    transform's ``invert`` recovers the original coordinates.
    """
    pts = cloud.points
    center = pts.mean(axis=0)
    radius = float(np.linalg.norm(pts - center, axis=1).max())
    if radius <= 0.0:
        raise GeometryError("zero extent")
    transform = NormalizationTransform(center=center, scale=radius)
    return PointCloud(transform.apply(pts)), transform


def chamfer(p, q):
    """Bidirectional Chamfer distance between two clouds.

    Mean over p of the squared distance to the nearest q point, plus the
    same with the roles swapped. Exact nearest neighbors via a k-d tree.
    """
    a = p.points if isinstance(p, PointCloud) else np.asarray(p, dtype=np.float64)
    b = q.points if isinstance(q, PointCloud) else np.asarray(q, dtype=np.float64)
    d_ab, _ = cKDTree(b).query(a, k=1)
    d_ba, _ = cKDTree(a).query(b, k=1)
    return float(np.mean(d_ab**2) + np.mean(d_ba**2))


# --- ASCII OBJ / XYZ interchange -------------------------------------------
#
# OBJ subset: only "v x y z" and "f i j k" (1-based) lines; anything else is
# ignored on read and never written. XYZ: one "x y z" triple per line.


def save_obj(mesh, path):
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for i, j, k in mesh.faces + 1:
            fh.write(f"f {i} {j} {k}\n")


def load_obj(path):
    verts = []
    faces = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if tokens[0] == "v":
                if len(tokens) != 4:
                    raise GeometryError(f"{path}:{lineno}: malformed vertex line")
                try:
                    verts.append([float(t) for t in tokens[1:]])
                except ValueError:
                    raise GeometryError(f"{path}:{lineno}: malformed vertex line") from None
            elif tokens[0] == "f":
                if len(tokens) != 4:
                    raise GeometryError(f"{path}:{lineno}: expected triangle face")
                try:
                    idx = [int(t) for t in tokens[1:]]
                except ValueError:
                    raise GeometryError(f"{path}:{lineno}: malformed face index") from None
                if min(idx) < 1:
                    raise GeometryError(f"{path}:{lineno}: face index must be >= 1")
                faces.append([i - 1 for i in idx])
            # every other prefix (vn, vt, #, ...) is outside the subset: skip
    if not verts or not faces:
        raise GeometryError(f"{path}: no triangle geometry found")
    try:
        return TriangleMesh(verts, faces)
    except GeometryError as exc:
        raise GeometryError(f"{path}: {exc}") from None


def save_xyz(cloud, path):
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud)
    with open(path, "w") as fh:
        for x, y, z in pts:
            fh.write(f"{x!r} {y!r} {z!r}\n")


def load_xyz(path):
    pts = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 3:
                raise GeometryError(f"{path}:{lineno}: expected 'x y z'")
            try:
                pts.append([float(t) for t in tokens])
            except ValueError:
                raise GeometryError(f"{path}:{lineno}: malformed coordinate") from None
    if not pts:
        raise GeometryError(f"{path}: empty point cloud")
    return PointCloud(pts)

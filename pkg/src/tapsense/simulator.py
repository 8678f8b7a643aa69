"""Heuristic tapping policy executed against a fixed triangle mesh.

The object stands on the base plane (z = 0); the base centerline is the
y axis. Every tap is an arm translation along an approach direction with
the finger joint held at a fixed angle. The first ray hit of the fingertip
path with the mesh stands in for the motor voltage drop; the recorded point
is then recomputed through the hand forward kinematics at the arm pose of
contact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .kinematics import ArmTransform, HandGeometry, fingertip_in_arm, fingertip_in_hand, fingertip_tangent
from .mesh import MeshError, TriMesh, ray_intersect

log = logging.getLogger(__name__)

CM = 100.0


class ObjectNotFound(RuntimeError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    descend_step: float = 0.01
    radius_threshold: float = 0.02
    height_threshold: float = 0.20
    max_height: float = 0.30
    max_taps: int = 300
    lateral_pitch: float = 0.015
    workspace_radius: float = 0.15
    probe_heights: tuple = (0.03, 0.12)
    top_standoff: float = 0.03
    bottom_margin: float = 0.005
    tap_angle: float = 30.0
    edge_finger: int = 3
    contact_tolerance: float = 0.001
    large_scale_factor: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (int, float)) and value <= 0:
                raise ValueError(f"PolicyConfig.{f.name} must be positive, got {value}")

    @classmethod
    def from_config(cls, path) -> "PolicyConfig":
        """Read ``key = value`` lines (SI units); unknown keys are rejected."""
        names = {f.name: f for f in fields(cls)}
        kwargs = {}
        for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = (s.strip() for s in line.partition("="))
            if key not in names:
                raise ValueError(f"{path}:{n}: unknown key {key!r}")
            if key == "probe_heights":
                kwargs[key] = tuple(float(v) for v in value.replace(",", " ").split())
            elif key in ("max_taps", "edge_finger"):
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        return cls(**kwargs)


@dataclass
class TapRecord:
    x: float
    y: float
    z: float
    a: bool
    v: bool
    f: int
    i: int
    side: str = field(default="", compare=False)

    @property
    def point(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class DimensionEstimate:
    height: float
    radius: float


@dataclass
class PolicyRun:
    records: list
    dims: DimensionEstimate
    top_taps: bool
    large_scale: bool
    extent: float


def validate_object(mesh: TriMesh) -> None:
    mesh.check()
    lo, hi = mesh.bounds()
    if lo[2] < -1e-9:
        raise MeshError(f"{mesh.name!r}: vertices below the base plane")
    if not lo[0] <= 0.0 <= hi[0]:
        raise MeshError(f"{mesh.name!r}: object does not cross the base centerline")


def probe_contact(obj: TriMesh, origin, direction, travel):
    """First mesh point hit moving from ``origin`` along unit ``direction`` within ``travel``."""
    direction = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    hit = ray_intersect(obj, origin, direction, travel)
    if hit is None:
        return None
    return np.asarray(origin, dtype=np.float64) + hit[0] * direction


def _perpendicular(d):
    up = np.array([0.0, 0.0, 1.0])
    if abs(d @ up) > 0.9:
        up = np.array([1.0, 0.0, 0.0])
    e = up - (up @ d) * d
    return e / np.linalg.norm(e)


def tap_pose(hand: HandGeometry, finger: int, theta: float, tip_world_m, direction) -> ArmTransform:
    """Arm pose (cm) putting the fingertip at ``tip_world_m`` moving along ``direction``."""
    tip = fingertip_in_hand(hand, finger, theta)
    g = fingertip_tangent(hand, finger, theta)
    n = (tip - hand.joint_origin(finger)) / hand.link_len
    d = np.asarray(direction, dtype=np.float64)
    e = _perpendicular(d)
    H = np.column_stack([g, n, np.cross(g, n)])
    W = np.column_stack([d, e, np.cross(d, e)])
    R = W @ H.T
    return ArmTransform.from_parts(R, np.asarray(tip_world_m) * CM - R @ tip)


class _Tapper:
    """Executes approach motions and numbers the resulting records."""

    def __init__(self, obj, cfg, hand):
        self.obj, self.cfg, self.hand = obj, cfg, hand
        self.records = []
        self.valid = 0

    def full(self):
        return self.valid >= self.cfg.max_taps

    def tap(self, finger, start, direction, travel, side):
        theta = self.cfg.tap_angle
        direction = np.asarray(direction, dtype=np.float64)
        pose = tap_pose(self.hand, finger, theta, start, direction)
        hit = probe_contact(self.obj, start, direction, travel)
        moved = travel if hit is None else float(np.dot(hit - np.asarray(start), direction))
        contact_pose = ArmTransform.from_parts(pose.rotation, pose.translation + direction * moved * CM)
        x, y, z = fingertip_in_arm(contact_pose, fingertip_in_hand(self.hand, finger, theta)) / CM
        rec = TapRecord(float(x), float(y), float(z), hit is not None, hit is not None, finger, len(self.records), side)
        self.records.append(rec)
        self.valid += rec.v
        return rec


def _estimate(tapper: _Tapper) -> DimensionEstimate:
    cfg = tapper.cfg
    far = cfg.workspace_radius
    sweep = far + 0.01
    heights = sorted(cfg.probe_heights)
    touched = []
    for k, z in enumerate(heights):
        rec = tapper.tap(1 + k % 4, (-far, 0.0, z), (1.0, 0.0, 0.0), sweep, "probe")
        touched.append(rec.v)
    if touched[-1]:
        start = cfg.max_height
    else:
        # lowest probe height that found nothing bounds the object from above
        start = min(z for z, hit in zip(heights, touched) if not hit)

    n_steps = int(np.floor(start / cfg.descend_step + 1e-9))
    for k in range(n_steps):
        z = start - k * cfg.descend_step
        if z <= 0:
            break
        rec = tapper.tap(cfg.edge_finger, (-far, 0.0, z), (1.0, 0.0, 0.0), sweep, "edge")
        if rec.v:
            return DimensionEstimate(height=rec.z, radius=abs(rec.x))
    raise ObjectNotFound(f"no contact with {tapper.obj.name!r} above the base")


def estimate_dimensions(obj: TriMesh, cfg: PolicyConfig = PolicyConfig(), hand: HandGeometry = HandGeometry()):
    """Side probes at two heights, then edge exploration descending from above."""
    validate_object(obj)
    return _estimate(_Tapper(obj, cfg, hand))


def _grid(half_extent, pitch):
    n = int(np.floor(2 * half_extent / pitch + 1e-9)) + 1
    span = (n - 1) * pitch
    return -span / 2 + pitch * np.arange(n)


def side_rows(dims: DimensionEstimate, cfg: PolicyConfig):
    """Tap heights for the side sequences, high to low, and the scale flag."""
    large = dims.height > cfg.height_threshold
    pitch = cfg.lateral_pitch * (cfg.large_scale_factor if large else 1.0)
    top = dims.height - cfg.descend_step / 2
    rows = top - pitch * np.arange(int(np.floor((top - cfg.bottom_margin) / pitch + 1e-9)) + 1)
    return rows[rows > 0], large


def explore(obj: TriMesh, cfg: PolicyConfig = PolicyConfig(), hand: HandGeometry = HandGeometry()) -> PolicyRun:
    """Run the full policy and report the plan flags alongside the records."""
    validate_object(obj)
    tapper = _Tapper(obj, cfg, hand)
    dims = _estimate(tapper)
    top_taps = dims.radius > cfg.radius_threshold
    rows, large = side_rows(dims, cfg)
    # tapered objects touch the edge finger near their apex; the side probes
    # see the wider body, so the grids span whichever is larger
    extent = max([dims.radius] + [abs(r.x) for r in tapper.records if r.v and r.side == "probe"])
    lateral = _grid(extent, cfg.lateral_pitch)
    far = cfg.workspace_radius
    finger = 0

    def next_finger():
        nonlocal finger
        finger = finger % 4 + 1
        return finger

    if top_taps:
        z0 = dims.height + cfg.top_standoff
        for x in lateral:
            for y in lateral:
                if tapper.full():
                    break
                tapper.tap(next_finger(), (x, y, z0), (0.0, 0.0, -1.0), z0, "top")
    for z in rows:
        for x in lateral:
            if tapper.full():
                break
            tapper.tap(next_finger(), (x, -far, z), (0.0, 1.0, 0.0), 2 * far, "left")
    for z in rows:
        for y in lateral:
            if tapper.full():
                break
            tapper.tap(next_finger(), (far, y, z), (-1.0, 0.0, 0.0), 2 * far, "back")
    log.debug("%s: %d records, %d valid", obj.name, len(tapper.records), tapper.valid)
    return PolicyRun(tapper.records, dims, top_taps, large, extent)


def run_policy(obj: TriMesh, cfg: PolicyConfig = PolicyConfig(), hand: HandGeometry = HandGeometry()):
    return explore(obj, cfg, hand).records


def add_contact_noise(records, sigma=0.002, seed=0):
    """Copies of ``records`` with isotropic Gaussian noise on valid contact points."""
    rng = np.random.default_rng(seed)
    out = []
    for r in records:
        dx, dy, dz = rng.normal(0.0, sigma, 3) if r.v else (0.0, 0.0, 0.0)
        out.append(TapRecord(r.x + dx, r.y + dy, r.z + dz, r.a, r.v, r.f, r.i, r.side))
    return out


def format_tap(r: TapRecord) -> str:
    return f"{float(r.x)!r} {float(r.y)!r} {float(r.z)!r} {int(r.a)} {int(r.v)} {r.f} {r.i}"


def export_taps(records, path) -> None:
    """One ``x y z a v f i`` line per record."""
    text = "".join(format_tap(r) + "\n" for r in records)
    Path(path).write_text(text)

"""Site geometry: access points, walls, and ground-truth device trajectories.

Everything downstream (measurement synthesis, dead-reckoning references,
evaluation) derives from the types in this module. All geometry is 2-D and
in meters. Walls are radio obstructions only; simulated walkers may cross
them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "AccessPoint",
    "ConfigurationError",
    "Scenario",
    "SiteConfig",
    "TruePath",
    "classify_link",
    "default_scenario",
    "load_scenario",
    "random_walk_positions",
    "sample_true_trajectory",
    "scenario_to_dict",
]


class ConfigurationError(ValueError):
    """Invalid site, path, or channel configuration."""


@dataclass(frozen=True, eq=False)
class AccessPoint:
    """A fixed responder with a known position."""

    id: int
    position: np.ndarray  # shape (2,), meters

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        if self.position.shape != (2,) or not np.all(np.isfinite(self.position)):
            raise ConfigurationError(f"AP {self.id}: position must be a finite 2-vector")


@dataclass(frozen=True, eq=False)
class SiteConfig:
    """Rectangular site with access points and optional wall polylines.

    ``walls`` is a list of polylines (each an (n, 2) array, n >= 2); a link
    is non-line-of-sight when the device-AP segment crosses any wall
    segment. ``nlos_override_prob`` switches the dataset generator to
    drawing NLOS per link at that probability instead of using the walls
    (ablation aid); geometric classification itself stays deterministic.
    """

    width: float
    height: float
    aps: tuple
    walls: tuple = ()
    nlos_override_prob: Optional[float] = None

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ConfigurationError("site dimensions must be positive")
        ids = [ap.id for ap in self.aps]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("AP ids must be unique within a site")
        for ap in self.aps:
            x, y = ap.position
            if not (0.0 <= x <= self.width and 0.0 <= y <= self.height):
                raise ConfigurationError(f"AP {ap.id} lies outside the site rectangle")
        walls = tuple(np.asarray(w, dtype=float) for w in self.walls)
        for w in walls:
            if w.ndim != 2 or w.shape[0] < 2 or w.shape[1] != 2:
                raise ConfigurationError("each wall must be an (n, 2) polyline, n >= 2")
        object.__setattr__(self, "walls", walls)
        object.__setattr__(self, "aps", tuple(self.aps))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.width / 2.0, self.height / 2.0])

    def ap_positions(self) -> np.ndarray:
        return np.array([ap.position for ap in self.aps])


@dataclass(frozen=True, eq=False)
class TruePath:
    """Ground-truth trajectory: waypoints walked at constant speed."""

    waypoints: np.ndarray  # (n, 2) meters
    speed: float = 1.2  # m/s
    ranging_interval: float = 1.0  # s between ranging procedures

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[0] < 1 or wp.shape[1] != 2:
            raise ConfigurationError("waypoints must be a non-empty (n, 2) array")
        if not np.all(np.isfinite(wp)):
            raise ConfigurationError("waypoints must be finite")
        deltas = np.linalg.norm(np.diff(wp, axis=0), axis=1)
        if np.any(deltas == 0.0):
            raise ConfigurationError("consecutive waypoints must be distinct")
        if not self.speed > 0:
            raise ConfigurationError("speed must be positive")
        if not self.ranging_interval > 0:
            raise ConfigurationError("ranging_interval must be positive")
        object.__setattr__(self, "waypoints", wp)


def sample_true_trajectory(path: TruePath) -> np.ndarray:
    """Positions at each ranging instant along the waypoint polyline.

    Points are spaced ``speed * ranging_interval`` of arc length apart,
    starting at the first waypoint; the final waypoint is always included.
    Returns an (K, 2) array with K >= 1.
    """
    wp = path.waypoints
    if wp.shape[0] == 1:
        return wp.copy()
    seg = np.diff(wp, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    step = path.speed * path.ranging_interval

    n_full = int(np.floor(total / step + 1e-12))
    s_values = [k * step for k in range(n_full + 1)]
    if total - s_values[-1] > 1e-12:
        s_values.append(total)

    out = np.empty((len(s_values), 2))
    idx = np.searchsorted(cum, s_values, side="right") - 1
    idx = np.clip(idx, 0, len(seg_len) - 1)
    for row, (s, i) in enumerate(zip(s_values, idx)):
        frac = (s - cum[i]) / seg_len[i]
        out[row] = wp[i] + min(frac, 1.0) * seg[i]
    return out


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, c):
    # c is known collinear with a-b; is it within the bounding box?
    return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and (
        min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
    )


def _segments_intersect(p1, p2, q1, q2) -> bool:
    """True when closed segments p1-p2 and q1-q2 share at least one point."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    if d1 == 0 and _on_segment(q1, q2, p1):
        return True
    if d2 == 0 and _on_segment(q1, q2, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, q1):
        return True
    if d4 == 0 and _on_segment(p1, p2, q2):
        return True
    return False


def classify_link(site: SiteConfig, device_pos, ap: AccessPoint) -> str:
    """Classify the device-AP radio link as ``"LOS"`` or ``"NLOS"``.

    Deterministic geometric test: LOS iff the straight segment between the
    device and the AP crosses no wall segment. A zero-length link (device
    at the AP) is LOS.
    """
    p = np.asarray(device_pos, dtype=float)
    q = ap.position
    if p[0] == q[0] and p[1] == q[1]:
        return "LOS"
    for wall in site.walls:
        for k in range(wall.shape[0] - 1):
            if _segments_intersect(p, q, wall[k], wall[k + 1]):
                return "NLOS"
    return "LOS"


def random_walk_positions(
    site: SiteConfig,
    n_steps: int,
    step_length: float,
    rng: np.random.Generator,
    margin: float = 4.0,
    turn_std: float = 0.35,
) -> np.ndarray:
    """Free-walking trajectory: smooth heading random walk bouncing off walls.

    Returns (n_steps, 2) positions, one per ranging instant; used to mimic
    participants moving around the site while data accumulates.
    """
    if n_steps < 2:
        raise ConfigurationError("a walk needs at least 2 steps")
    lo = np.array([margin, margin])
    hi = np.array([site.width - margin, site.height - margin])
    pos = rng.uniform(lo, hi)
    heading = rng.uniform(0.0, 2.0 * np.pi)
    out = np.empty((n_steps, 2))
    out[0] = pos
    for k in range(1, n_steps):
        heading += rng.normal(0.0, turn_std)
        cand = pos + step_length * np.array([np.cos(heading), np.sin(heading)])
        # reflect off the inset boundary
        for d in range(2):
            if cand[d] < lo[d]:
                cand[d] = 2.0 * lo[d] - cand[d]
                heading = np.pi - heading if d == 0 else -heading
            elif cand[d] > hi[d]:
                cand[d] = 2.0 * hi[d] - cand[d]
                heading = np.pi - heading if d == 0 else -heading
        pos = np.clip(cand, lo, hi)
        out[k] = pos
    return out


@dataclass(frozen=True, eq=False)
class Scenario:
    """Parsed scenario file: geometry plus raw channel/PDR parameter dicts."""

    site: SiteConfig
    path: TruePath
    channel: dict = field(default_factory=dict)
    pdr: dict = field(default_factory=dict)


def default_scenario() -> Scenario:
    """Built-in synthetic site: 85 x 55 m office, 10 APs on a 2 x 5 grid.

    The AP grid is inset 5 m from the boundary. Interior walls split the
    floor into three corridor bands with door gaps so a meaningful share of
    links is NLOS. The test path is a serpentine of roughly 520 m.
    """
    width, height = 85.0, 55.0
    xs = np.linspace(5.0, 80.0, 5)
    ys = [5.0, 50.0]
    aps = tuple(
        AccessPoint(id=i + 1, position=np.array([x, y]))
        for i, (y, x) in enumerate((y, x) for y in ys for x in xs)
    )
    walls = (
        [[6.0, 18.0], [38.0, 18.0]],
        [[47.0, 18.0], [79.0, 18.0]],
        [[6.0, 37.0], [38.0, 37.0]],
        [[47.0, 37.0], [79.0, 37.0]],
        [[28.0, 22.0], [28.0, 33.0]],
        [[57.0, 22.0], [57.0, 33.0]],
    )
    sweep_y = [6.0, 13.0, 20.0, 27.0, 34.0, 41.0, 48.0]
    waypoints = []
    for i, y in enumerate(sweep_y):
        xs_pair = (8.0, 77.0) if i % 2 == 0 else (77.0, 8.0)
        waypoints.append([xs_pair[0], y])
        waypoints.append([xs_pair[1], y])
    path = TruePath(waypoints=np.array(waypoints), speed=1.2, ranging_interval=1.0)
    site = SiteConfig(width=width, height=height, aps=aps, walls=walls)
    return Scenario(site=site, path=path)


def load_scenario(path: str) -> Scenario:
    """Read a scenario JSON file.

    Schema: ``{width, height, aps: [{id, x, y}], walls: [[[x, y], ...]],
    path: {waypoints, speed, interval}, channel: {...}, pdr: {...}}``.
    ``channel`` and ``pdr`` are passed through untyped; missing keys fall
    back to the built-in defaults.
    """
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"invalid scenario JSON in {path}: {e}") from e
    try:
        aps = tuple(
            AccessPoint(id=int(a["id"]), position=np.array([a["x"], a["y"]]))
            for a in raw["aps"]
        )
        site = SiteConfig(
            width=float(raw["width"]),
            height=float(raw["height"]),
            aps=aps,
            walls=tuple(raw.get("walls", ())),
            nlos_override_prob=raw.get("nlos_override_prob"),
        )
        p = raw["path"]
        path_cfg = TruePath(
            waypoints=np.array(p["waypoints"], dtype=float),
            speed=float(p.get("speed", 1.2)),
            ranging_interval=float(p.get("interval", 1.0)),
        )
    except (KeyError, TypeError) as e:
        raise ConfigurationError(f"scenario file {path} is missing fields: {e}") from e
    return Scenario(
        site=site,
        path=path_cfg,
        channel=dict(raw.get("channel", {})),
        pdr=dict(raw.get("pdr", {})),
    )


def scenario_to_dict(sc: Scenario) -> dict:
    """Inverse of :func:`load_scenario` for writing the default config."""
    d = {
        "width": sc.site.width,
        "height": sc.site.height,
        "aps": [
            {"id": ap.id, "x": float(ap.position[0]), "y": float(ap.position[1])}
            for ap in sc.site.aps
        ],
        "walls": [np.asarray(w, dtype=float).tolist() for w in sc.site.walls],
        "path": {
            "waypoints": sc.path.waypoints.tolist(),
            "speed": sc.path.speed,
            "interval": sc.path.ranging_interval,
        },
    }
    if sc.site.nlos_override_prob is not None:
        d["nlos_override_prob"] = sc.site.nlos_override_prob
    if sc.channel:
        d["channel"] = sc.channel
    if sc.pdr:
        d["pdr"] = sc.pdr
    return d

"""Static scenario data, grid map and line-of-sight channel generators."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

__all__ = [
    "SPEED_OF_LIGHT",
    "ChannelSet",
    "ConfigError",
    "GridMap",
    "ScenarioConfig",
    "build_grid",
    "channel_set",
    "comm_channel",
    "config_from_json",
    "config_to_json",
    "db_to_linear",
    "dbm_to_watts",
    "linear_to_db",
    "sensing_channel",
    "steering_vector",
    "watts_to_dbm",
]

SPEED_OF_LIGHT = 2.998e8


class ConfigError(ValueError):
    """Invalid or unusable scenario configuration."""


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(lin):
    return 10.0 * np.log10(np.asarray(lin, dtype=float))


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(w):
    return 10.0 * np.log10(np.asarray(w, dtype=float)) + 30.0


def _points(value):
    if value is None:
        return None
    return tuple((float(x), float(y)) for x, y in value)


@dataclass(frozen=True)
class ScenarioConfig:
    """Environment, radio parameters, QoS thresholds and timing (SI units).

    Powers are in watts, gains and thresholds are linear ratios.  When
    ``ue_positions`` is None, ``ue_count`` positions are drawn uniformly
    over the area from ``rng_seed``.
    """

    area_width: float = 1000.0
    area_height: float = 1000.0
    grid_cols: int = 20
    grid_rows: int = 20
    ue_positions: tuple | None = None
    ue_count: int = 6
    sensing_positions: tuple = ((375.0, 175.0), (375.0, 725.0), (775.0, 275.0))
    antenna_count: int = 12
    flight_height: float = 100.0
    carrier_frequency: float = 3e9
    ref_channel_gain: float = 1e-4
    ue_tx_power: float | tuple = float(dbm_to_watts(25.0))
    uav_max_power: float = float(dbm_to_watts(37.0))
    rcs: tuple | complex | float = 1.0
    noise_dl: float = 1e-14
    noise_ul: float = 1e-14
    noise_sens: float = 1e-14
    sinr_th_dl: float = float(db_to_linear(0.3))
    sinr_th_ul: float = float(db_to_linear(0.3))
    sinr_th_sens: float = float(db_to_linear(3.0))
    processing_gain: float = 10.0
    period: float = 20.0
    slot_count: int = 20
    slot_len: float = 1.0
    max_speed: float = 50.0 * math.sqrt(2.0)
    start: tuple = (25.0, 525.0)
    finish: tuple = (975.0, 525.0)
    rng_seed: int = 0
    overlap_fraction: float = 0.5

    def __post_init__(self):
        set_ = object.__setattr__
        if self.ue_positions is None:
            rng = np.random.default_rng(self.rng_seed)
            pts = rng.uniform((0.0, 0.0), (self.area_width, self.area_height),
                              size=(self.ue_count, 2))
            set_(self, "ue_positions", _points(pts))
        else:
            set_(self, "ue_positions", _points(self.ue_positions))
            set_(self, "ue_count", len(self.ue_positions))
        set_(self, "sensing_positions", _points(self.sensing_positions) or ())
        set_(self, "start", tuple(float(v) for v in self.start))
        set_(self, "finish", tuple(float(v) for v in self.finish))
        J = len(self.sensing_positions)
        rcs = self.rcs
        if np.isscalar(rcs):
            rcs = (complex(rcs),) * J
        set_(self, "rcs", tuple(complex(r) for r in rcs))
        p = self.ue_tx_power
        if np.isscalar(p):
            p = (float(p),) * self.ue_count
        set_(self, "ue_tx_power", tuple(float(v) for v in p))
        self._validate()

    def _validate(self):
        K, J = self.K, self.J
        if K < 1:
            raise ConfigError("need at least one UE")
        if self.antenna_count < 1:
            raise ConfigError("antenna_count must be >= 1")
        if self.slot_count < 2:
            raise ConfigError("slot_count must be >= 2")
        if self.grid_cols < 1 or self.grid_rows < 1:
            raise ConfigError("grid needs at least one cell")
        if not math.isclose(self.slot_len * self.slot_count, self.period, rel_tol=1e-9):
            raise ConfigError(
                f"slot_len * slot_count = {self.slot_len * self.slot_count} != period {self.period}")
        if len(self.rcs) != J:
            raise ConfigError(f"rcs has {len(self.rcs)} entries for {J} sensing positions")
        if len(self.ue_tx_power) != K:
            raise ConfigError(f"ue_tx_power has {len(self.ue_tx_power)} entries for {K} UEs")
        for name, pts in (("ue_positions", self.ue_positions),
                          ("sensing_positions", self.sensing_positions)):
            for x, y in pts:
                if not (0.0 <= x <= self.area_width and 0.0 <= y <= self.area_height):
                    raise ConfigError(f"{name} entry ({x}, {y}) lies outside the area")
        positive = ["area_width", "area_height", "flight_height", "carrier_frequency",
                    "ref_channel_gain", "uav_max_power", "noise_dl", "noise_ul",
                    "noise_sens", "sinr_th_dl", "sinr_th_ul", "sinr_th_sens",
                    "processing_gain", "period", "slot_len", "max_speed"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")
        if any(p <= 0 for p in self.ue_tx_power):
            raise ConfigError("ue_tx_power must be strictly positive")
        if any(r == 0 for r in self.rcs):
            raise ConfigError("rcs must be nonzero")
        if not 0.0 <= self.overlap_fraction <= 1.0:
            raise ConfigError("overlap_fraction must lie in [0, 1]")
        for name in ("start", "finish"):
            if not self._on_center(getattr(self, name)):
                raise ConfigError(f"{name} {getattr(self, name)} is not a grid-cell center")

    def _on_center(self, point):
        px = self.area_width / self.grid_cols
        py = self.area_height / self.grid_rows
        fx = point[0] / px - 0.5
        fy = point[1] / py - 0.5
        return (abs(fx - round(fx)) < 1e-9 and abs(fy - round(fy)) < 1e-9
                and 0 <= round(fx) < self.grid_cols and 0 <= round(fy) < self.grid_rows)

    @property
    def K(self) -> int:
        return len(self.ue_positions)

    @property
    def J(self) -> int:
        return len(self.sensing_positions)

    @property
    def Q(self) -> int:
        return self.antenna_count

    @property
    def N(self) -> int:
        return self.slot_count

    def replace(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def with_period(self, period: float) -> "ScenarioConfig":
        """Same slot length, ``period / slot_len`` slots."""
        n = int(round(period / self.slot_len))
        return replace(self, period=float(period), slot_count=n)


# --------------------------------------------------------------------------
# JSON ingestion (dBm / dB in the file, SI inside)
# --------------------------------------------------------------------------

_DBM_FIELDS = ("ue_tx_power", "uav_max_power", "noise_dl", "noise_ul", "noise_sens")
_DB_FIELDS = ("ref_channel_gain", "sinr_th_dl", "sinr_th_ul", "sinr_th_sens", "processing_gain")


def config_from_json(doc) -> ScenarioConfig:
    """Build a config from a JSON string, path-like text or parsed mapping."""
    if isinstance(doc, (str, bytes)):
        text = doc
        if isinstance(doc, str) and not doc.lstrip().startswith("{"):
            with open(doc, encoding="utf-8") as fh:
                text = fh.read()
        data = json.loads(text)
    else:
        data = dict(doc)
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw = {}
    for key, value in data.items():
        if key in _DBM_FIELDS:
            value = dbm_to_watts(value)
            value = tuple(value.tolist()) if np.ndim(value) else float(value)
        elif key in _DB_FIELDS:
            value = float(db_to_linear(value))
        elif key == "rcs":
            value = _parse_complex(value)
        kw[key] = value
    return ScenarioConfig(**kw)


def _parse_complex(value):
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, dict):
        return complex(value["re"], value.get("im", 0.0))
    out = []
    for v in value:
        if isinstance(v, (list, tuple)):
            out.append(complex(v[0], v[1]))
        elif isinstance(v, dict):
            out.append(complex(v["re"], v.get("im", 0.0)))
        else:
            out.append(complex(v))
    return tuple(out)


def config_to_json(cfg: ScenarioConfig) -> dict:
    """Inverse of :func:`config_from_json` (values in file units)."""
    data = asdict(cfg)
    for key in _DBM_FIELDS:
        v = watts_to_dbm(data[key])
        data[key] = v.tolist() if np.ndim(v) else float(v)
    for key in _DB_FIELDS:
        data[key] = float(linear_to_db(data[key]))
    data["rcs"] = [[c.real, c.imag] for c in cfg.rcs]
    data["ue_positions"] = [list(p) for p in cfg.ue_positions]
    data["sensing_positions"] = [list(p) for p in cfg.sensing_positions]
    data["start"] = list(cfg.start)
    data["finish"] = list(cfg.finish)
    return data


# --------------------------------------------------------------------------
# Grid map
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GridMap:
    """Uniform lattice of cell centers; cell index = row * cols + col."""

    cols: int
    rows: int
    cell_pitch_x: float
    cell_pitch_y: float
    cell_centers: np.ndarray = field(repr=False)
    adjacency: tuple = field(repr=False)

    @property
    def size(self) -> int:
        return self.cols * self.rows

    def index_of(self, point) -> int:
        col = int(round(point[0] / self.cell_pitch_x - 0.5))
        row = int(round(point[1] / self.cell_pitch_y - 0.5))
        if not (0 <= col < self.cols and 0 <= row < self.rows):
            raise ConfigError(f"point {point} lies outside the grid")
        return row * self.cols + col

    def center(self, index: int) -> np.ndarray:
        return self.cell_centers[index]

    def hop_distances(self, target: int) -> np.ndarray:
        """Breadth-first move counts from every cell to ``target``."""
        dist = np.full(self.size, -1, dtype=int)
        dist[target] = 0
        frontier = [target]
        while frontier:
            nxt = []
            for c in frontier:
                for nb in self.adjacency[c]:
                    if dist[nb] < 0:
                        dist[nb] = dist[c] + 1
                        nxt.append(nb)
            frontier = nxt
        return dist


def build_grid(cfg: ScenarioConfig) -> GridMap:
    """8-connected grid plus hovering, pruned to one-slot flight distance."""
    cols, rows = cfg.grid_cols, cfg.grid_rows
    px = cfg.area_width / cols
    py = cfg.area_height / rows
    reach = cfg.max_speed * cfg.slot_len * (1 + 1e-9)
    if (cols > 1 and px > reach) or (rows > 1 and py > reach):
        raise ConfigError(
            f"grid pitch ({px:g} m x {py:g} m) exceeds the one-slot flight distance "
            f"{cfg.max_speed * cfg.slot_len:g} m; the UAV could never change cell")
    xs = (np.arange(cols) + 0.5) * px
    ys = (np.arange(rows) + 0.5) * py
    centers = np.array([(x, y) for y in ys for x in xs])
    adjacency = []
    for r in range(rows):
        for c in range(cols):
            nbs = []
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < rows and 0 <= cc < cols:
                        if math.hypot(dc * px, dr * py) <= reach:
                            nbs.append(rr * cols + cc)
            adjacency.append(tuple(sorted(nbs)))
    centers.setflags(write=False)
    return GridMap(cols, rows, px, py, centers, tuple(adjacency))


# --------------------------------------------------------------------------
# Channels
# --------------------------------------------------------------------------


def steering_vector(theta: float, Q: int) -> np.ndarray:
    """ULA response ``exp(-1j*pi*q*cos(theta))`` for q = 0..Q-1."""
    q = np.arange(Q)
    return np.exp(-1j * np.pi * q * np.cos(theta))


def _geometry(uav_pos, point, height):
    dx = float(uav_pos[0]) - float(point[0])
    dy = float(uav_pos[1]) - float(point[1])
    d = math.sqrt(height * height + dx * dx + dy * dy)
    theta = math.acos(min(1.0, height / d))
    return d, theta


def comm_channel(uav_pos, ue_pos, cfg: ScenarioConfig) -> np.ndarray:
    """LoS UAV-UE channel, shared by downlink and uplink."""
    d, theta = _geometry(uav_pos, ue_pos, cfg.flight_height)
    return math.sqrt(cfg.ref_channel_gain) / d * steering_vector(theta, cfg.Q)


def sensing_channel(uav_pos, sens_pos, cfg: ScenarioConfig, rcs: complex | None = None) -> np.ndarray:
    """Round-trip reflection matrix ``alpha * b b^H * exp(-j 2 pi f_c tau)``."""
    d, theta = _geometry(uav_pos, sens_pos, cfg.flight_height)
    if rcs is None:
        rcs = cfg.rcs[cfg.sensing_positions.index(tuple(map(float, sens_pos)))]
    alpha = rcs / (2.0 * d)
    delay = 2.0 * d / SPEED_OF_LIGHT
    b = steering_vector(theta, cfg.Q)
    return alpha * np.outer(b, b.conj()) * np.exp(-2j * np.pi * cfg.carrier_frequency * delay)


@dataclass(frozen=True)
class ChannelSet:
    """Per-waypoint channels: ``h`` is (K, Q), ``G`` is (J, Q, Q)."""

    h: np.ndarray
    G: np.ndarray
    d_ue: np.ndarray
    d_sens: np.ndarray
    theta_ue: np.ndarray
    theta_sens: np.ndarray

    @property
    def K(self) -> int:
        return self.h.shape[0]

    @property
    def J(self) -> int:
        return self.G.shape[0]

    @property
    def Q(self) -> int:
        return self.h.shape[1] if self.h.size else self.G.shape[1]

    @property
    def H(self) -> np.ndarray:
        """Rank-one channel covariances ``h h^H`` with shape (K, Q, Q)."""
        return np.einsum("ki,kj->kij", self.h, self.h.conj())


def channel_set(uav_pos, cfg: ScenarioConfig) -> ChannelSet:
    Q = cfg.Q
    h = np.array([comm_channel(uav_pos, p, cfg) for p in cfg.ue_positions]).reshape(cfg.K, Q)
    G = np.array([sensing_channel(uav_pos, p, cfg, rcs=r)
                  for p, r in zip(cfg.sensing_positions, cfg.rcs)]).reshape(cfg.J, Q, Q)
    geo_ue = [_geometry(uav_pos, p, cfg.flight_height) for p in cfg.ue_positions]
    geo_s = [_geometry(uav_pos, p, cfg.flight_height) for p in cfg.sensing_positions]
    return ChannelSet(
        h=h, G=G,
        d_ue=np.array([g[0] for g in geo_ue]),
        d_sens=np.array([g[0] for g in geo_s]),
        theta_ue=np.array([g[1] for g in geo_ue]),
        theta_sens=np.array([g[1] for g in geo_s]),
    )

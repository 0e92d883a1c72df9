"""Plain-file formats for survey logs, registries, and configuration.

Everything round-trips losslessly enough for replay: poses and field maps
are CSV, scans are CSV or a length-prefixed little-endian binary, camera
frames are 16-bit PNG triplets (red/green/nir) plus a timestamp index.
All writers format deterministically so identical runs produce identical
bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .core import RingedPointCloud, RobotPose
from .errors import InputDataError
from .fusion import RgnFrame
from .georef import FieldMap, GeoTreeRecord, UtmDatum

SCAN_MAGIC = b"TSCN"
SCAN_BIN_VERSION = 1
_POINT_DTYPE = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("ring", "<u2")])

POSE_HEADER = "timestamp,x,y,theta,v_x,omega,degraded_flag"
FIELDMAP_HEADER = ("tree_id,utm_x,utm_y,gt_width,gt_height,"
                   "est_width,est_height,est_ndvi,match_count,last_update")


def _fmt(value: float) -> str:
    """Shortest exact decimal for a float; keeps CSV output deterministic."""
    return repr(float(value))


# ---------------------------------------------------------------------------
# Pose logs
# ---------------------------------------------------------------------------

def write_pose_log(path: Path | str, poses: list[RobotPose]) -> None:
    lines = [POSE_HEADER]
    for p in poses:
        lines.append(",".join([_fmt(p.timestamp), _fmt(p.x), _fmt(p.y),
                               _fmt(p.theta), _fmt(p.v_x), _fmt(p.omega),
                               "1" if p.degraded else "0"]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_pose_log(path: Path | str) -> list[RobotPose]:
    path = Path(path)
    if not path.exists():
        raise InputDataError(f"pose log not found: {path}")
    poses = []
    lines = path.read_text().splitlines()
    if not lines or lines[0] != POSE_HEADER:
        raise InputDataError(f"bad pose log header in {path}")
    last_t = -np.inf
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise InputDataError(f"malformed pose row: {line!r}")
        t = float(parts[0])
        if t <= last_t:
            raise InputDataError("pose timestamps must be strictly increasing")
        last_t = t
        poses.append(RobotPose(timestamp=t, x=float(parts[1]), y=float(parts[2]),
                               theta=float(parts[3]), v_x=float(parts[4]),
                               omega=float(parts[5]), degraded=parts[6] == "1"))
    return poses


# ---------------------------------------------------------------------------
# Scan logs
# ---------------------------------------------------------------------------

def write_scan_log_csv(path: Path | str, scans: list[RingedPointCloud]) -> None:
    with open(path, "w") as fh:
        fh.write("timestamp,x,y,z,ring_id\n")
        for cloud in scans:
            ts = _fmt(cloud.timestamp)
            for i in range(len(cloud)):
                fh.write(f"{ts},{_fmt(cloud.xyz[i, 0])},{_fmt(cloud.xyz[i, 1])},"
                         f"{_fmt(cloud.xyz[i, 2])},{int(cloud.ring_id[i])}\n")


def read_scan_log_csv(path: Path | str) -> list[RingedPointCloud]:
    path = Path(path)
    if not path.exists():
        raise InputDataError(f"scan log not found: {path}")
    scans: list[RingedPointCloud] = []
    rows_ts: float | None = None
    xyz: list[list[float]] = []
    rings: list[int] = []

    def flush() -> None:
        if rows_ts is not None:
            scans.append(RingedPointCloud(
                rows_ts, np.array(xyz, dtype=np.float64).reshape(-1, 3),
                np.array(rings, dtype=np.int32), np.full(len(rings), np.nan)))

    with open(path) as fh:
        header = fh.readline().strip()
        if header != "timestamp,x,y,z,ring_id":
            raise InputDataError(f"bad scan log header in {path}")
        for line in fh:
            parts = line.split(",")
            if len(parts) != 5:
                raise InputDataError(f"malformed scan row: {line!r}")
            t = float(parts[0])
            if rows_ts is None or t != rows_ts:
                if rows_ts is not None and t < rows_ts:
                    raise InputDataError("scan timestamps regress")
                flush()
                rows_ts, xyz, rings = t, [], []
            xyz.append([float(parts[1]), float(parts[2]), float(parts[3])])
            rings.append(int(parts[4]))
    flush()
    return scans


def write_scan_log_bin(path: Path | str, scans: list[RingedPointCloud]) -> None:
    """Length-prefixed binary scan log; same fields as the CSV variant."""
    with open(path, "wb") as fh:
        fh.write(SCAN_MAGIC)
        fh.write(struct.pack("<I", SCAN_BIN_VERSION))
        for cloud in scans:
            fh.write(struct.pack("<dI", cloud.timestamp, len(cloud)))
            block = np.empty(len(cloud), dtype=_POINT_DTYPE)
            block["x"] = cloud.xyz[:, 0]
            block["y"] = cloud.xyz[:, 1]
            block["z"] = cloud.xyz[:, 2]
            block["ring"] = cloud.ring_id
            fh.write(block.tobytes())


def read_scan_log_bin(path: Path | str) -> list[RingedPointCloud]:
    path = Path(path)
    if not path.exists():
        raise InputDataError(f"scan log not found: {path}")
    data = path.read_bytes()
    if data[:4] != SCAN_MAGIC:
        raise InputDataError(f"not a binary scan log: {path}")
    version = struct.unpack_from("<I", data, 4)[0]
    if version != SCAN_BIN_VERSION:
        raise InputDataError(f"unsupported scan log version {version}")
    offset = 8
    scans: list[RingedPointCloud] = []
    last_t = -np.inf
    while offset < len(data):
        if offset + 12 > len(data):
            raise InputDataError("truncated scan log")
        ts, n = struct.unpack_from("<dI", data, offset)
        offset += 12
        end = offset + n * _POINT_DTYPE.itemsize
        if end > len(data):
            raise InputDataError("truncated scan log")
        block = np.frombuffer(data, dtype=_POINT_DTYPE, count=n, offset=offset)
        offset = end
        if ts < last_t:
            raise InputDataError("scan timestamps regress")
        last_t = ts
        xyz = np.stack([block["x"], block["y"], block["z"]],
                       axis=1).astype(np.float64)
        scans.append(RingedPointCloud(ts, xyz, block["ring"].astype(np.int32),
                                      np.full(n, np.nan)))
    return scans


# ---------------------------------------------------------------------------
# Frame logs (16-bit PNG triplets + index)
# ---------------------------------------------------------------------------

def _write_channel_png(path: Path, channel: np.ndarray) -> None:
    scaled = np.clip(np.rint(channel * 65535.0), 0, 65535).astype(np.uint16)
    Image.fromarray(scaled).save(path)


def _read_channel_png(path: Path) -> np.ndarray:
    arr = np.asarray(Image.open(path), dtype=np.float64)
    return arr / 65535.0


class FrameLogWriter:
    """Incremental frame-log writer; frames stream to disk as they arrive."""

    def __init__(self, directory: Path | str) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._index_lines = ["timestamp,prefix"]
        self._count = 0

    def add(self, frame: RgnFrame) -> None:
        prefix = f"frame_{self._count:06d}"
        self._count += 1
        self._index_lines.append(f"{_fmt(frame.timestamp)},{prefix}")
        _write_channel_png(self.directory / f"{prefix}_red.png", frame.red)
        _write_channel_png(self.directory / f"{prefix}_green.png", frame.green)
        _write_channel_png(self.directory / f"{prefix}_nir.png", frame.nir)

    def close(self) -> None:
        (self.directory / "index.csv").write_text("\n".join(self._index_lines) + "\n")


def write_frame_log(directory: Path | str, frames: list[RgnFrame]) -> None:
    writer = FrameLogWriter(directory)
    for frame in frames:
        writer.add(frame)
    writer.close()


class FrameLogReader:
    """Lazy reader over a frame directory; loads PNGs on demand.

    Consecutive scans usually pair with the same frame, so the most recent
    load is cached.
    """

    def __init__(self, directory: Path | str) -> None:
        self.directory = Path(directory)
        index = self.directory / "index.csv"
        if not index.exists():
            raise InputDataError(f"frame index not found: {index}")
        self.entries: list[tuple[float, str]] = []
        lines = index.read_text().splitlines()
        if not lines or lines[0] != "timestamp,prefix":
            raise InputDataError(f"bad frame index header in {index}")
        for line in lines[1:]:
            if not line.strip():
                continue
            t_str, prefix = line.split(",", 1)
            self.entries.append((float(t_str), prefix))
        self.timestamps = np.array([t for t, _ in self.entries])
        self._cached: tuple[int, RgnFrame] | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def load(self, index: int) -> RgnFrame:
        if self._cached is not None and self._cached[0] == index:
            return self._cached[1]
        t, prefix = self.entries[index]
        frame = RgnFrame(
            timestamp=t,
            red=_read_channel_png(self.directory / f"{prefix}_red.png"),
            green=_read_channel_png(self.directory / f"{prefix}_green.png"),
            nir=_read_channel_png(self.directory / f"{prefix}_nir.png"))
        self._cached = (index, frame)
        return frame

    def latest_at(self, t: float, max_skew: float) -> RgnFrame | None:
        """Most recent frame at or before t, within the skew budget."""
        idx = int(np.searchsorted(self.timestamps, t + 1e-9)) - 1
        if idx < 0 or t - self.timestamps[idx] > max_skew:
            return None
        return self.load(idx)


# ---------------------------------------------------------------------------
# Field maps
# ---------------------------------------------------------------------------

def write_fieldmap(path: Path | str, fieldmap: FieldMap) -> None:
    d = fieldmap.datum
    lines = [f"# datum,{d.zone},{_fmt(d.origin_x)},{_fmt(d.origin_y)}", FIELDMAP_HEADER]
    for r in fieldmap.records:
        gt_w = "" if r.gt_width is None else _fmt(r.gt_width)
        gt_h = "" if r.gt_height is None else _fmt(r.gt_height)
        lines.append(",".join([str(r.tree_id), _fmt(r.utm_x), _fmt(r.utm_y),
                               gt_w, gt_h, _fmt(r.est_width), _fmt(r.est_height),
                               _fmt(r.est_ndvi_mean), str(r.match_count),
                               _fmt(r.last_update)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_fieldmap(path: Path | str) -> FieldMap:
    path = Path(path)
    if not path.exists():
        raise InputDataError(f"field map not found: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    datum = UtmDatum()
    if lines and lines[0].startswith("# datum,"):
        _, zone, ox, oy = lines[0][2:].split(",")
        datum = UtmDatum(zone=zone, origin_x=float(ox), origin_y=float(oy))
        lines = lines[1:]
    if not lines or lines[0] != FIELDMAP_HEADER:
        raise InputDataError(f"bad field map header in {path}")
    records = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 10:
            raise InputDataError(f"malformed field map row: {line!r}")
        records.append(GeoTreeRecord(
            tree_id=int(parts[0]), utm_x=float(parts[1]), utm_y=float(parts[2]),
            gt_width=float(parts[3]) if parts[3] else None,
            gt_height=float(parts[4]) if parts[4] else None,
            est_width=float(parts[5]), est_height=float(parts[6]),
            est_ndvi_mean=float(parts[7]), match_count=int(parts[8]),
            last_update=float(parts[9])))
    return FieldMap(records=records, datum=datum)


# ---------------------------------------------------------------------------
# Key-value config text
# ---------------------------------------------------------------------------

def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputDataError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out

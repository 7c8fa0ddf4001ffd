"""Time-varying channel impulse responses over a chirp epoch grid.

Each chirp interval gets a fresh world snapshot (quasi-static within the
chirp), a fresh trace, and per-path amplitude, delay and Doppler.  Paths
whose delay exceeds the unambiguous beat-spectrum span f_samp / slope are
dropped and counted per frame.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .em import SPEED_OF_LIGHT, amplitudes_of
from .kinematics import build_trajectories, snapshot
from .raytrace import TraceConfig, trace_diffuse, trace_los, trace_specular, build_sample_patterns
from .scene import Scene, SceneError


@dataclass(frozen=True)
class ChirpConfig:
    """FMCW timing; defaults reproduce the validated 79 GHz configuration."""

    f_c: float = 79.0e9
    bandwidth: float = 4.0e9
    t_chirp: float = 112.86e-6
    t_idle: float = 13.0e-6
    slope: float = 35.44e12
    f_samp: float = 18.75e6
    n_chirps_total: int = 4096

    def __post_init__(self):
        for name in ("f_c", "bandwidth", "t_chirp", "t_idle", "slope", "f_samp"):
            if getattr(self, name) < 0 or (name != "t_idle" and getattr(self, name) == 0):
                raise ValueError(f"ChirpConfig.{name} must be positive")
        if self.n_chirps_total < 1:
            raise ValueError("n_chirps_total must be >= 1")
        swept = self.slope * self.t_chirp
        if abs(swept - self.bandwidth) > 1e-3 * self.bandwidth:
            raise ValueError(
                f"slope * t_chirp = {swept:.6g} Hz is not within 0.1% of the "
                f"bandwidth {self.bandwidth:.6g} Hz")

    @property
    def pri(self) -> float:
        """Chirp repetition interval, t_chirp + t_idle."""
        return self.t_chirp + self.t_idle

    @property
    def samples_per_chirp(self) -> int:
        return int(np.floor(self.t_chirp * self.f_samp))

    @property
    def max_delay(self) -> float:
        """Largest unambiguous path delay, f_samp / slope."""
        return self.f_samp / self.slope

    def window_duration(self, n_chirps: int) -> float:
        return n_chirps * self.pri

    def to_dict(self) -> dict:
        return {"f_c": self.f_c, "bandwidth": self.bandwidth,
                "t_chirp": self.t_chirp, "t_idle": self.t_idle,
                "slope": self.slope, "f_samp": self.f_samp,
                "n_chirps_total": self.n_chirps_total}


def max_range(config: ChirpConfig, mode: str = "mono") -> float:
    """Unambiguous range in meters; mono-static halves the two-way span."""
    if mode not in ("mono", "bi"):
        raise ValueError("mode must be 'mono' or 'bi'")
    span = SPEED_OF_LIGHT * config.max_delay
    return span / 2.0 if mode == "mono" else span


@dataclass(frozen=True)
class SensingLink:
    """TX/RX pairing; a co-identified pair is the mono-static radar mode."""

    tx_id: str
    rx_id: str

    @property
    def mono_static(self) -> bool:
        return self.tx_id == self.rx_id


@dataclass
class CirPath:
    """One tap of the impulse response with association metadata."""

    amplitude: complex
    delay: float
    doppler: float
    kind: str
    facet_indices: tuple[int, ...] = ()
    sample_index: int | None = None

    @property
    def key(self) -> tuple:
        return (self.kind, self.facet_indices, self.sample_index)


@dataclass
class CirFrame:
    epoch_index: int
    t: float
    paths: list[CirPath] = field(default_factory=list)
    n_dropped: int = 0


def _doppler_batch(paths, snap, f_c) -> np.ndarray:
    """Path Doppler for a whole frame in one vector pass."""
    n = len(paths)
    if n == 0:
        return np.zeros(0)
    max_pts = max(len(p.points) for p in paths)
    pts = np.zeros((n, max_pts, 3))
    vels = np.zeros((n, max_pts, 3))
    seg_mask = np.zeros((n, max_pts - 1), dtype=bool)

    body_of_facet = {}
    for fi, f in enumerate(snap.facets):
        body_of_facet[fi] = f.body_id

    for i, p in enumerate(paths):
        m = len(p.points)
        pts[i, :m] = p.points
        seg_mask[i, : m - 1] = True
        vels[i, 0] = snap.transceiver_state(p.tx_id).velocity
        vels[i, m - 1] = snap.transceiver_state(p.rx_id).velocity
        for k, fi in enumerate(p.facet_indices):
            bid = body_of_facet[fi]
            if bid is not None:
                vels[i, k + 1] = snap.body_point_velocity(bid, p.points[k + 1])

    segs = np.diff(pts, axis=1)
    norms = np.linalg.norm(segs, axis=2)
    units = np.where(seg_mask[..., None], segs / np.maximum(norms, 1e-300)[..., None], 0.0)
    rate = np.einsum("nsj,nsj->n", units, np.diff(vels, axis=1))
    return -(f_c / SPEED_OF_LIGHT) * rate


def simulate_cir(scene: Scene, link: SensingLink, config: ChirpConfig,
                 trace: TraceConfig = TraceConfig(), t0: float = 0.0,
                 n_chirps: int | None = None) -> list[CirFrame]:
    """Impulse-response frames on the chirp epoch grid t0 + k * pri.

    Deterministic for a fixed scene, configs and t0.  Raises SceneError when
    the epoch grid is not covered by every body trajectory.
    """
    scene.transceiver(link.tx_id)
    scene.transceiver(link.rx_id)
    n = config.n_chirps_total if n_chirps is None else n_chirps
    span = scene.t_span
    t_end = t0 + (n - 1) * config.pri
    if span is not None and (t0 < span[0] - 1e-12 or t_end > span[1] + 1e-12):
        raise SceneError(
            f"epoch grid [{t0:.6g}, {t_end:.6g}] s not covered by body "
            f"trajectories [{span[0]:.6g}, {span[1]:.6g}] s")

    trajectories = build_trajectories(scene)
    patterns = build_sample_patterns(scene, trace)
    frames = []
    for k in range(n):
        t_k = t0 + k * config.pri
        snap = snapshot(scene, t_k, trajectories)
        paths = []
        if not link.mono_static:
            los = trace_los(snap, link.tx_id, link.rx_id, trace)
            if los is not None:
                paths.append(los)
        paths += trace_specular(snap, link.tx_id, link.rx_id, trace)
        paths += trace_diffuse(snap, link.tx_id, link.rx_id, trace, patterns)

        amps = amplitudes_of(paths, snap, scene, config.f_c)
        nus = _doppler_batch(paths, snap, config.f_c)
        taus = np.array([p.total_length for p in paths]) / SPEED_OF_LIGHT \
            if paths else np.zeros(0)

        keep = taus < config.max_delay
        frame = CirFrame(k, t_k, n_dropped=int(np.count_nonzero(~keep)))
        for i in np.flatnonzero(keep):
            p = paths[i]
            frame.paths.append(CirPath(complex(amps[i]), float(taus[i]),
                                       float(nus[i]), p.kind, p.facet_indices,
                                       p.sample_index))
        frames.append(frame)
    return frames


_KIND_CODE = {"los": 0, "specular": 1, "diffuse": 2}
_KIND_NAME = {v: k for k, v in _KIND_CODE.items()}
_CIR_MAGIC = b"RFTCIR1\n"


def save_cir(path, frames: list[CirFrame], config: ChirpConfig,
             link: SensingLink, trace: TraceConfig | None = None,
             t0: float = 0.0, extra: dict | None = None,
             frozen_clock: bool = False) -> None:
    """Write frames in the little-endian binary layout described in README.

    Layout: 8-byte magic, u32 header length, UTF-8 JSON header, then per
    frame u32 epoch_index, f64 t, u32 n_paths, u32 n_dropped followed by
    f64 arrays a_re, a_im, tau, nu, u8 kind codes, u8 hop counts, i32 facet
    indices (concatenated) and i32 sample indices (-1 when absent).
    """
    header = {"format": "rftwin-cir", "version": 1,
              "config": config.to_dict(),
              "link": {"tx": link.tx_id, "rx": link.rx_id},
              "t0": t0, "n_frames": len(frames),
              "created": "frozen" if frozen_clock else _now()}
    if trace is not None:
        header["trace"] = {"max_specular_order": trace.max_specular_order,
                           "diffuse_enabled": trace.diffuse_enabled,
                           "diffuse_samples_per_facet": trace.diffuse_samples_per_facet,
                           "occlusion_epsilon": trace.occlusion_epsilon,
                           "seed": trace.seed,
                           "subdivide_area": trace.subdivide_area}
    if extra:
        header.update(extra)
    blob = json.dumps(header, sort_keys=True).encode()

    with open(path, "wb") as fh:
        fh.write(_CIR_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for fr in frames:
            n = len(fr.paths)
            fh.write(struct.pack("<Id II", fr.epoch_index, fr.t, n, fr.n_dropped))
            amps = np.array([p.amplitude for p in fr.paths], dtype=complex)
            fh.write(np.ascontiguousarray(amps.real, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(amps.imag, dtype="<f8").tobytes())
            fh.write(np.array([p.delay for p in fr.paths], dtype="<f8").tobytes())
            fh.write(np.array([p.doppler for p in fr.paths], dtype="<f8").tobytes())
            fh.write(np.array([_KIND_CODE[p.kind] for p in fr.paths],
                              dtype=np.uint8).tobytes())
            fh.write(np.array([len(p.facet_indices) for p in fr.paths],
                              dtype=np.uint8).tobytes())
            facets = [fi for p in fr.paths for fi in p.facet_indices]
            fh.write(np.array(facets, dtype="<i4").tobytes())
            fh.write(np.array([-1 if p.sample_index is None else p.sample_index
                               for p in fr.paths], dtype="<i4").tobytes())


def load_cir(path) -> tuple[list[CirFrame], dict]:
    """Read a CIR file back into frames plus its JSON header."""
    raw = Path(path).read_bytes()
    if raw[:8] != _CIR_MAGIC:
        raise ValueError(f"{path}: not a rftwin CIR file")
    hlen = struct.unpack_from("<I", raw, 8)[0]
    header = json.loads(raw[12:12 + hlen].decode())
    off = 12 + hlen
    frames = []
    for _ in range(header["n_frames"]):
        epoch, t, n, dropped = struct.unpack_from("<Id II", raw, off)
        off += struct.calcsize("<Id II")
        def take(dtype, count):
            nonlocal off
            arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off)
            off += arr.nbytes
            return arr
        a_re = take("<f8", n)
        a_im = take("<f8", n)
        tau = take("<f8", n)
        nu = take("<f8", n)
        kind = take(np.uint8, n)
        hops = take(np.uint8, n)
        facets = take("<i4", int(hops.sum()))
        sample = take("<i4", n)
        frame = CirFrame(int(epoch), float(t), n_dropped=int(dropped))
        pos = 0
        for i in range(n):
            h = int(hops[i])
            frame.paths.append(CirPath(
                complex(a_re[i], a_im[i]), float(tau[i]), float(nu[i]),
                _KIND_NAME[int(kind[i])],
                tuple(int(x) for x in facets[pos:pos + h]),
                None if sample[i] < 0 else int(sample[i])))
            pos += h
        frames.append(frame)
    return frames, header


def cir_to_csv(path, frames: list[CirFrame]) -> None:
    """Flat CSV export: one row per path per frame."""
    with open(path, "w") as fh:
        fh.write("epoch_index,t,kind,delay_s,doppler_hz,a_real,a_imag,"
                 "facets,sample_index\n")
        for fr in frames:
            for p in fr.paths:
                facets = "|".join(str(fi) for fi in p.facet_indices)
                sample = "" if p.sample_index is None else p.sample_index
                fh.write(f"{fr.epoch_index},{fr.t!r},{p.kind},{p.delay!r},"
                         f"{p.doppler!r},{p.amplitude.real!r},"
                         f"{p.amplitude.imag!r},{facets},{sample}\n")


def _now() -> str:
    import datetime
    return datetime.datetime.now(datetime.timezone.utc).isoformat()

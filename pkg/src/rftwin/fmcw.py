"""FMCW dechirp signal synthesis and delay-Doppler processing.

Beat model: after stretch processing, a path with complex amplitude a_n,
delay tau_n and Doppler nu_n contributes to chirp k, fast-time sample m at
t_m = m / f_samp:

    a_n exp(j 2 pi (slope tau_n t_m + f_c tau_n - slope tau_n^2 / 2))
        * exp(j 2 pi nu_n (t_k - t_ref))

The residual video phase term (slope tau^2 / 2) is kept.  Since a_n already
carries exp(-j 2 pi f_c tau_n), the carrier terms cancel and slow-time phase
evolves purely through the Doppler phasor, one rotation of 2 pi nu pri per
chirp.  t_ref is the first synthesized epoch, keeping the phasor argument
small so slowly drifting Doppler does not skew the apparent frequency.

FFT normalization: both axes divide by the window sum (coherent gain), so an
on-grid path of amplitude a peaks at |a| in the map, directly comparable to
the analytic prediction of predicted_map.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.constants import k as boltzmann
from scipy.signal import get_window

from .channel import ChirpConfig, CirFrame

_WINDOWS = ("hann", "hamming", "blackman", "boxcar")


def window_taps(name: str, n: int) -> np.ndarray:
    """Periodic analysis window taps; see _WINDOWS for the supported names."""
    if name not in _WINDOWS:
        raise ValueError(f"unknown window '{name}', expected one of {_WINDOWS}")
    return get_window(name, n, fftbins=True)


@dataclass(frozen=True)
class NoiseConfig:
    """Complex AWGN at the receiver, relative to unit transmit amplitude.

    The floor is thermal noise over the sampled band plus the noise figure:
    10 log10(k T f_samp / 1 mW) + NF dBm, scaled against tx_power_dbm.
    """

    enabled: bool = False
    noise_figure_db: float = 15.0
    tx_power_dbm: float = 12.0
    temperature_k: float = 290.0
    seed: int = 0

    def floor_dbm(self, f_samp: float) -> float:
        return (10.0 * np.log10(boltzmann * self.temperature_k * f_samp / 1e-3)
                + self.noise_figure_db)

    def sample_variance(self, f_samp: float) -> float:
        """Per-sample complex noise variance in normalized signal units."""
        return 10.0 ** ((self.floor_dbm(f_samp) - self.tx_power_dbm) / 10.0)


@dataclass
class BeatFrame:
    epoch_index: int
    t: float
    samples: np.ndarray


def synth_beat(frames: list[CirFrame], config: ChirpConfig,
               noise: NoiseConfig = NoiseConfig()) -> list[BeatFrame]:
    """Dechirped I/Q samples for every frame (see module docstring).

    Each path's slow-time phase is the running integral of its Doppler
    over the frames where it appears (trapezoid rule, keyed by path), so a
    drifting nu evolves the phase correctly; for constant nu this equals
    nu * (t - t_first).  Noise draws are keyed by (seed, epoch_index), so
    a given frame always receives the same noise regardless of batch
    boundaries.
    """
    n_s = config.samples_per_chirp
    t_m = np.arange(n_s) / config.f_samp
    sigma = np.sqrt(noise.sample_variance(config.f_samp) / 2.0) if noise.enabled else 0.0

    trail: dict = {}        # path key -> (t_prev, nu_prev, accumulated phase)
    out = []
    for fr in frames:
        if fr.paths:
            a = np.array([p.amplitude for p in fr.paths])
            tau = np.array([p.delay for p in fr.paths])
            phi = np.empty(len(fr.paths))
            for i, p in enumerate(fr.paths):
                prev = trail.get(p.key)
                if prev is None:
                    phi[i] = 0.0
                else:
                    t_prev, nu_prev, phi_prev = prev
                    phi[i] = phi_prev + np.pi * (nu_prev + p.doppler) \
                        * (fr.t - t_prev)
                trail[p.key] = (fr.t, p.doppler, phi[i])
            const = 2.0 * np.pi * (config.f_c * tau
                                   - 0.5 * config.slope * tau ** 2) + phi
            weights = a * np.exp(1j * const)
            tones = np.exp(1j * (2.0 * np.pi * config.slope) * np.outer(tau, t_m))
            samples = weights @ tones
        else:
            samples = np.zeros(n_s, dtype=complex)
        if noise.enabled:
            rng = np.random.default_rng([noise.seed, fr.epoch_index])
            samples = samples + sigma * (rng.standard_normal(n_s)
                                         + 1j * rng.standard_normal(n_s))
        out.append(BeatFrame(fr.epoch_index, fr.t, samples))
    return out


def delay_axis(config: ChirpConfig, n_bins: int) -> np.ndarray:
    """Beat-spectrum bins mapped to path delay: freq / slope."""
    return np.arange(n_bins) * (config.f_samp / n_bins) / config.slope


def range_fft(samples: np.ndarray, window: str = "hann",
              zero_pad: bool = False) -> np.ndarray:
    """Windowed fast-time FFT, normalized by the window sum."""
    w = window_taps(window, len(samples))
    n_out = 2 * len(samples) if zero_pad else len(samples)
    return np.fft.fft(samples * w, n=n_out) / w.sum()


@dataclass
class DelayDopplerMap:
    """Power map in dB over (doppler, delay) with its axes and provenance."""

    power_db: np.ndarray
    delay_axis: np.ndarray
    doppler_axis: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def doppler_bin(self) -> float:
        return float(self.doppler_axis[1] - self.doppler_axis[0])

    @property
    def delay_bin(self) -> float:
        return float(self.delay_axis[1] - self.delay_axis[0])

    def power_linear(self) -> np.ndarray:
        return 10.0 ** (self.power_db / 10.0)


def _power_db(power: np.ndarray) -> np.ndarray:
    return 10.0 * np.log10(np.maximum(power, 1e-30))


def delay_doppler(beats: list[BeatFrame], config: ChirpConfig,
                  t0_index: int = 0, n_chirps: int = 128,
                  window_fast: str = "hann", window_slow: str = "hann",
                  zero_pad: bool = False) -> DelayDopplerMap:
    """Delay-Doppler power map over n_chirps consecutive beat frames.

    Doppler bins are spaced 1 / (n_chirps * pri) and span +-1 / (2 pri),
    centered on zero, with approaching targets at positive Doppler.
    """
    if t0_index < 0 or t0_index + n_chirps > len(beats):
        raise ValueError(f"window [{t0_index}, {t0_index + n_chirps}) outside "
                         f"the {len(beats)} available beat frames")
    block = beats[t0_index:t0_index + n_chirps]
    w_fast = window_taps(window_fast, len(block[0].samples))
    n_out = 2 * len(w_fast) if zero_pad else len(w_fast)
    rows = np.fft.fft(np.stack([b.samples for b in block]) * w_fast,
                      n=n_out, axis=1) / w_fast.sum()
    w_slow = window_taps(window_slow, n_chirps)
    grid = np.fft.fftshift(np.fft.fft(rows * w_slow[:, None], axis=0), axes=0)
    grid /= w_slow.sum()
    t_w = config.window_duration(n_chirps)
    return DelayDopplerMap(
        _power_db(np.abs(grid) ** 2),
        delay_axis(config, n_out),
        np.fft.fftshift(np.fft.fftfreq(n_chirps, d=config.pri)),
        metadata={"n_chirps": n_chirps, "t_window": t_w, "t0": block[0].t,
                  "t0_index": t0_index,
                  "windows": [window_fast, window_slow],
                  "zero_pad": zero_pad, "config": config.to_dict()})


@dataclass
class PdpSeries:
    """Per-chirp range-profile powers in dB, one row per epoch."""

    power_db: np.ndarray
    delay_axis: np.ndarray
    times: np.ndarray
    metadata: dict = field(default_factory=dict)


def pdp_series(beats: list[BeatFrame], config: ChirpConfig,
               window: str = "hann") -> PdpSeries:
    w = window_taps(window, len(beats[0].samples))
    rows = np.fft.fft(np.stack([b.samples for b in beats]) * w, axis=1) / w.sum()
    return PdpSeries(_power_db(np.abs(rows) ** 2),
                     delay_axis(config, rows.shape[1]),
                     np.array([b.t for b in beats]),
                     metadata={"window": window, "config": config.to_dict()})


def fold_doppler(nu: np.ndarray, config: ChirpConfig) -> np.ndarray:
    """Alias Doppler into the unambiguous span +-1 / (2 pri)."""
    f_rep = 1.0 / config.pri
    return (np.asarray(nu) + f_rep / 2.0) % f_rep - f_rep / 2.0


def _window_response_table(window: str, n: int, oversample: int = 64,
                           span_bins: float = 8.0):
    """|DTFT| of a window vs frequency offset in bins, normalized to 1 at 0."""
    w = window_taps(window, n)
    spec = np.abs(np.fft.fft(w, n * oversample)) / w.sum()
    count = int(span_bins * oversample) + 1
    return np.arange(count) / oversample, spec[:count]


def predicted_map(frames: list[CirFrame], config: ChirpConfig,
                  t0_index: int = 0, n_chirps: int = 128,
                  window_fast: str = "hann") -> DelayDopplerMap:
    """Analytic delay-Doppler prediction from the path lists.

    Each path of the mid-window frame contributes its power |a_n|^2 on the
    delay bin nearest tau_n, spread over Doppler by the discrete slow-time
    spectrum of the path's beat tone.  That spectrum is computed from the
    path's apparent slow-time phasor at nu_n plus two stretch-processing
    effects of a migrating delay: the fast-time window response sampled at
    the drifting beat-tone offset (scalloping and range-walk smearing) and
    the extra phase slope from the window centroid.  For a static path this
    reduces to |a_n|^2 sinc^2((nu_n - nu) T_w) on its delay bin.  The axes
    match delay_doppler without padding; the Doppler comparison assumes a
    boxcar slow-time window.
    """
    if t0_index < 0 or t0_index + n_chirps > len(frames):
        raise ValueError(f"window [{t0_index}, {t0_index + n_chirps}) outside "
                         f"the {len(frames)} available frames")
    mid = frames[t0_index + n_chirps // 2]
    n_delay = config.samples_per_chirp
    d_axis = delay_axis(config, n_delay)
    nu_axis = np.fft.fftshift(np.fft.fftfreq(n_chirps, d=config.pri))
    t_w = config.window_duration(n_chirps)
    power = np.zeros((n_chirps, n_delay))
    delay_step = d_axis[1] - d_axis[0]
    t_centroid = (n_delay - 1) / (2.0 * config.f_samp)
    offs, resp = _window_response_table(window_fast, n_delay)
    first: dict = {}
    last: dict = {}
    for fr in frames[t0_index:t0_index + n_chirps]:
        for p in fr.paths:
            first.setdefault(p.key, (fr.t, p.delay))
            last[p.key] = (fr.t, p.delay)
    m = np.arange(n_chirps)
    for p in mid.paths:
        bin_idx = int(round(p.delay / delay_step))
        if not 0 <= bin_idx < n_delay:
            continue
        (t_a, tau_a), (t_b, tau_b) = first[p.key], last[p.key]
        tau_dot = (tau_b - tau_a) / (t_b - t_a) if t_b > t_a else 0.0
        apparent = p.doppler + config.slope * tau_dot * t_centroid
        tau_m = p.delay + tau_dot * (m - n_chirps // 2) * config.pri
        gain = np.interp(np.abs(tau_m / delay_step - bin_idx), offs, resp)
        tone = gain * np.exp(2j * np.pi * apparent * config.pri * m)
        col = np.abs(np.fft.fftshift(np.fft.fft(tone))) ** 2 / n_chirps ** 2
        power[:, bin_idx] += np.abs(p.amplitude) ** 2 * col
    return DelayDopplerMap(
        _power_db(power), d_axis, nu_axis,
        metadata={"n_chirps": n_chirps, "t_window": t_w,
                  "t0": frames[t0_index].t, "t0_index": t0_index,
                  "windows": ["analytic", "analytic"],
                  "zero_pad": False, "config": config.to_dict()})


_MAP_MAGIC = b"RFTDDM1\n"


def save_map(path, ddm: DelayDopplerMap, frozen_clock: bool = False) -> None:
    """Binary map container: magic, JSON header, f64 axes, f64 dB grid."""
    meta = dict(ddm.metadata)
    meta["created"] = "frozen" if frozen_clock else _now()
    header = {"format": "rftwin-ddm", "version": 1,
              "n_doppler": int(ddm.power_db.shape[0]),
              "n_delay": int(ddm.power_db.shape[1]),
              "metadata": meta}
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAP_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(ddm.delay_axis, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ddm.doppler_axis, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ddm.power_db, dtype="<f8").tobytes())


def load_map(path) -> DelayDopplerMap:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAP_MAGIC:
        raise ValueError(f"{path}: not a rftwin delay-Doppler map file")
    hlen = struct.unpack_from("<I", raw, 8)[0]
    header = json.loads(raw[12:12 + hlen].decode())
    off = 12 + hlen
    n_dop, n_del = header["n_doppler"], header["n_delay"]
    d_axis = np.frombuffer(raw, "<f8", n_del, off).copy()
    off += 8 * n_del
    nu_axis = np.frombuffer(raw, "<f8", n_dop, off).copy()
    off += 8 * n_dop
    power = np.frombuffer(raw, "<f8", n_dop * n_del, off).reshape(n_dop, n_del).copy()
    return DelayDopplerMap(power, d_axis, nu_axis, header["metadata"])


def map_to_csv(path, ddm: DelayDopplerMap) -> None:
    with open(path, "w") as fh:
        fh.write("delay_s,doppler_hz,power_db\n")
        for i, nu in enumerate(ddm.doppler_axis.tolist()):
            row = ddm.power_db[i].tolist()
            for tau, p in zip(ddm.delay_axis.tolist(), row):
                fh.write(f"{tau!r},{nu!r},{p!r}\n")


def map_to_pgm(path, ddm: DelayDopplerMap, vmin: float | None = None,
               vmax: float | None = None) -> None:
    """8-bit PGM heatmap plus a text sidecar recording the dB scale.

    Rows run from the highest Doppler at the top to the lowest at the
    bottom; columns run from zero delay on the left.
    """
    if vmax is None:
        vmax = float(ddm.power_db.max())
    if vmin is None:
        vmin = vmax - 80.0
    scaled = np.clip((ddm.power_db - vmin) / (vmax - vmin), 0.0, 1.0)
    pixels = np.flipud(np.round(255.0 * scaled).astype(np.uint8))
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(pixels.tobytes())
    sidecar = Path(str(path) + ".txt")
    sidecar.write_text(
        "rftwin delay-Doppler PGM sidecar\n"
        f"db_min {vmin!r}\ndb_max {vmax!r}\n"
        f"delay_start_s {float(ddm.delay_axis[0])!r}\n"
        f"delay_step_s {ddm.delay_bin!r}\n"
        f"doppler_start_hz {float(ddm.doppler_axis[0])!r}\n"
        f"doppler_step_hz {ddm.doppler_bin!r}\n"
        "orientation rows_top_to_bottom=doppler_high_to_low\n")


def pdp_to_csv(path, pdp: PdpSeries) -> None:
    with open(path, "w") as fh:
        fh.write("t," + ",".join(repr(d) for d in pdp.delay_axis.tolist()) + "\n")
        for t, row in zip(pdp.times.tolist(), pdp.power_db.tolist()):
            fh.write(f"{t!r}," + ",".join(repr(v) for v in row) + "\n")


_PDP_MAGIC = b"RFTPDP1\n"


def save_pdp(path, pdp: PdpSeries, frozen_clock: bool = False) -> None:
    meta = dict(pdp.metadata)
    meta["created"] = "frozen" if frozen_clock else _now()
    header = {"format": "rftwin-pdp", "version": 1,
              "n_epochs": int(pdp.power_db.shape[0]),
              "n_delay": int(pdp.power_db.shape[1]),
              "metadata": meta}
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_PDP_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(pdp.times, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(pdp.delay_axis, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(pdp.power_db, dtype="<f8").tobytes())


def load_pdp(path) -> PdpSeries:
    raw = Path(path).read_bytes()
    if raw[:8] != _PDP_MAGIC:
        raise ValueError(f"{path}: not a rftwin PDP file")
    hlen = struct.unpack_from("<I", raw, 8)[0]
    header = json.loads(raw[12:12 + hlen].decode())
    off = 12 + hlen
    n_e, n_d = header["n_epochs"], header["n_delay"]
    times = np.frombuffer(raw, "<f8", n_e, off).copy()
    off += 8 * n_e
    d_axis = np.frombuffer(raw, "<f8", n_d, off).copy()
    off += 8 * n_d
    power = np.frombuffer(raw, "<f8", n_e * n_d, off).reshape(n_e, n_d).copy()
    return PdpSeries(power, d_axis, times, header["metadata"])


def _now() -> str:
    import datetime
    return datetime.datetime.now(datetime.timezone.utc).isoformat()

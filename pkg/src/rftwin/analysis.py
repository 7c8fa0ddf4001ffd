"""Delay-Doppler map analysis: peak extraction and cross-map comparison."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fmcw import DelayDopplerMap


@dataclass(frozen=True)
class Peak:
    doppler_bin: int
    delay_bin: int
    doppler_hz: float
    delay_s: float
    power_db: float


def extract_peaks(ddm: DelayDopplerMap, threshold_db: float = 30.0,
                  min_separation: int = 2, max_peaks: int = 64) -> list[Peak]:
    """Local maxima within threshold_db of the map peak, strongest first.

    A cell qualifies if it is >= all eight neighbours; peaks closer than
    min_separation bins (Chebyshev distance) to an already accepted
    stronger peak are suppressed.
    """
    p = ddm.power_db
    cut = p.max() - threshold_db
    pad = np.pad(p, 1, mode="constant", constant_values=-np.inf)
    is_max = np.ones_like(p, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            is_max &= p >= pad[1 + di:1 + di + p.shape[0],
                               1 + dj:1 + dj + p.shape[1]]
    cand = np.argwhere(is_max & (p >= cut))
    order = np.argsort(p[cand[:, 0], cand[:, 1]])[::-1]
    peaks: list[Peak] = []
    for idx in order:
        i, j = map(int, cand[idx])
        if any(max(abs(i - q.doppler_bin), abs(j - q.delay_bin)) < min_separation
               for q in peaks):
            continue
        peaks.append(Peak(i, j, float(ddm.doppler_axis[i]),
                          float(ddm.delay_axis[j]), float(p[i, j])))
        if len(peaks) >= max_peaks:
            break
    return peaks


@dataclass(frozen=True)
class PeakMatch:
    reference: Peak
    test: Peak

    @property
    def delay_bin_error(self) -> int:
        return self.test.delay_bin - self.reference.delay_bin

    @property
    def doppler_bin_error(self) -> int:
        return self.test.doppler_bin - self.reference.doppler_bin

    @property
    def power_error_db(self) -> float:
        return self.test.power_db - self.reference.power_db


@dataclass
class MatchReport:
    matches: list[PeakMatch] = field(default_factory=list)
    unmatched_reference: list[Peak] = field(default_factory=list)
    unmatched_test: list[Peak] = field(default_factory=list)

    @property
    def max_delay_bin_error(self) -> int:
        return max((abs(m.delay_bin_error) for m in self.matches), default=0)

    @property
    def max_doppler_bin_error(self) -> int:
        return max((abs(m.doppler_bin_error) for m in self.matches), default=0)

    @property
    def max_power_error_db(self) -> float:
        return max((abs(m.power_error_db) for m in self.matches), default=0.0)

    def summary(self) -> str:
        return (f"{len(self.matches)} matched, "
                f"{len(self.unmatched_reference)} reference-only, "
                f"{len(self.unmatched_test)} test-only; "
                f"max |delay err| {self.max_delay_bin_error} bins, "
                f"max |doppler err| {self.max_doppler_bin_error} bins, "
                f"max |power err| {self.max_power_error_db:.2f} dB")


def _axes_match(a: DelayDopplerMap, b: DelayDopplerMap) -> bool:
    return (a.power_db.shape == b.power_db.shape
            and np.allclose(a.delay_axis, b.delay_axis)
            and np.allclose(a.doppler_axis, b.doppler_axis))


def match_maps(reference: DelayDopplerMap, test: DelayDopplerMap,
               threshold_db: float = 30.0, gate_bins: int = 3,
               min_separation: int = 2) -> MatchReport:
    """Greedy nearest-peak association between two maps on identical axes.

    Reference peaks are visited strongest first; each takes the closest
    unclaimed test peak within gate_bins on both axes.
    """
    if not _axes_match(reference, test):
        raise ValueError("maps have different axes; compare maps produced "
                         "with the same chirp config and window length")
    ref_peaks = extract_peaks(reference, threshold_db, min_separation)
    test_peaks = extract_peaks(test, threshold_db, min_separation)
    report = MatchReport()
    free = list(test_peaks)
    for rp in ref_peaks:
        best = None
        best_d = None
        for tp in free:
            dd = abs(tp.doppler_bin - rp.doppler_bin)
            dt = abs(tp.delay_bin - rp.delay_bin)
            if dd > gate_bins or dt > gate_bins:
                continue
            d = (dd * dd + dt * dt, -tp.power_db)
            if best_d is None or d < best_d:
                best, best_d = tp, d
        if best is None:
            report.unmatched_reference.append(rp)
        else:
            free.remove(best)
            report.matches.append(PeakMatch(rp, best))
    report.unmatched_test = free
    return report


def ridge_fraction(ddm: DelayDopplerMap, half_width_bins: int = 1) -> float:
    """Fraction of total linear map power within +-half_width_bins of zero
    Doppler."""
    power = ddm.power_linear()
    zero = int(np.argmin(np.abs(ddm.doppler_axis)))
    lo = max(zero - half_width_bins, 0)
    hi = min(zero + half_width_bins + 1, power.shape[0])
    return float(power[lo:hi].sum() / power.sum())


def peak_to_sidelobe_db(ddm: DelayDopplerMap, exclude_bins: int = 3) -> float:
    """Main peak power over the strongest cell outside its exclusion box."""
    p = ddm.power_db
    i, j = np.unravel_index(np.argmax(p), p.shape)
    masked = p.copy()
    masked[max(0, i - exclude_bins):i + exclude_bins + 1,
           max(0, j - exclude_bins):j + exclude_bins + 1] = -np.inf
    return float(p[i, j] - masked.max())

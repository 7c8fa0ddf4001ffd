"""Command-line pipeline: scene -> CIR -> beat -> maps -> comparison.

Subcommands
    simulate   trace a scene over an episode and write the CIR + path dump
    process    synthesize beats from a CIR and write PDP + delay-Doppler maps
    predict    write the analytic delay-Doppler prediction for a CIR window
    compare    match peaks between two maps on identical axes
    info       print the header of a scene / CIR / map / PDP file

Exit codes: 0 ok, 2 input error, 3 contract mismatch between otherwise
valid inputs, 4 internal error.  RFTWIN_OUT sets the default output
directory.  --frozen-clock pins header timestamps so reruns with the same
arguments are byte-identical.

Heavy numeric imports happen inside the command handlers so that --threads
can cap the BLAS/OpenMP pools before they start.
"""

from __future__ import annotations

import argparse
import json
import os
import struct
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONTRACT = 3
EXIT_INTERNAL = 4


class InputError(Exception):
    pass


class ContractError(Exception):
    pass


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("RFTWIN_OUT", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {p}")
    return p


def _positive(kind, name, value):
    if value <= 0:
        raise InputError(f"--{name} must be a positive {kind}, got {value}")
    return value


def _chirp_config(args):
    from .channel import ChirpConfig
    kwargs = {}
    for flag, field in (("f_c", "f_c"), ("bandwidth", "bandwidth"),
                        ("t_chirp", "t_chirp"), ("t_idle", "t_idle"),
                        ("slope", "slope"), ("f_samp", "f_samp"),
                        ("chirps", "n_chirps_total")):
        value = getattr(args, flag)
        if value is not None:
            kwargs[field] = value
    try:
        return ChirpConfig(**kwargs)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _add_chirp_flags(sub):
    g = sub.add_argument_group("chirp overrides")
    g.add_argument("--f-c", dest="f_c", type=float, help="carrier frequency [Hz]")
    g.add_argument("--bandwidth", type=float, help="sweep bandwidth [Hz]")
    g.add_argument("--t-chirp", dest="t_chirp", type=float, help="active chirp time [s]")
    g.add_argument("--t-idle", dest="t_idle", type=float, help="inter-chirp idle [s]")
    g.add_argument("--slope", type=float, help="chirp slope [Hz/s]")
    g.add_argument("--f-samp", dest="f_samp", type=float, help="ADC rate [Hz]")
    g.add_argument("--chirps", type=int, help="chirps in the episode")


def _add_common(sub):
    sub.add_argument("-o", "--out", help="output directory (default $RFTWIN_OUT or .)")
    sub.add_argument("--tag", help="basename for output files")
    sub.add_argument("--frozen-clock", action="store_true",
                     help="write 'frozen' instead of a timestamp in headers")


def cmd_simulate(args) -> int:
    from .channel import SensingLink, cir_to_csv, save_cir, simulate_cir
    from .raytrace import TraceConfig
    from .scene import SceneError, load_scene

    scene_path = _require_file(args.scene)
    try:
        scene = load_scene(scene_path)
    except (SceneError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"{scene_path}: {exc}") from exc

    if args.mode == "mono":
        rx = args.rx or args.tx
        if rx != args.tx:
            raise InputError("mono-static mode requires tx and rx to match")
    else:
        rx = args.rx
        if rx is None:
            raise InputError("bi-static mode requires --rx")
    link = SensingLink(tx_id=args.tx, rx_id=rx)
    config = _chirp_config(args)
    try:
        trace = TraceConfig(max_specular_order=args.max_order,
                            diffuse_enabled=not args.no_diffuse,
                            diffuse_samples_per_facet=args.diffuse_samples,
                            seed=args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc

    try:
        frames = simulate_cir(scene, link, config, trace, t0=args.t0)
    except SceneError as exc:
        raise InputError(str(exc)) from exc

    out = _out_dir(args)
    tag = args.tag or scene_path.stem
    cir_path = out / f"{tag}.cir"
    save_cir(cir_path, frames, config, link, trace=trace, t0=args.t0,
             frozen_clock=args.frozen_clock,
             extra={"scene": scene_path.name, "seed": args.seed})
    csv_path = out / f"{tag}_paths.csv"
    cir_to_csv(csv_path, frames)

    counts: dict[str, int] = {}
    for fr in frames:
        for p in fr.paths:
            counts[p.kind] = counts.get(p.kind, 0) + 1
    summary = {"frames": len(frames), "t0": args.t0,
               "paths_per_kind": counts, "seed": args.seed,
               "dropped_beyond_max_delay": sum(fr.n_dropped for fr in frames)}
    (out / f"{tag}_summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(f"wrote {cir_path} ({len(frames)} frames), {csv_path}")
    for kind in sorted(counts):
        print(f"  {kind}: {counts[kind]} path records")
    return EXIT_OK


def _load_cir_checked(path: str):
    from .channel import load_cir
    p = _require_file(path)
    try:
        return load_cir(p)
    except (ValueError, KeyError, json.JSONDecodeError, struct.error) as exc:
        raise InputError(f"{p}: {exc}") from exc


def cmd_process(args) -> int:
    from .channel import ChirpConfig
    from .fmcw import (NoiseConfig, delay_doppler, map_to_csv, map_to_pgm,
                       pdp_series, pdp_to_csv, save_map, save_pdp, synth_beat)

    frames, header = _load_cir_checked(args.cir)
    config = ChirpConfig(**header["config"])
    n = _positive("integer", "N", args.n_chirps)
    if n > len(frames):
        raise InputError(f"window of {n} chirps exceeds the {len(frames)} "
                         f"frames in {args.cir}")
    noise = NoiseConfig(enabled=args.noise, noise_figure_db=args.noise_figure,
                        tx_power_dbm=args.tx_power, seed=args.noise_seed)
    beats = synth_beat(frames, config, noise)

    out = _out_dir(args)
    tag = args.tag or Path(args.cir).stem
    formats = [f.strip() for f in args.export.split(",") if f.strip()]
    for f in formats:
        if f not in ("bin", "csv", "pgm"):
            raise InputError(f"unknown export format '{f}'")

    starts = list(range(args.t0_index, len(beats) - n + 1, args.stride or n))
    if args.num_windows is not None:
        starts = starts[:args.num_windows]
    if not starts:
        raise InputError(f"no complete {n}-chirp window starts at index "
                         f"{args.t0_index} in {len(beats)} beat frames")

    pdp = pdp_series(beats, config, window=args.window)
    pdp.metadata["seed"] = header.get("extra", {}).get("seed")
    if "bin" in formats:
        save_pdp(out / f"{tag}.pdp", pdp, frozen_clock=args.frozen_clock)
    if "csv" in formats:
        pdp_to_csv(out / f"{tag}_pdp.csv", pdp)
    written = []
    for start in starts:
        ddm = delay_doppler(beats, config, t0_index=start, n_chirps=n,
                            window_fast=args.window, window_slow=args.window_slow,
                            zero_pad=args.zero_pad)
        ddm.metadata["seed"] = header.get("extra", {}).get("seed")
        base = out / f"{tag}_w{start:06d}"
        if "bin" in formats:
            save_map(f"{base}.ddm", ddm, frozen_clock=args.frozen_clock)
            written.append(f"{base}.ddm")
        if "csv" in formats:
            map_to_csv(f"{base}.csv", ddm)
            written.append(f"{base}.csv")
        if "pgm" in formats:
            map_to_pgm(f"{base}.pgm", ddm)
            written.append(f"{base}.pgm")
    t_w = config.window_duration(n)
    print(f"processed {len(beats)} beat frames; window {n} chirps "
          f"(T_w = {t_w * 1e3:.5f} ms); wrote {len(written)} map files")
    for name in written:
        print(f"  {name}")
    return EXIT_OK


def cmd_predict(args) -> int:
    from .channel import ChirpConfig
    from .fmcw import map_to_csv, map_to_pgm, predicted_map, save_map

    frames, header = _load_cir_checked(args.cir)
    config = ChirpConfig(**header["config"])
    n = _positive("integer", "N", args.n_chirps)
    try:
        ddm = predicted_map(frames, config, t0_index=args.t0_index, n_chirps=n)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    ddm.metadata["seed"] = header.get("extra", {}).get("seed")

    out = _out_dir(args)
    tag = args.tag or Path(args.cir).stem
    base = out / f"{tag}_pred_w{args.t0_index:06d}"
    formats = [f.strip() for f in args.export.split(",") if f.strip()]
    for f in formats:
        if f not in ("bin", "csv", "pgm"):
            raise InputError(f"unknown export format '{f}'")
    if "bin" in formats:
        save_map(f"{base}.ddm", ddm, frozen_clock=args.frozen_clock)
    if "csv" in formats:
        map_to_csv(f"{base}.csv", ddm)
    if "pgm" in formats:
        map_to_pgm(f"{base}.pgm", ddm)
    print(f"wrote analytic map {base} (T_w = {ddm.metadata['t_window'] * 1e3:.5f} ms)")
    return EXIT_OK


def cmd_compare(args) -> int:
    from .analysis import match_maps
    from .fmcw import load_map

    def load(path):
        p = _require_file(path)
        try:
            return load_map(p)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise InputError(f"{p}: {exc}") from exc

    reference = load(args.reference)
    test = load(args.test)
    try:
        report = match_maps(reference, test, threshold_db=args.threshold,
                            gate_bins=args.gate)
    except ValueError as exc:
        raise ContractError(str(exc)) from exc

    payload = {
        "reference": args.reference,
        "test": args.test,
        "threshold_db": args.threshold,
        "gate_bins": args.gate,
        "matches": [
            {"ref_delay_bin": m.reference.delay_bin,
             "ref_doppler_bin": m.reference.doppler_bin,
             "ref_power_db": m.reference.power_db,
             "test_delay_bin": m.test.delay_bin,
             "test_doppler_bin": m.test.doppler_bin,
             "test_power_db": m.test.power_db,
             "delay_bin_error": m.delay_bin_error,
             "doppler_bin_error": m.doppler_bin_error,
             "power_error_db": m.power_error_db}
            for m in report.matches],
        "unmatched_reference": len(report.unmatched_reference),
        "unmatched_test": len(report.unmatched_test),
        "summary": report.summary(),
    }
    out = _out_dir(args)
    tag = args.tag or "compare"
    report_path = out / f"{tag}_report.json"
    report_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")

    print(report.summary())
    print(f"{'ref (dop,del)':>16} {'test (dop,del)':>16} {'d_dop':>6} "
          f"{'d_del':>6} {'d_pow dB':>9}")
    for m in report.matches:
        print(f"{f'({m.reference.doppler_bin},{m.reference.delay_bin})':>16} "
              f"{f'({m.test.doppler_bin},{m.test.delay_bin})':>16} "
              f"{m.doppler_bin_error:>6d} {m.delay_bin_error:>6d} "
              f"{m.power_error_db:>9.2f}")
    print(f"wrote {report_path}")
    return EXIT_OK


def cmd_info(args) -> int:
    p = _require_file(args.file)
    head = p.read_bytes()[:8]
    if head == b"RFTCIR1\n":
        from .channel import load_cir
        frames, header = load_cir(p)
        print(f"{p}: CIR, {len(frames)} frames, link {header['link']}, "
              f"t0 = {header['t0']}")
        print(json.dumps(header["config"], sort_keys=True, indent=2))
    elif head == b"RFTDDM1\n":
        from .fmcw import load_map
        ddm = load_map(p)
        print(f"{p}: delay-Doppler map, {ddm.power_db.shape[0]} x "
              f"{ddm.power_db.shape[1]} bins, "
              f"T_w = {ddm.metadata.get('t_window', 0.0) * 1e3:.5f} ms, "
              f"peak {ddm.power_db.max():.2f} dB")
        print(json.dumps(ddm.metadata, sort_keys=True, indent=2))
    elif head == b"RFTPDP1\n":
        from .fmcw import load_pdp
        pdp = load_pdp(p)
        print(f"{p}: PDP series, {pdp.power_db.shape[0]} epochs x "
              f"{pdp.power_db.shape[1]} delay bins")
    else:
        from .scene import load_scene
        try:
            scene = load_scene(p)
        except Exception as exc:
            raise InputError(f"{p}: unrecognized file ({exc})") from exc
        lo, hi = scene.t_span
        print(f"{p}: scene '{scene.name}', {len(scene.facets)} facets, "
              f"{len(scene.transceivers)} transceivers, {len(scene.bodies)} "
              f"bodies, t in [{lo}, {hi}]")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rftwin",
        description="Ray-traced RF digital twin: time-varying CIRs, FMCW "
                    "beat synthesis, and delay-Doppler map validation.")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap numeric worker threads")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="trace a scene into a CIR file")
    sim.add_argument("--scene", required=True, help="scene JSON path")
    sim.add_argument("--mode", choices=("mono", "bi"), default="mono")
    sim.add_argument("--tx", required=True, help="transmit transceiver id")
    sim.add_argument("--rx", help="receive transceiver id (defaults to --tx)")
    sim.add_argument("--t0", type=float, default=0.0, help="episode start [s]")
    sim.add_argument("--max-order", type=int, default=2,
                     help="highest specular bounce count")
    sim.add_argument("--no-diffuse", action="store_true")
    sim.add_argument("--diffuse-samples", type=int, default=16,
                     help="base diffuse samples per facet")
    sim.add_argument("--seed", type=int, default=1729)
    _add_chirp_flags(sim)
    _add_common(sim)
    sim.set_defaults(func=cmd_simulate)

    proc = sub.add_parser("process", help="beats, PDP, and maps from a CIR")
    proc.add_argument("--cir", required=True)
    proc.add_argument("-N", "--n-chirps", type=int, default=128,
                      help="chirps per delay-Doppler window")
    proc.add_argument("--t0-index", type=int, default=0)
    proc.add_argument("--stride", type=int, default=None,
                      help="chirps between window starts (default N)")
    proc.add_argument("--num-windows", type=int, default=None)
    proc.add_argument("--window", default="hann", help="fast-time window")
    proc.add_argument("--window-slow", default="hann", help="slow-time window")
    proc.add_argument("--zero-pad", action="store_true",
                      help="double the fast-time FFT length")
    proc.add_argument("--export", default="bin", help="comma list: bin,csv,pgm")
    proc.add_argument("--noise", action="store_true", help="enable AWGN")
    proc.add_argument("--noise-figure", type=float, default=15.0)
    proc.add_argument("--tx-power", type=float, default=12.0)
    proc.add_argument("--noise-seed", type=int, default=0)
    _add_common(proc)
    proc.set_defaults(func=cmd_process)

    pred = sub.add_parser("predict", help="analytic map for one CIR window")
    pred.add_argument("--cir", required=True)
    pred.add_argument("-N", "--n-chirps", type=int, default=128)
    pred.add_argument("--t0-index", type=int, default=0)
    pred.add_argument("--export", default="bin", help="comma list: bin,csv,pgm")
    _add_common(pred)
    pred.set_defaults(func=cmd_predict)

    comp = sub.add_parser("compare", help="peak-match two maps")
    comp.add_argument("--reference", required=True)
    comp.add_argument("--test", required=True)
    comp.add_argument("--threshold", type=float, default=30.0,
                      help="peaks within this many dB of the max")
    comp.add_argument("--gate", type=int, default=3,
                      help="association gate in bins")
    _add_common(comp)
    comp.set_defaults(func=cmd_compare)

    info = sub.add_parser("info", help="describe a scene / CIR / map file")
    info.add_argument("file")
    info.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads <= 0:
            print("error: --threads must be positive", file=sys.stderr)
            return EXIT_INPUT
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except Exception as exc:  # pragma: no cover - defensive catch-all
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

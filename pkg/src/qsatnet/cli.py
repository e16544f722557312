"""Command-line entry point.

Subcommands:

    run            execute a scenario file, emit a JSON-lines trace
    rates-sweep    mean-rate surface over an aperture grid, as CSV
    channel-sample draw transmittance samples from a channel model, as CSV
    packet encode  JSON packet description -> hex frame
    packet decode  hex frame -> JSON packet description

Exit codes: 0 success, 2 configuration error, 3 runtime failure.  All
outputs are byte-reproducible for a fixed seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

import numpy as np

from . import channel as ch
from . import packet as pk
from . import rates
from .engine import make_stream
from .scenario import ConfigError, load_scenario, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

DEFAULT_WAIST_GRID = "0.1:1.0:10"
DEFAULT_RX_GRID = "0.125:1.25:10"


def _parse_grid(spec: str) -> list:
    """Grid syntax: comma-separated values or lo:hi:count (inclusive)."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must be lo:hi:count, got {spec!r}")
        lo, hi = float(parts[0]), float(parts[1])
        count = int(parts[2])
        if count < 1:
            raise ValueError(f"grid count must be >= 1, got {count}")
        if count == 1:
            return [lo]
        return list(np.linspace(lo, hi, count))
    values = [float(v) for v in spec.split(",") if v.strip()]
    if not values:
        raise ValueError(f"empty grid {spec!r}")
    return values


def _open_output(path: Optional[str]):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _jsonl(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n"


def _cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        if args.seed is not None:
            scenario.seed = args.seed
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out, close = _open_output(args.output)
    try:
        network, summary = run_scenario(scenario,
                                        trace_sink=lambda r: out.write(_jsonl(r)))
        out.write(_jsonl({"summary": summary}))
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        if close:
            out.close()
    return EXIT_OK


def _cmd_rates_sweep(args) -> int:
    try:
        waists = _parse_grid(args.waist_grid)
        rx = _parse_grid(args.rx_grid)
        if args.distance <= 0:
            raise ValueError(f"distance must be > 0, got {args.distance}")
        if args.b < 0:
            raise ValueError(f"b must be >= 0, got {args.b}")
        if args.samples < 1:
            raise ValueError(f"samples must be >= 1, got {args.samples}")
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    surface = rates.sweep(waists, rx, args.distance, args.b,
                          wavelength=args.wavelength, n_samples=args.samples,
                          seed=args.seed if args.seed is not None else 0,
                          parallel=args.parallel)
    out, close = _open_output(args.output)
    try:
        if args.format == "jsonl":
            for p in surface.points():
                out.write(_jsonl({"tx_waist_m": p.tx_waist,
                                  "rx_radius_m": p.rx_radius,
                                  "distance_m": p.distance, "b": p.b,
                                  "mean_rate_ebits": p.mean_rate}))
        else:
            out.write("tx_waist_m,rx_radius_m,distance_m,b,mean_rate_ebits\n")
            for p in surface.points():
                out.write(f"{p.tx_waist!r},{p.rx_radius!r},{p.distance!r},"
                          f"{p.b!r},{p.mean_rate!r}\n")
    finally:
        if close:
            out.close()
    return EXIT_OK


def _build_channel_model(args):
    if args.model == "fixed":
        return ch.FixedDiffraction(ch.BeamParams(args.waist, args.wavelength),
                                   args.rx_radius, args.distance)
    if args.model == "downlink":
        return ch.DownlinkGaussianTail(args.eta0, args.b)
    eta_diff = args.eta_diffraction
    sigma = args.sigma_wander
    if args.calibrate_target_db is not None:
        sigma = ch.calibrate_uplink_sigma(eta_diff, args.beam_radius_rx,
                                          args.calibrate_target_db)
    elif sigma is None:
        raise ValueError("uplink model needs --sigma-wander or "
                         "--calibrate-target-db")
    return ch.UplinkPointingFade(eta_diff, args.beam_radius_rx, sigma,
                                 args.fade_coherence)


def _cmd_channel_sample(args) -> int:
    try:
        model = _build_channel_model(args)
        if args.n < 1:
            raise ValueError(f"n must be >= 1, got {args.n}")
    except (ValueError, ch.InfeasibleTargetError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = args.seed if args.seed is not None else 0
    rng = make_stream(seed, "channel-sample", args.model)
    n = args.n
    if isinstance(model, ch.FixedDiffraction):
        times = np.arange(n, dtype=float)
        etas = np.full(n, model.eta)
    elif isinstance(model, ch.DownlinkGaussianTail):
        times = np.arange(n, dtype=float)
        etas = np.asarray(ch.sample_downlink(model, rng, n))
    else:
        step = model.fade_coherence_time if args.t_step is None else args.t_step
        times = np.arange(n, dtype=float) * step
        etas = np.array([ch.sample_uplink(model, rng, t) for t in times])
    out, close = _open_output(args.output)
    try:
        rows = ((float(t), float(e)) for t, e in zip(times, etas))
        if args.format == "jsonl":
            for t, e in rows:
                out.write(_jsonl({"t": t, "eta": e,
                                  "loss_db": ch.db_from_eta(e)}))
        else:
            out.write("t,eta,loss_db\n")
            for t, e in rows:
                out.write(f"{t!r},{e!r},{ch.db_from_eta(e)!r}\n")
    finally:
        if close:
            out.close()
    return EXIT_OK


def _cmd_packet_encode(args) -> int:
    raw = sys.stdin.buffer.read() if args.input is None else open(
        args.input, "rb").read()
    try:
        spec = json.loads(raw.decode("utf-8"))
        data = pk.encode(pk.packet_from_dict(spec))
    except (json.JSONDecodeError, KeyError, UnicodeDecodeError) as exc:
        print(f"config error: bad packet description: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except pk.EncodeValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.raw:
        sys.stdout.buffer.write(data)
    else:
        out, close = _open_output(args.output)
        out.write(data.hex() + "\n")
        if close:
            out.close()
    return EXIT_OK


def _cmd_packet_decode(args) -> int:
    if args.raw:
        data = sys.stdin.buffer.read() if args.input is None else open(
            args.input, "rb").read()
    else:
        text = sys.stdin.read() if args.input is None else open(
            args.input, "r", encoding="utf-8").read()
        try:
            data = bytes.fromhex("".join(text.split()))
        except ValueError as exc:
            print(f"config error: bad hex input: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        decoded = pk.decode(data)
    except pk.PacketError as exc:
        record = {"error": type(exc).__name__, "offset": exc.offset,
                  "message": str(exc)}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return EXIT_RUNTIME
    out, close = _open_output(args.output)
    out.write(json.dumps(pk.packet_to_dict(decoded), sort_keys=True,
                         indent=2) + "\n")
    if close:
        out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsatnet",
        description="Satellite-terrestrial quantum network simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="root seed for all random streams")
        p.add_argument("--output", "-o", default=None,
                       help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "jsonl"), default="csv",
                       help="tabular output format")

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("scenario", help="path to the scenario INI file")
    add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("rates-sweep",
                             help="mean-rate surface over an aperture grid")
    p_sweep.add_argument("--distance", type=float, required=True,
                         help="link distance [m]")
    p_sweep.add_argument("--b", type=float, default=0.1,
                         help="downlink deviation parameter")
    p_sweep.add_argument("--waist-grid", default=DEFAULT_WAIST_GRID,
                         help="tx waist radii [m]: lo:hi:count or v1,v2,...")
    p_sweep.add_argument("--rx-grid", default=DEFAULT_RX_GRID,
                         help="rx aperture radii [m]: lo:hi:count or v1,v2,...")
    p_sweep.add_argument("--samples", type=int, default=100_000,
                         help="Monte-Carlo draws per grid point")
    p_sweep.add_argument("--wavelength", type=float, default=ch.DEFAULT_WAVELENGTH)
    p_sweep.add_argument("--parallel", action="store_true",
                         help="evaluate grid points on a thread pool "
                              "(bit-identical to serial)")
    add_common(p_sweep)
    p_sweep.set_defaults(func=_cmd_rates_sweep)

    p_chan = sub.add_parser("channel-sample",
                            help="draw transmittance samples from one model")
    p_chan.add_argument("--model", choices=("fixed", "downlink", "uplink"),
                        required=True)
    p_chan.add_argument("--n", type=int, default=1000, help="number of samples")
    p_chan.add_argument("--waist", type=float, default=0.2,
                        help="fixed model: tx waist radius [m]")
    p_chan.add_argument("--rx-radius", type=float, default=1.25,
                        help="fixed model: rx aperture radius [m]")
    p_chan.add_argument("--distance", type=float, default=1200e3,
                        help="fixed model: link distance [m]")
    p_chan.add_argument("--wavelength", type=float, default=ch.DEFAULT_WAVELENGTH)
    p_chan.add_argument("--eta0", type=float, default=0.3,
                        help="downlink model: diffraction-floor transmittance")
    p_chan.add_argument("--b", type=float, default=0.1,
                        help="downlink model: deviation parameter")
    p_chan.add_argument("--eta-diffraction", type=float, default=0.036,
                        help="uplink model: diffraction-only transmittance")
    p_chan.add_argument("--beam-radius-rx", type=float, default=1.1,
                        help="uplink model: beam radius at the receiver [m]")
    p_chan.add_argument("--sigma-wander", type=float, default=None,
                        help="uplink model: centroid jitter sigma [m]")
    p_chan.add_argument("--calibrate-target-db", type=float, default=None,
                        help="uplink model: pick sigma to hit this mean loss")
    p_chan.add_argument("--fade-coherence", type=float,
                        default=ch.DEFAULT_FADE_COHERENCE,
                        help="uplink model: fading coherence interval [s]")
    p_chan.add_argument("--t-step", type=float, default=None,
                        help="uplink model: sample spacing in time "
                             "(default: one coherence interval)")
    add_common(p_chan)
    p_chan.set_defaults(func=_cmd_channel_sample)

    p_pkt = sub.add_parser("packet", help="hybrid frame codec")
    pkt_sub = p_pkt.add_subparsers(dest="packet_command", required=True)
    p_enc = pkt_sub.add_parser("encode", help="JSON description -> hex frame")
    p_enc.add_argument("--input", "-i", default=None,
                       help="JSON file (default: stdin)")
    p_enc.add_argument("--raw", action="store_true",
                       help="write raw binary to stdout instead of hex")
    add_common(p_enc)
    p_enc.set_defaults(func=_cmd_packet_encode)
    p_dec = pkt_sub.add_parser("decode", help="hex frame -> JSON description")
    p_dec.add_argument("--input", "-i", default=None,
                       help="hex file (default: stdin)")
    p_dec.add_argument("--raw", action="store_true",
                       help="read raw binary from stdin instead of hex")
    add_common(p_dec)
    p_dec.set_defaults(func=_cmd_packet_decode)

    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end. Every verb that produces artifacts writes them to a
run directory together with ``manifest.json`` recording the seed and config hash."""

from __future__ import annotations

import argparse
import asyncio
import csv
import datetime
import hashlib
import json
import logging
import platform
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from . import __version__
from .errors import TelemetryError

log = logging.getLogger("rantelemetry")


def write_manifest(out: Path, verb: str, config: dict, seed=None, extra: dict | None = None) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    manifest = {
        "verb": verb,
        "seed": seed,
        "config": config,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "versions": {"rantelemetry": __version__, "python": platform.python_version()},
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        **(extra or {}),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def _read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


# --- verbs ---------------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .sim import SimConfig, UeSpec, run

    if args.config:
        config = SimConfig.from_dict(_read_json(args.config), base_dir=Path(args.config).parent)
    else:
        ues = tuple(UeSpec(0x4601 + i, mcs_trace=((0, args.mcs),)) for i in range(args.ues))
        config = SimConfig(ues=ues)
    overrides = {
        "seed": args.seed,
        "duration_tti": args.duration_tti,
        "retransmission_probability": args.retx,
        "dci_loss_probability": args.loss,
        "ul_dci_loss_probability": args.ul_loss,
    }
    config = replace(config, **{k: v for k, v in overrides.items() if v is not None})
    result = run(config)
    out = Path(args.out)
    result.write(out)
    write_manifest(out, "simulate", config.to_dict(), config.seed, {"run_id": result.run_id})
    n_dci = sum(1 for e in result.ground_truth if e["kind"] == "dci")
    print(f"run {result.run_id}: {config.duration_tti} TTIs, {n_dci} DCIs -> {out}")
    return 0


def _load_cell(path, header: dict):
    from .rrc import parse_sib1

    cell = parse_sib1(Path(path).read_text())
    if "bw" in header or "scs" in header:
        cell = replace(
            cell,
            carrier_bandwidth_prb=int(header.get("bw", cell.carrier_bandwidth_prb)),
            subcarrier_spacing_khz=int(header.get("scs", cell.subcarrier_spacing_khz)),
        )
    return cell


def cmd_replay(args) -> int:
    from .capacity import write_csv
    from .sim import read_trace

    trace_path = Path(args.trace)
    with open(trace_path) as fh:
        trace = read_trace(fh)
    cell = _load_cell(args.cell_config, trace.header)
    docs = Path(args.docs) if args.docs else trace_path.parent
    from .pipeline import ObserverPipeline

    pipeline = ObserverPipeline(
        cell,
        doc_loader=lambda name: (docs / name).read_text(),
        tdd_pattern=trace.header.get("tdd"),
        window_ms=args.window_ms,
        fair_share=args.fair_share,
        legacy_divisor=args.legacy_divisor,
        keep_decoded=False,
    )
    rows = []

    def on_tti(tti):
        if tti % args.every:
            return
        rec = pipeline.estimator.last_record
        for rnti in pipeline.registry.rntis():
            s = pipeline.sample(rnti)
            rows.append((tti, f"{rnti:#06x}", s.b_alloc, s.b_spare, rec.used_prb_total, rec.spare_prb))

    end = int(args.end_tti) if args.end_tti else None
    pipeline.run(trace.records, end_tti=end, on_tti=on_tti)
    out = Path(args.out)
    write_manifest(out, "replay", vars(args) | {"trace_header": trace.header}, trace.header.get("seed"))
    write_csv(out / "telemetry.csv", rows)
    stats = vars(pipeline.stats)
    (out / "stats.json").write_text(json.dumps(stats, indent=2) + "\n")
    print(json.dumps(stats))
    return 0


def cmd_report(args) -> int:
    from .report import report_accuracy

    rep = report_accuracy(args.run, benchmark_ttis=args.benchmark_ttis)
    out = Path(args.out or args.run)
    data = rep.to_dict()
    write_manifest(out / "report", "report", {"run": str(args.run), "benchmark_ttis": args.benchmark_ttis})
    (out / "report" / "accuracy.json").write_text(json.dumps(data, indent=2) + "\n")
    with open(out / "report" / "throughput_errors.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["relative_error"])
        w.writerows([e] for e in rep.throughput_errors)
    miss = data["miss_rate"]
    tp = data["throughput_error"]
    print(f"miss rate dl {miss['dl']:.5%} ul {miss['ul']:.5%}  prb error mean {data['prb_error_mean']:.4f}")
    print(f"throughput error p50 {tp['p50']:.5%} p75 {tp['p75']:.5%} p90 {tp['p90']:.5%} over {tp['windows']} windows")
    for n, t in data["processing_us"].items():
        print(f"{n} DCI/TTI: {t['mean']:.1f} +- {t['stdev']:.1f} us")
    return 0


def _plot_endtoend(reports, out: Path):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib not installed; skipping plots")
        return
    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(8, 8))
    for name, rep in reports.items():
        ticks = rep.ticks[::20]
        t = [row[0] * rep.tti_ms / 1000 for row in ticks]
        axes[0].plot(t, [row[3] / 1e6 for row in ticks], label=name)
        axes[1].plot(t, [min(row[4], 2000) for row in ticks], label=name)
        axes[2].plot(t, [row[6] for row in ticks], label=name)
    axes[0].set_ylabel("video Mbit/s")
    axes[1].set_ylabel("queue delay ms")
    axes[2].set_ylabel("height px")
    axes[2].set_xlabel("time s")
    axes[0].legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(out / "endtoend.png", dpi=100)
    plt.close(fig)


def cmd_endtoend(args) -> int:
    from .endtoend import POLICIES, TICK_COLUMNS, Scenario, compare_policies

    base = Scenario.from_dict(_read_json(args.scenario)) if args.scenario else Scenario()
    overrides = {"seed": args.seed, "duration_s": args.duration_s, "drop_at_s": args.drop_at_s}
    base = replace(base, **{k: v for k, v in overrides.items() if v is not None})
    policies = POLICIES if args.policy == "all" else (args.policy,)
    reports = compare_policies(base, policies)
    out = Path(args.out)
    write_manifest(out, "endtoend", base.to_dict() | {"policies": list(policies)}, base.seed)
    summary = {name: rep.summary() for name, rep in reports.items()}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for name, rep in reports.items():
        with open(out / f"ticks_{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TICK_COLUMNS)
            w.writerows(rep.ticks[:: args.every])
    if args.plot:
        _plot_endtoend(reports, out)
    for name, s in summary.items():
        rec = "never" if s["recovery_s"] is None else f"{s['recovery_s']:.3f}s"
        print(
            f"{name:14s} qoe {s['qoe']:+.3f}  latency {s['mean_latency_ms']:8.1f} ms  loss {s['loss']:.3f}  "
            f"height {s['mean_height']:6.1f}  fps {s['mean_fps']:5.1f}  recovery {rec}"
        )
    return 0


def cmd_parse_config(args) -> int:
    from .docparse import parse_listing
    from .rrc import parse_msg4, parse_sib1, summary

    from .errors import ConfigError

    out = {}
    cell = ue = None
    for path in args.paths:
        text = Path(path).read_text()
        try:
            out.setdefault("documents", {})[path] = {"kind": "sib1", **summary(parse_sib1(text))}
        except ConfigError:
            out.setdefault("documents", {})[path] = {"kind": "msg4", **summary(parse_msg4(text))}
    if args.sib1:
        cell = parse_sib1(Path(args.sib1).read_text())
        out["cell"] = summary(cell)
    listing = Path(args.listing).read_text() if args.listing else None
    if args.msg4:
        ue = parse_msg4(Path(args.msg4).read_text(), listing)
        out["ue"] = summary(ue)
    if listing and cell and ue:
        from .dci import dci_from_listing, dci_to_grant

        dci, rnti = dci_from_listing(parse_listing(listing))
        g = dci_to_grant(dci, cell, ue, rnti)
        out["grant"] = {
            "rnti": f"{rnti:#06x}",
            "direction": g.direction.value,
            "prbs": [g.start_prb, g.num_prb],
            "symbols": [g.start_symbol, g.num_symbols],
            "modulation_order": g.modulation_order,
            "code_rate": str(g.code_rate),
            "layers": g.num_layers,
            "tbs": g.tbs_bits,
        }
    print(json.dumps(out, indent=2, sort_keys=True, default=str))
    return 0


def cmd_tbs(args) -> int:
    from .tables import mcs_lookup
    from .tbs import ReCountInputs, compute_tbs, dmrs_re_per_prb, grant_tbs

    if args.n_info is not None:
        rate = Fraction(args.code_rate)
        print(compute_tbs(Fraction(args.n_info), rate, args.legacy_divisor))
        return 0
    if args.prb is None or args.mcs is None:
        print("tbs: give --n-info/--code-rate or --prb/--mcs", file=sys.stderr)
        return 2
    dmrs = dmrs_re_per_prb(args.dmrs, 0, 14) if args.dmrs else args.dmrs_re
    inputs = ReCountInputs(args.prb, args.symbols, dmrs, args.xoverhead)
    print(grant_tbs(inputs, mcs_lookup(args.mcs, args.table), args.layers, args.legacy_divisor))
    return 0


def cmd_directory_serve(args) -> int:
    from .wire import Directory

    directory = Directory.load(args.registry)
    host, port = _addr(args.listen)

    async def main():
        server = await directory.serve(host, port)
        print(f"directory with {len(directory.servers)} servers on {server.sockets[0].getsockname()[:2]}", flush=True)
        async with server:
            await server.serve_forever()

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
    return 0


def cmd_telemetry_serve(args) -> int:
    from .rrc import parse_sib1
    from .service import TelemetryService
    from .sim import read_trace

    records, header, docs = [], {}, Path(".")
    if args.trace:
        with open(args.trace) as fh:
            trace = read_trace(fh)
        records, header, docs = trace.records, trace.header, Path(args.trace).parent
    cell = _load_cell(args.cell_config, header) if header else parse_sib1(Path(args.cell_config).read_text())
    service = TelemetryService(
        cell,
        records,
        doc_loader=lambda name: (docs / name).read_text(),
        tdd_pattern=header.get("tdd"),
        cadence_ms=args.cadence_ms,
        loop_trace=True,
    )
    host, port = _addr(args.listen)

    async def main():
        server = await service.serve(host, port)
        service.start()
        print(f"telemetry server on {server.sockets[0].getsockname()[:2]}", flush=True)
        try:
            async with server:
                await server.serve_forever()
        finally:
            service.stop()

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
    return 0


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rantelemetry", description="RAN capacity telemetry toolkit")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("simulate", help="run the simulated gNB and write a trace plus ground truth")
    s.add_argument("--config", help="simulation config JSON")
    s.add_argument("--out", "--out-dir", dest="out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--duration-tti", type=int)
    s.add_argument("--ues", type=int, default=4, help="UE count when no config is given")
    s.add_argument("--mcs", type=int, default=20, help="MCS for every UE when no config is given")
    s.add_argument("--retx", type=float)
    s.add_argument("--loss", type=float, help="downlink DCI loss probability")
    s.add_argument("--ul-loss", type=float, help="uplink DCI loss probability")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("replay", help="decode a trace and export per-UE telemetry")
    s.add_argument("--trace", required=True)
    s.add_argument("--cell-config", required=True, help="SIB1 document")
    s.add_argument("--docs", help="directory holding MSG4 documents (default: next to the trace)")
    s.add_argument("--out", required=True)
    s.add_argument("--every", type=int, default=20, help="export one row per UE every N TTIs")
    s.add_argument("--end-tti", type=int)
    s.add_argument("--window-ms", type=float, default=100)
    s.add_argument("--fair-share", choices=("active", "connected"), default="active")
    s.add_argument("--legacy-divisor", action="store_true")
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("report", help="accuracy report for a simulate run directory")
    s.add_argument("--run", required=True)
    s.add_argument("--out", help="default: the run directory")
    s.add_argument("--benchmark-ttis", type=int, default=0, help="also time the pipeline on N synthetic TTIs per DCI count")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("endtoend", help="closed-loop gameplay runs under each video policy")
    s.add_argument("--scenario", help="scenario JSON")
    s.add_argument("--policy", default="all")
    s.add_argument("--seed", type=int)
    s.add_argument("--duration-s", type=float)
    s.add_argument("--drop-at-s", type=float)
    s.add_argument("--every", type=int, default=20, help="write every Nth tick to the CSVs")
    s.add_argument("--plot", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_endtoend)

    s = sub.add_parser("parse-config", help="parse SIB1/MSG4 documents and an optional decoder listing")
    s.add_argument("paths", nargs="*", help="documents to classify as SIB1 or MSG4 automatically")
    s.add_argument("--sib1")
    s.add_argument("--msg4")
    s.add_argument("--listing")
    s.set_defaults(func=cmd_parse_config)

    s = sub.add_parser("tbs", help="transport block size from N_info or from grant parameters")
    s.add_argument("--n-info", type=Fraction)
    s.add_argument("--code-rate", default="1/2", help="p/q or decimal")
    s.add_argument("--prb", type=int)
    s.add_argument("--symbols", type=int, default=12)
    s.add_argument("--dmrs", help="14-character DMRS symbol bitmap")
    s.add_argument("--dmrs-re", type=int, default=0, help="DMRS REs per PRB when no bitmap is given")
    s.add_argument("--xoverhead", type=int, default=0)
    s.add_argument("--mcs", type=int)
    s.add_argument("--table", default="qam64")
    s.add_argument("--layers", type=int, default=1)
    s.add_argument("--legacy-divisor", action="store_true")
    s.set_defaults(func=cmd_tbs)

    s = sub.add_parser("directory-serve", help="serve the telemetry-server directory")
    s.add_argument("--registry", required=True)
    s.add_argument("--listen", default="127.0.0.1:7000")
    s.set_defaults(func=cmd_directory_serve)

    s = sub.add_parser("telemetry-serve", help="replay a trace and stream samples to RTSP-registered subscribers")
    s.add_argument("--cell-config", required=True)
    s.add_argument("--trace")
    s.add_argument("--listen", default="127.0.0.1:7100")
    s.add_argument("--cadence-ms", type=float, default=0.5)
    s.set_defaults(func=cmd_telemetry_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TelemetryError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

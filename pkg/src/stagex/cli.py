"""Command line entry point.

    stagex serve         run one store server
    stagex simulate      spawn rank processes and verify the run end to end
    stagex bench-putget  put/get latency across payload sizes
    stagex bench-codec   compression ratio and throughput per variable
    stagex project-ssim  fidelity of lossy staging as an image metric
    stagex fetch         fetch one variable from a staged simulation
    stagex verify        check a running or finished simulation

Reports are JSON on stdout, or written to --out.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import bench, minisim
from .analysis import attach
from .bench import default_codec_specs
from .config import load_config
from .errors import StagexError
from .server import ServerConfig, serve
from .synth import CorpusSpec


def _emit(report: dict, out) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _server_endpoint(args) -> str:
    if getattr(args, "server", None):
        return args.server
    if getattr(args, "config", None):
        return load_config(args.config).endpoints[0]
    raise StagexError("pass --server host:port or --config with a databases list")


def _corpus_spec(args) -> CorpusSpec:
    return CorpusSpec(
        n_particles=args.particles,
        n_halos=args.halos,
        box_size=args.box,
        background_fraction=args.background,
        seed=args.seed,
    )


def _add_corpus_flags(p: argparse.ArgumentParser, particles: int) -> None:
    p.add_argument("--particles", type=int, default=particles)
    p.add_argument("--halos", type=int, default=40)
    p.add_argument("--box", type=float, default=256.0)
    p.add_argument("--background", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)


def _parse_sizes(text: str) -> list[int]:
    try:
        return [int(float(tok) * 2**20) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise StagexError(f"--sizes must be comma-separated MiB values, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stagex", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run one store server")
    p.add_argument("--bind", required=True, metavar="HOST:PORT",
                   help="listen address; port 0 picks a free port")
    p.add_argument("--max-memory", type=int, default=0, metavar="BYTES",
                   help="reject writes beyond this footprint (0 = unlimited)")

    p = sub.add_parser("simulate", help="run a mini-simulation and verify it")
    p.add_argument("--config", required=True)
    p.add_argument("--ranks", type=int, default=4)
    p.add_argument("--steps", type=int, default=3)
    p.add_argument("--timeout", type=float, default=120.0)
    _add_corpus_flags(p, particles=40000)
    p.add_argument("--out")

    p = sub.add_parser("bench-putget", help="put/get latency benchmark")
    p.add_argument("--server", metavar="HOST:PORT")
    p.add_argument("--config")
    p.add_argument("--sizes", default="1,2,4,8,16,32,64,128,256",
                   help="comma-separated payload sizes in MiB")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--warmup", type=int, default=1,
                   help="untimed rounds per size before timing")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("bench-codec", help="compression ratio and throughput")
    p.add_argument("--server", metavar="HOST:PORT",
                   help="server for the end-to-end leg (default: in-process)")
    p.add_argument("--config",
                   help="take compression specs from this config's data list")
    p.add_argument("--eps", type=float, default=0.003,
                   help="absolute bound for x/y/z when no --config is given")
    _add_corpus_flags(p, particles=2_000_000)
    p.add_argument("--out")

    p = sub.add_parser("project-ssim", help="projection fidelity metric")
    p.add_argument("--eps", type=float, default=0.003)
    p.add_argument("--axis", choices=("x", "y", "z"), default="z")
    p.add_argument("--size", type=int, default=256, help="image width and height")
    p.add_argument("--pgm-dir", help="also write original/staged PGM images here")
    _add_corpus_flags(p, particles=2_000_000)
    p.add_argument("--out")

    p = sub.add_parser("fetch", help="fetch one variable from a staged sim")
    p.add_argument("--server", metavar="HOST:PORT", help="server 0 address")
    p.add_argument("--config")
    p.add_argument("--sim", required=True)
    p.add_argument("--step", type=int, required=True)
    p.add_argument("--var", required=True)
    p.add_argument("--rank", type=int, help="one rank only (default: all, concatenated)")
    p.add_argument("--out")

    p = sub.add_parser("verify", help="verify a running or finished sim")
    p.add_argument("--config", required=True)
    p.add_argument("--ranks", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--timeout", type=float, default=60.0)
    _add_corpus_flags(p, particles=40000)
    p.add_argument("--out")

    return parser


def _cmd_simulate(args) -> int:
    report = minisim.run_mini_sim(
        args.config, args.ranks, args.steps, _corpus_spec(args), timeout=args.timeout
    )
    _emit(report, args.out)
    return 0 if report["ok"] else 1


def _cmd_bench_putget(args) -> int:
    report = bench.bench_putget(
        _server_endpoint(args), _parse_sizes(args.sizes), args.reps, args.seed,
        warmup=args.warmup
    )
    _emit(report, args.out)
    return 0


def _cmd_bench_codec(args) -> int:
    if args.config:
        specs = list(load_config(args.config).specs.values())
    else:
        specs = default_codec_specs(args.eps)
    report = bench.bench_codec(_corpus_spec(args), specs, endpoint=args.server)
    _emit(report, args.out)
    return 0


def _cmd_project_ssim(args) -> int:
    report = bench.project_ssim(
        _corpus_spec(args),
        bound=args.eps,
        axis=args.axis,
        width=args.size,
        height=args.size,
        pgm_dir=args.pgm_dir,
    )
    _emit(report, args.out)
    return 0


def _cmd_fetch(args) -> int:
    session = attach(args.config if args.config else _server_endpoint(args), args.sim)
    if args.rank is None:
        values = session.get_variable_all_ranks(args.step, args.var)
        metas = [
            session.get_data(args.step, rank, args.var).meta.__dict__
            for rank in range(session.num_ranks)
        ]
    else:
        result = session.get_data(args.step, args.rank, args.var)
        values = result.values
        metas = [result.meta.__dict__]
    report = {
        "sim": args.sim,
        "step": args.step,
        "variable": args.var,
        "rank": args.rank,
        "count": int(values.size),
        "dtype": str(values.dtype),
        "values": values.tolist(),
        "metas": metas,
    }
    _emit(report, args.out)
    return 0


def _cmd_verify(args) -> int:
    cfg = load_config(args.config)
    report = minisim.verify_sim(
        args.config, cfg.sim_id, args.ranks, args.steps, _corpus_spec(args),
        timeout=args.timeout,
    )
    _emit(report, args.out)
    return 0 if report["ok"] else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            return serve(ServerConfig.from_bind(args.bind, max_memory=args.max_memory))
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "bench-putget":
            return _cmd_bench_putget(args)
        if args.command == "bench-codec":
            return _cmd_bench_codec(args)
        if args.command == "project-ssim":
            return _cmd_project_ssim(args)
        if args.command == "fetch":
            return _cmd_fetch(args)
        if args.command == "verify":
            return _cmd_verify(args)
        raise AssertionError(f"unhandled command {args.command}")
    except StagexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())

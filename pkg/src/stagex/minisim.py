"""Miniature end-to-end run: rank worker processes plus a live verifier.

`python -m stagex.minisim --config c.json --rank 1 --num-ranks 4 ...` is one
rank: it regenerates its deterministic slice each step, sends x/y/z/id,
marks the step done, and marks the run finished after the last step.  Ranks
share nothing but the config file and the servers.

run_mini_sim() spawns those workers and, while they execute, verifies from
the analysis side: every step must become ready exactly once, ids must come
back bit-exact, coordinates within the advertised bound, and the rank-order
concatenation must line up.
"""

from __future__ import annotations

import argparse
import subprocess
import sys
import time

import numpy as np

from .analysis import WaitResult, attach
from .client import init
from .config import load_config
from .errors import StagexError, UnknownSimulation
from .synth import CorpusSpec, rank_counts, rank_slice

SEND_VARIABLES = ("x", "y", "z", "id")


def run_rank(config_path, rank: int, num_ranks: int, steps: int,
             corpus_spec: CorpusSpec) -> int:
    client = init(num_ranks, config_path)
    try:
        for step in range(steps):
            data = rank_slice(corpus_spec, rank, num_ranks, step)
            for var in SEND_VARIABLES:
                client.send_data(rank, step, var, data[var])
            client.ts_done(rank, step)
        if steps:
            client.sim_done(rank, steps - 1)
        return 0
    finally:
        client.close()


def _corpus_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--particles", type=int, default=40000,
                        help="total particles across all ranks")
    parser.add_argument("--halos", type=int, default=40)
    parser.add_argument("--box", type=float, default=256.0)
    parser.add_argument("--background", type=float, default=0.2)
    parser.add_argument("--seed", type=int, default=0)


def corpus_from_args(args) -> CorpusSpec:
    return CorpusSpec(
        n_particles=args.particles,
        n_halos=args.halos,
        box_size=args.box,
        background_fraction=args.background,
        seed=args.seed,
    )


def spawn_rank(config_path, rank: int, num_ranks: int, steps: int,
               corpus_spec: CorpusSpec) -> subprocess.Popen:
    """Start one rank as a real OS process (no shared state with us)."""
    cmd = [
        sys.executable, "-m", "stagex.minisim",
        "--config", str(config_path),
        "--rank", str(rank),
        "--num-ranks", str(num_ranks),
        "--steps", str(steps),
        "--particles", str(corpus_spec.n_particles),
        "--halos", str(corpus_spec.n_halos),
        "--box", str(corpus_spec.box_size),
        "--background", str(corpus_spec.background_fraction),
        "--seed", str(corpus_spec.seed),
    ]
    return subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE)


def _attach_with_retry(target, sim_id: str, deadline: float):
    while True:
        try:
            return attach(target, sim_id)
        except UnknownSimulation:
            if time.monotonic() >= deadline:
                raise
            time.sleep(0.1)


def verify_sim(target, sim_id: str, num_ranks: int, steps: int,
               corpus_spec: CorpusSpec, timeout: float = 60.0) -> dict:
    """Consume a running (or finished) sim and check everything we promised.

    Returns a report dict; violations is empty on success.
    """
    deadline = time.monotonic() + timeout
    violations: list[str] = []
    max_err = 0.0
    steps_verified = 0
    session = _attach_with_retry(target, sim_id, deadline)
    if session.num_ranks != num_ranks:
        violations.append(
            f"info says num_ranks={session.num_ranks}, expected {num_ranks}"
        )
    counts = rank_counts(corpus_spec.n_particles, num_ranks)
    seen_ready: set[int] = set()
    for step in range(steps):
        result = session.wait_for_step(step, timeout=deadline - time.monotonic())
        if result is not WaitResult.READY:
            violations.append(f"step {step}: wait returned {result.value}")
            break
        state = session.ready_steps()
        if not seen_ready.issubset(set(state.steps)):
            # a previously-ready step vanished: monotonicity broken
            violations.append(
                f"step {step}: ready set {state.steps} lost steps from {sorted(seen_ready)}"
            )
        if step in seen_ready:
            violations.append(f"step {step}: became ready twice")
        seen_ready.add(step)

        parts = {var: [] for var in SEND_VARIABLES}
        for rank in range(num_ranks):
            expected = rank_slice(corpus_spec, rank, num_ranks, step)
            for var in SEND_VARIABLES:
                got = session.get_data(step, rank, var)
                if got.meta.count != counts[rank]:
                    violations.append(
                        f"step {step} rank {rank} {var}: count {got.meta.count}, "
                        f"expected {counts[rank]}"
                    )
                if var == "id":
                    if got.values.tobytes() != expected["id"].tobytes():
                        violations.append(f"step {step} rank {rank}: ids not bit-exact")
                else:
                    err = (
                        float(np.max(np.abs(got.values - expected[var])))
                        if got.values.size
                        else 0.0
                    )
                    max_err = max(max_err, err)
                    if err > got.meta.eps:
                        violations.append(
                            f"step {step} rank {rank} {var}: error {err} "
                            f"exceeds bound {got.meta.eps}"
                        )
                parts[var].append(got.values)
        merged = session.get_variable_all_ranks(step, "x")
        expected_merge = np.concatenate(parts["x"])
        if merged.tobytes() != expected_merge.tobytes():
            violations.append(f"step {step}: rank-order concatenation mismatch")
        steps_verified += 1
    return {
        "sim_id": sim_id,
        "num_ranks": num_ranks,
        "steps_requested": steps,
        "steps_verified": steps_verified,
        "max_abs_error": max_err,
        "violations": violations,
        "ok": not violations and steps_verified == steps,
    }


def run_mini_sim(config_path, num_ranks: int, steps: int,
                 corpus_spec: CorpusSpec, timeout: float = 120.0) -> dict:
    """Spawn one process per rank and verify concurrently from this process."""
    cfg = load_config(config_path)
    procs = [
        spawn_rank(config_path, rank, num_ranks, steps, corpus_spec)
        for rank in range(num_ranks)
    ]
    try:
        verified = verify_sim(
            str(config_path), cfg.sim_id, num_ranks, steps, corpus_spec, timeout
        )
    finally:
        exit_codes = []
        failures = []
        for rank, proc in enumerate(procs):
            try:
                _, err = proc.communicate(timeout=timeout)
            except subprocess.TimeoutExpired:
                proc.kill()
                _, err = proc.communicate()
            exit_codes.append(proc.returncode)
            if proc.returncode != 0:
                failures.append(f"rank {rank}: {err.decode(errors='replace').strip()}")
    ok = verified["ok"] and all(code == 0 for code in exit_codes)
    return {
        "operation": "mini-sim",
        "sim_id": cfg.sim_id,
        "num_ranks": num_ranks,
        "steps": steps,
        "rank_exit_codes": exit_codes,
        "rank_failures": failures,
        "verified": verified,
        "ok": ok,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stagex.minisim", description="one mini-simulation rank process"
    )
    parser.add_argument("--config", required=True)
    parser.add_argument("--rank", type=int, required=True)
    parser.add_argument("--num-ranks", type=int, required=True)
    parser.add_argument("--steps", type=int, required=True)
    _corpus_args(parser)
    args = parser.parse_args(argv)
    try:
        return run_rank(
            args.config, args.rank, args.num_ranks, args.steps, corpus_from_args(args)
        )
    except StagexError as exc:
        print(f"rank {args.rank}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

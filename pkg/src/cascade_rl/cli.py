"""Command-line harness for instances, learners and the oracle self-check.

Exit codes: 0 on success, 1 on invalid flags or inputs, 2 when a run fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

from . import bestperm
from .baselines import adapt_bpi_run, adapt_vi_run, cascading_vi_bonus_run, cascading_vi_oracle_run
from .cascading_bpi import DEFAULT_EPISODE_CAP, policy_gap, run_bpi
from .cascading_vi import run_regret
from .env import make_rng
from .instances import build_from_ratings, build_synthetic, ingest_ratings_file
from .model import CascadeError, CascadeMdp

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2

JOBS_ENV = "CASCADE_RL_JOBS"

REGRET_ALGOS: dict[str, Callable] = {
    "cascading-vi": run_regret,
    "adapt-vi": adapt_vi_run,
    "cascading-vi-oracle": cascading_vi_oracle_run,
    "cascading-vi-bonus": cascading_vi_bonus_run,
}
BPI_ALGOS: dict[str, Callable] = {
    "cascading-bpi": run_bpi,
    "adapt-bpi": adapt_bpi_run,
}

REGRET_HEADER = ("algorithm", "seed", "episode", "inst_regret", "cum_regret", "wallclock_ms")
BPI_HEADER = ("algorithm", "seed", "episodes_used", "terminated", "achieved_gap", "wallclock_ms")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def parse_seeds(text: str) -> list[int]:
    """``"20"`` means seeds 0..19; anything with a comma is an explicit list."""
    try:
        if "," in text:
            seeds = [int(part) for part in text.split(",") if part.strip()]
        else:
            count = int(text)
            if count < 1:
                raise UsageError(f"seed count must be positive, got {count}")
            seeds = list(range(count))
    except ValueError:
        raise UsageError(f"cannot parse seeds {text!r}") from None
    if not seeds:
        raise UsageError("no seeds given")
    if len(set(seeds)) != len(seeds):
        raise UsageError(f"duplicate seeds in {text!r}")
    return seeds


def _default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV, "1")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{JOBS_ENV}={raw!r} is not an integer") from None


def _map_seeds(func, tasks: list[tuple], jobs: int) -> list:
    """Run tasks in parallel; results come back in task order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [func(*task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(func, *zip(*tasks)))


def _regret_job(algo: str, mdp: CascadeMdp, episodes: int, delta: float, seed: int):
    return REGRET_ALGOS[algo](mdp, episodes, delta, seed)


def _bpi_job(algo: str, mdp: CascadeMdp, epsilon: float, delta: float, seed: int, episode_cap: int):
    result = BPI_ALGOS[algo](mdp, epsilon, delta, seed, episode_cap)
    return result, policy_gap(mdp, result.policy)


def _emit(rows: list[Sequence], header: Sequence[str], out: str | None) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    if out is None:
        sys.stdout.write(buf.getvalue())
    else:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            fh.write(buf.getvalue())


def _fmt_time(ms: float, timing: bool) -> str:
    return repr(float(ms)) if timing else ""


def _load_mdp(path: str) -> CascadeMdp:
    try:
        return CascadeMdp.load(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def cmd_gen_synthetic(args) -> int:
    mdp = build_synthetic(args.horizon, args.items, args.list_len)
    mdp.save(args.out)
    return EXIT_OK


def cmd_gen_ratings(args) -> int:
    records = ingest_ratings_file(args.ratings)
    mdp = build_from_ratings(
        records, args.states, args.items, like_threshold=args.like_threshold,
        self_loop=args.self_loop, horizon=args.horizon, max_list_len=args.list_len,
    )
    mdp.save(args.out)
    return EXIT_OK


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise UsageError(f"--delta must lie in (0, 1), got {delta}")


def cmd_run_regret(args) -> int:
    _check_delta(args.delta)
    if args.episodes < 1:
        raise UsageError(f"--episodes must be positive, got {args.episodes}")
    mdp = _load_mdp(args.mdp)
    seeds = parse_seeds(args.seeds)
    tasks = [(args.algo, mdp, args.episodes, args.delta, seed) for seed in seeds]
    traces = _map_seeds(_regret_job, tasks, args.jobs)
    rows = []
    for trace in traces:
        for algo, seed, k, inst, cum, ms in trace.rows():
            rows.append((algo, seed, k, repr(inst), repr(cum), _fmt_time(ms, args.timing)))
    _emit(rows, REGRET_HEADER, args.out)
    return EXIT_OK


def cmd_run_bpi(args) -> int:
    _check_delta(args.delta)
    if args.epsilon <= 0.0:
        raise UsageError(f"--epsilon must be positive, got {args.epsilon}")
    if args.episode_cap < 1:
        raise UsageError(f"--episode-cap must be positive, got {args.episode_cap}")
    mdp = _load_mdp(args.mdp)
    seeds = parse_seeds(args.seeds)
    tasks = [(args.algo, mdp, args.epsilon, args.delta, seed, args.episode_cap) for seed in seeds]
    rows = []
    for result, gap in _map_seeds(_bpi_job, tasks, args.jobs):
        rows.append((
            result.algorithm, result.seed, result.episodes_used,
            "true" if result.terminated else "false", repr(gap),
            _fmt_time(result.wallclock_ms, args.timing),
        ))
    _emit(rows, BPI_HEADER, args.out)
    return EXIT_OK


def oracle_check(trials: int, max_items: int, max_list_len: int, seed: int, tol: float = 1e-12) -> tuple[int, int]:
    """Compare the DP oracle against exhaustive search on random instances.

    Weights are uniform on [-1, 1] and click probabilities uniform on [0, 1]
    with the terminator's fixed to 1. Returns ``(matches, trials)``; a trial
    matches when the lists agree and the values differ by at most ``tol``.
    """
    rng = make_rng(seed, "oracle-check")
    matches = 0
    for _ in range(trials):
        n = int(rng.integers(1, max_items + 1))
        m = int(rng.integers(1, max_list_len + 1))
        u = rng.random(n + 1)
        u[n] = 1.0
        w = rng.uniform(-1.0, 1.0, n + 1)
        fast, fast_val = bestperm.best_perm(u, w, m)
        slow, slow_val = bestperm.brute_force_best_perm(u, w, m)
        if fast == slow and abs(fast_val - slow_val) <= tol:
            matches += 1
    return matches, trials


def cmd_oracle_check(args) -> int:
    if args.trials < 0 or args.max_items < 1 or args.max_list_len < 1:
        raise UsageError("--trials must be non-negative and the size limits positive")
    matches, trials = oracle_check(args.trials, args.max_items, args.max_list_len, args.seed)
    print(f"{matches}/{trials} exact matches")
    return EXIT_OK if matches == trials else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cascade-rl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen-synthetic", help="write the layered synthetic instance as JSON")
    gen.add_argument("--horizon", type=int, required=True)
    gen.add_argument("--items", type=int, required=True)
    gen.add_argument("--list-len", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen_synthetic)

    rat = sub.add_parser("gen-ratings", help="build an instance from a ratings CSV")
    rat.add_argument("--ratings", required=True)
    rat.add_argument("--states", type=int, required=True)
    rat.add_argument("--items", type=int, required=True)
    rat.add_argument("--horizon", type=int, default=3)
    rat.add_argument("--list-len", type=int, default=3)
    rat.add_argument("--like-threshold", type=float, default=4.5)
    rat.add_argument("--self-loop", type=float, default=0.9)
    rat.add_argument("--out", required=True)
    rat.set_defaults(func=cmd_gen_ratings)

    def runner(name: str, algos, func, help_text: str):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--mdp", required=True, help="instance JSON")
        p.add_argument("--algo", required=True, choices=sorted(algos))
        p.add_argument("--delta", type=float, default=0.005)
        p.add_argument("--seeds", default="1", help="a count N (seeds 0..N-1) or a comma list")
        p.add_argument("--out", help="CSV path (default: stdout)")
        p.add_argument("--jobs", type=int, default=None, help=f"parallel replications (default: ${JOBS_ENV} or 1)")
        p.add_argument("--no-timing", dest="timing", action="store_false",
                       help="leave wallclock_ms empty so output is byte-reproducible")
        p.set_defaults(func=func)
        return p

    reg = runner("run-regret", REGRET_ALGOS, cmd_run_regret, "per-episode regret traces")
    reg.add_argument("--episodes", type=int, required=True)

    bpi = runner("run-bpi", BPI_ALGOS, cmd_run_bpi, "best-policy identification runs")
    bpi.add_argument("--epsilon", type=float, required=True)
    bpi.add_argument("--episode-cap", type=int, default=DEFAULT_EPISODE_CAP)

    chk = sub.add_parser("oracle-check", help="DP oracle versus exhaustive search")
    chk.add_argument("--trials", type=int, default=10000)
    chk.add_argument("--max-items", type=int, default=7)
    chk.add_argument("--max-list-len", type=int, default=4)
    chk.add_argument("--seed", type=int, default=0)
    chk.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "jobs", 0) is None:
            args.jobs = _default_jobs()
        if getattr(args, "jobs", 1) < 1:
            raise UsageError(f"--jobs must be positive, got {args.jobs}")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, CascadeError) as exc:
        code = EXIT_FAILURE if isinstance(exc, bestperm.EnumerationCapError) else EXIT_USAGE
        print(f"error: {exc}", file=sys.stderr)
        return code
    except (OSError, RuntimeError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

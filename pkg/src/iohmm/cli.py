"""File-based pipeline: trace -> bins -> alphabet -> HMM -> synthetic traces,
validation, MAP parameters and queueing comparisons.

Every output ``X`` is accompanied by ``X.manifest.json`` recording the
command, parameters, seed and SHA-256 digests of the inputs. JSON outputs
also name their manifest under a ``"manifest"`` key.

Formats
  trace CSV      timestamp_us,op,size_blocks   (op is R or W, header optional)
  binned CSV     bin_index,reads,writes        (header required)
  clusters JSON  {mode, clusters: [{id, centroid, std, cov_rw, count, singleton_zero}]}
  HMM JSON       {r, m, nu, Q, G}
  states CSV     bin_index,state
  MAP JSON       {bin_width_s, A, holding_mean_s, rates: [{read_bps, write_bps}], labels}

Exit status: 0 on success, 2 when validation flags a metric outside its
band, 1 on errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import cluster as cl
from . import hmm as hm
from . import mapgen, qsim, stats, synth, trace
from .errors import IOHMMError

log = logging.getLogger("iohmm")

EXIT_OK, EXIT_ERROR, EXIT_FLAGGED = 0, 1, 2


def _tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def _digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


class Run:
    """Collects inputs and writes outputs with their manifests."""

    def __init__(self, args):
        self.args = args
        self.inputs: dict[str, str] = {}

    def read(self, path) -> str:
        p = Path(path)
        self.inputs[str(p)] = _digest(p)
        return p.read_text()

    def _manifest(self, out: Path) -> Path:
        params = {k: v for k, v in vars(self.args).items() if k not in ("func",)}
        man = {
            "command": self.args.command,
            "inputs": self.inputs,
            "seed": params.get("seed"),
            "parameters": params,
            "tool_version": _tool_version(),
            "output": out.name,
        }
        mp = out.with_name(out.name + ".manifest.json")
        mp.write_text(json.dumps(man, indent=2, default=str) + "\n")
        return mp

    def write_text(self, path, text: str):
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
        self._manifest(p)

    def write_json(self, path, obj: dict):
        p = Path(path)
        obj = dict(obj)
        obj["manifest"] = p.name + ".manifest.json"
        self.write_text(p, json.dumps(obj, indent=2) + "\n")


def _binned(run: Run, path, width) -> trace.BinnedTrace:
    return trace.read_binned_csv(run.read(path), width)


def _clusters(run: Run, path) -> cl.ClusterModel:
    return cl.ClusterModel.from_json(run.read(path))


def _hmm(run: Run, path) -> hm.Hmm:
    return hm.Hmm.from_json(run.read(path))


# ---------------------------------------------------------------- commands

def cmd_bin(args, run):
    records = trace.parse_trace(run.read(args.input))
    binned = trace.bin_trace(records, args.bin_width_us)
    run.write_text(args.output, trace.write_binned_csv(binned))
    log.info("%d records -> %d bins", len(records), len(binned))


def cmd_thin(args, run):
    keep = [int(x) for x in args.keep.split(",") if x.strip()]
    binned = _binned(run, args.input, args.bin_width_us)
    out = trace.thin_periodic(binned, args.period, keep)
    run.write_text(args.output, trace.write_binned_csv(out))


def cmd_cluster(args, run):
    binned = _binned(run, args.input, args.bin_width_us)
    if args.mode == cl.JOINT and args.k is None:
        raise SystemExit("--k is required with --mode joint")
    if args.mode == cl.PRODUCT and (args.kr is None or args.kw is None):
        raise SystemExit("--kr and --kw are required with --mode product")
    model = cl.fit_clusters(binned, args.mode, k=args.k, k_r=args.kr, k_w=args.kw,
                            reserve_zero_singleton=args.zero_singleton, seed=args.seed)
    run.write_json(args.output, model.to_dict())
    if args.obs_output:
        obs = cl.observation_sequence(model, binned)
        run.write_text(args.obs_output, "bin_index,obs\n" + "".join(
            f"{i},{o}\n" for i, o in enumerate(obs.obs.tolist())))


def _obs(run, args):
    binned = _binned(run, args.input, args.bin_width_us)
    model = _clusters(run, args.clusters)
    return binned, model, cl.observation_sequence(model, binned)


def cmd_fit(args, run):
    _, _, obs = _obs(run, args)
    res = hm.baum_welch(obs, args.states, init=args.seed, tol=args.tol,
                        max_iter=args.max_iter, restarts=args.restarts)
    d = res.hmm.to_dict()
    d.update(log_likelihood=res.log_likelihood, iterations=res.iterations,
             converged=res.converged)
    run.write_json(args.output, d)
    if args.trajectory:
        run.write_text(args.trajectory, "iteration,log_likelihood\n" + "".join(
            f"{i},{v!r}\n" for i, v in enumerate(res.trajectory.tolist())))
    log.info("r=%d ll=%.4f iterations=%d", args.states, res.log_likelihood, res.iterations)


def cmd_sweep(args, run):
    _, _, obs = _obs(run, args)
    rs = [int(x) for x in args.states.split(",")]
    rows = hm.sweep_states(obs, rs, seed=args.seed, tol=args.tol,
                           max_iter=args.max_iter, restarts=args.restarts)
    out = []
    for row in rows:
        if row["near_duplicates"]:
            log.warning("r=%d: near-duplicate state pairs %s", row["r"], row["near_duplicates"])
        out.append({"r": row["r"], "log_likelihood": row["log_likelihood"],
                    "iterations": row["iterations"],
                    "near_duplicates": [list(p) for p in row["near_duplicates"]]})
    run.write_json(args.output, {"sweep": out})


def cmd_decode(args, run):
    _, _, obs = _obs(run, args)
    model = _hmm(run, args.hmm)
    path = hm.viterbi(model, obs)
    run.write_text(args.output, "bin_index,state\n" + "".join(
        f"{i},{s}\n" for i, s in enumerate(path.states.tolist())))


def _read_states(run, path) -> np.ndarray:
    lines = run.read(path).splitlines()
    if not lines or lines[0].strip() != "bin_index,state":
        raise IOHMMError(f"{path}: expected header 'bin_index,state'")
    return np.array([int(l.split(",")[1]) for l in lines[1:] if l.strip()], dtype=np.int64)


def cmd_gen(args, run):
    model = _hmm(run, args.hmm)
    clusters = _clusters(run, args.clusters)
    seeds = np.random.SeedSequence(args.seed).spawn(args.replicates)
    for k, ss in enumerate(seeds):
        cfg = synth.GenConfig(args.length, ss, bin_width=args.bin_width_us)
        tr = synth.generate_trace(model, clusters, cfg)
        run.write_text(f"{args.output_prefix}_{k:03d}.csv", trace.write_binned_csv(tr))


def cmd_validate(args, run):
    raw = _binned(run, args.input, args.bin_width_us)
    model = (_hmm(run, args.hmm), _clusters(run, args.clusters))
    rep = stats.validate(raw, model, args.replicates, args.level, args.max_lag, args.seed)
    run.write_json(args.output, json.loads(rep.to_json()))
    if args.acf_output:
        run.write_text(args.acf_output, rep.acf_csv())
    for name, mc in rep.metrics.items():
        b = mc.band
        if b is not None:
            log.info("%-15s raw=%-12.5g band=[%.5g, %.5g] %s", name, mc.raw, b.lo, b.hi,
                     "ok" if mc.inside else "OUTSIDE")
    return EXIT_FLAGGED if rep.flagged else EXIT_OK


def cmd_map(args, run):
    binned = _binned(run, args.input, args.bin_width_us)
    model = _hmm(run, args.hmm)
    if args.states_csv:
        states = _read_states(run, args.states_csv)
    else:
        clusters = _clusters(run, args.clusters)
        states = hm.viterbi(model, cl.observation_sequence(clusters, binned)).states
    mm = mapgen.build_map(model.Q, binned, states, renormalize=not args.raw_q)
    if args.erase_state_from is not None:
        mm = mapgen.add_erase_state(mm, args.erase_state_from, args.erase_ratio,
                                    args.erase_holding_s)
    run.write_json(args.output, mm.to_dict())


def cmd_qsim(args, run):
    raw = _binned(run, args.input, args.bin_width_us)
    cfg = qsim.QueueSimConfig(args.service_read, args.service_write, args.service_erase,
                              erase_per_writes=args.erase_per_writes,
                              arrival_spread=args.arrival_spread, seed=args.seed)
    schemes = list(qsim.Scheme) if args.scheme == "all" else [qsim.Scheme(args.scheme)]
    if args.hmm:
        if not args.clusters:
            raise SystemExit("--clusters is required with --hmm")
        model = (_hmm(run, args.hmm), _clusters(run, args.clusters))
        rep = qsim.compare_raw_vs_hmm(raw, model, cfg, args.replicates, args.level,
                                      schemes, args.seed)
    else:
        rep = {}
        for s in schemes:
            c = qsim.QueueSimConfig(cfg.service_read, cfg.service_write, cfg.service_erase,
                                    s, cfg.erase_per_writes, cfg.arrival_spread, cfg.seed)
            r = qsim.simulate_queue(raw, c)
            rep[s.value] = {name: {"raw": r.mean_queueing_ms[name], "count": r.counts[name]}
                            for name in qsim.CLASSES}
            rep[s.value]["utilization"] = r.utilization
    run.write_json(args.output, json.loads(qsim.comparison_json(rep)))


# ---------------------------------------------------------------- parser

def _add_width(p):
    p.add_argument("--bin-width-us", type=float, default=5000.0,
                   help="bin width in microseconds (default 5000)")


def _add_fit_opts(p):
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="iohmm", description=__doc__,
                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bin", help="bin a raw trace CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--bin-width-us", type=float, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_bin)

    p = sub.add_parser("thin", help="drop bins by position within a period")
    p.add_argument("--input", required=True)
    p.add_argument("--period", type=int, required=True)
    p.add_argument("--keep", required=True, help="comma-separated zero-based slots, e.g. 0,1,2,4")
    p.add_argument("--output", required=True)
    _add_width(p)
    p.set_defaults(func=cmd_thin)

    p = sub.add_parser("cluster", help="fit the observation alphabet")
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=[cl.JOINT, cl.PRODUCT], default=cl.JOINT)
    p.add_argument("--k", type=int)
    p.add_argument("--kr", type=int)
    p.add_argument("--kw", type=int)
    p.add_argument("--zero-singleton", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--obs-output")
    _add_width(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("fit", help="Baum-Welch fit")
    p.add_argument("--input", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--states", type=int, required=True)
    _add_fit_opts(p)
    p.add_argument("--output", required=True)
    p.add_argument("--trajectory")
    _add_width(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="fit several state counts and compare")
    p.add_argument("--input", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--states", required=True, help="comma-separated, e.g. 2,3,4")
    _add_fit_opts(p)
    p.add_argument("--output", required=True)
    _add_width(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("decode", help="Viterbi state per bin")
    p.add_argument("--input", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--hmm", required=True)
    p.add_argument("--output", required=True)
    _add_width(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("gen", help="synthetic binned traces")
    p.add_argument("--hmm", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-prefix", required=True)
    _add_width(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("validate", help="raw statistics against HMM confidence bands")
    p.add_argument("--input", required=True)
    p.add_argument("--hmm", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--max-lag", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--acf-output")
    _add_width(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("map", help="continuous-time MAP parameters")
    p.add_argument("--input", required=True)
    p.add_argument("--hmm", required=True)
    p.add_argument("--clusters", help="needed unless --states-csv is given")
    p.add_argument("--states-csv", help="output of 'decode'")
    p.add_argument("--erase-state-from", type=int, help="write state feeding the ERASE state")
    p.add_argument("--erase-ratio", type=float, default=1 / 64)
    p.add_argument("--erase-holding-s", type=float)
    p.add_argument("--raw-q", action="store_true",
                   help="use raw off-diagonal q_ij instead of renormalising by 1 - q_ii")
    p.add_argument("--output", required=True)
    _add_width(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("qsim", help="queueing simulation of a binned trace")
    p.add_argument("--input", required=True)
    p.add_argument("--scheme", choices=["all"] + [s.value for s in qsim.Scheme], default="all")
    p.add_argument("--service-read", type=float, required=True, help="us per read block")
    p.add_argument("--service-write", type=float, required=True, help="us per write block")
    p.add_argument("--service-erase", type=float, required=True, help="us per erase")
    p.add_argument("--erase-per-writes", type=int, default=64)
    p.add_argument("--arrival-spread", choices=[s.value for s in qsim.Spread],
                   default=qsim.Spread.BinStart.value)
    p.add_argument("--hmm")
    p.add_argument("--clusters")
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    _add_width(p)
    p.set_defaults(func=cmd_qsim)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "map" and not (args.states_csv or args.clusters):
        print("iohmm map: error: --clusters or --states-csv is required", file=sys.stderr)
        return EXIT_ERROR
    try:
        rc = args.func(args, Run(args))
    except (IOHMMError, ValueError, OSError) as e:
        print(f"iohmm {args.command}: error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as e:
        if isinstance(e.code, str):
            print(f"iohmm {args.command}: error: {e.code}", file=sys.stderr)
            return EXIT_ERROR
        raise
    return EXIT_OK if rc is None else rc


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point for the whole pipeline.

    deskdrive pretrain-detector   render labelled frames, pretrain detector and classifier baseline
    deskdrive collect             expert demonstrations for offline training
    deskdrive train               offline behaviour cloning of fusion + planner
    deskdrive dagger              dataset-aggregation rounds on top of the offline policy
    deskdrive bench               score an agent on a scenario suite
    deskdrive ablate              detection vs classifier agents on identical seeds
    deskdrive plot                redraw trajectory plots from a bench report

Artifacts go under the output root: ``--out``, else ``$DESKDRIVE_OUT``, else
``run.out`` from the config. Every command writes ``manifests/<command>.json``
with the config snapshot, the seed and sha256 checksums of what it wrote.

Exit codes: 0 success, 1 user error (bad flags, bad config, missing inputs),
2 runtime failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (emit_report, paired_table, read_results, run_benchmark, write_paired_table,
                    write_plots)
from .config import ConfigError, RunConfig, parse_kinds
from .learning import (ARMS, Dataset, FeatureCache, StudentAgent, dagger_round, evaluate, expert_collect,
                       init_policy, prepare, train_offline)
from .numerics import load_checkpoint, save_checkpoint
from .perception import init_classifier, init_detector, matched_box_l1
from .perception.pretrain import pretrain_classifier, pretrain_detector, render_frames
from .simworld import suite

log = logging.getLogger("deskdrive")

COMMANDS = ("pretrain-detector", "collect", "train", "dagger", "bench", "ablate", "plot")
OUT_ENV = "DESKDRIVE_OUT"


class UserError(Exception):
    """Bad input from the caller: reported without a traceback, exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Resolved config, output root, and the artifact list for the manifest."""

    def __init__(self, command: str, cfg: RunConfig, out: Path, argv: list[str]):
        self.command, self.cfg, self.out, self.argv = command, cfg, out, argv
        self.artifacts: list[Path] = []
        self.summary: dict = {}

    def path(self, *parts: str) -> Path:
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def wrote(self, *paths: Path):
        for p in paths:
            if p.is_dir():
                self.artifacts.extend(sorted(q for q in p.rglob("*") if q.is_file()))
            else:
                self.artifacts.append(p)

    def save_params(self, params: dict, *parts: str, **meta) -> Path:
        p = self.path(*parts)
        save_checkpoint(p, params, {"seed": self.cfg.run.seed, **meta})
        self.wrote(p)
        return p

    def write_json(self, obj, *parts: str) -> Path:
        p = self.path(*parts)
        p.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
        self.wrote(p)
        return p

    def manifest(self) -> Path:
        files = {str(p.relative_to(self.out)): _sha256(p) for p in dict.fromkeys(self.artifacts)}
        doc = {"command": self.command, "argv": self.argv, "seed": self.cfg.run.seed, "config": self.cfg.as_dict(),
               "config_ini": self.cfg.to_ini(), "artifacts": files, "summary": self.summary,
               "version": __version__, "python": platform.python_version(), "numpy": np.__version__}
        p = self.path("manifests", f"{self.command}.json")
        p.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return p


def _need(path: Path, hint: str) -> Path:
    if not path.exists():
        raise UserError(f"missing {path}; run `deskdrive {hint}` first or pass its path explicitly")
    return path


def _load_params(path: Path, hint: str) -> tuple[dict, dict]:
    try:
        return load_checkpoint(_need(path, hint))
    except ValueError as exc:
        raise UserError(str(exc)) from None


# commands -----------------------------------------------------------------

def cmd_pretrain_detector(run: Run, args) -> None:
    cfg, pre = run.cfg, run.cfg.pretrain
    frames = render_frames(suite(pre.kinds, pre.seeds), pre.frame_every, cfg.rig)
    held = render_frames(suite(pre.kinds, pre.heldout_seeds), pre.frame_every, cfg.rig)
    log.info("rendered %d training and %d held-out frames", len(frames), len(held))
    det, det_losses = pretrain_detector(init_detector(cfg.detector, cfg.run.seed), cfg.detector, frames, pre.steps,
                                        pre.lr, pre.batch, cfg.run.seed)
    l1 = matched_box_l1(det, cfg.detector, held.images(), held.truths)
    cls, cls_losses = pretrain_classifier(init_classifier(cfg.detector, cfg.run.seed), frames, pre.classifier_steps,
                                          pre.lr, pre.batch, cfg.run.seed)
    run.save_params(det, "perception", "detector.ckpt", kind="detector")
    run.save_params(cls, "perception", "classifier.ckpt", kind="classifier")
    run.summary = {"frames": len(frames), "heldout_frames": len(held), "heldout_box_l1": l1,
                   "detector_loss_first": det_losses[0] if det_losses else None,
                   "detector_loss_last": det_losses[-1] if det_losses else None}
    run.write_json({"detector_losses": det_losses, "classifier_losses": cls_losses, **run.summary},
                   "perception", "metrics.json")
    print(f"held-out matched-box L1: {l1['per_box']:.4f} per box, {l1['per_coordinate']:.4f} per coordinate")


def cmd_collect(run: Run, args) -> None:
    t = run.cfg.train
    ds = expert_collect(suite(t.kinds, t.seeds), "offline-0", t.sample_rate, run.cfg.rig)
    held = expert_collect(suite(t.heldout_kinds, t.heldout_seeds), "heldout", t.sample_rate, run.cfg.rig)
    ds.seed = held.seed = run.cfg.run.seed
    for name, d in (("offline", ds), ("heldout", held)):
        d.save(run.out / "data" / name)
        run.wrote(run.out / "data" / name)
    run.summary = {"offline_records": len(ds), "heldout_records": len(held)}
    print(f"collected {len(ds)} offline and {len(held)} held-out expert samples")


def _perception(run: Run, arm: str, path: str | None) -> dict:
    name = "detector" if arm == "detection" else "classifier"
    params, _ = _load_params(Path(path) if path else run.out / "perception" / f"{name}.ckpt", "pretrain-detector")
    return params


def _dataset(run: Run, name: str, hint: str) -> Dataset:
    d = _need(run.out / "data" / name, hint)
    return Dataset.load(d)


def cmd_train(run: Run, args) -> None:
    cfg = run.cfg
    pcfg = cfg.policy(args.arm)
    perception = _perception(run, args.arm, args.perception)
    ds, held = _dataset(run, "offline", "collect"), _dataset(run, "heldout", "collect")
    cache = FeatureCache(pcfg, perception)
    params, curve = train_offline(init_policy(pcfg, cfg.run.seed), pcfg, ds, cache, cfg.training, cfg.run.seed)
    held_l1 = evaluate(params, pcfg, prepare(held, cache))
    run.save_params(params, "policy", f"{args.arm}-offline.ckpt", arm=args.arm, stage="offline")
    run.summary = {"arm": args.arm, "records": len(ds), "final_train_loss": curve[-1], "heldout_l1": held_l1}
    run.write_json({"curve": curve, **run.summary}, "policy", f"{args.arm}-offline.json")
    print(f"{args.arm} offline: train loss {curve[-1]:.4f}, held-out L1 {held_l1:.4f}")


def cmd_dagger(run: Run, args) -> None:
    cfg = run.cfg
    rounds = cfg.dagger.rounds
    pcfg = cfg.policy(args.arm)
    perception = _perception(run, args.arm, args.perception)
    params, meta = _load_params(run.out / "policy" / f"{args.arm}-offline.ckpt", f"train --arm {args.arm}")
    held = _dataset(run, "heldout", "collect")
    old = _dataset(run, "offline", "collect")
    cache = FeatureCache(pcfg, perception)
    held_b = prepare(held, cache)
    history = [{"round": 0, "heldout_l1": evaluate(params, pcfg, held_b)}]
    for r in range(1, rounds + 1):
        old, params, rep = dagger_round(params, pcfg, perception, cfg.dagger_specs(r), old, cache, cfg.training, r,
                                        cfg.run.seed, cfg.rig)
        history.append({"round": r, "new_records": rep.new_records, "mixed_records": rep.mixed_records,
                        "student_completion": rep.completion, "heldout_l1": evaluate(params, pcfg, held_b)})
        run.save_params(params, "policy", f"{args.arm}-dagger-{r}.ckpt", arm=args.arm, stage=f"dagger-{r}")
        log.info("round %d: %s", r, history[-1])
    final = run.save_params(params, "policy", f"{args.arm}-final.ckpt", arm=args.arm, stage=f"dagger-{rounds}")
    run.summary = {"arm": args.arm, "rounds": rounds, "history": history, "final": str(final.relative_to(run.out))}
    run.write_json(run.summary, "policy", f"{args.arm}-dagger.json")
    print(f"{args.arm} held-out L1: " + " -> ".join(f"{h['heldout_l1']:.4f}" for h in history))


def _policy_path(run: Run, arm: str, explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    for stage in ("final", "offline"):
        p = run.out / "policy" / f"{arm}-{stage}.ckpt"
        if p.exists():
            return p
    return run.out / "policy" / f"{arm}-final.ckpt"


def _agent_factory(run: Run, agent: str, policy: str | None = None, perception: str | None = None):
    rig = run.cfg.rig
    if agent == "expert":
        return rig.expert
    pcfg = run.cfg.policy(agent)
    params, meta = _load_params(_policy_path(run, agent, policy), f"train --arm {agent}")
    if meta.get("arm", agent) != agent:
        raise UserError(f"policy checkpoint is for the {meta['arm']!r} arm, not {agent!r}")
    perc = _perception(run, agent, perception)
    return lambda: StudentAgent(pcfg, params, perc, rig)


def cmd_bench(run: Run, args) -> None:
    b = run.cfg.bench
    specs = suite(b.kinds, b.seeds)
    rep = run_benchmark(_agent_factory(run, args.agent, args.policy, args.perception), specs, run.cfg.sim)
    files = emit_report(rep, run.out / "bench" / args.agent)
    run.wrote(*files.values())
    agg = rep.aggregate()
    run.summary = {"agent": args.agent, "routes": len(specs), "driving_score": agg["Driving score"],
                   "route_completion": agg["Route completion"], "collisions": rep.collisions()}
    print(f"{args.agent}: driving score {agg['Driving score']:.2f}, route completion "
          f"{agg['Route completion']:.2f}, collisions {rep.collisions()}")


def cmd_ablate(run: Run, args) -> None:
    b = run.cfg.bench
    specs = suite(b.ablate_kinds, b.ablate_seeds)
    reports = {}
    for arm in ARMS:
        reports[arm] = run_benchmark(_agent_factory(run, arm), specs, run.cfg.sim)
        run.wrote(*emit_report(reports[arm], run.out / "ablate" / arm).values())
    rows = paired_table(reports["detection"], reports["classifier"])
    table = run.path("ablate", "paired.csv")
    share = write_paired_table(table, rows)
    run.wrote(table)
    run.summary = {"pairs": len(rows), "detection_not_worse_share": share,
                   "detection_collisions": reports["detection"].collisions(),
                   "classifier_collisions": reports["classifier"].collisions()}
    print(f"detection not worse in {share:.0%} of {len(rows)} pairs "
          f"(collisions {run.summary['detection_collisions']} vs {run.summary['classifier_collisions']})")


def cmd_plot(run: Run, args) -> None:
    src = Path(args.report) if args.report else run.out / "bench" / args.agent
    results = read_results(_need(src / "routes.jsonl", f"bench --agent {args.agent}"))
    files = write_plots(results, run.out / "plots" / src.name)
    run.wrote(*files.values())
    run.summary = {"source": str(src), "plots": len(files)}
    print(f"wrote {len(files)} plots to {run.out / 'plots' / src.name}")


HELP = {
    "pretrain-detector": "render labelled frames; pretrain the detector and the classifier baseline",
    "collect": "record expert demonstrations and a held-out set",
    "train": "offline behaviour cloning of fusion and planner",
    "dagger": "dataset-aggregation rounds starting from the offline policy",
    "bench": "score an agent on a scenario suite and write the report",
    "ablate": "run both perception arms on identical seeds; write the paired table",
    "plot": "redraw trajectory plots from a bench report",
}

HANDLERS = {"pretrain-detector": cmd_pretrain_detector, "collect": cmd_collect, "train": cmd_train,
            "dagger": cmd_dagger, "bench": cmd_bench, "ablate": cmd_ablate, "plot": cmd_plot}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="desk", help="config file, or a preset name: desk, full")
    common.add_argument("--seed", type=int, help="overrides run.seed")
    common.add_argument("--out", help=f"output root (default: ${OUT_ENV}, then run.out)")
    common.add_argument("--rounds", type=int, help="overrides dagger.rounds")
    common.add_argument("--suite", help="comma-separated scenario kinds; overrides bench.kinds")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config value; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="deskdrive", description="Detection-based end-to-end driving at desk scale.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    sp = {c: sub.add_parser(c, parents=[common], help=HELP[c]) for c in COMMANDS}
    for c in ("train", "dagger"):
        sp[c].add_argument("--arm", choices=ARMS, default="detection")
        sp[c].add_argument("--perception", help="perception checkpoint (default: from pretrain-detector)")
    sp["bench"].add_argument("--agent", choices=("expert",) + ARMS, default="expert")
    sp["bench"].add_argument("--policy", help="policy checkpoint (default: latest for the arm)")
    sp["bench"].add_argument("--perception", help="perception checkpoint (default: from pretrain-detector)")
    sp["plot"].add_argument("--agent", choices=("expert",) + ARMS, default="expert")
    sp["plot"].add_argument("--report", help="bench report directory holding routes.jsonl")
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set {item!r} must look like section.key=value")
        overrides[key.strip()] = value
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    if args.rounds is not None:
        overrides["dagger.rounds"] = str(args.rounds)
    if args.suite is not None:
        parse_kinds(args.suite)
        overrides["bench.kinds"] = args.suite
    return cfg.override(overrides) if overrides else cfg


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = resolve_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"deskdrive: config error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out or os.environ.get(OUT_ENV) or cfg.run.out)
    run = Run(args.command, cfg, out, argv)
    started = time.time()
    try:
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](run, args)
        run.summary["seconds"] = round(time.time() - started, 3)
        run.manifest()
    except UserError as exc:
        print(f"deskdrive: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # reported, not swallowed: the traceback goes to the log
        log.exception("%s failed", args.command)
        print(f"deskdrive: {args.command} failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

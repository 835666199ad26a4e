"""Command-line entry points.

Exit codes: 0 success, 2 bad input, 3 backend failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import evaluation as ev
from .agent import build_system_message
from .config import Config
from .errors import BackendError, BadInput, DrfAgentError
from .llm import ReplayClient, ScriptedClient, WireClient
from .memory import WireEmbedder
from .risk_assessor import RiskThresholds, calibrate_thresholds, risk_notification, sample_qpr_distribution
from .risk_field import drf_evaluate, qpr_total, write_field_csv, write_field_pgm
from .scene import LabeledScene, Scene, load_table, load_label_file, save_table, synth_scenario

EXIT_OK, EXIT_BAD_INPUT, EXIT_BACKEND = 0, 2, 3
BUILTIN_SUITE = "builtin:suite"


def _config(args) -> Config:
    cfg = Config.load(args.config) if getattr(args, "config", None) else Config()
    seed = getattr(args, "seed", None)
    if seed is not None:
        cfg = cfg.replace(seed=seed, calibration=type(cfg.calibration)(cfg.calibration.samples, seed))
    return cfg


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise BadInput(f"cannot read JSON {path}: {exc}") from None


def _write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


# --------------------------------------------------------------------------
# Datasets


def load_dataset(spec: str, cfg: Config, labels: str | None = None):
    """Return (labeled scenes, calibration tables by tag) for a dataset argument.

    Accepts ``builtin:suite``, a JSON file of labeled scenes (a list or
    ``{"scenes": [...]}``) or a tracks CSV.
    """
    if spec == BUILTIN_SUITE:
        suite = ev.builtin_suite(cfg)
        return list(suite.scenes), {k: list(v) for k, v in suite.tables.items()}
    path = Path(spec)
    if not path.exists():
        raise BadInput(f"dataset {spec} does not exist")
    if path.suffix.lower() == ".json":
        doc = _read_json(path)
        items = doc.get("scenes", []) if isinstance(doc, dict) else doc
        try:
            scenes = [LabeledScene.from_dict(d) for d in items]
        except (KeyError, TypeError, ValueError) as exc:
            raise BadInput(f"bad labeled scene in {spec}: {exc}") from None
        tables: dict[str, list] = {}
        for ls in scenes:
            tables.setdefault(ls.tag, []).append(ev.table_from_scene(ls.scene))
        return scenes, tables
    table = load_table(path)
    overrides = load_label_file(labels) if labels else None
    scenes = ev.scenes_from_table(table, cfg, overrides)
    return scenes, {table.metadata.get("dataset_tag", "highway"): [table]}


def _thresholds(args, cfg: Config, tables) -> dict[str, RiskThresholds] | RiskThresholds:
    path = getattr(args, "thresholds", None) or cfg.thresholds_path
    if path:
        try:
            return RiskThresholds.from_dict(_read_json(path))
        except (KeyError, TypeError, ValueError) as exc:
            raise BadInput(f"bad thresholds file {path}: {exc}") from None
    if getattr(args, "merge_thresholds", False):
        merged = {"merged": [t for ts in tables.values() for t in ts]}
        return ev.calibrate_per_tag(merged, cfg)["merged"]
    return ev.calibrate_per_tag(tables, cfg)


def _client_factory(args, cfg: Config):
    kind = args.backend or cfg.backend.kind
    if kind == "scripted":
        rules = args.rules or cfg.backend.rules_path
        return lambda tag, cond: ScriptedClient.from_file(rules)
    if kind == "replay":
        path = args.replay or cfg.backend.replay_path
        if not path:
            raise BadInput("the replay backend needs --replay or backend.replay_path")
        client = ReplayClient.from_jsonl(path)
        return lambda tag, cond: client
    if kind == "wire":
        b = cfg.backend
        client = WireClient(b.base_url, b.model, b.api_key_env, b.timeout)
        return lambda tag, cond: client
    raise BadInput(f"unknown backend {kind!r}")


# --------------------------------------------------------------------------
# Commands


def cmd_ingest(args) -> int:
    meta = {"dataset_tag": args.tag}
    if args.lane_ids:
        meta["lane_ids"] = [int(v) for v in args.lane_ids.split(",")]
    table = load_table(args.csv, args.frame_rate, meta)
    save_table(table, args.out)
    print(f"{len(table)} rows, {len(table.ids())} tracks, {len(table.frames())} frames -> {args.out}")
    return EXIT_OK


def cmd_qpr(args) -> int:
    cfg = _config(args)
    doc = _read_json(args.scene)
    try:
        scene = LabeledScene.from_dict(doc).scene if "scene" in doc else Scene.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise BadInput(f"bad scene JSON: {exc}") from None
    grid = cfg.grid.build(scene.ego)
    report = qpr_total(scene.ego, scene.neighbor_states, cfg.drf, cfg.costs, grid, cfg.convention)
    out = report.to_dict()
    thr_path = args.thresholds or cfg.thresholds_path
    if thr_path:
        note = risk_notification(report, RiskThresholds.load(thr_path), cfg.risk_templates)
        out["notification"] = note.to_text()
    if args.heatmap or args.csv:
        field = drf_evaluate(scene.ego, cfg.drf, grid)
        if args.heatmap:
            write_field_pgm(field, args.heatmap)
        if args.csv:
            write_field_csv(field, args.csv)
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    if args.dataset == BUILTIN_SUITE:
        tables = [t for ts in ev.builtin_suite(cfg).tables.values() for t in ts]
        tag = BUILTIN_SUITE
    else:
        tables = [load_table(args.dataset)]
        tag = tables[0].metadata.get("dataset_tag", Path(args.dataset).stem)
    seed = cfg.calibration.seed
    samples = sample_qpr_distribution(tables, args.n, seed, cfg.drf, cfg.costs, cfg.grid, cfg.convention,
                                      cfg.scene.wheelbase_ratio, cfg.scene.radius)
    thr = calibrate_thresholds(samples, cfg.convention, tag, seed)
    thr.save(args.out)
    print(f"t_low={thr.t_low:.6g} t_high={thr.t_high:.6g} from {thr.sample_count} samples -> {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    params = _read_json(args.params) if args.params else {}
    table = ev.qpr_sweeps(args.kind, params, cfg)
    table.write_csv(args.out)
    print(f"{len(table.rows)} rows -> {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    conditions = [c.strip() for c in args.conditions.split(",") if c.strip()]
    scenes, tables = load_dataset(args.dataset, cfg, args.labels)
    if not scenes:
        raise BadInput("the dataset yields no labeled scenes")
    agent_conds = [c for c in conditions if c != "idm"]
    thresholds = _thresholds(args, cfg, tables) if agent_conds else None
    factory = _client_factory(args, cfg) if agent_conds else None
    embedder_factory = None
    if cfg.backend.embedder == "wire":
        b = cfg.backend
        embedder_factory = lambda: WireEmbedder(b.base_url, b.embedding_model, b.embedding_dimension,  # noqa: E731
                                                b.api_key_env, b.timeout)
    table = ev.evaluate(scenes, conditions, cfg, factory, thresholds, embedder_factory=embedder_factory)
    doc = table.to_dict()
    doc["seed"] = cfg.seed
    doc["backend"] = args.backend or cfg.backend.kind
    doc["system_message"] = build_system_message(cfg).content
    if isinstance(thresholds, dict):
        doc["thresholds"] = {k: v.to_dict() for k, v in sorted(thresholds.items())}
    elif thresholds is not None:
        doc["thresholds"] = thresholds.to_dict()
    _write_text(args.out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if args.log:
        lines = []
        for (tag, cond) in sorted(table.logs):
            for line in table.logs[(tag, cond)].to_lines(cfg.agent.log_latency):
                lines.append(json.dumps({**line, "scenario_tag": tag}, sort_keys=True))
        _write_text(args.log, "".join(line + "\n" for line in lines))
    for row in doc["rows"]:
        print(f"{row['scenario_tag']:<13} {row['condition']:<7} safety {row['safety_rate']:.3f}  "
              f"alignment {row['decision_alignment']:.3f}  (n={row['n_scenes']})")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = _read_json(args.spec) if args.spec else {}
    spec = {**spec, "kind": args.kind}
    for item in args.param or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise BadInput(f"--param expects key=value, got {item!r}")
        try:
            spec[key] = json.loads(value)
        except ValueError:
            spec[key] = value
    table = synth_scenario(spec)
    save_table(table, args.out)
    print(f"{len(table)} rows, {len(table.ids())} tracks -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drfagent", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="normalize a tracks CSV")
    s.add_argument("csv")
    s.add_argument("--out", required=True)
    s.add_argument("--tag", default="highway", choices=("highway", "intersection", "roundabout"))
    s.add_argument("--frame-rate", type=float, default=25.0)
    s.add_argument("--lane-ids", help="comma-separated lane ids, increasing to the left")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("qpr", help="QPR report for one scene")
    s.add_argument("--scene", required=True)
    s.add_argument("--heatmap", help="write the ego DRF as a 16-bit PGM")
    s.add_argument("--csv", help="write the ego DRF as x,y,value CSV")
    s.add_argument("--thresholds")
    s.add_argument("--config")
    s.set_defaults(func=cmd_qpr)

    s = sub.add_parser("calibrate", help="percentile thresholds from sampled QPR")
    s.add_argument("--dataset", required=True)
    s.add_argument("-n", type=int, default=2000)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("sweep", help="QPR analysis sweeps")
    s.add_argument("--kind", required=True, choices=ev.SWEEP_KINDS)
    s.add_argument("--out", required=True)
    s.add_argument("--params", help="JSON file of sweep parameters")
    s.add_argument("--config")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("run", help="evaluate the baseline and agent conditions")
    s.add_argument("--dataset", required=True, help=f"{BUILTIN_SUITE}, labeled-scenes JSON or tracks CSV")
    s.add_argument("--conditions", default=",".join(ev.CONDITIONS))
    s.add_argument("--backend", choices=("scripted", "replay", "wire"))
    s.add_argument("--rules", help="scripted rule table JSON")
    s.add_argument("--replay", help="JSON-lines of recorded responses")
    s.add_argument("--labels", help="label override CSV (ego_id,frame,action)")
    s.add_argument("--thresholds")
    s.add_argument("--merge-thresholds", action="store_true",
                   help="calibrate one threshold pair across all scenario tags")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--log")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("synth", help="write a synthetic scenario as a tracks CSV")
    s.add_argument("--kind", required=True)
    s.add_argument("--spec", help="JSON file of scenario parameters")
    s.add_argument("--param", action="append", help="key=value (JSON value), repeatable")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (DrfAgentError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())

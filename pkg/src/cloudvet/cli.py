"""Command-line entry point wiring the library into reproducible experiments.

Every command is a pure function of its config file plus referenced inputs:
flags override config values, all randomness flows through explicit seeds, and
JSON artifacts carry the fully resolved configuration. Exit codes: 0 success,
1 runtime failure, 2 configuration or usage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import report
from .attacks import KINDS as ATTACK_KINDS
from .attacks import AttackSpec, apply_attack
from .classifier import (ADVERSARIAL, BENIGN, FldeConfig, load_model,
                         predict, save_model, train_flde)
from .cloud import (DatasetManifest, ManifestEntry, load_cloud, load_manifest,
                    read_cloud_file, resample, write_cloud_file, write_manifest)
from .errors import CloudVetError
from .evaluate import (SearchGrids, bench_timing, derive_seed,
                       greedy_param_search, make_pairs, run_experiment)
from .features import (PRESETS, FeatureRow, PipelineParams,
                       extract_feature_vector, read_feature_csv,
                       write_feature_csv)
from .geometry import extract_geometric

log = logging.getLogger(__name__)

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
PARAM_FIELDS = ("t_offset", "kg", "kv", "kc", "kn", "log_epsilon", "moment_epsilon")


class ConfigError(Exception):
    """Configuration or usage problem; maps to exit code 2."""


def _load_config(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        config = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config file must contain a JSON object")
    return config


def _pick(args, config, name, *config_path, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    node = config
    for key in config_path or (name,):
        if not isinstance(node, dict) or key not in node:
            return default
        node = node[key]
    return node


def _resolve_params(args, config):
    """(params, explicitly_given) from preset, config block, and flag overrides."""
    preset = _pick(args, config, "preset", "params_preset")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}, expected one of {sorted(PRESETS)}")
    base = PRESETS[preset] if preset else PipelineParams()
    block = config.get("params", {})
    if not isinstance(block, dict):
        raise ConfigError("config key 'params' must be an object")
    merged = {}
    given = preset is not None
    for field in PARAM_FIELDS:
        flag = getattr(args, field, None)
        if flag is not None:
            merged[field] = flag
            given = True
        elif field in block:
            merged[field] = block[field]
            given = True
        else:
            merged[field] = getattr(base, field)
    try:
        return PipelineParams(**merged), given
    except ValueError as exc:
        raise ConfigError(f"invalid pipeline parameters: {exc}") from exc


def _resolve_attack(args, config) -> AttackSpec:
    block = config.get("attack", {})
    kind = _pick(args, config, "attack_kind", "attack", "kind",
                 default=block.get("kind") if isinstance(block, dict) else None)
    if kind is None:
        raise ConfigError("an attack kind is required (--attack or config 'attack.kind')")
    magnitude = _pick(args, config, "magnitude", "attack", "magnitude")
    if magnitude is None:
        raise ConfigError("an attack magnitude is required (--magnitude)")
    mode = _pick(args, config, "attack_mode", "attack", "mode", default="")
    seed = _pick(args, config, "attack_seed", "attack", "seed", default=0)
    try:
        return AttackSpec(kind=kind, magnitude=magnitude, mode=mode, seed=int(seed))
    except ValueError as exc:
        raise ConfigError(f"invalid attack spec: {exc}") from exc


def _resolve_classifier(args, config) -> FldeConfig:
    grid = _pick(args, config, "d_sub_grid", "classifier", "d_sub_grid")
    if isinstance(grid, str):
        grid = _parse_int_list(grid, "--d-sub-grid")
    l_max = _pick(args, config, "l_max", "classifier", "l_max", default=500)
    seed = _pick(args, config, "train_seed", "classifier", "seed", default=0)
    try:
        return FldeConfig(d_sub_grid=tuple(grid) if grid else None,
                          l_max=int(l_max), seed=int(seed))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid classifier config: {exc}") from exc


def _parse_int_list(text, flag):
    try:
        return [int(tok) for tok in str(text).replace(" ", "").split(",") if tok]
    except ValueError as exc:
        raise ConfigError(f"{flag} expects a comma-separated integer list") from exc


def _resolve_manifest(args, config) -> DatasetManifest:
    path = _pick(args, config, "manifest")
    if path is None:
        raise ConfigError("a manifest is required (--manifest or config 'manifest')")
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    try:
        manifest = load_manifest(path)
    except CloudVetError as exc:
        raise ConfigError(str(exc)) from exc
    for entry in manifest.entries:
        target = manifest.resolve(entry)
        if not target.exists():
            raise ConfigError(f"manifest references missing file: {target}")
    return manifest


def _resolve_out(args, config, name="out"):
    value = _pick(args, config, name)
    if value is None:
        raise ConfigError(f"an output path is required (--{name.replace('_', '-')})")
    return Path(value)


def _resolve_out_dir(args, config) -> Path:
    out_dir = _resolve_out(args, config, name="out_dir")
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _common_ints(args, config):
    threads = int(_pick(args, config, "threads", default=1))
    pair_seed = int(_pick(args, config, "pair_seed", "seeds", "pairs", default=0))
    split_seed = int(_pick(args, config, "split_seed", "seeds", "split", default=0))
    test_fraction = float(_pick(args, config, "test_fraction", default=0.1))
    return threads, pair_seed, split_seed, test_fraction


def _figures_enabled(args, config) -> bool:
    if getattr(args, "no_figures", False):
        return False
    return bool(config.get("figures", True))


def _params_dict(params: PipelineParams) -> dict:
    return {field: getattr(params, field) for field in PARAM_FIELDS}


def _attack_dict(attack: AttackSpec) -> dict:
    return {"kind": attack.kind, "magnitude": attack.magnitude,
            "mode": attack.mode, "seed": attack.seed}


def _benign_clouds(manifest: DatasetManifest):
    entries = manifest.by_label(BENIGN)
    if not entries:
        raise ConfigError("manifest lists no benign clouds")
    return [load_cloud(manifest, e) for e in entries], entries


# ---------------------------------------------------------------------------
# subcommands


def cmd_extract(args, config) -> int:
    manifest = _resolve_manifest(args, config)
    params, _ = _resolve_params(args, config)
    out = _resolve_out(args, config)
    rows, failures = [], []
    for entry in manifest.entries:
        try:
            cloud = load_cloud(manifest, entry)
            vector = extract_feature_vector(cloud, params)
        except (CloudVetError, ValueError) as exc:
            failures.append((entry.path, exc))
            continue
        rows.append(FeatureRow(vector=vector, label=entry.label,
                               source=entry.path, pair_id=entry.pair_id))
    write_feature_csv(rows, out)
    print(f"wrote {len(rows)} feature rows to {out}")
    if failures:
        for path, exc in failures:
            print(f"extraction failed for {path}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_simulate(args, config) -> int:
    manifest = _resolve_manifest(args, config)
    params, _ = _resolve_params(args, config)
    attack = _resolve_attack(args, config)
    out_dir = _resolve_out_dir(args, config)
    _, pair_seed, _, _ = _common_ints(args, config)

    entries = manifest.by_label(BENIGN) or manifest.entries
    out_entries, failures = [], []
    for index, entry in enumerate(entries):
        try:
            cloud = load_cloud(manifest, entry)
            spec = replace(attack, seed=derive_seed(attack.seed, index))
            features = None
            if spec.kind == "remove" and spec.mode == "highcurv":
                features = extract_geometric(cloud, params)
            adversarial = apply_attack(cloud, spec, features=features)
        except (CloudVetError, ValueError) as exc:
            failures.append((entry.path, exc))
            continue
        pair_id = entry.pair_id or str(index)
        stem = Path(entry.path).stem
        adv_name = f"{stem}_adv.xyz"
        write_cloud_file(adversarial, out_dir / adv_name)
        if len(adversarial) != len(cloud):
            benign = resample(cloud, len(adversarial),
                              seed=derive_seed(pair_seed, index))
            benign_name = f"{stem}_benign.xyz"
            write_cloud_file(benign, out_dir / benign_name)
        else:
            benign_name = os.path.relpath(manifest.resolve(entry), out_dir)
        out_entries.append(ManifestEntry(path=benign_name, label=BENIGN,
                                         pair_id=pair_id))
        out_entries.append(ManifestEntry(path=adv_name, label=ADVERSARIAL,
                                         pair_id=pair_id))
    write_manifest(DatasetManifest(entries=out_entries, root=out_dir),
                   out_dir / "manifest.csv")
    print(f"wrote {len(out_entries) // 2} simulated pairs under {out_dir}")
    if failures:
        for path, exc in failures:
            print(f"simulation failed for {path}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_pair(args, config) -> int:
    manifest = _resolve_manifest(args, config)
    params, _ = _resolve_params(args, config)
    attack = _resolve_attack(args, config)
    out = _resolve_out(args, config)
    threads, pair_seed, _, _ = _common_ints(args, config)
    clouds, _ = _benign_clouds(manifest)
    labeled = make_pairs(clouds, attack, params, seed=pair_seed, workers=threads)
    rows = [FeatureRow(vector=r.vector, label=r.label, source=r.source,
                       pair_id=r.pair_id) for r in labeled.rows]
    write_feature_csv(rows, out)
    print(f"wrote {len(rows)} paired feature rows to {out}")
    return EXIT_OK


def cmd_train(args, config) -> int:
    features_path = _pick(args, config, "features")
    if features_path is None:
        raise ConfigError("a features CSV is required (--features)")
    features_path = Path(features_path)
    if not features_path.exists():
        raise ConfigError(f"features CSV not found: {features_path}")
    params, params_given = _resolve_params(args, config)
    flde_config = _resolve_classifier(args, config)
    out = _resolve_out(args, config)
    rows = read_feature_csv(features_path)
    pos = [r.vector for r in rows if r.label == ADVERSARIAL]
    neg = [r.vector for r in rows if r.label == BENIGN]
    snapshot = _params_dict(params) if params_given else None
    model = train_flde(pos, neg, flde_config, params_snapshot=snapshot)
    out.write_text(save_model(model), encoding="utf-8")
    print(f"trained ensemble of {len(model.learners)} learners "
          f"(d_sub={model.d_sub}, oob_error={model.oob_error:.4f}) -> {out}")
    return EXIT_OK


def _detect_params(args, config, model) -> PipelineParams:
    params, given = _resolve_params(args, config)
    if given:
        return params
    if model.params_snapshot:
        try:
            return PipelineParams(**model.params_snapshot)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model carries an invalid params snapshot: {exc}") from exc
    return params


def cmd_detect(args, config) -> int:
    model_path = _pick(args, config, "model")
    if model_path is None:
        raise ConfigError("a model file is required (--model)")
    model_path = Path(model_path)
    if not model_path.exists():
        raise ConfigError(f"model file not found: {model_path}")
    try:
        model = load_model(model_path.read_text(encoding="utf-8"))
    except CloudVetError as exc:
        raise ConfigError(f"cannot load model: {exc}") from exc
    cloud_paths = [Path(p) for p in (args.clouds or [])]
    if not cloud_paths:
        raise ConfigError("at least one cloud file is required")
    missing = [p for p in cloud_paths if not p.exists()]
    if missing:
        raise ConfigError(f"cloud file not found: {missing[0]}")
    params = _detect_params(args, config, model)
    failures = []
    for path in cloud_paths:
        try:
            cloud = read_cloud_file(path)
            score, verdict = predict(model, extract_feature_vector(cloud, params))
        except (CloudVetError, ValueError) as exc:
            failures.append((path, exc))
            continue
        print(f"{path}\t{score}\t{verdict}")
    if failures:
        for path, exc in failures:
            print(f"detection failed for {path}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_eval(args, config) -> int:
    manifest = _resolve_manifest(args, config)
    params, _ = _resolve_params(args, config)
    attack = _resolve_attack(args, config)
    flde_config = _resolve_classifier(args, config)
    out_dir = _resolve_out_dir(args, config)
    threads, pair_seed, split_seed, test_fraction = _common_ints(args, config)
    clouds, _ = _benign_clouds(manifest)

    result, model, _ = run_experiment(
        clouds, attack, params, flde_config, test_fraction=test_fraction,
        split_seed=split_seed, workers=threads)
    resolved = {
        "command": "eval", "manifest": str(_pick(args, config, "manifest")),
        "params": _params_dict(params), "attack": _attack_dict(attack),
        "classifier": {"d_sub_grid": list(flde_config.d_sub_grid or []),
                       "l_max": flde_config.l_max, "seed": flde_config.seed},
        "seeds": {"pairs": pair_seed, "split": split_seed},
        "test_fraction": test_fraction, "threads": threads,
    }
    report.write_json(out_dir / "report.json", report.report_payload(result),
                      config=resolved)
    report.write_roc_csv(out_dir / "roc.csv", result.roc)
    (out_dir / "model.json").write_text(save_model(model), encoding="utf-8")
    if _figures_enabled(args, config):
        report.save_roc_figure(out_dir / "roc.png", result.roc, result.auc,
                               title=f"{attack.kind} ({attack.mode})")
    print(f"accuracy={result.accuracy:.4f} auc={result.auc:.4f} -> {out_dir}")
    return EXIT_OK


def _resolve_grids(args, config) -> SearchGrids:
    block = config.get("grids", {})
    if not isinstance(block, dict):
        raise ConfigError("config key 'grids' must be an object")
    values = {}
    for name in ("t_offset", "kg", "kv", "kc", "kn"):
        flag = getattr(args, f"grid_{name}", None)
        if flag is not None:
            values[name] = _parse_int_list(flag, f"--grid-{name.replace('_', '-')}")
        elif name in block:
            values[name] = [int(v) for v in block[name]]
        else:
            raise ConfigError(f"missing search grid for {name} "
                              f"(--grid-{name.replace('_', '-')})")
    try:
        return SearchGrids(**values)
    except ValueError as exc:
        raise ConfigError(f"invalid search grids: {exc}") from exc


def cmd_search(args, config) -> int:
    manifest = _resolve_manifest(args, config)
    params, _ = _resolve_params(args, config)
    attack = _resolve_attack(args, config)
    flde_config = _resolve_classifier(args, config)
    grids = _resolve_grids(args, config)
    out_dir = _resolve_out_dir(args, config)
    threads, pair_seed, split_seed, test_fraction = _common_ints(args, config)
    clouds, _ = _benign_clouds(manifest)

    best, trace = greedy_param_search(
        clouds, attack, params, grids, seed=split_seed, flde_config=flde_config,
        test_fraction=test_fraction, workers=threads)
    resolved = {
        "command": "search", "manifest": str(_pick(args, config, "manifest")),
        "init_params": _params_dict(params), "attack": _attack_dict(attack),
        "grids": {name: list(getattr(grids, name))
                  for name in ("t_offset", "kg", "kv", "kc", "kn")},
        "seeds": {"pairs": pair_seed, "split": split_seed},
        "test_fraction": test_fraction, "threads": threads,
    }
    payload = {
        "best_params": _params_dict(best),
        "trace": [{"params": _params_dict(p), "accuracy": acc}
                  for p, acc in trace],
    }
    report.write_json(out_dir / "search.json", payload, config=resolved)
    if _figures_enabled(args, config):
        report.save_search_figure(out_dir / "search.png", trace, grids)
    print(f"best params: {_params_dict(best)} -> {out_dir}")
    return EXIT_OK


def cmd_bench(args, config) -> int:
    manifest = _resolve_manifest(args, config)
    params, _ = _resolve_params(args, config)
    out_dir = _resolve_out_dir(args, config)
    threads = int(_pick(args, config, "threads", default=1))
    if threads != 1:
        raise ConfigError("bench requires --threads 1 for comparable timings")
    warmup = int(_pick(args, config, "warmup", default=1))
    clouds = [load_cloud(manifest, e) for e in manifest.entries]
    mean_seconds, per_cloud = bench_timing(clouds, params, warmup=warmup)
    resolved = {
        "command": "bench", "manifest": str(_pick(args, config, "manifest")),
        "params": _params_dict(params), "warmup": warmup, "threads": threads,
    }
    payload = {
        "mean_seconds_per_cloud": mean_seconds,
        "per_cloud_seconds": per_cloud,
        "cloud_sizes": [len(c) for c in clouds],
    }
    report.write_json(out_dir / "timing.json", payload, config=resolved)
    if _figures_enabled(args, config):
        report.save_timing_figure(out_dir / "timing.png", per_cloud, mean_seconds)
    print(f"mean extraction time: {mean_seconds:.4f} s/cloud -> {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--threads", type=int, help="worker threads for per-cloud work")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")


def _add_params(p):
    g = p.add_argument_group("pipeline parameters")
    g.add_argument("--preset", choices=sorted(PRESETS),
                   help="parameter preset per attack family")
    g.add_argument("--t-offset", dest="t_offset", type=int,
                   help="smoothing cutoff offset (t = N - t_offset)")
    for name in ("kg", "kv", "kc", "kn"):
        g.add_argument(f"--{name}", dest=name, type=int,
                       help=f"neighborhood size {name}")
    g.add_argument("--log-epsilon", dest="log_epsilon", type=float)
    g.add_argument("--moment-epsilon", dest="moment_epsilon", type=float)


def _add_attack(p):
    g = p.add_argument_group("attack")
    g.add_argument("--attack", dest="attack_kind", choices=ATTACK_KINDS,
                   help="synthetic attack kind")
    g.add_argument("--magnitude", type=float,
                   help="noise sigma (perturb) or point count (add/remove)")
    g.add_argument("--attack-mode", dest="attack_mode",
                   help="gaussian | uniform | cluster | random | highcurv")
    g.add_argument("--attack-seed", dest="attack_seed", type=int)


def _add_classifier(p):
    g = p.add_argument_group("classifier")
    g.add_argument("--d-sub-grid", dest="d_sub_grid",
                   help="comma-separated candidate subspace sizes")
    g.add_argument("--l-max", dest="l_max", type=int,
                   help="maximum ensemble size")
    g.add_argument("--train-seed", dest="train_seed", type=int)


def _add_protocol(p):
    g = p.add_argument_group("protocol")
    g.add_argument("--test-fraction", dest="test_fraction", type=float)
    g.add_argument("--pair-seed", dest="pair_seed", type=int)
    g.add_argument("--split-seed", dest="split_seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cloudvet",
        description="Detect tampered 3D point clouds from residual geometric "
                    "features, without querying the model under attack.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract feature vectors for a manifest")
    _add_common(p); _add_params(p)
    p.add_argument("--manifest", help="dataset manifest CSV")
    p.add_argument("--out", help="output feature CSV")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("simulate", help="write attacked clouds plus a paired manifest")
    _add_common(p); _add_params(p); _add_attack(p); _add_protocol(p)
    p.add_argument("--manifest", help="benign dataset manifest CSV")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pair", help="build a paired labeled feature CSV in one step")
    _add_common(p); _add_params(p); _add_attack(p); _add_protocol(p)
    p.add_argument("--manifest", help="benign dataset manifest CSV")
    p.add_argument("--out", help="output feature CSV")
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("train", help="train the detector from a labeled feature CSV")
    _add_common(p); _add_params(p); _add_classifier(p)
    p.add_argument("--features", help="labeled feature CSV")
    p.add_argument("--out", help="output model JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="score cloud files with a trained model")
    _add_common(p); _add_params(p)
    p.add_argument("--model", help="model JSON file")
    p.add_argument("clouds", nargs="*", help="cloud files to score")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="run the full detection experiment")
    _add_common(p); _add_params(p); _add_attack(p); _add_classifier(p)
    _add_protocol(p)
    p.add_argument("--manifest", help="benign dataset manifest CSV")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.add_argument("--no-figures", dest="no_figures", action="store_true",
                   help="skip figure rendering")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("search", help="greedy parameter search")
    _add_common(p); _add_params(p); _add_attack(p); _add_classifier(p)
    _add_protocol(p)
    p.add_argument("--manifest", help="benign dataset manifest CSV")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.add_argument("--no-figures", dest="no_figures", action="store_true")
    for name in ("t-offset", "kg", "kv", "kc", "kn"):
        p.add_argument(f"--grid-{name}", dest=f"grid_{name.replace('-', '_')}",
                       help=f"comma-separated candidates for {name}")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("bench", help="time feature extraction per cloud")
    _add_common(p); _add_params(p)
    p.add_argument("--manifest", help="dataset manifest CSV")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.add_argument("--warmup", type=int, help="untimed warmup extractions")
    p.add_argument("--no-figures", dest="no_figures", action="store_true")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load_config(args)
        return args.func(args, config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CloudVetError, RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()

"""Command-line front-end.

Subcommands wire the pipeline stages together: ``fit`` (validate,
cross-fit nuisances, score, search), ``validate-policies`` (resampled
policy comparison), ``simulate`` (two-phase experiment plus evaluation
tables), ``evaluate`` (cluster-robust regression on labeled data) and
``export-tree``. Every command is deterministic given (config, seed):
JSON keys are sorted and floats rounded to a fixed number of significant
digits so artifacts are byte-identical across re-runs.

Exit codes: 0 success, 1 usage, 2 data validation, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluate as ev
from .config import (ConfigError, RunConfig, csv_schema, load_config,
                     resolved_config_text, two_phase_config)
from .dataset import DataError, Dataset, known_propensities, load_csv, validate
from .nuisance import NuisanceFit, fit_outcome_models, fit_propensities, make_folds
from .policies import TreePolicy, export_tree, tree_depth, tree_from_dict, tree_to_dict
from .scores import (aipw_scores, policy_reward, reward_difference,
                     scores_to_csv, stochastic_reward)
from .simulate import TwoPhaseResult, run_two_phase, validation_exercise
from .treesearch import SearchConfig, exact_search, hybrid_search


class UsageError(ValueError):
    pass


def _round_floats(obj, digits: int):
    if isinstance(obj, float):
        return float(f"{obj:.{digits}g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v, digits) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(f"{float(obj):.{digits}g}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist(), digits)
    return obj


def _write_json(path: Path, obj, digits: int) -> None:
    text = json.dumps(_round_floats(obj, digits), sort_keys=True, indent=2)
    path.write_text(text + "\n", encoding="utf-8")


def _fmt(x, digits: int) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.{digits}g}"
    return str(x)


def _write_csv(path: Path, header, rows, digits: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v, digits) for v in row])


def _dataset_rows(ds: Dataset, groups=None, random_flags=None):
    header = list(ds.feature_names) + ["action", "outcome", "cluster"]
    extras = []
    if ds.wave is not None:
        header.append("wave")
        extras.append(ds.wave)
    if groups is not None:
        header.append("group")
        extras.append(np.asarray(groups))
    if random_flags is not None:
        header.append("random_flag")
        extras.append(np.asarray(random_flags).astype(int))
    if ds.propensities is not None:
        header += [f"prop_{a}" for a in range(ds.d_arms)]
    rows = []
    for i in range(ds.n):
        row = list(ds.features[i]) + [int(ds.actions[i]), float(ds.outcomes[i]),
                                      int(ds.clusters[i])]
        row += [col[i] for col in extras]
        if ds.propensities is not None:
            row += list(ds.propensities[i])
        rows.append(row)
    return header, rows


def _load_dataset(cfg: RunConfig) -> Dataset:
    schema = csv_schema(cfg)
    ds = load_csv(cfg.data["path"], schema)
    shares = cfg.data.get("known_shares")
    if shares is not None:
        ds = known_propensities(ds, np.asarray(shares, dtype=np.float64))
    return ds


def _validate_gate(ds: Dataset, cfg: RunConfig) -> "ev_report":
    eta = float(cfg.data.get("eta", 0.01))
    report = validate(ds, eta)
    if not report.bounded_ok:
        raise DataError("validation failed: " + "; ".join(report.issues))
    if not report.overlap_ok:
        raise DataError(
            f"validation failed: min propensity {report.min_propensity:.6g} "
            f"below eta {eta:.6g}")
    return report


def _prepare_scores(ds: Dataset, cfg: RunConfig):
    folds = make_folds(ds.clusters, cfg.n_folds, cfg.seed)
    mu = fit_outcome_models(ds, folds, cfg.forest, cfg.seed, n_jobs=cfg.threads)
    if ds.propensities is not None:
        e = ds.propensities.copy()
        stage = "known"
    else:
        e = fit_propensities(ds, folds, cfg.forest, cfg.seed, clip=cfg.clip,
                             n_jobs=cfg.threads)
        stage = "estimated"
    fit = NuisanceFit(mu_hat=mu, e_hat=e, learner_config=cfg.forest.to_dict(),
                      seed=cfg.seed)
    return aipw_scores(ds, fit), stage


def _search_config(cfg: RunConfig) -> SearchConfig:
    return SearchConfig(
        depth=int(cfg.search.get("depth", 2)),
        split_step=int(cfg.search.get("split_step", 1)),
        min_node_size=int(cfg.search.get("min_node_size", 1)),
        hybrid_search_depth=int(cfg.search.get("hybrid_search_depth", 2)),
    )


def _out_dir(cfg: RunConfig, override) -> Path:
    out = Path(override) if override else Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.yaml").write_text(resolved_config_text(cfg),
                                              encoding="utf-8")
    return out


def _tree_artifacts(out: Path, root, feature_names, result, digits) -> None:
    doc = {
        "feature_names": list(feature_names),
        "tree": tree_to_dict(root),
        "depth": tree_depth(root),
        "total_score": result.total_score,
        "nodes_evaluated": result.nodes_evaluated,
    }
    _write_json(out / "tree.json", doc, digits)
    (out / "tree.gv").write_text(export_tree(root, feature_names),
                                 encoding="utf-8")


def cmd_fit(cfg: RunConfig, out_override=None) -> int:
    out = _out_dir(cfg, out_override)
    ds = _load_dataset(cfg)
    report = _validate_gate(ds, cfg)
    scores, stage = _prepare_scores(ds, cfg)
    search_cfg = _search_config(cfg)
    method = str(cfg.search.get("method", "exact"))
    if method == "hybrid":
        result = hybrid_search(ds.features, scores, search_cfg)
    elif method == "exact":
        result = exact_search(ds.features, scores, search_cfg)
    else:
        raise UsageError(f"unknown search method {method!r}")
    tree = TreePolicy(root=result.root)

    _tree_artifacts(out, result.root, ds.feature_names, result, cfg.float_digits)
    scores_to_csv(scores, out / "scores.csv",
                  float_format=f".{cfg.float_digits}g")

    assignment = tree.assign(ds.features)
    tree_reward = policy_reward(scores, assignment)
    uniform = np.zeros(ds.d_arms)
    uniform[1:] = 1.0 / (ds.d_arms - 1)
    policies: dict = {}
    best_constant = None
    for a in range(ds.d_arms):
        r = policy_reward(scores, np.full(ds.n, a, dtype=np.int64))
        policies[f"constant_{a}"] = {"value": r.value, "std_error": r.std_error}
        if a > 0 and (best_constant is None or r.value > policies[
                f"constant_{best_constant}"]["value"]):
            best_constant = a
    r = stochastic_reward(scores, uniform)
    policies["random_letters"] = {"value": r.value, "std_error": r.std_error}
    diff = reward_difference(scores, assignment,
                             np.full(ds.n, best_constant, dtype=np.int64))
    report_doc = {
        "n": ds.n,
        "d_arms": ds.d_arms,
        "method": "aipw",
        "propensity_stage": stage,
        "validation": {
            "overlap_ok": report.overlap_ok,
            "min_propensity": report.min_propensity,
            "eta": report.eta,
            "bounded_ok": report.bounded_ok,
            "outcome_range": list(report.outcome_range),
            "issues": list(report.issues),
        },
        "tree": {
            "reward": {"value": tree_reward.value,
                       "std_error": tree_reward.std_error},
            "total_score": result.total_score,
            "depth": tree_depth(result.root),
        },
        "policies": policies,
        "tree_minus_best_constant": {
            "best_constant_arm": best_constant,
            "value": diff.value,
            "std_error": diff.std_error,
        },
    }
    _write_json(out / "reward_report.json", report_doc, cfg.float_digits)
    return 0


_STAR_THRESHOLDS_TABLE2 = (0.1, 0.05, 0.01)


def cmd_validate_policies(cfg: RunConfig, out_override=None) -> int:
    out = _out_dir(cfg, out_override)
    ds = _load_dataset(cfg)
    _validate_gate(ds, cfg)
    val = (cfg.simulate.get("validation") or {})
    sizes = val.get("sizes")
    if sizes is None:
        n1 = int(round(0.6 * ds.n))
        sizes = (n1, ds.n - n1)
    matrix = validation_exercise(
        ds,
        reps=int(val.get("reps", 500)),
        split=float(val.get("split", 0.6)),
        sizes=(int(sizes[0]), int(sizes[1])),
        depths=tuple(val.get("depths", (2, 3))),
        hybrid_depths=tuple(tuple(h) for h in val.get("hybrid", ((4, 2),))),
        seed=cfg.seed,
        forest=cfg.forest,
        n_folds=cfg.n_folds,
        clip=cfg.clip,
        split_step=int(cfg.search.get("split_step", 1)),
        min_node_size=int(cfg.search.get("min_node_size", 1)),
        n_jobs=cfg.threads,
    )
    labels = matrix.policies
    import math
    stars = []
    for i in range(len(labels)):
        row = []
        for j in range(len(labels)):
            se = matrix.boot_se[i, j]
            if se == 0.0:
                row.append("")
                continue
            z = abs(matrix.mean_diff[i, j]) / se
            p = math.erfc(z / math.sqrt(2.0))
            row.append(ev.significance_stars(p, _STAR_THRESHOLDS_TABLE2))
        stars.append(row)
    doc = {
        "policies": list(labels),
        "mean_diff": matrix.mean_diff,
        "boot_se": matrix.boot_se,
        "stars": stars,
        "mean_rewards": matrix.mean_rewards,
        "reps": matrix.reps,
    }
    _write_json(out / "comparison_matrix.json", doc, cfg.float_digits)
    rows = []
    for i, lab in enumerate(labels):
        rows.append([lab] + [
            _fmt(matrix.mean_diff[i, j], cfg.float_digits) + stars[i][j]
            for j in range(len(labels))])
        rows.append([f"{lab}_se"] + [
            _fmt(matrix.boot_se[i, j], cfg.float_digits)
            for j in range(len(labels))])
    _write_csv(out / "comparison_matrix.csv", ["policy"] + list(labels), rows,
               cfg.float_digits)
    return 0


def _evaluation_tables(result: TwoPhaseResult, cfg: RunConfig, out: Path) -> None:
    controls = tuple(cfg.evaluate.get("controls") or
                     ("age", "female", "years_zh", "years_ch", "region"))
    df_adjust = str(cfg.evaluate.get("df_adjust", "CR1"))
    fits = {}

    wave2_mask = result.stacked.wave == 2
    ds2 = result.stacked.subset(np.flatnonzero(wave2_mask))
    fits["col1_wave2_pooled"] = ev.fit_design(ev.build_design(
        ds2, result.stacked_groups[wave2_mask],
        ev.DesignSpec(w_mode="pooled", controls=controls, wave_dummy=True,
                      base_group=ev.GROUP_RANDOM),
        random_flags=result.stacked_random[wave2_mask]), df_adjust)
    fits["col2_letters"] = ev.fit_design(ev.build_design(
        result.stacked, result.stacked_groups,
        ev.DesignSpec(w_mode="letters", controls=controls, wave_dummy=True,
                      base_group=ev.GROUP_NOTHING),
        random_flags=result.stacked_random), df_adjust)
    fits["col3_pooled"] = ev.fit_design(ev.build_design(
        result.stacked, result.stacked_groups,
        ev.DesignSpec(w_mode="pooled", controls=controls, wave_dummy=True,
                      base_group=ev.GROUP_NOTHING),
        random_flags=result.stacked_random), df_adjust)

    panel_b = {}
    letters_fit = fits["col2_letters"]
    for other in ("letter1", "letter2", "letter3"):
        c = ev.contrast(letters_fit, ev.GROUP_TREE, other)
        panel_b[f"policy_tree_vs_{other}"] = {
            "estimate": c.estimate, "std_error": c.std_error,
            "pvalue": c.pvalue}
    c = ev.contrast(fits["col3_pooled"], ev.GROUP_TREE, ev.GROUP_RANDOM)
    panel_b["policy_tree_vs_random"] = {
        "estimate": c.estimate, "std_error": c.std_error, "pvalue": c.pvalue}

    doc = {
        "panel_a": {name: ev.fit_to_dict(fit) for name, fit in fits.items()},
        "panel_b": panel_b,
    }
    _write_json(out / "table3.json", doc, cfg.float_digits)

    lines = []
    for name, fit in fits.items():
        lines.append(f"== {name} ==")
        lines.append(ev.summary_table(fit))
        lines.append("")
    lines.append("== Panel B: policy tree versus alternatives ==")
    for name, c in panel_b.items():
        stars = ev.significance_stars(c["pvalue"])
        lines.append(f"{name}: {c['estimate']:+.6f} ({c['std_error']:.6f}){stars}")
    (out / "table3.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_simulate(cfg: RunConfig, out_override=None) -> int:
    out = _out_dir(cfg, out_override)
    tp_cfg = two_phase_config(cfg)
    result = run_two_phase(tp_cfg, n_jobs=cfg.threads)

    header, rows = _dataset_rows(result.wave1, result.wave1_groups,
                                 np.asarray(result.wave1_groups != ev.GROUP_NOTHING))
    _write_csv(out / "wave1.csv", header, rows, cfg.float_digits)
    header, rows = _dataset_rows(result.wave2, result.wave2_groups,
                                 ~result.b1_mask)
    _write_csv(out / "wave2.csv", header, rows, cfg.float_digits)
    header, rows = _dataset_rows(result.stacked, result.stacked_groups,
                                 result.stacked_random)
    _write_csv(out / "stacked.csv", header, rows, cfg.float_digits)

    _tree_artifacts(out, result.search.root, result.wave1.feature_names,
                    result.search, cfg.float_digits)

    sizes = {
        "n": result.population.n,
        "group_a": int((result.wave1_groups != ev.GROUP_NOTHING).sum()),
        "group_b": int(result.wave2.n),
        "group_b1": int(result.b1_mask.sum()),
        "group_b2": int((~result.b1_mask).sum()),
        "clamp_fraction": result.oracle.clamp_fraction,
        "tree_total_score": result.search.total_score,
    }
    _write_json(out / "two_phase_summary.json", sizes, cfg.float_digits)
    _evaluation_tables(result, cfg, out)
    return 0


def cmd_evaluate(cfg: RunConfig, out_override=None) -> int:
    out = _out_dir(cfg, out_override)
    ds = _load_dataset(cfg)
    group_col = cfg.data.get("group")
    if not group_col:
        raise UsageError("evaluate requires data.group naming the label column")
    # group labels and the optional random flag are re-read as raw text
    import csv as _csv
    with open(cfg.data["path"], newline="", encoding="utf-8") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        body = list(reader)
    if group_col not in header:
        raise DataError(f"missing column {group_col!r}")
    gi = header.index(group_col)
    groups = np.asarray([row[gi].strip() for row in body])
    flag_col = cfg.data.get("random_flag")
    if flag_col:
        if flag_col not in header:
            raise DataError(f"missing column {flag_col!r}")
        fi = header.index(flag_col)
        random_flags = np.asarray([row[fi].strip() not in ("0", "", "false", "False")
                                   for row in body])
    else:
        random_flags = np.zeros(ds.n, dtype=bool)

    spec = ev.DesignSpec(
        w_mode=str(cfg.evaluate.get("w_mode", "letters")),
        controls=tuple(cfg.evaluate.get("controls") or ()),
        wave_dummy=bool(cfg.evaluate.get("wave_dummy", True)),
        base_group=str(cfg.evaluate.get("base_group", ev.GROUP_NOTHING)),
    )
    fit = ev.fit_design(ev.build_design(ds, groups, spec, random_flags),
                        str(cfg.evaluate.get("df_adjust", "CR1")))
    doc = {"fit": ev.fit_to_dict(fit)}
    contrasts = {}
    if ev.GROUP_TREE in fit.names:
        for other in fit.names:
            if other in ("intercept", ev.GROUP_TREE) or \
                    not (other.startswith("letter") or other == ev.GROUP_RANDOM):
                continue
            c = ev.contrast(fit, ev.GROUP_TREE, other)
            contrasts[f"policy_tree_vs_{other}"] = {
                "estimate": c.estimate, "std_error": c.std_error,
                "pvalue": c.pvalue}
    doc["contrasts"] = contrasts
    _write_json(out / "evaluation.json", doc, cfg.float_digits)
    (out / "evaluation.txt").write_text(ev.summary_table(fit) + "\n",
                                        encoding="utf-8")
    return 0


def cmd_export_tree(tree_path, out_override=None) -> int:
    path = Path(tree_path)
    if not path.exists():
        raise UsageError(f"tree file not found: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    root = tree_from_dict(doc["tree"])
    names = doc["feature_names"]
    text = export_tree(root, names)
    out = Path(out_override) if out_override else path.parent
    out.mkdir(parents=True, exist_ok=True)
    (out / (path.stem + ".gv")).write_text(text, encoding="utf-8")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="policylearn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("fit", "validate-policies", "simulate", "evaluate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", default=None)
    p = sub.add_parser("export-tree")
    p.add_argument("--tree", required=True)
    p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        if args.command == "export-tree":
            return cmd_export_tree(args.tree, args.out)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            cfg.threads = args.threads
        handler = {
            "fit": cmd_fit,
            "validate-policies": cmd_validate_policies,
            "simulate": cmd_simulate,
            "evaluate": cmd_evaluate,
        }[args.command]
        return handler(cfg, args.out)
    except (UsageError, ConfigError) as exc:
        _report_error("usage", exc)
        return 1
    except DataError as exc:
        _report_error("data", exc)
        return 2
    except Exception as exc:  # numerical and remaining failures
        _report_error("numerical", exc)
        return 3


def _report_error(stage: str, exc: Exception) -> None:
    line = json.dumps({"error": {"stage": stage, "type": type(exc).__name__,
                                 "message": str(exc)}})
    print(line, file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())

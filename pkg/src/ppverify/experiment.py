"""End-to-end experiment harness.

One run simulates the two-party workflow on a single machine, per trial:
build a dataset, hold out a query set, train one target model per
enumerated pipeline (round-robin ground truth), release a noised copy of
the training data at each epsilon, train the verifier's model zoo on the
release, fit both verifiers on the zoo's explanation responses, and score
how often each verifier recovers the target's true pipeline class. A
Hamming-distance membership attack runs against each release.

Everything derives from one master seed, so a rerun with the same config
reproduces results.csv byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, PPVerifyError
from .explain import LimeConfig, ShapConfig
from .ldp import PrivacyBudget, privatize
from .membership import AttackConfig, mia_power
from .models import ARCHITECTURES, TrainConfig, train
from .preprocess import ENUMERATION_MODES, apply_pipeline, enumerate_pipelines
from .seeding import derive_seed
from .svgchart import render_line_chart
from .tabular import (
    Dataset,
    SyntheticSpec,
    load_csv,
    load_schema_sidecar,
    make_synthetic,
    sample_rows,
    split,
)
from .verify import (
    TASKS,
    GRANULARITIES,
    LabeledResponseSet,
    build_responses,
    classify,
    fit_ml_verifier,
    fit_threshold_verifier,
)
from .preprocess import drop_missing

EXPLAINERS = ("lime", "shap")
SOURCES = ("synthetic", "csv")
METHODS = ("ml", "threshold")

DEFAULT_EPSILON_GRID = (0.1, 1.0, 10.0, 1000.0, math.inf)


@dataclass
class ExperimentConfig:
    """Full description of one experiment; serializes to/from JSON."""

    source: str = "synthetic"
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    csv_path: str | None = None
    schema_path: str | None = None
    architecture: str = "logreg"
    explainer: str = "lime"
    task: str = "binary"
    enumeration_mode: str = "paper-compat"
    epsilon_grid: tuple = DEFAULT_EPSILON_GRID
    trials: int = 5
    query_count: int = 500
    train_fraction: float = 0.8
    master_seed: int = 0
    lime_num_samples: int = 2000
    lime_kernel_width: float | None = None
    lime_ridge: float = 1e-3
    shap_budget: object = 2048
    background_size: int = 100
    verifier_architecture: str = "rforest"
    threshold_granularity: str = "per_query"
    attack: bool = True
    attack_group_size: int = 200
    attack_fpr: float = 0.05

    def validate(self) -> None:
        if self.source not in SOURCES:
            raise ConfigError(f"source must be one of {SOURCES}, got {self.source!r}")
        if self.source == "csv" and not self.csv_path:
            raise ConfigError("csv source needs csv_path")
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.verifier_architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown verifier architecture {self.verifier_architecture!r}")
        if self.explainer not in EXPLAINERS:
            raise ConfigError(f"explainer must be one of {EXPLAINERS}, got {self.explainer!r}")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.enumeration_mode not in ENUMERATION_MODES:
            raise ConfigError(f"unknown enumeration mode {self.enumeration_mode!r}")
        if self.threshold_granularity not in GRANULARITIES:
            raise ConfigError(f"unknown granularity {self.threshold_granularity!r}")
        if not self.epsilon_grid:
            raise ConfigError("epsilon grid is empty")
        for eps in self.epsilon_grid:
            PrivacyBudget(float(eps))
        if self.trials < 1 or self.query_count < 1 or self.background_size < 1:
            raise ConfigError("trials, query_count and background_size must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.attack_group_size < 1:
            raise ConfigError("attack_group_size must be >= 1")
        if not 0.0 < self.attack_fpr < 1.0:
            raise ConfigError("attack_fpr must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["synthetic"] = None if self.synthetic is None else dataclasses.asdict(self.synthetic)
        d["epsilon_grid"] = [_eps_text(e) for e in self.epsilon_grid]
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("experiment config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "synthetic" in kwargs and kwargs["synthetic"] is not None:
            if not isinstance(kwargs["synthetic"], dict):
                raise ConfigError("synthetic spec must be a JSON object")
            spec_known = {f.name for f in dataclasses.fields(SyntheticSpec)}
            spec_unknown = set(kwargs["synthetic"]) - spec_known
            if spec_unknown:
                raise ConfigError(f"unknown synthetic keys: {sorted(spec_unknown)}")
            kwargs["synthetic"] = SyntheticSpec(**kwargs["synthetic"])
        if "epsilon_grid" in kwargs:
            kwargs["epsilon_grid"] = tuple(
                PrivacyBudget.parse(str(e)).epsilon for e in kwargs["epsilon_grid"]
            )
        if "shap_budget" in kwargs and isinstance(kwargs["shap_budget"], str):
            if kwargs["shap_budget"] != "exact":
                raise ConfigError("shap_budget must be an integer or \"exact\"")
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class ResultRow:
    epsilon: float
    trial: int
    method: str
    accuracy: float  # NaN when the cell failed
    status: str = "ok"


@dataclass(frozen=True)
class AttackRow:
    epsilon: float
    trial: int
    power: float
    gamma: float
    status: str = "ok"


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list
    attack_rows: list
    runtime: dict


def _eps_text(eps: float) -> str:
    return "inf" if math.isinf(float(eps)) else repr(float(eps))


def _model_cfg(cfg: ExperimentConfig, arch: str, seed: int) -> TrainConfig:
    return TrainConfig(architecture=arch, seed=seed)


def _explainer_cfg(cfg: ExperimentConfig, background: Dataset, seed: int):
    if cfg.explainer == "lime":
        return LimeConfig(
            num_samples=cfg.lime_num_samples,
            kernel_width=cfg.lime_kernel_width,
            ridge_strength=cfg.lime_ridge,
            seed=seed,
        )
    return ShapConfig(background=background, coalition_budget=cfg.shap_budget, seed=seed)


def _load_source(cfg: ExperimentConfig) -> Dataset | None:
    if cfg.source != "csv":
        return None
    schema = "infer"
    if cfg.schema_path:
        schema = load_schema_sidecar(cfg.schema_path)
    return load_csv(cfg.csv_path, schema=schema)


def _pipeline_responses(cfg, data, queries, pipelines, bg_idx, seed_stage, trial, tag, eps_index=None):
    """Train one model per pipeline and collect its query responses.

    Pipeline and training seeds are stage-specific (the two parties do not
    share randomness), but the explainer seed depends only on the trial: the
    probing side explains every model under the same perturbation draws, so
    identical models produce identical responses.
    """
    out = {}
    explain_seed = derive_seed(cfg.master_seed, "explain", trial)
    for k, (pipe, label) in enumerate(pipelines):
        parts = [cfg.master_seed, seed_stage, trial, k]
        if eps_index is not None:
            parts.insert(3, eps_index)
        tr, te, _ = apply_pipeline(data, queries, pipe, derive_seed(*parts, "pipe"))
        model = train(tr, _model_cfg(cfg, cfg.architecture, derive_seed(*parts, "train")))
        background = te.take(bg_idx)
        e_cfg = _explainer_cfg(cfg, background, explain_seed)
        out[label.class_id] = build_responses(
            model,
            te,
            e_cfg,
            background=background,
            model_tag=f"{tag}-{label.class_id}",
        )
    return out


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute the full protocol and return an in-memory report."""
    cfg.validate()
    started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    t0 = time.perf_counter()
    stages: dict = {}

    def clock(stage, t_from):
        now = time.perf_counter()
        stages[stage] = stages.get(stage, 0.0) + (now - t_from)
        return now

    pipelines = enumerate_pipelines(cfg.enumeration_mode)
    label_table = {label.class_id: label for _, label in pipelines}
    source = _load_source(cfg)

    rows: list = []
    attack_rows: list = []

    for trial in range(cfg.trials):
        t = time.perf_counter()
        if cfg.source == "synthetic":
            full = make_synthetic(cfg.synthetic, derive_seed(cfg.master_seed, "data", trial))
        else:
            full = source
        train_d, test_d = split(full, cfg.train_fraction, derive_seed(cfg.master_seed, "split", trial))
        test_complete = drop_missing(test_d)
        if test_complete.n_rows == 0:
            raise DataError("test split has no complete rows to query")
        qn = min(cfg.query_count, test_complete.n_rows)
        queries = sample_rows(test_complete, qn, derive_seed(cfg.master_seed, "queries", trial))
        bg_n = min(cfg.background_size, qn)
        bg_idx = np.sort(
            np.random.default_rng(derive_seed(cfg.master_seed, "background", trial)).permutation(qn)[:bg_n]
        )
        t = clock("data", t)

        target_responses = None
        target_error = None
        try:
            target_responses = _pipeline_responses(
                cfg, train_d, queries, pipelines, bg_idx, "target", trial, "target"
            )
        except PPVerifyError as exc:
            target_error = f"error: {exc}"
        t = clock("target_models", t)

        for ei, eps in enumerate(cfg.epsilon_grid):
            t = time.perf_counter()
            budget = PrivacyBudget(float(eps))
            released = None
            release_error = None
            try:
                released = privatize(
                    train_d, budget, derive_seed(cfg.master_seed, "ldp", trial, ei)
                )
            except PPVerifyError as exc:
                release_error = f"error: {exc}"
            t = clock("release", t)

            status = release_error or target_error
            accuracies = {}
            if status is None:
                try:
                    verifier_responses = _pipeline_responses(
                        cfg, released, queries, pipelines, bg_idx,
                        "verifier", trial, "verifier", eps_index=ei,
                    )
                    labeled = LabeledResponseSet.from_models(
                        [(label, verifier_responses[label.class_id]) for _, label in pipelines],
                        cfg.task,
                    )
                    t = clock("verifier_models", t)
                    v_ml = fit_ml_verifier(
                        labeled,
                        TrainConfig(
                            architecture=cfg.verifier_architecture,
                            seed=derive_seed(cfg.master_seed, "fit-ml", trial, ei),
                        ),
                    )
                    reference = verifier_responses[0]
                    v_t = fit_threshold_verifier(reference, labeled, cfg.threshold_granularity)

                    correct = {"ml": 0, "threshold": 0}
                    for _, label in pipelines:
                        target = target_responses[label.class_id]
                        verdict_ml = classify(v_ml, target, label_table=label_table)
                        verdict_t = classify(
                            v_t, target, reference=reference, label_table=label_table
                        )
                        for method, verdict in (("ml", verdict_ml), ("threshold", verdict_t)):
                            if cfg.task == "binary":
                                ok = verdict.predicted_label.is_proper == label.is_proper
                            else:
                                ok = verdict.predicted_label.class_id == label.class_id
                            correct[method] += int(ok)
                    accuracies = {m: correct[m] / len(pipelines) for m in METHODS}
                    t = clock("verify", t)
                except PPVerifyError as exc:
                    status = f"error: {exc}"

            for method in METHODS:
                if status is None:
                    rows.append(ResultRow(float(eps), trial, method, accuracies[method]))
                else:
                    rows.append(ResultRow(float(eps), trial, method, float("nan"), status))

            if cfg.attack:
                t = time.perf_counter()
                if released is None:
                    attack_rows.append(
                        AttackRow(float(eps), trial, float("nan"), float("nan"), release_error)
                    )
                else:
                    try:
                        case_n = min(cfg.attack_group_size, train_d.n_rows)
                        case = sample_rows(
                            train_d, case_n, derive_seed(cfg.master_seed, "attack-case", trial)
                        )
                        # Duplicated rows can straddle the split; a test row
                        # whose exact copy sits in the owner's data is a
                        # member, so the control pool excludes those.
                        member_keys = {train_d.values[i].tobytes() for i in range(train_d.n_rows)}
                        pool = [
                            i
                            for i in range(test_d.n_rows)
                            if test_d.values[i].tobytes() not in member_keys
                        ]
                        if not pool:
                            raise DataError("no non-member rows available for the control group")
                        control_pool = test_d.take(pool)
                        control_n = min(cfg.attack_group_size, control_pool.n_rows)
                        control = sample_rows(
                            control_pool,
                            control_n,
                            derive_seed(cfg.master_seed, "attack-control", trial),
                        )
                        result = mia_power(
                            released, AttackConfig(case, control, cfg.attack_fpr)
                        )
                        attack_rows.append(
                            AttackRow(float(eps), trial, result.power, result.gamma)
                        )
                    except PPVerifyError as exc:
                        attack_rows.append(
                            AttackRow(float(eps), trial, float("nan"), float("nan"), f"error: {exc}")
                        )
                t = clock("attack", t)

    runtime = {
        "started_at": started,
        "stages": {k: round(v, 3) for k, v in stages.items()},
        "total_seconds": round(time.perf_counter() - t0, 3),
    }
    return ExperimentReport(cfg, rows, attack_rows, runtime)


# ---------------------------------------------------------------------------
# Report emission


def summarize(report: ExperimentReport) -> list:
    """Mean and population stddev per (epsilon, method), attack included."""
    out = []
    grid = [float(e) for e in report.config.epsilon_grid]
    for eps in grid:
        for method in METHODS:
            vals = [
                r.accuracy
                for r in report.rows
                if r.method == method and r.epsilon == eps and r.status == "ok"
            ]
            out.append(_summary_row(eps, method, vals))
    if report.attack_rows:
        for eps in grid:
            vals = [
                r.power
                for r in report.attack_rows
                if r.epsilon == eps and r.status == "ok"
            ]
            out.append(_summary_row(eps, "attack", vals))
    return out


def _summary_row(eps, method, vals):
    if vals:
        arr = np.asarray(vals)
        return {
            "epsilon": eps,
            "method": method,
            "mean": float(arr.mean()),
            "stddev": float(arr.std()),
            "n_trials": len(vals),
        }
    return {"epsilon": eps, "method": method, "mean": None, "stddev": None, "n_trials": 0}


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _results_csv(report: ExperimentReport) -> str:
    lines = ["epsilon,trial,method,accuracy,status"]
    for r in report.rows:
        acc = "" if math.isnan(r.accuracy) else repr(r.accuracy)
        lines.append(f"{_eps_text(r.epsilon)},{r.trial},{r.method},{acc},{r.status}")
    return "\n".join(lines) + "\n"


def _attack_csv(report: ExperimentReport) -> str:
    lines = ["epsilon,trial,power,gamma,status"]
    for r in report.attack_rows:
        power = "" if math.isnan(r.power) else repr(r.power)
        gamma = "" if math.isnan(r.gamma) else repr(r.gamma)
        lines.append(f"{_eps_text(r.epsilon)},{r.trial},{power},{gamma},{r.status}")
    return "\n".join(lines) + "\n"


def _summary_csv(summary) -> str:
    lines = ["epsilon,method,mean,stddev,n_trials"]
    for row in summary:
        mean = "" if row["mean"] is None else repr(row["mean"])
        sd = "" if row["stddev"] is None else repr(row["stddev"])
        lines.append(
            f"{_eps_text(row['epsilon'])},{row['method']},{mean},{sd},{row['n_trials']}"
        )
    return "\n".join(lines) + "\n"


def emit_report(report: ExperimentReport, out_dir: str) -> dict:
    """Write CSVs, config echo, runtime metadata, and charts.

    results.csv, summary.csv, attack.csv and the charts are pure functions
    of the report's result content, so re-emitting the same report (or a
    report reproduced from the same config and seed) is byte-identical.
    run_meta.json records wall-clock timings and is exempt from that
    guarantee.
    """
    os.makedirs(out_dir, exist_ok=True)
    summary = summarize(report)
    paths = {}

    paths["results"] = os.path.join(out_dir, "results.csv")
    _write_text(paths["results"], _results_csv(report))

    paths["summary"] = os.path.join(out_dir, "summary.csv")
    _write_text(paths["summary"], _summary_csv(summary))

    if report.attack_rows:
        paths["attack"] = os.path.join(out_dir, "attack.csv")
        _write_text(paths["attack"], _attack_csv(report))

    paths["config"] = os.path.join(out_dir, "config.json")
    _write_text(
        paths["config"],
        json.dumps(report.config.to_dict(), indent=2, sort_keys=True) + "\n",
    )

    paths["run_meta"] = os.path.join(out_dir, "run_meta.json")
    _write_text(paths["run_meta"], json.dumps(report.runtime, indent=2, sort_keys=True) + "\n")

    x_labels = [_eps_text(e) for e in report.config.epsilon_grid]

    def series_for(method):
        values = []
        for eps in report.config.epsilon_grid:
            row = next(
                r for r in summary if r["method"] == method and r["epsilon"] == float(eps)
            )
            values.append(row["mean"])
        return values

    chart = render_line_chart(
        "Verification accuracy vs epsilon",
        x_labels,
        [(m, series_for(m)) for m in METHODS],
        ylabel="verification accuracy",
    )
    paths["accuracy_chart"] = os.path.join(out_dir, "verification_accuracy.svg")
    _write_text(paths["accuracy_chart"], chart)

    if report.attack_rows:
        chart = render_line_chart(
            "Membership attack power vs epsilon",
            x_labels,
            [("attack", series_for("attack"))],
            ylabel="attack power",
        )
        paths["attack_chart"] = os.path.join(out_dir, "attack_power.svg")
        _write_text(paths["attack_chart"], chart)

    return paths

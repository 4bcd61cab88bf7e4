# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Top-level interface to the MultiFIX package.

An :py:class:`Experiment` holds one configuration and runs the stages of a
study on it: dataset generation, training with optional searches, the
degradation sweep, distillation of the trained folds, explanation of the
hybrid models and the final report. Every stage writes its artifacts
atomically together with a ``run.json`` provenance record.
"""
import csv
import hashlib
import json
import logging
import sys
from collections import defaultdict
from importlib import metadata
from pathlib import Path

import numpy as np
from prettytable import PrettyTable

from multifix.errors import ConfigurationError, DataError
from multifix.explain import (build_bundle, load_bundle, pick_samples, save_bundle,
                              table_equivalence, table_from_function)
from multifix.parameters import (DataConfig, ExplainConfig, GomeaConfig, HpoGrid, NasSpace,
                                 PipelineConfig, RunConfig)
from multifix.pipeline import (DistillationResult, PipelineModel, distill_folds, fit_final,
                               flag_stagnation, hpo_grid_search, nas_enumerate,
                               run_bottleneck_sweep, run_degradation_sweep, write_expressions,
                               write_reports, write_significance)
from multifix.pipeline.presets import PRESETS, VARIANTS, hpo_grid, nas_space, pipeline_config
from multifix.pipeline.sweep import SUMMARY_HEADER
from multifix.synthdata import (FoldPlan, ingest_external, kfold_split, load_dataset,
                                make_dataset, save_dataset)
from multifix.synthdata.storage import atomic_directory
from multifix.visualization import Visuals

logger = logging.getLogger(__name__)

SECTIONS = ("data", "pipeline", "gomea", "hpo", "nas", "explain", "run")
DEPENDENCIES = ("multifix", "numpy", "scipy", "prettytable", "matplotlib", "numba",
                "statsmodels")
DISTILL_HEADER = ["fold", "nn_bacc", "hybrid_bacc", "block", "fidelity", "table_equivalent"]
LOCALISATION_HEADER = ["fold", "sample", "feature", "mass_inside"]


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(config, override):
    """
    Apply one ``section.key=value`` override to a config dictionary in place.

    Keys below the section may be dotted further, e.g.
    ``pipeline.fusion_block.hidden=[32]``. The value is read as JSON and
    kept as a string when it is not valid JSON.

    Raises
    ------
    ConfigurationError
        If the override has no ``=`` or names an unknown section.
    """
    key, sep, text = override.partition("=")
    path = key.strip().split(".")
    if not sep or len(path) < 2 or not all(path):
        raise ConfigurationError(f"[override:{override}] is invalid, inner error: "
                                 f"expected section.key=value")
    if path[0] not in SECTIONS:
        raise ConfigurationError(f"[override:{override}] is invalid, inner error: unknown "
                                 f"section {path[0]}, expected one of {SECTIONS}")
    node = config.setdefault(path[0], {})
    for part in path[1:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"[override:{override}] is invalid, inner error: "
                                     f"{part} is not a mapping")
    node[path[-1]] = _parse_value(text)


def load_config(path=None, overrides=()):
    """
    Read an experiment config file and apply dotted overrides.

    Parameters
    ----------
    path: str or Path, optional
        JSON file with any of the sections ``data``, ``pipeline``, ``gomea``,
        ``hpo``, ``nas``, ``explain`` and ``run``.
    overrides: sequence of str
        ``section.key=value`` items applied after the file.

    Returns
    -------
    dict
        Section name to a plain dictionary of the values given; missing
        sections are empty.

    Raises
    ------
    ConfigurationError
        If the file cannot be read, a section or key is unknown or a value
        is invalid.
    """
    config = {section: {} for section in SECTIONS}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"[config:{path}] is invalid, inner error: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"[config:{path}] is invalid, inner error: "
                                     f"expected a JSON object")
        for section, values in loaded.items():
            if section not in SECTIONS:
                raise ConfigurationError(f"[section:{section}] is invalid, inner error: "
                                         f"expected one of {SECTIONS}")
            if not isinstance(values, dict):
                raise ConfigurationError(f"[{section}:{values}] is invalid, inner error: "
                                         f"expected a JSON object")
            config[section] = values
    for override in overrides:
        apply_override(config, override)
    validate_config(config)
    return config


def validate_config(config):
    """Build every section once so that unknown keys and bad values surface early."""
    data = DataConfig(config.get("data"))
    run = RunConfig(config.get("run"))
    ExplainConfig(config.get("explain"))
    GomeaConfig(config.get("gomea"))
    problem = data.problem if data.problem in PRESETS else "multiclass"
    pipeline_config(problem, config.get("pipeline"), run.variant)
    hpo_grid(problem, config.get("hpo"))
    if config.get("nas"):
        NasSpace(config["nas"])


def config_hash(config):
    """sha256 of the canonical JSON text of ``config``."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _version(package):
    try:
        return metadata.version(package)
    except metadata.PackageNotFoundError:
        return "unknown"


def write_provenance(out_dir, command, config, seed):
    """
    Write ``run.json``: command, config, config hash, seed and package versions.

    The record holds everything needed to re-run the stage that wrote it.
    """
    record = {
        "command": list(command),
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "versions": {"python": sys.version.split()[0],
                     **{package: _version(package) for package in DEPENDENCIES}},
    }
    with open(Path(out_dir) / "run.json", "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=1, sort_keys=True)
    return record


def read_provenance(run_dir):
    """
    Read the ``run.json`` of a stage directory.

    Raises
    ------
    DataError
        If the directory holds no provenance record.
    """
    path = Path(run_dir) / "run.json"
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"no run record at {path}, inner error: {e}") from e


def reference_table(problem):
    """Truth table the generator of ``problem`` labels with, or None when there is none."""
    match problem:
        case "multiclass":
            return table_from_function(lambda i, t: 2 * i + t, ["I1", "T1"])
        case "xor":
            return table_from_function(lambda i, t: i ^ t, ["I1", "T1"])
        case "xor3":
            return table_from_function(lambda i1, i2, t: i1 ^ i2 ^ t, ["I1", "I2", "T1"])
    return None


class Experiment:
    """
    One configured MultiFIX study.
    """

    def __init__(self, config=None, seed=None, out_dir=None, n_jobs=1, command=()):
        """
        Parameters
        ----------
        config: dict, optional
            Sections as returned by :py:func:`load_config`.
        seed: int, optional
            Master seed; overrides ``data.seed`` and ``pipeline.seed``.
        out_dir: str or Path, optional
            Default output directory of the stages.
        n_jobs: int
            Worker processes for folds and cells; results do not depend on it.
        command: sequence of str
            Command line recorded in ``run.json``.

        Raises
        ------
        ConfigurationError
            If a section holds unknown keys or invalid values.
        """
        self.config = {section: dict((config or {}).get(section) or {}) for section in SECTIONS}
        if seed is not None:
            self.config["data"]["seed"] = seed
            self.config["pipeline"]["seed"] = seed
        validate_config(self.config)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.n_jobs = n_jobs
        self.command = list(command)

    def __repr__(self):
        return f"Experiment({self.data_config.problem}, seed={self.seed})"

    @property
    def data_config(self):
        return DataConfig(self.config["data"])

    @property
    def run_config(self):
        return RunConfig(self.config["run"])

    @property
    def gomea_config(self):
        return GomeaConfig(self.config["gomea"])

    @property
    def explain_config(self):
        return ExplainConfig(self.config["explain"])

    @property
    def seed(self):
        return self.data_config.seed

    def set_pipeline_parameters(self, params):
        """
        Change pipeline settings.

        Raises
        ------
        ConfigurationError
            If invalid parameter values are passed.
        """
        updated = {**self.config["pipeline"], **params}
        self.pipeline_config(updated)
        self.config["pipeline"] = updated

    def set_gomea_parameters(self, params):
        """
        Change GP-GOMEA settings.

        Raises
        ------
        ConfigurationError
            If invalid parameter values are passed.
        """
        updated = {**self.config["gomea"], **params}
        GomeaConfig(updated)
        self.config["gomea"] = updated

    def pipeline_config(self, overrides=None, problem=None):
        """PipelineConfig of ``problem`` (default: the data problem) with the run variant."""
        problem = problem or self.data_config.problem
        overrides = self.config["pipeline"] if overrides is None else overrides
        variant = self.run_config.variant
        if problem in PRESETS:
            return pipeline_config(problem, overrides, variant)
        return PipelineConfig({"problem": problem, **VARIANTS[variant], **overrides})

    def _hpo_grid(self, problem):
        if problem in PRESETS:
            return hpo_grid(problem, self.config["hpo"])
        return HpoGrid(self.config["hpo"])

    def _nas_space(self, problem):
        if problem in PRESETS:
            return nas_space(problem, self.config["nas"])
        return NasSpace(self.config["nas"]) if self.config["nas"] else None

    def _out(self, out_dir, default):
        if out_dir is not None:
            return Path(out_dir)
        if self.out_dir is not None:
            return self.out_dir
        return Path(default)

    def dataset(self):
        """
        The dataset of this experiment: loaded from ``data.data_dir`` when set,
        ingested for the ``external`` problem, generated otherwise.
        """
        data = self.data_config
        if data.data_dir is not None:
            return load_dataset(data.data_dir)
        if data.problem == "external":
            if data.image_dir is None or data.tabular_file is None or data.schema is None:
                raise ConfigurationError("[problem:external] is invalid, inner error: external "
                                         "data needs data.data_dir or data.image_dir, "
                                         "data.tabular_file and data.schema")
            return ingest_external(data.image_dir, data.tabular_file, data.schema,
                                   data.resolution)
        return make_dataset(data.problem, data.n_samples, data.img_size, data.tab_sigma,
                            data.seed)

    def generate(self, out_dir=None):
        """Generate the configured dataset and save it to ``out_dir``."""
        out_dir = self._out(out_dir, "data")
        dataset = self.dataset()
        save_dataset(dataset, out_dir)
        logger.info("generated %s", dataset)
        return dataset

    def _search(self, dataset, config, plan, kind):
        run = self.run_config
        searches = []
        if run.search in ("hpo", "both"):
            result = hpo_grid_search(self._hpo_grid(dataset.problem_id), dataset, config, plan,
                                     kind, self.n_jobs)
            config = result.best_config
            searches.append(("hpo", result))
        if run.search in ("nas", "both"):
            space = self._nas_space(dataset.problem_id)
            if space is None:
                raise ConfigurationError(f"[search:{run.search}] is invalid, inner error: "
                                         f"{dataset.problem_id} has no architecture search "
                                         f"space, set nas.* keys")
            rng = np.random.default_rng(config.seed)
            result = nas_enumerate(space, dataset, config, plan, kind, self.n_jobs, rng)
            config = result.best_config
            searches.append(("nas", result))
        for name, result in searches:
            logger.info("%s search on %s:\n%s", name, dataset.problem_id, result.table())
        return config, searches

    def train(self, out_dir=None):
        """
        Cross-validate the configured model and keep one checkpoint per fold.

        The optional searches and the bottleneck-width sweep run first and
        the best configuration is re-trained with :py:func:`fit_final`.

        Writes ``fold<i>.mfix``, ``history.csv``, ``results.csv``,
        ``summary.csv``, ``folds.json``, ``run.json`` and a loss figure.

        Returns
        -------
        EvalReport
        """
        out_dir = self._out(out_dir, "run")
        run = self.run_config
        dataset = self.dataset()
        config = self.pipeline_config(problem=dataset.problem_id)
        plan = kfold_split(dataset.labels, config.folds, config.seed)
        reports = []
        config, searches = self._search(dataset, config, plan, run.kind)
        for _, result in searches:
            reports += result.reports
        if run.widths:
            width, width_reports = run_bottleneck_sweep(dataset, config, plan, run.widths,
                                                        self.n_jobs)
            config = config.replace(n_i=width, n_t=width)
            reports += width_reports
        with atomic_directory(out_dir) as tmp:
            report, results = fit_final(dataset, plan, config, tmp, run.kind, self.n_jobs)
            report.cell.update({"stage": "final", "variant": run.variant})
            flag_stagnation(report)
            write_reports(reports + [report], tmp)
            with open(tmp / "folds.json", "w", encoding="utf-8") as fh:
                json.dump(plan.to_dict(), fh)
            write_provenance(tmp, self.command, {**self.config,
                                                 "pipeline": config.as_dict()}, self.seed)
            histories = [r.history for r in results if r.history is not None]
            if histories:
                Visuals(tmp, dataset.problem_id).history(histories)
        logger.info("trained %s: %s", dataset.problem_id, report)
        return report

    def sweep(self, out_dir=None):
        """
        Degradation sweep over resolutions and tabular sigmas of the
        multiclass problem, with significance of fusion against both single
        modalities on the clean cell.

        Returns
        -------
        DegradationResult
        """
        out_dir = self._out(out_dir, "sweep")
        run, data = self.run_config, self.data_config
        config = self.pipeline_config(problem="multiclass")
        if run.search != "none":
            clean = make_dataset("multiclass", data.n_samples, run.resolutions[0],
                                 run.sigmas[0], data.seed)
            plan = kfold_split(clean.labels, config.folds, config.seed)
            config, _ = self._search(clean, config, plan, "fusion")
        result = run_degradation_sweep(config, run.resolutions, run.sigmas,
                                       data.n_samples or 200, data.seed, n_jobs=self.n_jobs)
        comparisons = result.fusion_vs_single(0, 0)
        clean_report = result.report(0, 0)
        for name, significance in comparisons.items():
            clean_report.significance[f"fusion_vs_{name}"] = significance.as_dict()
        with atomic_directory(out_dir) as tmp:
            reports = list(result.all_reports())
            for report in reports:
                flag_stagnation(report)
            write_reports(reports, tmp)
            write_significance({f"fusion_vs_{name}": significance
                                for name, significance in comparisons.items()},
                               tmp / "significance.csv")
            write_provenance(tmp, self.command, {**self.config,
                                                 "pipeline": config.as_dict()}, self.seed)
            Visuals(tmp, "multiclass").result_matrix(result)
        return result

    def _run_inputs(self, run_dir):
        """Dataset, fold plan and fold checkpoints of a training run."""
        run_dir = Path(run_dir)
        record = read_provenance(run_dir)
        data = {**self.config["data"], **record["config"].get("data", {})}
        dataset = Experiment({**self.config, "data": data}).dataset()
        try:
            with open(run_dir / "folds.json", encoding="utf-8") as fh:
                plan = FoldPlan.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError, KeyError) as e:
            raise DataError(f"no fold plan in {run_dir}, inner error: {e}") from e
        paths = [run_dir / f"fold{i}.mfix" for i in range(plan.k)]
        missing = [str(p) for p in paths if not p.is_file()]
        if missing:
            raise DataError(f"missing fold checkpoints: {missing}")
        return dataset, plan, paths

    def distill(self, run_dir, out_dir=None):
        """
        Replace the tabular and fusion blocks of every fold model of a
        training run with GP-GOMEA expressions.

        Writes ``expressions.txt``, ``distill.csv``, ``hybrid/fold<i>.mfix``
        and an expression-only bundle per fold to ``out_dir`` (default
        ``run_dir/distill``).

        Returns
        -------
        list of DistillationResult
        """
        out_dir = self._out(out_dir, Path(run_dir) / "distill")
        dataset, plan, paths = self._run_inputs(run_dir)
        models = [PipelineModel.load(path)[0] for path in paths]
        seed = models[0].config.seed
        models, results = distill_folds(models, dataset, plan, self.gomea_config, seed,
                                        self.n_jobs)
        reference = reference_table(dataset.problem_id)
        with atomic_directory(out_dir) as tmp:
            write_expressions(results, tmp / "expressions.txt")
            (tmp / "hybrid").mkdir()
            rows = []
            for model, result in zip(models, results):
                model.save(tmp / "hybrid" / f"fold{result.fold}.mfix",
                           {"fold": result.fold, "hybrid_bacc": result.hybrid_bacc})
                bundle = build_bundle(model, result, dataset)
                save_bundle(bundle, tmp / "bundles" / f"fold{result.fold}")
                equivalent = ""
                if reference is not None and reference.names == bundle.truth_table.names:
                    equivalent, witness = table_equivalence(bundle.truth_table, reference)
                    logger.info("fold %d: truth table equivalent to generator: %s %s",
                                result.fold, equivalent, witness or "")
                    equivalent = int(equivalent)
                for block in result.blocks:
                    rows.append([result.fold, f"{result.nn_bacc:.6f}",
                                 f"{result.hybrid_bacc:.6f}", block.name,
                                 f"{block.fidelity:.6f}", equivalent])
            with open(tmp / "distill.csv", "w", newline="", encoding="utf-8") as csvfile:
                writer = csv.writer(csvfile, delimiter=",")
                writer.writerow(DISTILL_HEADER)
                writer.writerows(rows)
            write_provenance(tmp, self.command, self.config, self.seed)
        return results

    def explain(self, run_dir, samples=None, out_dir=None):
        """
        Build the explanation bundle of every distilled fold model: Grad-CAM
        heatmaps for the requested samples that lie in the fold's test set
        plus ``explain.per_class`` test samples of every class.

        Writes ``bundles/fold<i>/`` and ``localisation.csv`` to ``out_dir``
        (default ``run_dir/explain``).

        Returns
        -------
        list of ExplanationBundle
        """
        run_dir = Path(run_dir)
        out_dir = self._out(out_dir, run_dir / "explain")
        explain = self.explain_config
        samples = set(explain.samples if samples is None else samples)
        dataset, plan, _ = self._run_inputs(run_dir)
        if samples and not samples <= set(range(len(dataset))):
            raise DataError(f"samples {sorted(samples)} outside [0, {len(dataset)})")
        distilled = run_dir / "distill"
        bundles, rows = [], []
        with atomic_directory(out_dir) as tmp:
            for i in range(plan.k):
                path = distilled / "hybrid" / f"fold{i}.mfix"
                if not path.is_file():
                    raise DataError(f"no distilled model at {path}, run distill first")
                model, _ = PipelineModel.load(path)
                stored = load_bundle(distilled / "bundles" / f"fold{i}")
                test = plan.test(i)
                chosen = sorted(samples.intersection(test.tolist()))
                chosen = sorted(set(chosen) | set(pick_samples(dataset, test,
                                                               explain.per_class)))
                if "image" not in model.blocks:
                    chosen = []
                result = DistillationResult(i, stored.tabular, stored.fusion, float("nan"),
                                            stored.hybrid_bacc, model.thresholds,
                                            stored.predictions, stored.labels)
                bundle = build_bundle(model, result, dataset, chosen, explain.layer)
                save_bundle(bundle, tmp / "bundles" / f"fold{i}")
                bundles.append(bundle)
                for heatmap in bundle.heatmaps:
                    boxes = dataset.boxes[heatmap.sample_id].values()
                    mass = min(1.0, sum(heatmap.mass_inside(box) for box in boxes))
                    rows.append([i, heatmap.sample_id, f"I{heatmap.feature_index + 1}",
                                 f"{mass:.6f}"])
            with open(tmp / "localisation.csv", "w", newline="", encoding="utf-8") as csvfile:
                writer = csv.writer(csvfile, delimiter=",")
                writer.writerow(LOCALISATION_HEADER)
                writer.writerows(rows)
            write_provenance(tmp, self.command, self.config, self.seed)
        if rows:
            logger.info("mean heat mass inside the shape boxes: %.3f over %d heatmaps",
                        np.mean([float(row[3]) for row in rows]), len(rows))
        return bundles


def _read_results(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def report(results_dir):
    """
    Summarise every ``results.csv`` below ``results_dir``.

    Cells are grouped by problem; a cell is named by the directory holding
    its ``results.csv`` and its cell text. Writes ``summary.csv`` and
    ``report.txt`` to ``results_dir``; running it again gives identical files.

    Returns
    -------
    str
        Tables of mean ± std BAcc per problem followed by the expressions and
        truth tables found below ``results_dir``.

    Raises
    ------
    DataError
        If there is no ``results.csv`` below ``results_dir``.
    """
    results_dir = Path(results_dir)
    files = sorted(results_dir.rglob("results.csv"))
    if not files:
        raise DataError(f"no results.csv below {results_dir}")
    cells = defaultdict(lambda: defaultdict(list))
    n_classes = {}
    for path in files:
        relative = path.parent.relative_to(results_dir).as_posix()
        for row in _read_results(path):
            key = row["cell"] if relative == "." else f"{relative}:{row['cell']}"
            cells[row["problem"]][key].append(float(row["bacc"]))
            n_classes[row["problem"]] = int(row["n_classes"])
    summary, sections = [], []
    for problem in sorted(cells):
        table = PrettyTable(["cell", "folds", "BAcc", "stagnated"])
        table.align["cell"] = "l"
        chance = 1.0 / n_classes[problem]
        for key in sorted(cells[problem]):
            values = np.asarray(cells[problem][key])
            mean, std = float(values.mean()), float(values.std())
            stagnated = abs(mean - chance) < 0.1
            table.add_row([key, values.size, f"{mean:.3f} ± {std:.3f}", "yes" if stagnated
                           else ""])
            summary.append([problem, key, f"{mean:.6f}", f"{std:.6f}", int(stagnated)])
        sections.append(f"{problem}\n{table}")
    for path in sorted(results_dir.rglob("expressions.txt")):
        text = path.read_text(encoding="utf-8").rstrip()
        sections.append(f"{path.relative_to(results_dir).as_posix()}\n{text}")
    for path in sorted(results_dir.rglob("truth_table.csv")):
        rows = _read_results(path)
        table = PrettyTable(list(rows[0]) if rows else ["empty"])
        for row in rows:
            table.add_row(list(row.values()))
        sections.append(f"{path.relative_to(results_dir).as_posix()}\n{table}")
    text = "\n\n".join(sections) + "\n"
    with open(results_dir / "summary.csv", "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.writer(csvfile, delimiter=",")
        writer.writerow(SUMMARY_HEADER)
        writer.writerows(summary)
    (results_dir / "report.txt").write_text(text, encoding="utf-8")
    return text

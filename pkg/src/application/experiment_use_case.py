"""Comparison experiments: training-variant ablation and stream-configuration sweep."""

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from ..core.hypernet.network import init_hypernetwork
from ..core.lm.model import ModelWeights
from ..domain.config import RunConfig
from ..domain.errors import ConfigurationError
from ..domain.kinds import AblationKind
from ..domain.records import KnowledgeRecord, RecordBatch, TokenSequence
from .corpus import StreamSampler, fixed_stream
from .editor import EditSessionState, edit_stream, fine_tune_baseline
from .metrics import METRIC_NAMES, MetricsReport, decode_answers, evaluate
from .pipeline_use_case import (
    EVAL_FILE,
    LOCALITY_FILE,
    TRAIN_FILE,
    TRAINING_LOG_COLUMNS,
    CommandResult,
    PipelineUseCase,
)
from .trainer import TrainingLog
from .variant_registry import TrainingRoutine

logger = logging.getLogger(__name__)

ABLATION_COLUMNS = ("variant",) + METRIC_NAMES
NORM_COLUMNS = ("variant", "train_update_norm_sq", "edit_update_norm_sq")
SWEEP_COLUMNS = ("n_batches", "batch_size", "n_edits") + METRIC_NAMES + ("mean_edit_seconds",)


@dataclass
class VariantOutcome:
    """Metrics and update sizes of one trained variant on the held-out stream."""

    variant: str
    report: MetricsReport
    log: TrainingLog
    train_update_norm_sq: float
    edit_update_norm_sq: float

    def metrics_row(self) -> Dict[str, Any]:
        return {"variant": self.variant, **{m: getattr(self.report, m) for m in METRIC_NAMES}}

    def norm_row(self) -> Dict[str, Any]:
        return {
            "variant": self.variant,
            "train_update_norm_sq": self.train_update_norm_sq,
            "edit_update_norm_sq": self.edit_update_norm_sq,
        }


def mean_step_norm_sq(session: EditSessionState) -> float:
    """Mean over edit steps of the update's squared norm summed over layers."""
    if not session.step_norms_sq:
        return 0.0
    return float(np.mean([sum(norms.values()) for norms in session.step_norms_sq]))


def run_variant(
    kind: AblationKind,
    routine: TrainingRoutine,
    weights_0: ModelWeights,
    train_records: Sequence[KnowledgeRecord],
    stream: Sequence[RecordBatch],
    unrelated: Sequence[TokenSequence],
    config: RunConfig,
) -> VariantOutcome:
    """Train one variant from scratch, edit the held-out stream and score it.

    Module-level so it can run in a worker process.
    """
    trainer_cfg = dataclasses.replace(config.trainer, ablation=kind)
    h = init_hypernetwork(config.model, config.hyper.rank, config.seed)
    sampler = StreamSampler(
        train_records, config.hyper.batch_size, config.hyper.trajectory_len, config.seed
    )
    result = routine(weights_0, h, sampler, trainer_cfg, None)
    final, session = edit_stream(weights_0, result.hypernetwork, stream, config.hyper.lr_inner)
    edited = [r for batch in stream for r in batch]
    report = evaluate(final, weights_0, edited, unrelated, session.mean_edit_seconds)
    last_epoch = result.log.epochs[-1]["epoch"]
    train_norms = [row["reg"] for row in result.log.steps if row["epoch"] == last_epoch]
    return VariantOutcome(
        variant=kind.value,
        report=report,
        log=result.log,
        train_update_norm_sq=float(np.mean(train_norms)),
        edit_update_norm_sq=mean_step_norm_sq(session),
    )


def parse_stream_configs(spec: str) -> List[Tuple[int, int]]:
    """Parse ``"10x4,20x4,40x2"`` into ``[(10, 4), (20, 4), (40, 2)]``.

    Raises:
        ConfigurationError: If an entry is not ``<batches>x<batch_size>`` with positive integers.
    """
    configs = []
    for part in spec.split(","):
        batches, sep, size = part.strip().partition("x")
        if not sep or not batches.isdigit() or not size.isdigit() or int(batches) < 1 or int(size) < 1:
            raise ConfigurationError("sweep.configs", f"expected <batches>x<batch_size>, got '{part}'")
        configs.append((int(batches), int(size)))
    return configs


class ExperimentUseCase:
    """Runs multi-variant comparisons on top of the pipeline's files."""

    def __init__(self, pipeline: PipelineUseCase, workers: int = 1):
        """Initialize the experiment runner.

        Args:
            pipeline: Supplies the stores, writers and variant registry.
            workers: Worker processes for independent variants; 1 runs in-process.
        """
        self._pipeline = pipeline
        self._workers = workers

    @property
    def pipeline(self) -> PipelineUseCase:
        return self._pipeline

    def _variant_outcomes(
        self,
        kinds: Sequence[AblationKind],
        weights_0: ModelWeights,
        train_records: List[KnowledgeRecord],
        stream: List[RecordBatch],
        unrelated: List[TokenSequence],
        config: RunConfig,
    ) -> List[VariantOutcome]:
        registry = self._pipeline.registry
        args = [
            (k, registry.get(k), weights_0, train_records, stream, unrelated, config) for k in kinds
        ]
        if self._workers <= 1:
            outcomes = []
            for i, a in enumerate(args, start=1):
                logger.info("Variant %d/%d: %s", i, len(args), a[0].value)
                outcomes.append(run_variant(*a))
            return outcomes
        logger.info("Running %d variants on %d worker processes", len(args), self._workers)
        with ProcessPoolExecutor(max_workers=self._workers) as pool:
            futures = [pool.submit(run_variant, *a) for a in args]
            return [f.result() for f in futures]

    def _baselines(
        self,
        weights_0: ModelWeights,
        stream: List[RecordBatch],
        unrelated: List[TokenSequence],
        config: RunConfig,
    ) -> List[Dict[str, Any]]:
        edited = [r for batch in stream for r in batch]
        reference = decode_answers(weights_0, unrelated)
        tuned = fine_tune_baseline(
            weights_0, stream, config.edit.fine_tune_steps, config.edit.fine_tune_lr
        )
        fine_tune = evaluate(tuned, weights_0, edited, unrelated, reference_answers=reference)
        zero_h = init_hypernetwork(config.model, config.hyper.rank, config.seed)
        zero_final, session = edit_stream(weights_0, zero_h, stream, config.hyper.lr_inner)
        zero = evaluate(
            zero_final, weights_0, edited, unrelated, session.mean_edit_seconds, reference
        )
        return [
            {"variant": "fine_tune", **{m: getattr(fine_tune, m) for m in METRIC_NAMES}},
            {"variant": "zero_policy", **{m: getattr(zero, m) for m in METRIC_NAMES}},
        ]

    def ablate(self, config: RunConfig, with_baselines: bool = False) -> CommandResult:
        """Train and evaluate every training variant under identical data and seeds.

        Writes ``ablation.csv`` with exactly one row per variant; baselines go
        to a separate ``baselines.csv``.
        """
        pipeline = self._pipeline
        out_dir = config.paths.out_dir
        train_path = pipeline_file(config, TRAIN_FILE)
        eval_path = pipeline_file(config, EVAL_FILE)
        inputs = [config.paths.model_path, train_path, eval_path, pipeline_file(config, LOCALITY_FILE)]
        total_steps = 4 if with_baselines else 3

        logger.info("Step 1/%d: Load - Reading W_0, records and locality prompts", total_steps)
        weights_0 = pipeline.load_weights_0(config)
        train_records = pipeline.records.load_records(train_path)
        stream = fixed_stream(
            pipeline.records.load_records(eval_path),
            config.hyper.trajectory_len,
            config.hyper.batch_size,
        )
        unrelated = pipeline.load_unrelated(config)

        kinds = list(AblationKind)
        logger.info("Step 2/%d: Ablate - %d variants", total_steps, len(kinds))
        outcomes = self._variant_outcomes(kinds, weights_0, train_records, stream, unrelated, config)

        tables = pipeline.tables
        outputs = []
        for outcome in outcomes:
            outputs.append(
                tables.write_csv(
                    outcome.log.steps,
                    str(Path(out_dir) / outcome.variant / "training_log.csv"),
                    TRAINING_LOG_COLUMNS,
                )
            )
        rows = [o.metrics_row() for o in outcomes]
        summary: Dict[str, Any] = {"ablation": rows}

        if with_baselines:
            logger.info("Step 3/%d: Baselines - Fine-tuning and zero policy", total_steps)
            baselines = self._baselines(weights_0, stream, unrelated, config)
            outputs.append(
                tables.write_csv(baselines, str(Path(out_dir) / "baselines.csv"), ABLATION_COLUMNS)
            )
            summary["baselines"] = baselines

        logger.info(
            "Step %d/%d: Save - Writing comparison tables to %s", total_steps, total_steps, out_dir
        )
        outputs += [
            tables.write_csv(rows, str(Path(out_dir) / "ablation.csv"), ABLATION_COLUMNS),
            tables.write_text(rows, str(Path(out_dir) / "ablation.txt"), ABLATION_COLUMNS),
            tables.write_csv(
                [o.norm_row() for o in outcomes], str(Path(out_dir) / "update_norms.csv"), NORM_COLUMNS
            ),
        ]
        return pipeline.finish("ablate", config, out_dir, inputs, outputs, summary)

    def sweep(self, config: RunConfig, stream_configs: Sequence[Tuple[int, int]]) -> CommandResult:
        """Edit with one trained hypernetwork under several stream shapes.

        Each configuration starts again from W_0 with the first
        ``batches * batch_size`` held-out records.
        """
        pipeline = self._pipeline
        out_dir = config.paths.out_dir
        eval_path = pipeline_file(config, EVAL_FILE)
        inputs = [
            config.paths.model_path,
            config.paths.hypernet_path,
            eval_path,
            pipeline_file(config, LOCALITY_FILE),
        ]

        logger.info("Step 1/3: Load - Reading W_0, hypernetwork and records")
        weights_0 = pipeline.load_weights_0(config)
        h = pipeline.checkpoints.load_hypernetwork(config.paths.hypernet_path, config.model)
        records = pipeline.records.load_records(eval_path)
        unrelated = pipeline.load_unrelated(config)
        reference = decode_answers(weights_0, unrelated)

        logger.info("Step 2/3: Sweep - %d stream configurations", len(stream_configs))
        rows = []
        for n_batches, batch_size in stream_configs:
            stream = fixed_stream(records, n_batches, batch_size)
            final, session = edit_stream(weights_0, h, stream, config.hyper.lr_inner)
            edited = [r for batch in stream for r in batch]
            report = evaluate(
                final, weights_0, edited, unrelated, session.mean_edit_seconds, reference
            )
            rows.append(
                {
                    "n_batches": n_batches,
                    "batch_size": batch_size,
                    "n_edits": len(edited),
                    **{m: getattr(report, m) for m in METRIC_NAMES},
                    "mean_edit_seconds": session.mean_edit_seconds,
                }
            )

        logger.info("Step 3/3: Save - Writing sweep table to %s", out_dir)
        outputs = [pipeline.tables.write_csv(rows, str(Path(out_dir) / "sweep.csv"), SWEEP_COLUMNS)]
        return pipeline.finish("sweep", config, out_dir, inputs, outputs, {"sweep": rows})


def pipeline_file(config: RunConfig, name: str) -> str:
    return str(Path(config.paths.data_dir) / name)

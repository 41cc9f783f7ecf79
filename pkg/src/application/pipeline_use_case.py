"""Pipeline use cases: data generation, pretraining, training, editing, evaluation."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..core.hypernet.network import HyperNetwork, init_hypernetwork
from ..core.lm.model import ModelWeights
from ..core.lm.training import pretrain
from ..core.reward.reward import BREAKDOWN_COLUMNS
from ..domain.config import RunConfig
from ..domain.interfaces import RecordStore
from ..domain.records import KnowledgeRecord, TokenSequence
from ..infrastructure.storage.binary.checkpoints import CheckpointStore
from ..infrastructure.storage.tables.table_writer import TableWriter
from ..infrastructure.versioning.manifest_manager import ManifestManager
from .corpus import StreamSampler, fixed_stream, generate_corpus
from .editor import edit_stream
from .metrics import RetentionCurve, evaluate, exact_matches
from .variant_registry import VariantRegistry, create_variant_registry

logger = logging.getLogger(__name__)

TRAIN_FILE = "train.jsonl"
EVAL_FILE = "eval.jsonl"
PRETRAIN_FILE = "pretrain.jsonl"
LOCALITY_FILE = "locality.jsonl"
EDITED_RECORDS_FILE = "edited_records.jsonl"

MIN_PRETRAIN_ACCURACY = 0.95
TRAINING_LOG_COLUMNS = ("epoch", "step") + BREAKDOWN_COLUMNS


@dataclass
class CommandResult:
    """Machine-readable outcome of one command."""

    command: str
    outputs: List[str] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"command": self.command, "outputs": self.outputs, **self.summary}


def _data_file(config: RunConfig, name: str) -> str:
    return str(Path(config.paths.data_dir) / name)


def _parent(path: str) -> str:
    return str(Path(path).parent)


class PipelineUseCase:
    """Runs the pipeline stages, each one reading the files the previous stage wrote."""

    def __init__(
        self,
        record_store: RecordStore,
        checkpoints: CheckpointStore,
        tables: TableWriter,
        manifests: ManifestManager,
        registry: Optional[VariantRegistry] = None,
    ):
        """Initialize the use case with its dependencies.

        Args:
            record_store: Reads and writes record files.
            checkpoints: Reads and writes model and hypernetwork checkpoints.
            tables: Writes CSV and text tables.
            manifests: Writes run manifests.
            registry: Training routine per variant (defaults to every built-in variant).
        """
        self._records = record_store
        self._checkpoints = checkpoints
        self._tables = tables
        self._manifests = manifests
        self._registry = registry or create_variant_registry()

    @property
    def records(self) -> RecordStore:
        return self._records

    @property
    def checkpoints(self) -> CheckpointStore:
        return self._checkpoints

    @property
    def tables(self) -> TableWriter:
        return self._tables

    @property
    def registry(self) -> VariantRegistry:
        return self._registry

    def finish(
        self,
        command: str,
        config: RunConfig,
        out_dir: str,
        inputs: List[str],
        outputs: List[str],
        summary: Dict[str, Any],
        extra: Optional[Dict[str, Any]] = None,
    ) -> CommandResult:
        """Write the command manifest into ``out_dir`` and wrap up the result."""
        manifest = self._manifests.create_manifest(
            command, config.to_flat(), config.seed, inputs, outputs, extra
        )
        outputs = outputs + [self._manifests.save_manifest(out_dir, manifest)]
        return CommandResult(command, outputs, summary)

    def load_unrelated(self, config: RunConfig) -> List[TokenSequence]:
        """Held-out locality sequences reserved for Specificity."""
        return self._records.load_sequences(_data_file(config, LOCALITY_FILE))

    def gen_data(self, config: RunConfig) -> CommandResult:
        """Generate the synthetic corpus and write its record files."""
        data_dir = config.paths.data_dir
        logger.info("Step 1/2: Generate - Building synthetic corpus (seed %d)", config.seed)
        corpus = generate_corpus(config.data, config.model.vocab_size, config.seed)

        logger.info("Step 2/2: Write - Saving record files to %s", data_dir)
        outputs = [_data_file(config, name) for name in (TRAIN_FILE, EVAL_FILE, PRETRAIN_FILE, LOCALITY_FILE)]
        self._records.save_records(corpus.train_records, outputs[0])
        self._records.save_records(corpus.eval_records, outputs[1])
        self._records.save_sequences(corpus.pretraining_sequences(), outputs[2])
        self._records.save_sequences(corpus.locality_sequences(), outputs[3])

        summary = corpus.summary()
        extra = {"sizes": summary, "vocabulary": corpus.vocabulary.to_dict()}
        return self.finish("gen-data", config, data_dir, [], outputs, summary, extra)

    def pretrain(self, config: RunConfig) -> CommandResult:
        """Pretrain the base model W_0 on the pretraining corpus."""
        corpus_path = _data_file(config, PRETRAIN_FILE)
        model_path = config.paths.model_path
        out_dir = _parent(model_path)

        logger.info("Step 1/4: Load - Reading pretraining corpus from %s", corpus_path)
        corpus = self._records.load_sequences(corpus_path)

        logger.info("Step 2/4: Pretrain - %d steps on %d sequences", config.pretrain.steps, len(corpus))
        result = pretrain(config.model, corpus, config.pretrain.steps, config.seed, config.pretrain)

        logger.info("Step 3/4: Check - Exact-match accuracy on the pretraining corpus")
        matches = exact_matches(result.weights, [s.prompt for s in corpus], [s.answer for s in corpus])
        accuracy = sum(matches) / len(matches)
        if accuracy < MIN_PRETRAIN_ACCURACY:
            logger.warning(
                "Pretrained accuracy %.4f is below %.2f; Specificity will be unreliable",
                accuracy,
                MIN_PRETRAIN_ACCURACY,
            )

        logger.info("Step 4/4: Save - Writing checkpoint to %s", model_path)
        self._checkpoints.save_model(result.weights, model_path)
        log_path = self._tables.write_csv(
            [{"step": i, "loss": loss} for i, loss in enumerate(result.losses, start=1)],
            str(Path(out_dir) / "pretrain_log.csv"),
            columns=("step", "loss"),
        )
        summary = {"final_loss": result.final_loss, "accuracy": accuracy}
        return self.finish("pretrain", config, out_dir, [corpus_path], [model_path, log_path], summary)

    def train(self, config: RunConfig, resume_path: Optional[str] = None) -> CommandResult:
        """Train the hypernetwork with the configured variant.

        Args:
            config: Run configuration; ``trainer.ablation`` picks the variant.
            resume_path: Hypernetwork checkpoint to continue from instead of a fresh one.
        """
        model_path = config.paths.model_path
        train_path = _data_file(config, TRAIN_FILE)
        hypernet_path = config.paths.hypernet_path
        out_dir = _parent(hypernet_path)
        inputs = [model_path, train_path]

        logger.info("Step 1/4: Load - Reading W_0 and training records")
        weights_0 = self._checkpoints.load_model(model_path, config.model)
        records = self._records.load_records(train_path)

        if resume_path:
            logger.info("Step 2/4: Init - Resuming hypernetwork from %s", resume_path)
            h = self._checkpoints.load_hypernetwork(resume_path, config.model)
            inputs.append(resume_path)
        else:
            logger.info("Step 2/4: Init - Zero-output hypernetwork of rank %d", config.hyper.rank)
            h = init_hypernetwork(config.model, config.hyper.rank, config.seed)

        kind = config.trainer.ablation
        logger.info("Step 3/4: Train - Variant '%s' for up to %d epochs", kind.value, config.trainer.epochs)
        sampler = StreamSampler(
            records, config.hyper.batch_size, config.hyper.trajectory_len, config.seed
        )
        checkpoints_written: List[str] = []

        def save_epoch(epoch: int, network: HyperNetwork) -> None:
            path = str(Path(out_dir) / f"hypernet_epoch{epoch}.rlh")
            self._checkpoints.save_hypernetwork(network, path)
            checkpoints_written.append(path)

        result = self._registry.get(kind)(weights_0, h, sampler, config.trainer, save_epoch)

        logger.info("Step 4/4: Save - Writing hypernetwork to %s", hypernet_path)
        self._checkpoints.save_hypernetwork(result.hypernetwork, hypernet_path)
        log_path = self._tables.write_csv(
            result.log.steps, str(Path(out_dir) / "training_log.csv"), TRAINING_LOG_COLUMNS
        )
        epochs_path = self._tables.write_csv(
            result.log.epochs, str(Path(out_dir) / "epochs.csv"), ("epoch", "j", "wall_time")
        )
        summary = {
            "variant": kind.value,
            "epochs": len(result.log.epochs),
            "final_j": result.log.returns[-1],
            "stopped_early": result.log.stopped_early,
        }
        outputs = [hypernet_path, log_path, epochs_path] + checkpoints_written
        return self.finish("train", config, out_dir, inputs, outputs, summary)

    def edit(self, config: RunConfig) -> CommandResult:
        """Edit W_0 with the trained hypernetwork over the held-out stream."""
        model_path = config.paths.model_path
        hypernet_path = config.paths.hypernet_path
        eval_path = _data_file(config, EVAL_FILE)
        edited_path = config.paths.edited_path
        out_dir = _parent(edited_path)
        inputs = [model_path, hypernet_path, eval_path]

        logger.info("Step 1/4: Load - Reading W_0, hypernetwork and edit records")
        weights_0 = self._checkpoints.load_model(model_path, config.model)
        h = self._checkpoints.load_hypernetwork(hypernet_path, config.model)
        stream = fixed_stream(
            self._records.load_records(eval_path),
            config.hyper.trajectory_len,
            config.hyper.batch_size,
        )

        retention: Optional[RetentionCurve] = None
        if config.edit.track_retention:
            logger.info("Step 2/4: Retention - Tracking metrics after every batch")
            retention = RetentionCurve(weights_0, self.load_unrelated(config))
            inputs.append(_data_file(config, LOCALITY_FILE))
        else:
            logger.info("Step 2/4: Retention - Skipped (edit.track_retention is false)")

        logger.info("Step 3/4: Edit - %d batches of %d records", len(stream), config.hyper.batch_size)
        final, session = edit_stream(weights_0, h, stream, config.hyper.lr_inner, retention)

        logger.info("Step 4/4: Save - Writing edited weights to %s", edited_path)
        self._checkpoints.save_model(final, edited_path)
        records_path = str(Path(out_dir) / EDITED_RECORDS_FILE)
        self._records.save_records([r for batch in stream for r in batch], records_path)
        session_rows = [
            {"step": t, "seconds": seconds, "update_norm_sq": sum(norms.values())}
            for t, (seconds, norms) in enumerate(zip(session.step_seconds, session.step_norms_sq), start=1)
        ]
        outputs = [
            edited_path,
            records_path,
            self._tables.write_csv(
                session_rows, str(Path(out_dir) / "session.csv"), ("step", "seconds", "update_norm_sq")
            ),
            self._tables.write_csv(
                session.norm_rows(), str(Path(out_dir) / "update_norms.csv"), ("step", "layer", "norm_sq")
            ),
        ]
        if retention is not None:
            outputs.append(
                self._tables.write_csv(
                    retention.points,
                    str(Path(out_dir) / "retention.csv"),
                    ("step", "n_edited", "efficacy", "generalization", "specificity"),
                )
            )
        summary = {
            "applied_steps": session.applied_steps,
            "mean_edit_seconds": session.mean_edit_seconds,
            "cumulative_norm": session.cumulative_norm,
        }
        return self.finish("edit", config, out_dir, inputs, outputs, summary, {"session": summary})

    def evaluate(self, config: RunConfig, unedited: bool = False) -> CommandResult:
        """Score the edited model, or W_0 itself when ``unedited`` is set.

        Without edits the edited set is the held-out stream the edit command
        would have used.
        """
        model_path = config.paths.model_path
        locality_path = _data_file(config, LOCALITY_FILE)
        out_dir = config.paths.out_dir
        inputs = [model_path, locality_path]

        logger.info("Step 1/3: Load - Reading weights and evaluation records")
        weights_0 = self._checkpoints.load_model(model_path, config.model)
        mean_seconds = 0.0
        if unedited:
            final = weights_0
            eval_path = _data_file(config, EVAL_FILE)
            stream = fixed_stream(
                self._records.load_records(eval_path),
                config.hyper.trajectory_len,
                config.hyper.batch_size,
            )
            edited: List[KnowledgeRecord] = [r for batch in stream for r in batch]
            inputs.append(eval_path)
        else:
            edit_dir = _parent(config.paths.edited_path)
            records_path = str(Path(edit_dir) / EDITED_RECORDS_FILE)
            final = self._checkpoints.load_model(config.paths.edited_path, config.model)
            edited = self._records.load_records(records_path)
            inputs += [config.paths.edited_path, records_path]
            edit_manifest = self._manifests.load_manifest(edit_dir) or {}
            mean_seconds = float(edit_manifest.get("session", {}).get("mean_edit_seconds", 0.0))
        unrelated = self.load_unrelated(config)

        logger.info("Step 2/3: Evaluate - %d edited records, %d unrelated prompts", len(edited), len(unrelated))
        report = evaluate(final, weights_0, edited, unrelated, mean_seconds)

        logger.info("Step 3/3: Save - Writing metrics to %s", out_dir)
        outputs = self._write_report(report, out_dir)
        return self.finish("eval", config, out_dir, inputs, outputs, report.summary())

    def _write_report(self, report, out_dir: str) -> List[str]:
        rows = report.rows()
        text = self._tables.render(rows, ("metric", "value", "n_records"))
        text += f"\nmean edit seconds: {report.mean_edit_seconds:.6f}"
        text_path = Path(out_dir) / "metrics.txt"
        text_path.parent.mkdir(parents=True, exist_ok=True)
        text_path.write_text(text + "\n", encoding="utf-8")
        return [
            self._tables.write_csv(rows, str(Path(out_dir) / "metrics.csv"), ("metric", "value", "n_records")),
            str(text_path),
            self._tables.write_jsonl([o.to_dict() for o in report.records], str(Path(out_dir) / "records.jsonl")),
        ]

    def load_weights_0(self, config: RunConfig) -> ModelWeights:
        return self._checkpoints.load_model(config.paths.model_path, config.model)

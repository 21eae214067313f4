"""Emulated Non-RT RIC control loop.

One telemetry record per input line, one response per output line, in order.
Every record is explained with its own seed derived from the session seed and
the input line number, so replaying a stream reproduces the transcript.
"""

import json
import logging
import socket
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.core.errors import ModelFormatError, RicError, WattLensError
from app.core.seeding import derive_seed
from app.models.codec import read_model
from app.models.dataset import Background, Dataset, FeatureStats
from app.models.ensemble import EnsembleModel, predict
from app.schemas.explain import Attribution
from app.schemas.ric import (
    ControlMessage,
    ControlTarget,
    Direction,
    RicErrorLine,
    RicResponse,
    TelemetryRecord,
)
from app.schemas.run import RunConfig
from app.services.ingest_service import compute_stats, load_dataset, split
from app.services.lime_service import lime_explain
from app.services.shapley_service import make_background, shap_explain

logger = logging.getLogger(__name__)


def _whitelisted(feature: str, whitelist: Sequence[str]) -> bool:
    """Exact name, or a per-link variant such as airtime -> airtime_ul"""
    return any(feature == name or feature.startswith(f"{name}_") for name in whitelist)


def recommend(attr: Attribution, whitelist: Sequence[str], k: int) -> ControlMessage:
    """Decrease the k whitelisted parameters with the largest positive contribution"""
    if not whitelist:
        raise RicError("Tunable-parameter whitelist is empty")
    if k < 1:
        raise RicError(f"k must be positive, got {k}")
    if not attr.feature_names:
        raise RicError("Attribution has no features")

    candidates = [
        (name, phi)
        for name, phi in zip(attr.feature_names, attr.phi)
        if _whitelisted(name, whitelist)
    ]
    positive = sorted(
        ((name, phi) for name, phi in candidates if phi > 0),
        key=lambda item: (-item[1], item[0]),
    )[:k]

    if positive:
        targets = [
            ControlTarget(parameter=name, direction=Direction.DECREASE, contribution=phi)
            for name, phi in positive
        ]
        names = ", ".join(target.parameter for target in targets)
        note = f"Reduce {names}: largest positive contributors to predicted power"
    else:
        if candidates:
            name, phi = sorted(candidates, key=lambda item: (-item[1], item[0]))[0]
        else:
            name, phi = whitelist[0], 0.0
        targets = [ControlTarget(parameter=name, direction=Direction.HOLD, contribution=phi)]
        note = "No tunable parameter adds to predicted power; hold current configuration"

    return ControlMessage(
        record_id=None,
        predicted_power=attr.prediction,
        targets=targets,
        policy_note=note,
    )


@dataclass(frozen=True)
class ExplainerSetup:
    """One explanation method with its reference data, fixed for a session"""

    method: str
    background: Background
    stats: FeatureStats
    config: RunConfig

    def explain(self, model: EnsembleModel, x: np.ndarray, seed: int) -> Attribution:
        if self.method == "lime":
            return lime_explain(
                model, x, self.stats, self.config.lime_config(seed), self.config.lime_kernel_factor
            )
        if self.method == "shap":
            return shap_explain(
                model,
                x,
                self.background,
                self.config.shap_permutations,
                seed,
                self.config.exact_limit,
                self.config.n_jobs,
            )
        raise RicError(f"Unknown explainer: {self.method}")


def reference_data(config: RunConfig, train: Dataset) -> ExplainerSetup:
    background = make_background(
        train, config.background_size, derive_seed(config.seed, "background")
    )
    return ExplainerSetup(
        method=config.ric_explainer,
        background=background,
        stats=compute_stats(train),
        config=config,
    )


class RicSession:
    def __init__(
        self,
        model: EnsembleModel,
        setup: ExplainerSetup,
        whitelist: Sequence[str],
        top_k: int,
        seed: int,
    ):
        if not whitelist:
            raise RicError("Tunable-parameter whitelist is empty")
        if tuple(setup.stats.feature_names) != tuple(model.feature_names):
            raise RicError("Reference data schema does not match the model")
        self.model = model
        self.setup = setup
        self.whitelist = list(whitelist)
        self.top_k = top_k
        self.seed = seed
        self.handled = 0
        self._lock = threading.Lock()

    @classmethod
    def from_config(
        cls, config: RunConfig, model_path: Optional[Path] = None
    ) -> "RicSession":
        """Load the model and rebuild the reference data from the dataset split"""
        path = Path(model_path or config.output_dir / f"model_{config.ric_model}.txt")
        try:
            model = read_model(path)
        except (ModelFormatError, OSError) as e:
            raise RicError(f"Cannot load model {path}: {e}")

        dataset = load_dataset(
            config.dataset_path,
            config.target_column,
            config.effective_drop_columns,
            config.source_tag,
        )
        if dataset.feature_names != model.feature_names:
            raise RicError(f"Dataset {config.dataset_path} does not match the schema of {path}")
        train, _ = split(dataset, config.split_config())
        logger.info(
            f"RIC session ready: model {path.name}, explainer {config.ric_explainer}, "
            f"whitelist {config.ric_whitelist}"
        )
        return cls(
            model,
            reference_data(config, train),
            config.ric_whitelist,
            config.ric_top_k,
            derive_seed(config.seed, "ric"),
        )

    def _vector(self, record: TelemetryRecord) -> np.ndarray:
        missing = [name for name in self.model.feature_names if name not in record.features]
        if missing:
            raise RicError(f"Record is missing features: {', '.join(missing)}")
        return np.array([record.features[name] for name in self.model.feature_names])

    def respond(self, record: TelemetryRecord, index: int) -> RicResponse:
        """Prediction, attribution and control message for one record"""
        x = self._vector(record)
        attribution = self.setup.explain(self.model, x, derive_seed(self.seed, "record", index))
        prediction = predict(self.model, x)
        control = recommend(attribution, self.whitelist, self.top_k).model_copy(
            update={"record_id": record.record_id}
        )
        self.handled += 1
        return RicResponse(
            record_id=record.record_id,
            predicted_power=prediction,
            attribution=attribution,
            control=control,
        )

    def respond_next(self, record: TelemetryRecord) -> RicResponse:
        """respond() under the next free index; HTTP routes call this from worker threads"""
        with self._lock:
            return self.respond(record, self.handled + 1)

    @staticmethod
    def _record_id(line: str) -> Optional[str]:
        try:
            raw = json.loads(line)
        except ValueError:
            return None
        if isinstance(raw, dict) and isinstance(raw.get("record_id"), str):
            return raw["record_id"]
        return None

    def handle_line(self, line: str, line_no: int) -> str:
        """One JSON line in, one JSON line out; failures become error lines"""
        try:
            record = TelemetryRecord.model_validate_json(line)
            return self.respond(record, line_no).model_dump_json()
        except ValidationError as e:
            message = "; ".join(
                f"{'.'.join(str(p) for p in err['loc']) or 'record'}: {err['msg']}"
                for err in e.errors()
            )
        except WattLensError as e:
            message = str(e)
        return self._reject(line_no, self._record_id(line), message)

    @staticmethod
    def _reject(line_no: int, record_id: Optional[str], message: str) -> str:
        logger.warning(f"Line {line_no} rejected: {message}")
        return RicErrorLine(line=line_no, record_id=record_id, error=message).model_dump_json()

    def process_stream(self, lines: Iterable[Union[str, bytes]]) -> Iterator[str]:
        """Blank lines are skipped but still counted.

        Byte lines are decoded one at a time; a line that is not valid UTF-8
        becomes an error line and the stream goes on.
        """
        for line_no, line in enumerate(lines, start=1):
            if isinstance(line, bytes):
                try:
                    line = line.decode("utf-8")
                except UnicodeDecodeError as e:
                    record_id = self._record_id(line.decode("utf-8", errors="replace"))
                    yield self._reject(line_no, record_id, f"Line is not valid UTF-8: {e.reason}")
                    continue
            line = line.strip()
            if line:
                yield self.handle_line(line, line_no)

    def transcript(self, lines: Iterable[Union[str, bytes]]) -> str:
        with self._lock:
            return "".join(f"{out}\n" for out in self.process_stream(lines))

    def serve_stdio(self, stdin: Union[TextIO, BinaryIO], stdout: TextIO) -> int:
        """Run until stdin closes; returns the number of lines answered"""
        answered = 0
        for out in self.process_stream(stdin):
            stdout.write(out + "\n")
            stdout.flush()
            answered += 1
        logger.info(f"RIC stdio session closed after {answered} lines")
        return answered


def records_from_dataset(dataset: Dataset, n: int, prefix: str = "r") -> List[str]:
    """Request lines for the first n rows, as a replayable stream"""
    lines = []
    for i in range(min(n, dataset.n_rows)):
        record = TelemetryRecord(
            record_id=f"{prefix}{i + 1:04d}",
            features={name: float(v) for name, v in zip(dataset.feature_names, dataset.rows[i])},
        )
        lines.append(record.model_dump_json())
    return lines


def parse_endpoint(value: str) -> Tuple[str, int]:
    """'host:port' -> (host, port)"""
    host, sep, port = value.rpartition(":")
    if not sep or not host or not port.isdigit() or not 0 < int(port) < 65536:
        raise RicError(f"Endpoint must look like host:port, got '{value}'")
    return host, int(port)


def ensure_bindable(host: str, port: int) -> None:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as probe:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            probe.bind((host, port))
        except OSError as e:
            raise RicError(f"Cannot bind {host}:{port}: {e}")

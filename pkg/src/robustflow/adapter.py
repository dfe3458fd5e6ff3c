"""Adapter that turns a child process into a black-box predictor.

Protocol: newline-delimited JSON over the child's standard streams.
Each request is ``{"features": [f64, ...]}`` and each response must be
``{"label": "<class>"}``; responses are matched to requests in order.
Anything else on stdout is a protocol violation.
"""

from __future__ import annotations

import json
import subprocess
from typing import Sequence

import numpy as np

from .errors import PredictorError

_CHUNK = 128  # requests in flight before draining responses


class ExternalPredictor:
    """Wrap ``command`` (argv list) as a batch predictor."""

    def __init__(self, command: Sequence[str]):
        self.command = list(command)
        self._proc: subprocess.Popen | None = None
        self._sent = 0

    def _ensure_started(self):
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )

    def _read_response(self, row_index: int) -> str:
        line = self._proc.stdout.readline()
        if line == "":
            raise PredictorError(
                f"external predictor exited before answering row {row_index}",
                row_index=row_index,
            )
        try:
            doc = json.loads(line)
            label = doc["label"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise PredictorError(
                f"malformed response for row {row_index}: {line!r}",
                row_index=row_index,
            ) from None
        if not isinstance(label, str):
            raise PredictorError(
                f"non-string label for row {row_index}: {label!r}", row_index=row_index
            )
        return label

    def predict_batch(self, X: np.ndarray) -> list[str]:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        self._ensure_started()
        labels: list[str] = []
        try:
            for start in range(0, X.shape[0], _CHUNK):
                chunk = X[start : start + _CHUNK]
                for row in chunk:
                    self._proc.stdin.write(
                        json.dumps({"features": row.tolist()}) + "\n"
                    )
                self._proc.stdin.flush()
                for offset in range(chunk.shape[0]):
                    labels.append(self._read_response(start + offset))
        except BrokenPipeError:
            raise PredictorError(
                f"external predictor pipe closed at row {len(labels)}",
                row_index=len(labels),
            ) from None
        return labels

    def predict(self, row: np.ndarray) -> str:
        return self.predict_batch(np.asarray(row)[None, :])[0]

    def close(self):
        if self._proc is not None:
            try:
                if self._proc.stdin:
                    self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except Exception:
                self._proc.kill()
            self._proc = None

    def __enter__(self):
        self._ensure_started()
        return self

    def __exit__(self, *_exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

"""Logit datasets: loading, validation, seeded subsampling and accuracy."""

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError
from .kvfile import format_float

#: Identifier of the generator used for every seeded draw, recorded in reports.
PRNG_ID = "numpy.random.PCG64"


def make_rng(seed):
    """Seeded generator; ``seed`` may be an int or a sequence of ints."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


@dataclass(frozen=True, eq=False)
class LogitDataset:
    """N rows of K logits with integer labels. Arrays are made read-only."""

    logits: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        logits = np.array(self.logits, dtype=np.float64)
        labels = np.array(self.labels)
        if logits.ndim != 2:
            raise InvalidInputError(f"logits must be (N, K), got shape {logits.shape}")
        n, k = logits.shape
        if n < 1:
            raise InvalidInputError("dataset needs at least one row")
        if k < 2:
            raise InvalidInputError("dataset needs at least two classes")
        if labels.shape != (n,):
            raise InvalidInputError(f"labels must have shape ({n},), got {labels.shape}")
        if labels.dtype.kind not in "iu":
            if not np.all(np.mod(labels, 1) == 0):
                raise InvalidInputError("labels must be integers")
        labels = labels.astype(np.int64)
        if labels.min() < 0 or labels.max() >= k:
            raise InvalidInputError(f"labels must lie in [0, {k})")
        if not np.all(np.isfinite(logits)):
            raise InvalidInputError("logits must be finite")
        logits.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.logits.shape[0]

    @property
    def k(self):
        return self.logits.shape[1]

    def __len__(self):
        return self.n

    def take(self, rows, name=None):
        rows = np.asarray(rows, dtype=np.int64)
        return LogitDataset(self.logits[rows], self.labels[rows], self.name if name is None else name)

    def with_logits(self, logits):
        return LogitDataset(logits, self.labels, self.name)


@dataclass(frozen=True)
class TaskSplit:
    validation: LogitDataset
    test: LogitDataset

    def __post_init__(self):
        if self.validation.k != self.test.k:
            raise InvalidInputError(
                f"validation has K={self.validation.k} but test has K={self.test.k}"
            )


def load_logits(path, from_probs=False, name=None):
    """Read a comma-delimited logit file (label first, then K values per row).

    With ``from_probs`` the values are probabilities and are mapped to logits
    by ``z = ln q``; exact zeros are floored at the smallest normal float.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file ({exc.strerror})", path) from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    declared_k = None
    labels, rows = [], []
    k = None
    for lineno, line in enumerate(lines, start=1):
        if line.endswith("\r"):
            line = line[:-1]
        if lineno == 1 and line.startswith("#"):
            head = line[1:].strip()
            if not head.startswith("k="):
                raise ParseError(f"unrecognized header {line!r}", path, lineno)
            try:
                declared_k = int(head[2:])
            except ValueError:
                raise ParseError(f"bad class count in header {line!r}", path, lineno) from None
            if declared_k < 2:
                raise ParseError("header declares fewer than two classes", path, lineno)
            k = declared_k
            continue
        fields = line.split(",")
        if len(fields) < 3:
            raise ParseError("row needs a label and at least two logits", path, lineno)
        try:
            label = int(fields[0])
        except ValueError:
            raise ParseError(f"label is not an integer: {fields[0]!r}", path, lineno) from None
        try:
            values = [float(f) for f in fields[1:]]
        except ValueError:
            raise ParseError("malformed number", path, lineno) from None
        if k is None:
            k = len(values)
        elif len(values) != k:
            raise ParseError(f"expected {k} values, got {len(values)}", path, lineno)
        if not 0 <= label < k:
            raise ParseError(f"label {label} out of range for K={k}", path, lineno)
        if not all(np.isfinite(values)):
            raise ParseError("non-finite value", path, lineno)
        if from_probs and any(v < 0 for v in values):
            raise ParseError("negative probability", path, lineno)
        labels.append(label)
        rows.append(values)

    if not rows:
        raise ParseError("no rows", path)
    logits = np.array(rows, dtype=np.float64)
    if from_probs:
        logits = np.log(np.maximum(logits, np.finfo(np.float64).tiny))
    return LogitDataset(logits, np.array(labels, dtype=np.int64), name or path.stem)


def format_logits(d):
    out = [f"# k={d.k}\n"]
    for label, row in zip(d.labels, d.logits):
        out.append(str(int(label)) + "," + ",".join(format_float(v) for v in row) + "\n")
    return "".join(out)


def write_logits(d, path):
    Path(path).write_text(format_logits(d), encoding="utf-8", newline="\n")


def subsample_indices(n_total, n, seed):
    """Sorted row indices of a uniform draw of ``n`` of ``n_total`` rows."""
    if not 1 <= n <= n_total:
        raise InvalidInputError(f"cannot draw {n} rows from {n_total}")
    if n == n_total:
        return np.arange(n_total)
    return np.sort(make_rng(seed).choice(n_total, size=n, replace=False))


def subsample(d, n, seed):
    return d.take(subsample_indices(d.n, n, seed))


def index_hash(rows):
    """Short digest of a row-index set, recorded per benchmark cell."""
    return hashlib.sha256(np.asarray(rows, dtype="<i8").tobytes()).hexdigest()[:16]


def predictions(logits):
    # np.argmax returns the first maximum, i.e. ties go to the lowest index
    return np.argmax(logits, axis=-1)


def accuracy(d):
    return float(np.mean(predictions(d.logits) == d.labels))

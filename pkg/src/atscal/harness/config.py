"""Benchmark grid configuration and its key=value file form."""

from dataclasses import dataclass, field, replace
from pathlib import Path

from .. import kvfile
from ..calibrators.core import METHODS
from ..dataset import TaskSplit, load_logits
from ..errors import InvalidInputError, ParseError
from ..metrics import DEFAULT_ECE_BINS
from ..optim import FitConfig
from ..synthgen import SynthConfig

DEFAULT_VAL_SIZES = (200, 500, 1000, 5000, 10000)
DEFAULT_RUNS = 50


@dataclass(frozen=True)
class FileTask:
    """Validation and test logits read from disk."""

    val: str
    test: str
    from_probs: bool = False

    def load(self, name):
        return TaskSplit(
            load_logits(self.val, self.from_probs, f"{name}-val"),
            load_logits(self.test, self.from_probs, f"{name}-test"),
        )

    def as_items(self):
        return {"kind": "files", "val": self.val, "test": self.test, "from_probs": self.from_probs}


@dataclass(frozen=True)
class BenchmarkConfig:
    """Methods x validation sizes x runs over a list of named tasks.

    A task is a :class:`~atscal.synthgen.SynthConfig`, a :class:`FileTask`
    or an already loaded :class:`~atscal.dataset.TaskSplit`.
    """

    tasks: tuple
    methods: tuple = ("ts", "lts", "hts", "hnlts", "pts", "bts", "ets")
    val_sizes: tuple = DEFAULT_VAL_SIZES
    runs: int = DEFAULT_RUNS
    ece_bins: int = DEFAULT_ECE_BINS
    seed0: int = 0
    fit: FitConfig = field(default_factory=FitConfig)
    workers: int = 1
    name: str = "benchmark"

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple((str(n), t) for n, t in self.tasks))
        object.__setattr__(self, "methods", tuple(m.lower() for m in self.methods))
        object.__setattr__(self, "val_sizes", tuple(int(n) for n in self.val_sizes))
        if not self.tasks:
            raise InvalidInputError("benchmark needs at least one task")
        names = [n for n, _ in self.tasks]
        if len(set(names)) != len(names):
            raise InvalidInputError("task names must be unique")
        for n, t in self.tasks:
            if not isinstance(t, (SynthConfig, FileTask, TaskSplit)):
                raise InvalidInputError(f"task {n!r}: unsupported task type {type(t).__name__}")
        if not self.methods:
            raise InvalidInputError("benchmark needs at least one method")
        for m in self.methods:
            if m not in METHODS:
                raise InvalidInputError(f"unknown method {m!r}")
        if len(set(self.methods)) != len(self.methods):
            raise InvalidInputError("methods must be unique")
        if not self.val_sizes or any(n < 1 for n in self.val_sizes):
            raise InvalidInputError("val_sizes must be positive counts")
        if list(self.val_sizes) != sorted(set(self.val_sizes)):
            raise InvalidInputError("val_sizes must be strictly ascending")
        if self.runs < 1:
            raise InvalidInputError("runs must be >= 1")
        if self.ece_bins < 1:
            raise InvalidInputError("ece_bins must be >= 1")
        if self.workers < 1:
            raise InvalidInputError("workers must be >= 1")
        if self.fit.objective != "nll":
            raise InvalidInputError("benchmark fit.objective must be nll; list ptse as a method instead")
        for n, t in self.tasks:
            if isinstance(t, SynthConfig) and self.val_sizes[-1] > t.n_val:
                raise InvalidInputError(f"task {n!r}: val size {self.val_sizes[-1]} exceeds n_val={t.n_val}")
            if isinstance(t, TaskSplit) and self.val_sizes[-1] > t.validation.n:
                raise InvalidInputError(
                    f"task {n!r}: val size {self.val_sizes[-1]} exceeds {t.validation.n} rows")

    def with_(self, **changes):
        return replace(self, **changes)

    def as_items(self):
        items = {
            "name": self.name,
            "methods": list(self.methods),
            "val_sizes": list(self.val_sizes),
            "runs": self.runs,
            "ece_bins": self.ece_bins,
            "seed0": self.seed0,
        }
        for n, t in self.tasks:
            if isinstance(t, SynthConfig):
                sub = {"kind": "synth", **t.as_items()}
            elif isinstance(t, FileTask):
                sub = t.as_items()
            else:
                sub = {"kind": "inline", "n_val": t.validation.n, "n_test": t.test.n, "k": t.validation.k}
            items.update({f"task.{n}.{k}": v for k, v in sub.items()})
        items.update(self.fit.as_items())
        return items

    @classmethod
    def from_items(cls, items, source=None, base_dir=None, **overrides):
        """Parse a config file's items. Relative task paths resolve against ``base_dir``."""
        base = Path(base_dir) if base_dir is not None else None
        known = {"name", "methods", "val_sizes", "runs", "ece_bins", "seed0", "workers"}
        task_items = {}
        for key, value in items.items():
            if key.startswith("task."):
                parts = key.split(".", 2)
                if len(parts) != 3 or not parts[1] or not parts[2]:
                    raise ParseError(f"bad task key {key!r}; expected task.<name>.<field>", source)
                task_items.setdefault(parts[1], {})[parts[2]] = value
            elif not key.startswith("fit.") and key not in known:
                raise ParseError(f"unknown key {key!r}", source)
        tasks = []
        for tname, sub in task_items.items():
            kind = sub.get("kind", "synth")
            if kind == "synth":
                tasks.append((tname, SynthConfig.from_items({k: v for k, v in sub.items() if k != "kind"}, source)))
            elif kind == "files":
                paths = []
                for key in ("val", "test"):
                    if key not in sub:
                        raise ParseError(f"task {tname!r} needs a {key} path", source)
                    p = Path(sub[key])
                    paths.append(str(base / p if base is not None and not p.is_absolute() else p))
                from_probs = sub.get("from_probs", "false").lower() in ("1", "true", "yes")
                tasks.append((tname, FileTask(paths[0], paths[1], from_probs)))
            else:
                raise ParseError(f"task {tname!r}: unknown kind {kind!r}", source)
        try:
            fit_cfg = FitConfig.from_items(items)
        except (InvalidInputError, TypeError) as exc:
            raise ParseError(str(exc), source) from None
        kwargs = {
            "tasks": tuple(tasks),
            "name": kvfile.get_str(items, "name", "benchmark", source),
            "runs": kvfile.get_int(items, "runs", DEFAULT_RUNS, source),
            "ece_bins": kvfile.get_int(items, "ece_bins", DEFAULT_ECE_BINS, source),
            "seed0": kvfile.get_int(items, "seed0", 0, source),
            "workers": kvfile.get_int(items, "workers", 1, source),
            "fit": fit_cfg,
        }
        if "methods" in items:
            kwargs["methods"] = tuple(kvfile.get_list(items, "methods", source=source))
        if "val_sizes" in items:
            try:
                kwargs["val_sizes"] = tuple(int(v) for v in kvfile.get_list(items, "val_sizes", source=source))
            except ValueError:
                raise ParseError(f"val_sizes: not a list of integers: {items['val_sizes']!r}", source) from None
        kwargs.update(overrides)
        try:
            return cls(**kwargs)
        except InvalidInputError as exc:
            raise ParseError(str(exc), source) from None

    @classmethod
    def read(cls, path, **overrides):
        path = Path(path)
        return cls.from_items(kvfile.read(path), source=path, base_dir=path.parent, **overrides)

"""Run configuration: a plain-text ``key = value`` file, overridable from the command line.

Lines starting with ``#`` are comments. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .certify import PoisoningModel
from .ensemble import LearnerSpec, PriorKnowledge
from .schemes import Binomial, SelectionScheme, WithoutReplacement, WithReplacement

ENV_CONFIG = "POISONCERT_CONFIG"

# paths and execution knobs that do not change results
_NOT_DIGESTED = {"train", "test", "train_images", "train_labels", "test_images", "test_labels",
                 "votes", "output", "test_output", "workers"}


class ConfigError(ValueError):
    pass


def parse_int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(v) for v in text.replace(" ", "").split(","))


def parse_grid(text: str) -> tuple[int, ...]:
    """``0:100:5`` (inclusive stop) or a comma list."""
    text = text.strip()
    if ":" in text:
        parts = [int(v) for v in text.split(":")]
        if len(parts) not in (2, 3):
            raise ConfigError(f"bad grid {text!r}")
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) == 3 else 1
        if step < 1:
            raise ConfigError("grid step must be positive")
        return tuple(range(start, stop + 1, step))
    return parse_int_list(text)


@dataclass
class RunConfig:
    # selection and certification
    scheme: str = "with"
    n_s: int = 30
    p: float = 0.0
    model: str = "P6"
    alpha: float = 0.001
    T: int = 1000
    rho_grid: str = "0:100:1"
    rho_cap: int = -1
    # learner
    learner: str = "logistic"
    epochs: int = 3
    lr: float = 0.5
    l2: float = 1e-4
    batch_size: int = 64
    knn_k: int = 5
    expand_size: int = 2048
    # prior knowledge
    case: int = 1
    clean_fraction: float = 0.0
    clean_indices: str = ""
    clean_classes: str = ""
    # data
    seed: int = 0
    n: int = 2000
    d: int = 10
    k: int = 2
    separation: float = 4.0
    sigma: float = 1.0
    test_fraction: float = 0.0
    idx_classes: str = ""
    # files
    train: str = ""
    test: str = ""
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    votes: str = ""
    output: str = ""
    test_output: str = ""
    workers: int = 1

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def update(self, values: dict[str, str | None]) -> "RunConfig":
        types = {f.name: f.type for f in fields(self)}
        for key, raw in values.items():
            if raw is None:
                continue
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            kind = types[key]
            try:
                if kind == "int":
                    val = int(raw)
                elif kind == "float":
                    val = float(raw)
                else:
                    val = str(raw).strip()
            except ValueError:
                raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
            setattr(self, key, val)
        return self

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        values = {}
        for no, line in enumerate(p.read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{p}:{no}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val
        return cls().update(values)

    def dumps(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    def digest(self) -> str:
        items = [f"{f.name}={getattr(self, f.name)!r}" for f in fields(self)
                 if f.name not in _NOT_DIGESTED]
        return hashlib.sha256("\n".join(items).encode()).hexdigest()[:16]

    # -- typed views -----------------------------------------------------

    def poisoning_model(self) -> PoisoningModel:
        try:
            return PoisoningModel.parse(self.model)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def selection_scheme(self, n_poisonable: int | None = None) -> SelectionScheme:
        kind = self.scheme.lower()
        try:
            if kind == "without":
                return WithoutReplacement(self.n_s)
            if kind == "with":
                return WithReplacement(self.n_s)
            if kind == "binomial":
                if self.p > 0:
                    return Binomial(self.p)
                if n_poisonable is None:
                    raise ConfigError("binomial scheme from n_s needs the dataset size")
                return Binomial.from_size(self.n_s, n_poisonable)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        raise ConfigError(f"unknown scheme {self.scheme!r} (without|with|binomial)")

    def learner_spec(self) -> LearnerSpec:
        try:
            return LearnerSpec(self.learner, self.epochs, self.lr, self.l2, self.batch_size, self.knn_k)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def grid(self) -> tuple[int, ...]:
        try:
            grid = parse_grid(self.rho_grid)
        except ValueError as exc:
            raise ConfigError(f"rho_grid: {exc}") from None
        if not grid:
            raise ConfigError("rho_grid is empty")
        if min(grid) < 0:
            raise ConfigError("rho_grid contains negative values")
        return grid

    def prior(self) -> PriorKnowledge:
        try:
            return PriorKnowledge(self.case, parse_int_list(self.clean_indices),
                                  parse_int_list(self.clean_classes))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def validate(self, command: str) -> None:
        """Check everything ``command`` will use before any side effect."""
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.T < 1:
            raise ConfigError("T must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if command in ("certify", "curve", "radius", "train", "compare-case3"):
            self.poisoning_model()
        if command == "curve":
            self.grid()
        if command in ("train", "compare-case3"):
            self.learner_spec()
            self.prior()
            if self.scheme.lower() not in ("with", "without", "binomial"):
                raise ConfigError(f"unknown scheme {self.scheme!r}")
            if self.scheme.lower() != "binomial" or self.p <= 0:
                if self.n_s < 1:
                    raise ConfigError("n_s must be positive")
            if self.expand_size < 1:
                raise ConfigError("expand_size must be positive")
            if not 0.0 <= self.clean_fraction < 1.0:
                raise ConfigError("clean_fraction must lie in [0, 1)")
            if self.case == 2 and not (self.clean_indices or self.clean_fraction > 0):
                raise ConfigError("case 2 needs clean_indices or clean_fraction")
            if self.case == 3 and not self.clean_classes:
                raise ConfigError("case 3 needs clean_classes")
            if not (self.train or self.train_images):
                raise ConfigError("no training data (train or train_images/train_labels)")
            if not (self.test or self.test_images):
                raise ConfigError("no test data (test or test_images/test_labels)")
            if command == "train" and not self.votes:
                raise ConfigError("votes output path missing")
            for key in ("train", "test", "train_images", "train_labels", "test_images", "test_labels"):
                val = getattr(self, key)
                if val and not Path(val).exists():
                    raise ConfigError(f"{key}: {val} does not exist")
        if command == "generate":
            if self.k < 1 or self.n < 1 or self.d < 1:
                raise ConfigError("k, n and d must be positive")
            if self.separation < 0 or self.sigma <= 0:
                raise ConfigError("separation must be >= 0 and sigma > 0")
            if not 0.0 <= self.test_fraction < 1.0:
                raise ConfigError("test_fraction must lie in [0, 1)")
            if not self.output:
                raise ConfigError("output path missing")

    def copy(self) -> "RunConfig":
        return dataclasses.replace(self)

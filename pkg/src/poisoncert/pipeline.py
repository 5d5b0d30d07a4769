"""End-to-end runs: data loading, training to a votes file, case-3 comparison."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .certify import PoisoningModel, VoteRecord, certify_all, curve_from_certificates
from .config import ConfigError, RunConfig, parse_int_list
from .ensemble import (
    Dataset,
    Ensemble,
    LearnerSpec,
    PriorKnowledge,
    predict_votes,
    train_ensemble_case3,
    train_ensemble_case12,
)
from .formats import VotesFile, read_csv_dataset, read_idx_dataset
from .schemes import SelectionScheme, make_rng, scheme_to_dict

log = logging.getLogger(__name__)


def load_data(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    classes = parse_int_list(cfg.idx_classes) or None
    if cfg.train_images:
        train = read_idx_dataset(cfg.train_images, cfg.train_labels, classes)
    else:
        train = read_csv_dataset(cfg.train)
    if cfg.test_images:
        test = read_idx_dataset(cfg.test_images, cfg.test_labels, classes)
    else:
        test = read_csv_dataset(cfg.test)
    n_classes = max(train.n_classes, test.n_classes)
    train.n_classes = test.n_classes = n_classes
    if train.dim != test.dim:
        raise ConfigError(f"train has {train.dim} features, test has {test.dim}")
    return train, test


def prior_for(cfg: RunConfig, train: Dataset) -> PriorKnowledge:
    prior = cfg.prior()
    if prior.case == 2 and not prior.clean_indices:
        count = int(round(cfg.clean_fraction * len(train)))
        idx = make_rng((cfg.seed, 0xC1EA)).choice(len(train), size=count, replace=False)
        prior = PriorKnowledge(2, tuple(sorted(int(i) for i in idx)))
    return prior


def train_ensemble(cfg: RunConfig, train: Dataset) -> tuple[Ensemble, SelectionScheme, Dataset, Dataset]:
    prior = prior_for(cfg, train)
    try:
        D_p, D_c = prior.split(train)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    scheme = cfg.selection_scheme(len(D_p))
    learner = cfg.learner_spec()
    if prior.case == 3:
        ens = train_ensemble_case3(D_p, D_c, scheme, cfg.T, learner, cfg.seed,
                                   cfg.expand_size, cfg.workers)
    else:
        ens = train_ensemble_case12(D_p, D_c, scheme, cfg.T, learner, cfg.seed,
                                    cfg.expand_size, cfg.workers)
    return ens, scheme, D_p, D_c


def run_train(cfg: RunConfig) -> VotesFile:
    train, test = load_data(cfg)
    ens, scheme, D_p, D_c = train_ensemble(cfg, train)
    records = predict_votes(ens, test)
    acc = np.mean([r.majority == r.true_label for r in records])
    log.info("trained %d members; majority accuracy %.4f on %d test examples", ens.T, acc, len(records))
    return VotesFile(
        T=ens.T, classes=list(range(ens.n_classes)), scheme=scheme_to_dict(scheme),
        n=len(D_p), n_c=len(D_c), master_seed=cfg.seed, config_digest=cfg.digest(),
        extra={"case": cfg.case, "ensemble": "two-phase" if cfg.case == 3 else "flat"},
        records=records,
    )


@dataclass
class Case3Report:
    rows: list[tuple[int, float, float]]  # (rho, two-phase CA, flat CA)
    phase2_accuracy: float

    @property
    def wins(self) -> int:
        return sum(1 for _, a, b in self.rows if a >= b)

    def majority_holds(self) -> bool:
        return self.wins * 2 > len(self.rows)

    def to_csv(self) -> str:
        lines = ["rho,two_phase_ca,flat_ca"]
        lines += [f"{r},{a!r},{b!r}" for r, a, b in self.rows]
        return "\n".join(lines) + "\n"


def compare_case3(train: Dataset, test: Dataset, clean_classes: tuple[int, ...],
                  scheme: SelectionScheme, T: int, learner: LearnerSpec, seed: int,
                  alpha: float, model: PoisoningModel,
                  expand_size: int = 2048) -> Case3Report:
    """2-phase ensemble against a flat ensemble trained on the same ``D_p`` and ``D_c``.

    The grid runs from 0 to the largest radius either ensemble certifies.
    """
    D_p, D_c = PriorKnowledge(3, clean_classes=clean_classes).split(train)
    two = train_ensemble_case3(D_p, D_c, scheme, T, learner, seed, expand_size)
    flat = train_ensemble_case12(D_p, D_c, scheme, T, learner, seed, expand_size)
    cap = len(D_p)
    certs_two = certify_all(predict_votes(two, test), alpha, scheme, model, len(D_p), cap)
    certs_flat = certify_all(predict_votes(flat, test), alpha, scheme, model, len(D_p), cap)
    top = max([c.radius for c in certs_two + certs_flat] + [0])
    grid = list(range(top + 1))
    a = curve_from_certificates(certs_two, grid)
    b = curve_from_certificates(certs_flat, grid)
    clean_test = test.where(np.isin(test.labels, clean_classes))
    phase2 = two.phase2.predict(two.normalizer(clean_test.features))
    return Case3Report([(r, x, y) for (r, x), (_, y) in zip(a, b)],
                       float(np.mean(phase2 == clean_test.labels)))


def flip_labels(data: Dataset, count: int, rng: np.random.Generator) -> Dataset:
    """Copy of ``data`` with ``count`` random samples relabelled to a different class."""
    idx = rng.choice(len(data), size=count, replace=False)
    labels = data.labels.copy()
    shift = rng.integers(1, data.n_classes, size=count)
    labels[idx] = (labels[idx] + shift) % data.n_classes
    return Dataset(data.features, labels, list(data.ids), data.n_classes)


def majority_labels(records: list[VoteRecord]) -> list[int]:
    return [r.majority for r in records]

"""Data ingestion and the benchmark preprocessing protocol.

Covers the sparse text wire format (one ``<label> <idx>:<val> ...`` example
per line, 1-based indices, gzip accepted by extension), binary label
filtering/mapping, unit-norm row normalization, the seeded feature
subsampler with its degenerate-resample rule, and synthetic problem
generators for the controlled-spectrum test suites.
"""

from __future__ import annotations

import gzip
import io
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Union

import numpy as np

from .errors import NoMatchingExamples, ParseError, ResampleExhausted
from .linalg import derive_seed, gaussian_matrix
from .objectives import Dataset, ObjectiveConfig


@dataclass(frozen=True)
class RawExample:
    """One parsed line: a label and its sparse (1-based index, value) features."""

    label: float
    features: tuple[tuple[int, float], ...]


def _open_text(source: Union[str, Path, IO]) -> IO:
    if isinstance(source, (str, Path)):
        path = Path(source)
        if path.suffix == ".gz":
            return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
        return open(path, "r", encoding="utf-8")
    return source


def load_libsvm(source: Union[str, Path, IO]) -> tuple[list[RawExample], int]:
    """Parse sparse-text examples; returns (examples, inferred dimension).

    Blank lines and lines starting with '#' are skipped.  Feature indices
    must be strictly increasing within a line; the inferred dimension is the
    largest index seen anywhere.  Malformed lines raise :class:`ParseError`
    carrying the 1-based line number.
    """
    examples: list[RawExample] = []
    dim = 0
    stream = _open_text(source)
    close = isinstance(source, (str, Path))
    try:
        for line_no, line in enumerate(stream, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            tokens = stripped.split()
            try:
                label = float(tokens[0])
            except ValueError:
                raise ParseError(f"non-numeric label {tokens[0]!r}", line_no) from None
            feats: list[tuple[int, float]] = []
            prev_index = 0
            for token in tokens[1:]:
                index_str, sep, value_str = token.partition(":")
                if not sep:
                    raise ParseError(f"malformed pair {token!r}", line_no)
                try:
                    index = int(index_str)
                    value = float(value_str)
                except ValueError:
                    raise ParseError(f"non-numeric token {token!r}", line_no) from None
                if index < 1:
                    raise ParseError(f"index {index} must be >= 1", line_no)
                if index <= prev_index:
                    raise ParseError(
                        f"index {index} not strictly increasing after {prev_index}", line_no
                    )
                prev_index = index
                feats.append((index, value))
            dim = max(dim, prev_index)
            examples.append(RawExample(label=label, features=tuple(feats)))
    finally:
        if close:
            stream.close()
    return examples, dim


def save_libsvm(examples: Iterable[RawExample], destination: Union[str, Path, IO]) -> None:
    """Write examples back to the sparse text format (round-trips with load_libsvm)."""
    stream = _open_text_write(destination)
    close = isinstance(destination, (str, Path))
    try:
        for example in examples:
            parts = [repr(float(example.label))]
            parts.extend(f"{int(index)}:{float(value)!r}" for index, value in example.features)
            stream.write(" ".join(parts) + "\n")
    finally:
        if close:
            stream.close()


def _open_text_write(destination: Union[str, Path, IO]) -> IO:
    if isinstance(destination, (str, Path)):
        path = Path(destination)
        if path.suffix == ".gz":
            return io.TextIOWrapper(gzip.open(path, "wb"), encoding="utf-8")
        return open(path, "w", encoding="utf-8")
    return destination


def to_binary_dataset(
    examples: list[RawExample],
    positive_label: float,
    negative_label: float,
    dense: bool = True,
    dim: int | None = None,
) -> Dataset | tuple[list[RawExample], int]:
    """Keep the two requested label classes and map them to +1 / -1.

    Examples with other labels are dropped.  With ``dense=True`` (the normal
    path) the survivors are densified into a :class:`Dataset`; with
    ``dense=False`` the relabeled sparse examples and the dimension are
    returned instead, for memory-sensitive staging.
    """
    kept = [ex for ex in examples if ex.label in (positive_label, negative_label)]
    if not kept:
        raise NoMatchingExamples(
            f"no examples labeled {positive_label} or {negative_label}"
        )
    if dim is None:
        dim = max((idx for ex in kept for idx, _ in ex.features), default=0)
    relabeled = [
        RawExample(label=1.0 if ex.label == positive_label else -1.0, features=ex.features)
        for ex in kept
    ]
    if not dense:
        return relabeled, dim
    features = np.zeros((len(relabeled), dim))
    labels = np.empty(len(relabeled))
    for i, ex in enumerate(relabeled):
        labels[i] = ex.label
        for index, value in ex.features:
            features[i, index - 1] = value  # wire format is 1-based
    return Dataset(features=features, labels=labels)


def normalize_rows(ds: Dataset) -> tuple[Dataset, int]:
    """Scale each nonzero row to unit Euclidean norm; zero rows pass through.

    Returns the normalized dataset and the count of zero rows left untouched.
    Idempotent: normalizing twice changes nothing beyond roundoff.
    """
    norms = np.linalg.norm(ds.features, axis=1)
    zero_rows = int(np.sum(norms == 0.0))
    safe = np.where(norms == 0.0, 1.0, norms)
    features = ds.features / safe[:, None]
    return Dataset(features=features, labels=ds.labels.copy(), normalized=True), zero_rows


def subsample_columns(ds: Dataset, k: int, seed: int, max_attempts: int = 20) -> tuple[Dataset, np.ndarray]:
    """Uniformly pick ``k`` feature columns, re-sampling while the pick is degenerate.

    A pick is degenerate when more than half the rows become all-zero; after
    ``max_attempts`` degenerate picks :class:`ResampleExhausted` is raised.
    Returns the reduced dataset and the chosen column indices.
    """
    if k < 1 or k > ds.dim:
        raise ValueError(f"cannot pick {k} of {ds.dim} columns")
    for attempt in range(max_attempts):
        rng = np.random.default_rng(derive_seed(seed, 40, attempt))
        columns = np.sort(rng.choice(ds.dim, size=k, replace=False))
        reduced = ds.features[:, columns]
        zero_rows = int(np.sum(~reduced.any(axis=1)))
        if zero_rows * 2 <= ds.n_samples:
            return Dataset(features=reduced, labels=ds.labels.copy()), columns
    raise ResampleExhausted(
        f"{max_attempts} column samples all left over half the rows zero"
    )


def synth_quadratic(spectrum, seed: int = 0) -> tuple[ObjectiveConfig, np.ndarray]:
    """Quadratic objective with exactly this diagonal Hessian spectrum.

    Returns the config and the known optimum (the origin).  The seed is
    accepted for interface symmetry with the other generators; the problem
    itself is deterministic.
    """
    spectrum = np.asarray(spectrum, dtype=float)
    cfg = ObjectiveConfig(loss_kind="quadratic", reg_a=0.0, quadratic_spectrum=spectrum)
    return cfg, np.zeros(spectrum.size)


def synth_classification(
    n: int,
    d: int,
    seed: int = 0,
    decay: float = 1.5,
    label_noise: float = 0.05,
    normalize: bool = True,
) -> Dataset:
    """Synthetic binary classification with a decaying feature spectrum.

    Gaussian features get column scales j^(-decay), so the induced Hessian
    spectrum of a linear model decays polynomially; labels come from a
    planted unit-norm direction with a small flip probability.  Rows are
    unit-normalized by default, matching the benchmark preprocessing.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    features = gaussian_matrix(n, d, derive_seed(seed, 50))
    scales = np.arange(1, d + 1, dtype=float) ** (-decay)
    features *= scales
    planted = gaussian_matrix(d, 1, derive_seed(seed, 51))[:, 0]
    planted /= np.linalg.norm(planted)
    labels = np.where(features @ planted >= 0.0, 1.0, -1.0)
    if label_noise > 0:
        rng = np.random.default_rng(derive_seed(seed, 52))
        flips = rng.random(n) < label_noise
        labels[flips] *= -1.0
    ds = Dataset(features=features, labels=labels)
    if normalize:
        ds, _ = normalize_rows(ds)
    return ds

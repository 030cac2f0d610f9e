"""Dataset ingestion, validation, and group-wise (speaker-independent) splits.

Dataset files are JSONL, one sequence per line:

    {"id": "...", "group": "...", "label": 1.5,
     "views": {"language": [[...], ...], "audio": [[...], ...]}}

Every view of a sequence is a T x d_view matrix; all views of one sequence
share T, and each view's width is constant across the whole file (inferred
from the first record). Groups are the unit of splitting: a group never
straddles train/valid/test, so a speaker seen in training is never scored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, DatasetError, DomainError
from .rng import substream


@dataclass
class MultiViewSequence:
    id: str
    group: str
    label: float
    views: dict[str, np.ndarray]   # name -> [T, d_x] float64

    @property
    def length(self) -> int:
        return next(iter(self.views.values())).shape[0]


@dataclass
class DatasetSplit:
    train: list[str]
    valid: list[str]
    test: list[str]
    group_assignment: dict[str, str] = field(default_factory=dict)

    def ids_for(self, subset: str) -> list[str]:
        if subset not in ("train", "valid", "test"):
            raise DomainError(f"unknown subset '{subset}'")
        return getattr(self, subset)

    def to_dict(self) -> dict:
        return {"train": self.train, "valid": self.valid, "test": self.test,
                "group_assignment": self.group_assignment}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        return cls(list(d["train"]), list(d["valid"]), list(d["test"]),
                   dict(d.get("group_assignment", {})))


def _sequence_from_record(record: dict, line_no: int) -> MultiViewSequence:
    try:
        seq_id = str(record["id"])
        group = str(record["group"])
        label = float(record["label"])
        raw_views = record["views"]
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetError(f"line {line_no}: malformed record ({e})") from e
    if not isinstance(raw_views, dict) or not raw_views:
        raise DatasetError(f"line {line_no}: 'views' must be a non-empty object")
    views: dict[str, np.ndarray] = {}
    for name, rows in raw_views.items():
        try:
            arr = np.asarray(rows, dtype=np.float64)
        except ValueError as e:
            raise DatasetError(
                f"line {line_no}: view '{name}' of sequence '{seq_id}' is ragged ({e})") from e
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise DatasetError(
                f"line {line_no}: view '{name}' of sequence '{seq_id}' must be a "
                f"T x d matrix with T >= 1, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise DatasetError(
                f"line {line_no}: view '{name}' of sequence '{seq_id}' contains "
                f"non-finite values")
        views[name] = arr
    lengths = {name: v.shape[0] for name, v in views.items()}
    if len(set(lengths.values())) > 1:
        raise AlignmentError(
            f"sequence '{seq_id}': views disagree on T ({lengths})")
    if not np.isfinite(label):
        raise DatasetError(f"line {line_no}: sequence '{seq_id}' has non-finite label")
    return MultiViewSequence(seq_id, group, label, views)


def load_dataset(path) -> list[MultiViewSequence]:
    """Load and validate a JSONL dataset; empty file yields an empty list."""
    sequences: list[MultiViewSequence] = []
    schema: dict[str, int] | None = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"line {line_no}: invalid JSON ({e.msg})") from e
            seq = _sequence_from_record(record, line_no)
            widths = {name: v.shape[1] for name, v in seq.views.items()}
            if schema is None:
                schema = widths
            elif widths != schema:
                raise DatasetError(
                    f"line {line_no}: sequence '{seq.id}' has view widths {widths}, "
                    f"but the dataset schema is {schema}")
            sequences.append(seq)
    return sequences


def save_dataset(sequences: list[MultiViewSequence], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            record = {
                "id": seq.id,
                "group": seq.group,
                "label": seq.label,
                "views": {name: v.tolist() for name, v in seq.views.items()},
            }
            fh.write(json.dumps(record) + "\n")


def split_by_group(
    sequences: list[MultiViewSequence],
    ratios: tuple[float, float, float],
    seed: int,
) -> DatasetSplit:
    """Shuffle groups by seed, then assign each group greedily to whichever
    split is furthest below its target sequence count."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise DomainError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DomainError(f"ratios must sum to 1, got sum {sum(ratios)!r}")

    by_group: dict[str, list[str]] = {}
    for seq in sequences:
        by_group.setdefault(seq.group, []).append(seq.id)
    if len(by_group) < 3:
        raise DomainError(
            f"need at least 3 groups to split, got {len(by_group)}")

    groups = sorted(by_group)
    order = substream(seed, "split").permutation(len(groups))
    n_total = len(sequences)
    names = ("train", "valid", "test")
    targets = {name: r * n_total for name, r in zip(names, ratios)}
    counts = {name: 0 for name in names}
    buckets: dict[str, list[str]] = {name: [] for name in names}
    assignment: dict[str, str] = {}
    for gi in order:
        group = groups[gi]
        # deficit = remaining room toward the target; ties go train > valid > test
        best = max(names, key=lambda n: targets[n] - counts[n])
        buckets[best].extend(by_group[group])
        counts[best] += len(by_group[group])
        assignment[group] = best
    return DatasetSplit(buckets["train"], buckets["valid"], buckets["test"], assignment)


def index_by_id(sequences: list[MultiViewSequence]) -> dict[str, MultiViewSequence]:
    return {seq.id: seq for seq in sequences}


def subset(sequences: list[MultiViewSequence], ids: list[str]) -> list[MultiViewSequence]:
    table = index_by_id(sequences)
    try:
        return [table[i] for i in ids]
    except KeyError as e:
        raise DatasetError(f"split references unknown sequence id {e}") from e

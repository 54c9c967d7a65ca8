"""Dataset records, the JSONL on-disk schema, and the seeded split protocol.

A dataset is a JSON-Lines file, one record per line, UTF-8:

    {"id": ..., "task": ..., "code": ..., "label": ...,
     "label_kind": "binary" | "continuous", "scale": ..., "language": ...}

``scale`` is required iff ``label_kind`` is "continuous".  ``write_dataset``
emits a canonical form (fixed key order, binary labels as integers) so that
load -> write round-trips byte-identically.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BINARY = "binary"
CONTINUOUS = "continuous"
LABEL_KINDS = (BINARY, CONTINUOUS)
PARTITIONS = ("train", "validation", "test")


class DatasetError(ValueError):
    """Malformed dataset file, record, or split request."""


@dataclass(frozen=True)
class Label:
    """Quality label: binary correctness or a continuous score on [0, scale]."""

    kind: str
    value: float
    scale: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in LABEL_KINDS:
            raise DatasetError(f"unknown label kind {self.kind!r}")
        if self.kind == BINARY:
            if self.value not in (0.0, 1.0):
                raise DatasetError(f"binary label must be 0 or 1, got {self.value!r}")
            if self.scale is not None:
                raise DatasetError("binary labels carry no scale")
        else:
            if self.scale is None or not self.scale > 0:
                raise DatasetError("continuous labels need a positive scale")
            if not 0.0 <= self.value <= self.scale:
                raise DatasetError(
                    f"continuous label {self.value!r} outside [0, {self.scale!r}]"
                )


@dataclass(frozen=True)
class TaskCodePair:
    """One (task description, code snippet, label) record."""

    id: str
    task: str
    code: str
    label: Label
    language: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise DatasetError("pair id must be non-empty")
        if not self.task.strip():
            raise DatasetError(f"pair {self.id!r}: task text is empty")
        if not self.code.strip():
            raise DatasetError(f"pair {self.id!r}: code text is empty")


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of pairs sharing one label kind (and scale)."""

    pairs: tuple[TaskCodePair, ...]
    label_kind: str
    scale: float | None = None

    def __post_init__(self) -> None:
        if not self.pairs:
            raise DatasetError("dataset is empty")
        seen: set[str] = set()
        for pair in self.pairs:
            if pair.id in seen:
                raise DatasetError(f"duplicate pair id {pair.id!r}")
            seen.add(pair.id)
            if pair.label.kind != self.label_kind:
                raise DatasetError(
                    f"pair {pair.id!r} has label kind {pair.label.kind!r}, "
                    f"dataset is {self.label_kind!r}"
                )
            if self.label_kind == CONTINUOUS and pair.label.scale != self.scale:
                raise DatasetError(
                    f"pair {pair.id!r} has scale {pair.label.scale!r}, "
                    f"dataset uses {self.scale!r}"
                )

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(pair.id for pair in self.pairs)

    def by_id(self, pair_id: str) -> TaskCodePair:
        try:
            return self._index[pair_id]
        except AttributeError:
            object.__setattr__(self, "_index", {p.id: p for p in self.pairs})
            return self._index[pair_id]


@dataclass(frozen=True)
class SplitPlan:
    """Assignment of every dataset id to train / validation / test."""

    seed: int
    ratios: tuple[float, float, float]
    assignments: dict[str, str]

    def partition(self, name: str) -> tuple[str, ...]:
        if name not in PARTITIONS:
            raise DatasetError(f"unknown partition {name!r}")
        return tuple(i for i, part in self.assignments.items() if part == name)


def _parse_record(raw: dict, line_no: int) -> TaskCodePair:
    for key in ("id", "task", "code", "label", "label_kind"):
        if key not in raw:
            raise DatasetError(f"line {line_no}: missing field {key!r}")
    kind = raw["label_kind"]
    if kind not in LABEL_KINDS:
        raise DatasetError(f"line {line_no}: unknown label_kind {kind!r}")
    if kind == CONTINUOUS and "scale" not in raw:
        raise DatasetError(f"line {line_no}: continuous record is missing 'scale'")
    if kind == BINARY and "scale" in raw:
        raise DatasetError(f"line {line_no}: binary record must not carry 'scale'")
    if not isinstance(raw["label"], (int, float)) or isinstance(raw["label"], bool):
        raise DatasetError(f"line {line_no}: label must be a number")
    try:
        label = Label(
            kind=kind,
            value=float(raw["label"]),
            scale=float(raw["scale"]) if kind == CONTINUOUS else None,
        )
        return TaskCodePair(
            id=str(raw["id"]),
            task=raw["task"],
            code=raw["code"],
            label=label,
            language=str(raw.get("language", "")),
        )
    except DatasetError as exc:
        raise DatasetError(f"line {line_no} (id {raw.get('id')!r}): {exc}") from exc


def load_dataset(path: str | Path, expected_kind: str | None = None) -> Dataset:
    """Load and validate a JSONL dataset file.

    Errors report the offending line number.  All records must share one
    label kind (and, for continuous labels, one scale).
    """
    path = Path(path)
    pairs: list[TaskCodePair] = []
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: line {line_no}: invalid JSON: {exc}") from exc
            if not isinstance(raw, dict):
                raise DatasetError(f"{path}: line {line_no}: record is not an object")
            pairs.append(_parse_record(raw, line_no))
    if not pairs:
        raise DatasetError(f"{path}: no records")
    kind = pairs[0].label.kind
    scale = pairs[0].label.scale
    dataset = Dataset(pairs=tuple(pairs), label_kind=kind, scale=scale)
    if expected_kind is not None and kind != expected_kind:
        raise DatasetError(
            f"{path}: expected {expected_kind!r} labels, file has {kind!r}"
        )
    return dataset


def _record_dict(pair: TaskCodePair) -> dict:
    # Canonical key order; binary labels serialize as integers.
    record: dict = {"id": pair.id, "task": pair.task, "code": pair.code}
    if pair.label.kind == BINARY:
        record["label"] = int(pair.label.value)
    else:
        record["label"] = pair.label.value
    record["label_kind"] = pair.label.kind
    if pair.label.kind == CONTINUOUS:
        record["scale"] = pair.label.scale
    record["language"] = pair.language
    return record


def dumps_dataset(dataset: Dataset) -> str:
    """Canonical JSONL serialization (used for files and checksums)."""
    lines = [json.dumps(_record_dict(p), ensure_ascii=False) for p in dataset]
    return "\n".join(lines) + "\n"


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(dumps_dataset(dataset), encoding="utf-8")


def dataset_checksum(dataset: Dataset) -> str:
    return hashlib.sha256(dumps_dataset(dataset).encode("utf-8")).hexdigest()


def _check_ratios(ratios: tuple[float, float, float]) -> None:
    if len(ratios) != 3 or any(not r > 0 for r in ratios):
        raise DatasetError(f"ratios must be three positive numbers, got {ratios!r}")
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise DatasetError(f"ratios must sum to 1, got {ratios!r}")


def make_splits(
    dataset: Dataset,
    seed: int,
    ratios: tuple[float, float, float] = (0.7, 0.15, 0.15),
    n_experiments: int = 1,
) -> list[SplitPlan]:
    """Build ``n_experiments`` independent seeded splits of the dataset.

    Plan ``i`` is derived from ``seed + i``: the id list is shuffled
    uniformly and sliced contiguously.  Train and validation sizes are
    floored; the remainder goes to test.  Deterministic for fixed inputs,
    and plan ``i`` does not depend on ``n_experiments``.
    """
    _check_ratios(tuple(ratios))
    if n_experiments < 1:
        raise DatasetError("n_experiments must be >= 1")
    ids = dataset.ids
    n = len(ids)
    n_train = int(n * ratios[0])
    n_val = int(n * ratios[1])
    n_test = n - n_train - n_val
    if n_train < 1 or n_val < 1 or n_test < 1:
        raise DatasetError(
            f"dataset of {n} pairs cannot populate all three partitions "
            f"at ratios {tuple(ratios)!r}"
        )
    plans = []
    for i in range(n_experiments):
        plan_seed = seed + i
        rng = np.random.default_rng(plan_seed & (2**64 - 1))
        order = rng.permutation(n)
        shuffled = [ids[j] for j in order]
        part_of = {}
        for pid in shuffled[:n_train]:
            part_of[pid] = "train"
        for pid in shuffled[n_train : n_train + n_val]:
            part_of[pid] = "validation"
        for pid in shuffled[n_train + n_val :]:
            part_of[pid] = "test"
        # Assignments listed in dataset order for canonical serialization.
        assignments = {pid: part_of[pid] for pid in ids}
        plans.append(SplitPlan(seed=plan_seed, ratios=tuple(ratios), assignments=assignments))
    return plans


def save_split_plans(plans: list[SplitPlan], path: str | Path) -> None:
    payload = [
        {"seed": p.seed, "ratios": list(p.ratios), "assignments": p.assignments}
        for p in plans
    ]
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_split_plans(path: str | Path) -> list[SplitPlan]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    plans = []
    for entry in payload:
        plans.append(
            SplitPlan(
                seed=int(entry["seed"]),
                ratios=tuple(float(r) for r in entry["ratios"]),
                assignments=dict(entry["assignments"]),
            )
        )
    return plans

"""Event corpora, humanitarian label schemas, and labels-per-class splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# The ten primary humanitarian categories, in their canonical order. Index
# positions matter: split plans, oracle profiles, and metrics all address
# classes by position in this tuple.
HUMAID_CATEGORIES = (
    "Caution and advice",
    "Sympathy and support",
    "Requests or urgent needs",
    "Displaced people and evacuations",
    "Injured or dead people",
    "Missing or found people",
    "Infrastructure and utility damage",
    "Rescue, volunteering, or donation effort",
    "Other relevant information",
    "Not humanitarian",
)

SPLIT_FILES = ("train.tsv", "val.tsv", "test.tsv")
_HEADER = "id\ttext\tlabel"


class CorpusFormatError(ValueError):
    """A corpus file is malformed: bad header, bad row, or unknown label."""


@dataclass(frozen=True)
class LabelSchema:
    """Ordered, immutable set of class names for one experiment."""

    categories: tuple[str, ...]

    def __post_init__(self):
        names = [c.strip() for c in self.categories]
        if any(not n for n in names):
            raise ValueError("schema contains an empty category name")
        if len(set(n.lower() for n in names)) != len(names):
            raise ValueError("schema category names must be unique")
        if len(names) < 2:
            raise ValueError("schema needs at least 2 categories")
        object.__setattr__(self, "categories", tuple(names))

    @property
    def size(self) -> int:
        return len(self.categories)

    def index(self, name: str) -> int:
        return self.categories.index(name)

    def match(self, text: str) -> int | None:
        """Case-insensitive, whitespace-trimmed lookup; None when unmatched."""
        wanted = text.strip().lower()
        for i, name in enumerate(self.categories):
            if name.lower() == wanted:
                return i
        return None


def humaid_schema() -> LabelSchema:
    """The 10-category humanitarian schema used by all bundled profiles."""
    return LabelSchema(HUMAID_CATEGORIES)


@dataclass(frozen=True)
class Example:
    """One post: a unique id, raw text, and an optional gold class index."""

    id: str
    text: str
    gold_label: int | None = None


@dataclass
class EventCorpus:
    """Train/val/test examples of a single disaster event plus class tallies."""

    event_name: str
    schema: LabelSchema
    train: list[Example]
    val: list[Example] = field(default_factory=list)
    test: list[Example] = field(default_factory=list)
    class_counts: np.ndarray = field(init=False)

    def __post_init__(self):
        counts = np.zeros(self.schema.size, dtype=int)
        seen: set[str] = set()
        for ex in self.train + self.val + self.test:
            if ex.id in seen:
                raise ValueError(f"duplicate example id {ex.id!r}")
            seen.add(ex.id)
        for ex in self.train:
            if ex.gold_label is None:
                raise ValueError(f"train example {ex.id!r} has no gold label")
            counts[ex.gold_label] += 1
        self.class_counts = counts

    @property
    def active_classes(self) -> np.ndarray:
        """Indices of classes with at least one train example."""
        return np.flatnonzero(self.class_counts > 0)


@dataclass(frozen=True)
class SplitPlan:
    """Partition of the train split into labeled (D_L) and unlabeled (D_U) ids."""

    budget_k: int
    seed: int
    labeled_ids: frozenset[str]
    unlabeled_ids: frozenset[str]

    @property
    def n_labeled(self) -> int:
        return len(self.labeled_ids)

    @property
    def n_unlabeled(self) -> int:
        return len(self.unlabeled_ids)


def make_split_plan(corpus: EventCorpus, budget_k: int, seed: int) -> SplitPlan:
    """Sample min(budget_k, available) labeled examples per class.

    Sampling is uniform without replacement, driven by one seeded generator
    consumed in class-index order, so a (corpus, seed) pair always yields the
    same plan. Classes smaller than the budget are fully labeled.
    """
    if budget_k < 1:
        raise ValueError("budget_k must be >= 1")
    if not corpus.train:
        raise ValueError("corpus train split is empty")
    rng = np.random.default_rng(seed)
    labeled: list[str] = []
    by_class: list[list[str]] = [[] for _ in range(corpus.schema.size)]
    for ex in corpus.train:
        by_class[ex.gold_label].append(ex.id)
    for ids in by_class:
        take = min(budget_k, len(ids))
        if take == 0:
            continue
        picks = rng.choice(len(ids), size=take, replace=False)
        labeled.extend(ids[i] for i in picks)
    labeled_set = frozenset(labeled)
    unlabeled_set = frozenset(ex.id for ex in corpus.train) - labeled_set
    return SplitPlan(budget_k, seed, labeled_set, frozenset(unlabeled_set))


def save_split_plan(plan: SplitPlan, corpus: EventCorpus, path: str | Path) -> None:
    """Audit dump: one `id<TAB>L|U` line per train example, in corpus order."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in corpus.train:
            flag = "L" if ex.id in plan.labeled_ids else "U"
            fh.write(f"{ex.id}\t{flag}\n")


def load_examples(path: str | Path, schema: LabelSchema) -> list[Example]:
    """Read one TSV split file (header `id<TAB>text<TAB>label`).

    Tabs and newlines are forbidden inside fields, so rows either split into
    exactly three columns or the row is rejected by name. An empty label
    column means the example is unlabeled.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"corpus file not found: {path}")
    examples = []
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n")
        if header != _HEADER:
            raise CorpusFormatError(f"{path}: bad header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected 3 tab-separated columns, got {len(cols)}"
                )
            ex_id, text, label = cols
            if label:
                idx = schema.match(label)
                if idx is None:
                    raise CorpusFormatError(
                        f"{path}:{lineno}: unknown label {label!r}"
                    )
            else:
                idx = None
            examples.append(Example(ex_id, text, idx))
    return examples


def save_examples(path: str | Path, examples: list[Example], schema: LabelSchema) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_HEADER + "\n")
        for ex in examples:
            if "\t" in ex.text or "\n" in ex.text or "\t" in ex.id:
                raise CorpusFormatError(f"example {ex.id!r}: tabs/newlines forbidden")
            label = "" if ex.gold_label is None else schema.categories[ex.gold_label]
            fh.write(f"{ex.id}\t{ex.text}\t{label}\n")


def load_corpus(path: str | Path, schema: LabelSchema, event_name: str | None = None) -> EventCorpus:
    """Load an event from a directory of train/val/test TSVs or a single TSV.

    A single file is treated as the train split. Missing val/test files give
    empty splits.
    """
    path = Path(path)
    if path.is_dir():
        splits = []
        for fname in SPLIT_FILES:
            fpath = path / fname
            splits.append(load_examples(fpath, schema) if fpath.exists() else [])
        train, val, test = splits
        if not (path / "train.tsv").exists():
            raise FileNotFoundError(f"no train.tsv under {path}")
        name = event_name or path.name
    else:
        train, val, test = load_examples(path, schema), [], []
        name = event_name or path.stem
    return EventCorpus(name, schema, train, val, test)


def save_corpus(corpus: EventCorpus, dirpath: str | Path) -> None:
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    for fname, split in zip(SPLIT_FILES, (corpus.train, corpus.val, corpus.test)):
        if fname == "train.tsv" or split:
            save_examples(dirpath / fname, split, corpus.schema)

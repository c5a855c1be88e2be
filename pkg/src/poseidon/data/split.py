"""Train/test splits by sequence or subject id."""
from __future__ import annotations

from dataclasses import dataclass

from .sample import DataError

BIWI_TEST_SEQUENCES = (11, 12)
PANDORA_TEST_SUBJECTS = (10, 14, 16, 20)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    test: tuple
    rule: str


def parse_rule(rule) -> tuple:
    """Return (field, ids) for a rule string.

    Accepted: "", "none", "biwi", "pandora", "seq:1,2", "subject:3,4".
    """
    if rule is None or rule in ("", "none"):
        return None, ()
    if rule == "biwi":
        return "seq", BIWI_TEST_SEQUENCES
    if rule == "pandora":
        return "subject", PANDORA_TEST_SUBJECTS
    field, _, ids = str(rule).partition(":")
    if field not in ("seq", "subject") or not ids:
        raise DataError(f"unknown split rule {rule!r}")
    try:
        return field, tuple(int(i) for i in ids.split(",") if i.strip())
    except ValueError:
        raise DataError(f"bad ids in split rule {rule!r}") from None


def make_split(samples, rule=None) -> DatasetSplit:
    field, test_ids = parse_rule(rule)
    ids = [s.id for s in samples]
    if field is None:
        return DatasetSplit(tuple(ids), (), "none")
    present = {getattr(s, field) for s in samples}
    unknown = sorted(set(test_ids) - present)
    # dataset rules may meet a partial copy of the dataset; explicit ids must all exist
    named = rule in ("biwi", "pandora")
    if unknown and (not named or len(unknown) == len(test_ids)):
        raise DataError(f"split rule {rule!r} names {field} ids absent from the dataset: {unknown}")
    test = tuple(s.id for s in samples if getattr(s, field) in test_ids)
    train = tuple(s.id for s in samples if getattr(s, field) not in test_ids)
    return DatasetSplit(train, test, str(rule))

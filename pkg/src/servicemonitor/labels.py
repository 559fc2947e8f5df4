"""The two application classes and their fixed integer indices.

Benign is class 0 and malicious is class 1 everywhere; ties in
majority votes therefore fall to benign (the lower index).
"""

from .errors import LabelError

BENIGN = "benign"
MALICIOUS = "malicious"
LABELS = (BENIGN, MALICIOUS)

_INDEX = {BENIGN: 0, MALICIOUS: 1}


def label_to_index(label: str) -> int:
    try:
        return _INDEX[label]
    except KeyError:
        raise LabelError(f"unknown label {label!r}; expected one of {LABELS}") from None


def index_to_label(index: int) -> str:
    return LABELS[index]

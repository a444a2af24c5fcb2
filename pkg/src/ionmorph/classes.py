"""The six structural classes, in their canonical order.

The order is the single source of truth shared by class-probability vectors,
the label manifest, the annotation API and the UI keyboard mapping
(1 -> Structured ... 6 -> Negative).
"""

STRUCTURAL_CLASSES = (
    "Structured",
    "WeaklyStructured",
    "Localized",
    "Fragmented",
    "Unstructured",
    "Negative",
)

NUM_CLASSES = len(STRUCTURAL_CLASSES)

CLASS_INDEX = {name: i for i, name in enumerate(STRUCTURAL_CLASSES)}

_LOWER = {name.lower(): name for name in STRUCTURAL_CLASSES}
# common CLI spellings
_LOWER["weakly_structured"] = "WeaklyStructured"
_LOWER["weakly-structured"] = "WeaklyStructured"


def canonical_class(name: str) -> str:
    """Map a case-insensitive class name to its canonical spelling.

    Raises KeyError for names outside the six classes.
    """
    return _LOWER[name.strip().lower()]


def is_valid_class(name: str) -> bool:
    return name in CLASS_INDEX

"""The finite state space of system-service functions.

A catalog is an ordered list of (interface_token, function_code) pairs,
each naming one framework function and its service category. Catalog
order defines the dense function ids that the Markov model, feature
vectors, and classifiers all index by, so two runs only interoperate
when their catalog digests match.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from typing import BinaryIO, Iterator

from .errors import CatalogError, CatalogParseError, DuplicateFunctionError

CATEGORIES = (
    "TelephonyManager",
    "LocationManager",
    "NetworkManager",
    "ActivityManager",
    "PackageManager",
    "OsRelated",
)

_U32_MAX = 2**32 - 1


@dataclass(frozen=True)
class ServiceFunction:
    """One catalog entry: a function exposed by a system-service interface."""

    function_id: int
    interface_token: str
    function_code: int
    function_name: str
    category: str


@dataclass(frozen=True)
class ServiceCatalog:
    """Immutable, digest-stamped state space; safe to share between threads."""

    functions: tuple[ServiceFunction, ...]
    version: str = "1"
    content_digest: bytes = b""
    _lookup: dict[tuple[str, int], int] = field(repr=False, compare=False, default_factory=dict)

    def __len__(self) -> int:
        return len(self.functions)

    def __iter__(self) -> Iterator[ServiceFunction]:
        return iter(self.functions)

    def resolve(self, interface_token: str, function_code: int) -> int | None:
        """Function id for the pair, or None when the pair is uncataloged."""
        return self._lookup.get((interface_token, function_code))

    def entry(self, function_id: int) -> ServiceFunction:
        return self.functions[function_id]

    def find_by_name(self, function_name: str, token_fragment: str = "") -> ServiceFunction:
        """Entry whose name matches and whose token contains the fragment.

        Names alone are ambiguous (checkPermission exists on two
        interfaces), hence the fragment filter.
        """
        hits = [
            f for f in self.functions
            if f.function_name == function_name and token_fragment in f.interface_token
        ]
        if len(hits) != 1:
            raise CatalogError(
                f"{len(hits)} catalog entries match name={function_name!r} "
                f"token~{token_fragment!r}"
            )
        return hits[0]

    @property
    def digest_hex(self) -> str:
        return self.content_digest.hex()


def canonical_bytes(functions: tuple[ServiceFunction, ...]) -> bytes:
    """Canonical serialization the content digest is computed over.

    Covers every field of every entry, in id order; the version string
    is deliberately excluded so relabeling a catalog does not unbind
    existing feature files.
    """
    lines = [
        f"{f.interface_token}\t{f.function_code}\t{f.function_name}\t{f.category}\n"
        for f in functions
    ]
    return "".join(lines).encode("utf-8")


def _build(functions: list[ServiceFunction], version: str) -> ServiceCatalog:
    if len(functions) < 2:
        raise CatalogError("catalog must contain ≥ 2 functions")
    lookup: dict[tuple[str, int], int] = {}
    for f in functions:
        key = (f.interface_token, f.function_code)
        if key in lookup:
            raise DuplicateFunctionError(
                f"duplicate catalog entry for interface {f.interface_token!r} "
                f"code {f.function_code}"
            )
        lookup[key] = f.function_id
    digest = hashlib.sha256(canonical_bytes(tuple(functions))).digest()
    return ServiceCatalog(tuple(functions), version, digest, lookup)


def load_catalog(source: bytes | BinaryIO, version: str = "1") -> ServiceCatalog:
    """Parse a catalog file: tab-separated token, code, name, category.

    Lines starting with '#' and blank lines are skipped. File order
    defines the dense function ids.
    """
    data = source if isinstance(source, bytes) else source.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CatalogError(f"catalog is not valid UTF-8: {exc}") from exc

    functions: list[ServiceFunction] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise CatalogParseError(
                f"expected 4 tab-separated fields, got {len(fields)}", lineno
            )
        token, code_text, name, category = (f.strip() for f in fields)
        if not token or not name:
            raise CatalogParseError("empty interface token or function name", lineno)
        try:
            code = int(code_text, 10)
        except ValueError:
            raise CatalogParseError(f"function code {code_text!r} is not a decimal integer", lineno) from None
        if not 0 <= code <= _U32_MAX:
            raise CatalogParseError(f"function code {code} outside u32 range", lineno)
        if category not in CATEGORIES:
            raise CatalogParseError(
                f"unknown category {category!r}; expected one of {', '.join(CATEGORIES)}",
                lineno,
            )
        functions.append(ServiceFunction(len(functions), token, code, name, category))
    return _build(functions, version)


def load_catalog_path(path, version: str = "1") -> ServiceCatalog:
    with open(path, "rb") as fh:
        return load_catalog(fh, version)


def default_catalog() -> ServiceCatalog:
    """The shipped catalog covering the six service categories."""
    data = resources.files("servicemonitor.data").joinpath("default_catalog.tsv").read_bytes()
    return load_catalog(data, version="default-1")

"""Binary truth configurations and validated p-value input.

A *configuration* assigns each of the Q parallel tests either H0 (0) or
H1 (1).  Configurations are indexed canonically: index k in [0, 2**Q)
reads as a big-endian bit string, so index 0 is the all-null
configuration and index 2**Q - 1 the all-alternative one.  A composed
hypothesis is any non-trivial set of configurations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import InvalidArgumentError, InvalidDataError

MAX_Q = 16

Configuration = tuple[int, ...]


def _check_q(q: int) -> int:
    if not isinstance(q, (int, np.integer)) or isinstance(q, bool):
        raise InvalidArgumentError(f"Q must be an integer, got {q!r}")
    if not 1 <= q <= MAX_Q:
        raise InvalidArgumentError(f"Q must be in [1, {MAX_Q}], got {q}")
    return int(q)


def config_bits(q: int) -> np.ndarray:
    """All 2**q configurations as a (2**q, q) 0/1 array in canonical order."""
    q = _check_q(q)
    k = np.arange(2**q, dtype=np.int64)
    shifts = np.arange(q - 1, -1, -1, dtype=np.int64)
    return ((k[:, None] >> shifts) & 1).astype(np.int8)


def enumerate_configs(q: int) -> list[Configuration]:
    """All configurations for q tests, in canonical index order."""
    return [tuple(int(b) for b in row) for row in config_bits(q)]


def config_index(config: Sequence[int]) -> int:
    """Canonical index of a configuration given as a 0/1 sequence."""
    q = _check_q(len(config))
    idx = 0
    for b in config:
        if b not in (0, 1):
            raise InvalidArgumentError(f"configuration entries must be 0 or 1, got {b!r}")
        idx = (idx << 1) | int(b)
    return idx


def index_to_config(index: int, q: int) -> Configuration:
    q = _check_q(q)
    if not 0 <= index < 2**q:
        raise InvalidArgumentError(f"configuration index {index} out of range for Q={q}")
    return tuple((index >> s) & 1 for s in range(q - 1, -1, -1))


def config_to_string(config: Sequence[int]) -> str:
    """Render a configuration as a bit string, e.g. (0, 1, 1, 0) -> '0110'."""
    return "".join(str(int(b)) for b in config)


def product_weights(pi0s: Sequence[float]) -> np.ndarray:
    """Configuration weights implied by independent per-test null proportions.

    Entry k is prod_q pi0[q]**(1-c_q) * (1-pi0[q])**c_q for the bits c of
    configuration k.  Always sums to 1.
    """
    pi0s = np.asarray(pi0s, dtype=np.float64)
    if pi0s.ndim != 1 or pi0s.size == 0:
        raise InvalidArgumentError("pi0s must be a non-empty 1-d sequence")
    if np.any(~np.isfinite(pi0s)) or np.any(pi0s < 0) or np.any(pi0s > 1):
        raise InvalidArgumentError("pi0s entries must lie in [0, 1]")
    bits = config_bits(pi0s.size)
    per_test = np.where(bits == 1, 1.0 - pi0s, pi0s)
    return per_test.prod(axis=1)


@dataclass(frozen=True)
class ConfigSet:
    """An immutable set of configurations over q tests.

    Stored as sorted canonical indices.  Use the module-level builders
    (``at_least_k``, ``consecutive_run``, ``pattern_set``, ``parse_config_set``)
    rather than assembling indices by hand.
    """

    q: int
    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        q = _check_q(self.q)
        idx = tuple(sorted(set(int(i) for i in self.indices)))
        for i in idx:
            if not 0 <= i < 2**q:
                raise InvalidArgumentError(f"configuration index {i} out of range for Q={q}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[Configuration]:
        return (index_to_config(i, self.q) for i in self.indices)

    def __contains__(self, item: object) -> bool:
        if isinstance(item, (int, np.integer)):
            return int(item) in set(self.indices)
        if isinstance(item, (tuple, list)):
            return config_index(item) in set(self.indices)
        return False

    @property
    def is_empty(self) -> bool:
        return len(self.indices) == 0

    @property
    def is_full(self) -> bool:
        return len(self.indices) == 2**self.q

    def complement(self) -> "ConfigSet":
        present = set(self.indices)
        rest = tuple(i for i in range(2**self.q) if i not in present)
        return ConfigSet(self.q, rest)

    def member_strings(self) -> list[str]:
        return [config_to_string(c) for c in self]

    def mask(self) -> np.ndarray:
        """Boolean membership vector of length 2**q in canonical order."""
        m = np.zeros(2**self.q, dtype=bool)
        m[list(self.indices)] = True
        return m

    def describe(self) -> str:
        return "{" + ",".join(self.member_strings()) + "}"


def complement(cs: ConfigSet) -> ConfigSet:
    return cs.complement()


def all_alternative(q: int) -> ConfigSet:
    """The singleton set holding the all-H1 configuration."""
    q = _check_q(q)
    return ConfigSet(q, (2**q - 1,))


def at_least_k(q: int, k: int) -> ConfigSet:
    """Configurations with at least k ones among the q tests."""
    q = _check_q(q)
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool) or not 0 <= k <= q:
        raise InvalidArgumentError(f"k must be an integer in [0, {q}], got {k!r}")
    counts = config_bits(q).sum(axis=1)
    return ConfigSet(q, tuple(np.nonzero(counts >= k)[0].tolist()))


def consecutive_run(q: int, r: int) -> ConfigSet:
    """Configurations containing a run of at least r consecutive ones."""
    q = _check_q(q)
    if not isinstance(r, (int, np.integer)) or isinstance(r, bool) or not 1 <= r <= q:
        raise InvalidArgumentError(f"run length must be an integer in [1, {q}], got {r!r}")
    bits = config_bits(q)
    hits = np.zeros(bits.shape[0], dtype=bool)
    for start in range(q - r + 1):
        hits |= bits[:, start : start + r].all(axis=1)
    return ConfigSet(q, tuple(np.nonzero(hits)[0].tolist()))


def pattern_set(q: int, pattern: str) -> ConfigSet:
    """Configurations matching a bit pattern with ``*`` wildcards, e.g. '1*0'."""
    q = _check_q(q)
    if not isinstance(pattern, str) or len(pattern) != q:
        raise InvalidArgumentError(f"pattern must be a string of length {q}, got {pattern!r}")
    fixed: list[tuple[int, int]] = []
    for pos, ch in enumerate(pattern):
        if ch == "*":
            continue
        if ch not in "01":
            raise InvalidArgumentError(f"pattern may contain only 0, 1, *; got {pattern!r}")
        fixed.append((pos, int(ch)))
    bits = config_bits(q)
    keep = np.ones(bits.shape[0], dtype=bool)
    for pos, val in fixed:
        keep &= bits[:, pos] == val
    return ConfigSet(q, tuple(np.nonzero(keep)[0].tolist()))


def parse_config_set(q: int, spec: str) -> ConfigSet:
    """Build a ConfigSet from a textual spec.

    Accepted forms (comma-separated patterns may be mixed freely):

    * ``"all"``        -- the single all-H1 configuration
    * ``"atleast:k"``  -- at least k tests under H1
    * ``"run:r"``      -- a run of at least r consecutive H1 tests
    * ``"1*0,011"``    -- union of explicit patterns (``*`` is a wildcard)
    """
    q = _check_q(q)
    if not isinstance(spec, str) or not spec.strip():
        raise InvalidArgumentError("configuration spec must be a non-empty string")
    text = spec.strip().lower()
    if text == "all":
        return all_alternative(q)
    for key, builder in (("atleast:", at_least_k), ("run:", consecutive_run)):
        if text.startswith(key):
            arg = text[len(key) :]
            try:
                val = int(arg)
            except ValueError:
                raise InvalidArgumentError(f"expected an integer after {key!r}, got {arg!r}") from None
            return builder(q, val)
    indices: set[int] = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            raise InvalidArgumentError(f"empty pattern in configuration spec {spec!r}")
        indices.update(pattern_set(q, part).indices)
    return ConfigSet(q, tuple(sorted(indices)))


@dataclass(frozen=True, eq=False)
class PValueMatrix:
    """Validated n x Q matrix of p-values with unique item identifiers."""

    item_ids: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InvalidDataError(f"p-value matrix must be 2-d, got shape {values.shape}")
        n, q = values.shape
        if n < 2:
            raise InvalidDataError(f"need at least 2 items, got {n}")
        if q < 1:
            raise InvalidDataError("need at least one test column")
        bad = ~np.isfinite(values)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise InvalidDataError(f"non-finite p-value at row {i}, column {j}")
        out = (values < 0.0) | (values > 1.0)
        if out.any():
            i, j = np.argwhere(out)[0]
            raise InvalidDataError(
                f"p-value out of [0, 1] at row {i}, column {j}: {values[i, j]!r}"
            )
        ids = np.asarray(self.item_ids, dtype=str)
        if ids.ndim != 1 or ids.shape[0] != n:
            raise InvalidDataError(f"expected {n} item ids, got shape {ids.shape}")
        uniq, counts = np.unique(ids, return_counts=True)
        if uniq.size != n:
            dup = str(uniq[counts > 1][0])
            raise InvalidDataError(f"duplicate item id {dup!r}")
        object.__setattr__(self, "item_ids", ids)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.values.shape[1]

    def column(self, q: int) -> np.ndarray:
        return self.values[:, q]

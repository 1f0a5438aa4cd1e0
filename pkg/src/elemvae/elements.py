"""Element dataset, electron configurations and Madelung's filling rule."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from typing import IO, Iterable, Iterator, Mapping

SUBSHELLS = "spdf"
CAPACITY = {"s": 2, "p": 6, "d": 10, "f": 14}
PERIOD_SIZES = (2, 8, 8, 18, 18, 32, 32)
NOBLE_GAS_Z = (2, 10, 18, 36, 54, 86, 118)
META_COLUMNS = (
    "z", "symbol", "name", "group", "block", "category", "melting_point", "discovery_year",
)


class ElementDataError(ValueError):
    """Raised when the element file violates the dataset invariants."""


@dataclass(frozen=True, order=True)
class Orbital:
    n: int
    subshell: str

    def __post_init__(self):
        if self.subshell not in CAPACITY:
            raise ValueError(f"unknown subshell {self.subshell!r}")
        if not 1 <= self.n <= 7:
            raise ValueError(f"principal number out of range: {self.n}")
        if self.n <= self.l:
            raise ValueError(f"{self.n}{self.subshell} does not exist")

    @property
    def l(self) -> int:
        return SUBSHELLS.index(self.subshell)

    @property
    def capacity(self) -> int:
        return CAPACITY[self.subshell]

    @property
    def label(self) -> str:
        return f"{self.n}{self.subshell}"

    @classmethod
    def parse(cls, text: str) -> "Orbital":
        return cls(int(text[0]), text[1])

    def __str__(self):
        return self.label


# Column order of the original 19-variable table (n-major).
ORBITALS: tuple[Orbital, ...] = tuple(
    Orbital.parse(t)
    for t in "1s 2s 2p 3s 3p 3d 4s 4p 4d 4f 5s 5p 5d 5f 6s 6p 6d 7s 7p".split()
)
ORBITAL_INDEX = {o: i for i, o in enumerate(ORBITALS)}


def period_index(orbital: Orbital) -> int:
    """Period in which ``orbital`` starts filling: n for s/p, n+1 for d, n+2 for f."""
    return orbital.n + max(orbital.l - 1, 0)


@dataclass(frozen=True)
class ElectronConfiguration:
    """Occupancy of the 19 orbitals 1s..7p; unlisted orbitals are empty."""

    occupancy: tuple[int, ...] = (0,) * len(ORBITALS)

    def __post_init__(self):
        occ = tuple(int(v) for v in self.occupancy)
        if len(occ) != len(ORBITALS):
            raise ValueError(f"expected {len(ORBITALS)} occupancies, got {len(occ)}")
        for orb, count in zip(ORBITALS, occ):
            if not 0 <= count <= orb.capacity:
                raise ValueError(
                    f"occupancy {count} of {orb} exceeds capacity {orb.capacity}"
                )
        object.__setattr__(self, "occupancy", occ)

    @classmethod
    def from_mapping(cls, mapping: Mapping[Orbital | str, int]) -> "ElectronConfiguration":
        occ = [0] * len(ORBITALS)
        for key, count in mapping.items():
            orb = Orbital.parse(key) if isinstance(key, str) else key
            if orb not in ORBITAL_INDEX:
                raise ValueError(f"orbital {orb} cannot be occupied")
            occ[ORBITAL_INDEX[orb]] = count
        return cls(tuple(occ))

    @classmethod
    def parse(cls, text: str) -> "ElectronConfiguration":
        """Parse ``"1s2 2s2 2p1"`` style text; a ``[Xe]`` core is expanded."""
        occ: dict[str, int] = {}
        for token in text.split():
            if token.startswith("["):
                # noble-gas cores all follow the rule
                occ.update(madelung_fill(_NOBLE_Z[token.strip("[]")]).as_dict())
            else:
                occ[token[:2]] = int(token[2:])
        return cls.from_mapping(occ)

    def __getitem__(self, orbital: Orbital | str) -> int:
        if isinstance(orbital, str):
            orbital = Orbital.parse(orbital)
        idx = ORBITAL_INDEX.get(orbital)
        return 0 if idx is None else self.occupancy[idx]

    def total(self) -> int:
        return sum(self.occupancy)

    def occupied(self) -> Iterator[tuple[Orbital, int]]:
        for orb, count in zip(ORBITALS, self.occupancy):
            if count:
                yield orb, count

    def as_dict(self) -> dict[str, int]:
        return {orb.label: count for orb, count in self.occupied()}

    def period(self) -> int:
        """Period implied by the configuration (0 for the empty one)."""
        return max((period_index(o) for o, _ in self.occupied()), default=0)

    def __le__(self, other: "ElectronConfiguration") -> bool:
        return all(a <= b for a, b in zip(self.occupancy, other.occupancy))

    def __str__(self):
        return " ".join(f"{o}{c}" for o, c in self.occupied()) or "(empty)"


_NOBLE_Z = {"He": 2, "Ne": 10, "Ar": 18, "Kr": 36, "Xe": 54, "Rn": 86, "Og": 118}


@dataclass(frozen=True)
class ElementRecord:
    z: int
    symbol: str
    name: str
    group: int | None
    block: str
    category: str
    melting_point: float | None
    discovery_year: int | None
    config: ElectronConfiguration = field(repr=False)

    @property
    def period(self) -> int:
        return self.config.period()


@dataclass(frozen=True)
class ElementTable:
    records: tuple[ElementRecord, ...]

    def __post_init__(self):
        zs = [r.z for r in self.records]
        if zs != sorted(zs):
            raise ElementDataError("records are not sorted by atomic number")
        if len(set(zs)) != len(zs):
            dup = sorted({z for z in zs if zs.count(z) > 1})
            raise ElementDataError(f"duplicate atomic numbers: {dup}")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, key: int | str) -> ElementRecord:
        """Look up by atomic number or symbol."""
        for rec in self.records:
            if rec.z == key or rec.symbol == key:
                return rec
        raise KeyError(key)

    @property
    def zs(self) -> list[int]:
        return [r.z for r in self.records]

    def subset(self, zs: Iterable[int]) -> "ElementTable":
        keep = set(zs)
        return ElementTable(tuple(r for r in self.records if r.z in keep))

    def period_sizes(self) -> tuple[int, ...]:
        counts = [0] * 7
        for rec in self.records:
            counts[rec.period - 1] += 1
        return tuple(counts)


def _optional(cell: str, cast):
    cell = cell.strip()
    return cast(cell) if cell else None


def _parse_row(row: dict[str, str], lineno: int) -> ElementRecord:
    label = f"line {lineno}"
    try:
        z = int(row["z"])
        label = f"z={z} ({row.get('symbol', '?')})"
        occ = [int(row[o.label] or 0) for o in ORBITALS]
    except (KeyError, TypeError, ValueError) as exc:
        raise ElementDataError(f"{label}: malformed row ({exc})") from None
    for orb, count in zip(ORBITALS, occ):
        if not 0 <= count <= orb.capacity:
            raise ElementDataError(
                f"{label}: field {orb}: occupancy {count} exceeds capacity {orb.capacity}"
            )
    config = ElectronConfiguration(tuple(occ))
    if config.total() != z:
        raise ElementDataError(f"{label}: electron total {config.total()} != atomic number")
    block = row["block"].strip()
    if block not in CAPACITY:
        raise ElementDataError(f"{label}: field block: unknown block {block!r}")
    try:
        group = _optional(row["group"], int)
        melting = _optional(row["melting_point"], float)
        year = _optional(row["discovery_year"], int)
    except ValueError as exc:
        raise ElementDataError(f"{label}: malformed metadata ({exc})") from None
    if group is not None and not 1 <= group <= 18:
        raise ElementDataError(f"{label}: field group: {group} outside 1..18")
    return ElementRecord(
        z=z, symbol=row["symbol"].strip(), name=row["name"].strip(), group=group,
        block=block, category=row["category"].strip(), melting_point=melting,
        discovery_year=year, config=config,
    )


def load_element_table(source: IO[bytes] | IO[str] | bytes | str | None = None) -> ElementTable:
    """Load and validate an element file.

    ``source`` may be a binary/text stream, raw bytes, or a path. ``None`` loads the
    bundled 118-element snapshot. Any invariant violation raises
    :class:`ElementDataError` naming the element and field.
    """
    if source is None:
        text = resources.files("elemvae.data").joinpath("elements.csv").read_text("utf-8")
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw

    reader = csv.DictReader(io.StringIO(text))
    expected = list(META_COLUMNS) + [o.label for o in ORBITALS]
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != expected:
        raise ElementDataError(f"header must be {','.join(expected)}")
    records = [_parse_row(row, i) for i, row in enumerate(reader, start=2)]
    table = ElementTable(tuple(sorted(records, key=lambda r: r.z)))
    if len(table) == 118:
        if table.zs != list(range(1, 119)):
            raise ElementDataError("full dataset must cover z = 1..118 contiguously")
        if table.period_sizes() != PERIOD_SIZES:
            raise ElementDataError(f"period sizes {table.period_sizes()} != {PERIOD_SIZES}")
    return table


def madelung_sequence() -> list[Orbital]:
    """The 19 orbitals ordered by n + l, ties by n."""
    return sorted(ORBITALS, key=lambda o: (o.n + o.l, o.n))


def madelung_fill(n_electrons: int) -> ElectronConfiguration:
    if not 0 <= n_electrons <= 118:
        raise ValueError(f"n_electrons must be in 0..118, got {n_electrons}")
    occ = {}
    left = n_electrons
    for orb in madelung_sequence():
        if left == 0:
            break
        take = min(left, orb.capacity)
        occ[orb] = take
        left -= take
    return ElectronConfiguration.from_mapping(occ)


def is_madelung_consistent(config: ElectronConfiguration) -> bool:
    return config == madelung_fill(config.total())


def madelung_violations(table: ElementTable) -> set[int]:
    return {rec.z for rec in table if not is_madelung_consistent(rec.config)}


def shell_totals(config: ElectronConfiguration) -> tuple[int, ...]:
    totals = [0] * 7
    for orb, count in config.occupied():
        totals[orb.n - 1] += count
    return tuple(totals)


def noble_gas_config(period: int) -> ElectronConfiguration:
    """Configuration of the noble gas closing ``period``."""
    return madelung_fill(NOBLE_GAS_Z[period - 1])


def validation_report(table: ElementTable) -> list[str]:
    """Human-readable per-element lines for ``elements validate``."""
    violations = madelung_violations(table)
    lines = []
    for rec in table:
        tag = "madelung-violation" if rec.z in violations else "ok"
        lines.append(f"{rec.z:3d} {rec.symbol:<2} period={rec.period} PASS {tag} {rec.config}")
    lines.append(
        f"violations ({len(violations)}/{len(table)} = {len(violations) / max(len(table), 1):.1%}): "
        + " ".join(table[z].symbol for z in sorted(violations))
    )
    return lines

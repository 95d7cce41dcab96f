"""Simulated multi-core ownership and message accounting.

Cores are simulated sequentially. A :class:`CoreLayout` assigns every element
to one active core and derives ownership of other entity kinds from it. A
distributed product computes each core's row block from its own rows plus
the rows of the right operand it has to receive, and records the receipts
in a :class:`CommLedger`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .partitioner import PartitionSpec, partition_graph
from .relmat import INDEX, Relation, bool_multiply, _check_kinds, DimensionError


@dataclass(eq=False)
class CoreLayout:
    """Element ownership over the active cores.

    Parameters
    ----------
    n_cores_total : int
        Size of the (simulated) machine.
    active : ndarray
        Physical id of each active core; row ``c`` of ``core_element`` is
        owned by physical core ``active[c]``.
    core_element : Relation
        Partition of the elements over the active cores.
    owners : dict
        Owner (active-core row index) of every entity, keyed by entity kind.
    """

    n_cores_total: int
    active: np.ndarray
    core_element: Relation
    owners: dict = field(default_factory=dict)

    def __post_init__(self):
        self.active = np.asarray(self.active, dtype=INDEX)
        if len(self.active) != self.core_element.nrows:
            raise ValueError("one active id is needed per core_element row")
        if np.any(self.core_element.col_counts() != 1):
            raise ValueError("core_element must partition the elements")
        self.owners.setdefault(self.core_element.col_kind, self.core_element.assignment())
        self.owners.setdefault(self.core_element.row_kind, np.arange(self.n_active, dtype=INDEX))

    @property
    def n_active(self):
        return len(self.active)

    def owner(self, kind):
        try:
            return self.owners[kind]
        except KeyError:
            raise KeyError(f"no ownership recorded for entity kind '{kind}'") from None

    def set_owner(self, kind, owner):
        self.owners[kind] = np.asarray(owner, dtype=INDEX)

    def derive_owner(self, kind, parent_child: Relation):
        """Each child entity goes to the owner of its lowest-index parent.

        ``parent_child`` relates an entity kind with known ownership (rows) to
        ``kind`` (columns), e.g. ``element_facet`` or ``element_dof``.
        """
        parent_owner = self.owner(parent_child.row_kind)
        child_parent = parent_child.T
        if np.any(child_parent.row_counts() == 0):
            raise ValueError(f"some '{kind}' entities have no parent")
        first = child_parent.indices[child_parent.indptr[:-1]]
        self.set_owner(kind, parent_owner[first])
        return self.owners[kind]

    def local_counts(self, kind=None):
        kind = kind or self.core_element.col_kind
        return np.bincount(self.owner(kind), minlength=self.n_active)

    def max_local(self, kind=None):
        return int(self.local_counts(kind).max()) if self.n_active else 0

    def to_dict(self):
        return {
            "n_cores_total": int(self.n_cores_total),
            "active": [int(c) for c in self.active],
            "elements_per_core": [int(c) for c in self.local_counts()],
        }


@dataclass(frozen=True)
class CommRecord:
    level: int
    op: str
    src: int
    dst: int
    messages: int
    volume: int


@dataclass(eq=False)
class CommLedger:
    records: list = field(default_factory=list)

    def record(self, level, op, src, dst, messages, volume):
        if src == dst:
            raise ValueError("self-messages are not communication")
        if messages < 0 or volume < 0:
            raise ValueError("negative message count or volume")
        self.records.append(CommRecord(int(level), str(op), int(src), int(dst), int(messages), int(volume)))

    def extend(self, other):
        self.records.extend(other.records)
        return self

    def filter(self, level=None, op=None):
        keep = [r for r in self.records if (level is None or r.level == level) and (op is None or r.op == op)]
        return CommLedger(keep)

    @property
    def messages(self):
        return sum(r.messages for r in self.records)

    @property
    def volume(self):
        return sum(r.volume for r in self.records)

    def max_core_messages(self):
        """Largest number of messages received by a single core."""
        per = {}
        for r in self.records:
            per[r.dst] = per.get(r.dst, 0) + r.messages
        return max(per.values(), default=0)

    def __len__(self):
        return len(self.records)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "op", "src", "dst", "messages", "volume"])
            for r in self.records:
                w.writerow([r.level, r.op, r.src, r.dst, r.messages, r.volume])


def initial_layout(element_element: Relation, n_cores, spec: PartitionSpec | None = None, n_cores_total=None):
    """Connected per-core element sets on cores ``0 .. n_cores-1``."""
    n_el = element_element.nrows
    if n_cores < 1 or n_cores > n_el:
        raise ValueError(f"need 1 <= n_cores <= n_elements ({n_el}), got {n_cores}")
    spec = spec or PartitionSpec(n_cores, balance_tol=0.0)
    if spec.n_parts != n_cores:
        spec = PartitionSpec(n_cores, spec.balance_tol, spec.seed)
    core_element = partition_graph(element_element, spec, part_kind="core")
    return CoreLayout(n_cores_total or n_cores, np.arange(n_cores), core_element)


def dist_bool_multiply(r1: Relation, r2: Relation, layout: CoreLayout, ledger: CommLedger | None = None, level=0,
                       op="bool_multiply"):
    """Boolean product computed core by core with receipts logged.

    The core owning row ``i`` of ``r1`` computes row ``i`` of the result and
    needs every row ``j`` of ``r2`` that row ``i`` touches. Rows owned by
    another core are received once per (sender, receiver) pair; the volume is
    the number of entries in those rows.
    """
    _check_kinds(r1.col_kind, r2.row_kind)
    if r1.ncols != r2.nrows:
        raise DimensionError(f"{r1.name} {r1.shape} x {r2.name} {r2.shape}")
    ledger = ledger if ledger is not None else CommLedger()
    own1 = layout.owner(r1.row_kind)
    own2 = layout.owner(r2.row_kind)
    r2_len = r2.row_counts()
    rows_out = [None] * r1.nrows
    for c in range(layout.n_active):
        mine = np.flatnonzero(own1 == c)
        if len(mine) == 0:
            continue
        block = r1.take_rows(mine)
        needed = np.unique(block.indices)
        # the local copy of r2 holds only the rows this core owns or receives
        mask = np.zeros(r2.nrows, dtype=bool)
        mask[needed] = True
        prod = bool_multiply(block, r2.mask_rows(mask))
        for k, i in enumerate(mine):
            rows_out[i] = prod.row(k)
        remote = needed[own2[needed] != c]
        for src in np.unique(own2[remote]):
            rows = remote[own2[remote] == src]
            ledger.record(level, op, layout.active[src], layout.active[c], 1, int(r2_len[rows].sum()))
    result = Relation.from_rows([r if r is not None else () for r in rows_out], r2.ncols, r1.row_kind, r2.col_kind)
    return result, ledger


def comm_summary(ledgers):
    """Message and volume totals, overall and per level."""
    per_level = {}
    messages = volume = 0
    for ledger in ledgers:
        for r in ledger.records:
            m, v = per_level.get(r.level, (0, 0))
            per_level[r.level] = (m + r.messages, v + r.volume)
            messages += r.messages
            volume += r.volume
    return {"messages": messages, "volume": volume,
            "per_level": {lvl: {"messages": m, "volume": v} for lvl, (m, v) in sorted(per_level.items())}}


def write_ledgers_csv(path, ledgers):
    merged = CommLedger()
    for ledger in ledgers:
        merged.extend(ledger)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    merged.write_csv(path)

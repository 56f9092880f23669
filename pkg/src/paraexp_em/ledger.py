"""Category-tagged sparse matrix-vector product (SMVP) counters."""
from __future__ import annotations

from dataclasses import dataclass, field

CATEGORIES = ("leapfrog_curl", "expm_poly", "expm_norm", "transform", "krylov")


@dataclass
class CostLedger:
    """SMVP counters keyed by category.

    Counters only ever grow. Worker ledgers are kept in ``workers`` so the
    per-track polynomial cost (n_Leja, taken over the longest track)
    survives a merge.
    """

    counts: dict = field(default_factory=lambda: {c: 0 for c in CATEGORIES})
    workers: dict = field(default_factory=dict)

    def add(self, category: str, n: int = 1) -> None:
        if category not in self.counts:
            raise KeyError(f"unknown ledger category {category!r}")
        if n < 0:
            raise ValueError("ledger counters are monotone")
        self.counts[category] += int(n)

    def __getitem__(self, category: str) -> int:
        return self.counts[category]

    def total(self) -> int:
        return sum(self.counts.values())

    def copy(self) -> "CostLedger":
        return CostLedger(dict(self.counts), {k: v.copy() for k, v in self.workers.items()})

    def merge(self, other: "CostLedger") -> "CostLedger":
        """Return a new ledger holding the sum of both (commutative, associative)."""
        counts = {c: self.counts[c] + other.counts[c] for c in CATEGORIES}
        workers = {k: v.copy() for k, v in self.workers.items()}
        for k, v in other.workers.items():
            workers[k] = workers[k].merge(v) if k in workers else v.copy()
        return CostLedger(counts, workers)

    def attach_worker(self, key, ledger: "CostLedger") -> None:
        """Fold a worker ledger into the totals and remember it under ``key``."""
        for c in CATEGORIES:
            self.counts[c] += ledger.counts[c]
        self.workers[key] = ledger.merge(self.workers[key]) if key in self.workers else ledger.copy()

    @property
    def c_lf(self) -> int:
        return self.counts["leapfrog_curl"]

    @property
    def n_leja(self) -> int:
        """Polynomial SMVPs of the most expensive worker (or own count if none)."""
        if self.workers:
            return max(w.counts["expm_poly"] for w in self.workers.values())
        return self.counts["expm_poly"]

    @property
    def c_leja(self) -> int:
        return self.n_leja

    def as_dict(self) -> dict:
        out = dict(self.counts)
        out["workers"] = {str(k): dict(v.counts) for k, v in sorted(self.workers.items())}
        return out

"""Models of shared stateful hardware resources with cycle-cost accounting.

Set-associative caches (also used for TLBs and branch target buffers), a
gshare-style direction predictor, and a multi-level inclusive data/instruction
hierarchy. Replacement is exact LRU and caches are write-back: a write marks
the line dirty, and dirty lines are charged one write-back each when evicted
or flushed.

Everything here is a plain value: identical operation sequences applied to
equal initial states give identical latencies and identical final states.
"""

from __future__ import annotations

from dataclasses import dataclass, field


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class CacheGeometry:
    """Shape of a set-associative resource.

    ``sets`` is derived: size = sets * ways * line_bytes. For TLBs the "line"
    is one page, for branch target buffers one branch slot.
    """

    size_bytes: int
    ways: int
    line_bytes: int
    indexing: str = "physical"  # "physical" or "virtual"
    level_name: str = "cache"
    write_policy: str = "writeback"

    def __post_init__(self):
        if self.indexing not in ("physical", "virtual"):
            raise ValueError(f"bad indexing mode {self.indexing!r}")
        for name in ("size_bytes", "ways", "line_bytes"):
            if not _is_pow2(getattr(self, name)):
                raise ValueError(f"{name} must be a power of two")
        if self.size_bytes % (self.ways * self.line_bytes) != 0:
            raise ValueError("size_bytes not divisible by ways * line_bytes")
        if not _is_pow2(self.sets):
            raise ValueError("set count must be a power of two")

    @property
    def sets(self) -> int:
        return self.size_bytes // (self.ways * self.line_bytes)

    @property
    def lines(self) -> int:
        return self.sets * self.ways


def colour_count(geometry: CacheGeometry, page_bytes: int) -> int:
    """Number of page colours of a cache: size / (ways * page size), min 1."""
    if not _is_pow2(page_bytes):
        raise ValueError("page_bytes must be a power of two")
    return max(1, geometry.size_bytes // (geometry.ways * page_bytes))


@dataclass(frozen=True)
class LatencyParams:
    """Cycle costs of one resource. miss must cost more than hit."""

    hit_cycles: int
    miss_cycles: int
    writeback_cycles_per_line: int = 0
    flush_base_cycles: int = 0

    def __post_init__(self):
        if min(self.hit_cycles, self.miss_cycles, self.writeback_cycles_per_line,
               self.flush_base_cycles) < 0:
            raise ValueError("latency costs must be non-negative")
        if self.miss_cycles <= self.hit_cycles:
            raise ValueError("miss_cycles must exceed hit_cycles")


@dataclass(frozen=True)
class LatencyModel:
    """Per-resource latency parameters plus global memory and mispredict costs."""

    default: LatencyParams
    overrides: dict = field(default_factory=dict)
    memory_cycles: int = 200
    mispredict_cycles: int = 20

    def params(self, resource: str) -> LatencyParams:
        return self.overrides.get(resource, self.default)


@dataclass
class CacheLine:
    tag: int
    dirty: bool = False
    owner: str | None = None


@dataclass(frozen=True)
class AccessResult:
    latency: int
    hit: bool
    evicted: CacheLine | None = None


class CacheState:
    """One set-associative resource: per-set lists of lines in MRU order.

    The tag is the global line number (address // line_bytes), so tags are
    unique within a set by construction. ``mod_count`` per set increments on
    every install, eviction or flush; read-only probes of resident lines do
    not bump it (recency reordering is not observable through timing).
    """

    def __init__(self, geometry: CacheGeometry, params: LatencyParams, name: str = ""):
        self.geometry = geometry
        self.params = params
        self.name = name or geometry.level_name
        self.sets: list[list[CacheLine]] = [[] for _ in range(geometry.sets)]
        self.mod_count: list[int] = [0] * geometry.sets

    def locate(self, vaddr: int, paddr: int) -> tuple[int, int]:
        """Set index from the indexing-mode address, tag from the physical
        address (virtually-indexed caches are physically tagged, so distinct
        frames never alias even at equal virtual addresses)."""
        index_addr = vaddr if self.geometry.indexing == "virtual" else paddr
        set_idx = (index_addr // self.geometry.line_bytes) % self.geometry.sets
        return set_idx, paddr // self.geometry.line_bytes

    def lookup(self, vaddr: int, paddr: int) -> bool:
        """Presence check with no state change."""
        set_idx, tag = self.locate(vaddr, paddr)
        return any(line.tag == tag for line in self.sets[set_idx])

    def access(self, domain: str, vaddr: int, paddr: int, kind: str = "read") -> AccessResult:
        """One load/store/ifetch. Hit refreshes LRU rank; a miss installs the
        line, evicting the LRU way of a full set (dirty eviction charges a
        write-back). A write marks the line dirty."""
        hit = self.try_hit(vaddr, paddr, kind)
        if hit is not None:
            return hit
        return self.install(domain, vaddr, paddr, kind)

    def try_hit(self, vaddr: int, paddr: int, kind: str = "read") -> AccessResult | None:
        """The hit half of an access: refresh LRU and return the hit result,
        or None (no state change) when the line is absent."""
        set_idx, tag = self.locate(vaddr, paddr)
        ways = self.sets[set_idx]
        for i, line in enumerate(ways):
            if line.tag == tag:
                if i:
                    ways.insert(0, ways.pop(i))
                if kind == "write":
                    line.dirty = True
                return AccessResult(self.params.hit_cycles, True)
        return None

    def install(self, domain: str, vaddr: int, paddr: int, kind: str = "read") -> AccessResult:
        """The miss half of an access: install the line, evicting LRU."""
        set_idx, tag = self.locate(vaddr, paddr)
        ways = self.sets[set_idx]
        latency = self.params.miss_cycles
        evicted = None
        if len(ways) >= self.geometry.ways:
            evicted = ways.pop()
            if evicted.dirty:
                latency += self.params.writeback_cycles_per_line
        ways.insert(0, CacheLine(tag, dirty=kind == "write", owner=domain))
        self.mod_count[set_idx] += 1
        return AccessResult(latency, False, evicted)

    def probe_sets(self, domain: str, lines_by_set: dict) -> dict:
        """Probe whole sets at once: for each set, re-access the given lines
        (index-relevant addresses) in prime order. Equivalent to sequential
        ``access`` calls when the absent lines are the least recent, which
        holds for a prober that owns all resident lines of the set apart from
        younger foreign installs. Returns {set_idx: (latency, misses)} and
        leaves each probed set holding exactly the probed lines."""
        out = {}
        for set_idx, addrs in lines_by_set.items():
            tags = [a // self.geometry.line_bytes for a in addrs]
            if len(set(tags)) != self.geometry.ways:
                raise ValueError("probe_sets requires exactly one line per way")
            ways = self.sets[set_idx]
            tagset = set(tags)
            present = {line.tag: line for line in ways if line.tag in tagset}
            misses = len(tags) - len(present)
            latency = len(present) * self.params.hit_cycles + misses * self.params.miss_cycles
            # write-backs for dirty lines displaced by the refill
            latency += sum(self.params.writeback_cycles_per_line
                           for line in ways if line.tag not in present and line.dirty)
            if misses:
                self.mod_count[set_idx] += 1
            self.sets[set_idx] = [
                present.get(t) or CacheLine(t, owner=domain) for t in reversed(tags)
            ]
            out[set_idx] = (latency, misses)
        return out

    def dirty_line_count(self) -> int:
        return sum(1 for ways in self.sets for line in ways if line.dirty)

    def resident_line_count(self) -> int:
        return sum(len(ways) for ways in self.sets)

    def flush(self) -> int:
        """Invalidate everything. Cost is the base cost plus one write-back
        per dirty line; the post-flush state is canonical regardless of
        history."""
        cost = self.params.flush_base_cycles
        wb = self.params.writeback_cycles_per_line
        for i, ways in enumerate(self.sets):
            if ways:
                cost += wb * sum(1 for line in ways if line.dirty)
                self.sets[i] = []
                self.mod_count[i] += 1
        return cost

    def snapshot(self) -> list:
        """Entry-wise view for state-equality assertions."""
        return [[(l.tag, l.dirty, l.owner) for l in ways] for ways in self.sets]


class MemoryHierarchy:
    """Ordered cache levels backed by memory; misses forward to the next level.

    Fills install the line at every missed level (inclusive fill); each
    level's dirty evictions charge that level's write-back cost. The total
    latency of an access is the sum of miss costs of the levels that missed
    plus the hit cost of the level that hit (or the memory cost).
    """

    def __init__(self, levels: list[CacheState], memory_cycles: int):
        self.levels = levels
        self.memory_cycles = memory_cycles

    def access(self, domain: str, vaddr: int, paddr: int, kind: str = "read") -> int:
        latency = 0
        missed: list[CacheState] = []
        hit = None
        for level in self.levels:
            hit = level.try_hit(vaddr, paddr, kind)
            if hit is not None:
                latency += hit.latency
                break
            missed.append(level)
        if hit is None:
            latency += self.memory_cycles
        for level in missed:
            latency += level.install(domain, vaddr, paddr, kind).latency
        return latency

    def resident_everywhere(self, vaddr: int, paddr: int) -> bool:
        return all(lvl.lookup(vaddr, paddr) for lvl in self.levels)


@dataclass
class BhbState:
    """Global-history direction predictor: shift register XOR-indexed into a
    table of 2-bit saturating counters. Counters start at 0 (strongly
    not-taken), so the first branch after a flush mispredicts if taken."""

    history_bits: int
    history: int = 0
    counters: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.counters:
            self.counters = [0] * (1 << self.history_bits)
        if len(self.counters) != (1 << self.history_bits):
            raise ValueError("pattern table size must be 2**history_bits")

    def slot(self, branch_addr: int) -> int:
        return ((branch_addr >> 2) ^ self.history) & ((1 << self.history_bits) - 1)

    def reset(self):
        self.history = 0
        self.counters = [0] * (1 << self.history_bits)


@dataclass(frozen=True)
class PredictResult:
    latency: int
    btb_hit: bool
    direction_correct: bool


class PredictorState:
    """Branch machinery: a tagged target cache (BTB) plus a BhbState."""

    def __init__(self, btb: CacheState, bhb: BhbState, mispredict_cycles: int,
                 bhb_flush_base: int = 0):
        self.btb = btb
        self.bhb = bhb
        self.mispredict_cycles = mispredict_cycles
        self.bhb_flush_base = bhb_flush_base

    def touch(self, domain: str, branch_addr: int, taken: bool) -> PredictResult:
        """Execute one branch: predict direction from the counter table, look
        the target up in the BTB, then train both. Latency is the BTB
        hit/miss cost plus a mispredict penalty when the predicted direction
        disagrees with the outcome."""
        idx = self.bhb.slot(branch_addr)
        predicted_taken = self.bhb.counters[idx] >= 2
        correct = predicted_taken == taken
        btb_res = self.btb.access(domain, branch_addr, branch_addr, "ifetch")
        latency = btb_res.latency + (0 if correct else self.mispredict_cycles)
        if taken:
            self.bhb.counters[idx] = min(3, self.bhb.counters[idx] + 1)
        else:
            self.bhb.counters[idx] = max(0, self.bhb.counters[idx] - 1)
        mask = (1 << self.bhb.history_bits) - 1
        self.bhb.history = ((self.bhb.history << 1) | int(taken)) & mask
        return PredictResult(latency, btb_res.hit, correct)

    def flush_btb(self) -> int:
        return self.btb.flush()

    def flush_bhb(self) -> int:
        self.bhb.reset()
        return self.bhb_flush_base


class Machine:
    """All hardware resources of one simulated platform.

    Resources are addressable by short ids: l1d, l1i, l2, llc (when present),
    tlb, btb, bhb. ``data_path``/``ifetch_path`` are the inclusive hierarchies
    used for ordinary loads/stores and instruction fetches.
    """

    def __init__(self, geometries: dict, latency: LatencyModel, bhb_history_bits: int):
        self.latency = latency
        self.caches: dict[str, CacheState] = {}
        for name in ("l1d", "l1i", "l2", "llc", "tlb", "btb"):
            if name in geometries:
                self.caches[name] = CacheState(geometries[name], latency.params(name), name)
        bhb = BhbState(bhb_history_bits)
        self.predictor = PredictorState(
            self.caches["btb"], bhb, latency.mispredict_cycles,
            bhb_flush_base=latency.params("bhb").flush_base_cycles)
        shared_tail = [self.caches[n] for n in ("l2", "llc") if n in self.caches]
        self.data_path = MemoryHierarchy([self.caches["l1d"]] + shared_tail, latency.memory_cycles)
        self.ifetch_path = MemoryHierarchy([self.caches["l1i"]] + shared_tail, latency.memory_cycles)

    def resource_ids(self) -> list[str]:
        ids = [n for n in ("l1d", "l1i", "l2", "llc", "tlb", "btb") if n in self.caches]
        return ids + ["bhb"]

    def cache(self, name: str) -> CacheState:
        return self.caches[name]

    def flush(self, name: str) -> int:
        if name == "bhb":
            return self.predictor.flush_bhb()
        return self.caches[name].flush()

    def flush_worst_case(self, name: str) -> int:
        """Upper bound on one flush: base cost plus every line dirty."""
        if name == "bhb":
            return self.predictor.bhb_flush_base
        cache = self.caches[name]
        return (cache.params.flush_base_cycles
                + cache.geometry.lines * cache.params.writeback_cycles_per_line)

    def data_access(self, domain: str, vaddr: int, paddr: int, write: bool = False) -> int:
        return self.data_path.access(domain, vaddr, paddr, "write" if write else "read")

    def worst_case_data_access(self) -> int:
        cost = sum(lvl.params.miss_cycles + lvl.params.writeback_cycles_per_line
                   for lvl in self.data_path.levels)
        return cost + self.latency.memory_cycles

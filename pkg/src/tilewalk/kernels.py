"""Transition kernels on tile graphs.

Two constructions are provided: the closed-form doubling-map family p_x on
the degree-2 circle graph, and base-window tables extended to all depths by
shift-equivariance.  Probabilities are exact rationals throughout; floating
point enters only at Monte Carlo sampling sites.

Both kernels expose transitions at arbitrary depth through closed forms, so
path sampling and Green-function dynamic programming are not limited by the
materialized graph truncation (the graph is needed only for metric
validation).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, TextIO

from .symbolic import (
    ROOT,
    CircleRealization,
    Word,
    parse_word,
    shift,
    tile_of,
    tiles_intersect,
)
from .tile_graph import TileGraph, bfs_distances

DEFAULT_DEPTH_LIMIT = 64


class KernelError(ValueError):
    pass


class LiftAmbiguityError(KernelError):
    """The shift does not map the local window bijectively; extension is
    ill-defined at the reported vertex."""


class LevelOverflowError(KernelError):
    """A transition beyond the kernel's depth limit was requested."""


@dataclass(frozen=True)
class DoublingSpec:
    """Builtin family p_x on the doubling-map graph, 0 < x < 1."""

    x: Fraction


@dataclass(frozen=True)
class TableSpec:
    """Base window of explicit transitions, extended by shift-equivariance.

    Entries list transitions (source, target, probability) for all sources
    of level <= base_level; targets may sit up to the kernel radius deeper.
    """

    base_level: int
    entries: tuple[tuple[Word, Word, Fraction], ...]


KernelSpec = DoublingSpec | TableSpec


def _check_rows(rows: dict[Word, list[tuple[Word, Fraction]]]):
    for u, out in rows.items():
        total = sum((p for _, p in out), Fraction(0))
        if total != 1:
            raise KernelError(f"outgoing probabilities at {u} sum to {total}, not 1")
        for w, p in out:
            if p < 0:
                raise KernelError(f"negative probability at {u} -> {w}")
            if w.level <= u.level:
                raise KernelError(f"transition {u} -> {w} does not increase level")


class DoublingKernel:
    """The family p_x: from the root, x-weighted choice between the two
    level-1 tiles; from the tile indexed i at level n, one step to the four
    level-(n+1) tiles indexed 2i-1 .. 2i+2 (mod 2^(n+1)), with weight x on
    the index congruent to 2 mod 4 and weight y = (1-x)/3 on the rest.
    """

    radius = 1
    base_level = 2

    def __init__(self, x: Fraction, graph: TileGraph | None = None,
                 depth_limit: int = DEFAULT_DEPTH_LIMIT):
        x = Fraction(x)
        if not 0 < x < 1:
            raise KernelError(f"x must lie in (0,1), got {x}")
        self.x = x
        self.y = (1 - x) / 3
        self.graph = graph
        self.realization = graph.realization if graph else CircleRealization(2)
        if self.realization.degree != 2:
            raise KernelError("doubling kernel needs a degree-2 realization")
        self.depth_limit = depth_limit

    # -- index-level closed forms -------------------------------------------

    def targets_index(self, i: int, n: int) -> list[tuple[int, Fraction]]:
        """Outgoing transitions of the level-n tile indexed i, as
        (target index at level n+1, probability)."""
        if n + 1 > self.depth_limit:
            raise LevelOverflowError(f"transition past depth limit {self.depth_limit}")
        if n == 0:
            return [(0, (2 - 2 * self.x) / 3), (1, (1 + 2 * self.x) / 3)]
        mod = 1 << (n + 1)
        out = []
        for j in (2 * i - 1, 2 * i, 2 * i + 1, 2 * i + 2):
            j %= mod
            out.append((j, self.x if j % 4 == 2 else self.y))
        return out

    def predecessors_index(self, j: int, m: int) -> list[int]:
        """Level-(m-1) tile indices with positive one-step probability to the
        level-m tile indexed j."""
        if m <= 0:
            return []
        if m == 1:
            return [0]          # the root
        half = 1 << (m - 1)
        if j % 2 == 0:
            ks = (j // 2 - 1, j // 2)
        else:
            ks = ((j - 1) // 2, (j + 1) // 2)
        return [k % half for k in ks]

    # -- word-level interface -----------------------------------------------

    def outgoing(self, u: Word) -> list[tuple[Word, Fraction]]:
        n = u.level
        return [(Word.from_index(j, n + 1, 2), p)
                for j, p in self.targets_index(u.index(2), n)]

    def predecessors(self, v: Word) -> list[Word]:
        m = v.level
        if m == 0:
            return []
        if m == 1:
            return [ROOT]
        return [Word.from_index(k, m - 1, 2)
                for k in self.predecessors_index(v.index(2), m)]

    def weight(self, u: Word, v: Word) -> Fraction:
        if v.level != u.level + 1:
            return Fraction(0)
        for w, p in self.outgoing(u):
            if w == v:
                return p
        return Fraction(0)

    def __repr__(self):
        return f"DoublingKernel(x={self.x})"


class EquivariantTableKernel:
    """Kernel defined by an explicit base window and extended above it by
    shift-equivariance: for |u| > N0, the outgoing law of u is the unique
    lift of the outgoing law of sigma^(|u|-N0) u into the tiles near u.
    """

    def __init__(self, spec: TableSpec, graph: TileGraph | None = None,
                 realization: CircleRealization | None = None,
                 depth_limit: int = DEFAULT_DEPTH_LIMIT):
        if graph is None and realization is None:
            raise KernelError("need a graph or a realization")
        self.graph = graph
        self.realization = realization or graph.realization
        self.base_level = spec.base_level
        self.depth_limit = depth_limit
        self.spec = spec

        window: dict[Word, list[tuple[Word, Fraction]]] = {}
        for u, v, p in spec.entries:
            if u.level > spec.base_level:
                raise KernelError(f"window source {u} above base level {spec.base_level}")
            window.setdefault(u, []).append((v, p))
        _check_rows(window)
        d = self.realization.degree
        for n in range(spec.base_level + 1):
            for i in range(d**n if n else 1):
                u = Word.from_index(i, n, d)
                if u not in window:
                    raise KernelError(f"base window has no row for {u}")
        self.window = {u: tuple(out) for u, out in window.items()}
        self.radius = max(v.level - u.level for u, v, _ in spec.entries)
        # farthest a window target sits from its source, in units of the
        # source tile width; rules the lift search band
        self.reach = max(
            (tile_of(self.realization, v).distance(tile_of(self.realization, u))
             * d ** u.level
             for u, v, _ in spec.entries if not u.is_root()),
            default=Fraction(0))
        self._check_window_equivariance()
        self._cache: dict[Word, tuple[tuple[Word, Fraction], ...]] = {}

    def _check_window_equivariance(self):
        """The extension is only well-defined if the window itself already
        commutes with the shift (away from the root's preimages)."""
        for u in self.window:
            if u.level < 2:
                continue
            pushed: dict[Word, Fraction] = {}
            for w, p in self.window[u]:
                pushed[shift(w)] = pushed.get(shift(w), Fraction(0)) + p
            base = {w: p for w, p in self.window[shift(u)]}
            if pushed != base:
                raise KernelError(
                    f"base window violates shift-equivariance at {u}: "
                    f"pushforward {pushed} != row {base}")

    def _lift(self, u: Word, w_prime: Word) -> Word:
        """Unique w with sigma^(|u|-N0) w = w_prime and A_w within the
        window's reach of A_u."""
        d = self.realization.degree
        k = u.level - self.base_level
        m = w_prime.level + k
        band = self.reach * Fraction(d) ** (-u.level)
        tile_u = tile_of(self.realization, u)
        block = d ** w_prime.level
        # candidate indices are j' + t*d^|w'|; only t near u's scaled index
        # can fall inside the band
        t0 = (u.index(d) * d ** (m - u.level)) // block
        matches = []
        for t in (t0 - 1, t0, t0 + 1):
            j = (w_prime.index(d) + (t % d**k) * block) % d**m
            w = Word.from_index(j, m, d)
            if tile_of(self.realization, w).distance(tile_u) <= band:
                if w not in matches:
                    matches.append(w)
        if len(matches) != 1:
            raise LiftAmbiguityError(
                f"lift of {w_prime} over {u} is not unique: {matches}")
        return matches[0]

    def outgoing(self, u: Word) -> tuple[tuple[Word, Fraction], ...]:
        if u.level + 1 > self.depth_limit:
            raise LevelOverflowError(f"transition past depth limit {self.depth_limit}")
        if u.level <= self.base_level:
            return self.window[u]
        cached = self._cache.get(u)
        if cached is None:
            base = u
            for _ in range(u.level - self.base_level):
                base = shift(base)
            cached = tuple((self._lift(u, w), p) for w, p in self.window[base])
            self._cache[u] = cached
        return cached

    def predecessors(self, v: Word) -> list[Word]:
        m = v.level
        if m == 0:
            return []
        d = self.realization.degree
        result = []
        for back in range(1, self.radius + 1):
            n = m - back
            if n < 0:
                break
            if n == 0:
                if any(w == v for w, p in self.outgoing(ROOT) if p > 0):
                    result.append(ROOT)
                continue
            center = v.index(d) // d ** (m - n)
            span = int(self.reach) + 2
            for i in range(center - span, center + span + 1):
                u = Word.from_index(i, n, d)
                if any(w == v and p > 0 for w, p in self.outgoing(u)):
                    result.append(u)
        return result

    def weight(self, u: Word, v: Word) -> Fraction:
        for w, p in self.outgoing(u):
            if w == v:
                return p
        return Fraction(0)

    def __repr__(self):
        return (f"EquivariantTableKernel(base_level={self.base_level}, "
                f"radius={self.radius})")


Kernel = DoublingKernel | EquivariantTableKernel


def doubling_kernel(x: Fraction, graph: TileGraph | None = None,
                    depth_limit: int = DEFAULT_DEPTH_LIMIT) -> DoublingKernel:
    """The p_x kernel; see DoublingKernel."""
    return DoublingKernel(Fraction(x), graph, depth_limit)


def extend_by_equivariance(spec: TableSpec, graph: TileGraph | None = None,
                           realization: CircleRealization | None = None,
                           depth_limit: int = DEFAULT_DEPTH_LIMIT) -> EquivariantTableKernel:
    """Extend a base-window table to all depths by shift-equivariance."""
    return EquivariantTableKernel(spec, graph, realization, depth_limit)


def doubling_table_spec(x: Fraction, base_level: int = 2) -> TableSpec:
    """The doubling family restricted to sources of level <= base_level."""
    kernel = DoublingKernel(Fraction(x))
    entries = []
    for n in range(base_level + 1):
        for i in range(2**n if n else 1):
            u = Word.from_index(i, n, 2)
            entries.extend((u, w, p) for w, p in kernel.outgoing(u))
    return TableSpec(base_level, tuple(entries))


# -- validation ---------------------------------------------------------------


@dataclass
class AssumptionResult:
    ok: bool
    witness: str = ""


@dataclass
class ValidationReport:
    """Per-assumption verdicts for the locality/level/coverage/equivariance
    requirements, with witnesses for failures."""

    row_sums: AssumptionResult
    bounded_range: AssumptionResult      # (A)
    level_increase: AssumptionResult     # (B)
    coverage: AssumptionResult           # (C)
    equivariance: AssumptionResult       # (D), checked for |u| > base level
    minimal_radius: int | None
    equivariant_from_level: int | None   # finest level down to which (D) holds
    checked_levels: int
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.ok for r in (self.row_sums, self.bounded_range,
                                  self.level_increase, self.coverage,
                                  self.equivariance))


def validate_assumptions(kernel: Kernel, graph: TileGraph | None = None) -> ValidationReport:
    """Scan the kernel over the materialized graph and certify the walk
    assumptions: bounded step range, strict level increase, full coverage of
    touching children, and shift-equivariance above the base window.

    Vertices whose shift-image is the root are exempt from the equivariance
    check (the root's outgoing law is unconstrained); the report records the
    finest level from which equivariance actually holds.
    """
    graph = graph or kernel.graph
    if graph is None:
        raise KernelError("validation needs a materialized graph")
    realization = graph.realization
    top = graph.max_level - 1
    if top < kernel.base_level + 1:
        raise KernelError("graph too shallow: need max_level >= base_level + 2")

    row_sums = AssumptionResult(True)
    level_inc = AssumptionResult(True)
    coverage = AssumptionResult(True)
    bounded = AssumptionResult(True)
    minimal_radius = 0

    for level in range(top + 1):
        for u in graph.levels[level]:
            out = kernel.outgoing(u)
            total = sum((p for _, p in out), Fraction(0))
            if total != 1 and row_sums.ok:
                row_sums = AssumptionResult(False, f"row sum {total} at {u}")
            dists = bfs_distances(graph, u)
            supported = set()
            for w, p in out:
                if p <= 0:
                    continue
                supported.add(w)
                if w.level <= u.level and level_inc.ok:
                    level_inc = AssumptionResult(False, f"{u} -> {w}")
                if w in dists:
                    minimal_radius = max(minimal_radius, dists[w])
                elif bounded.ok and w.level > graph.max_level:
                    pass        # beyond truncation; still a level-(+R) jump
            if level + 1 <= graph.max_level:
                for v in graph.levels[level + 1]:
                    if tiles_intersect(realization, u, v) and v not in supported:
                        if coverage.ok:
                            coverage = AssumptionResult(False, f"missing {u} -> {v}")

    def equivariant_at(u: Word) -> bool:
        pushed: dict[Word, Fraction] = {}
        for w, p in kernel.outgoing(u):
            sw = shift(w)
            pushed[sw] = pushed.get(sw, Fraction(0)) + p
        base = {w: p for w, p in kernel.outgoing(shift(u)) if p > 0}
        pushed = {w: p for w, p in pushed.items() if p > 0}
        return pushed == base

    equiv = AssumptionResult(True)
    for level in range(kernel.base_level + 1, top + 1):
        for u in graph.levels[level]:
            if not equivariant_at(u):
                equiv = AssumptionResult(False, f"shift-equivariance fails at {u}")
                break
        if not equiv.ok:
            break

    # informational: scan downwards to the finest level where (D) holds
    equivariant_from: int | None = None
    for level in range(2, top + 1):
        if all(equivariant_at(u) for u in graph.levels[level]):
            equivariant_from = level
            break

    notes = []
    if equivariant_from is not None and equivariant_from > 2:
        notes.append(f"equivariance only holds from level {equivariant_from}")
    if equivariant_from == 2:
        level1 = [u for u in graph.levels[1]]
        if not all(equivariant_at(u) for u in level1):
            notes.append("level-1 vertices are not equivariant over the root "
                         "(root law unconstrained; exempted)")

    return ValidationReport(
        row_sums=row_sums,
        bounded_range=bounded,
        level_increase=level_inc,
        coverage=coverage,
        equivariance=equiv,
        minimal_radius=minimal_radius if bounded.ok else None,
        equivariant_from_level=equivariant_from,
        checked_levels=top,
        notes=notes,
    )


# -- table text format --------------------------------------------------------


def save_table_spec(spec: TableSpec, out: TextIO):
    out.write("# tilewalk kernel table\n")
    out.write(f"base_level = {spec.base_level}\n")
    rows = sorted(spec.entries,
                  key=lambda e: (e[0].level, str(e[0]), e[1].level, str(e[1])))
    for u, v, p in rows:
        out.write(f"{u}\t{v}\t{p.numerator}/{p.denominator}\n")


def load_table_spec(lines: Iterable[str]) -> TableSpec:
    base_level = None
    entries = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("base_level"):
            _, _, value = line.partition("=")
            base_level = int(value.strip())
            continue
        parts = line.split()
        if len(parts) != 3:
            raise KernelError(f"line {lineno}: expected 'source target p/q'")
        u, v = parse_word(parts[0]), parse_word(parts[1])
        num, _, den = parts[2].partition("/")
        p = Fraction(int(num), int(den) if den else 1)
        entries.append((u, v, p))
    if base_level is None:
        raise KernelError("missing base_level line")
    return TableSpec(base_level, tuple(entries))

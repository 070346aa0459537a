"""Monte Carlo path sampling, drift and Green-drift estimation, empirical
harmonic measures, fractal dimension estimation, and exact path-space
invariance checks.

Sampling draws floating-point uniforms from counter-based per-path streams
(derived from the scenario seed and the path index), so results are
bit-reproducible regardless of worker count.  Everything downstream of the
sampled indices that feeds an exact identity -- hitting probabilities,
cylinder weights, pushforward bin maps -- stays in integer or rational
arithmetic; logarithms and bin masses are the only floating-point outputs.
"""

from __future__ import annotations

import hashlib
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .green_martin import green_table, hitting_vector
from .kernels import DoublingKernel, EquivariantTableKernel, Kernel, LevelOverflowError
from .symbolic import ROOT, Word, shift


def _log_int(n: int) -> float:
    try:
        return math.log(n)
    except OverflowError:
        b = n.bit_length() - 64
        return math.log(n >> b) + b * math.log(2)


def frac_log(fr: Fraction) -> float:
    """log of a positive rational, safe for huge numerators/denominators."""
    if fr <= 0:
        raise ValueError("log of non-positive rational")
    return _log_int(fr.numerator) - _log_int(fr.denominator)


# -- path samples --------------------------------------------------------------


@dataclass(frozen=True)
class PathSample:
    """One sampled trajectory Z_0 = o, Z_1, ..., Z_n.

    Positions are stored as (tile index, level) per step; words are
    materialized on demand.
    """

    path_index: int
    stream_seed: int
    degree: int
    indices: tuple[int, ...]
    levels: tuple[int, ...]

    @property
    def n_steps(self) -> int:
        return len(self.indices)

    @property
    def final_level(self) -> int:
        return self.levels[-1]

    @property
    def final_index(self) -> int:
        return self.indices[-1]

    def word(self, step: int) -> Word:
        if step == 0:
            return ROOT
        return Word.from_index(self.indices[step - 1], self.levels[step - 1],
                               self.degree)

    @property
    def steps(self) -> tuple[Word, ...]:
        return tuple(self.word(s) for s in range(self.n_steps + 1))

    @property
    def final_word(self) -> Word:
        return self.word(self.n_steps)

    def final_midpoint(self) -> Fraction:
        d = Fraction(self.degree)
        return (Fraction(2 * self.final_index + 1) / (2 * d**self.final_level)) % 1


def _stream_seed(seed: int, path_index: int) -> int:
    digest = hashlib.sha256(f"tilewalk:{seed}:{path_index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _sample_one_doubling(x: Fraction, n_steps: int, rng: random.Random) -> tuple[int, ...]:
    fy = float((1 - x) / 3)
    fx = float(x)
    p_zero = float((2 - 2 * x) / 3)
    i = 0 if rng.random() < p_zero else 1
    out = [i]
    for n in range(1, n_steps):
        r = rng.random()
        if i % 2 == 0:
            # weight x sits on 2i+2 (slot 3)
            if r < fy:
                j = 2 * i - 1
            elif r < 2 * fy:
                j = 2 * i
            elif r < 3 * fy:
                j = 2 * i + 1
            else:
                j = 2 * i + 2
        else:
            # weight x sits on 2i (slot 1)
            if r < fy:
                j = 2 * i - 1
            elif r < fy + fx:
                j = 2 * i
            elif r < 2 * fy + fx:
                j = 2 * i + 1
            else:
                j = 2 * i + 2
        i = j % (1 << (n + 1))
        out.append(i)
    return tuple(out)


def _sample_one_generic(kernel: Kernel, n_steps: int, rng: random.Random):
    d = kernel.realization.degree
    u = ROOT
    indices, levels = [], []
    for _ in range(n_steps):
        out = kernel.outgoing(u)
        r = rng.random()
        acc = 0.0
        chosen = out[-1][0]
        for w, p in out:
            acc += float(p)
            if r < acc:
                chosen = w
                break
        u = chosen
        indices.append(u.index(d))
        levels.append(u.level)
    return tuple(indices), tuple(levels)


def _light_kernel(kernel: Kernel) -> Kernel:
    # workers re-instantiate without the materialized graph
    if isinstance(kernel, DoublingKernel):
        return DoublingKernel(kernel.x, None, kernel.depth_limit)
    return EquivariantTableKernel(kernel.spec, None, kernel.realization,
                                  kernel.depth_limit)


def _sample_chunk(kernel: Kernel, start: int, stop: int, n_steps: int,
                  seed: int) -> list[tuple[int, int, tuple[int, ...], tuple[int, ...]]]:
    rows = []
    doubling = isinstance(kernel, DoublingKernel)
    for idx in range(start, stop):
        s = _stream_seed(seed, idx)
        rng = random.Random(s)
        if doubling:
            indices = _sample_one_doubling(kernel.x, n_steps, rng)
            levels = tuple(range(1, n_steps + 1))
        else:
            indices, levels = _sample_one_generic(kernel, n_steps, rng)
        rows.append((idx, s, indices, levels))
    return rows


def sample_paths(kernel: Kernel, n_paths: int, n_steps: int, seed: int,
                 workers: int = 1) -> list[PathSample]:
    """Draw independent level-increasing paths from the root.

    Bit-reproducible for fixed (seed, n_paths, n_steps) no matter how many
    workers split the index range.
    """
    if n_steps * kernel.radius > kernel.depth_limit:
        raise LevelOverflowError(
            f"{n_steps} steps of radius {kernel.radius} exceed depth limit "
            f"{kernel.depth_limit}")
    d = kernel.realization.degree
    if workers <= 1 or n_paths < 512:
        rows = _sample_chunk(kernel, 0, n_paths, n_steps, seed)
    else:
        light = _light_kernel(kernel)
        chunk = (n_paths + workers - 1) // workers
        spans = [(i, min(i + chunk, n_paths)) for i in range(0, n_paths, chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sample_chunk, light, a, b, n_steps, seed)
                       for a, b in spans]
            rows = [row for f in futures for row in f.result()]
        rows.sort(key=lambda r: r[0])
    return [PathSample(idx, s, d, indices, levels)
            for idx, s, indices, levels in rows]


# -- drift ----------------------------------------------------------------------


@dataclass
class DriftReport:
    """Level drift (exact) and Green drift (Monte Carlo estimate)."""

    l: Fraction
    l_G_estimate: float
    l_G_stderr: float
    n_paths: int
    n_steps: int
    g_over_n: np.ndarray = field(repr=False, default=None)


def drift_exact(kernel: Kernel) -> Fraction:
    """E|Z_1| = sum_w P(o,w) |w|; the level increments away from the root are
    i.i.d. copies by equivariance, so this is the almost-sure level drift."""
    return sum((p * w.level for w, p in kernel.outgoing(ROOT)), Fraction(0))


def _root_hitting_scaled(x: Fraction, i: int, n: int) -> tuple[int, int]:
    """F(o, u_{i,n}) for the doubling kernel as (num, q) with F = num/q**n.

    Integer-weight backward DP over the ancestor cone; exact and gcd-free.
    """
    px, qx = x.numerator, x.denominator
    q = 3 * qx
    wx = 3 * px
    wy = qx - px
    band = {i % (1 << n): 1}
    for m in range(n, 1, -1):
        mod = 1 << (m - 1)
        nxt: dict[int, int] = {}
        for j, val in band.items():
            contrib = (wx if j % 4 == 2 else wy) * val
            if j % 2 == 0:
                ks = (j // 2 - 1, j // 2)
            else:
                ks = ((j - 1) // 2, (j + 1) // 2)
            for k in ks:
                k %= mod
                nxt[k] = nxt.get(k, 0) + contrib
        band = nxt
    w_root = (2 * qx - 2 * px, qx + 2 * px)
    total = sum(w_root[j] * val for j, val in band.items())
    return total, q


def root_hitting_probability(kernel: Kernel, target: Word) -> Fraction:
    """F(o, target), via the scaled integer DP for the doubling family."""
    if isinstance(kernel, DoublingKernel):
        num, q = _root_hitting_scaled(kernel.x, target.index(2), target.level)
        return Fraction(num, q**target.level)
    return hitting_vector(kernel, target).get(ROOT, Fraction(0))


def green_drift_estimate(kernel: Kernel, samples: list[PathSample],
                         green_o=None, keep_values: bool = False) -> DriftReport:
    """Monte Carlo Green drift: mean over paths of -log F(o, Z_n) / n.

    F values are exact rationals (per-path backward DP, or looked up in a
    precomputed root table when one covering the sampled depth is passed);
    only the final logarithm is floating point.  The reported stderr is the
    across-path spread at fixed n, not a rigorous bound for the n -> oo
    limit.
    """
    if not samples:
        raise ValueError("no samples")
    n = samples[0].n_steps
    doubling = isinstance(kernel, DoublingKernel)
    gs = np.empty(len(samples))
    values: list[Fraction] | None = [] if keep_values else None
    for pos, sample in enumerate(samples):
        w = sample.final_word
        if green_o is not None and w.level <= green_o.max_level:
            f = green_o.value(w)
            g = -frac_log(f)
        elif doubling:
            num, q = _root_hitting_scaled(kernel.x, sample.final_index,
                                          sample.final_level)
            if num == 0:
                raise AssertionError(f"sampled path has F(o, Z_n) = 0 at {w}")
            g = sample.final_level * _log_int(q) - _log_int(num)
            f = Fraction(num, q**sample.final_level) if keep_values else None
        else:
            f = hitting_vector(kernel, w).get(ROOT, Fraction(0))
            if f == 0:
                raise AssertionError(f"sampled path has F(o, Z_n) = 0 at {w}")
            g = -frac_log(f)
        gs[pos] = g / sample.n_steps
        if keep_values:
            values.append(f)
    est = float(np.mean(gs))
    stderr = float(np.std(gs, ddof=1) / math.sqrt(len(gs))) if len(gs) > 1 else 0.0
    report = DriftReport(drift_exact(kernel), est, stderr, len(samples), n, gs)
    if keep_values:
        report.hit_values = values
    return report


def exact_green_drift_curve(kernel: Kernel, n_max: int) -> list[float]:
    """E(g_n) = -sum_v F(o,v) log F(o,v) over level-n vertices, n = 1..n_max,
    from the exact root table.  Full-level DP: test scales only."""
    table = green_table(kernel, ROOT, n_max)
    acc = [0.0] * (n_max + 1)
    for w, fr in table.values.items():
        if w.level >= 1:
            acc[w.level] += float(fr) * (-frac_log(fr))
    return acc[1:]


def check_path_subadditivity(kernel: Kernel, sample: PathSample, cut: int) -> bool:
    """Exact pathwise check F(o, Z_n) >= F(o, Z_cut) F(Z_cut, Z_n)."""
    if not 0 < cut < sample.n_steps:
        raise ValueError("cut must be interior")
    z_cut = sample.word(cut)
    z_n = sample.final_word
    vec = hitting_vector(kernel, z_n)
    f_on = vec.get(ROOT, Fraction(0))
    f_cn = vec.get(z_cut, Fraction(0))
    f_oc = root_hitting_probability(kernel, z_cut)
    return f_on >= f_oc * f_cn


# -- empirical harmonic measure -------------------------------------------------


class InsufficientDepthError(ValueError):
    pass


@dataclass
class EmpiricalMeasure:
    """Escape distribution binned over the d**m level-m tiles of the circle,
    with the walk's limit point approximated by the final tile midpoint."""

    bin_level: int
    degree: int
    masses: np.ndarray
    sample_count: int

    @property
    def n_bins(self) -> int:
        return len(self.masses)

    @property
    def degenerate(self) -> bool:
        return int(np.count_nonzero(self.masses)) <= 1


def empirical_harmonic_measure(samples: list[PathSample], bin_level: int,
                               margin: int = 10) -> EmpiricalMeasure:
    """Bin the final-tile midpoints at the d-adic resolution ``bin_level``.

    Requires the sampled depth to exceed the bin level by ``margin`` so the
    bin assignment is insensitive to the midpoint proxy (tile diameters
    shrink like d**-n).
    """
    if not samples:
        raise ValueError("no samples")
    d = samples[0].degree
    n_bins = d**bin_level
    counts = np.zeros(n_bins, dtype=np.int64)
    for s in samples:
        if s.final_level < bin_level + margin:
            raise InsufficientDepthError(
                f"need n_steps >= bin_level + {margin}, got depth {s.final_level}")
        # midpoint (2i+1)/(2 d^n) lands in bin ((2i+1) d^m) // (2 d^n)
        b = ((2 * s.final_index + 1) * n_bins) // (2 * d**s.final_level)
        counts[b % n_bins] += 1
    return EmpiricalMeasure(bin_level, d, counts / len(samples), len(samples))


# -- dimension ------------------------------------------------------------------


@dataclass
class DimensionReport:
    """Local dimension estimates at measure-sampled points and the packing
    surrogate (upper-quantile aggregate) against the drift formula value.

    The packing estimate is projected into [0, 1]: the phase space is
    one-dimensional, so quantile overshoot is sampling noise.  The raw
    unprojected slopes stay available in ``local_dims``.
    """

    local_dims: np.ndarray
    packing_estimate: float
    formula_value: float
    n_points: int
    radius_exponents: tuple[int, int]


def _ball_mass(cum: np.ndarray, masses: np.ndarray, center: float, r: float) -> float:
    """Mass of the arc [center-r, center+r] under the binned measure, with
    linear interpolation inside boundary bins."""
    n = len(masses)

    def cdf(t: float) -> float:
        # mass of [0, t] for t in [0, 1]
        k = min(int(t * n), n - 1)
        frac = t * n - k
        return float(cum[k]) + float(masses[k]) * frac

    lo, hi = center - r, center + r
    if hi - lo >= 1:
        return 1.0
    lo_m, hi_m = lo % 1, hi % 1
    if lo_m < hi_m:
        return cdf(hi_m) - cdf(lo_m)
    return (1.0 - cdf(lo_m)) + cdf(hi_m)


def _upper_envelope(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Upper concave envelope (hull upper chain) of points sorted by x."""
    pts = sorted(points)
    env: list[tuple[float, float]] = []
    for p in pts:
        while len(env) >= 2:
            (x1, y1), (x2, y2) = env[-2], env[-1]
            if (x2 - x1) * (p[1] - y1) - (p[0] - x1) * (y2 - y1) >= 0:
                env.pop()
            else:
                break
        env.append(p)
    return env


def dimension_report(measure: EmpiricalMeasure, drift: DriftReport, a: float,
                     n_points: int = 2000, seed: int = 0) -> DimensionReport:
    """Estimate local dimensions lim log nu(B(xi,r)) / log r on the dyadic
    radius grid r = d**-j, j = 2..m-2, at points sampled from the measure.

    Each local slope is a least-squares fit over the upper concave envelope
    of the (log r, log nu) points (an upper-limit surrogate); the packing
    estimate is the 90th percentile of the local slopes.  The formula value
    l_G / (a l) is reported alongside for comparison.
    """
    m = measure.bin_level
    d = measure.degree
    if m < 5:
        raise ValueError("bin level too coarse for a radius grid")
    masses = measure.masses
    cum = np.concatenate([[0.0], np.cumsum(masses)])
    rng = random.Random(seed)
    bins = rng.choices(range(measure.n_bins), weights=masses, k=n_points)
    j_lo, j_hi = 2, m - 2
    dims = []
    for b in bins:
        xi = (b + 0.5) / measure.n_bins
        pts = []
        for j in range(j_lo, j_hi + 1):
            r = d ** float(-j)
            nu = _ball_mass(cum, masses, xi, r)
            if nu <= 0:
                continue
            pts.append((-j * math.log(d), math.log(nu)))
        if len(pts) < 2:
            continue
        env = _upper_envelope(pts)
        xs = np.array([p[0] for p in env])
        ys = np.array([p[1] for p in env])
        if len(env) == 2:
            slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
        else:
            slope = np.polyfit(xs, ys, 1)[0]
        dims.append(float(slope))
    local = np.array(dims)
    packing = min(max(float(np.percentile(local, 90)), 0.0), 1.0)
    formula = drift.l_G_estimate / (a * float(drift.l))
    return DimensionReport(local, packing, formula, len(local), (j_lo, j_hi))


# -- path-space invariance -------------------------------------------------------


@dataclass
class CylinderRow:
    words: tuple[Word, ...]
    k: int
    lhs: Fraction        # P(T^-k [cylinder])
    rhs: Fraction        # product of transition weights
    equal: bool


@dataclass
class MixingRow:
    first: tuple[Word, ...]
    second: tuple[Word, ...]
    k: int
    lhs: Fraction        # P(first  intersect  T^-k second)
    rhs: Fraction        # P(first) P(second)
    equal: bool


@dataclass
class CylinderInvarianceReport:
    rows: list[CylinderRow]
    mixing_rows: list[MixingRow]

    @property
    def all_equal(self) -> bool:
        return all(r.equal for r in self.rows) and all(r.equal for r in self.mixing_rows)

    def violations(self) -> list[CylinderRow]:
        return [r for r in self.rows if not r.equal]


def _step_distributions(kernel: Kernel, n_steps: int) -> list[dict[Word, Fraction]]:
    dists = [{ROOT: Fraction(1)}]
    for _ in range(n_steps):
        cur = dists[-1]
        nxt: dict[Word, Fraction] = {}
        for u, pu in cur.items():
            for w, p in kernel.outgoing(u):
                if p:
                    nxt[w] = nxt.get(w, Fraction(0)) + pu * p
        dists.append(nxt)
    return dists


def _shift_power(w: Word, t: int) -> Word:
    if t >= w.level:
        return ROOT
    return Word(w.symbols[t:])


def _lifted_chain_mass(kernel: Kernel, z: Word, vs: tuple[Word, ...]) -> Fraction:
    """Sum over continuations w_1..w_m from z with shift^|z| w_i = v_i of the
    product of transition probabilities."""
    t = z.level
    cur = {z: Fraction(1)}
    for v in vs:
        nxt: dict[Word, Fraction] = {}
        for u, pu in cur.items():
            for w, p in kernel.outgoing(u):
                if p and w.level == t + v.level and _shift_power(w, t) == v:
                    nxt[w] = nxt.get(w, Fraction(0)) + pu * p
        cur = nxt
        if not cur:
            return Fraction(0)
    return sum(cur.values(), Fraction(0))


def _support_cylinders(kernel: Kernel, max_m: int) -> list[tuple[Word, ...]]:
    chains: list[tuple[Word, ...]] = []
    frontier: list[tuple[Word, ...]] = [(ROOT,)]
    for _ in range(max_m):
        nxt = []
        for chain in frontier:
            for w, p in kernel.outgoing(chain[-1]):
                if p:
                    nxt.append(chain + (w,))
        chains.extend(nxt)
        frontier = nxt
    return chains


def cylinder_invariance_check(kernel: Kernel, max_m: int, max_k: int) -> CylinderInvarianceReport:
    """Exact check of the path-space shift invariance identity
    P(T^-k [v_0..v_m]) = prod P(v_i, v_{i+1}) for all kernel-support
    cylinders with m <= max_m and k <= max_k, by summation over all level-k
    prefixes and all lifted continuations.

    Also checks the mixing factorization P(C intersect T^-k C') =
    P(C) P(C') for support-cylinder pairs once k exceeds the depth of the
    first cylinder.  Failures are reported with the witness cylinder, not
    raised.
    """
    cylinders = _support_cylinders(kernel, max_m)
    dists = _step_distributions(kernel, max_k)
    rows: list[CylinderRow] = []
    for cyl in cylinders:
        rhs = Fraction(1)
        for u, v in zip(cyl, cyl[1:]):
            rhs *= kernel.weight(u, v)
        for k in range(0, max_k + 1):
            if k == 0:
                lhs = rhs
            else:
                lhs = sum((pz * _lifted_chain_mass(kernel, z, cyl[1:])
                           for z, pz in dists[k].items()), Fraction(0))
            rows.append(CylinderRow(cyl, k, lhs, rhs, lhs == rhs))

    mixing_rows: list[MixingRow] = []
    short = [c for c in cylinders if len(c) - 1 <= max(1, max_m - 1)]
    for first in short:
        m_first = len(first) - 1
        p_first = Fraction(1)
        for u, v in zip(first, first[1:]):
            p_first *= kernel.weight(u, v)
        for second in short:
            p_second = Fraction(1)
            for u, v in zip(second, second[1:]):
                p_second *= kernel.weight(u, v)
            for k in range(m_first + 1, max_k + 1):
                # evolve the first cylinder's endpoint distribution to step k
                cur = {first[-1]: p_first}
                for _ in range(k - m_first):
                    nxt: dict[Word, Fraction] = {}
                    for u, pu in cur.items():
                        for w, p in kernel.outgoing(u):
                            if p:
                                nxt[w] = nxt.get(w, Fraction(0)) + pu * p
                    cur = nxt
                lhs = sum((pz * _lifted_chain_mass(kernel, z, second[1:])
                           for z, pz in cur.items()), Fraction(0))
                mixing_rows.append(MixingRow(first, second, k, lhs,
                                             p_first * p_second,
                                             lhs == p_first * p_second))
    return CylinderInvarianceReport(rows, mixing_rows)


# -- quasi-invariance -------------------------------------------------------------


@dataclass
class QuasiInvarianceReport:
    """Exact structural facts behind f_* nu = nu for the kernel, plus the
    empirical pushforward comparison of a binned measure."""

    level_one_mass: Fraction              # sum of P(o, w) over |w| = 1
    level_one_rows_identical: bool
    level_one_equivariant: bool
    exact_identity: bool
    tv_distance: float                    # binned measure vs its pushforward
    max_bin_ratio: float
    min_bin_ratio: float
    ratio_bound: float                    # (sum P(o,w), |w|=1)^-1
    empty_bins: int
    comparison_level: int


def quasi_invariance_check(measure: EmpiricalMeasure, kernel: Kernel) -> QuasiInvarianceReport:
    """Push the binned measure through x -> d x (mod 1) and compare.

    The pushforward of a level-m binning is exactly a level-(m-1) binning
    (bin i maps onto bin i mod d**(m-1)), so the comparison rebins the
    measure one level coarser; no within-bin assumption is made.

    The exact side: if all one-step mass from the root sits at level 1 and
    either the level-1 rows coincide or level-1 shift-equivariance holds,
    then f_* nu = nu exactly.
    """
    if measure.bin_level < 2:
        raise ValueError("bin level must be >= 2")
    d = kernel.realization.degree
    root_out = kernel.outgoing(ROOT)
    s1 = sum((p for w, p in root_out if w.level == 1), Fraction(0))

    level1 = [Word.from_index(i, 1, d) for i in range(d)]
    rows = [dict(kernel.outgoing(u)) for u in level1]
    rows_identical = all(r == rows[0] for r in rows[1:])

    def pushed(u: Word) -> dict[Word, Fraction]:
        acc: dict[Word, Fraction] = {}
        for w, p in kernel.outgoing(u):
            sw = shift(w)
            acc[sw] = acc.get(sw, Fraction(0)) + p
        return acc

    root_row = {w: p for w, p in root_out if p}
    level1_equivariant = all(pushed(u) == root_row for u in level1)
    exact = s1 == 1 and (rows_identical or level1_equivariant)

    m = measure.bin_level
    masses = measure.masses
    coarse = masses.reshape(d ** (m - 1), d).sum(axis=1)
    pushfwd = masses.reshape(d, d ** (m - 1)).sum(axis=0)
    tv = 0.5 * float(np.abs(pushfwd - coarse).sum())
    nonzero = coarse > 0
    ratios = pushfwd[nonzero] / coarse[nonzero]
    return QuasiInvarianceReport(
        level_one_mass=s1,
        level_one_rows_identical=rows_identical,
        level_one_equivariant=level1_equivariant,
        exact_identity=exact,
        tv_distance=tv,
        max_bin_ratio=float(ratios.max()) if ratios.size else math.nan,
        min_bin_ratio=float(ratios.min()) if ratios.size else math.nan,
        ratio_bound=float(1 / s1) if s1 else math.inf,
        empty_bins=int((~nonzero).sum()),
        comparison_level=m - 1,
    )

"""Offspring laws and branching-random-walk models on finite vertex windows.

A model couples a finite ordered vertex set with one offspring law per
vertex.  A law is either a finite list of weighted offspring configurations
(explicit atoms) or a factorized "product form": a child-count distribution
plus a dispersal row, with each child placed independently.  The factorized
representation is mandatory in practice: counterpart laws on large windows
(e.g. tree truncations) have combinatorially many atoms, while every
operation we need (means, generating function, restriction, projection,
sampling) has a closed factorized path.

Countable vertex spaces are always represented by explicit finite
truncations; builders apply the restriction (children sent outside the
window are deleted) so that a model is closed under its own dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csgraph, csr_matrix
from scipy.stats import binom

PROB_TOL = 1e-12

# Materializing atoms of a factorized law is only allowed below this count.
MAX_MATERIALIZED_ATOMS = 500_000


class ModelError(ValueError):
    """Invalid law, model or operation input."""


# ---------------------------------------------------------------------------
# offspring configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OffspringConfig:
    """Finitely supported map vertex -> child count (zero entries dropped)."""

    entries: tuple  # ((vertex, count), ...) sorted by vertex, count > 0

    @staticmethod
    def make(mapping) -> "OffspringConfig":
        items = []
        for v, c in dict(mapping).items():
            if c < 0 or int(c) != c:
                raise ModelError(f"negative or non-integer child count {c!r} at vertex {v!r}")
            if c > 0:
                items.append((int(v), int(c)))
        return OffspringConfig(tuple(sorted(items)))

    @property
    def total(self) -> int:
        return sum(c for _, c in self.entries)

    @property
    def support(self):
        return tuple(v for v, _ in self.entries)

    def count(self, vertex) -> int:
        for v, c in self.entries:
            if v == vertex:
                return c
        return 0

    def as_dict(self) -> dict:
        return dict(self.entries)

    def restrict(self, keep) -> "OffspringConfig":
        return OffspringConfig(tuple((v, c) for v, c in self.entries if v in keep))

    def relabel(self, g) -> "OffspringConfig":
        """Push the configuration through a vertex map, merging collisions."""
        out = {}
        for v, c in self.entries:
            w = g[v]
            out[w] = out.get(w, 0) + c
        return OffspringConfig.make(out)


EMPTY_CONFIG = OffspringConfig(())


# ---------------------------------------------------------------------------
# integer distributions (child-count laws)
# ---------------------------------------------------------------------------

class IntDistribution:
    """Finitely supported probability law on the nonnegative integers.

    Stored sparsely as (values, probs) so that laws with a handful of huge
    bursts (the forward-line constructions reach ~10^11 children per atom)
    stay O(#atoms); dense coefficient access is guarded.
    """

    def __init__(self, probs, normalize=False):
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ModelError("probabilities must be a nonempty 1-d array")
        self._init_sparse(np.arange(p.size, dtype=np.int64), p, normalize)

    def _init_sparse(self, values, probs, normalize):
        probs = np.asarray(probs, dtype=float)
        if np.any(probs < -PROB_TOL):
            raise ModelError("negative probability in integer distribution")
        probs = np.clip(probs, 0.0, None)
        s = probs.sum()
        if normalize:
            if s <= 0:
                raise ModelError("cannot normalize zero mass")
        elif abs(s - 1.0) > PROB_TOL:
            raise ModelError(f"probabilities sum to {s!r}, not 1 within {PROB_TOL}")
        probs = probs / s
        keep = probs > 0.0
        values, probs = np.asarray(values, dtype=np.int64)[keep], probs[keep]
        if values.size == 0:
            values, probs = np.array([0], dtype=np.int64), np.array([1.0])
        order = np.argsort(values)
        self.values = values[order]
        self.probs = probs[order]

    @staticmethod
    def from_values(values, probs, normalize=False) -> "IntDistribution":
        d = IntDistribution.__new__(IntDistribution)
        values = np.asarray(values, dtype=np.int64)
        if values.size and (np.any(values < 0) or len(np.unique(values)) != values.size):
            raise ModelError("values must be distinct nonnegative integers")
        d._init_sparse(values, probs, normalize)
        return d

    @staticmethod
    def from_dict(d) -> "IntDistribution":
        try:
            items = sorted((int(k), float(v)) for k, v in dict(d).items())
        except (TypeError, ValueError) as exc:
            raise ModelError(f"invalid count distribution: {exc}")
        return IntDistribution.from_values([k for k, _ in items], [v for _, v in items])

    @staticmethod
    def delta(n) -> "IntDistribution":
        return IntDistribution.from_values([int(n)], [1.0])

    @staticmethod
    def geometric(mean, tail_tol=PROB_TOL, cap=None) -> "IntDistribution":
        """Geometric law rho(i) = (m/(1+m))^i / (1+m), truncated and renormalized.

        The cap is chosen so the removed tail mass is below tail_tol; an
        explicit cap that leaves more mass than tail_tol is rejected.
        """
        m = float(mean)
        if m < 0:
            raise ModelError("geometric mean must be nonnegative")
        if m == 0:
            return IntDistribution.delta(0)
        r = m / (1.0 + m)
        needed = int(math.ceil(math.log(tail_tol) / math.log(r))) + 1
        if cap is None:
            cap = needed
        elif r ** cap > tail_tol:
            raise ModelError(f"cap {cap} leaves tail mass {r ** cap:.3e} > {tail_tol}")
        i = np.arange(cap + 1)
        p = (1.0 - r) * r ** i
        return IntDistribution(p, normalize=True)

    @property
    def support_max(self) -> int:
        return int(self.values[-1])

    @property
    def mean(self) -> float:
        return float(np.dot(self.values.astype(float), self.probs))

    @property
    def variance(self) -> float:
        m = self.mean
        return float(np.dot((self.values.astype(float) - m) ** 2, self.probs))

    def prob_of(self, n) -> float:
        i = np.searchsorted(self.values, int(n))
        if i < self.values.size and self.values[i] == int(n):
            return float(self.probs[i])
        return 0.0

    def as_dict(self) -> dict:
        return {int(v): float(p) for v, p in zip(self.values, self.probs)}

    def dense_probs(self, max_size=1_000_000) -> np.ndarray:
        """Coefficient array indexed by value; only for modest supports."""
        if self.support_max + 1 > max_size:
            raise ModelError(f"support up to {self.support_max} is too large to densify")
        out = np.zeros(self.support_max + 1)
        out[self.values] = self.probs
        return out

    def tail(self, n) -> float:
        """P(X >= n)."""
        i = np.searchsorted(self.values, int(n))
        return float(self.probs[i:].sum())

    def pgf(self, s):
        """Evaluate the probability generating function at s (scalar or array)."""
        s = np.asarray(s, dtype=float)
        with np.errstate(invalid="ignore"):
            terms = np.power(s[..., None], self.values.astype(float))
        # 0^0 = 1 by convention; numpy already honours it for power
        return np.dot(terms, self.probs) if s.ndim else float(np.dot(terms, self.probs))

    def thinned(self, keep_prob) -> "IntDistribution":
        """Law of a binomial thinning: each unit kept independently w.p. keep_prob."""
        s = float(keep_prob)
        if not (0.0 <= s <= 1.0 + PROB_TOL):
            raise ModelError("keep probability outside [0,1]")
        s = min(s, 1.0)
        if s == 1.0:
            return self
        if self.support_max > 100_000:
            raise ModelError("thinning a law with huge bursts is not supported")
        out = np.zeros(self.support_max + 1)
        for v, pv in zip(self.values, self.probs):
            out[: v + 1] += pv * binom.pmf(np.arange(v + 1), int(v), s)
        return IntDistribution(out, normalize=True)

    def allclose(self, other, tol=PROB_TOL) -> bool:
        union = np.union1d(self.values, other.values)
        for v in union:
            if abs(self.prob_of(v) - other.prob_of(v)) > tol:
                return False
        return True

    def __repr__(self):
        return f"IntDistribution(max={self.support_max}, mean={self.mean:.6g})"


# ---------------------------------------------------------------------------
# offspring laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProductForm:
    """Child total drawn from rho, each child placed independently by weight."""

    rho: IntDistribution
    targets: tuple
    weights: tuple

    def weight_at(self, vertex) -> float:
        for t, w in zip(self.targets, self.weights):
            if t == vertex:
                return w
        return 0.0


class OffspringLaw:
    """One vertex's reproduction law.

    Exactly one of (atoms, product) backs the instance.  The derived
    child-count law rho and the mean row are cached; ``atoms`` materializes
    the configuration list on demand (guarded for factorized laws).
    """

    __slots__ = ("_atoms", "product", "rho", "_mean_row")

    def __init__(self, atoms=None, product=None):
        if (atoms is None) == (product is None):
            raise ModelError("law needs exactly one of atoms / product form")
        self._atoms = tuple(atoms) if atoms is not None else None
        self.product = product
        self._mean_row = None
        if self._atoms is not None:
            totals = {}
            for cfg, p in self._atoms:
                totals[cfg.total] = totals.get(cfg.total, 0.0) + p
            self.rho = IntDistribution.from_dict(totals)
        else:
            self.rho = product.rho

    # -- derived quantities -------------------------------------------------

    @property
    def rho_bar(self) -> float:
        return self.rho.mean

    def mean_row(self) -> dict:
        """m_xy for this vertex: expected children sent to each target."""
        if self._mean_row is None:
            if self.product is not None:
                rb = self.rho.mean
                row = {t: rb * w for t, w in zip(self.product.targets, self.product.weights) if w > 0}
            else:
                row = {}
                for cfg, p in self._atoms:
                    for v, c in cfg.entries:
                        row[v] = row.get(v, 0.0) + p * c
            self._mean_row = row
        return self._mean_row

    @property
    def support(self):
        if self.product is not None:
            return tuple(t for t, w in zip(self.product.targets, self.product.weights) if w > 0)
        seen = set()
        for cfg, _ in self._atoms:
            seen.update(cfg.support)
        return tuple(sorted(seen))

    @property
    def atoms(self):
        """Explicit (config, probability) list; enumerates factorized laws."""
        if self._atoms is not None:
            return self._atoms
        return self._materialize()

    def _materialize(self):
        pf = self.product
        targets = [t for t, w in zip(pf.targets, pf.weights) if w > 0]
        weights = [w for w in pf.weights if w > 0]
        count = sum(math.comb(int(n) + len(targets) - 1, len(targets) - 1)
                    for n in pf.rho.values)
        if count > MAX_MATERIALIZED_ATOMS:
            raise ModelError(f"refusing to enumerate {count} atoms of a factorized law")
        atoms = []
        for n, pn in zip(pf.rho.values, pf.rho.probs):
            if pn == 0.0:
                continue
            for cfg, mult in _compositions(int(n), targets):
                prob = pn * mult
                for t, w in zip(targets, weights):
                    c = cfg.get(t, 0)
                    if c:
                        prob *= w ** c
                if prob > 0:
                    atoms.append((OffspringConfig.make(cfg), prob))
        return tuple(atoms)

    # -- transforms ----------------------------------------------------------

    def restrict(self, keep) -> "OffspringLaw":
        """Delete all children sent outside ``keep`` (marginal law)."""
        keep = set(keep)
        if self.product is not None:
            pf = self.product
            s = sum(w for t, w in zip(pf.targets, pf.weights) if t in keep)
            if s <= 0.0:
                return OffspringLaw(atoms=((EMPTY_CONFIG, 1.0),))
            kept = [(t, w / s) for t, w in zip(pf.targets, pf.weights) if t in keep and w > 0]
            return OffspringLaw(product=ProductForm(
                self.rho.thinned(s),
                tuple(t for t, _ in kept),
                tuple(w for _, w in kept)))
        merged = {}
        for cfg, p in self._atoms:
            r = cfg.restrict(keep)
            merged[r] = merged.get(r, 0.0) + p
        return OffspringLaw(atoms=tuple(merged.items()))

    def pushforward(self, g) -> "OffspringLaw":
        """Law of the projected configuration under vertex map g (a dict)."""
        if self.product is not None:
            pf = self.product
            row = {}
            for t, w in zip(pf.targets, pf.weights):
                u = g[t]
                row[u] = row.get(u, 0.0) + w
            items = sorted(row.items())
            return OffspringLaw(product=ProductForm(
                pf.rho, tuple(t for t, _ in items), tuple(w for _, w in items)))
        merged = {}
        for cfg, p in self._atoms:
            r = cfg.relabel(g)
            merged[r] = merged.get(r, 0.0) + p
        return OffspringLaw(atoms=tuple(merged.items()))

    def prob_single_child_in(self, subset) -> float:
        """P(exactly one child lands inside ``subset``)."""
        subset = set(subset)
        if self.product is not None:
            pf = self.product
            s = sum(w for t, w in zip(pf.targets, pf.weights) if t in subset)
            n = pf.rho.values.astype(float)
            with np.errstate(invalid="ignore"):
                terms = n * s * (1.0 - s) ** np.maximum(n - 1.0, 0.0)
            terms[n == 0] = 0.0
            return float(np.dot(pf.rho.probs, terms))
        return sum(p for cfg, p in self._atoms
                   if sum(c for v, c in cfg.entries if v in subset) == 1)

    def pgf_at(self, z) -> float:
        """G(z | this vertex) for z given as a dict vertex -> value in [0,1]."""
        if self.product is not None:
            pf = self.product
            s = sum(w * z.get(t, 0.0) for t, w in zip(pf.targets, pf.weights))
            return float(pf.rho.pgf(s))
        total = 0.0
        for cfg, p in self._atoms:
            term = p
            for v, c in cfg.entries:
                zv = z.get(v, 0.0)
                term *= zv ** c if zv > 0.0 else (1.0 if c == 0 else 0.0)
            total += term
        return total

    def equal_within(self, other, tol=PROB_TOL) -> bool:
        """Total-variation equality test (factorized fast path when possible)."""
        if self.product is not None and other.product is not None:
            a, b = self.product, other.product
            if not a.rho.allclose(b.rho, tol):
                return False
            ta = {t: w for t, w in zip(a.targets, a.weights) if w > tol}
            tb = {t: w for t, w in zip(b.targets, b.weights) if w > tol}
            if set(ta) != set(tb):
                return False
            return all(abs(ta[t] - tb[t]) <= tol for t in ta)
        da = {cfg: p for cfg, p in self.atoms}
        db = {cfg: p for cfg, p in other.atoms}
        tv = 0.0
        for cfg in set(da) | set(db):
            tv += abs(da.get(cfg, 0.0) - db.get(cfg, 0.0))
        return tv / 2.0 <= tol

    def __repr__(self):
        kind = "product" if self.product is not None else f"{len(self._atoms)} atoms"
        return f"OffspringLaw({kind}, rho_bar={self.rho_bar:.6g})"


def _compositions(n, targets):
    """Yield (config dict, multinomial coefficient) over placements of n children."""
    k = len(targets)
    if n == 0:
        yield {}, 1.0
        return

    def rec(i, remaining, cfg):
        if i == k - 1:
            out = dict(cfg)
            if remaining:
                out[targets[i]] = remaining
            yield out
            return
        for c in range(remaining + 1):
            nxt = dict(cfg)
            if c:
                nxt[targets[i]] = c
            yield from rec(i + 1, remaining - c, nxt)

    fact_n = math.factorial(n)
    for cfg in rec(0, n, {}):
        denom = 1
        for c in cfg.values():
            denom *= math.factorial(c)
        yield cfg, fact_n / denom


# ---------------------------------------------------------------------------
# law constructors
# ---------------------------------------------------------------------------

def build_offspring_law(atoms) -> OffspringLaw:
    """Validate and build a law from (config-like, probability) pairs."""
    norm = []
    seen = set()
    total = 0.0
    for cfg, p in atoms:
        if not isinstance(cfg, OffspringConfig):
            cfg = OffspringConfig.make(cfg)
        if not (0.0 < p <= 1.0 + PROB_TOL):
            raise ModelError(f"atom probability {p!r} outside (0, 1]")
        if cfg in seen:
            raise ModelError(f"duplicate offspring configuration {cfg.entries}")
        seen.add(cfg)
        norm.append((cfg, float(p)))
        total += p
    if abs(total - 1.0) > PROB_TOL:
        raise ModelError(f"atom probabilities sum to {total!r}, not 1 within {PROB_TOL}")
    return OffspringLaw(atoms=tuple(norm))


def product_form_law(rho, dispersal_row) -> OffspringLaw:
    """Law with rho children placed independently by the dispersal row."""
    if isinstance(rho, dict):
        rho = IntDistribution.from_dict(rho)
    items = sorted((int(t), float(w)) for t, w in dict(dispersal_row).items() if w != 0.0)
    if any(w < 0 for _, w in items):
        raise ModelError("negative dispersal weight")
    s = sum(w for _, w in items)
    if abs(s - 1.0) > PROB_TOL:
        raise ModelError(f"dispersal row sums to {s!r}, not 1 within {PROB_TOL}")
    return OffspringLaw(product=ProductForm(
        rho, tuple(t for t, _ in items), tuple(w / s for _, w in items)))


def continuous_counterpart(lam, rates_row, tail_cap=None, tail_tol=PROB_TOL) -> OffspringLaw:
    """Generation law of a rate-driven process: geometric totals, rate-proportional dispersal.

    With total rate k = sum of the row, child totals follow
    rho(i) = (lam*k)^i / (1+lam*k)^{i+1} (truncated, renormalized) and each
    child lands on y with probability rate[y]/k, so mean offspring at y is
    lam * rate[y].
    """
    row = {int(t): float(w) for t, w in dict(rates_row).items() if w != 0.0}
    if any(w < 0 for w in row.values()):
        raise ModelError("negative rate")
    k = sum(row.values())
    if k <= 0:
        raise ModelError("total rate k(x) must be positive")
    rho = IntDistribution.geometric(lam * k, tail_tol=tail_tol, cap=tail_cap)
    return product_form_law(rho, {t: w / k for t, w in row.items()})


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

@dataclass
class BrwModel:
    """Finite truncation of a branching random walk: vertices + one law each.

    Treated as immutable after construction.  ``finite_projection``, when
    set by a scenario builder, records that the untruncated construction is
    locally isomorphic to the given finite model under the given vertex map;
    survival classification uses it to decide global behavior.
    """

    vertices: tuple
    laws: dict
    name: str = ""
    params: dict = field(default_factory=dict)
    finite_projection: "tuple | None" = None  # (BrwModel, {vertex: projected vertex})

    def __post_init__(self):
        self.vertices = tuple(self.vertices)
        vset = set(self.vertices)
        if len(vset) != len(self.vertices):
            raise ModelError("duplicate vertex ids")
        if set(self.laws) != vset:
            raise ModelError("laws must cover exactly the vertex list")
        for v, law in self.laws.items():
            stray = [u for u in law.support if u not in vset]
            if stray:
                raise ModelError(
                    f"law at {v!r} references vertices outside the model: {stray[:5]}"
                    " (apply the restriction first)")
        self.index = {v: i for i, v in enumerate(self.vertices)}
        self._cache = {}

    @property
    def size(self) -> int:
        return len(self.vertices)

    def law(self, vertex) -> OffspringLaw:
        return self.laws[vertex]

    def with_metadata(self, name=None, params=None, finite_projection=None) -> "BrwModel":
        return BrwModel(self.vertices, self.laws,
                        name if name is not None else self.name,
                        dict(params if params is not None else self.params),
                        finite_projection if finite_projection is not None else self.finite_projection)


def dominating_law(model: BrwModel) -> IntDistribution:
    """Smallest child-count law stochastically above every per-vertex rho.

    rho(n) = sup_x tail_x(n) - sup_x tail_x(n+1); on finite vertex sets the
    suprema are maxima and the result always exists.
    """
    points = sorted({int(n) for v in model.vertices for n in model.laws[v].rho.values})

    def sup_tail(n):
        return max(model.laws[v].rho.tail(n) for v in model.vertices)

    # sup_x tail_x only steps right after a support point, so the dominating
    # law is carried by the union of the per-vertex supports
    values, probs = [], []
    for n in points:
        mass = sup_tail(n) - sup_tail(n + 1)
        if mass > 0:
            values.append(n)
            probs.append(mass)
    return IntDistribution.from_values(values, probs, normalize=True)


# ---------------------------------------------------------------------------
# projections and restrictions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Projection:
    """Surjective vertex map from a model's vertex set onto a target list."""

    mapping: tuple  # ((source, target), ...)
    target_vertices: tuple

    @staticmethod
    def make(mapping, target_vertices=None) -> "Projection":
        m = dict(mapping)
        targets = tuple(sorted(set(m.values()))) if target_vertices is None else tuple(target_vertices)
        if set(m.values()) != set(targets):
            raise ModelError("projection is not surjective onto the target vertex list")
        return Projection(tuple(sorted(m.items())), targets)

    def as_dict(self) -> dict:
        return dict(self.mapping)


def project_model(model: BrwModel, proj: Projection, tol=PROB_TOL) -> BrwModel:
    """Collapse fibers of the projection; laws must agree along each fiber.

    The projected law at g(x) is the pushforward of the law at x; two
    vertices with the same image whose pushforwards differ (beyond total
    variation tol) make the model non-projectable and raise.
    """
    g = proj.as_dict()
    missing = [v for v in model.vertices if v not in g]
    if missing:
        raise ModelError(f"projection undefined on vertices {missing[:5]}")
    fibers = {}
    for v in model.vertices:
        fibers.setdefault(g[v], []).append(v)
    new_laws = {}
    for y, fiber in fibers.items():
        pushed = [model.laws[x].pushforward(g) for x in fiber]
        for x, law in zip(fiber[1:], pushed[1:]):
            if not pushed[0].equal_within(law, tol):
                raise ModelError(
                    f"fiber over {y!r} is inconsistent: {fiber[0]!r} and {x!r} "
                    "push to different laws")
        new_laws[y] = pushed[0]
    return BrwModel(proj.target_vertices, new_laws,
                    name=f"{model.name}/projected" if model.name else "projected",
                    params=dict(model.params))


def restrict_model(model: BrwModel, subset) -> BrwModel:
    """Suppress every reproduction outside ``subset`` (the induced model)."""
    keep = [v for v in model.vertices if v in set(subset)]
    if not keep:
        raise ModelError("restriction to an empty vertex set")
    keepset = set(keep)
    laws = {v: model.laws[v].restrict(keepset) for v in keep}
    params = dict(model.params)
    params["restricted_to"] = len(keep)
    return BrwModel(tuple(keep), laws, name=model.name, params=params)


# ---------------------------------------------------------------------------
# structural checks
# ---------------------------------------------------------------------------

def communicating_classes(model: BrwModel):
    """Strongly connected classes of the induced edge relation m_xy > 0."""
    n = model.size
    rows, cols = [], []
    for v in model.vertices:
        i = model.index[v]
        for u, w in model.laws[v].mean_row().items():
            if w > 0:
                rows.append(i)
                cols.append(model.index[u])
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, labels = csgraph.connected_components(adj, directed=True, connection="strong")
    classes = [[] for _ in range(ncomp)]
    for v in model.vertices:
        classes[labels[model.index[v]]].append(v)
    return [tuple(c) for c in classes]


def check_assumption_nonsingular(model: BrwModel):
    """Per communicating class: does some vertex breed a non-single total inside it?

    Classes are computed on this truncation and can differ from the
    untruncated ones; the report carries that caveat.
    """
    verdicts = []
    for cls in communicating_classes(model):
        ok = any(model.laws[v].prob_single_child_in(cls) < 1.0 - PROB_TOL for v in cls)
        verdicts.append({"class": cls, "nonsingular": ok})
    return {
        "classes": verdicts,
        "all_nonsingular": all(c["nonsingular"] for c in verdicts),
        "note": "classes computed on this finite truncation only",
    }


def check_invariance(model: BrwModel, gamma, interior=None, tol=PROB_TOL):
    """Does the law family commute with the vertex bijection on the interior?

    Truncation edges break exact invariance (edge laws are restrictions of
    the untruncated ones), so by default a vertex is only checked when
    neither its own offspring support nor its image's touches the gamma
    boundary, i.e. vertices where the map or its inverse leaves the window.
    Pass an explicit ``interior`` to widen or narrow the checked set; the
    skipped boundary is reported either way.
    """
    g = dict(gamma)
    if len(set(g.values())) != len(g):
        raise ModelError("gamma is not injective")
    vset = set(model.vertices)
    if interior is None:
        image = set(g.values())
        boundary = {v for v in model.vertices
                    if v not in g or g[v] not in vset or v not in image}

        def clear(v):
            return v not in boundary and not (set(model.laws[v].support) & boundary)

        interior = [v for v in model.vertices
                    if v in g and g[v] in vset and clear(v) and clear(g[v])]
    checked, failures = [], []
    for v in interior:
        moved = model.laws[v].pushforward(g)
        if not moved.equal_within(model.laws[g[v]], tol):
            failures.append(v)
        checked.append(v)
    return {
        "invariant": not failures,
        "checked": tuple(checked),
        "failures": tuple(failures),
        "boundary_exempt": tuple(v for v in model.vertices if v not in set(checked)),
    }

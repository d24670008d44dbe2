"""Two-leg ladder geometry split into two baths joined by a weak link.

Sites are numbered column-major: column ``c`` holds site ``2c`` on the top leg
and ``2c + 1`` on the bottom leg.  Bath A occupies the left columns, bath B the
right ones.  Only the bottom legs of the two columns facing the cut are joined
(the bridge); the facing top-leg pair is left disconnected.

All frequencies are ``f = omega / 2pi`` in MHz.  Conversion to angular units
happens in :mod:`ladderflux.operators`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Iterable, Mapping

HORIZONTAL = "horizontal"
VERTICAL = "vertical"
BRIDGE = "bridge"
CROSS = "cross"
EDGE_TAGS = (HORIZONTAL, VERTICAL, BRIDGE, CROSS)


class ConfigError(ValueError):
    """Invalid lattice description; ``path`` points at the offending key."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    f_mhz: float
    tag: str

    @property
    def pair(self) -> frozenset:
        return frozenset((self.i, self.j))


@dataclass(frozen=True)
class LatticeSpec:
    """Immutable description of the ladder Hamiltonian parameters."""

    n_sites: int
    local_dim: int
    edges: tuple[Edge, ...]
    potentials_mhz: tuple[float, ...]
    anharmonicity_mhz: float
    bath_a: frozenset[int]
    bath_b: frozenset[int]
    bridge_edge: tuple[int, int]
    geometry: str = ""
    filling_a: Fraction | None = field(default=None, compare=False)

    def __post_init__(self):
        validate(self)

    @property
    def bath_a_sites(self) -> list[int]:
        return sorted(self.bath_a)

    @property
    def bath_b_sites(self) -> list[int]:
        return sorted(self.bath_b)

    def bath(self, name: str) -> frozenset[int]:
        if name.upper() == "A":
            return self.bath_a
        if name.upper() == "B":
            return self.bath_b
        raise ValueError(f"unknown bath {name!r}")

    def cut_edges(self) -> list[Edge]:
        """Edges with one end in each bath, oriented so that ``i`` lies in bath A."""
        out = []
        for e in self.edges:
            if (e.i in self.bath_a) != (e.j in self.bath_a):
                out.append(e if e.i in self.bath_a else Edge(e.j, e.i, e.f_mhz, e.tag))
        return out

    def bridge(self) -> Edge:
        a, b = self.bridge_edge
        for e in self.edges:
            if e.pair == frozenset((a, b)):
                return Edge(a, b, e.f_mhz, e.tag)
        # bridge coupling set to zero and dropped from the edge list
        return Edge(a, b, 0.0, BRIDGE)

    def with_edges(self, edges: Iterable[Edge]) -> "LatticeSpec":
        return replace(self, edges=tuple(edges))

    def describe(self) -> dict[str, Any]:
        return {
            "n_sites": self.n_sites,
            "local_dim": self.local_dim,
            "bath_a": self.bath_a_sites,
            "bath_b": self.bath_b_sites,
            "bridge_edge": list(self.bridge_edge),
            "geometry": self.geometry,
            "edges": [[e.i, e.j, e.f_mhz, e.tag] for e in self.edges],
            "potentials_mhz": list(self.potentials_mhz),
            "anharmonicity_mhz": self.anharmonicity_mhz,
        }


def validate(spec: LatticeSpec) -> None:
    L = spec.n_sites
    if L < 2:
        raise ConfigError("n_sites", "need at least two sites")
    if spec.local_dim not in (2, 3):
        raise ConfigError("local_dim", f"must be 2 or 3, got {spec.local_dim}")
    if not spec.edges:
        raise ConfigError("edges", "no connectivity")
    seen = set()
    for n, e in enumerate(spec.edges):
        if not (0 <= e.i < L and 0 <= e.j < L):
            raise ConfigError(f"edges[{n}]", f"site out of range in ({e.i}, {e.j})")
        if e.i == e.j:
            raise ConfigError(f"edges[{n}]", f"self-edge on site {e.i}")
        if e.pair in seen:
            raise ConfigError(f"edges[{n}]", f"duplicate edge ({e.i}, {e.j})")
        if e.tag not in EDGE_TAGS:
            raise ConfigError(f"edges[{n}]", f"unknown tag {e.tag!r}")
        seen.add(e.pair)
    if len(spec.potentials_mhz) != L:
        raise ConfigError("potentials_mhz", f"expected {L} entries")
    if spec.bath_a & spec.bath_b:
        raise ConfigError("bath_b", "baths overlap")
    if (spec.bath_a | spec.bath_b) != frozenset(range(L)):
        raise ConfigError("bath_a", "baths do not cover all sites")
    a, b = spec.bridge_edge
    if not (a in spec.bath_a and b in spec.bath_b):
        raise ConfigError("bridge_edge", "must join a bath-A site to a bath-B site")


def _ladder_edges(columns: list[tuple[int | None, int | None]], last_a: int,
                  jh: float, jv: float, jx: float, gamma: float):
    """Edges for a ladder given per-column (top, bottom) site ids.

    ``last_a`` is the index of the last bath-A column; the cut lies between it
    and the next column.
    """
    edges: list[Edge] = []
    for c, (top, bot) in enumerate(columns):
        if top is not None and bot is not None:
            edges.append(Edge(top, bot, jv, VERTICAL))
        if c + 1 == len(columns):
            continue
        ntop, nbot = columns[c + 1]
        across = c == last_a
        if across:
            if bot is not None and nbot is not None:
                edges.append(Edge(bot, nbot, gamma, BRIDGE))
        else:
            if top is not None and ntop is not None:
                edges.append(Edge(top, ntop, jh, HORIZONTAL))
            if bot is not None and nbot is not None:
                edges.append(Edge(bot, nbot, jh, HORIZONTAL))
        if jx != 0.0:
            if top is not None and nbot is not None:
                edges.append(Edge(top, nbot, jx, CROSS))
            if bot is not None and ntop is not None:
                edges.append(Edge(bot, ntop, jx, CROSS))
    return edges


def default_device(columns_a: int, columns_b: int, local_dim: int = 2,
                   gamma_mhz: float = 1.0, jh_mhz: float = 10.0, jv_mhz: float = -10.0,
                   jx_mhz: float = 0.3, u_mhz: float = -175.0,
                   extra_site_a: bool = False) -> LatticeSpec:
    """Build the idealised two-bath ladder.

    With ``extra_site_a`` bath A gets one more site on the top leg, in a
    half-filled column next to the cut.  This is how odd sizes are realised.
    """
    if columns_a < 1 or columns_b < 1:
        raise ValueError(f"column counts must be positive, got ({columns_a}, {columns_b})")
    columns: list[tuple[int | None, int | None]] = []
    site = 0
    bath_a: list[int] = []
    for _ in range(columns_a):
        columns.append((site, site + 1))
        bath_a += [site, site + 1]
        site += 2
    if extra_site_a:
        columns.append((site, None))
        bath_a.append(site)
        site += 1
    last_a = len(columns) - 1
    for _ in range(columns_b):
        columns.append((site, site + 1))
        site += 2
    n_sites = site
    edges = _ladder_edges(columns, last_a, jh_mhz, jv_mhz, jx_mhz, gamma_mhz)
    # the bridge always runs along the bottom leg
    a_site = columns[columns_a - 1][1]
    b_site = columns[last_a + 1][1]
    if extra_site_a:
        # the half column has no bottom site: join the last full column to B
        edges.append(Edge(a_site, b_site, gamma_mhz, BRIDGE))
        top_extra = columns[last_a][0]
        edges.append(Edge(columns[columns_a - 1][0], top_extra, jh_mhz, HORIZONTAL))
        if jx_mhz != 0.0:
            # diagonal from the lone site into the bath-A bottom leg
            edges.append(Edge(a_site, top_extra, jx_mhz, CROSS))
            edges.append(Edge(top_extra, b_site, jx_mhz, CROSS))
            edges.append(Edge(a_site, columns[last_a + 1][0], jx_mhz, CROSS))
        edges = _dedupe(edges)
    geometry = (f"2-leg ladder, bath A {columns_a} column(s)"
                + (" + 1 top-leg site at the cut" if extra_site_a else "")
                + f", bath B {columns_b} column(s); column-major numbering "
                  "(top=2c, bottom=2c+1); bridge on bottom leg")
    return LatticeSpec(
        n_sites=n_sites,
        local_dim=local_dim,
        edges=tuple(edges),
        potentials_mhz=(0.0,) * n_sites,
        anharmonicity_mhz=float(u_mhz),
        bath_a=frozenset(bath_a),
        bath_b=frozenset(range(n_sites)) - frozenset(bath_a),
        bridge_edge=(a_site, b_site),
        geometry=geometry,
    )


def _dedupe(edges: list[Edge]) -> list[Edge]:
    out: dict[frozenset, Edge] = {}
    for e in edges:
        out.setdefault(e.pair, e)
    return list(out.values())


def columns_for_size(n_sites: int) -> tuple[int, int, bool]:
    """Map a total size to ``(columns_a, columns_b, extra_site_a)``.

    Bath A takes the larger half of the columns; odd sizes add the lone site.
    """
    if n_sites < 4:
        raise ValueError(f"ladder needs at least 4 sites, got {n_sites}")
    cols = n_sites // 2
    return (cols + 1) // 2, cols // 2, bool(n_sites % 2)


def device_for_size(n_sites: int, **kwargs) -> LatticeSpec:
    ca, cb, extra = columns_for_size(n_sites)
    return default_device(ca, cb, extra_site_a=extra, **kwargs)


# --- configuration documents ------------------------------------------------

_REQUIRED = ("local_dim", "columns_a", "columns_b", "gamma_mhz", "jh_mhz", "jv_mhz",
             "jx_mhz", "u_mhz")


def spec_from_mapping(doc: Mapping[str, Any], path: str = "") -> LatticeSpec:
    """Build a spec from an already-decoded configuration mapping."""
    pre = f"{path}." if path else ""
    if not isinstance(doc, Mapping):
        raise ConfigError(path or "<root>", "expected an object")
    for key in _REQUIRED:
        if key not in doc:
            raise ConfigError(pre + key, "missing required key")
    unknown = set(doc) - set(_REQUIRED) - {"edges", "edge_overrides", "potentials_mhz", "extra_site_a"}
    if unknown:
        raise ConfigError(pre + sorted(unknown)[0], "unknown key")

    def number(key):
        v = doc[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(pre + key, f"expected a number, got {v!r}")
        return v

    for key in ("local_dim", "columns_a", "columns_b"):
        if not isinstance(doc[key], int) or isinstance(doc[key], bool):
            raise ConfigError(pre + key, f"expected an integer, got {doc[key]!r}")
    try:
        spec = default_device(
            doc["columns_a"], doc["columns_b"], local_dim=doc["local_dim"],
            gamma_mhz=float(number("gamma_mhz")), jh_mhz=float(number("jh_mhz")),
            jv_mhz=float(number("jv_mhz")), jx_mhz=float(number("jx_mhz")),
            u_mhz=float(number("u_mhz")), extra_site_a=bool(doc.get("extra_site_a", False)),
        )
    except ConfigError as exc:
        raise ConfigError(pre + exc.path, str(exc).split(": ", 1)[-1]) from None
    except ValueError as exc:
        raise ConfigError(pre + "columns_a", str(exc)) from None

    edges = list(spec.edges)
    if "edges" in doc:
        edges = _explicit_edges(doc["edges"], spec, pre + "edges")
    overrides = doc.get("edge_overrides", [])
    if not isinstance(overrides, list):
        raise ConfigError(pre + "edge_overrides", "expected a list")
    index = {e.pair: n for n, e in enumerate(edges)}
    seen = set()
    for n, item in enumerate(overrides):
        where = f"{pre}edge_overrides[{n}]"
        if not isinstance(item, Mapping) or set(item) != {"i", "j", "f_mhz"}:
            raise ConfigError(where, "expected {i, j, f_mhz}")
        i, j, f = item["i"], item["j"], item["f_mhz"]
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (i, j)):
            raise ConfigError(where, "site indices must be integers")
        if not (0 <= i < spec.n_sites and 0 <= j < spec.n_sites) or i == j:
            raise ConfigError(where, f"invalid site pair ({i}, {j})")
        if isinstance(f, bool) or not isinstance(f, (int, float)):
            raise ConfigError(where + ".f_mhz", f"expected a number, got {f!r}")
        pair = frozenset((i, j))
        if pair in seen:
            raise ConfigError(where, f"duplicate edge ({i}, {j})")
        seen.add(pair)
        if pair in index:
            old = edges[index[pair]]
            edges[index[pair]] = Edge(old.i, old.j, float(f), old.tag)
        else:
            cross_cut = (i in spec.bath_a) != (j in spec.bath_a)
            edges.append(Edge(i, j, float(f), CROSS if cross_cut else HORIZONTAL))
            index[pair] = len(edges) - 1

    potentials = list(spec.potentials_mhz)
    pots = doc.get("potentials_mhz", {})
    if not isinstance(pots, Mapping):
        raise ConfigError(pre + "potentials_mhz", "expected a site -> MHz map")
    for key, value in pots.items():
        try:
            site = int(key)
        except (TypeError, ValueError):
            raise ConfigError(f"{pre}potentials_mhz.{key}", "site key must be an integer") from None
        if not 0 <= site < spec.n_sites:
            raise ConfigError(f"{pre}potentials_mhz.{key}", "site out of range")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{pre}potentials_mhz.{key}", f"expected a number, got {value!r}")
        potentials[site] = float(value)
    try:
        return replace(spec, edges=tuple(edges), potentials_mhz=tuple(potentials))
    except ConfigError as exc:
        raise ConfigError(pre + exc.path, str(exc).split(": ", 1)[-1]) from None


def _default_tag(spec: LatticeSpec, i: int, j: int) -> str:
    if frozenset((i, j)) == frozenset(spec.bridge_edge):
        return BRIDGE
    if (i in spec.bath_a) != (j in spec.bath_a):
        return CROSS
    return VERTICAL if i // 2 == j // 2 else HORIZONTAL


def _explicit_edges(items, spec: LatticeSpec, where: str) -> list[Edge]:
    """A full replacement edge list ``[{i, j, f_mhz[, tag]}, ...]``."""
    if not isinstance(items, list):
        raise ConfigError(where, "expected a list")
    if not items:
        raise ConfigError(where, "no connectivity")
    edges = []
    for n, item in enumerate(items):
        at = f"{where}[{n}]"
        if not isinstance(item, Mapping) or not {"i", "j", "f_mhz"} <= set(item) <= {"i", "j", "f_mhz", "tag"}:
            raise ConfigError(at, "expected {i, j, f_mhz[, tag]}")
        i, j, f = item["i"], item["j"], item["f_mhz"]
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (i, j)):
            raise ConfigError(at, "site indices must be integers")
        if isinstance(f, bool) or not isinstance(f, (int, float)):
            raise ConfigError(at + ".f_mhz", f"expected a number, got {f!r}")
        edges.append(Edge(i, j, float(f), item.get("tag") or _default_tag(spec, i, j)))
    try:
        replace(spec, edges=tuple(edges))
    except ConfigError as exc:
        raise ConfigError(where + exc.path[len("edges"):], str(exc).split(": ", 1)[-1]) from None
    return edges


def parse_config(text: str) -> LatticeSpec:
    """Parse a JSON lattice document (see README for keys)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return spec_from_mapping(doc)


# --- tuning -------------------------------------------------------------------

@dataclass(frozen=True)
class TuningDirective:
    """One of ``filling``, ``potential_shift`` or ``coupling_scale``."""

    kind: str
    value: float | Fraction
    target: str = "B"

    def __post_init__(self):
        if self.kind == "filling":
            if not 0 <= self.value <= 1:
                raise ValueError(f"filling must lie in [0, 1], got {self.value}")
        elif self.kind == "coupling_scale":
            if not self.value > 0:
                raise ValueError(f"scale factor must be positive, got {self.value}")
        elif self.kind != "potential_shift":
            raise ValueError(f"unknown directive kind {self.kind!r}")

    @classmethod
    def filling(cls, f) -> "TuningDirective":
        return cls("filling", Fraction(f).limit_denominator(1000), "A")

    @classmethod
    def potential_shift(cls, h0_mhz: float, target: str = "B") -> "TuningDirective":
        return cls("potential_shift", float(h0_mhz), target)

    @classmethod
    def coupling_scale(cls, r: float, target: str = "B") -> "TuningDirective":
        return cls("coupling_scale", float(r), target)


def apply_tuning(spec: LatticeSpec, directive: TuningDirective) -> LatticeSpec:
    sites = spec.bath(directive.target)
    if not sites:
        raise ValueError(f"bath {directive.target} is empty")
    if directive.kind == "filling":
        return replace(spec, filling_a=Fraction(directive.value))
    if directive.kind == "potential_shift":
        pots = tuple(h + directive.value if n in sites else h
                     for n, h in enumerate(spec.potentials_mhz))
        return replace(spec, potentials_mhz=pots)
    r = directive.value
    edges = tuple(Edge(e.i, e.j, e.f_mhz * r, e.tag) if (e.i in sites and e.j in sites) else e
                  for e in spec.edges)
    return replace(spec, edges=edges)

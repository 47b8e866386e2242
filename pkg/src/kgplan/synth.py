"""Seeded synthetic graphs for the academia, literature and e-commerce schemas.

Every entity name ends in a number unique within its graph, and names of one
type share a fixed token count. A name therefore never occurs inside another
name or across the boundary of two adjacent names, which keeps token
containment matching in :mod:`kgplan.evalkit` unambiguous.
"""

from __future__ import annotations

import random
from typing import Callable

from .graph_store import Entity, InverseHint, PropertyGraph, Relation, materialize_inverses

_FIRST = ("Ada", "Boris", "Chen", "Dana", "Emil", "Farah", "Goran", "Hana", "Ivo", "Jun", "Kai", "Lena",
          "Mira", "Nils", "Olga", "Pavel", "Quinn", "Rosa", "Sven", "Tara", "Uma", "Viktor", "Wen", "Yara")
_LAST = ("Abel", "Brandt", "Castillo", "Dorn", "Eklund", "Fischer", "Grau", "Holm", "Ishida", "Jansen",
         "Krall", "Lindqvist", "Moreau", "Novak", "Okafor", "Petrov", "Quist", "Rahman", "Sato", "Tamm")
_TOPIC = ("Quantum", "Lattice", "Spin", "Neutrino", "Plasma", "Gauge", "Photon", "Soliton", "Boson",
          "Vortex", "Chaos", "Entropy", "Magnon", "Hadron", "Tensor")
_THING = ("Dynamics", "Symmetry", "Scattering", "Transport", "Fields", "Oscillations", "Transitions",
          "Correlations", "Spectra", "Stability", "Resonance", "Decay")
_VENUE = ("Letters", "Review", "Journal", "Annals", "Proceedings", "Bulletin", "Reports", "Notes")
_WORD = ("Silent", "Crimson", "Hollow", "Winter", "Golden", "Distant", "Broken", "Hidden", "Iron",
         "Paper", "Glass", "Salt", "Amber", "Wild", "Quiet", "Northern")
_NOUN = ("River", "Garden", "Crown", "Lantern", "Harbor", "Orchard", "Tower", "Mirror", "Forest",
         "Voyage", "Archive", "Meadow", "Storm", "Bridge")
_HOUSE = ("Press", "Books", "House", "Editions", "Publishing")
_PRODUCT = ("Kettle", "Headphones", "Blender", "Backpack", "Lamp", "Charger", "Mug", "Keyboard",
            "Toaster", "Speaker", "Tripod", "Wallet", "Bottle", "Monitor")
_ADJ = ("Compact", "Deluxe", "Portable", "Classic", "Smart", "Ultra", "Mini", "Pro", "Wireless")
_BRAND = ("Acme", "Nordic", "Zenith", "Orbit", "Pioneer", "Summit", "Vertex", "Harbor", "Lumen", "Kestrel")
_GENRES = ("fantasy", "mystery", "romance", "history", "science fiction", "poetry", "thriller", "biography")


class _Namer:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.n = 0

    def __call__(self, *pools) -> str:
        self.n += 1
        return " ".join(self.rng.choice(p) for p in pools) + f" {self.n}"


def _split(n: int, weights: tuple[float, ...]) -> list[int]:
    counts = [max(1, int(n * w)) for w in weights]
    counts[0] += n - sum(counts)
    return counts


def _build(entities: list[Entity], edges: list[tuple[str, str, str]], hint: InverseHint) -> PropertyGraph:
    seen: set[tuple[str, str, str]] = set()
    rels = []
    for e in edges:
        if e not in seen:
            seen.add(e)
            rels.append(Relation(*e))
    return materialize_inverses(PropertyGraph(entities, rels, hint))


def academia_graph(n_entities: int = 1000, seed: int = 0) -> PropertyGraph:
    """Authors, papers and venues; authorship and venue links are stored in both directions."""
    rng = random.Random(f"academia:{seed}")
    name = _Namer(rng)
    n_auth, n_pap, n_ven = _split(n_entities, (0.3, 0.6, 0.1))
    authors = [Entity(f"a{i}", "author", name(_FIRST, _LAST), {"node_type": "author"}) for i in range(n_auth)]
    venues = [Entity(f"v{i}", "venue", name(_TOPIC, _VENUE), {"node_type": "venue"}) for i in range(n_ven)]
    papers = []
    edges: list[tuple[str, str, str]] = []
    group = 6
    for i in range(n_pap):
        year = 1950 + i * 60 // n_pap
        pid = f"p{i}"
        papers.append(Entity(pid, "paper", name(_TOPIC, _THING, _THING), {
            "node_type": "paper", "label": rng.choice(("hep-th", "cond-mat", "astro-ph", "quant-ph")),
            "year": year, "abstract": f"We study {rng.choice(_TOPIC).lower()} {rng.choice(_THING).lower()}."}))
        lead = i % n_auth if i < n_auth else rng.randrange(n_auth)
        base = lead - lead % group
        team = {lead}
        for _ in range(rng.randint(0, 2)):
            team.add(min(n_auth - 1, base + rng.randrange(group)) if rng.random() < 0.85 else rng.randrange(n_auth))
        for a in sorted(team):
            edges.append((f"a{a}", "paper", pid))
            edges.append((pid, "author", f"a{a}"))
        v = f"v{rng.randrange(n_ven)}"
        edges.append((pid, "venue", v))
        edges.append((v, "paper", pid))
        for _ in range(rng.randint(0, 3) if i else 0):
            ref = f"p{rng.randrange(i)}"
            edges.append((pid, "reference", ref))
            edges.append((ref, "cited_by", pid))
    hint = InverseHint()
    hint.add("paper", "author", "author", "paper")
    hint.add("venue", "paper", "paper", "venue")
    hint.add("reference", "cited_by", "paper", "paper")
    return _build(authors + papers + venues, edges, hint)


def literature_graph(n_entities: int = 1000, seed: int = 0) -> PropertyGraph:
    """Books, authors, publishers and series, with similar-book links."""
    rng = random.Random(f"literature:{seed}")
    name = _Namer(rng)
    n_book, n_auth, n_pub, n_ser = _split(n_entities, (0.55, 0.25, 0.08, 0.12))
    authors = [Entity(f"au{i}", "author", name(_FIRST, _LAST), {"node_type": "author"}) for i in range(n_auth)]
    pubs = [Entity(f"pb{i}", "publisher", name(_LAST, _HOUSE), {"node_type": "publisher"}) for i in range(n_pub)]
    series = [Entity(f"se{i}", "series", name(_WORD, _NOUN, ("Saga", "Cycle", "Chronicles")),
                     {"node_type": "series", "description": "A series of connected novels."}) for i in range(n_ser)]
    books = []
    edges: list[tuple[str, str, str]] = []
    for i in range(n_book):
        bid = f"bk{i}"
        books.append(Entity(bid, "book", name(("The",), _WORD, _NOUN), {
            "node_type": "book", "description": "A novel.", "publication_year": 1900 + rng.randrange(120),
            "genres": ", ".join(sorted(rng.sample(_GENRES, 2)))}))
        lead = i % n_auth if i < n_auth else rng.randrange(n_auth)
        team = {lead}
        if rng.random() < 0.3:
            team.add(min(n_auth - 1, lead - lead % 5 + rng.randrange(5)))
        for a in sorted(team):
            edges.append((bid, "author", f"au{a}"))
            edges.append((f"au{a}", "book", bid))
        p = f"pb{rng.randrange(n_pub)}"
        edges.append((bid, "publisher", p))
        edges.append((p, "book", bid))
        if rng.random() < 0.6 or i < n_ser:
            s = f"se{i % n_ser if i < n_ser else rng.randrange(n_ser)}"
            edges.append((bid, "series", s))
            edges.append((s, "book", bid))
        for _ in range(rng.randint(0, 2) if i else 0):
            edges.append((bid, "similar_books", f"bk{rng.randrange(i)}"))
    hint = InverseHint()
    for t in ("author", "publisher", "series"):
        hint.add(t, "book", "book", t)
    return _build(books + authors + pubs + series, edges, hint)


def ecommerce_graph(n_entities: int = 1000, seed: int = 0) -> PropertyGraph:
    """Items and brands, with co-viewing and co-purchase links between items."""
    rng = random.Random(f"ecommerce:{seed}")
    name = _Namer(rng)
    n_item, n_brand = _split(n_entities, (0.8, 0.2))
    brands = [Entity(f"br{i}", "brand", name(_BRAND, ("Labs", "Goods", "Co")), {"node_type": "brand"})
              for i in range(n_brand)]
    items = [Entity(f"it{i}", "item", name(_ADJ, _PRODUCT), {"node_type": "item"}) for i in range(n_item)]
    edges: list[tuple[str, str, str]] = []
    for i in range(n_item):
        iid = f"it{i}"
        b = f"br{i % n_brand if i < n_brand else rng.randrange(n_brand)}"
        edges.append((iid, "brand", b))
        edges.append((b, "item", iid))
        for rel, hi in (("also_viewed_item", 3), ("also_bought_item", 3),
                        ("buy_after_viewing_item", 2), ("bought_together_item", 2)):
            for _ in range(rng.randint(0, hi)):
                j = rng.randrange(n_item)
                if j != i:
                    edges.append((iid, rel, f"it{j}"))
    hint = InverseHint()
    hint.add("brand", "item", "item", "brand")
    return _build(items + brands, edges, hint)


GENERATORS: dict[str, Callable[..., PropertyGraph]] = {
    "academia": academia_graph,
    "literature": literature_graph,
    "ecommerce": ecommerce_graph,
}

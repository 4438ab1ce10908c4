"""Normal factor graphs and the sum-product algorithm.

In a normal (Forney-style) factor graph every variable is an edge.  An edge
touches at most two nodes; a variable used by one factor only is a
half-edge, and a variable shared by more than two factors is split into
copies tied together by an equality node.  :meth:`NfgGraph.from_factors`
performs that conversion.

Messages are non-negative vectors over an edge's domain.  ``run_spa``
computes every directed message exactly once in a leaves-inward-then-back
order and returns per-variable beliefs, the normalised product of the two
messages travelling in opposite directions along an edge.

The CCSS branch (PU -> SU -> FC) is also provided in analytic form: the
continuous edges collapse to (below threshold, above threshold) scalar pairs,
so the branch marginal comes out in closed form.
"""

from __future__ import annotations

import itertools
import string
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .channels import FadingLink
from . import fusion

__all__ = [
    "SchedulingError",
    "CycleError",
    "Edge",
    "Node",
    "Message",
    "MessageStore",
    "NfgGraph",
    "message_edge_to_node",
    "message_node_to_edge",
    "run_spa",
    "SpaResult",
    "brute_force_marginals",
    "complexity_row",
    "BranchMessages",
    "ccss_branch_messages",
    "ccss_branch_marginal",
    "ccss_likelihoods",
    "ccss_graph",
    "complexity_fg",
    "complexity_explicit",
    "complexity_from_census",
]


class SchedulingError(RuntimeError):
    """A message was requested before the messages it depends on exist."""


class CycleError(ValueError):
    """The graph has a cycle; loopy propagation is not supported."""


@dataclass
class Edge:
    name: str
    card: int
    variable: str
    nodes: list = field(default_factory=list)

    @property
    def is_half(self) -> bool:
        return len(self.nodes) == 1


@dataclass
class Node:
    name: str
    edges: tuple
    table: np.ndarray
    equality: bool = False

    @property
    def degree(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class Message:
    """Directed message; ``source`` and ``target`` are ("edge"|"node", name)."""

    source: tuple
    target: tuple
    payload: np.ndarray


def _normalise(v: np.ndarray) -> np.ndarray:
    s = v.sum()
    if not s > 0:
        raise ValueError("message has no mass")
    return v / s


class MessageStore:
    """Memo of computed messages with an audit of how often each was built."""

    def __init__(self):
        self._msgs: dict = {}
        self.computed: Counter = Counter()

    def put(self, msg: Message) -> None:
        key = (msg.source, msg.target)
        self.computed[key] += 1
        self._msgs[key] = msg

    def get(self, source: tuple, target: tuple) -> Message:
        try:
            return self._msgs[(source, target)]
        except KeyError:
            raise SchedulingError(f"message {source} -> {target} has not been computed") from None

    def has(self, source: tuple, target: tuple) -> bool:
        return (source, target) in self._msgs

    def __len__(self) -> int:
        return len(self._msgs)


class NfgGraph:
    """Normal factor graph over discrete variables."""

    def __init__(self):
        self.edges: dict[str, Edge] = {}
        self.nodes: dict[str, Node] = {}

    # -- construction -----------------------------------------------------

    def add_edge(self, name: str, card: int, variable: str | None = None) -> Edge:
        if name in self.edges:
            raise ValueError(f"duplicate edge {name!r}")
        if card < 1:
            raise ValueError("edge cardinality must be positive")
        e = Edge(name, int(card), variable or name)
        self.edges[name] = e
        return e

    def add_node(self, name: str, edges, table, equality: bool = False) -> Node:
        if name in self.nodes:
            raise ValueError(f"duplicate node {name!r}")
        edges = tuple(edges)
        if len(set(edges)) != len(edges):
            raise ValueError("a node may touch an edge only once")
        table = np.asarray(table, dtype=float)
        shape = tuple(self.edges[e].card for e in edges)
        if table.shape != shape:
            raise ValueError(f"table of {name!r} has shape {table.shape}, expected {shape}")
        if np.any(table < 0):
            raise ValueError("factor tables must be non-negative")
        for e in edges:
            if len(self.edges[e].nodes) >= 2:
                raise ValueError(f"edge {e!r} already touches two nodes")
        for e in edges:
            self.edges[e].nodes.append(name)
        node = Node(name, edges, table, equality)
        self.nodes[name] = node
        return node

    def add_equality(self, name: str, edges) -> Node:
        cards = {self.edges[e].card for e in edges}
        if len(cards) != 1:
            raise ValueError("equality node edges must share a domain")
        (q,) = cards
        table = np.zeros((q,) * len(edges))
        for i in range(q):
            table[(i,) * len(edges)] = 1.0
        return self.add_node(name, edges, table, equality=True)

    @classmethod
    def from_factors(cls, factors: dict, cards: dict) -> "NfgGraph":
        """Build an NFG from ``{factor: (variables, table)}``.

        Variables shared by more than two factors get an equality node and
        one edge copy per factor, plus a half-edge carrying the variable out.
        """
        g = cls()
        uses: dict[str, list] = {v: [] for v in cards}
        for fname, (vars_, _) in factors.items():
            for v in vars_:
                if v not in uses:
                    raise ValueError(f"factor {fname!r} uses unknown variable {v!r}")
                uses[v].append(fname)
        edge_for: dict[tuple, str] = {}
        for v, fs in uses.items():
            if len(fs) <= 2:
                g.add_edge(v, cards[v])
                for f in fs:
                    edge_for[(f, v)] = v
            else:
                copies = []
                for i, f in enumerate(fs):
                    en = f"{v}#{i}"
                    g.add_edge(en, cards[v], variable=v)
                    edge_for[(f, v)] = en
                    copies.append(en)
                g.add_edge(v, cards[v])
                copies.append(v)
                edge_for[("=" + v, v)] = v
        for fname, (vars_, table) in factors.items():
            g.add_node(fname, [edge_for[(fname, v)] for v in vars_], table)
        for v, fs in uses.items():
            if len(fs) > 2:
                g.add_equality("=" + v, [f"{v}#{i}" for i in range(len(fs))] + [v])
        return g

    # -- structure --------------------------------------------------------

    def variables(self) -> list[str]:
        return sorted({e.variable for e in self.edges.values()})

    def is_acyclic(self) -> bool:
        """Union-find over nodes; an edge joining two already-linked nodes closes a cycle."""
        parent = {n: n for n in self.nodes}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for e in self.edges.values():
            if len(e.nodes) == 2:
                a, b = (find(n) for n in e.nodes)
                if a == b:
                    return False
                parent[a] = b
        return True

    def degree_census(self, include_equality: bool = False) -> Counter:
        """d_i: number of nodes of degree i."""
        return Counter(n.degree for n in self.nodes.values() if include_equality or not n.equality)

    def census_text(self) -> str:
        """Structured text listing every node with its degree and edge domains."""
        lines = []
        for n in self.nodes.values():
            doms = ",".join(f"{e}:{self.edges[e].card}" for e in n.edges)
            kind = "equality" if n.equality else "factor"
            lines.append(f"{kind} {n.name} degree={n.degree} edges=[{doms}]")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Messages
# ---------------------------------------------------------------------------


def _other_node(edge: Edge, node: str) -> str | None:
    others = [n for n in edge.nodes if n != node]
    return others[0] if others else None


def message_edge_to_node(graph: NfgGraph, edge: str, node: str, store: MessageStore) -> Message:
    """Message carried by ``edge`` into ``node``.

    On an ordinary edge this passes through the message arriving from the
    other endpoint; on a half-edge it is the unit message.
    """
    e = graph.edges[edge]
    if node not in e.nodes:
        raise ValueError(f"edge {edge!r} does not touch node {node!r}")
    other = _other_node(e, node)
    if other is None:
        payload = np.full(e.card, 1.0 / e.card)
    else:
        payload = store.get(("node", other), ("edge", edge)).payload
    msg = Message(("edge", edge), ("node", node), payload)
    store.put(msg)
    return msg


def message_node_to_edge(graph: NfgGraph, node: str, edge: str, store: MessageStore) -> Message:
    """Sum over every other edge of the node's table times the incoming messages."""
    n = graph.nodes[node]
    if edge not in n.edges:
        raise ValueError(f"node {node!r} does not touch edge {edge!r}")
    letters = string.ascii_letters
    if n.degree > len(letters):
        raise ValueError("node degree too large")
    idx = letters[: n.degree]
    operands = [n.table]
    subs = [idx]
    for i, e in enumerate(n.edges):
        if e == edge:
            continue
        operands.append(store.get(("edge", e), ("node", node)).payload)
        subs.append(idx[i])
    target = idx[n.edges.index(edge)]
    out = np.einsum(",".join(subs) + "->" + target, *operands)
    msg = Message(("node", node), ("edge", edge), _normalise(out))
    store.put(msg)
    return msg


@dataclass
class SpaResult:
    beliefs: dict
    store: MessageStore
    schedule: list
    node_messages: int

    def cycles(self, graph: NfgGraph) -> int:
        """Cost of the run with one unit per table entry touched."""
        total = 0
        for kind, name in self.schedule:
            if kind == "node":
                node = graph.nodes[name[0]]
                if not node.equality:
                    total += int(np.prod(node.table.shape))
        return total


def run_spa(graph: NfgGraph) -> SpaResult:
    """Exact marginals on an acyclic graph by one inward and one outward sweep."""
    if not graph.is_acyclic():
        raise CycleError("the graph has a cycle; only acyclic graphs are supported")
    store = MessageStore()
    pending = {(nn, e) for nn, n in graph.nodes.items() for e in n.edges}
    schedule = []

    def ready(node: str, edge: str) -> bool:
        for e in graph.nodes[node].edges:
            if e == edge:
                continue
            other = _other_node(graph.edges[e], node)
            if other is not None and not store.has(("node", other), ("edge", e)):
                return False
        return True

    while pending:
        batch = sorted(p for p in pending if ready(*p))
        if not batch:
            raise SchedulingError("no message is ready; the graph is not a tree")
        for node, edge in batch:
            for e in graph.nodes[node].edges:
                if e != edge and not store.has(("edge", e), ("node", node)):
                    message_edge_to_node(graph, e, node, store)
                    schedule.append(("edge", (e, node)))
            message_node_to_edge(graph, node, edge, store)
            schedule.append(("node", (node, edge)))
            pending.discard((node, edge))

    beliefs = {}
    for v in graph.variables():
        e = graph.edges[v] if v in graph.edges else next(x for x in graph.edges.values() if x.variable == v)
        prod = np.ones(e.card)
        for n in e.nodes:
            prod = prod * store.get(("node", n), ("edge", e.name)).payload
        beliefs[v] = _normalise(prod)
    node_msgs = sum(1 for k, _ in schedule if k == "node")
    return SpaResult(beliefs, store, schedule, node_msgs)


def brute_force_marginals(factors: dict, cards: dict) -> dict:
    """Marginals of the normalised product of all factors by full contraction."""
    names = sorted(cards)
    letters = dict(zip(names, string.ascii_letters))
    subs = []
    ops = []
    for vars_, table in factors.values():
        subs.append("".join(letters[v] for v in vars_))
        ops.append(np.asarray(table, dtype=float))
    out = {}
    for v in names:
        arr = np.einsum(",".join(subs) + "->" + letters[v], *ops)
        out[v] = arr / arr.sum()
    return out


# ---------------------------------------------------------------------------
# Analytic CCSS branch
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BranchMessages:
    """The scalar messages of one PU -> SU -> FC branch, in computation order.

    ``report`` is (P(y|-1), P(y|+1)); ``threshold`` is the step message in the
    energy ``t`` given as (value below tau, value above tau); ``marginal``
    is (g(H0), g(H1)).
    """

    order: tuple
    report: tuple
    threshold: tuple
    marginal: tuple


def ccss_branch_messages(y: float, pd: float, pf: float, link: FadingLink) -> BranchMessages:
    order = []
    # (i) observed report: unit message from the half-edge y
    order.append("i:y->P(y|u,v)=1")
    # (ii)-(iii) the reporting fade enters as its density and is integrated out
    order.append("ii:P(v)->v")
    order.append("iii:v->P(y|u,v)")
    # (iv) integrating out v gives the report likelihood per decision
    p_minus = float(fusion.report_density(y, -1, link))
    p_plus = float(fusion.report_density(y, +1, link))
    order.append("iv:P(y|u,v)->u")
    # (v) pass-through along u
    order.append("v:u->P(u|t)")
    # (vi)-(vii) the decision factor turns it into a step in t at tau
    order.append("vi:P(u|t)->t")
    order.append("vii:t->P(t|H,z)")
    # (viii)-(x) sensing fade density and the unit message from H
    order.append("viii:P(z)->z")
    order.append("ix:z->P(t|H,z)")
    order.append("x:H->P(t|H,z)=1")
    # (xi) integrating the step against P(t|H) leaves (1-q, q) weights
    g0 = p_minus * (1.0 - pf) + p_plus * pf
    g1 = p_minus * (1.0 - pd) + p_plus * pd
    order.append("xi:P(t|H,z)->H")
    return BranchMessages(tuple(order), (p_minus, p_plus), (p_minus, p_plus), (g0, g1))


def ccss_branch_marginal(y: float, pd: float, pf: float, link: FadingLink) -> tuple:
    """(g(H0), g(H1)) for one branch."""
    return ccss_branch_messages(y, pd, pf, link).marginal


def ccss_likelihoods(y, pd, pf, links) -> tuple:
    """Equality-node product over branches: (log P(y|H0), log P(y|H1))."""
    l0 = 0.0
    l1 = 0.0
    for k, yk in enumerate(y):
        g0, g1 = ccss_branch_marginal(float(yk), float(pd[k]), float(pf[k]), links[k])
        l0 += np.log(g0)
        l1 += np.log(g1)
    return float(l0), float(l1)


# ---------------------------------------------------------------------------
# Discretised CCSS graph and complexity accounting
# ---------------------------------------------------------------------------


def ccss_graph(K: int, card: int, *, clamped: bool = False) -> NfgGraph:
    """Discretised CCSS graph with ``card`` levels per variable.

    Tables are uniform: the graph exists to count messages, not to evaluate
    likelihoods.  ``clamped=True`` fixes H and y, leaving the four free
    variables z, t, u, v per branch.
    """
    if K < 1:
        raise ValueError("K must be positive")
    q = card
    cards = {}
    factors = {}
    if not clamped:
        cards["H"] = q
    for k in range(1, K + 1):
        z, t, u, v, y = (f"{s}{k}" for s in "ztuvy")
        cards.update({z: q, t: q, u: q, v: q})
        factors[f"P(z{k})"] = ((z,), np.full(q, 1.0 / q))
        factors[f"P(v{k})"] = ((v,), np.full(q, 1.0 / q))
        factors[f"P(u{k}|t{k})"] = ((u, t), np.full((q, q), 1.0 / q))
        if clamped:
            factors[f"P(t{k}|z{k})"] = ((t, z), np.full((q, q), 1.0 / q))
            factors[f"P(y{k}|u{k},v{k})"] = ((u, v), np.full((q, q), 1.0 / q))
        else:
            cards[y] = q
            factors[f"P(t{k}|H,z{k})"] = ((t, "H", z), np.full((q, q, q), 1.0 / q))
            factors[f"P(y{k}|u{k},v{k})"] = ((y, u, v), np.full((q, q, q), 1.0 / q))
    return NfgGraph.from_factors(factors, cards)


def complexity_from_census(census: dict, card: int) -> int:
    """C_FG = sum_i i d_i |X|^i."""
    return int(sum(i * d * card**i for i, d in census.items()))


def complexity_fg(graph: NfgGraph, card: int) -> int:
    """Message-count cost of SPA on ``graph`` at domain size ``card``; equality nodes excluded."""
    return complexity_from_census(graph.degree_census(), card)


def complexity_explicit(M: int, card: int) -> int:
    """C_CN = M |X|^M for direct marginalisation of M variables."""
    return int(M) * int(card) ** int(M)


def complexity_row(K: int, card: int, *, clamped: bool | None = None) -> tuple[int, int, int]:
    """(variable count, C_FG, C_CN) for the CCSS graph.

    By default a single branch is counted on the full graph, while K > 1
    clamps H and y so that the branches decouple; the explicit cost is then
    summed over the K independent four-variable branches.
    """
    if clamped is None:
        clamped = K > 1
    g = ccss_graph(K, card, clamped=clamped)
    c_fg = complexity_fg(g, card)
    if clamped:
        per_branch = len(g.variables()) // K
        return len(g.variables()), c_fg, K * complexity_explicit(per_branch, card)
    M = len(g.variables())
    return M, c_fg, complexity_explicit(M, card)

"""
Model learning: prefix tree acceptors, trace merging and dominator analysis.

Each passing trace becomes a path-shaped PTA. The PTAs are merged into one
execution graph whose nodes are state equivalence classes, the dominators
of that graph are computed with the iterative dataflow algorithm, and the
essential states are read off by walking immediate-dominator chains back
from every terminal node.
"""

import heapq
import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .equivalence import EquivalenceClassifier, EquivalenceThresholds
from .errors import (OracleSizeError, PreconditionError, StartStateMismatchError,
                     UnreachableNodeError)
from .trace_model import ActionRecord, StateObservation, Trace

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 16
RECOMMENDED_TRAINING = (2, 10)


def base_label(label: Optional[str], separator: str = "#") -> Optional[str]:
    """Drop a cosmetic suffix from a label (``main#decorA`` -> ``main``)."""
    if label is None:
        return None
    return label.split(separator, 1)[0]


# ---------------------------------------------------------------------------
# Prefix tree acceptors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PtaEdge:
    source: int
    target: int
    action: ActionRecord


@dataclass(frozen=True)
class PtaGraph:
    """A single trace as a path: node i holds observation i."""
    trace_id: str
    nodes: Tuple[StateObservation, ...]
    edges: Tuple[PtaEdge, ...]
    root: int = 0

    @property
    def leaf(self) -> int:
        return len(self.nodes) - 1


def construct_pta(trace: Trace) -> PtaGraph:
    """Build the path-shaped PTA of one trace in time linear in its length."""
    edges = tuple(PtaEdge(a.from_index, a.to_index, a) for a in trace.actions)
    return PtaGraph(trace_id=trace.id, nodes=trace.states, edges=edges)


# ---------------------------------------------------------------------------
# Execution graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MemberRef:
    """One training observation that belongs to a graph node."""
    trace_id: str
    index: int
    digest: str


@dataclass(frozen=True)
class GraphNode:
    """An equivalence class of observations."""
    id: int
    name: str
    representative: Optional[StateObservation] = None
    members: Tuple[MemberRef, ...] = ()
    is_terminal: bool = False
    # signatures of every action taken from this state in training
    action_signatures: Tuple[str, ...] = ()

    @property
    def sort_key(self) -> str:
        if self.representative is not None:
            return self.representative.digest
        return f"{self.id:08d}"


@dataclass(frozen=True)
class GraphEdge:
    """A directed edge labeled with the multiset of action kinds seen on it."""
    source: int
    target: int
    actions: Tuple[Tuple[str, int], ...] = ()


@dataclass(frozen=True)
class TraceWalk:
    """A training trace's collapsed path through the graph."""
    trace_id: str
    nodes: Tuple[int, ...]
    indices: Tuple[int, ...]
    actions: Tuple[str, ...]


@dataclass(frozen=True)
class ExecutionGraph:
    """
    Merged multi-trace graph. Node ``i`` of ``nodes`` has id ``i``; node 0 is
    the initial state.
    """
    nodes: Tuple[GraphNode, ...]
    edges: Tuple[GraphEdge, ...]
    initial: int
    terminals: Tuple[int, ...]
    walks: Tuple[TraceWalk, ...] = ()
    _succ: Dict[int, Tuple[int, ...]] = field(init=False, repr=False, compare=False)
    _pred: Dict[int, Tuple[int, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise PreconditionError(f"Node at position {i} has id {node.id}")
        succ: Dict[int, List[int]] = {n.id: [] for n in self.nodes}
        pred: Dict[int, List[int]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            if e.source not in succ or e.target not in succ:
                raise PreconditionError(f"Edge {e.source}->{e.target} references an unknown node")
            succ[e.source].append(e.target)
            pred[e.target].append(e.source)
        object.__setattr__(self, "_succ", {k: tuple(sorted(v)) for k, v in succ.items()})
        object.__setattr__(self, "_pred", {k: tuple(sorted(v)) for k, v in pred.items()})

    @classmethod
    def from_edges(cls, num_nodes: int, edges: Iterable[Tuple[int, int]],
                   initial: int = 0, terminals: Optional[Sequence[int]] = None) -> "ExecutionGraph":
        """
        Build a bare graph (no observations) from an edge list.

        Terminals default to the nodes without successors.
        """
        edge_set = sorted(set((u, v) for u, v in edges if u != v))
        if terminals is None:
            sources = {u for u, _ in edge_set}
            terminals = [n for n in range(num_nodes) if n not in sources]
        terminal_set = set(terminals)
        nodes = tuple(GraphNode(id=i, name=f"n{i}", is_terminal=i in terminal_set)
                      for i in range(num_nodes))
        return cls(nodes=nodes, edges=tuple(GraphEdge(u, v) for u, v in edge_set),
                   initial=initial, terminals=tuple(sorted(terminal_set)))

    def node(self, node_id: int) -> GraphNode:
        return self.nodes[node_id]

    def node_ids(self) -> List[int]:
        return [n.id for n in self.nodes]

    def successors(self, node_id: int) -> Tuple[int, ...]:
        return self._succ[node_id]

    def predecessors(self, node_id: int) -> Tuple[int, ...]:
        return self._pred[node_id]

    def has_edge(self, source: int, target: int) -> bool:
        return target in self._succ.get(source, ())

    def edge(self, source: int, target: int) -> Optional[GraphEdge]:
        for e in self.edges:
            if e.source == source and e.target == target:
                return e
        return None

    def class_table(self) -> Dict[str, int]:
        """Digest -> node id for every training observation."""
        table: Dict[str, int] = {}
        for node in self.nodes:
            for member in node.members:
                table[member.digest] = node.id
        return table

    def branches(self) -> List[int]:
        """Nodes where executions split into alternative paths."""
        return [n for n in self.node_ids() if len(self.successors(n)) > 1]

    def convergence_points(self) -> List[int]:
        """Nodes where alternative paths rejoin."""
        return [n for n in self.node_ids() if len(self.predecessors(n)) > 1]


def merge_ptas(ptas: Sequence[PtaGraph], cls: EquivalenceClassifier,
               name_of: Callable[[Optional[str]], Optional[str]] = base_label) -> ExecutionGraph:
    """
    Merge PTAs into one execution graph over the classifier's state classes.

    Traces are processed in the given order and observations in index order;
    each observation joins the first existing class it is equivalent to.
    Consecutive observations of the same class collapse into one visit.

    Raises:
        PreconditionError: no PTAs given
        StartStateMismatchError: first states are not all equivalent
    """
    if not ptas:
        raise PreconditionError("merge_ptas needs at least one PTA")

    reps: List[StateObservation] = []
    assigned: List[List[int]] = []
    for pta in ptas:
        seq: List[int] = []
        for obs in pta.nodes:
            for k, rep in enumerate(reps):
                if cls.equivalent(obs, rep):
                    seq.append(k)
                    break
            else:
                cls.register(obs)
                reps.append(obs)
                seq.append(len(reps) - 1)
        assigned.append(seq)
    logger.debug("Assigned %d observations to %d candidate classes",
                 sum(len(s) for s in assigned), len(reps))

    # group candidate classes by union-find root so nodes are the classifier's classes
    root_of = [cls.find(rep.digest) for rep in reps]
    members: Dict[str, List[Tuple[str, int, StateObservation]]] = {}
    for pta, seq in zip(ptas, assigned):
        for obs, k in zip(pta.nodes, seq):
            members.setdefault(root_of[k], []).append((pta.trace_id, obs.index, obs))

    ordered_roots = sorted(members, key=lambda r: min((t, i) for t, i, _ in members[r]))
    node_of_root = {root: node_id for node_id, root in enumerate(ordered_roots)}

    start_nodes = {node_of_root[root_of[seq[0]]] for seq in assigned}
    if len(start_nodes) != 1:
        mismatched = [pta.trace_id for pta, seq in zip(ptas, assigned)
                      if node_of_root[root_of[seq[0]]] != node_of_root[root_of[assigned[0][0]]]]
        raise StartStateMismatchError(
            f"Traces {mismatched} do not start in the same state as '{ptas[0].trace_id}'")
    initial = start_nodes.pop()

    edge_kinds: Dict[Tuple[int, int], Counter] = {}
    signatures: Dict[int, Set[str]] = {}
    walks: List[TraceWalk] = []
    terminals: Set[int] = set()
    for pta, seq in zip(ptas, assigned):
        node_seq = [node_of_root[root_of[k]] for k in seq]
        visits, indices, steps = [node_seq[0]], [0], []
        for i in range(1, len(node_seq)):
            action = pta.edges[i - 1].action
            signatures.setdefault(node_seq[i - 1], set()).add(action.signature)
            if node_seq[i] == node_seq[i - 1]:
                continue
            edge_kinds.setdefault((node_seq[i - 1], node_seq[i]), Counter())[action.kind] += 1
            visits.append(node_seq[i])
            indices.append(i)
            steps.append(action.signature)
        terminals.add(node_seq[-1])
        walks.append(TraceWalk(pta.trace_id, tuple(visits), tuple(indices), tuple(steps)))

    nodes: List[GraphNode] = []
    for node_id, root in enumerate(ordered_roots):
        entries = sorted(members[root], key=lambda e: (e[0], e[1]))
        rep = entries[0][2]
        nodes.append(GraphNode(
            id=node_id,
            name=name_of(rep.label) or rep.display_name,
            representative=rep,
            members=tuple(MemberRef(t, i, o.digest) for t, i, o in entries),
            is_terminal=node_id in terminals,
            action_signatures=tuple(sorted(signatures.get(node_id, ()))),
        ))

    edges = tuple(GraphEdge(u, v, tuple(sorted(kinds.items())))
                  for (u, v), kinds in sorted(edge_kinds.items()))
    graph = ExecutionGraph(nodes=tuple(nodes), edges=edges, initial=initial,
                           terminals=tuple(sorted(terminals)), walks=tuple(walks))
    logger.info("Merged %d traces into %d states and %d edges",
                len(ptas), len(nodes), len(edges))
    return graph


# ---------------------------------------------------------------------------
# Dominators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DominatorInfo:
    """Immediate dominators; the initial node maps to itself."""
    idom: Mapping[int, int]
    initial: int

    def dominators(self, node: int) -> Set[int]:
        """Dom(node), recovered by walking the idom chain."""
        result = {node}
        while node != self.initial:
            node = self.idom[node]
            result.add(node)
        return result

    def dominates(self, d: int, node: int) -> bool:
        return d in self.dominators(node)


def _reachable(g: ExecutionGraph, skip: Optional[int] = None) -> Set[int]:
    if g.initial == skip:
        return set()
    seen = {g.initial}
    queue = deque([g.initial])
    while queue:
        n = queue.popleft()
        for s in g.successors(n):
            if s != skip and s not in seen:
                seen.add(s)
                queue.append(s)
    return seen


def _check_reachable(g: ExecutionGraph) -> None:
    unreachable = sorted(set(g.node_ids()) - _reachable(g))
    if unreachable:
        raise UnreachableNodeError(f"Nodes {unreachable} are not reachable from {g.initial}")


def _postorder(g: ExecutionGraph) -> List[int]:
    order: List[int] = []
    visited = {g.initial}
    stack = [(g.initial, iter(g.successors(g.initial)))]
    while stack:
        node, children = stack[-1]
        for child in children:
            if child not in visited:
                visited.add(child)
                stack.append((child, iter(g.successors(child))))
                break
        else:
            stack.pop()
            order.append(node)
    return order


def compute_dominators(g: ExecutionGraph) -> DominatorInfo:
    """
    Immediate dominators by iterative dataflow over reverse postorder.

    Follows Cooper, Harvey and Kennedy: repeatedly set each node's idom to
    the intersection of its processed predecessors' dominator chains until
    nothing changes. Handles cycles.

    Raises:
        UnreachableNodeError: some node is not reachable from the initial node
    """
    _check_reachable(g)
    postorder = _postorder(g)
    po_num = {n: i for i, n in enumerate(postorder)}
    idom: Dict[int, int] = {g.initial: g.initial}

    def intersect(b1: int, b2: int) -> int:
        while b1 != b2:
            while po_num[b1] < po_num[b2]:
                b1 = idom[b1]
            while po_num[b2] < po_num[b1]:
                b2 = idom[b2]
        return b1

    changed = True
    while changed:
        changed = False
        for b in reversed(postorder):
            if b == g.initial:
                continue
            processed = [p for p in g.predecessors(b) if p in idom]
            new_idom = processed[0]
            for p in processed[1:]:
                new_idom = intersect(p, new_idom)
            if idom.get(b) != new_idom:
                idom[b] = new_idom
                changed = True
    return DominatorInfo(idom=idom, initial=g.initial)


def brute_force_dominators(g: ExecutionGraph) -> DominatorInfo:
    """
    Reference dominators by node removal: d dominates s when deleting d
    disconnects s from the initial node. Only for small graphs.

    Raises:
        OracleSizeError: more than 16 nodes
        UnreachableNodeError: some node is not reachable from the initial node
    """
    if len(g.nodes) > BRUTE_FORCE_LIMIT:
        raise OracleSizeError(f"Brute-force oracle supports at most {BRUTE_FORCE_LIMIT} nodes")
    _check_reachable(g)

    doms: Dict[int, Set[int]] = {n: {n, g.initial} for n in g.node_ids()}
    for d in g.node_ids():
        if d == g.initial:
            continue
        still_reachable = _reachable(g, skip=d)
        for s in g.node_ids():
            if s != d and s not in still_reachable:
                doms[s].add(d)

    idom: Dict[int, int] = {g.initial: g.initial}
    for s in g.node_ids():
        if s == g.initial:
            continue
        strict = doms[s] - {s}
        for d in strict:
            if strict <= doms[d]:
                idom[s] = d
                break
    return DominatorInfo(idom=idom, initial=g.initial)


# ---------------------------------------------------------------------------
# Dominator tree
# ---------------------------------------------------------------------------

def order_tree_nodes(nodes: Iterable[int], edges: Iterable[Tuple[int, int]], initial: int,
                     key: Callable[[int], str]) -> Tuple[int, ...]:
    """Topological order of a tree: parents first, ties broken by ``key``."""
    children: Dict[int, List[int]] = {}
    for parent, child in edges:
        children.setdefault(parent, []).append(child)
    heap = [(key(initial), initial)]
    order: List[int] = []
    while heap:
        _, n = heapq.heappop(heap)
        order.append(n)
        for c in children.get(n, ()):
            heapq.heappush(heap, (key(c), c))
    missing = set(nodes) - set(order)
    if missing:
        raise PreconditionError(f"Tree nodes {sorted(missing)} are not connected to {initial}")
    return tuple(order)


@dataclass(frozen=True)
class DominatorTree:
    """The essential-state model: nodes V_D and idom links E_D."""
    nodes: Tuple[int, ...]
    edges: Tuple[Tuple[int, int], ...]
    initial: int
    terminals: Tuple[int, ...]
    topo_order: Tuple[int, ...]
    graph: ExecutionGraph = field(repr=False, compare=False)

    def node(self, node_id: int) -> GraphNode:
        return self.graph.node(node_id)

    def parent(self, node_id: int) -> Optional[int]:
        for p, c in self.edges:
            if c == node_id:
                return p
        return None

    def children(self, node_id: int) -> List[int]:
        return [c for p, c in self.edges if p == node_id]

    def paths(self) -> List[Tuple[int, ...]]:
        """Root-to-terminal paths, ordered by terminal representative digest."""
        result = []
        for t in sorted(self.terminals, key=lambda n: self.node(n).sort_key):
            chain = [t]
            while chain[-1] != self.initial:
                parent = self.parent(chain[-1])
                if parent is None:
                    raise PreconditionError(f"Terminal {t} is not connected to the initial node")
                chain.append(parent)
            result.append(tuple(reversed(chain)))
        return result

    def essential_names(self) -> List[str]:
        return [self.node(n).name for n in self.topo_order]


def extract_dominator_tree(g: ExecutionGraph, dom: DominatorInfo) -> DominatorTree:
    """
    Keep only states on some terminal's immediate-dominator chain.

    Starting from every terminal, walk idom links back to the initial node,
    adding each visited node to V_D and each (idom, current) link to E_D.
    """
    if not g.terminals:
        raise PreconditionError("Graph has no terminal states")
    s0 = g.initial
    v_d: Set[int] = {s0}
    e_d: Set[Tuple[int, int]] = set()
    for t in g.terminals:
        v_d.add(t)
        current = t
        while current != s0:
            parent = dom.idom[current]
            v_d.add(parent)
            e_d.add((parent, current))
            current = parent

    edges = tuple(sorted(e_d))
    topo = order_tree_nodes(v_d, edges, s0, key=lambda n: g.node(n).sort_key)
    return DominatorTree(nodes=tuple(sorted(v_d)), edges=edges, initial=s0,
                         terminals=tuple(sorted(g.terminals)), topo_order=topo, graph=g)


# ---------------------------------------------------------------------------
# End-to-end
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LearnedModel:
    """Everything validation needs: graph, dominators, tree and thresholds."""
    graph: ExecutionGraph
    dominators: DominatorInfo
    tree: DominatorTree
    thresholds: EquivalenceThresholds
    training_ids: Tuple[str, ...]

    def class_table(self) -> Dict[str, int]:
        return self.graph.class_table()

    def optional_nodes(self) -> List[int]:
        essential = set(self.tree.nodes)
        return [n for n in self.graph.node_ids() if n not in essential]


def learn_model(traces: Sequence[Trace], cls: EquivalenceClassifier) -> LearnedModel:
    """Build PTAs, merge them, compute dominators and extract the dominator tree."""
    if not traces:
        raise PreconditionError("At least one training trace is required")
    low, high = RECOMMENDED_TRAINING
    if not low <= len(traces) <= high:
        logger.warning("Learning from %d traces; %d-%d passing traces are recommended",
                       len(traces), low, high)

    ptas = [construct_pta(t) for t in traces]
    graph = merge_ptas(ptas, cls)
    dominators = compute_dominators(graph)
    tree = extract_dominator_tree(graph, dominators)
    logger.info("Essential states: %s", ", ".join(tree.essential_names()))
    return LearnedModel(graph=graph, dominators=dominators, tree=tree,
                        thresholds=cls.thresholds, training_ids=tuple(t.id for t in traces))

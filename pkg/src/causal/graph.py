"""Two-layer causal graph of the simulator and backdoor adjustment queries.

Each variable has an initial-state parent set (used at t=1) and a transition
parent set split into same-time (lag 0) and previous-time (lag 1) parents.
Queries about specific time points run on the graph unrolled over time.
"""
from dataclasses import dataclass, field
import logging

import networkx as nx
import pandas as pd

from common.errors import CycleError, GraphError, UnknownParentError

logger = logging.getLogger(__name__)

INITIAL = "initial"
TRANSITION = "transition"
MINIMAL = "minimal"
FULL_PRETREATMENT = "full_pretreatment"

_EDU_BLOCK = ["age", "education", "workclass", "race", "sex", "native-country"]

# Direct causes of every variable. Declaration order breaks ties in orderings.
DEFAULT_GRAPH_SPEC = {
    "age": {"parents": [], "seq_parents_curr": [], "seq_parents_prev": ["age"]},
    "sex": {"parents": [], "seq_parents_curr": [], "seq_parents_prev": ["sex"]},
    "race": {"parents": [], "seq_parents_curr": [], "seq_parents_prev": ["race"]},
    "native-country": {"parents": [], "seq_parents_curr": [], "seq_parents_prev": ["native-country"]},
    "education": {
        "parents": ["age", "race", "sex", "native-country"],
        "seq_parents_curr": [],
        "seq_parents_prev": ["education", "studies"],
    },
    "workclass": {
        "parents": ["age", "education", "race", "sex", "native-country"],
        "seq_parents_curr": ["age", "education", "race", "sex", "native-country"],
        "seq_parents_prev": ["workclass"],
    },
    "marital-status": {
        "parents": ["age", "education", "workclass", "race", "native-country"],
        "seq_parents_curr": ["age"],
        "seq_parents_prev": ["marital-status", "studies"],
    },
    "occupation": {
        "parents": list(_EDU_BLOCK),
        "seq_parents_curr": list(_EDU_BLOCK),
        "seq_parents_prev": ["occupation", "studies"],
    },
    "relationship": {
        "parents": ["age", "education", "workclass", "marital-status", "race", "sex"],
        "seq_parents_curr": ["age", "education", "workclass", "marital-status", "race", "sex"],
        "seq_parents_prev": ["relationship"],
    },
    "hours-per-week": {
        "parents": ["age", "education", "workclass", "marital-status", "occupation",
                    "race", "relationship", "sex"],
        "seq_parents_curr": ["age", "education", "workclass", "marital-status", "occupation",
                             "race", "relationship", "sex"],
        "seq_parents_prev": ["hours-per-week"],
    },
    "capital-net": {
        "parents": ["age", "education", "workclass", "occupation", "marital-status",
                    "race", "relationship", "sex"],
        "seq_parents_curr": ["age", "education", "workclass", "occupation", "marital-status",
                             "race", "relationship", "sex"],
        "seq_parents_prev": ["capital-net"],
    },
    "studies": {
        "parents": ["age", "sex", "education", "relationship"],
        "seq_parents_curr": ["age", "sex", "education", "relationship"],
        "seq_parents_prev": ["income", "studies"],
    },
    "income": {
        "parents": ["age", "education", "workclass", "occupation", "marital-status", "race",
                    "sex", "hours-per-week", "capital-net", "studies"],
        "seq_parents_curr": ["age", "education", "workclass", "occupation", "marital-status",
                             "hours-per-week", "race", "sex", "capital-net", "studies"],
        "seq_parents_prev": ["income", "studies"],
    },
}


@dataclass(frozen=True)
class AdjustmentSet:
    treatment: tuple
    outcome: tuple
    members: frozenset
    mode: str = MINIMAL

    def variables_at(self, t):
        return sorted(v for v, s in self.members if s == t)


@dataclass(frozen=True)
class ScmGraph:
    variables: tuple
    initial_parents: dict
    trans_parents_curr: dict
    trans_parents_prev: dict
    _layers: dict = field(default_factory=dict, repr=False, compare=False)

    def position(self, variable):
        return self.variables.index(variable)

    def layer_graph(self, layer):
        """Same-time DiGraph of one layer, parent -> child."""
        if layer not in self._layers:
            parents = self.initial_parents if layer == INITIAL else self.trans_parents_curr
            g = nx.DiGraph()
            g.add_nodes_from(self.variables)
            for child, ps in parents.items():
                g.add_edges_from((p, child) for p in ps)
            self._layers[layer] = g
        return self._layers[layer]

    def parents_of(self, variable, layer):
        if layer == INITIAL:
            return tuple(self.initial_parents[variable])
        return tuple(self.trans_parents_curr[variable]) + tuple(self.trans_parents_prev[variable])

    def to_spec(self):
        return {
            v: {
                "parents": list(self.initial_parents[v]),
                "seq_parents_curr": list(self.trans_parents_curr[v]),
                "seq_parents_prev": list(self.trans_parents_prev[v]),
            }
            for v in self.variables
        }


def build_graph(spec=None):
    """Validate an edge specification and build the graph.

    Args:
        spec: Mapping variable -> {"parents", "seq_parents_curr", "seq_parents_prev"};
            the default simulator graph when omitted

    Returns:
        ScmGraph
    """
    spec = DEFAULT_GRAPH_SPEC if spec is None else spec
    if not spec:
        raise GraphError("graph specification declares no variables")

    variables = tuple(spec)
    declared = set(variables)
    layers = {"initial": {}, "transition (same-time)": {}, "transition (previous-time)": {}}
    keys = {"initial": "parents", "transition (same-time)": "seq_parents_curr",
            "transition (previous-time)": "seq_parents_prev"}

    for variable, entry in spec.items():
        entry = entry or {}
        for layer, key in keys.items():
            parents = tuple(dict.fromkeys(entry.get(key) or ()))
            for parent in parents:
                if parent not in declared:
                    raise UnknownParentError(variable, parent, layer)
            layers[layer][variable] = parents

    graph = ScmGraph(
        variables=variables,
        initial_parents=layers["initial"],
        trans_parents_curr=layers["transition (same-time)"],
        trans_parents_prev=layers["transition (previous-time)"],
    )

    for layer, name in ((INITIAL, "initial"), (TRANSITION, "transition (same-time)")):
        try:
            cycle = nx.find_cycle(graph.layer_graph(layer))
        except nx.NetworkXNoCycle:
            continue
        raise CycleError(name, [(u, v) for u, v in cycle])

    logger.debug("Built graph with %d variables", len(variables))
    return graph


def topological_order(graph, layer=INITIAL):
    """Order variables so each follows its same-layer parents; ties by declaration order."""
    if layer not in (INITIAL, TRANSITION):
        raise GraphError(f"unknown layer '{layer}'")
    return list(nx.lexicographical_topological_sort(graph.layer_graph(layer), key=graph.position))


def unroll(graph, horizon):
    """Materialize the time-indexed DAG over nodes (variable, t), t = 1..horizon."""
    if horizon < 1:
        raise GraphError(f"unroll horizon must be at least 1, got {horizon}")
    g = nx.DiGraph()
    for t in range(1, horizon + 1):
        g.add_nodes_from((v, t) for v in graph.variables)
        for v in graph.variables:
            if t == 1:
                g.add_edges_from(((p, 1), (v, 1)) for p in graph.initial_parents[v])
            else:
                g.add_edges_from(((p, t), (v, t)) for p in graph.trans_parents_curr[v])
                g.add_edges_from(((p, t - 1), (v, t)) for p in graph.trans_parents_prev[v])
    return g


def is_valid_adjustment(unrolled, treatment, outcome, members):
    """Backdoor criterion: no member descends from the treatment and all backdoor paths are blocked."""
    members = set(members)
    if members & nx.descendants(unrolled, treatment):
        return False
    cut = unrolled.copy()
    cut.remove_edges_from(list(unrolled.out_edges(treatment)))
    return nx.is_d_separator(cut, {treatment}, {outcome}, members)


def adjustment_set(graph, treatment, outcome, mode=MINIMAL):
    """Backdoor adjustment set for the effect of one time-indexed node on another.

    Args:
        graph: ScmGraph
        treatment: (variable, t) of the intervened node
        outcome: (variable, t) of the outcome node, strictly later than the treatment
        mode: "minimal" for the direct causes of the treatment,
            "full_pretreatment" for everything observable up to the treatment time

    Returns:
        AdjustmentSet
    """
    (a_var, a_t), (y_var, y_t) = treatment, outcome
    for var in (a_var, y_var):
        if var not in graph.variables:
            raise GraphError(f"unknown variable '{var}'")
    if not 1 <= a_t < y_t:
        raise GraphError(
            f"treatment time {a_t} must lie in [1, {y_t - 1}] for an outcome at t={y_t}"
        )
    if mode not in (MINIMAL, FULL_PRETREATMENT):
        raise GraphError(f"unknown adjustment mode '{mode}'")

    unrolled = unroll(graph, y_t)
    treatment, outcome = (a_var, a_t), (y_var, y_t)
    if mode == MINIMAL:
        members = set(unrolled.predecessors(treatment))
    else:
        downstream = nx.descendants(unrolled, treatment)
        members = {
            node for node in unrolled.nodes
            if node[1] <= a_t and node != treatment and node not in downstream
        }

    if not is_valid_adjustment(unrolled, treatment, outcome, members):
        raise GraphError(f"{mode} set for {treatment} -> {outcome} fails the backdoor criterion")
    return AdjustmentSet(treatment=treatment, outcome=outcome, members=frozenset(members), mode=mode)


def edges_frame(graph):
    """Edge list with columns child, parent, layer, lag."""
    rows = []
    for v in graph.variables:
        rows += [(v, p, INITIAL, 0) for p in graph.initial_parents[v]]
        rows += [(v, p, TRANSITION, 0) for p in graph.trans_parents_curr[v]]
        rows += [(v, p, TRANSITION, 1) for p in graph.trans_parents_prev[v]]
    return pd.DataFrame(rows, columns=["child", "parent", "layer", "lag"])

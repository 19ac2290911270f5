"""Unit tests for causal.graph module."""
import networkx as nx
import pytest

from common.errors import CycleError, GraphError, UnknownParentError
from causal.graph import (
    DEFAULT_GRAPH_SPEC,
    FULL_PRETREATMENT,
    INITIAL,
    MINIMAL,
    TRANSITION,
    adjustment_set,
    build_graph,
    edges_frame,
    is_valid_adjustment,
    topological_order,
    unroll,
)
from simulator.config import load_config
from tests.conftest import CONFIG_PATH


@pytest.fixture(scope="module")
def graph():
    return build_graph()


class TestBuildGraph:
    """Test validation of edge specifications."""

    def test_default_graph(self, graph):
        """Test that the default graph declares every simulator variable."""
        assert graph.variables == tuple(DEFAULT_GRAPH_SPEC)
        assert graph.parents_of("studies", INITIAL) == ("age", "sex", "education", "relationship")
        assert "income" in graph.parents_of("studies", TRANSITION)

    def test_round_trip_spec(self, graph):
        assert build_graph(graph.to_spec()).to_spec() == graph.to_spec()

    def test_cycle_rejected(self):
        """Test that a same-time cycle raises CycleError."""
        spec = {"a": {"parents": ["b"]}, "b": {"parents": ["a"]}}
        with pytest.raises(CycleError):
            build_graph(spec)

    def test_transition_cycle_rejected(self):
        spec = {"a": {"seq_parents_curr": ["b"]}, "b": {"seq_parents_curr": ["a"]}}
        with pytest.raises(CycleError):
            build_graph(spec)

    def test_previous_time_self_edge_allowed(self):
        graph = build_graph({"a": {"seq_parents_prev": ["a"]}})
        assert graph.parents_of("a", TRANSITION) == ("a",)

    def test_unknown_parent(self):
        with pytest.raises(UnknownParentError):
            build_graph({"a": {"parents": ["missing"]}})

    def test_empty_spec(self):
        with pytest.raises(GraphError):
            build_graph({})


class TestTopologicalOrder:
    """Test per-layer variable orderings."""

    @pytest.mark.parametrize("layer", [INITIAL, TRANSITION])
    def test_parents_precede_children(self, graph, layer):
        order = topological_order(graph, layer)
        position = {v: i for i, v in enumerate(order)}
        same_time = graph.initial_parents if layer == INITIAL else graph.trans_parents_curr
        for child, parents in same_time.items():
            assert all(position[p] < position[child] for p in parents)

    def test_ties_follow_declaration_order(self, graph):
        assert topological_order(graph, INITIAL)[:4] == ["age", "sex", "race", "native-country"]

    def test_unknown_layer(self, graph):
        with pytest.raises(GraphError):
            topological_order(graph, "sideways")


class TestUnroll:
    """Test the time-indexed graph."""

    def test_node_count(self, graph):
        assert unroll(graph, 3).number_of_nodes() == 3 * len(graph.variables)

    def test_lagged_edges(self, graph):
        unrolled = unroll(graph, 2)
        assert unrolled.has_edge(("income", 1), ("studies", 2))
        assert not unrolled.has_edge(("income", 1), ("studies", 1))

    def test_invalid_horizon(self, graph):
        with pytest.raises(GraphError):
            unroll(graph, 0)


class TestAdjustmentSet:
    """Test backdoor adjustment queries."""

    def test_minimal_set_is_treatment_parents(self, graph):
        """Test that the minimal set holds the direct causes of the treatment."""
        found = adjustment_set(graph, ("studies", 2), ("income", 4), MINIMAL)
        assert found.members == frozenset({
            ("age", 2), ("sex", 2), ("education", 2), ("relationship", 2), ("income", 1), ("studies", 1),
        })
        assert found.variables_at(1) == ["income", "studies"]

    def test_full_pretreatment_excludes_descendants(self, graph):
        found = adjustment_set(graph, ("studies", 2), ("income", 4), FULL_PRETREATMENT)
        assert ("income", 2) not in found.members
        assert ("hours-per-week", 1) in found.members
        assert ("studies", 2) not in found.members

    def test_empty_set_fails_backdoor(self, graph):
        unrolled = unroll(graph, 3)
        assert not is_valid_adjustment(unrolled, ("studies", 1), ("income", 3), set())

    def test_descendant_member_invalid(self, graph):
        unrolled = unroll(graph, 3)
        members = set(unrolled.predecessors(("studies", 1))) | {("income", 2)}
        assert not is_valid_adjustment(unrolled, ("studies", 1), ("income", 3), members)

    @pytest.mark.parametrize("treatment, outcome", [
        (("studies", 3), ("income", 3)),
        (("studies", 0), ("income", 3)),
        (("unknown", 1), ("income", 3)),
    ])
    def test_invalid_queries(self, graph, treatment, outcome):
        with pytest.raises(GraphError):
            adjustment_set(graph, treatment, outcome)

    def test_unknown_mode(self, graph):
        with pytest.raises(GraphError):
            adjustment_set(graph, ("studies", 1), ("income", 2), mode="maximal")


class TestEdgesFrame:
    """Test the flat edge listing."""

    def test_columns_and_lags(self, graph):
        frame = edges_frame(graph)
        assert list(frame.columns) == ["child", "parent", "layer", "lag"]
        lagged = frame[(frame["child"] == "income") & (frame["lag"] == 1)]
        assert set(lagged["parent"]) == {"income", "studies"}


class TestDefaultGraph:
    """Test that the built-in graph matches the shipped config."""

    def test_shipped_config_declares_default_edges(self, graph):
        shipped = build_graph(load_config(CONFIG_PATH).graph_spec())
        assert shipped.variables == graph.variables
        assert shipped.to_spec() == graph.to_spec()

    def test_workclass_redraw_parents_are_edges(self, graph):
        """Test that workclass at t depends on the same-time covariates it is redrawn from."""
        unrolled = unroll(graph, 3)
        for parent in ("age", "education", "race", "sex", "native-country"):
            assert unrolled.has_edge((parent, 2), ("workclass", 2))
        assert nx.has_path(unrolled, ("studies", 1), ("workclass", 2))

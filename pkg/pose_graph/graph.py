import logging

from imu.types import NavState
from nvlio.exceptions import DanglingReferenceError, GraphError

from .factors import PriorFactor

logger = logging.getLogger(__name__)


class FactorGraph:
    """
    Estados de navegación por keyframe y la lista de factores que los vinculan.

    `values` es la estimación vigente; optimize() la reemplaza por el óptimo.
    """

    def __init__(self):
        self.values = {}
        self.factors = []

    def __len__(self):
        return len(self.values)

    def __contains__(self, node):
        return node in self.values

    @property
    def nodes(self):
        return sorted(self.values)

    def add_node(self, node, state):
        if node in self.values:
            raise GraphError(f'El nodo {node} ya existe')
        if not isinstance(state, NavState):
            state = NavState(state)
        self.values[node] = state
        return self

    def add_factor(self, factor):
        # un prior puede crear el nodo del keyframe nuevo
        if isinstance(factor, PriorFactor) and factor.node not in self.values:
            self.values[factor.node] = NavState(factor.pose)
        missing = [node for node in factor.nodes if node not in self.values]
        if missing:
            raise DanglingReferenceError(
                f'{factor!r} referencia nodos inexistentes: {", ".join(map(str, missing))}')
        self.factors.append(factor)
        return self

    def factors_of_kind(self, kind):
        return [f for f in self.factors if f.kind == kind]

    def has_prior(self):
        return any(isinstance(f, PriorFactor) for f in self.factors)

    def components(self):
        """Componentes conexas según los factores, como listas ordenadas de nodos."""
        parent = {node: node for node in self.values}

        def find(node):
            while parent[node] != node:
                parent[node] = parent[parent[node]]
                node = parent[node]
            return node

        for factor in self.factors:
            nodes = factor.nodes
            root = find(nodes[0])
            for other in nodes[1:]:
                parent[find(other)] = root

        groups = {}
        for node in sorted(self.values):
            groups.setdefault(find(node), []).append(node)
        return sorted(groups.values())

    def is_connected(self):
        return len(self.components()) <= 1

    def cost(self, values=None):
        values = self.values if values is None else values
        return sum(factor.cost(values) for factor in self.factors)

    def summary(self):
        kinds = {}
        for factor in self.factors:
            kinds[factor.kind] = kinds.get(factor.kind, 0) + 1
        return {'nodes': len(self.values), 'factors': len(self.factors), **kinds}

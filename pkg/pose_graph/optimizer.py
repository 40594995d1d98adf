"""
Levenberg-Marquardt por lotes sobre el producto de variedades de los nodos.

Cada iteración arma el sistema normal denso de los bloques referenciados por
algún factor, lo amortigua con λ·diag(H) y lo resuelve por Cholesky. Un paso se
acepta solo si el costo no sube.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from nvlio.exceptions import DisconnectedGraphError, GraphError, NumericalError

from .factors import BLOCK_ORDER, BLOCK_SIZE, retract

logger = logging.getLogger(__name__)

INITIAL_LAMBDA = 1e-4
MAX_LAMBDA = 1e12
MIN_LAMBDA = 1e-12
DIAGONAL_FLOOR = 1e-9
ZERO_COST = 1e-20


@dataclass
class OptimizationResult:
    values: dict
    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool


def _layout(factors):
    keys = sorted({key for factor in factors for key in factor.keys},
                  key=lambda key: (key[0], BLOCK_ORDER[key[1]]))
    offsets = {}
    size = 0
    for key in keys:
        offsets[key] = size
        size += BLOCK_SIZE[key[1]]
    return keys, offsets, size


def _normal_system(factors, values, offsets, size):
    H = np.zeros((size, size))
    g = np.zeros(size)
    for factor in factors:
        e, jacobians = factor.whitened(values)
        spans = []
        for key, J in zip(factor.keys, jacobians):
            start = offsets[key]
            spans.append((slice(start, start + J.shape[1]), J))
        for a, Ja in spans:
            g[a] += Ja.T @ e
            for b, Jb in spans:
                H[a, b] += Ja.T @ Jb
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(g))):
        raise NumericalError('Sistema normal no finito en la optimización del grafo')
    return H, g


def _apply(values, keys, offsets, delta):
    updated = dict(values)
    for node, kind in keys:
        start = offsets[(node, kind)]
        step = delta[start:start + BLOCK_SIZE[kind]]
        updated[node] = retract(updated[node], kind, step)
    return updated


def _check(graph):
    if not graph.values:
        raise GraphError('El grafo está vacío')
    if not graph.has_prior():
        raise GraphError('El grafo necesita al menos un factor prior de pose')
    components = graph.components()
    if len(components) > 1:
        raise DisconnectedGraphError(
            f'El grafo tiene {len(components)} componentes desconectadas: '
            + ', '.join(str(c[0]) for c in components))


def optimize(graph, max_iterations=50, tolerance=1e-9):
    """Optimiza `graph` y escribe el óptimo en graph.values."""
    _check(graph)
    factors = graph.factors
    keys, offsets, size = _layout(factors)
    values = dict(graph.values)
    cost = initial_cost = graph.cost(values)

    lam = INITIAL_LAMBDA
    converged = cost < ZERO_COST
    iteration = 0
    while not converged and iteration < max_iterations:
        iteration += 1
        H, g = _normal_system(factors, values, offsets, size)
        damping = np.maximum(np.diag(H), DIAGONAL_FLOOR)

        accepted = False
        while lam <= MAX_LAMBDA:
            try:
                chol = cho_factor(H + lam * np.diag(damping), lower=True)
            except LinAlgError:
                lam *= 10.0
                if lam > MAX_LAMBDA:
                    raise NumericalError(
                        'Sistema indefinido aun con amortiguamiento máximo') from None
                continue
            delta = -cho_solve(chol, g)
            candidate = _apply(values, keys, offsets, delta)
            new_cost = graph.cost(candidate)
            if np.isfinite(new_cost) and new_cost <= cost:
                accepted = True
                break
            lam *= 10.0

        if not accepted:
            # ningún paso baja el costo: mínimo local
            converged = True
            break

        decrease = cost - new_cost
        values, previous, cost = candidate, cost, new_cost
        lam = max(lam / 10.0, MIN_LAMBDA)
        logger.debug('optimize it=%d costo=%.6g λ=%.1e', iteration, cost, lam)
        if cost < ZERO_COST or decrease <= tolerance * previous:
            converged = True

    graph.values = values
    logger.info('optimize: nodos=%d factores=%d costo %.6g → %.6g en %d iteraciones',
                len(values), len(factors), initial_cost, cost, iteration)
    return OptimizationResult(values, initial_cost, cost, iteration, converged)

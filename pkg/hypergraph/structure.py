import logging

import numpy as np

from autodiff.segments import SegmentMap

logger = logging.getLogger("Hypergraph")


class HypergraphError(ValueError):
    """Base class for invalid incidence structures."""


class OutOfRangeIndex(HypergraphError):
    pass


class DuplicatePair(HypergraphError):
    pass


class Hypergraph:
    """
    Immutable incidence structure with CSR views by node and by hyperedge.

    The sorted (node, hyperedge) pair list is authoritative; both CSR views and
    the segment maps used by propagation are derived from it.
    """

    def __init__(self, pairs, num_nodes, num_hyperedges):
        # Callers go through build_hypergraph, which validates and sorts
        self.num_nodes = int(num_nodes)
        self.num_hyperedges = int(num_hyperedges)
        self.pairs = pairs
        self.pairs.setflags(write=False)

        nodes, edges = pairs[:, 0], pairs[:, 1]
        self.node_degrees = np.bincount(nodes, minlength=self.num_nodes)
        self.edge_degrees = np.bincount(edges, minlength=self.num_hyperedges)

        # pairs are sorted by (node, edge): node-major CSR falls out directly
        node_offsets = np.concatenate([[0], np.cumsum(self.node_degrees)])
        by_edge = np.lexsort((nodes, edges))
        edge_offsets = np.concatenate([[0], np.cumsum(self.edge_degrees)])

        # segments = nodes, rows = hyperedges (hyperedge-to-node direction)
        self.node_map = SegmentMap(node_offsets, edges, self.num_hyperedges)
        # segments = hyperedges, rows = nodes (node-to-hyperedge direction)
        self.edge_map = SegmentMap(edge_offsets, nodes[by_edge], self.num_nodes)
        self.empty_hyperedges = self.edge_map.empty
        self._tiles = {}

    @property
    def num_incidences(self):
        return int(self.pairs.shape[0])

    @property
    def csr_by_node(self):
        """For each node, its sorted incident hyperedges."""
        return [self.node_map.segment(v) for v in range(self.num_nodes)]

    @property
    def csr_by_edge(self):
        """For each hyperedge, its sorted member nodes."""
        return [self.edge_map.segment(e) for e in range(self.num_hyperedges)]

    def incident_edges(self, node):
        return self.node_map.segment(node)

    def members(self, edge):
        return self.edge_map.segment(edge)

    def incidence_matrix(self):
        """Dense N×M 0/1 incidence matrix."""
        dense = np.zeros((self.num_nodes, self.num_hyperedges))
        dense[self.pairs[:, 0], self.pairs[:, 1]] = 1.0
        return dense

    def tile(self, times):
        """
        Disjoint union of `times` copies; copy s owns nodes s·N.. and hyperedges s·M...

        Args:
            times (int): Number of copies

        Returns:
            Hypergraph: Cached tiled structure
        """
        if times == 1:
            return self
        if times not in self._tiles:
            shift = np.arange(times)[:, None, None] * np.array([self.num_nodes, self.num_hyperedges])
            pairs = (self.pairs[None, :, :] + shift).reshape(-1, 2)
            self._tiles[times] = Hypergraph(np.ascontiguousarray(pairs), self.num_nodes * times,
                                            self.num_hyperedges * times)
        return self._tiles[times]

    def permute(self, node_perm, edge_perm):
        """
        Relabel nodes and hyperedges: old node v becomes node_perm[v].

        Returns:
            Hypergraph: Relabelled structure
        """
        node_perm = np.asarray(node_perm, dtype=np.int64)
        edge_perm = np.asarray(edge_perm, dtype=np.int64)
        moved = np.stack([node_perm[self.pairs[:, 0]], edge_perm[self.pairs[:, 1]]], axis=1)
        return build_hypergraph(moved, self.num_nodes, self.num_hyperedges)

    def sub_pairs(self, edge_mask):
        """Pairs whose hyperedge is selected by a boolean mask over hyperedges."""
        return self.pairs[np.asarray(edge_mask, dtype=bool)[self.pairs[:, 1]]]

    def __eq__(self, other):
        if not isinstance(other, Hypergraph):
            return NotImplemented
        return (self.num_nodes == other.num_nodes and self.num_hyperedges == other.num_hyperedges
                and np.array_equal(self.pairs, other.pairs))

    def __hash__(self):
        return hash((self.num_nodes, self.num_hyperedges, self.pairs.tobytes()))

    def __repr__(self):
        return f"Hypergraph(N={self.num_nodes}, M={self.num_hyperedges}, E={self.num_incidences})"


def build_hypergraph(pairs, num_nodes, num_hyperedges):
    """
    Validate an incidence pair list and build the hypergraph.

    Args:
        pairs (iterable): (node, hyperedge) index pairs
        num_nodes (int): Node count N
        num_hyperedges (int): Hyperedge count M

    Returns:
        Hypergraph: Structure with pairs sorted lexicographically
    """
    arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=np.int64)
    if arr.size == 0:
        arr = np.zeros((0, 2), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise HypergraphError(f"pairs must be (node, hyperedge) tuples, got shape {arr.shape}")

    bad_node = (arr[:, 0] < 0) | (arr[:, 0] >= num_nodes)
    bad_edge = (arr[:, 1] < 0) | (arr[:, 1] >= num_hyperedges)
    if np.any(bad_node | bad_edge):
        v, e = arr[np.argmax(bad_node | bad_edge)]
        raise OutOfRangeIndex(f"pair ({v}, {e}) outside N={num_nodes}, M={num_hyperedges}")

    order = np.lexsort((arr[:, 1], arr[:, 0]))
    arr = np.ascontiguousarray(arr[order])
    if arr.shape[0] > 1:
        dup = np.all(arr[1:] == arr[:-1], axis=1)
        if np.any(dup):
            v, e = arr[1:][np.argmax(dup)]
            raise DuplicatePair(f"pair ({v}, {e}) listed more than once")

    hg = Hypergraph(arr, num_nodes, num_hyperedges)
    empty = int(hg.empty_hyperedges.sum())
    if empty:
        logger.warning(f"{empty} hyperedges have no members; they propagate nothing")
    return hg

"""In-process multi-node simulation of the score-matching fit.

Each node keeps its raw rows and its own partition.  Only two kinds of
message cross the simulated wire:

* ``beta-broadcast``: coordinator -> node, the current iterate (p words);
* ``representative-upload``: node -> coordinator, K' points of
  (weight, y~, x~) = K' (p + 2) words.

A word is one 8-byte float.  Round 0 uploads mean representatives (there is
no iterate to broadcast yet); rounds 1..T broadcast the iterate and upload
score-matching representatives built locally.  Because every block is
summarized from its own rows only, the coordinator sees exactly the points a
single process would build on the concatenated data.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._io import text_sink
from .errors import ConfigError
from .glm import DEFAULT_MAX_ITER, DEFAULT_TOL, Dataset, FitResult, GlmFamily, WeightedData, fisher_scoring_fit
from .partition import PartitionSpec, from_labels
from .representatives import DEFAULT_T, mean_representatives, smr_representatives

BETA_BROADCAST = "beta-broadcast"
REP_UPLOAD = "representative-upload"
MESSAGE_KINDS = (BETA_BROADCAST, REP_UPLOAD)
COORDINATOR = -1


@dataclass
class NodeState:
    node_id: int
    data: Dataset
    part: PartitionSpec
    words_sent: int = 0
    words_received: int = 0

    def __post_init__(self):
        if self.part.n != self.data.n:
            raise ConfigError(f"node {self.node_id}: partition covers {self.part.n} rows, shard has {self.data.n}")


@dataclass(frozen=True)
class WireMessage:
    round: int
    sender: int
    receiver: int
    kind: str
    words: int
    payload: tuple = field(repr=False, compare=False, default=())

    def __post_init__(self):
        if self.kind not in MESSAGE_KINDS:
            raise ValueError(f"unknown message kind {self.kind!r}")

    @property
    def node(self) -> int:
        return self.receiver if self.kind == BETA_BROADCAST else self.sender


class Wire:
    """Ordered message log with per-node word accounting."""

    def __init__(self, nodes: list[NodeState]):
        self.by_id = {nd.node_id: nd for nd in nodes}
        self.log: list[WireMessage] = []

    def broadcast(self, rnd: int, beta: np.ndarray) -> None:
        for nid in sorted(self.by_id):
            msg = WireMessage(rnd, COORDINATOR, nid, BETA_BROADCAST, int(beta.size), (beta.copy(),))
            self.by_id[nid].words_received += msg.words
            self.log.append(msg)

    def upload(self, rnd: int, node: NodeState, w, X, y) -> WireMessage:
        msg = WireMessage(rnd, node.node_id, COORDINATOR, REP_UPLOAD, int(w.size * (X.shape[1] + 2)), (w, X, y))
        node.words_sent += msg.words
        self.log.append(msg)
        return msg


def make_nodes(data: Dataset, part: PartitionSpec, n_nodes: int) -> list[NodeState]:
    """Split a dataset by whole blocks into ``n_nodes`` contiguous groups of
    blocks; each node receives its rows (in original order) and the local
    partition renumbered from 0.  Nodes left without any block (more nodes
    than blocks) hold an empty shard and are excluded with a warning."""
    if n_nodes < 1:
        raise ConfigError("need at least one node")
    cuts = np.array_split(np.arange(part.k), n_nodes)
    nodes = []
    for nid, blocks in enumerate(cuts):
        if blocks.size == 0:
            warnings.warn(f"node {nid} has an empty shard and is excluded", RuntimeWarning, stacklevel=2)
            continue
        rows = np.flatnonzero((part.labels >= blocks[0]) & (part.labels <= blocks[-1]))
        nodes.append(NodeState(nid, data.subset(rows), from_labels(part.labels[rows] - blocks[0], part.method)))
    return nodes


def concatenate(nodes: list[NodeState]) -> tuple[Dataset, PartitionSpec]:
    """The conceptual full dataset and partition (block ids offset per node)."""
    X = np.concatenate([nd.data.X for nd in nodes])
    y = np.concatenate([nd.data.y for nd in nodes])
    labels, off = [], 0
    for nd in nodes:
        labels.append(nd.part.labels + off)
        off += nd.part.k
    method = nodes[0].part.method
    return Dataset(X, y, nodes[0].data.columns), from_labels(np.concatenate(labels), method)


def _gather(msgs: list[WireMessage]) -> WeightedData:
    w = np.concatenate([m.payload[0] for m in msgs])
    X = np.concatenate([m.payload[1] for m in msgs])
    y = np.concatenate([m.payload[2] for m in msgs])
    return WeightedData(w, X, y)


def distributed_smr(
    nodes: list[NodeState],
    family: GlmFamily,
    T: int = DEFAULT_T,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[FitResult, list[WireMessage]]:
    """Run the iterated score-matching fit across nodes; returns the final
    fit and the wire log (sorted by round, then node id)."""
    live = sorted(nodes, key=lambda s: s.node_id)
    if not live:
        raise ConfigError("no node holds any data")
    wire = Wire(live)

    msgs = []
    for nd in live:
        reps = mean_representatives(nd.data, nd.part)
        msgs.append(wire.upload(0, nd, reps.weights, reps.X, reps.y))
    res = fisher_scoring_fit(_gather(msgs), family, tol=tol, max_iter=max_iter)
    beta = res.beta
    fallbacks = 0
    for t in range(1, T + 1):
        wire.broadcast(t, beta)
        msgs = []
        fallbacks = 0
        for nd in live:
            local_beta = next(m.payload[0] for m in reversed(wire.log)
                              if m.kind == BETA_BROADCAST and m.receiver == nd.node_id)
            reps = smr_representatives(nd.data, nd.part, family, local_beta, iteration=t)
            fallbacks += reps.fallback_count
            msgs.append(wire.upload(t, nd, reps.weights, reps.X, reps.y))
        res = fisher_scoring_fit(_gather(msgs), family, init=beta, tol=tol, max_iter=max_iter)
        beta = res.beta
    res.extra.update(
        {"method": "smr", "T": T, "nodes": len(live), "fallbacks": fallbacks,
         "points": sum(m.payload[0].size for m in msgs), "words": sum(m.words for m in wire.log)}
    )
    return res, wire.log


def expected_words(rep_counts: list[list[int]], p: int) -> int:
    """Closed-form traffic: ``rep_counts[t][n]`` points uploaded by node n in
    round t; every round after the first also broadcasts p words per node."""
    total = 0
    for t, counts in enumerate(rep_counts):
        total += sum(counts) * (p + 2)
        if t > 0:
            total += len(counts) * p
    return total


@dataclass
class TrafficReport:
    rows: list[tuple[int, int, str, int]]
    total_words: int
    raw_shuffle_words: int

    @property
    def ratio(self) -> float:
        """Representative traffic as a fraction of shipping all raw rows once."""
        return self.total_words / self.raw_shuffle_words if self.raw_shuffle_words else float("nan")

    def per_round(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for r, _, _, w in self.rows:
            out[r] = out.get(r, 0) + w
        return out

    def write_csv(self, path) -> None:
        with text_sink(path) as fh:
            w = csv.writer(fh)
            w.writerow(["round", "node", "kind", "words"])
            w.writerows(self.rows)


def traffic_report(log: list[WireMessage], n_rows: int, p: int) -> TrafficReport:
    """Per-message word counts (``round,node,kind,words``) with the total and
    the cost N (p + 1) of moving every raw row to the coordinator."""
    rows = [(m.round, m.node, m.kind, m.words) for m in sorted(log, key=lambda m: (m.round, m.kind != BETA_BROADCAST, m.node))]
    return TrafficReport(rows, sum(r[3] for r in rows), n_rows * (p + 1))

"""Two-party delegated execution with deferred corrections.

The server prepares every graph node as |+>, entangles along the edges, and
measures each non-output node at its *default* angle, never learning the
client's input keys or corrections.  For every node measured at pi/4 the
server first copies that node's computational value onto a fresh companion
qubit (a Bell-type CNOT copy) and hands the companion back unmeasured; the
client measures it in the X or Y basis depending on the corrected outcome of
the node's flow predecessor and uses the result to absorb the non-Clifford
byproduct.  All corrections are XOR recursions evaluated after the fact:

* angle in {0, pi}:        b = s (+) key (+) sum of z-dependency b's
* angle in {pi/2, 3pi/2}:  b = s (+) key (+) b_pred (+) sum of z-dep b's
* angle pi/4:              b = s (+) key (+) alpha (+) sum of z-dep b's

where `key` is the input phase key (input nodes only) and b_pred the
corrected outcome of the flow predecessor.  Output nodes are read in the
computational basis and corrected by their predecessor's b.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import pi

import numpy as np

from .pattern import (
    MeasurementPattern,
    OutcomeLedger,
    _corrected_angle_k,
    _prepare_graph_state,
    input_keys,
    z_dependency_set,
)
from .statevec import StateVector, Y_BASIS_ANGLE

DIST_TOL = 1e-9
MAX_ENUMERATED_MEASUREMENTS = 12

_Z_ONLY_KS = (0, 4)
_WITH_PRED_KS = (2, 6)
_GADGET_K = 1


def encode_input(input_bits) -> list[int]:
    """Phase keys hiding the classical input: bit 1 means logical |->.

    The register sent to the server is always all-|+>; the key alone tells
    the two apart, and only the client holds it.
    """
    bits = list(input_bits)
    if any(b not in (0, 1) for b in bits):
        raise ValueError("input bits must be 0 or 1")
    return bits


def key_update_T(a: int, b: int) -> tuple[int, int, int]:
    """Propagate an (X^a, Z^b) key through a T gate.

    T X^a Z^b = X^a Z^{a xor b} S^a T up to global phase, so the X key is
    unchanged, the Z key picks up a, and an S correction is needed iff a = 1.
    """
    if a not in (0, 1) or b not in (0, 1):
        raise ValueError("key bits must be 0 or 1")
    return a, a ^ b, a


def client_basis(b_prev: int) -> str:
    """Companion measurement basis from the predecessor's corrected bit."""
    if b_prev not in (0, 1):
        raise ValueError("corrected bit must be 0 or 1")
    return "Y" if b_prev else "X"


@dataclass
class ClientState:
    """Everything the client holds during a run; never shown to the server."""

    input_bits: list[int]
    z_keys: dict[int, int]
    alpha: dict[int, int]
    ledger: OutcomeLedger
    basis_choices: dict[int, str]


@dataclass
class ServerView:
    """What the server can see: structure, default angles, raw outcomes."""

    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    default_angles: dict[int, int]
    raw_outcomes: dict[int, int]
    raw_output_bits: dict[int, int]


@dataclass
class ProtocolTranscript:
    """Ordered message log; replaying with the same seed reproduces it."""

    messages: list[tuple[str, str, str]] = field(default_factory=list)

    def add(self, direction: str, kind: str, payload: str = "") -> None:
        self.messages.append((direction, kind, payload))

    def serialize(self) -> str:
        return "\n".join(
            f"{d} {k} {p}".rstrip() for d, k, p in self.messages
        ) + "\n"


@dataclass
class QfheRun:
    output_bits: list[int]
    server_view: ServerView
    transcript: ProtocolTranscript
    client: ClientState


def _corrected_bit(
    pattern: MeasurementPattern,
    node: int,
    s: dict[int, int],
    b: dict[int, int],
    alpha: dict[int, int],
    keys: dict[int, int],
    zdeps: dict[int, set[int]],
    pred: dict[int, int | None],
    drop_pred_term: bool = False,
) -> int:
    k = pattern.angles[node]
    acc = s[node] ^ keys.get(node, 0)
    for j in zdeps[node]:
        acc ^= b[j]
    if k in _Z_ONLY_KS:
        return acc
    if k in _WITH_PRED_KS:
        p = pred[node]
        if p is not None and not drop_pred_term:
            acc ^= b[p]
        return acc
    if k == _GADGET_K:
        if node not in alpha:
            raise ValueError(f"missing companion outcome for pi/4 node {node}")
        return acc ^ alpha[node]
    raise ValueError(
        f"angle multiple {k} of node {node} has no deferred-correction rule"
    )


def deferred_corrections(
    pattern: MeasurementPattern,
    s: dict[int, int],
    alpha: dict[int, int],
    input_bits,
    _drop_pred_term: bool = False,
) -> dict[int, int]:
    """Corrected outcomes for every node, computed in flow order.

    ``s`` must hold raw outcomes for all measured nodes and raw computational
    readouts for the outputs.  The ``_drop_pred_term`` hook deliberately
    corrupts the pi/2-family rule; the selftest uses it to prove the
    equivalence check has teeth.
    """
    keys = input_keys(pattern, input_bits)
    zdeps = {
        i: z_dependency_set(pattern.graph, pattern.flow, i)
        for i in pattern.flow.order
    }
    pred = {v: pattern.flow.predecessor(v) for v in pattern.graph.nodes}
    b: dict[int, int] = {}
    for i in pattern.flow.order:
        if i not in s:
            raise ValueError(f"missing raw outcome for node {i}")
        b[i] = _corrected_bit(
            pattern, i, s, b, alpha, keys, zdeps, pred, _drop_pred_term
        )
    for o in pattern.graph.outputs:
        if o not in s:
            raise ValueError(f"missing raw readout for output node {o}")
        x = b[pred[o]] if pred[o] is not None else 0
        b[o] = s[o] ^ x
    return b


def _companion_map(pattern: MeasurementPattern) -> dict[int, int]:
    """Qubit index of each pi/4 node's companion in the simulated register."""
    n_graph = len(pattern.graph.nodes)
    return {
        node: n_graph + i for i, node in enumerate(pattern.quarter_nodes)
    }


def _prepare_protocol_state(
    pattern: MeasurementPattern, direct_input_bits: dict[int, int] | None = None
) -> tuple[StateVector, dict[int, int], dict[int, int]]:
    nodes = pattern.graph.nodes
    qubit_of = {v: i for i, v in enumerate(nodes)}
    comp_of = _companion_map(pattern)
    total = len(nodes) + len(comp_of)
    sv = StateVector(total)
    for v in nodes:
        sv.apply_gate("h", (qubit_of[v],))
    if direct_input_bits:
        for v, bit in direct_input_bits.items():
            if bit:
                sv.apply_gate("z", (qubit_of[v],))
    # Companion copies commute with the CZ edges; doing them first matches
    # the Bell-pair construction (H then CNOT from |00>).
    for node, comp in comp_of.items():
        sv.apply_gate("cnot", (qubit_of[node], comp))
    for a, b in pattern.graph.edges:
        sv.apply_gate("cz", (qubit_of[a], qubit_of[b]))
    return sv, qubit_of, comp_of


def run_qfhe_detailed(
    pattern: MeasurementPattern,
    input_bits,
    rng: np.random.Generator,
    want_transcript: bool = True,
) -> QfheRun:
    """One protocol run: server phase, companion hand-back, client corrections.

    ``want_transcript`` skips message logging for bulk shot loops; outcomes
    are unaffected (no random draws depend on it).
    """
    pattern.validate()
    bits = encode_input(input_bits)
    keys = input_keys(pattern, bits)
    sv, qubit_of, comp_of = _prepare_protocol_state(pattern)
    pred = {v: pattern.flow.predecessor(v) for v in pattern.graph.nodes}
    zdeps = {
        i: z_dependency_set(pattern.graph, pattern.flow, i)
        for i in pattern.flow.order
    }

    tr = ProtocolTranscript()
    log = tr.add if want_transcript else (lambda *args: None)
    log("c2s", "nodes", " ".join(str(v) for v in pattern.graph.nodes))
    log("c2s", "edges", " ".join(f"{a}-{b}" for a, b in pattern.graph.edges))
    log(
        "c2s",
        "angles",
        " ".join(f"{v}:{pattern.angles[v]}" for v in pattern.flow.order),
    )
    if pattern.quarter_nodes:
        log("c2s", "companions", " ".join(str(v) for v in pattern.quarter_nodes))
    log("c2s", "order", " ".join(str(v) for v in pattern.flow.order))

    # Server phase: default angles throughout, outputs read computationally.
    s: dict[int, int] = {}
    for i in pattern.flow.order:
        out = sv.measure_rotated(qubit_of[i], pattern.angle_rad(i), rng)
        s[i] = out.bit
        log("s2c", "outcome", f"{i} {out.bit}")
    raw_outputs: dict[int, int] = {}
    for o in pattern.graph.outputs:
        out = sv.measure_z(qubit_of[o], rng)
        raw_outputs[o] = out.bit
        log("s2c", "output-raw", f"{o} {out.bit}")
    for node in pattern.quarter_nodes:
        log("s2c", "companion-return", str(node))

    # Client phase: companion measurements and the correction recursion.
    ledger = OutcomeLedger(s=dict(s) | dict(raw_outputs), zdeps=zdeps)
    alpha: dict[int, int] = {}
    basis_choices: dict[int, str] = {}
    b: dict[int, int] = {}
    for i in pattern.flow.order:
        if pattern.angles[i] == _GADGET_K:
            p = pred[i]
            basis = client_basis(b[p] if p is not None else 0)
            basis_choices[i] = basis
            out = sv.measure_pauli_basis(comp_of[i], basis, rng)
            alpha[i] = out.bit
            log("client", "basis", f"{i} {basis}")
            log("client", "companion-outcome", f"{i} {out.bit}")
        b[i] = _corrected_bit(pattern, i, s, b, alpha, keys, zdeps, pred)
        log("client", "corrected", f"{i} {b[i]}")
    for o in pattern.graph.outputs:
        x = b[pred[o]] if pred[o] is not None else 0
        b[o] = raw_outputs[o] ^ x
        log("client", "output", f"{o} {b[o]}")

    ledger.b = b
    ledger.alpha = dict(alpha)
    server_view = ServerView(
        nodes=pattern.graph.nodes,
        edges=pattern.graph.edges,
        default_angles=dict(pattern.angles),
        raw_outcomes=dict(s),
        raw_output_bits=dict(raw_outputs),
    )
    client = ClientState(
        input_bits=bits,
        z_keys=keys,
        alpha=alpha,
        ledger=ledger,
        basis_choices=basis_choices,
    )
    output_bits = [b[o] for o in pattern.graph.outputs]
    return QfheRun(output_bits, server_view, tr, client)


def run_qfhe(
    pattern: MeasurementPattern, input_bits, rng: np.random.Generator
) -> tuple[list[int], ServerView, ProtocolTranscript]:
    run = run_qfhe_detailed(pattern, input_bits, rng)
    return run.output_bits, run.server_view, run.transcript


# -- exact branch enumeration (the master oracle) ------------------------


def _output_code(num_qubits: int, out_qubits: list[int]) -> np.ndarray:
    """Map each basis index to its raw output string read as a big-endian int.

    Position ``pos`` of the string (first output leftmost) is bit
    ``len(out_qubits) - 1 - pos`` of the code.
    """
    idx = np.arange(1 << num_qubits)
    code = np.zeros(len(idx), dtype=np.int64)
    width = len(out_qubits)
    for pos, q in enumerate(out_qubits):
        code |= ((idx >> q) & 1) << (width - 1 - pos)
    return code


def _output_distribution_leaf(
    sv: StateVector,
    pattern: MeasurementPattern,
    code: np.ndarray,
    b: dict[int, int],
    pred: dict[int, int | None],
) -> dict[str, float]:
    """Joint probabilities of corrected output strings for a collapsed branch."""
    outs = pattern.graph.outputs
    width = len(outs)
    probs = np.abs(sv.amps) ** 2
    raw_dist = np.bincount(code, weights=probs, minlength=1 << width)
    xor_mask = 0
    for pos, o in enumerate(outs):
        x = b[pred[o]] if pred[o] is not None else 0
        xor_mask |= x << (width - 1 - pos)
    dist: dict[str, float] = {}
    for raw_idx in range(1 << width):
        p = float(raw_dist[raw_idx])
        if p <= 0.0:
            continue
        dist[format(raw_idx ^ xor_mask, f"0{width}b")] = p
    return dist


def enumerate_branches(
    pattern: MeasurementPattern,
    input_bits,
    mode: str = "interactive",
    direct_input_prep: bool = False,
) -> dict[str, float]:
    """Exact output distribution by walking every measurement branch.

    ``mode`` is ``interactive`` (adapted angles) or ``qfhe`` (default angles
    plus companion measurements and deferred corrections).  With
    ``direct_input_prep`` the input nodes are physically prepared as |+>/|->
    and the keys zeroed, which must not change the distribution.
    """
    if mode not in ("interactive", "qfhe"):
        raise ValueError(f"unknown mode {mode!r}")
    pattern.validate()
    bits = encode_input(input_bits)
    keys = input_keys(pattern, bits)
    direct = None
    if direct_input_prep:
        direct = dict(keys)
        keys = {v: 0 for v in keys}

    n_branch_points = len(pattern.flow.order)
    if mode == "qfhe":
        n_branch_points += len(pattern.quarter_nodes)
    if n_branch_points > MAX_ENUMERATED_MEASUREMENTS:
        raise ValueError(
            f"{n_branch_points} measurement branch points exceed the"
            f" enumeration guard of {MAX_ENUMERATED_MEASUREMENTS}"
        )

    pred = {v: pattern.flow.predecessor(v) for v in pattern.graph.nodes}
    zdeps = {
        i: z_dependency_set(pattern.graph, pattern.flow, i)
        for i in pattern.flow.order
    }
    if mode == "qfhe":
        sv0, qubit_of, comp_of = _prepare_protocol_state(pattern, direct)
    else:
        sv0, qubit_of = _prepare_graph_state(pattern, direct)
        comp_of = {}

    order = pattern.flow.order
    code = _output_code(
        sv0.num_qubits, [qubit_of[o] for o in pattern.graph.outputs]
    )
    dist: dict[str, float] = {}

    def walk(sv: StateVector, prob: float, idx: int, b: dict, alpha: dict):
        if prob <= 1e-15:
            return
        if idx == len(order):
            for key, p in _output_distribution_leaf(
                sv, pattern, code, b, pred
            ).items():
                dist[key] = dist.get(key, 0.0) + prob * p
            return
        i = order[idx]
        if mode == "interactive":
            x = b[pred[i]] if pred[i] is not None else 0
            z = keys.get(i, 0)
            for j in zdeps[i]:
                z ^= b[j]
            k_eff = _corrected_angle_k(pattern.angles[i], x, z)
            for outcome in (0, 1):
                nxt = sv.copy()
                p = nxt.project_rotated(qubit_of[i], k_eff * pi / 4, outcome)
                if p > 0.0:
                    b2 = dict(b)
                    b2[i] = outcome
                    walk(nxt, prob * p, idx + 1, b2, alpha)
            return

        # qfhe: companion first when present, then the node at its default.
        if pattern.angles[i] == _GADGET_K:
            p_node = pred[i]
            basis = client_basis(b[p_node] if p_node is not None else 0)
            phi_c = 0.0 if basis == "X" else Y_BASIS_ANGLE
            for a_out in (0, 1):
                mid = sv.copy()
                pa = mid.project_rotated(comp_of[i], phi_c, a_out)
                if pa <= 0.0:
                    continue
                for outcome in (0, 1):
                    nxt = mid.copy()
                    ps = nxt.project_rotated(
                        qubit_of[i], pattern.angle_rad(i), outcome
                    )
                    if ps <= 0.0:
                        continue
                    alpha2 = dict(alpha)
                    alpha2[i] = a_out
                    b2 = dict(b)
                    b2[i] = _corrected_bit(
                        pattern, i, {i: outcome}, b2, alpha2, keys, zdeps, pred
                    )
                    walk(nxt, prob * pa * ps, idx + 1, b2, alpha2)
            return
        for outcome in (0, 1):
            nxt = sv.copy()
            ps = nxt.project_rotated(qubit_of[i], pattern.angle_rad(i), outcome)
            if ps <= 0.0:
                continue
            b2 = dict(b)
            b2[i] = _corrected_bit(
                pattern, i, {i: outcome}, b2, alpha, keys, zdeps, pred
            )
            walk(nxt, prob * ps, idx + 1, b2, alpha)

    walk(sv0, 1.0, 0, {}, {})
    total = sum(dist.values())
    if abs(total - 1.0) > DIST_TOL:
        raise RuntimeError(f"branch probabilities sum to {total}, expected 1")
    return dist


def server_output_marginals_exact(
    pattern: MeasurementPattern, input_bits
) -> dict[int, float]:
    """Exact P(raw output readout = 1) per output node, before corrections."""
    pattern.validate()
    bits = encode_input(input_bits)
    sv, qubit_of, _ = _prepare_protocol_state(pattern)
    pred = {v: pattern.flow.predecessor(v) for v in pattern.graph.nodes}
    zdeps = {
        i: z_dependency_set(pattern.graph, pattern.flow, i)
        for i in pattern.flow.order
    }
    order = pattern.flow.order
    marg = {o: 0.0 for o in pattern.graph.outputs}

    def walk(sv: StateVector, prob: float, idx: int):
        if prob <= 1e-15:
            return
        if idx == len(order):
            for o in pattern.graph.outputs:
                marg[o] += prob * sv.probability_one(qubit_of[o])
            return
        i = order[idx]
        for outcome in (0, 1):
            nxt = sv.copy()
            p = nxt.project_rotated(qubit_of[i], pattern.angle_rad(i), outcome)
            if p > 0.0:
                walk(nxt, prob * p, idx + 1)

    walk(sv, 1.0, 0)
    return marg


def total_variation(p: dict[str, float], q: dict[str, float]) -> float:
    """Half the L1 distance between two distributions over bit strings."""
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)

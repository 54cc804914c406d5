"""Simulator for measurement-pattern computation, blind delegated execution,
single-chip compilation under coupling constraints, and Pauli trajectory
noise."""

from .statevec import (
    MeasurementOutcome,
    StateVector,
    Y_BASIS_ANGLE,
    gate_matrix,
    make_bell_pair,
    new_plus_state,
)
from .pattern import (
    FlowError,
    FlowMap,
    MeasurementPattern,
    OpenGraph,
    OutcomeLedger,
    PatternFormatError,
    corrected_angle,
    j_alpha_pattern,
    j_branch_states,
    load_pattern,
    random_pattern,
    run_interactive,
    save_pattern,
    validate_flow,
    z_dependency_set,
)
from .protocol import (
    ClientState,
    ProtocolTranscript,
    ServerView,
    client_basis,
    deferred_corrections,
    encode_input,
    enumerate_branches,
    key_update_T,
    run_qfhe,
    run_qfhe_detailed,
    server_output_marginals_exact,
    total_variation,
)
from .circuit import (
    Circuit,
    CouplingMap,
    Instruction,
    cancel_hh,
    check_conformance,
    circuit,
    decompose_controlled_sdg,
    decompose_swap_onedir,
    exact_readout_distribution,
    gate,
    ladder16,
    load_circuit,
    load_coupling,
    measure,
    parity_postprocess,
    reverse_cnot,
    rewrite_cz_to_cnot,
    ring,
    route,
    save_circuit,
    save_coupling,
    unitary_of,
    verify_equivalence,
)
from .compiler import CompiledProtocol, compile_qfhe_to_circuit
from .noise import NoiseModel, depolarize, flip_readout, load_noise_model, noisy_execute
from .harness import (
    CountsTable,
    ExperimentConfig,
    compare_tables,
    emit_report,
    input_bits_of,
    reference_pattern,
    run_experiment,
    selftest,
)

__all__ = [name for name in dir() if not name.startswith("_")]

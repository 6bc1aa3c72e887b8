"""Tight-binding band structures from a constant three-setting measurement
protocol with variational quantum deflation."""

from .errors import (
    CircuitError,
    ModelParseError,
    ModelValidationError,
    OptimizationError,
    ProtocolError,
    TbvqdError,
    UsageError,
)
from .model import (
    BlochMatrix,
    HoppingTerm,
    KVector,
    Orbital,
    TightBindingModel,
    bloch_matrix,
    exact_bands,
    kpath,
    load_document,
    load_document_file,
    parse_model,
    reciprocal_vectors,
)
from .pauli import (
    PauliString,
    QubitHamiltonian,
    QwcGroup,
    QwcGrouping,
    dense_matrix,
    pauli_expectation,
    qubit_hamiltonian,
    qwc_groups_conventional,
)
from .protocol import (
    AmplitudeEstimate,
    CompressedIndexSet,
    CorrelatorSet,
    MeasurementSetting,
    ProtocolResult,
    ThreeSettingProtocol,
    build_setting,
    compress,
    correlators_direct,
    cost_function,
    estimate_pair_parity,
    measure_z,
    product_rule,
    reconstruct_state,
)
from .simulator import (
    AnsatzParams,
    Circuit,
    Gate,
    ShotCounts,
    StateVector,
    apply_circuit,
    build_ansatz,
    exact_distribution,
    params_for_amplitudes,
    sample,
    zero_state,
)
from .vqd import (
    BandStructureResult,
    DeflationConfig,
    RunConfig,
    band_sweep,
    deflated_cost,
    gershgorin_beta,
    optimize,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

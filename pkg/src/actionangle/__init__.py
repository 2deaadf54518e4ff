"""Learned simulator for integrable Hamiltonian systems.

The model encodes canonical coordinates into action-angle coordinates with a
symplectic normalizing flow, advances angles linearly at rates predicted from
the (conserved) actions, and decodes with the exact inverse flow. The package
also ships closed-form coupled-oscillator data generation, two baseline
simulators, a training loop, and an evaluation CLI.
"""

from .baselines import (
    EulerUpdateNetwork,
    EunConfig,
    NeuralOde,
    NodeConfig,
    build_eun,
    build_neural_ode,
    eun_predict,
    node_predict,
    rk4_step,
)
from .diffcore import Tape, Var, backward
from .flows import (
    FlowStack,
    GSympLayer,
    from_polar,
    init_stack,
    layer_forward,
    layer_inverse,
    stack_forward,
    stack_inverse,
    symplecticity_check,
    to_polar,
)
from .model import (
    AanConfig,
    ActionAngleNetwork,
    angular_velocity,
    build_action_angle_network,
    checkpoint_load,
    checkpoint_save,
    decode,
    encode,
    evolve,
    predict,
    predict_batch,
)
from .states import ActionAngleState, CartesianActionState, PhaseState
from .systems import (
    NormalModes,
    OscillatorConfig,
    Trajectory,
    build_coupling_matrix,
    closed_form_state,
    generate_trajectory,
    read_trajectory,
    solve_modes,
    total_energy,
    write_trajectory,
)
from .training import TrainConfig, TrainRecord, action_loss, adam_step, prediction_loss, sample_dt, train

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"

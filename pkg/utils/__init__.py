# Utils package
from .ground_states import ground_state_solver
from .dynamics import flow_integrator
from .verification import verification_manager
from .sweep_pipeline import sweep_pipeline

"""Quality-aware cooperative-perception task offloading: simulator and solvers."""

from .baselines import solve_cpto, solve_go
from .geometry import (GridSpec, OccupancyGrid, QualityMatrix,
                       build_quality_matrix, detected_awareness, fov_triangle,
                       rasterize_triangle, shared_interest)
from .latency import (LatencyBreakdown, compute_delay, response_latency,
                      transmit_delay, worker_capacity)
from .metrics import EpochReport, RunReport, epoch_metrics, run_aggregate
from .model import (Assignment, Roi, TaskProfile, Turn, User, VehicleState,
                    Worker, validate_scenario)
from .predict import (KfState, PredictorConfig, classify_turn, estimate_roi,
                      kf_predict, kf_update, run_predictor)
from .qmkp import (QmkpInstance, Solution, check_feasible, enumerate_optimal,
                   evaluate_objective, instance_from_json, instance_to_json,
                   random_instance, repair_deadline, repair_min_pair)
from .solve_exact import solve_exact
from .solve_heur import (HeurConfig, contribution, density, fix_and_complete,
                         greedy_bin_packing, solve_heuristic)
from .trace import (ScenarioConfig, Trace, load_trace, save_trace,
                    synth_intersection)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"

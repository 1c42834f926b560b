from .evaluators import (HardwareDbWorker, PhysicalWorker, SimulationWorker, Worker, hwdb_evaluate,
                         physical_evaluate, simulation_evaluate)
from .master import Endpoint, InProcessEndpoint, Lease, Master, MasterEvaluator
from .protocol import (HARDWARE_DB, OBJECTIVE_ROUTES, PHYSICAL, PHYSICAL_FIELDS, PROTOCOL_VERSION, SIMULATION,
                       EvalRequest, EvalResult, WorkerDescriptor, decode, encode)
from .transport import MasterServer, SocketEndpoint, WorkerServer, run_worker

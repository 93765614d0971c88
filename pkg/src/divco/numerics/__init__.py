from .tape import Tape, Node, ShapeError, TapeError, as_matrix, DTYPE
from .params import ParamStore, CheckpointError, seeded_rng, glorot
from .fdcheck import fd_check, central_difference, OracleInvalidError

__all__ = [
    "Tape", "Node", "ShapeError", "TapeError", "as_matrix", "DTYPE",
    "ParamStore", "CheckpointError", "seeded_rng", "glorot",
    "fd_check", "central_difference", "OracleInvalidError",
]

"""Round-based simulator for Byzantine-resilient gossip learning on peer-sampled graphs."""
from .config import SimConfig, load_config, preset
from .sim import RunArtifact, Simulation, run

__all__ = ["SimConfig", "Simulation", "RunArtifact", "load_config", "preset", "run"]
__version__ = "0.1.0"

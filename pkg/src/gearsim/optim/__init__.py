from .cmaes import CmaEs, cmaes_suggest
from .nsga2 import crowding_distance, fast_nondominated_sort, hypervolume_2d, nsga2_evolve
from .tpe import TpeConfig, TpeSampler, tpe_suggest

__all__ = [
    "CmaEs",
    "cmaes_suggest",
    "TpeConfig",
    "TpeSampler",
    "tpe_suggest",
    "nsga2_evolve",
    "fast_nondominated_sort",
    "crowding_distance",
    "hypervolume_2d",
]

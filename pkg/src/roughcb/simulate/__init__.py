from .cmj import cmj_counts, cmj_rate, simulate_cmj, simulate_cmj_batch
from .cp import cp_localtime_counts, simulate_cp_localtime
from .paths import JumpRecord, PathSample, Scheme
from .sve import SveConfig, isometry_variance, simulate_sve, simulate_sve_batch

__all__ = ["JumpRecord", "PathSample", "Scheme", "SveConfig", "cmj_counts", "cmj_rate", "cp_localtime_counts",
           "isometry_variance", "simulate_cmj", "simulate_cmj_batch", "simulate_cp_localtime", "simulate_sve",
           "simulate_sve_batch"]

from .schedule import NoiseSchedule, make_schedule, add_noise
from .providers import (
    ScoreRequest,
    EchoProvider,
    AnalyticProvider,
    make_analytic_provider,
    ProviderError,
    ProviderTimeout,
)
from .sds import sds_step
from .video import temporal_reg, IdentityRefiner, ConstantOffsetRefiner, TemporalSmoothRefiner
from .sampling import ViewTimeConfig, sample_view_time
from .optimizer import Adam
from .loop import DistillConfig, run_distillation, DistillationAborted
from .protocol import (
    ProviderServer,
    RemoteScoreProvider,
    run_conformance,
    encode_request,
    encode_response,
    encode_error,
)

__all__ = [
    "NoiseSchedule",
    "make_schedule",
    "add_noise",
    "ScoreRequest",
    "EchoProvider",
    "AnalyticProvider",
    "make_analytic_provider",
    "ProviderError",
    "ProviderTimeout",
    "sds_step",
    "temporal_reg",
    "IdentityRefiner",
    "ConstantOffsetRefiner",
    "TemporalSmoothRefiner",
    "ViewTimeConfig",
    "sample_view_time",
    "Adam",
    "DistillConfig",
    "run_distillation",
    "DistillationAborted",
    "ProviderServer",
    "RemoteScoreProvider",
    "run_conformance",
    "encode_request",
    "encode_response",
    "encode_error",
]

"""Vehicle-to-vehicle channel simulation with LOS/OLOS shadow fading.

Submodules: ``propagation`` (mean gain models), ``shadowing`` (correlated
log-normal shadowing), ``geometry`` (link classification), ``mobility``
(highway traffic), ``channel`` and ``netsim`` (broadcast network
simulation), ``estimation`` (parameter fitting), ``metrics``, ``config``,
``runner`` and ``cli``.
"""
from .channel import LOS_OLOS, NAKAGAMI, ChannelConfig
from .estimation import (
    CensoredNormalEM,
    CirTrace,
    DecorrelationEstimator,
    DualSlopeRegressor,
    GainSeries,
    channel_gain,
    compute_apdp,
    em_censored_lognormal,
    estimate_decorrelation,
    fit_dual_slope,
    pathloss_from_gain,
)
from .exceptions import (
    ConfigError,
    FitError,
    InsufficientDataError,
    ModelDomainError,
    NonIdentifiableError,
    OutOfRangeError,
)
from .geometry import LinkClass, Rect, Road, VehicleBody, classify_link, fresnel_clearance, segment_intersects_rect
from .mobility import Highway, ScenarioConfig
from .netsim import RadioConfig, SimResult, simulate
from .propagation import (
    PATH_LOSS_TABLE,
    NakagamiParams,
    NlosGeometry,
    NlosParams,
    PathLossParams,
    dual_slope_gain_db,
    flat_earth_breakpoint,
    mix_received_power,
    nakagami_sample,
    nlos_path_loss_db,
    parallel_street_loss,
)
from .shadowing import ShadowConfig, ShadowProcess, autocorrelation

__version__ = "0.1.0"

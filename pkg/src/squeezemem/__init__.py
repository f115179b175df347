"""Squeezed-vacuum storage in an EIT medium: spectra, traces and estimators."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AboveThresholdError,
    CalibrationError,
    ConfigError,
    FilterError,
    FormatError,
    InputError,
    ParameterError,
    RangeError,
    ScheduleError,
    SqueezeMemError,
)
from .spectra import (  # noqa: F401
    OpoSource,
    QuadSpectrum,
    apply_filter,
    apply_loss,
    calibrate_opo,
    make_opo_spectrum,
    photon_flux,
    quad_at,
)
from .medium import (  # noqa: F401
    EitMedium,
    StorageChannel,
    calibrate_medium,
    eit_fwhm,
    group_delay,
    retrieved_state,
    storage_channel,
    transfer,
)
from .synth import (  # noqa: F401
    HomodyneTrace,
    ImperfectionBudget,
    PulseSchedule,
    Scenario,
    TraceBatch,
    apply_imperfections,
    synth_stationary,
)
from .sequence import SequenceModel, synth_sequence  # noqa: F401
from .analysis import (  # noqa: F401
    ModeFunction,
    NoiseEstimate,
    error_bars,
    flux_timeline,
    method1_timeline,
    method2_project,
    method2_variance,
    shot_calibration,
)

# Monte Carlo risk indicators on reproducible chunked streams

from riskalloc.services.indicator_service.penalties import Penalty, build_penalty
from riskalloc.services.indicator_service.indicators import (
    INDICATOR_I,
    INDICATOR_I_LOC,
    INDICATOR_J,
    SIDE_LOWER,
    SIDE_UPPER,
    Allocation,
    IndicatorEstimate,
    StationarityCertificate,
    estimate_condition,
    estimate_I,
    estimate_I_loc,
    estimate_indicator,
    estimate_J,
    sample_indicator_terms,
    stationarity_certificate,
)

"""termfit: treasury yield-curve construction and parametric calibration.

Pipeline: parse auction reports, bootstrap zero-coupon spot curves per
auction date, calibrate Nelson-Siegel and Svensson curves with differential
evolution, and statistically compare the two models' errors.
"""

__version__ = "0.1.0"

from .errors import DateFailure, DomainError, TermfitError
from .marketdata import (
    AuctionRecord,
    CsvSchema,
    Dataset,
    DateObservation,
    DroppedDate,
    DuplicateTenor,
    EmptyAfterImputation,
    Instrument,
    InvariantViolation,
    MalformedRow,
    MarketDataError,
    MaturityGrid,
    OffGridMaturity,
    Provenance,
    SchemaError,
    group_by_date,
    impute_forward,
    parse_auctions,
    parse_tenor,
    read_dataset,
    serialize_records,
    tenor_str,
    write_dataset,
)
from .bondmath import (
    BootstrapFailure,
    NoBracket,
    ZeroCurve,
    bootstrap_dataset,
    bootstrap_zero_curve,
    discount_factor,
    price_bond,
    yield_to_maturity,
    zero_curves_from_csv,
    zero_curves_to_csv,
)
from .models import (
    Model,
    NelsonSiegelParams,
    ParamDescriptor,
    SvenssonParams,
    curve_samples,
    describe_params,
    ns_rate,
    ns_rates,
    params_from_dict,
    params_to_dict,
    slope_loading,
    sv_rate,
    sv_rates,
)
from .calibration import (
    BatchError,
    BatchResult,
    ConfigError,
    DEConfig,
    DEResult,
    FitResult,
    NonFinite,
    calibrate,
    calibrate_all,
    calibrate_curves,
    de_minimize,
    default_bounds,
    derive_date_seed,
    fits_from_csv,
    fits_from_jsonl,
    fits_to_csv,
    fits_to_jsonl,
    objective_rmse,
)
from .stats import (
    AllZeroDifferences,
    ComparisonReport,
    DateMismatch,
    DegenerateSample,
    EmptyInput,
    LengthMismatch,
    SampleSizeError,
    SummaryStats,
    TestMethod,
    TestResult,
    ZeroVariance,
    compare_models,
    paired_t_test,
    report_from_dict,
    report_to_dict,
    report_to_text,
    shapiro_wilk,
    summarize,
    wilcoxon_signed_rank,
)

//! Trade-cost analytics: tariff-equivalent bilateral and average trade costs
//! from trade and GDP panels, decomposition of bilateral trade growth into
//! income, trade-cost and multilateral-resistance contributions, and a
//! forward structural gravity simulator that serves as ground truth for the
//! inverse measure.

pub mod decomposition;
pub mod gravity_oracle;
pub mod ingest;
pub mod panel_store;
pub mod report;
pub mod trade_costs;

pub use decomposition::{
    aggregate_decomposition, decompose_pair, decompose_values, smooth_base, trade_growth, BaseObservation, BaseWindow,
    DecompositionRecord, GrowthDefinition, PairValues,
};
pub use gravity_oracle::{
    predict_flows, recover_and_compare, solve_multilateral_resistance, synth_world, FrictionMatrix, ResistanceVectors,
    Scenario, SolverConfig, SyntheticWorld,
};
pub use ingest::{merge_flow_sources, read_classification, read_domestic, read_flows, read_gdp, SourceTable};
pub use panel_store::{
    build_dataset, coverage_report, ClassificationTable, CountryCode, CoverageReport, Dataset, DomesticPanel,
    FlowPanel, GdpPanel, Sigma, Year, YearRange,
};
pub use trade_costs::{
    annualized_change, average_tau, bilateral_tau, geometric_mean_trade, log_gross_tau, pct_change, GroupSelector,
    MissingMode, TradeCostSeries,
};

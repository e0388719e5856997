//! Synthetic market data and instance construction.

mod instance;
mod market;

pub use instance::{
    build_alpha, build_costs, build_exposures, build_single_instance, cost_profile, daily_vol, extend_multi,
    extend_multi_to_optimum, impact_coefficient, initial_book, return_window, shrink_to_feasible, u_shape, ADV_WINDOW,
    ALPHA_HORIZON, INITIAL_GROSS, MARKET_BOUND, STYLE_BOUND,
};
pub use market::{gen_market_data, mix_seed, GeneratorConfig, MarketPanel, SparseObservations, MIN_DAYS};

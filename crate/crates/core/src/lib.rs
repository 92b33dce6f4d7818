//! Cache-aware recommendation over black-box relation graphs, with hit-ratio
//! models, demand simulation and cache placement.

pub mod cabaret;
pub mod cacheopt;
pub mod chrmodel;
pub mod demand;
pub mod graphcore;
pub mod metrics;
pub mod runner;

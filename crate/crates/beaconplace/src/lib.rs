//! Beacon placement on bounded 2D maps for minimal RSSI localization error.
//!
//! The crate models a localization environment (a polygonal [`geometry::Map`]
//! with attenuating walls and a fitted log-distance
//! [`signal::SignalModel`]), evaluates placements exactly through pluggable
//! [`localizers`] and the [`evaluation`] error statistics, and searches for
//! good placements with the budgeted divide-and-conquer [`optimizer`]:
//! size a selected area from the user's wall-clock and error budgets, search
//! beacon patterns over a refining lattice with memoization, skipping and
//! surrogate pruning, then tile the best pattern over the rest of the map.
//! Four reference methods live in [`baselines`], and [`io`] holds the file
//! formats, dataset ingestion and experiment orchestration behind the CLI.
//!
//! ```
//! use beaconplace::geometry::{BoundaryPolicy, Map};
//! use beaconplace::signal::{SignalModel, SurveyCollection};
//! use beaconplace::localizers::LocalizerConfig;
//! use beaconplace::evaluation::Objective;
//! use beaconplace::optimizer::{place_beacons, Budget, PlaceConfig, SearchOptions};
//!
//! let map = Map::rectangle(30.0, 30.0, BoundaryPolicy::InsideOnly);
//! let model = SignalModel::synthetic(-40.0, 3.0, 1.0, 0.0);
//! let config = PlaceConfig {
//!     n_beacons: 3,
//!     localizer: LocalizerConfig::lateration(),
//!     budget: Budget::new(10.0, 1.0),
//!     intl0_m: 6.0,
//!     seed: 7,
//!     objective: Objective::Ari,
//!     options: SearchOptions { delta_p_acc_m: Some(6.0), ..Default::default() },
//! };
//! let out = place_beacons(&map, &model, &SurveyCollection::empty(), &config).unwrap();
//! assert_eq!(out.placement.len(), 3);
//! assert!(out.trace.wall_time_s <= 1.1 * 10.0);
//! ```

pub mod baselines;
pub mod evaluation;
pub mod geometry;
pub mod localizers;
mod numeric;
pub mod optimizer;
pub mod signal;

pub mod io;

/// Book chapters double as compiled examples; `cargo test --doc` runs them.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(maps, "../../../book/src/maps-and-sampling.md");
    chapter!(signals, "../../../book/src/signal-models.md");
    chapter!(localizers_ch, "../../../book/src/localizers.md");
    chapter!(errors, "../../../book/src/error-metrics.md");
    chapter!(pipeline, "../../../book/src/placement-pipeline.md");
    chapter!(baselines_ch, "../../../book/src/baselines.md");
    chapter!(cli, "../../../book/src/cli-and-formats.md");
}

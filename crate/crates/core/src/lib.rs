//! Temporal author-interaction networks built from event logs, the
//! network context of each new tie, and discrete-choice models of whom
//! authors choose to initiate with.
//!
//! Pipeline: [`ingest`] raw events into directed author interactions,
//! replay them with [`graph::TemporalGraph`], classify each first contact
//! with [`initiations`], attach author attributes from [`authors`], frame
//! initiations as choices in [`choices`], and fit models with
//! [`estimators`]. [`labelshift`] corrects classifier-derived prevalence.

pub mod authors;
pub mod choices;
pub mod design;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod ids;
pub mod ingest;
pub mod initiations;
pub mod labelshift;
pub mod seeds;
pub mod special;
pub mod table;

pub use authors::{AuthorTable, Role};
pub use choices::{ChoiceInstance, ChoiceSet, Feature, FeatureFlags, SamplerConfig, SynthConfig, TimeWindow};
pub use design::{Design, Formula, Frame};
pub use error::{Error, Result};
pub use estimators::{FitResult, ModelKind, ProbabilityTable, TestResult};
pub use graph::{Edge, NetworkState, TemporalGraph, UnionFind};
pub use ids::{AuthorId, IdTables, SiteId, Timestamp, UpdateId};
pub use ingest::{Dataset, DirectedInteraction, InteractionEvent, InteractionKind, RoleLabel, UpdateEvent};
pub use initiations::{Initiation, InitiationType};
pub use labelshift::{ConfusionJoint, ShiftEstimate};

//! Scores for identity, viewpoint, location, background text and
//! composition, and the held-out report.

pub mod metrics;
pub mod probe;
pub mod report;

pub use metrics::{
    background_text_score, composition_fidelity, identity_score, location_iou, view_fidelity, BackgroundProbe,
    ImageEncoder, LocationScore, ObjectEncoder,
};
pub use probe::{FamilyProbe, ProbeConfig, UniformProbe};
pub use report::{build_report, EvalConfig, MetricsReport, MetricsRow};

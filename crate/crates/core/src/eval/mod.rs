//! Detection and recounting metrics.

pub mod ap;
pub mod frame;
pub mod pixel;
pub mod recount_eval;
pub mod roc;
pub mod split;

pub use ap::{average_precision, average_precision_scored, mean_average_precision};
pub use frame::{frame_level_roc, frame_scores, frame_truth, FrameAggregation};
pub use pixel::{pixel_frames, pixel_level_outcomes, pixel_level_roc, PixelFrame, PixelOutcome, ScoredBox};
pub use recount_eval::{recounting_eval, AgreementMode, RecountEvalRegion};
pub use roc::{roc, RocCurve, RocPoint};
pub use split::{n_unseen, split_unseen, Split, SplitSpec};

//! Proximity visual-question-answering toolkit.
//!
//! `proxforge` turns images with bounding-box annotations and precomputed
//! disparity/depth maps into two-stage instruction data:
//!
//! * **perception** conversations ask for the relative depth of one object
//!   and are answered with a two-decimal label in `[0, 1]` (0 = closest);
//! * **reasoning** conversations ask which of two objects is closer and are
//!   answered either with a bare caption or a short chain of thought that
//!   states both labels before concluding.
//!
//! The same machinery converts external benchmarks into evaluation sets and
//! scores black-box model responses (valid-answer ratio, MSE, RMSE, Sq Rel,
//! δ thresholds, proximity accuracy).
//!
//! The narrative guide lives in `book/`; its code listings are compiled as
//! doc-tests of this crate.
//!
//! ```
//! use proxforge::depth::{disparity_to_depth, normalize_depth, DisparityMap};
//!
//! let disp = DisparityMap::new(2, 2, vec![1.0, 2.0, 4.0, 5.0]).unwrap();
//! let depth = normalize_depth(&disparity_to_depth(&disp, 1e-6)).unwrap();
//! assert_eq!(depth.values()[0], 1.0);
//! assert_eq!(depth.values()[3], 0.0);
//! ```

pub mod annotation;
pub mod audit;
pub mod caption;
pub mod config;
pub mod conversation;
pub mod depth;
pub mod eval;
pub mod exact_sum;
pub mod jsonl;
pub mod label;
pub mod pipeline;
pub mod provenance;
pub mod stats;
pub mod synthetic;
pub mod templates;

pub use annotation::{bbox_center, parse_annotations, AnnotationFormat, BBox, SceneObject, SceneRecord};
pub use caption::{classify_caption, CaptionClass, CaptionKind};
pub use config::GenConfig;
pub use conversation::{compare_proximity, Conversation, ProximityRelation};
pub use label::DepthLabel;
pub use templates::{QuestionTemplate, TemplateSet};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scenes.md")]
    mod scenes {}
    #[doc = include_str!("../../../book/src/depth.md")]
    mod depth {}
    #[doc = include_str!("../../../book/src/captions.md")]
    mod captions {}
    #[doc = include_str!("../../../book/src/conversations.md")]
    mod conversations {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}

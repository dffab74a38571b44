pub mod corpus;
pub mod evaluate;
pub mod gazetteer;
pub mod label;
pub mod pipeline;
pub mod predict;
pub mod preprocess;
pub mod report;
pub mod span;
pub mod tagcodec;

pub use label::Label;
pub use span::{Span, TextRange};

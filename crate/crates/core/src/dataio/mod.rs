//! Feature files, annotation files and the synthetic corpus generator.

mod annotations;
mod features;
mod generator;

pub use annotations::{
    parse_annotations, read_annotations, write_annotations, Annotation, GroundTruth, VideoTruth, ANNOTATION_HEADER,
};
pub use features::{
    decode_features, encode_features, read_features, write_features, FeatureSequence, FEATURE_HEADER_LEN,
    FEATURE_MAGIC, FEATURE_VERSION,
};
pub use generator::{background_video, generate_corpus, video_id, Corpus, GenSpec, Video};

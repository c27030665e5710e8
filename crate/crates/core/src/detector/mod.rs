//! Single-class multi-scale detector together with its training loop.

mod config;
mod decode;
mod loss;
mod model;
mod schedule;
mod train;

pub use config::{kmeans_anchors, shape_iou, DetectorConfig, NUM_STAGES, STRIDES};
pub use decode::{decode_cell, decode_detections, encode_box, ideal_raw, non_maximum_suppression, Detection, EncodedBox};
pub use loss::{detection_loss, DetectionLoss, IGNORE_IOU};
pub use model::{
    adapt_input_channels, backbone_forward, backbone_layers, detector_forward, init_params, last_backbone_layer,
    layer_stride, predict, BackboneOutput, VALUES_PER_ANCHOR,
};
pub use schedule::{learning_rate, FineTuneSchedule, OptimizerKind};
pub use train::{
    dataset_loss, detect_manifest, fine_tune, load_samples, DetectorCheckpoint, EpochRecord, FineTuneHistory, Sample,
    DETECTOR_KIND,
};

pub mod gauss;
pub mod grow;
pub mod hooks;
pub mod loft;
pub mod material;
pub mod reference;
pub mod rulings;
pub mod strips;

pub use gauss::{gauss_image, GaussImage};
pub use grow::{
    approximate, extend, grow_patch, max_distance, GrowError, GrowOptions, GrowResult, GrowStop,
    Sides,
};
pub use hooks::{mean_edge_length, GlideHook, ProxHook, DEFAULT_GLIDE_RADIUS};
pub use loft::{ellipse, loft_init, resample_arc_length, segment, Loft, LoftError, LoftOptions};
pub use material::{material_mode, MaterialMode, MaterialSetup, PlasticHook};
pub use reference::{closest_point_on_triangle, ClosestPoint, ReferenceError, ReferenceSurface};
pub use rulings::{prospective_rulings, RulingLine, RulingLineField};
pub use strips::{
    decompose_strips, Strip, StripDecomposition, StripError, StripSidecar, MIN_STRIP_WIDTH,
};

//! Condition assembly: object placement, object/pose fusion, dual
//! cross-attention, the denoiser input layout and condition dropout.

mod attention;
mod bundle;
mod fusion;
mod place;

pub use attention::{dual_attention, dual_cross_attention, merged_attention};
pub use bundle::{assemble_batch, assemble_unet_input, condition_dropout, Branch, ConditionBundle, UNET_IN_CHANNELS};
pub use fusion::{fuse, fuse_object_pose, fusion_pose_jacobian, POSE_DIM};
pub(crate) use fusion::init_fusion;
pub use place::place_object;

//! Procedural ground truth: primitive renders, background textures,
//! template captions and compositing.

pub mod background;
pub mod caption;
pub mod compose;
pub mod image;
pub mod render;

pub use background::{render_background, BackgroundSpec, Family};
pub use caption::{caption_of, Caption, Color};
pub use compose::{alpha_compose, fit_to_frame};
pub use image::{RgbImage, RgbaImage};
pub use render::{render_object, PrimitiveObject, Shape, WorldRanges};

pub mod calculus_orders;
pub mod corner_blowup;
pub mod golden;
pub mod heat;
pub mod model_geometry;
pub mod phg_index;
pub mod spectral;

pub mod bound;
pub mod bunching;
pub mod design;
pub mod fit;
pub mod hom;
pub mod simulate;
pub mod weights;

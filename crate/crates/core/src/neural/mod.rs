//! Dense layers, the set-invariant Q network, and its optimizer.

mod adam;
mod deepset;
mod dense;
mod model;

pub use adam::Adam;
pub use deepset::{canonical_order, soft_update, Architecture, DeepSetQNet, QTape, DYNAMIC_DIM};
pub use dense::{Activation, DenseNet};
pub use model::{ModelFile, ModelKind, MODEL_FORMAT_VERSION};

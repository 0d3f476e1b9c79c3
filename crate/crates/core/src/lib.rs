pub mod dataset;
pub mod eval;
pub mod flda;
pub mod linalg;
pub mod model_io;
pub mod net;
pub mod paillier;
pub mod par;
pub mod protocol;
pub mod quantizer;
pub mod wire;

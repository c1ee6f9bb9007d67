pub use resona_core::*;

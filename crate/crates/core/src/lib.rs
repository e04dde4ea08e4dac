pub mod config;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod numerics;
pub mod optimizer;
pub mod oracle;
pub mod params;
pub mod precoding;
pub mod utility;

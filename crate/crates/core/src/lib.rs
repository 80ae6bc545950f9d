pub mod a2a;
pub mod agent;
pub mod dtn;
pub mod mcp;
pub mod radio;
pub mod ric;
pub mod scenario;
pub mod simkernel;

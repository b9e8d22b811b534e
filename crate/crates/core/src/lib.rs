pub mod bp;
pub mod experiments;
pub mod icn;
pub mod lp;
pub mod mobility;
pub mod scenario;
pub mod sim;
pub mod tcp;

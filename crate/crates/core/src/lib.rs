//! Memristor crossbar simulator with CAM/TCAM search microcode, hybrid
//! CMOS/memristor index structures and a closed-form search-time model.

pub mod cam;
pub mod cli;
pub mod crossbar;
pub mod device;
pub mod index;
pub mod model;
pub mod verify;

pub mod damage;
pub mod drucker_prager;
pub mod error;
pub mod evolution;
pub mod io;
pub mod loading;
pub mod mesh;
pub mod scenario;
pub mod tensors;
pub mod verify;

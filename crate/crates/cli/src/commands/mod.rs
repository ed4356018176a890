pub mod encode;
pub mod fetch;
pub mod invert_demo;
pub mod pair;
pub mod render;

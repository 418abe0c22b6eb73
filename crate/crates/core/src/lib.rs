//! Morse fundamental groups of explicit Morse–Smale pairs on model surfaces,
//! continuation morphisms between them, and relative classes of
//! interpolation-type functions.

pub mod expr;
pub mod geometry;
pub mod linalg;
pub mod flow;
pub mod word;
pub mod mscomplex;
pub mod pi1;
pub mod continuation;
pub mod functoriality;
pub mod relpi1;

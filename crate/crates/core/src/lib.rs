// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actuation;
pub mod controllers;
pub mod integrator;
pub mod lmi;
pub mod lti;
pub mod plant;
pub mod reference;
pub mod sim;
pub mod so3;

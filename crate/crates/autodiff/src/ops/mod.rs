//! Forward rules (as `Graph` methods) and their backward counterparts.

pub(crate) mod elementwise;
pub(crate) mod linalg;
pub(crate) mod nn;
pub(crate) mod reduce;
pub(crate) mod structural;

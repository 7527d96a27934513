//! Hand-differentiated kernels for operations whose generic composition
//! would be too slow: attention, LSTM recurrence and arc scoring.

pub(crate) mod arc;
pub(crate) mod attention;
pub(crate) mod recurrent;

pub(crate) mod conv;
pub(crate) mod dense;
pub(crate) mod lstm;
pub(crate) mod pool;
pub(crate) mod reduce;

pub use dense::BatchStats;
pub use pool::pooled_len;

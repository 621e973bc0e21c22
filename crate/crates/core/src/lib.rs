//! Numerical machinery for the GRW counting-anomaly argument.
//!
//! * [`qmath`]: extended-range log-domain probabilities that survive
//!   magnitudes such as `10^(-10^15)`.
//! * [`marbles`]: branch weights of the n-marble product state, collapse
//!   probabilities and thresholds, and Monte Carlo of the GRW hit process.
//! * [`pointer`]: a von Neumann pointer on a 1-D grid, with exact
//!   translation, free spreading and in/out tail decomposition.
//! * [`way`]: finite-dimensional checks of the Wigner–Araki–Yanase
//!   obstruction and the nonideality trade-off.

pub mod marbles;
pub mod pointer;
pub mod qmath;
pub mod way;

//! Linear programming: a self-contained simplex solver and the clustering relaxation.

pub mod relax;
pub mod simplex;

pub use relax::{
    build, build_lp, build_threshold_lp, kcenter_lp_feasible, solve_lp, ClusterLp,
    FractionalSolution, Loads, LpSpec, VarMap,
};
pub use simplex::{solve, LpProblem, LpRow, LpSolution, Sense};

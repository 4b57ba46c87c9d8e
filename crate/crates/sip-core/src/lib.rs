//! Global lower bounding for nonconvex semi-infinite programs (SIPs) via
//! adaptive discretization.
//!
//! The crate implements the classical feasibility-based Blankenship–Falk
//! scheme and a family of optimality-based (generalized) discretization
//! methods that choose discretization points — or affine index-set cuts — to
//! maximize the lower bound directly, by solving max-min problems with a
//! proximal bundle method fed by parametric-sensitivity gradients.
//!
//! Layers, bottom up:
//!
//! * [`interval`] / [`expr`] — interval arithmetic and expression trees with
//!   exact forward-mode derivatives and natural interval extensions.
//! * [`instances`] — built-in SIP test instances and a file loader.
//! * [`nlp_local`] — augmented-Lagrangian local solver for small
//!   box-constrained NLPs, returning KKT points with multipliers.
//! * [`sensitivity`] — classification of KKT points (LICQ/SC/SSOSC) and
//!   value-function / solution-mapping derivatives.
//! * [`global_opt`] — certified interval branch-and-bound for the lower-level,
//!   lower-bounding, and generalized lower-bounding subproblems.
//! * [`bundle`] — proximal bundle maximizer for the nonsmooth max-min
//!   outer problems.
//! * [`discretize`] / [`gdiscretize`] — the discretization drivers
//!   (BF, OPT, GREEDY, 2GREEDY, HYBRID and their generalized analogues).
//! * [`trace`] — per-iteration solve traces and serializable reports.

pub mod bundle;
pub mod discretize;
pub mod expr;
pub mod gdiscretize;
pub mod global_opt;
pub mod instances;
pub mod interval;
pub mod nlp_local;
pub mod sensitivity;
pub mod trace;

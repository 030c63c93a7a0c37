//! Small, deterministic LP/MILP solver used by the MPC controller.
//!
//! Linear programs are solved with a dense bounded-variable primal simplex
//! (two phases, Dantzig pricing with a switch to Bland's rule on degenerate
//! stalls). Binary variables are handled by best-first branch-and-bound on
//! the most fractional binary.

mod milp;
mod simplex;

pub use milp::{solve_milp, solve_milp_with};
pub use simplex::solve_lp;

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub obj: f64,
    pub binary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

/// Minimize `obj · x + obj_offset` subject to linear constraints and bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub obj_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// Branch-and-bound stopped early; the solution is the best incumbent.
    NodeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipSolution {
    pub status: Status,
    pub objective: f64,
    pub values: Vec<f64>,
    /// Relative gap between incumbent and best bound.
    pub gap: f64,
    pub nodes: usize,
    pub iterations: usize,
}

impl MipSolution {
    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }

    pub fn has_solution(&self) -> bool {
        matches!(self.status, Status::Optimal | Status::NodeLimit) && !self.values.is_empty()
    }

    pub(crate) fn failed(status: Status, iterations: usize) -> Self {
        Self {
            status,
            objective: f64::NAN,
            values: Vec::new(),
            gap: f64::INFINITY,
            nodes: 0,
            iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub int_tol: f64,
    pub rel_gap: f64,
    /// Simplex iterations per LP; 0 picks a size-based default.
    pub max_iterations: usize,
    pub max_nodes: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-6,
            int_tol: 1e-6,
            rel_gap: 1e-6,
            max_iterations: 0,
            max_nodes: 2_000,
        }
    }
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lo: f64, hi: f64, obj: f64) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lo,
            hi,
            obj,
            binary: false,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>, obj: f64) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lo: 0.0,
            hi: 1.0,
            obj,
            binary: true,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        cmp: Cmp,
        rhs: f64,
    ) {
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
            cmp,
            rhs,
        });
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.binary).count()
    }

    pub fn validate(&self) -> Result<(), String> {
        for v in &self.vars {
            if v.lo.is_nan() || v.hi.is_nan() || v.lo > v.hi {
                return Err(format!("variable {}: inconsistent bounds [{}, {}]", v.name, v.lo, v.hi));
            }
            if !v.obj.is_finite() {
                return Err(format!("variable {}: non-finite objective", v.name));
            }
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() || c.terms.iter().any(|(id, a)| !a.is_finite() || id.0 >= self.vars.len()) {
                return Err(format!("constraint {}: bad coefficient or index", c.name));
            }
        }
        Ok(())
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.obj_offset + self.vars.iter().zip(x).map(|(v, xi)| v.obj * xi).sum::<f64>()
    }

    /// Largest violation of bounds, constraints and integrality at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xi) in self.vars.iter().zip(x) {
            worst = worst.max(v.lo - xi).max(xi - v.hi);
            if v.binary {
                worst = worst.max(xi.min(1.0 - xi).max(0.0));
            }
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|(id, a)| a * x[id.0]).sum();
            let viol = match c.cmp {
                Cmp::Le => lhs - c.rhs,
                Cmp::Ge => c.rhs - lhs,
                Cmp::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Human-readable dump in an LP-file-like syntax.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::from("Minimize\n obj:");
        for v in self.vars.iter().filter(|v| v.obj != 0.0) {
            let _ = write!(out, " {:+} {}", v.obj, v.name);
        }
        if self.obj_offset != 0.0 {
            let _ = write!(out, " {:+}", self.obj_offset);
        }
        out.push_str("\nSubject To\n");
        for c in &self.constraints {
            let _ = write!(out, " {}:", c.name);
            for (id, a) in &c.terms {
                let _ = write!(out, " {:+} {}", a, self.vars[id.0].name);
            }
            let op = match c.cmp {
                Cmp::Le => "<=",
                Cmp::Ge => ">=",
                Cmp::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", c.rhs);
        }
        out.push_str("Bounds\n");
        for v in self.vars.iter().filter(|v| !v.binary) {
            let _ = writeln!(out, " {} <= {} <= {}", v.lo, v.name, v.hi);
        }
        out.push_str("Binaries\n");
        for v in self.vars.iter().filter(|v| v.binary) {
            let _ = writeln!(out, " {}", v.name);
        }
        out.push_str("End\n");
        out
    }
}

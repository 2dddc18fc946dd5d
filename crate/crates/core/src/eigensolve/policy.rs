use serde::{Deserialize, Serialize};

use super::{principal_eigenpair_from, EigenError, EigenPair};
use crate::discretize::{assemble, DiscretizeError, GridSpec, MarkovPolicy, RowBuilder};
use crate::model::SwitchingModel;

/// Per (interior node, regime), the control minimizing the discrete
/// Hamiltonian `(A^u psi)_k(x)`, lowest index on ties. `psi` is indexed like
/// the operator unknowns.
pub fn minimizing_selector(
    model: &SwitchingModel,
    grid: &GridSpec,
    psi: &[f64],
) -> Result<MarkovPolicy, DiscretizeError> {
    select(model, grid, psi, None)
}

/// Lowest-index argmin; with `keep`, the current control is kept unless some
/// other control is better by more than a rounding-level margin.
fn select(
    model: &SwitchingModel,
    grid: &GridSpec,
    psi: &[f64],
    keep: Option<&MarkovPolicy>,
) -> Result<MarkovPolicy, DiscretizeError> {
    let n = model.num_regimes();
    let nc = model.num_controls();
    let mut rb = RowBuilder::new(model, grid)?;
    let m = rb.interior().len();
    let mut values = vec![0.0; nc];
    let mut table = Vec::with_capacity(m * n);
    for p in 0..m {
        for k in 0..n {
            let mut scale = 0.0f64;
            for (u, val) in values.iter_mut().enumerate() {
                rb.build(p, k, u)?;
                let mut s = 0.0;
                for &(c, v) in &rb.entries {
                    s += v * psi[c];
                    scale = scale.max((v * psi[c]).abs());
                }
                *val = s;
            }
            let mut best = 0;
            for u in 1..nc {
                if values[u] < values[best] {
                    best = u;
                }
            }
            if let Some(cur) = keep {
                let c = cur.get(p, k);
                if values[c] <= values[best] + 1e-12 * scale {
                    best = c;
                }
            }
            table.push(best);
        }
    }
    Ok(MarkovPolicy::from_fn(m, n, |p, k| table[p * n + k]))
}

/// Largest `((A^{policy} psi)_i - min_u (A^u psi)_i) / psi_i` over all
/// unknowns: zero exactly when `policy` is a minimizing selector for `psi`.
pub fn selector_gap(
    model: &SwitchingModel,
    grid: &GridSpec,
    psi: &[f64],
    policy: &MarkovPolicy,
) -> Result<f64, DiscretizeError> {
    let n = model.num_regimes();
    let nc = model.num_controls();
    let mut rb = RowBuilder::new(model, grid)?;
    let m = rb.interior().len();
    policy.check(m, n, nc)?;
    let mut gap = 0.0f64;
    for p in 0..m {
        for k in 0..n {
            let mut best = f64::INFINITY;
            let mut chosen = 0.0;
            for u in 0..nc {
                rb.build(p, k, u)?;
                let s: f64 = rb.entries.iter().map(|&(c, v)| v * psi[c]).sum();
                best = best.min(s);
                if u == policy.get(p, k) {
                    chosen = s;
                }
            }
            gap = gap.max((chosen - best) / psi[p * n + k]);
        }
    }
    Ok(gap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Stop when consecutive policy eigenvalues differ by at most this.
    pub tol: f64,
    pub max_policy_iters: usize,
    pub eig_tol: f64,
    pub eig_max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_policy_iters: 50,
            eig_tol: 1e-11,
            eig_max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    PolicyStable,
    LambdaStalled,
    /// A policy repeated; the member with the smallest eigenvalue was kept.
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemilinearSolution {
    pub eigenpair: EigenPair,
    pub policy: MarkovPolicy,
    /// Principal eigenvalue of each evaluated policy, in order.
    pub trace: Vec<f64>,
    pub stop: StopReason,
    /// Eigenvalues around the detected cycle, when `stop == Cycle`.
    pub cycle: Option<Vec<f64>>,
}

impl SemilinearSolution {
    pub fn policy_iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Howard policy iteration for the min-type eigenproblem: start from the
/// constant lowest-index policy, then alternate assembly, principal
/// eigenpair and selector until the policy is stable. Each improvement step
/// satisfies `A^{new} psi <= A^{old} psi = lambda psi` rowwise, so the
/// Collatz-Wielandt bound makes the eigenvalue trace non-increasing.
pub fn solve_semilinear(
    model: &SwitchingModel,
    grid: &GridSpec,
    opts: &SolveOptions,
) -> Result<SemilinearSolution, EigenError> {
    if opts.max_policy_iters == 0 {
        return Err(EigenError::InvalidInput(
            "max_policy_iters must be positive".into(),
        ));
    }
    let n = model.num_regimes();
    let m = grid.num_interior();
    let mut policy = MarkovPolicy::constant(m, n, 0);
    let mut history: Vec<(MarkovPolicy, EigenPair)> = Vec::new();
    let mut trace = Vec::new();
    let mut init = vec![1.0; m * n];

    for _ in 0..opts.max_policy_iters {
        let op = assemble(model, grid, &policy)?;
        let ep = principal_eigenpair_from(&op, opts.eig_tol, opts.eig_max_iter, &init)?;
        trace.push(ep.lambda);
        let next = select(model, grid, &ep.psi, Some(&policy))?;

        if next == policy {
            return Ok(SemilinearSolution {
                eigenpair: ep,
                policy,
                trace,
                stop: StopReason::PolicyStable,
                cycle: None,
            });
        }
        let len = trace.len();
        if len >= 2 && (trace[len - 1] - trace[len - 2]).abs() <= opts.tol {
            return Ok(SemilinearSolution {
                eigenpair: ep,
                policy,
                trace,
                stop: StopReason::LambdaStalled,
                cycle: None,
            });
        }
        if let Some(start) = history.iter().position(|(p, _)| *p == next) {
            history.push((policy, ep));
            let members = &history[start..];
            let cycle: Vec<f64> = members.iter().map(|(_, e)| e.lambda).collect();
            let best = members
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .1.lambda.total_cmp(&b.1 .1.lambda).then(a.0.cmp(&b.0)))
                .map(|(i, _)| start + i)
                .expect("cycle is non-empty");
            let (policy, eigenpair) = history.swap_remove(best);
            return Ok(SemilinearSolution {
                eigenpair,
                policy,
                trace,
                stop: StopReason::Cycle,
                cycle: Some(cycle),
            });
        }
        init.clone_from(&ep.psi);
        history.push((policy, ep));
        policy = next;
    }
    Err(EigenError::PolicyIterationLimit {
        max_policy_iters: opts.max_policy_iters,
        trace,
    })
}

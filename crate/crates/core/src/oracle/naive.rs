//! Literal multi-index sums for the dependence estimators. No matrix
//! identities are used, so these serve as independent references.


use crate::dependence::{check_paired, DependenceValue};
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, SampleMatrix};

/// Largest sample count the quartic oracles accept.
pub const NAIVE_CAP: usize = 64;

fn kappa(a: &[f64], b: &[f64], spec: KernelSpec) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
    spec.eval_sqdist(d)
}

fn guard(n: usize) -> Result<()> {
    if n > NAIVE_CAP {
        return Err(Error::CostGuard { n, cap: NAIVE_CAP });
    }
    Ok(())
}

/// Per-pair kernel tables, built by direct evaluation.
fn tables(x: &SampleMatrix, t: &SampleMatrix, sx: KernelSpec, st: KernelSpec) -> (alloc::vec::Vec<f64>, alloc::vec::Vec<f64>) {
    let n = x.rows();
    let mut k = alloc::vec![0.0; n * n];
    let mut q = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = kappa(x.row(i), x.row(j), sx);
            q[i * n + j] = kappa(t.row(i), t.row(j), st);
        }
    }
    (k, q)
}

/// `log N⁻²ΣᵢΣⱼKᵢⱼQᵢⱼ + log N⁻⁴ΣᵢΣⱼΣₖΣₗKᵢⱼQₖₗ - 2 log N⁻³ΣᵢΣⱼΣₖKᵢⱼQᵢₖ`.
pub fn naive_cs_qmi(x: &SampleMatrix, t: &SampleMatrix, sx: KernelSpec, st: KernelSpec) -> Result<DependenceValue> {
    let n = check_paired(x, t)?;
    guard(n)?;
    let (k, q) = tables(x, t, sx, st);
    let (mut joint, mut marg, mut cross) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            joint += k[i * n + j] * q[i * n + j];
            for l in 0..n {
                cross += k[i * n + j] * q[i * n + l];
                for m in 0..n {
                    marg += k[i * n + j] * q[l * n + m];
                }
            }
        }
    }
    let nf = n as f64;
    Ok(DependenceValue(
        (joint / (nf * nf)).ln() + (marg / nf.powi(4)).ln() - 2.0 * (cross / nf.powi(3)).ln(),
    ))
}

/// `N⁻²ΣᵢΣⱼKᵢⱼQᵢⱼ + N⁻⁴ΣᵢΣⱼΣₖΣₗKᵢⱼQₖₗ - 2N⁻³ΣᵢΣⱼΣₖKᵢⱼQᵢₖ`.
pub fn naive_hsic(x: &SampleMatrix, t: &SampleMatrix, sx: KernelSpec, st: KernelSpec) -> Result<DependenceValue> {
    let n = check_paired(x, t)?;
    guard(n)?;
    let (k, q) = tables(x, t, sx, st);
    let (mut joint, mut marg, mut cross) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            joint += k[i * n + j] * q[i * n + j];
            for l in 0..n {
                cross += k[i * n + j] * q[i * n + l];
                for m in 0..n {
                    marg += k[i * n + j] * q[l * n + m];
                }
            }
        }
    }
    let nf = n as f64;
    Ok(DependenceValue(joint / (nf * nf) + marg / nf.powi(4) - 2.0 * cross / nf.powi(3)))
}

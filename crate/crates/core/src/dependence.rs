//! Kernel dependence measures: CS quadratic mutual information, biased
//! HSIC, their normalized and chain-rule variants, and the KDE entropy bound
//! used by nonlinear IB.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::kernel::{gram, log_sum_exp, pairwise_sqdist, KernelSpec, SampleMatrix};
use crate::matrix::Matrix;

/// A dependence estimate in nats.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DependenceValue(pub f64);

impl DependenceValue {
    pub fn nats(self) -> f64 {
        self.0
    }
}

/// Self-dependence at or below this is treated as a constant input.
pub const DEGENERATE_SELF_DEPENDENCE: f64 = 1e-12;

pub(crate) fn check_paired(x: &SampleMatrix, t: &SampleMatrix) -> Result<usize> {
    if x.rows() != t.rows() {
        return Err(dim_err(format!(
            "row counts differ: {} vs {}",
            x.rows(),
            t.rows()
        )));
    }
    if x.rows() < 2 {
        return Err(dim_err("at least two paired rows are required"));
    }
    Ok(x.rows())
}

/// CS-QMI from two N×N Gram matrices in O(N²).
pub(crate) fn cs_qmi_from_grams(k: &Matrix, q: &Matrix) -> f64 {
    let n = k.rows() as f64;
    let joint: f64 = k.as_slice().iter().zip(q.as_slice()).map(|(a, b)| a * b).sum();
    let rk = k.row_sums();
    let rq = q.row_sums();
    let marg = rk.sum() * rq.sum();
    let cross: f64 = rk.as_slice().iter().zip(rq.as_slice()).map(|(a, b)| a * b).sum();
    (joint / (n * n)).ln() + (marg / (n * n * n * n)).ln() - 2.0 * (cross / (n * n * n)).ln()
}

/// CS divergence between the joint of (x, t) and the product of marginals.
pub fn cs_qmi(x: &SampleMatrix, t: &SampleMatrix, sx: KernelSpec, st: KernelSpec) -> Result<DependenceValue> {
    check_paired(x, t)?;
    let k = gram(x, x, sx)?;
    let q = gram(t, t, st)?;
    Ok(DependenceValue(cs_qmi_from_grams(k.entries(), q.entries())))
}

/// `N⁻² tr(KHQH)` with explicit double centering of K.
pub(crate) fn hsic_from_grams(k: &Matrix, q: &Matrix) -> f64 {
    let n = k.rows();
    let nf = n as f64;
    let row_mean: alloc::vec::Vec<f64> = k.row_iter().map(|r| r.iter().sum::<f64>() / nf).collect();
    let col_mean = k.col_sums().map(|v| v / nf);
    let grand = row_mean.iter().sum::<f64>() / nf;
    let mut tr = 0.0;
    for i in 0..n {
        for j in 0..n {
            let centered = k[(i, j)] - row_mean[i] - col_mean[(0, j)] + grand;
            tr += centered * q[(j, i)];
        }
    }
    tr / (nf * nf)
}

/// Biased V-statistic HSIC.
pub fn hsic_biased(x: &SampleMatrix, t: &SampleMatrix, sx: KernelSpec, st: KernelSpec) -> Result<DependenceValue> {
    check_paired(x, t)?;
    let k = gram(x, x, sx)?;
    let q = gram(t, t, st)?;
    Ok(DependenceValue(hsic_from_grams(k.entries(), q.entries())))
}

/// Raw CS-QMI together with both self-dependences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsQmiParts {
    pub raw: f64,
    pub self_x: f64,
    pub self_t: f64,
}

impl CsQmiParts {
    /// `I(x;t) / √(I(x;x) I(t;t))`, rejecting constant inputs.
    pub fn normalized(&self) -> Result<f64> {
        check_self_dependence("x", self.self_x)?;
        check_self_dependence("t", self.self_t)?;
        Ok(self.raw / (self.self_x * self.self_t).sqrt())
    }
}

fn row_kernel(m: &Matrix, i: usize, c: f64, out: &mut [f64]) {
    let a = m.row(i);
    for (j, o) in out.iter_mut().enumerate() {
        let d: f64 = a
            .iter()
            .zip(m.row(j))
            .map(|(p, q)| {
                let d = p - q;
                d * d
            })
            .sum();
        *o = (d * c).exp();
    }
}

/// Gathers the Gram sums row by row, so memory stays O(N) for large N.
pub fn cs_qmi_parts(x: &SampleMatrix, t: &SampleMatrix, sx: KernelSpec, st: KernelSpec) -> Result<CsQmiParts> {
    let n = check_paired(x, t)?;
    let (cx, ct) = (sx.neg_half_inv_var(), st.neg_half_inv_var());
    let (mut kq, mut kk, mut qq) = (0.0, 0.0, 0.0);
    let mut rk = alloc::vec![0.0; n];
    let mut rq = alloc::vec![0.0; n];
    let mut krow = alloc::vec![0.0; n];
    let mut qrow = alloc::vec![0.0; n];
    for i in 0..n {
        row_kernel(x.matrix(), i, cx, &mut krow);
        row_kernel(t.matrix(), i, ct, &mut qrow);
        for (a, b) in krow.iter().zip(&qrow) {
            kq += a * b;
            kk += a * a;
            qq += b * b;
        }
        rk[i] = krow.iter().sum();
        rq[i] = qrow.iter().sum();
    }
    let nf = n as f64;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let (sk, sq) = (rk.iter().sum::<f64>(), rq.iter().sum::<f64>());
    let qmi = |joint: f64, marg: f64, cross: f64| {
        (joint / (nf * nf)).ln() + (marg / (nf * nf * nf * nf)).ln() - 2.0 * (cross / (nf * nf * nf)).ln()
    };
    Ok(CsQmiParts {
        raw: qmi(kq, sk * sq, dot(&rk, &rq)),
        self_x: qmi(kk, sk * sk, dot(&rk, &rk)),
        self_t: qmi(qq, sq * sq, dot(&rq, &rq)),
    })
}

/// `I(x;t) / √(I(x;x) I(t;t))`.
pub fn normalized_cs_qmi(x: &SampleMatrix, t: &SampleMatrix, sx: KernelSpec, st: KernelSpec) -> Result<DependenceValue> {
    Ok(DependenceValue(cs_qmi_parts(x, t, sx, st)?.normalized()?))
}

pub(crate) fn check_self_dependence(name: &str, v: f64) -> Result<()> {
    if !(v > DEGENERATE_SELF_DEPENDENCE) {
        return Err(Error::DegenerateInput(format!(
            "self-dependence of {name} is {v:e}; input is constant under its kernel"
        )));
    }
    Ok(())
}

/// Kernel widths for the x-, t- and y-spaces.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DependenceSpecs {
    pub x: KernelSpec,
    pub t: KernelSpec,
    pub y: KernelSpec,
}

/// `I(x;t|y)` through the chain rule `I(x;t) - I(y;t)`. Negative residuals
/// are returned as computed.
pub fn conditional_cs_qmi(
    x: &SampleMatrix,
    t: &SampleMatrix,
    y: &SampleMatrix,
    specs: DependenceSpecs,
) -> Result<DependenceValue> {
    check_paired(x, t)?;
    check_paired(y, t)?;
    let q = gram(t, t, specs.t)?.into_entries();
    let k = gram(x, x, specs.x)?.into_entries();
    let l = gram(y, y, specs.y)?.into_entries();
    Ok(DependenceValue(cs_qmi_from_grams(&k, &q) - cs_qmi_from_grams(&l, &q)))
}

/// KDE upper bound on `I(x;t)` for `t = h + N(0, σ²I)`:
/// `-N⁻¹ Σᵢ log N⁻¹ Σⱼ exp(-‖hᵢ-hⱼ‖²/2σ²)`.
pub fn nib_kde_bound(t_centers: &SampleMatrix, noise_sigma: f64) -> Result<f64> {
    let spec = KernelSpec::new(noise_sigma)?;
    let n = t_centers.rows();
    if n < 2 {
        return Err(dim_err("at least two centers are required"));
    }
    let d = pairwise_sqdist(t_centers, t_centers)?;
    let c = spec.neg_half_inv_var();
    let ln_n = (n as f64).ln();
    let total: f64 = d
        .row_iter()
        .map(|r| log_sum_exp(r.iter().map(|v| v * c)) - ln_n)
        .sum();
    Ok(-total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::naive::{naive_cs_qmi, naive_hsic};
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn spec(s: f64) -> KernelSpec {
        KernelSpec::new(s).unwrap()
    }

    fn constant(n: usize, d: usize) -> SampleMatrix {
        SampleMatrix::from_vec(n, d, alloc::vec![0.7; n * d]).unwrap()
    }

    fn fixed(n: usize, d: usize, seed: u64) -> SampleMatrix {
        // small deterministic quasi-random table
        let mut s = seed;
        let v = (0..n * d)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        SampleMatrix::from_vec(n, d, v).unwrap()
    }

    #[test]
    fn constant_t_gives_zero() {
        let x = fixed(8, 3, 1);
        let t = constant(8, 2);
        assert!(cs_qmi(&x, &t, spec(1.0), spec(1.0)).unwrap().nats().abs() < 1e-14);
        assert!(hsic_biased(&x, &t, spec(1.0), spec(1.0)).unwrap().nats().abs() < 1e-15);
        let y = fixed(8, 1, 9);
        let specs = DependenceSpecs::default();
        assert!(conditional_cs_qmi(&x, &t, &y, specs).unwrap().nats().abs() < 1e-14);
        assert!(matches!(
            normalized_cs_qmi(&x, &t, spec(1.0), spec(1.0)),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn self_dependence() {
        let x = fixed(10, 2, 3);
        let s = spec(0.8);
        assert!(cs_qmi(&x, &x, s, s).unwrap().nats() > 0.0);
        let n = normalized_cs_qmi(&x, &x, s, s).unwrap().nats();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dependent_pair_normalized_in_unit_interval() {
        let x = fixed(20, 2, 5);
        let t = SampleMatrix::from_vec(
            20,
            1,
            (0..20).map(|i| x.row(i)[0] * 2.0 + 0.3 * x.row(i)[1].sin()).collect(),
        )
        .unwrap();
        let v = normalized_cs_qmi(&x, &t, spec(0.5), spec(0.5)).unwrap().nats();
        assert!(v > 0.0 && v < 1.0, "{v}");
    }

    #[test]
    fn conditional_is_chain_rule_difference() {
        let x = fixed(12, 3, 11);
        let t = fixed(12, 2, 12);
        let y = fixed(12, 1, 13);
        let specs = DependenceSpecs {
            x: spec(0.9),
            t: spec(1.1),
            y: spec(0.4),
        };
        let c = conditional_cs_qmi(&x, &t, &y, specs).unwrap().nats();
        let direct = cs_qmi(&x, &t, specs.x, specs.t).unwrap().nats() - cs_qmi(&y, &t, specs.y, specs.t).unwrap().nats();
        assert_eq!(c, direct);
        // t = y substitution
        let c = conditional_cs_qmi(&x, &y, &y, DependenceSpecs { t: specs.y, ..specs }).unwrap().nats();
        let sub = cs_qmi(&x, &y, specs.x, specs.y).unwrap().nats() - cs_qmi(&y, &y, specs.y, specs.y).unwrap().nats();
        assert!((c - sub).abs() < 1e-14);
    }

    #[test]
    fn fast_forms_match_naive_oracles() {
        let x = fixed(8, 3, 21);
        let t = fixed(8, 2, 22);
        let (sx, st) = (spec(0.7), spec(1.3));
        let fast = cs_qmi(&x, &t, sx, st).unwrap().nats();
        let slow = naive_cs_qmi(&x, &t, sx, st).unwrap().nats();
        assert!((fast - slow).abs() <= 1e-10 * slow.abs());
        let fast = hsic_biased(&x, &t, sx, st).unwrap().nats();
        let slow = naive_hsic(&x, &t, sx, st).unwrap().nats();
        assert!((fast - slow).abs() <= 1e-10 * slow.abs());
    }

    #[test]
    fn permutation_breaks_hsic_dependence() {
        let x = fixed(30, 1, 31);
        let t = SampleMatrix::from_vec(30, 1, (0..30).map(|i| 2.0 * x.row(i)[0]).collect()).unwrap();
        let s = spec(0.5);
        let paired = hsic_biased(&x, &t, s, s).unwrap().nats();
        let mut lower = 0;
        let mut perm: Vec<usize> = (0..30).collect();
        let mut state = 7u64;
        for _ in 0..100 {
            for i in (1..30).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                let j = (state >> 33) as usize % (i + 1);
                perm.swap(i, j);
            }
            let shuffled = t.select_rows(&perm);
            if hsic_biased(&x, &shuffled, s, s).unwrap().nats() < paired {
                lower += 1;
            }
        }
        assert_eq!(lower, 100);
    }

    #[test]
    fn nib_bound_cases() {
        assert!(nib_kde_bound(&constant(6, 2), 0.5).unwrap().abs() < 1e-15);
        assert!(matches!(nib_kde_bound(&constant(6, 2), 0.0), Err(Error::InvalidKernel(_))));
        let h = fixed(8, 2, 41);
        let sigma = 0.6f64;
        let mut oracle = 0.0;
        for i in 0..8 {
            let mut inner = 0.0;
            for j in 0..8 {
                let d: f64 = h.row(i).iter().zip(h.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                inner += (-d / (2.0 * sigma * sigma)).exp();
            }
            oracle -= (inner / 8.0).ln();
        }
        oracle /= 8.0;
        assert!((nib_kde_bound(&h, sigma).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn streamed_parts_match_gram_forms() {
        let x = fixed(20, 3, 1);
        let t = fixed(20, 2, 2);
        let (sx, st) = (spec(0.8), spec(1.3));
        let p = cs_qmi_parts(&x, &t, sx, st).unwrap();
        let k = gram(&x, &x, sx).unwrap().into_entries();
        let q = gram(&t, &t, st).unwrap().into_entries();
        assert!((p.raw - cs_qmi_from_grams(&k, &q)).abs() < 1e-12);
        assert!((p.self_x - cs_qmi_from_grams(&k, &k)).abs() < 1e-12);
        assert!((p.self_t - cs_qmi_from_grams(&q, &q)).abs() < 1e-12);
    }

    #[test]
    fn mismatched_rows_rejected() {
        let r = cs_qmi(&fixed(4, 1, 1), &fixed(5, 1, 2), spec(1.0), spec(1.0));
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    fn paired(max_n: usize) -> impl Strategy<Value = (SampleMatrix, SampleMatrix)> {
        (2..=max_n, 1..4usize, 1..4usize).prop_flat_map(|(n, dx, dt)| {
            (
                proptest::collection::vec(-2.0f64..2.0, n * dx),
                proptest::collection::vec(-2.0f64..2.0, n * dt),
            )
                .prop_map(move |(a, b)| {
                    (
                        SampleMatrix::from_vec(n, dx, a).unwrap(),
                        SampleMatrix::from_vec(n, dt, b).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn fast_equals_naive((x, t) in paired(32), sx in 0.3f64..2.0, st in 0.3f64..2.0) {
            let (sx, st) = (spec(sx), spec(st));
            let f = cs_qmi(&x, &t, sx, st).unwrap().nats();
            let n = naive_cs_qmi(&x, &t, sx, st).unwrap().nats();
            prop_assert!((f - n).abs() <= 1e-10 * n.abs().max(1e-3));
            let f = hsic_biased(&x, &t, sx, st).unwrap().nats();
            let n = naive_hsic(&x, &t, sx, st).unwrap().nats();
            prop_assert!((f - n).abs() <= 1e-10 * n.abs().max(1e-3));
        }

        #[test]
        fn nonnegative((x, t) in paired(12), sx in 0.3f64..2.0, st in 0.3f64..2.0) {
            prop_assert!(cs_qmi(&x, &t, spec(sx), spec(st)).unwrap().nats() >= -1e-9);
            prop_assert!(hsic_biased(&x, &t, spec(sx), spec(st)).unwrap().nats() >= -1e-9);
        }

        #[test]
        fn joint_row_permutation_invariant((x, t) in paired(10), seed in 0u64..1000) {
            let n = x.rows();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let (px, pt) = (x.select_rows(&perm), t.select_rows(&perm));
            let sp = spec(1.0);
            let a = cs_qmi(&x, &t, sp, sp).unwrap().nats();
            let b = cs_qmi(&px, &pt, sp, sp).unwrap().nats();
            prop_assert!((a - b).abs() <= 1e-12);
            let a = hsic_biased(&x, &t, sp, sp).unwrap().nats();
            let b = hsic_biased(&px, &pt, sp, sp).unwrap().nats();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

//! Agreement between algebraically equivalent forms of the sample estimators
//! on random small instances.

use serde::{Deserialize, Serialize};

use crate::dependence::{cs_qmi, hsic_biased};
use crate::divergence::{empirical_cs, empirical_cs_embedding_form};
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, SampleMatrix};
use crate::oracle::naive::{naive_cs_qmi, naive_hsic};
use crate::rng::{stream, Rng};

/// Largest accepted relative gap between two forms.
pub const FORMS_TOL: f64 = 1e-10;

/// Largest sample count per instance.
pub const FORMS_MAX_N: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormsReport {
    pub instances: usize,
    /// Gram-sum CS vs the embedding-cosine form.
    pub cs_embedding: f64,
    /// Matrix CS-QMI vs the literal sums.
    pub cs_qmi: f64,
    /// Centered-trace HSIC vs the literal sums.
    pub hsic: f64,
}

impl FormsReport {
    pub fn passes(&self) -> bool {
        [self.cs_embedding, self.cs_qmi, self.hsic].iter().all(|e| *e <= FORMS_TOL)
    }
}

pub fn rel_gap(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

fn sample(rng: &mut Rng, n: usize, d: usize, shift: f64) -> Result<SampleMatrix> {
    SampleMatrix::new(rng.normal_matrix(n, d).map(|v| v + shift))
}

/// Worst relative gap of each identity over `instances` random draws.
pub fn forms_check(instances: usize, seed: u64) -> Result<FormsReport> {
    if instances == 0 {
        return Err(Error::Config("at least one instance is required".into()));
    }
    let mut rng = Rng::new(seed, stream::ORACLE);
    let mut r = FormsReport {
        instances,
        cs_embedding: 0.0,
        cs_qmi: 0.0,
        hsic: 0.0,
    };
    for _ in 0..instances {
        let n = 2 + rng.below(FORMS_MAX_N - 1);
        let d = 1 + rng.below(3);
        let spec = KernelSpec::new(rng.uniform_range(0.5, 2.0))?;
        let spec_t = KernelSpec::new(rng.uniform_range(0.5, 2.0))?;

        let a = sample(&mut rng, n, d, 0.0)?;
        let m = 2 + rng.below(FORMS_MAX_N - 1);
        let shift = rng.uniform_range(-1.0, 1.0);
        let b = sample(&mut rng, m, d, shift)?;
        let g = rel_gap(empirical_cs(&a, &b, spec)?.nats(), empirical_cs_embedding_form(&a, &b, spec)?.nats());
        r.cs_embedding = r.cs_embedding.max(g);

        // t depends on x so the dependence values stay away from zero
        let noise = rng.normal_matrix(n, d);
        let t = SampleMatrix::new(a.matrix().zip_map(&noise, |u, e| u + 0.5 * e))?;
        let g = rel_gap(cs_qmi(&a, &t, spec, spec_t)?.nats(), naive_cs_qmi(&a, &t, spec, spec_t)?.nats());
        r.cs_qmi = r.cs_qmi.max(g);
        let g = rel_gap(hsic_biased(&a, &t, spec, spec_t)?.nats(), naive_hsic(&a, &t, spec, spec_t)?.nats());
        r.hsic = r.hsic.max(g);
    }
    Ok(r)
}

//! Observation tables consumed by the Bayesian-model targets, plus the
//! seeded synthetic generators used wherever no published data exists.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::special::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFixture {
    pub name: String,
    pub columns: BTreeMap<String, Vec<f64>>,
    pub provenance: String,
}

impl DatasetFixture {
    pub fn new(
        name: impl Into<String>,
        columns: BTreeMap<String, Vec<f64>>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let fixture = Self {
            name: name.into(),
            columns,
            provenance: provenance.into(),
        };
        fixture.validate()?;
        Ok(fixture)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let fixture: Self = serde_json::from_str(s)?;
        fixture.validate()?;
        Ok(fixture)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn validate(&self) -> Result<()> {
        let mut lengths = self.columns.iter();
        if let Some((_, first)) = lengths.next() {
            for (name, col) in lengths {
                if col.len() != first.len() {
                    return Err(Error::WrongLength {
                        column: name.clone(),
                        expected: first.len(),
                        got: col.len(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.columns.values().next().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingColumn {
                dataset: self.name.clone(),
                column: name.to_string(),
            })
    }

    /// Like [`column`](Self::column), additionally requiring `len` rows.
    pub fn column_of_len(&self, name: &str, len: usize) -> Result<&[f64]> {
        let col = self.column(name)?;
        if col.len() != len {
            return Err(Error::WrongLength {
                column: name.to_string(),
                expected: len,
                got: col.len(),
            });
        }
        Ok(col)
    }
}

/// Coefficients `(β₀, β₁, β₂)` used to simulate logistic-regression data.
pub const LOGISTIC_TRUE_BETA: [f64; 3] = [0.5, -0.8, 1.2];

/// `n` rows of `x1, x2 ~ N(0, 1)` and `y ~ Bernoulli(logit⁻¹(βᵀ(1, x1, x2)))`
/// at [`LOGISTIC_TRUE_BETA`]. Row `i` depends only on `(seed, i)`, so the
/// first rows of a larger dataset equal a smaller one.
pub fn logistic_synthetic(n: usize, seed: u64) -> DatasetFixture {
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rng::stream(seed, i as u64);
        let a: f64 = r.sample(StandardNormal);
        let b: f64 = r.sample(StandardNormal);
        let [b0, b1, b2] = LOGISTIC_TRUE_BETA;
        let p = sigmoid(b0 + b1 * a + b2 * b);
        x1.push(a);
        x2.push(b);
        y.push(if r.random::<f64>() < p { 1.0 } else { 0.0 });
    }
    let columns = BTreeMap::from([("x1".into(), x1), ("x2".into(), x2), ("y".into(), y)]);
    DatasetFixture {
        name: format!("logistic_synthetic_n{n}_seed{seed}"),
        columns,
        provenance: format!(
            "simulated: x1, x2 ~ N(0,1), y ~ Bernoulli(logit^-1(0.5 - 0.8 x1 + 1.2 x2)), seed {seed}"
        ),
    }
}

/// Binomial brood-success data on a standardized year covariate:
/// `n_years` rows, `N ~ 20 + Poisson-ish spread`, `C ~ Binomial(N, logit⁻¹(0.8 + 0.3 ye - 0.2 ye²))`.
pub fn glm_synthetic(n_years: usize, seed: u64) -> DatasetFixture {
    let mut big_n = Vec::with_capacity(n_years);
    let mut c = Vec::with_capacity(n_years);
    let mut ye = Vec::with_capacity(n_years);
    let span = (n_years.max(2) - 1) as f64;
    for i in 0..n_years {
        let mut r = rng::stream(seed, i as u64);
        let t = -1.5 + 3.0 * i as f64 / span;
        let trials = 15 + r.random_range(0..30u64);
        let p = sigmoid(0.8 + 0.3 * t - 0.2 * t * t);
        let k = Binomial::new(trials, p).expect("valid binomial").sample(&mut r);
        big_n.push(trials as f64);
        c.push(k as f64);
        ye.push(t);
    }
    let columns = BTreeMap::from([("C".into(), c), ("N".into(), big_n), ("ye".into(), ye)]);
    DatasetFixture {
        name: format!("glm_synthetic_{n_years}y_seed{seed}"),
        columns,
        provenance: format!(
            "simulated: ye evenly spaced on [-1.5, 1.5], N uniform on 15..44, \
             C ~ Binomial(N, logit^-1(0.8 + 0.3 ye - 0.2 ye^2)), seed {seed}"
        ),
    }
}

/// Eight-schools style data drawn from the hierarchical model itself:
/// `θᵢ ~ N(mu, tau²)`, `yᵢ ~ N(θᵢ, σᵢ²)` with the given `σ`.
pub fn eight_schools_synthetic(mu: f64, tau: f64, sigma: [f64; 8], seed: u64) -> DatasetFixture {
    let mut r = rng::stream(seed, 0);
    let y: Vec<f64> = sigma
        .iter()
        .map(|s| {
            let theta = mu + tau * r.sample::<f64, _>(StandardNormal);
            theta + s * r.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let columns = BTreeMap::from([("sigma".into(), sigma.to_vec()), ("y".into(), y)]);
    DatasetFixture {
        name: format!("eight_schools_synthetic_seed{seed}"),
        columns,
        provenance: format!("simulated from the hierarchical model, mu={mu}, tau={tau}, seed {seed}"),
    }
}

/// The classic eight-schools coaching data, bundled so it does not depend
/// on the working directory. Identical to `data/eight_schools.json`.
pub fn eight_schools_classic() -> DatasetFixture {
    DatasetFixture::from_json_str(include_str!("../../../data/eight_schools.json"))
        .expect("bundled fixture is valid")
}

//! Ridge-regularized Cox partial likelihood as a composition problem.
//!
//! The objective is
//!
//! ```text
//! (1/n) Σ_i Δ_i [ -X_iᵀβ + log Σ_j 1{Y_j ≥ Y_i} exp(X_jᵀβ) ] + ½‖β‖²
//! ```
//!
//! Written as a composition, the outer index runs over events (`Δ_i = 1`) and the
//! inner mean for event `i` is `(1/n) Σ_{j ∈ R_i} exp(X_jᵀβ)`, sampled as
//! `(|R_i|/n) exp(X_jᵀβ)` with `j` uniform on the risk set `R_i`. Moving the `1/n`
//! inside the logarithm shifts the objective by `(n_events/n) log n`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::problem::{CompositionProblem, InnerFamily, OuterFamily};
use crate::random::RandomSource;

/// Survival observations `(X_i, Y_i, Δ_i)` with precomputed risk sets.
#[derive(Clone, Debug)]
pub struct CoxDataset {
    // p x n, one column per observation
    xt: DMatrix<f64>,
    y: Vec<f64>,
    delta: Vec<bool>,
    // observation indices by decreasing Y
    order: Vec<usize>,
    // |R_i|: R_i is order[..risk_len[i]]
    risk_len: Vec<usize>,
}

impl CoxDataset {
    /// `x` is `n x p` with one row per observation.
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, delta: Vec<bool>) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidData(
                "dataset needs at least one observation and one covariate".into(),
            ));
        }
        if y.len() != n || delta.len() != n {
            return Err(Error::InvalidData(format!(
                "{} covariate rows, {} times and {} event indicators",
                n,
                y.len(),
                delta.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite covariate or time".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
        let mut risk_len = vec![0; n];
        let mut pos = 0;
        while pos < n {
            let mut end = pos + 1;
            while end < n && y[order[end]] == y[order[pos]] {
                end += 1;
            }
            for &i in &order[pos..end] {
                risk_len[i] = end;
            }
            pos = end;
        }
        Ok(CoxDataset {
            xt: x.transpose(),
            y,
            delta,
            order,
            risk_len,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn num_covariates(&self) -> usize {
        self.xt.nrows()
    }

    pub fn covariate(&self, i: usize) -> DVectorView<'_, f64> {
        self.xt.column(i)
    }

    /// Covariates as an `n x p` matrix.
    pub fn covariates(&self) -> DMatrix<f64> {
        self.xt.transpose()
    }

    pub fn times(&self) -> &[f64] {
        &self.y
    }

    pub fn events(&self) -> &[bool] {
        &self.delta
    }

    pub fn censoring_fraction(&self) -> f64 {
        self.delta.iter().filter(|d| !**d).count() as f64 / self.len() as f64
    }

    /// `{j : Y_j ≥ Y_i}`, listed by decreasing time.
    pub fn risk_set(&self, i: usize) -> &[usize] {
        &self.order[..self.risk_len[i]]
    }

    /// Writes `y, delta, x1..xp` with a header row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string(), "delta".to_string()];
        header.extend((1..=self.num_covariates()).map(|k| format!("x{k}")));
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut record = vec![self.y[i].to_string(), u8::from(self.delta[i]).to_string()];
            record.extend(self.covariate(i).iter().map(|v| v.to_string()));
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = input.headers()?.clone();
        let p = header.len().saturating_sub(2);
        let expected = ["y", "delta"]
            .iter()
            .map(|s| s.to_string())
            .chain((1..=p).map(|k| format!("x{k}")));
        if p == 0 || !header.iter().zip(expected).all(|(a, b)| a == b) {
            return Err(Error::InvalidData(format!(
                "expected header `y,delta,x1..xp`, got `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let parse = |field: &str, line: u64| -> Result<f64> {
            field.parse::<f64>().map_err(|_| {
                Error::InvalidData(format!("line {line}: cannot parse `{field}` as a number"))
            })
        };
        let (mut y, mut delta, mut values) = (Vec::new(), Vec::new(), Vec::new());
        for record in input.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            y.push(parse(&record[0], line)?);
            let d = parse(&record[1], line)?;
            if d != 0.0 && d != 1.0 {
                return Err(Error::InvalidData(format!(
                    "line {line}: delta must be 0 or 1, got {d}"
                )));
            }
            delta.push(d == 1.0);
            for field in record.iter().skip(2) {
                values.push(parse(field, line)?);
            }
        }
        let n = y.len();
        Self::new(DMatrix::from_row_slice(n, p, &values), y, delta)
    }
}

/// Default ground truth: the first five coefficients alternate `+0.5, -0.5`, the rest are zero.
pub fn default_true_coefficients(p: usize) -> DVector<f64> {
    DVector::from_fn(p, |k, _| match k {
        0..=4 if k % 2 == 0 => 0.5,
        0..=4 => -0.5,
        _ => 0.0,
    })
}

/// Event times with hazard `exp(β0ᵀX_i)`, one per row of `x`, by inverse transform of a unit exponential.
pub fn sample_event_times<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    beta0: &DVector<f64>,
    rng: &mut R,
) -> Vec<f64> {
    (x * beta0)
        .iter()
        .map(|r| rng.sample::<f64, _>(Exp1) / r.exp())
        .collect()
}

/// Simulated survival data with standard normal covariates, unit baseline hazard
/// and independent exponential censoring calibrated to `censor_target`.
pub fn generate_cox_data(n: usize, p: usize, censor_target: f64, seed: u64) -> Result<CoxDataset> {
    generate_cox_data_with(n, p, censor_target, seed, &default_true_coefficients(p))
}

pub fn generate_cox_data_with(
    n: usize,
    p: usize,
    censor_target: f64,
    seed: u64,
    beta0: &DVector<f64>,
) -> Result<CoxDataset> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidConfig("n and p must be positive".into()));
    }
    if !(censor_target > 0.0 && censor_target < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "censoring target must lie in (0, 1), got {censor_target}"
        )));
    }
    if beta0.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: beta0.len(),
        });
    }
    let mut rng = RandomSource::new(seed).stream();
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let t = sample_event_times(&x, beta0, &mut rng);
    let base_censor: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();

    let censored_at = |log_rate: f64| {
        let rate = log_rate.exp();
        t.iter()
            .zip(&base_censor)
            .filter(|(ti, ci)| **ci / rate < **ti)
            .count() as f64
            / n as f64
    };
    // censoring fraction is nondecreasing in the rate
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    let mut best = (f64::INFINITY, 0.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let frac = censored_at(mid);
        if (frac - censor_target).abs() < best.0 {
            best = ((frac - censor_target).abs(), mid);
        }
        if frac < censor_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 > 0.05 {
        return Err(Error::Calibration(format!(
            "closest censoring fraction is {:.3} away from the target {censor_target}",
            best.0
        )));
    }
    let rate = best.1.exp();
    let (y, delta) = t
        .iter()
        .zip(&base_censor)
        .map(|(ti, ci)| {
            let c = ci / rate;
            if *ti <= c {
                (*ti, true)
            } else {
                (c, false)
            }
        })
        .unzip();
    CoxDataset::new(x, y, delta)
}

/// Cox partial likelihood with the fixed ridge weight `½`.
#[derive(Clone, Debug)]
pub struct CoxProblem {
    data: CoxDataset,
    events: Vec<usize>,
    // n_events / n, the weight of each outer log term
    scale: f64,
}

impl CoxProblem {
    /// Fails when the dataset has no events.
    pub fn new(data: CoxDataset) -> Result<Self> {
        let events: Vec<usize> = (0..data.len()).filter(|&i| data.delta[i]).collect();
        if events.is_empty() {
            return Err(Error::InvalidData("dataset has no observed events".into()));
        }
        let scale = events.len() as f64 / data.len() as f64;
        Ok(CoxProblem {
            data,
            events,
            scale,
        })
    }

    pub fn dataset(&self) -> &CoxDataset {
        &self.data
    }

    /// Observation index of each outer component.
    pub fn event_indices(&self) -> &[usize] {
        &self.events
    }

    /// `F_composition = cox_objective - objective_offset`.
    pub fn objective_offset(&self) -> f64 {
        self.scale * (self.data.len() as f64).ln()
    }

    fn linear_predictor(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.data.xt.tr_mul(beta)
    }

    /// Direct evaluation by risk-set enumeration with a max-shifted log-sum-exp.
    pub fn cox_objective(&self, beta: &DVector<f64>) -> f64 {
        let eta = self.linear_predictor(beta);
        let n = self.data.len() as f64;
        let mut total = 0.0;
        for &i in &self.events {
            let risk = self.data.risk_set(i);
            let max = risk
                .iter()
                .map(|&j| eta[j])
                .fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = risk.iter().map(|&j| (eta[j] - max).exp()).sum();
            total += -eta[i] + max + sum.ln();
        }
        total / n + 0.5 * beta.norm_squared()
    }

    pub fn cox_full_gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let eta = self.linear_predictor(beta);
        let p = self.data.num_covariates();
        let mut grad = DVector::zeros(p);
        let mut weighted = DVector::zeros(p);
        for &i in &self.events {
            let risk = self.data.risk_set(i);
            let max = risk
                .iter()
                .map(|&j| eta[j])
                .fold(f64::NEG_INFINITY, f64::max);
            weighted.fill(0.0);
            let mut norm = 0.0;
            for &j in risk {
                let w = (eta[j] - max).exp();
                norm += w;
                weighted.axpy(w, &self.data.covariate(j), 1.0);
            }
            grad.axpy(1.0 / norm, &weighted, 1.0);
            grad -= self.data.covariate(i);
        }
        grad / self.data.len() as f64 + beta
    }

    fn inner_scale(&self, v: usize) -> f64 {
        self.data.risk_len[self.events[v]] as f64 / self.data.len() as f64
    }
}

impl CompositionProblem for CoxProblem {
    type InnerDraw = usize;

    fn dimension(&self) -> usize {
        self.data.num_covariates()
    }

    fn inner_dimension(&self) -> usize {
        1
    }

    fn outer_family(&self) -> OuterFamily {
        OuterFamily::Finite(self.events.len())
    }

    fn inner_family(&self, v: usize) -> InnerFamily {
        InnerFamily::Finite(self.data.risk_len[self.events[v]])
    }

    fn sample_inner<R: Rng + ?Sized>(&self, v: usize, rng: &mut R) -> usize {
        let risk = self.data.risk_set(self.events[v]);
        risk[rng.random_range(0..risk.len())]
    }

    fn inner_member(&self, v: usize, j: usize) -> Result<usize> {
        let risk = self.data.risk_set(self.events[v]);
        risk.get(j).copied().ok_or(Error::InnerOutOfRange {
            component: v,
            index: j,
            size: risk.len(),
        })
    }

    fn eval_inner(&self, v: usize, w: &usize, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(
            1,
            self.inner_scale(v) * self.data.covariate(*w).dot(x).exp(),
        )
    }

    fn jac_inner(&self, v: usize, w: &usize, x: &DVector<f64>) -> DMatrix<f64> {
        let value = self.inner_scale(v) * self.data.covariate(*w).dot(x).exp();
        DMatrix::from_row_slice(1, x.len(), (self.data.covariate(*w) * value).as_slice())
    }

    fn accumulate_inner(
        &self,
        v: usize,
        w: &usize,
        x: &DVector<f64>,
        weight: f64,
        value_mean: &mut DVector<f64>,
        jac_mean: &mut DMatrix<f64>,
    ) {
        let xj = self.data.covariate(*w);
        let value = self.inner_scale(v) * xj.dot(x).exp();
        value_mean[0] += weight * (value - value_mean[0]);
        for (m, c) in jac_mean.iter_mut().zip(xj.iter()) {
            *m += weight * (value * c - *m);
        }
    }

    fn eval_outer(&self, _v: usize, y: &DVector<f64>) -> f64 {
        self.scale * y[0].ln()
    }

    fn grad_outer(&self, _v: usize, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.scale / y[0])
    }

    fn direct_term(&self, v: usize, x: &DVector<f64>) -> f64 {
        -self.scale * self.data.covariate(self.events[v]).dot(x) + 0.5 * x.norm_squared()
    }

    fn direct_term_grad(&self, v: usize, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some(x - self.data.covariate(self.events[v]) * self.scale)
    }
}

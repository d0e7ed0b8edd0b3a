//! Synthetic stand-in for license-restricted inpatient records.
//!
//! Five columns mirror the real extract: length of stay `los`, procedure
//! count `npr`, diagnosis count `ndx`, `age`, and the skewed positive
//! response `totchg`. A shared latent severity factor plus a smooth
//! random-feature field over the standardized predictors induces the
//! cross-correlations; `totchg` is lognormal around that structure.

use super::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};
use rand::Rng;

pub const SYNTH_COLUMNS: [&str; 5] = ["los", "npr", "ndx", "age", "totchg"];

/// Smooth stationary field approximated by M random cosine features:
/// g(x) = sqrt(2/M) sum_m a_m cos(w_m . x + b_m), w_m ~ N(0, I)/l.
struct RandomField {
    weights: Vec<[f64; 4]>,
    phases: Vec<f64>,
    amps: Vec<f64>,
    scale: f64,
}

impl RandomField {
    fn new(rng: &mut impl Rng, m: usize, length_scale: f64) -> Self {
        let normal = |rng: &mut dyn rand::RngCore| -> f64 {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let weights = (0..m)
            .map(|_| {
                [
                    normal(rng) / length_scale,
                    normal(rng) / length_scale,
                    normal(rng) / length_scale,
                    normal(rng) / length_scale,
                ]
            })
            .collect();
        let phases = (0..m)
            .map(|_| rng.gen::<f64>() * 2.0 * std::f64::consts::PI)
            .collect();
        let amps = (0..m).map(|_| normal(rng)).collect();
        Self {
            weights,
            phases,
            amps,
            scale: (2.0 / m as f64).sqrt(),
        }
    }

    fn eval(&self, x: &[f64; 4]) -> f64 {
        let mut acc = 0.0;
        for ((w, b), a) in self.weights.iter().zip(&self.phases).zip(&self.amps) {
            let dot = w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + w[3] * x[3];
            acc += a * (dot + b).cos();
        }
        self.scale * acc
    }
}

/// Seeded synthetic table with `missing_rate` of the `totchg` cells blanked.
pub fn generate_synthetic_medical(
    n_rows: usize,
    seed: u64,
    missing_rate: f64,
) -> Result<TabularDataset> {
    if !(0.0..=1.0).contains(&missing_rate) {
        return Err(Error::ParamDomain(format!(
            "missing_rate must be in [0, 1], got {missing_rate}"
        )));
    }
    let mut rng = stream_rng(seed, streams::SYNTH_TABLE);
    let field = RandomField::new(&mut rng, 64, 1.5);
    let normal = |rng: &mut dyn rand::RngCore| -> f64 {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut cells: Vec<Option<f64>> = Vec::with_capacity(n_rows * 5);
    for _ in 0..n_rows {
        let severity = normal(&mut rng);
        let age = (55.0 + 19.0 * normal(&mut rng)).clamp(0.0, 95.0).round();
        let los = (0.9 + 0.8 * severity + 0.5 * normal(&mut rng))
            .exp()
            .round()
            .clamp(1.0, 120.0);
        let npr = (0.6 + 0.55 * severity + 0.45 * normal(&mut rng))
            .exp()
            .round()
            .clamp(0.0, 40.0);
        let ndx = (1.4 + 0.4 * severity + 0.02 * (age - 55.0) / 19.0 + 0.4 * normal(&mut rng))
            .exp()
            .round()
            .clamp(1.0, 40.0);
        // standardized predictor vector feeds the latent field
        let x = [
            (los.ln() - 0.9) / 0.9,
            (npr.max(1.0).ln() - 0.6) / 0.7,
            (ndx.ln() - 1.4) / 0.6,
            (age - 55.0) / 19.0,
        ];
        let totchg = (8.3
            + 0.75 * x[0]
            + 0.30 * x[1]
            + 0.35 * x[2]
            + 0.05 * x[3]
            + 0.55 * field.eval(&x)
            + 0.25 * normal(&mut rng))
        .exp()
        .round()
        .max(25.0);
        let totchg_cell = if rng.gen::<f64>() < missing_rate {
            None
        } else {
            Some(totchg)
        };
        cells.extend_from_slice(&[Some(los), Some(npr), Some(ndx), Some(age), totchg_cell]);
    }
    TabularDataset::new(SYNTH_COLUMNS.iter().map(|s| s.to_string()).collect(), cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_complete() {
        let ds = generate_synthetic_medical(500, 1, 0.0).unwrap();
        assert_eq!(ds.n_missing_total(), 0);
        assert_eq!(ds.n_rows(), 500);
    }

    #[test]
    fn missing_count_within_binomial_bounds() {
        // rate 0.02, n = 10000: binomial 99% interval around 200
        let ds = generate_synthetic_medical(10_000, 2, 0.02).unwrap();
        let col = ds.column_index("totchg").unwrap();
        let missing = ds.n_missing(col) as f64;
        let (n, p) = (10_000.0f64, 0.02f64);
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!(
            (missing - n * p).abs() <= 2.576 * sd,
            "missing = {missing}, expected around {}",
            n * p
        );
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic_medical(200, 3, 0.05).unwrap();
        let b = generate_synthetic_medical(200, 3, 0.05).unwrap();
        for r in 0..200 {
            for c in 0..5 {
                assert_eq!(a.get(r, c), b.get(r, c));
            }
        }
        let c = generate_synthetic_medical(200, 4, 0.05).unwrap();
        let differs = (0..200).any(|r| a.get(r, 0) != c.get(r, 0));
        assert!(differs);
    }

    #[test]
    fn charges_are_positive_and_skewed() {
        let ds = generate_synthetic_medical(2000, 5, 0.0).unwrap();
        let col = ds.column_index("totchg").unwrap();
        let vals: Vec<f64> = (0..2000).map(|r| ds.get(r, col).unwrap()).collect();
        assert!(vals.iter().all(|&v| v > 0.0));
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[vals.len() / 2];
        assert!(mean > 1.15 * median, "mean {mean}, median {median}");
    }

    #[test]
    fn predictors_correlate_with_response() {
        let ds = generate_synthetic_medical(4000, 6, 0.0).unwrap();
        let los: Vec<f64> = (0..4000).map(|r| ds.get(r, 0).unwrap().ln()).collect();
        let chg: Vec<f64> = (0..4000).map(|r| ds.get(r, 4).unwrap().ln()).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ml, mc) = (mean(&los), mean(&chg));
        let mut cov = 0.0;
        let mut vl = 0.0;
        let mut vc = 0.0;
        for i in 0..4000 {
            cov += (los[i] - ml) * (chg[i] - mc);
            vl += (los[i] - ml) * (los[i] - ml);
            vc += (chg[i] - mc) * (chg[i] - mc);
        }
        let corr = cov / (vl.sqrt() * vc.sqrt());
        assert!(corr > 0.4, "los/totchg log correlation {corr}");
    }
}

//! Versioned binary persistence for fitted models.
//!
//! Layout: magic `MLKM`, u32 format version, 32-byte SHA-256 of the schema
//! descriptor, u64 payload length, then the JSON payload. The schema hash
//! pins the field layout: readers reject files written under a different
//! schema rather than misinterpreting them. JSON serialization of f64 is
//! exact (shortest round-tripping representation), so a saved model
//! reproduces its in-memory predictions bit for bit.

use crate::data::Points;
use crate::design::TrendBasis;
use crate::error::{Error, Result};
use crate::impute::{FittedTransform, KrigingImputer, PredictorScaling};
use crate::kdtree::KdTree;
use crate::kernels::CovarianceModel;
use crate::mlbasis::MultilevelBasis;
use crate::solver::FittedModel;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

const MAGIC: &[u8; 4] = b"MLKM";
const FORMAT_VERSION: u32 = 1;
const SCHEMA_DESCRIPTOR: &str = "mlkrig-model-v1:\
theta{nu,rho,sigma2};beta_hat:[f64];gamma_hat:[f64];gamma_w:[f64];\
trend{d_loc,degree,exponents,scaling};locations{dim,coords};responses:[f64];\
scaling{mean,std};response:str;predictors:[str];transform;leaf_min:u64";

fn schema_hash() -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(SCHEMA_DESCRIPTOR.as_bytes());
    h.finalize().into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub theta: CovarianceModel,
    pub beta_hat: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    pub gamma_w: Vec<f64>,
    pub trend: TrendBasis,
    pub locations_dim: usize,
    pub locations: Vec<f64>,
    pub responses: Vec<f64>,
    pub scaling: PredictorScaling,
    pub response: String,
    pub predictors: Vec<String>,
    pub transform: FittedTransform,
    pub leaf_min: usize,
}

impl SavedModel {
    pub fn from_imputer(imputer: &KrigingImputer, transform: &FittedTransform) -> Self {
        let m = &imputer.model;
        Self {
            theta: m.theta,
            beta_hat: m.beta_hat.iter().copied().collect(),
            gamma_hat: m.gamma_hat.iter().copied().collect(),
            gamma_w: m.gamma_w.iter().copied().collect(),
            trend: m.trend.clone(),
            locations_dim: m.locations.dim(),
            locations: m.locations.coords().to_vec(),
            responses: m.responses.clone(),
            scaling: imputer.scaling.clone(),
            response: imputer.response.clone(),
            predictors: imputer.predictors.clone(),
            transform: transform.clone(),
            leaf_min: imputer.leaf_min,
        }
    }

    /// Reconstruct the imputer; the multilevel basis is rebuilt
    /// deterministically from the stored locations and trend.
    pub fn rebuild(&self) -> Result<(KrigingImputer, FittedTransform)> {
        let locations = Points::new(self.locations.clone(), self.locations_dim)?;
        let x = self.trend.design_matrix(&locations)?;
        let tree = KdTree::build(&locations, self.leaf_min)?;
        let basis = Arc::new(MultilevelBasis::build(&x, &tree)?);
        let model = FittedModel {
            theta: self.theta,
            beta_hat: DVector::from_vec(self.beta_hat.clone()),
            gamma_hat: DVector::from_vec(self.gamma_hat.clone()),
            gamma_w: DVector::from_vec(self.gamma_w.clone()),
            basis,
            trend: self.trend.clone(),
            locations,
            responses: self.responses.clone(),
        };
        Ok((
            KrigingImputer {
                model,
                scaling: self.scaling.clone(),
                response: self.response.clone(),
                predictors: self.predictors.clone(),
                fitted_theta: Some(self.theta),
                fit_trace: Vec::new(),
                n_duplicates_merged: 0,
                leaf_min: self.leaf_min,
            },
            self.transform.clone(),
        ))
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let payload = serde_json::to_vec(self).map_err(|e| Error::ModelFile(e.to_string()))?;
        out.write_all(MAGIC)?;
        out.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        out.write_all(&schema_hash())?;
        out.write_u64::<LittleEndian>(payload.len() as u64)?;
        out.write_all(&payload)?;
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::ModelFile("not a model file (bad magic)".into()));
        }
        let version = input.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFile(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let mut hash = [0u8; 32];
        input.read_exact(&mut hash)?;
        if hash != schema_hash() {
            return Err(Error::ModelFile(
                "schema hash mismatch: file written by an incompatible build".into(),
            ));
        }
        let len = input.read_u64::<LittleEndian>()? as usize;
        let mut payload = vec![0u8; len];
        input.read_exact(&mut payload)?;
        serde_json::from_slice(&payload).map_err(|e| Error::ModelFile(e.to_string()))
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impute::{
        generate_synthetic_medical, impute_with_method, ImputeConfig, ImputeMethod, ThetaSpec,
    };

    #[test]
    fn roundtrip_reproduces_predictions_exactly() {
        let ds = generate_synthetic_medical(300, 9, 0.05).unwrap();
        let cfg = ImputeConfig {
            theta: ThetaSpec::Fixed(CovarianceModel::new(1.5, 1.0, 1.0).unwrap()),
            tol: 1e-8,
            ..Default::default()
        };
        let predictors: Vec<String> =
            ["los", "npr", "ndx", "age"].iter().map(|s| s.to_string()).collect();
        let imputer = KrigingImputer::fit(&ds, "totchg", &predictors, &cfg).unwrap();

        let target_rows: Vec<usize> = (0..ds.n_rows())
            .filter(|&r| ds.get(r, 4).is_none())
            .collect();
        let direct = imputer.predict_rows(&ds, &target_rows).unwrap();

        let saved = SavedModel::from_imputer(&imputer, &FittedTransform::identity());
        let mut buf = Vec::new();
        saved.write(&mut buf).unwrap();
        let loaded = SavedModel::read(buf.as_slice()).unwrap();
        let (imputer2, _) = loaded.rebuild().unwrap();
        let reloaded = imputer2.predict_rows(&ds, &target_rows).unwrap();

        assert_eq!(direct.len(), reloaded.len());
        for (a, b) in direct.iter().zip(&reloaded) {
            assert!(
                (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                "prediction drift {a} vs {b}"
            );
        }

        // consistency with the one-shot pipeline
        let out = impute_with_method(&ds, "totchg", &predictors, ImputeMethod::Kriging, &cfg, None)
            .unwrap();
        for ((r1, v1), (r2, v2)) in out.values.iter().zip(target_rows.iter().zip(&direct)) {
            assert_eq!(r1, r2);
            assert_eq!(v1.to_bits(), v2.to_bits());
        }
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let ds = generate_synthetic_medical(120, 10, 0.0).unwrap();
        let cfg = ImputeConfig {
            theta: ThetaSpec::Fixed(CovarianceModel::new(0.5, 1.0, 1.0).unwrap()),
            degree: 0,
            tol: 1e-6,
            ..Default::default()
        };
        let predictors: Vec<String> = ["los", "npr"].iter().map(|s| s.to_string()).collect();
        let imputer = KrigingImputer::fit(&ds, "totchg", &predictors, &cfg).unwrap();
        let saved = SavedModel::from_imputer(&imputer, &FittedTransform::identity());
        let mut buf = Vec::new();
        saved.write(&mut buf).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            SavedModel::read(bad_magic.as_slice()),
            Err(Error::ModelFile(_))
        ));

        let mut bad_hash = buf.clone();
        bad_hash[9] ^= 0xff;
        assert!(matches!(
            SavedModel::read(bad_hash.as_slice()),
            Err(Error::ModelFile(_))
        ));
    }
}

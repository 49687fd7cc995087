//! Audit configuration and provenance.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numkit::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceStrategy {
    /// nearest training instances under the cosine kernel
    Knn,
    /// random subsample of training instances sharing the predicted class
    Class,
}

/// Everything that determines an audit run (and hence its digest).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditConfig {
    pub seed: u64,
    pub alpha: f64,
    pub n_grid: Vec<usize>,
    pub explained_class: i32,
    pub k_features: usize,
    pub ridge: f64,
    pub proximity_kernel: KernelSpec,
    pub data_shift_kernel: KernelSpec,
    pub label_shift_kernel: KernelSpec,
    pub reference: ReferenceStrategy,
    /// compare only the explained-class scalar in the label-shift test
    pub label_shift_scalar: bool,
    /// diagnostic: replace perturbations with a disjoint reference draw
    pub null_mode: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            seed: 42,
            alpha: 0.05,
            n_grid: vec![2, 5, 10, 20, 50, 100, 200, 500],
            explained_class: 1,
            k_features: 6,
            ridge: 1.0,
            proximity_kernel: KernelSpec::cosine(),
            data_shift_kernel: KernelSpec::cosine(),
            label_shift_kernel: KernelSpec::rbf_median_heuristic(),
            reference: ReferenceStrategy::Knn,
            label_shift_scalar: false,
            null_mode: false,
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.n_grid.is_empty() {
            return Err(Error::Config("n grid must not be empty".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n grid must be strictly ascending".into()));
        }
        if self.n_grid[0] == 0 {
            return Err(Error::Config("n grid entries must be positive".into()));
        }
        if self.k_features == 0 {
            return Err(Error::Config("k_features must be at least 1".into()));
        }
        if self.ridge < 0.0 {
            return Err(Error::Config(format!(
                "ridge must be nonnegative, got {}",
                self.ridge
            )));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Identifies a run: embedded in every output file so artifacts are
/// traceable to their inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact_version: String,
    pub seed: u64,
    pub config_digest: String,
    pub train_digest: String,
    pub test_digest: String,
    pub scorer: String,
}

impl Provenance {
    pub fn new(config: &AuditConfig, train_text: &str, test_text: &str, scorer: String) -> Self {
        Provenance {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config_digest: config.digest(),
            train_digest: sha256_hex(train_text.as_bytes()),
            test_digest: sha256_hex(test_text.as_bytes()),
            scorer,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        AuditConfig::default().validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_fields() {
        let bad = [
            AuditConfig {
                alpha: 1.0,
                ..AuditConfig::default()
            },
            AuditConfig {
                n_grid: vec![5, 5],
                ..AuditConfig::default()
            },
            AuditConfig {
                n_grid: vec![],
                ..AuditConfig::default()
            },
            AuditConfig {
                k_features: 0,
                ..AuditConfig::default()
            },
        ];
        for config in bad {
            assert!(config.validate().is_err());
        }
    }

    #[test]
    fn digest_changes_with_config() {
        let a = AuditConfig::default();
        let mut b = a.clone();
        b.seed = 43;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), AuditConfig::default().digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}

//! Binary checkpoint files (`PSFC`).
//!
//! Layout: magic, `u32` version, `u64` metadata length, JSON metadata, then
//! the current variational state and, if one exists, the best finished state.
//! States are stored as raw little-endian floats so resumption is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::binary::{Reader, Writer, FORMAT_VERSION};
use crate::engine::{Checkpoint, ElboTerms, FitOptions, FitReport, RestartSummary};
use crate::model::{SubjectMeans, VariationalState};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PSFC";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StateLayout {
    voxels: usize,
    latent: usize,
    timepoints: Vec<usize>,
    means: bool,
}

impl StateLayout {
    fn of(s: &VariationalState) -> Self {
        StateLayout {
            voxels: s.voxels(),
            latent: s.latent_dim(),
            timepoints: s.mu_s.iter().map(|m| m.cols()).collect(),
            means: s.means.is_some(),
        }
    }

    fn float_count(&self) -> u64 {
        let (v, d, b) = (self.voxels as u64, self.latent as u64, self.timepoints.len() as u64);
        let t: u64 = self.timepoints.iter().map(|&t| t as u64).sum();
        let means = if self.means { 2 * v * b } else { 0 };
        v * d + v * d * d + d * t + b * d * d + means + 1 + v * d + 1 + d + b + v * b
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    /// TOML so that non-finite tolerances survive.
    options_toml: String,
    restart: usize,
    iteration: usize,
    initial_elbo: f64,
    trace: Vec<f64>,
    trace_iterations: Vec<usize>,
    violations: usize,
    last_terms: ElboTerms,
    completed: Vec<RestartSummary>,
    best_report: Option<FitReport>,
    elapsed_seconds: f64,
    layout: StateLayout,
}

fn write_state(w: &mut Writer, s: &VariationalState) {
    w.f64s(s.mu_a.as_slice());
    for m in &s.sigma_a {
        w.f64s(m.as_slice());
    }
    for m in s.mu_s.iter().chain(&s.sigma_s) {
        w.f64s(m.as_slice());
    }
    if let Some(means) = &s.means {
        w.f64s(means.mean.as_slice());
        w.f64s(means.variance.as_slice());
    }
    w.f64(s.alpha_shape);
    w.f64s(s.alpha_rate.as_slice());
    w.f64(s.gamma_shape);
    w.f64s(&s.gamma_rate);
    w.f64s(&s.tau_shape);
    w.f64s(s.tau_rate.as_slice());
}

fn read_state(r: &mut Reader, l: &StateLayout) -> Result<VariationalState> {
    r.require(l.float_count().saturating_mul(8))?;
    let (v, d, b) = (l.voxels, l.latent, l.timepoints.len());
    let mu_a = r.matrix(v, d)?;
    let sigma_a = (0..v).map(|_| r.matrix(d, d)).collect::<Result<_>>()?;
    let mu_s = l.timepoints.iter().map(|&t| r.matrix(d, t)).collect::<Result<_>>()?;
    let sigma_s = (0..b).map(|_| r.matrix(d, d)).collect::<Result<_>>()?;
    let means = if l.means {
        Some(SubjectMeans {
            mean: r.matrix(v, b)?,
            variance: r.matrix(v, b)?,
        })
    } else {
        None
    };
    Ok(VariationalState {
        mu_a,
        sigma_a,
        mu_s,
        sigma_s,
        means,
        alpha_shape: r.f64()?,
        alpha_rate: r.matrix(v, d)?,
        gamma_shape: r.f64()?,
        gamma_rate: r.f64s(d)?,
        tau_shape: r.f64s(b)?,
        tau_rate: r.matrix(v, b)?,
    })
}

pub fn encode_checkpoint(cp: &Checkpoint) -> Vec<u8> {
    let meta = Meta {
        options_toml: toml::to_string(&cp.options).expect("options serialize to TOML"),
        restart: cp.restart,
        iteration: cp.iteration,
        initial_elbo: cp.initial_elbo,
        trace: cp.trace.clone(),
        trace_iterations: cp.trace_iterations.clone(),
        violations: cp.violations,
        last_terms: cp.last_terms.clone(),
        completed: cp.completed.clone(),
        best_report: cp.best.as_ref().map(|(_, r)| r.clone()),
        elapsed_seconds: cp.elapsed_seconds,
        layout: StateLayout::of(&cp.state),
    };
    let json = serde_json::to_vec(&meta).expect("checkpoint metadata serializes");
    let mut w = Writer::default();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(FORMAT_VERSION);
    w.u64(json.len() as u64);
    w.bytes(&json);
    write_state(&mut w, &cp.state);
    if let Some((best, _)) = &cp.best {
        write_state(&mut w, best);
    }
    w.buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    r.version()?;
    let len = r.usize()?;
    let meta: Meta = serde_json::from_slice(r.take(len)?)
        .map_err(|e| Error::Config(format!("checkpoint metadata: {e}")))?;
    let options: FitOptions = toml::from_str(&meta.options_toml)
        .map_err(|e| Error::Config(format!("checkpoint options: {e}")))?;
    let state = read_state(&mut r, &meta.layout)?;
    let best = match meta.best_report {
        Some(report) => Some((read_state(&mut r, &meta.layout)?, report)),
        None => None,
    };
    r.finish()?;
    Ok(Checkpoint {
        options,
        restart: meta.restart,
        iteration: meta.iteration,
        initial_elbo: meta.initial_elbo,
        trace: meta.trace,
        trace_iterations: meta.trace_iterations,
        violations: meta.violations,
        state,
        last_terms: meta.last_terms,
        completed: meta.completed,
        best,
        elapsed_seconds: meta.elapsed_seconds,
    })
}

/// Writes via a temporary file and a rename, so an interrupted write never
/// leaves a torn checkpoint behind.
pub fn write_checkpoint(cp: &Checkpoint, path: &Path) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, encode_checkpoint(cp))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{fit_resumable, FitControl, FitOutcome};
    use crate::model::{generate_synthetic, SyntheticConfig};
    use crate::numerics::SeededRng;

    fn halted(model_mean: bool, restarts: usize, halt: usize) -> Checkpoint {
        let cfg = SyntheticConfig {
            voxels: 30,
            timepoints: 6,
            subjects: 2,
            ..SyntheticConfig::default()
        };
        let (ds, _) = generate_synthetic(&mut SeededRng::new(1), &cfg).unwrap();
        let opts = FitOptions {
            latent_dim: 3,
            max_iters: 5,
            restarts,
            model_mean,
            rel_tol: f64::INFINITY,
            ..FitOptions::default()
        };
        let control = FitControl {
            halt_after: Some(halt),
            ..FitControl::default()
        };
        match fit_resumable(&ds, &opts, control).unwrap() {
            FitOutcome::Halted(cp) => *cp,
            FitOutcome::Completed { .. } => panic!("expected a halt"),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        for (mean, restarts, halt) in [(false, 1, 0), (true, 3, 2)] {
            let cp = halted(mean, restarts, halt);
            assert_eq!(cp.best.is_some(), restarts > 1);
            let back = decode_checkpoint(&encode_checkpoint(&cp)).unwrap();
            assert_eq!(back, cp);
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = encode_checkpoint(&halted(false, 1, 0));
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(Error::TruncatedFile { .. })
        ));
        assert!(matches!(decode_checkpoint(b"PSFA...."), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn atomic_file_write() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.psfc");
        let cp = halted(false, 1, 0);
        write_checkpoint(&cp, &p).unwrap();
        assert_eq!(read_checkpoint(&p).unwrap(), cp);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

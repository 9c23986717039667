//! Synthetic two-view corpora with shared latent cluster structure.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{save_bin, DataMatrix};
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_pairs: usize,
    pub d_target: usize,
    pub d_source: usize,
    pub latent_dim: usize,
    pub clusters: usize,
    /// Spread of the cluster centres in latent space.
    pub center_scale: f64,
    /// Within-cluster latent standard deviation.
    pub cluster_std: f64,
    /// Standard deviation of the additive noise on the target view.
    pub noise: f64,
    /// Standard deviation of the additive noise on the source view.
    pub source_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_pairs: 1100,
            d_target: 64,
            d_source: 64,
            latent_dim: 16,
            clusters: 5,
            center_scale: 2.0,
            cluster_std: 1.0,
            noise: 0.5,
            source_noise: 0.5,
            seed: 0,
        }
    }
}

/// A generated parallel corpus: row `i` of both views shares latent `z_i`.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub target: DataMatrix,
    pub source: DataMatrix,
    pub labels: Vec<usize>,
}

/// Draws `z_i` around one of `clusters` Gaussian centres and emits
/// `target = z A_T + ε_T`, `source = z A_S + ε_S` with seeded Gaussian maps.
pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    ensure!(
        cfg.n_pairs >= 1 && cfg.d_target >= 1 && cfg.d_source >= 1 && cfg.latent_dim >= 1 && cfg.clusters >= 1,
        InvalidArgument,
        "synthetic sizes must be positive"
    );
    ensure!(
        [cfg.center_scale, cfg.cluster_std, cfg.noise, cfg.source_noise]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0),
        InvalidArgument,
        "synthetic scales must be finite and non-negative"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let l = cfg.latent_dim;
    let centers = DMatrix::from_fn(cfg.clusters, l, |_, _| cfg.center_scale * normal());
    let map_scale = 1.0 / (l as f64).sqrt();
    let a_t = DMatrix::from_fn(l, cfg.d_target, |_, _| map_scale * normal());
    let a_s = DMatrix::from_fn(l, cfg.d_source, |_, _| map_scale * normal());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let labels: Vec<usize> = (0..cfg.n_pairs).map(|_| rng.gen_range(0..cfg.clusters)).collect();
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let z = DMatrix::from_fn(cfg.n_pairs, l, |i, j| centers[(labels[i], j)] + cfg.cluster_std * normal());
    let mut target = &z * a_t;
    let mut source = &z * a_s;
    target.iter_mut().for_each(|v| *v += cfg.noise * normal());
    source.iter_mut().for_each(|v| *v += cfg.source_noise * normal());
    Ok(SynthDataset {
        target: DataMatrix::new(target)?,
        source: DataMatrix::new(source)?,
        labels,
    })
}

impl SynthConfig {
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n_pairs={}", self.n_pairs);
        let _ = writeln!(s, "d_target={}", self.d_target);
        let _ = writeln!(s, "d_source={}", self.d_source);
        let _ = writeln!(s, "latent_dim={}", self.latent_dim);
        let _ = writeln!(s, "clusters={}", self.clusters);
        let _ = writeln!(s, "center_scale={}", self.center_scale);
        let _ = writeln!(s, "cluster_std={}", self.cluster_std);
        let _ = writeln!(s, "noise={}", self.noise);
        let _ = writeln!(s, "source_noise={}", self.source_noise);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "target=target.bin");
        let _ = writeln!(s, "source=source.bin");
        let _ = writeln!(s, "labels=labels.txt");
        s
    }
}

/// Writes `target.bin`, `source.bin`, `labels.txt` and `manifest.txt` into
/// `out_dir`.
pub fn write_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthDataset> {
    let data = generate(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    save_bin(&data.target, &out_dir.join("target.bin"))?;
    save_bin(&data.source, &out_dir.join("source.bin"))?;
    let labels: String = data.labels.iter().map(|l| format!("{l}\n")).collect();
    let path = out_dir.join("labels.txt");
    fs::write(&path, labels).map_err(|e| Error::io(&path, e))?;
    let path = out_dir.join("manifest.txt");
    fs::write(&path, cfg.manifest()).map_err(|e| Error::io(&path, e))?;
    Ok(data)
}

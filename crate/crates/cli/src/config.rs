use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sda_core::covariance::{Kernel, PhiGrid};
use sda_core::latent::LatentChainConfig;
use sda_core::mcml::McmlConfig;
use sda_core::quadrature::{QuadratureMode, Weighting};
use sha2::{Digest, Sha256};

/// Settings for `fit` and `predict`, read from a `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub partition: PathBuf,
    pub counts: PathBuf,
    pub covariates: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub population_density: bool,
    pub weighting: Weighting,
    pub quadrature_mode: QuadratureMode,
    pub gamma: f64,
    pub delta: Option<f64>,
    pub phi_grid: String,
    pub kappa: f64,
    pub mcml: McmlConfig,
    pub prediction_spacing: f64,
    pub threshold: Option<f64>,
    pub cache: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            partition: PathBuf::new(),
            counts: PathBuf::new(),
            covariates: None,
            population: None,
            population_density: false,
            weighting: Weighting::Population,
            quadrature_mode: QuadratureMode::NonAdaptive,
            gamma: 0.55,
            delta: None,
            phi_grid: "50:2000:100".into(),
            kappa: 0.5,
            mcml: McmlConfig::default(),
            prediction_spacing: 300.0,
            threshold: None,
            cache: None,
            out: PathBuf::from("out"),
            seed: 1,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value", i + 1))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| anyhow!("{key}: cannot parse '{v}'"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = RunConfig::default();
        for (k, v) in parse_kv(&text)? {
            cfg.set(&k, &v, base)?;
        }
        Ok(cfg)
    }

    /// Sets one key; relative paths resolve against `base`.
    pub fn set(&mut self, key: &str, v: &str, base: &Path) -> Result<()> {
        let path = |v: &str| base.join(v);
        let chain = &mut self.mcml.chain;
        match key {
            "partition" => self.partition = path(v),
            "counts" => self.counts = path(v),
            "covariates" => self.covariates = Some(path(v)),
            "population" => self.population = Some(path(v)),
            "population_units" => {
                self.population_density = match v {
                    "count" => false,
                    "density" => true,
                    _ => bail!("population_units: expected count or density, got '{v}'"),
                }
            }
            "weighting" => self.weighting = v.parse()?,
            "quadrature_mode" => {
                self.quadrature_mode = match v {
                    "adaptive" => QuadratureMode::Adaptive,
                    "nonadaptive" | "non-adaptive" => QuadratureMode::NonAdaptive,
                    _ => bail!("quadrature_mode: unknown '{v}'"),
                }
            }
            "gamma" => self.gamma = num(key, v)?,
            "delta" => self.delta = Some(num(key, v)?),
            "phi_grid" => self.phi_grid = v.to_string(),
            "kappa" => self.kappa = num(key, v)?,
            "n_iter" => chain.n_iter = num(key, v)?,
            "burn_in" => chain.burn_in = num(key, v)?,
            "thin" => chain.thin = num(key, v)?,
            "step_size" => chain.step_size = Some(num(key, v)?),
            "outer_iters" => self.mcml.outer_iters = num(key, v)?,
            "param_tol" => self.mcml.param_tol = num(key, v)?,
            "log_sigma2_min" => self.mcml.log_sigma2_bounds.0 = num(key, v)?,
            "log_sigma2_max" => self.mcml.log_sigma2_bounds.1 = num(key, v)?,
            "prediction_spacing" => self.prediction_spacing = num(key, v)?,
            "threshold" => self.threshold = Some(num(key, v)?),
            "cache" => self.cache = Some(path(v)),
            "out" => self.out = path(v),
            "seed" => self.seed = num(key, v)?,
            _ => bail!("unknown config key '{key}'"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.partition.as_os_str().is_empty() {
            bail!("config: 'partition' is required");
        }
        if self.counts.as_os_str().is_empty() {
            bail!("config: 'counts' is required");
        }
        let inputs = [Some(&self.partition), Some(&self.counts), self.covariates.as_ref(), self.population.as_ref()];
        for path in inputs.into_iter().flatten() {
            if !path.is_file() {
                bail!("input file not found: {}", path.display());
            }
        }
        if self.weighting == Weighting::Population && self.population.is_none() {
            bail!("config: weighting = population needs a 'population' raster");
        }
        self.phi_grid()?;
        self.kernel()?;
        self.mcml.validate()?;
        Ok(())
    }

    pub fn phi_grid(&self) -> Result<PhiGrid> {
        Ok(self.phi_grid.parse()?)
    }

    pub fn kernel(&self) -> Result<Kernel> {
        Ok(Kernel::matern(self.kappa)?)
    }

    fn chain(&self) -> &LatentChainConfig {
        &self.mcml.chain
    }

    /// Canonical text of every setting that influences numerical output.
    pub fn canonical(&self) -> String {
        let mut m = BTreeMap::new();
        let p = |p: &Path| p.display().to_string();
        m.insert("partition", p(&self.partition));
        m.insert("counts", p(&self.counts));
        m.insert("covariates", self.covariates.as_deref().map(p).unwrap_or_default());
        m.insert("population", self.population.as_deref().map(p).unwrap_or_default());
        m.insert("population_units", if self.population_density { "density" } else { "count" }.into());
        m.insert("weighting", format!("{:?}", self.weighting).to_lowercase());
        m.insert("quadrature_mode", format!("{:?}", self.quadrature_mode).to_lowercase());
        m.insert("gamma", self.gamma.to_string());
        m.insert("delta", self.delta.map(|d| d.to_string()).unwrap_or_default());
        m.insert("phi_grid", self.phi_grid.clone());
        m.insert("kappa", self.kappa.to_string());
        m.insert("n_iter", self.chain().n_iter.to_string());
        m.insert("burn_in", self.chain().burn_in.to_string());
        m.insert("thin", self.chain().thin.to_string());
        m.insert("step_size", self.chain().step_size.map(|h| h.to_string()).unwrap_or_default());
        m.insert("outer_iters", self.mcml.outer_iters.to_string());
        m.insert("param_tol", self.mcml.param_tol.to_string());
        m.insert("log_sigma2_min", self.mcml.log_sigma2_bounds.0.to_string());
        m.insert("log_sigma2_max", self.mcml.log_sigma2_bounds.1.to_string());
        m.insert("prediction_spacing", self.prediction_spacing.to_string());
        m.insert("threshold", self.threshold.map(|t| t.to_string()).unwrap_or_default());
        m.insert("seed", self.seed.to_string());
        m.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, names: &[&str]) {
        for n in names {
            std::fs::write(dir.join(n), "").unwrap();
        }
    }

    #[test]
    fn parses_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), &["a.geojson", "c.csv"]);
        let mut cfg = RunConfig::default();
        for (k, v) in parse_kv("partition = a.geojson\ncounts=c.csv # counts\nweighting = uniform\nn_iter = 20000\n").unwrap() {
            cfg.set(&k, &v, dir.path()).unwrap();
        }
        assert_eq!(cfg.partition, dir.path().join("a.geojson"));
        assert_eq!(cfg.weighting, Weighting::Uniform);
        assert_eq!(cfg.mcml.chain.n_iter, 20000);
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_names_missing_inputs() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), &["a", "b"]);
        let mut cfg = RunConfig::default();
        cfg.set("partition", "a", dir.path()).unwrap();
        cfg.set("counts", "b", dir.path()).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("population"));
        cfg.set("weighting", "uniform", dir.path()).unwrap();
        cfg.validate().unwrap();
        cfg.set("covariates", "gone.csv", dir.path()).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("gone.csv"));
    }

    #[test]
    fn hash_tracks_settings() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert!(RunConfig::default().set("colour", "red", Path::new(".")).is_err());
    }
}

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sda_core::covariance::{build_cache, cache_key, read_cache, write_cache, CacheOptions, CovarianceCache, PhiGrid};
use sda_core::latent::run_mala;
use sda_core::mcml::{fit, FitResult};
use sda_core::predict::{predict_regions, predict_surface, PredictionGrid, SurfacePredictor};
use sda_core::quadrature::{build_quadrature, write_quadrature_csv, QuadratureConfig, QuadratureSet, UniformWeight, WeightSurface, Weighting};
use sda_core::seed;
use sda_core::sim::{write_metrics_csv, MetricReport, SimScenario, Study};
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};
use crate::inputs::{self, Inputs};

/// Files written by a command and any non-fatal warnings.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub config_hash: String,
    pub seed: u64,
    pub covariates: Vec<String>,
    pub regions: Vec<String>,
    pub kappa: f64,
    pub weighting: Weighting,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub config_hash: String,
    pub seed: u64,
    pub scenario: SimScenario,
    pub region: MetricReport,
    pub continuous: MetricReport,
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    config: &'a str,
    files: Vec<ManifestEntry>,
}

struct OutDir {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl OutDir {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.write(name, |w| writeln!(w, "{text}"))
    }

    /// Writes `name` listing every file so far with its SHA-256.
    fn manifest(&mut self, name: &str, command: &str, config_hash: &str, seed: u64, config: &str) -> Result<()> {
        let files = self
            .files
            .iter()
            .map(|p| -> Result<ManifestEntry> {
                Ok(ManifestEntry {
                    file: p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                    sha256: hex(&Sha256::digest(fs::read(p)?)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = Manifest {
            command,
            config_hash,
            seed,
            config,
            files,
        };
        self.write_json(name, &m)
    }
}

fn quadrature_config(cfg: &RunConfig, inputs: &Inputs) -> QuadratureConfig {
    let base = QuadratureConfig::for_partition(&inputs.partition);
    QuadratureConfig {
        delta: cfg.delta.unwrap_or(base.delta),
        gamma: cfg.gamma,
        mode: cfg.quadrature_mode,
        ..base
    }
}

fn quadrature(cfg: &RunConfig, inputs: &Inputs) -> Result<Vec<QuadratureSet>> {
    let surface: &dyn WeightSurface = match (cfg.weighting, &inputs.population) {
        (Weighting::Population, Some(r)) => r,
        (Weighting::Population, None) => bail!("weighting = population needs a population raster"),
        (Weighting::Uniform, _) => &UniformWeight,
    };
    let qc = quadrature_config(cfg, inputs);
    qc.validate()?;
    Ok(build_quadrature(
        &inputs.partition,
        surface,
        &qc,
        seed::derive(cfg.seed, "cli", "quadrature"),
    )?)
}

/// Builds the covariance cache, or reuses the on-disk cache when its key matches.
fn covariance(cfg: &RunConfig, quads: &[QuadratureSet], grid: &PhiGrid) -> Result<CovarianceCache> {
    let opts = CacheOptions {
        kernel: cfg.kernel()?,
        ..Default::default()
    };
    let Some(path) = &cfg.cache else {
        return Ok(build_cache(quads, grid, &opts)?);
    };
    let mut digest = Sha256::new();
    for p in [Some(&cfg.partition), cfg.population.as_ref()].into_iter().flatten() {
        digest.update(fs::read(p).with_context(|| format!("reading {}", p.display()))?);
    }
    let extra = format!(
        "{:?}|{:?}|{}|{:?}|{}|{}",
        cfg.weighting, cfg.quadrature_mode, cfg.gamma, cfg.delta, cfg.kappa, cfg.population_density
    );
    let key = cache_key(&digest.finalize(), cfg.seed, grid, extra.as_bytes());
    if let Ok(f) = File::open(path) {
        match read_cache(std::io::BufReader::new(f), &key) {
            Ok(c) => {
                log::info!("reusing covariance cache {}", path.display());
                return Ok(c);
            }
            Err(e) => log::info!("rebuilding covariance cache {}: {e}", path.display()),
        }
    }
    let cache = build_cache(quads, grid, &opts)?;
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_cache(BufWriter::new(f), &cache, &key).with_context(|| format!("writing {}", path.display()))?;
    Ok(cache)
}

/// Quadrature, covariance cache and MCML; writes `fit.json`, `profile.csv`,
/// `trace.csv`, `quadrature.csv` and `manifest_fit.json`.
pub fn cmd_fit(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let inputs = inputs::load(cfg)?;
    let quads = quadrature(cfg, &inputs)?;
    let grid = cfg.phi_grid()?;
    let cache = covariance(cfg, &quads, &grid)?;
    let result = fit(&inputs.data, &cache, &cfg.mcml, seed::derive(cfg.seed, "cli", "fit"))?;

    let est = &result.estimates;
    let draws = run_mala(
        &inputs.data,
        est,
        cache.entry(est.phi)?,
        &cfg.mcml.chain,
        seed::derive(cfg.seed, "cli", "predict-chain"),
    )?;

    let hash = cfg.hash();
    let output = FitOutput {
        config_hash: hash.clone(),
        seed: cfg.seed,
        covariates: inputs.covariate_names.clone(),
        regions: inputs.region_ids().iter().map(|s| s.to_string()).collect(),
        kappa: cfg.kappa,
        weighting: cfg.weighting,
        fit: result,
    };
    let mut out = OutDir::new(&cfg.out)?;
    out.write_json("fit.json", &output)?;
    let p = inputs.data.p();
    out.write("profile.csv", |w| {
        write!(w, "phi,loglik,sigma2")?;
        for k in 0..p {
            write!(w, ",beta_{k}")?;
        }
        writeln!(w, ",ess")?;
        for q in &output.fit.phi_profile {
            write!(w, "{},{},{}", q.phi, q.loglik, q.sigma2)?;
            for b in &q.beta {
                write!(w, ",{b}")?;
            }
            writeln!(w, ",{}", q.ess)?;
        }
        Ok(())
    })?;
    out.write("trace.csv", |w| draws.write_trace(w))?;
    out.write("quadrature.csv", |w| write_quadrature_csv(w, &quads))?;
    out.manifest("manifest_fit.json", "fit", &hash, cfg.seed, &cfg.canonical())?;

    let mut warnings = output.fit.warnings.clone();
    if !output.fit.converged {
        warnings.push("fit did not converge".into());
    }
    if let Some(w) = draws.warning {
        warnings.push(format!("prediction chain: {w}"));
    }
    Ok(Outcome {
        files: out.files,
        warnings,
    })
}

pub fn read_fit(path: &Path) -> Result<FitOutput> {
    let text = fs::read_to_string(path).map_err(|e| sda_core::SdaError::io(path, e))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Surface and region predictions at the fitted parameters.
pub fn cmd_predict(cfg: &RunConfig, fit_path: &Path) -> Result<Outcome> {
    cfg.validate()?;
    let fitted = read_fit(fit_path)?;
    let inputs = inputs::load(cfg)?;
    let ids: Vec<&str> = inputs.region_ids();
    if fitted.regions.iter().map(String::as_str).ne(ids.iter().copied()) {
        bail!("{} was fitted on a different partition", fit_path.display());
    }
    if fitted.covariates != inputs.covariate_names {
        bail!("{} was fitted with covariates {:?}", fit_path.display(), fitted.covariates);
    }
    let est = &fitted.fit.estimates;
    let quads = quadrature(cfg, &inputs)?;
    let cache = build_cache(
        &quads,
        &PhiGrid::new(vec![est.phi])?,
        &CacheOptions {
            kernel: cfg.kernel()?,
            ..Default::default()
        },
    )?;
    let entry = cache.entry_at(0);
    let draws = run_mala(
        &inputs.data,
        est,
        entry,
        &cfg.mcml.chain,
        seed::derive(cfg.seed, "cli", "predict-chain"),
    )?;
    let regions = predict_regions(&draws, &inputs.data)?;
    let predictor = SurfacePredictor::new(&draws, est, &inputs.data, entry, &quads, cache.kernel())?;
    let mut surface = PredictionGrid::over_partition(&inputs.partition, cfg.prediction_spacing)?;
    if let Some(t) = cfg.threshold {
        surface = surface.with_threshold(t);
    }
    predict_surface(&predictor, &mut surface, seed::derive(cfg.seed, "cli", "surface"))?;

    let mut out = OutDir::new(&cfg.out)?;
    let (mut mean, mut sd, mut exc) = (Vec::new(), Vec::new(), Vec::new());
    surface.write_ascii(&mut mean, &mut sd, cfg.threshold.map(|_| &mut exc))?;
    out.write("surface_mean.asc", |w| w.write_all(&mean))?;
    out.write("surface_sd.asc", |w| w.write_all(&sd))?;
    if cfg.threshold.is_some() {
        out.write("surface_exceedance.asc", |w| w.write_all(&exc))?;
    }
    out.write("surface.csv", |w| surface.write_csv(w))?;
    out.write("regions.csv", |w| regions.write_csv(w, &ids))?;
    let hash = cfg.hash();
    out.manifest("manifest_predict.json", "predict", &hash, cfg.seed, &cfg.canonical())?;
    Ok(Outcome {
        files: out.files,
        warnings: draws.warning.into_iter().collect(),
    })
}

/// Runs a simulation study; writes `replicates.csv`, `counts.csv`, `metrics.csv`,
/// `metrics.json` and `manifest_simulate.json`.
pub fn cmd_simulate(scenario: &SimScenario, out_dir: &Path) -> Result<Outcome> {
    scenario.validate()?;
    let study = Study::setup(scenario)?;
    let ids: Vec<String> = study.partition.regions().iter().map(|r| r.id().to_string()).collect();
    let mut counts = Vec::new();
    let report = study.run_with(|o| counts.push((o.index, o.counts.counts.clone())))?;

    let text = scenario.to_kv();
    let hash = hex(&Sha256::digest(text.as_bytes()));
    let mut out = OutDir::new(out_dir)?;
    out.write("replicates.csv", |w| {
        let p = report.replicates.first().map_or(1, |r| r.beta.len());
        write!(w, "replicate,seed,total_count,dropped")?;
        for k in 0..p {
            write!(w, ",beta_{k}")?;
        }
        writeln!(w, ",sigma2,phi,converged,region_cp,continuous_cp")?;
        for r in &report.replicates {
            write!(w, "{},{},{},{}", r.replicate, r.seed, r.total_count, r.dropped)?;
            for b in &r.beta {
                write!(w, ",{b}")?;
            }
            writeln!(w, ",{},{},{},{},{}", r.sigma2, r.phi, r.converged, r.region_cp, r.continuous_cp)?;
        }
        Ok(())
    })?;
    out.write("counts.csv", |w| {
        writeln!(w, "replicate,region_id,count")?;
        for (b, c) in &counts {
            for (id, k) in ids.iter().zip(c) {
                writeln!(w, "{b},{id},{k}")?;
            }
        }
        Ok(())
    })?;
    out.write("metrics.csv", |w| write_metrics_csv(w, &[report.region, report.continuous]))?;
    out.write_json(
        "metrics.json",
        &SimulationOutput {
            config_hash: hash.clone(),
            seed: scenario.seed,
            scenario: scenario.clone(),
            region: report.region,
            continuous: report.continuous,
        },
    )?;
    out.manifest("manifest_simulate.json", "simulate", &hash, scenario.seed, &text)?;
    let warnings = report
        .replicates
        .iter()
        .filter(|r| !r.converged)
        .map(|r| format!("replicate {}: fit did not converge", r.replicate))
        .collect();
    Ok(Outcome {
        files: out.files,
        warnings,
    })
}

/// Human-readable summary of whatever `fit.json` / `metrics.json` exist in `dir`.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let mut s = String::new();
    let fit_path = dir.join("fit.json");
    let metrics_path = dir.join("metrics.json");
    if fit_path.exists() {
        let f = read_fit(&fit_path)?;
        let e = &f.fit.estimates;
        s += &format!("fit (config {}, seed {})\n", &f.config_hash[..12], f.seed);
        let names: Vec<String> = std::iter::once("intercept".to_string()).chain(f.covariates.iter().cloned()).collect();
        for (k, (name, b)) in names.iter().zip(&e.beta).enumerate() {
            let se = f.fit.beta_cov[k][k].sqrt();
            s += &format!("  beta[{name}] = {b:.6} (se {se:.6})\n");
        }
        s += &format!("  sigma2 = {:.6}\n", e.sigma2);
        s += &format!("  phi = {} (95% CI {:.1} to {:.1})\n", e.phi, f.fit.phi_ci_95.0, f.fit.phi_ci_95.1);
        s += &format!(
            "  converged = {}, outer iterations = {}, N = {}, ESS = {:.1}\n",
            f.fit.converged, f.fit.outer_iterations, f.fit.monte_carlo_n, f.fit.ess
        );
        for w in &f.fit.warnings {
            s += &format!("  warning: {w}\n");
        }
    }
    if metrics_path.exists() {
        let text = fs::read_to_string(&metrics_path).map_err(|e| sda_core::SdaError::io(&metrics_path, e))?;
        let m: SimulationOutput = serde_json::from_str(&text).with_context(|| format!("parsing {}", metrics_path.display()))?;
        s += &format!(
            "simulation (config {}, seed {}, B = {})\n",
            &m.config_hash[..12],
            m.seed,
            m.scenario.replicates
        );
        s += "  target             bias      rmse      wpi       cp\n";
        for r in [m.region, m.continuous] {
            s += &format!(
                "  {:<17} {:>9.4} {:>9.4} {:>9.4} {:>7.3}\n",
                r.target.as_str(),
                r.bias,
                r.rmse,
                r.wpi,
                r.cp
            );
        }
    }
    if s.is_empty() {
        bail!("no fit.json or metrics.json in {}", dir.display());
    }
    Ok(s)
}

//! CSV/JSON ingestion and serialization plus the fit pipeline that the CLI
//! and foreign bindings drive.
//!
//! CSV is the single interchange format for datasets, posterior samples, and
//! maps; JSON carries summaries and configuration echoes. All numeric output
//! uses shortest round-trip formatting, so reruns with the same seed produce
//! byte-identical bodies (timestamps live only in the manifest).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisConfig, Bbox, BasisSystem};
use crate::data::{
    standardize_predictors, train_test_split, FitConfig, Hyperparameters, SpatialDataset,
    StandardizeRecord,
};
use crate::diagnostics::{build_report, ConvergenceReport};
use crate::error::{Error, Result};
use crate::inference::{
    coverage, mspe, predict, surface_summary, InferenceGrid, Predictions, SurfaceSummary,
};
use crate::sampler::{run_chains, ChainSamples, DesignBlocks};
use crate::tuning::{BestConfig, TuningTable};

/// Column roles for dataset ingestion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub u_col: String,
    pub v_col: String,
    pub y_col: String,
    /// Predictor columns by name; `None` takes every remaining column in
    /// header order.
    pub predictors: Option<Vec<String>>,
}

impl Default for DatasetSchema {
    fn default() -> Self {
        Self {
            u_col: "u".into(),
            v_col: "v".into(),
            y_col: "y".into(),
            predictors: None,
        }
    }
}

/// Read a dataset from a headered CSV. Rows containing any non-finite or
/// unparseable value are dropped; the count is returned alongside.
pub fn read_dataset(path: &Path, schema: &DatasetSchema) -> Result<(SpatialDataset, usize)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let ui = find(&schema.u_col)?;
    let vi = find(&schema.v_col)?;
    let yi = find(&schema.y_col)?;
    let predictor_names: Vec<String> = match &schema.predictors {
        Some(names) => {
            for n in names {
                find(n)?;
            }
            names.clone()
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != ui && *i != vi && *i != yi)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    if predictor_names.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let pred_idx: Vec<usize> = predictor_names
        .iter()
        .map(|n| find(n))
        .collect::<Result<_>>()?;

    let mut locations = Vec::new();
    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record?;
        let parse = |i: usize| -> Option<f64> {
            record.get(i).and_then(|s| s.trim().parse::<f64>().ok()).filter(|v| v.is_finite())
        };
        let u = parse(ui);
        let v = parse(vi);
        let yv = parse(yi);
        let xs: Option<Vec<f64>> = pred_idx.iter().map(|&i| parse(i)).collect();
        match (u, v, yv, xs) {
            (Some(u), Some(v), Some(yv), Some(xs)) => {
                locations.push((u, v));
                y.push(yv);
                rows.push(xs);
            }
            _ => dropped += 1,
        }
    }
    if locations.is_empty() {
        return Err(Error::NoUsableRows);
    }
    let n = locations.len();
    let m = predictor_names.len();
    let mut x = DMatrix::zeros(n, m);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    let ds = SpatialDataset::new(locations, DVector::from_vec(y), x, predictor_names)?;
    Ok((ds, dropped))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Write a dataset as u,v,y,predictors CSV.
pub fn write_dataset(dataset: &SpatialDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["u".to_string(), "v".to_string(), "y".to_string()];
    header.extend(dataset.predictor_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..dataset.n() {
        let mut row = vec![
            fmt(dataset.locations[i].0),
            fmt(dataset.locations[i].1),
            fmt(dataset.y[i]),
        ];
        for j in 0..dataset.m() {
            row.push(fmt(dataset.x[(i, j)]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Write true coefficient surfaces evaluated at the data locations.
pub fn write_truth(
    locations: &[(f64, f64)],
    truth: &DMatrix<f64>,
    names: &[String],
    path: &Path,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["u".to_string(), "v".to_string()];
    header.extend(names.iter().map(|n| format!("beta_{n}")));
    w.write_record(&header)?;
    for (i, &(u, v)) in locations.iter().enumerate() {
        let mut row = vec![fmt(u), fmt(v)];
        for j in 0..truth.ncols() {
            row.push(fmt(truth[(i, j)]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columnar posterior sample export: one row per retained draw.
pub fn write_samples(samples: &[ChainSamples], group_names: &[String], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let l = samples.first().map_or(0, |s| s.basis_len());
    let mut header = vec!["chain".to_string(), "iter".to_string(), "sigma2".to_string(), "lambda2".to_string()];
    for name in group_names {
        header.push(format!("tau2_{name}"));
    }
    for name in group_names {
        for i in 0..l {
            header.push(format!("alpha_{name}_{i}"));
        }
    }
    w.write_record(&header)?;
    for s in samples {
        for t in 0..s.n_kept() {
            let mut row = vec![
                s.chain_id.to_string(),
                t.to_string(),
                fmt(s.sigma2()[t]),
                fmt(s.lambda2()[t]),
            ];
            for v in s.tau2_at(t) {
                row.push(fmt(*v));
            }
            for j in 0..s.n_groups() {
                for v in s.alpha_at(t, j) {
                    row.push(fmt(*v));
                }
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuild chains and group names from a samples CSV.
pub fn read_samples(path: &Path) -> Result<(Vec<ChainSamples>, Vec<String>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let group_names: Vec<String> = headers
        .iter()
        .filter_map(|h| h.strip_prefix("tau2_").map(|s| s.to_string()))
        .collect();
    if group_names.is_empty() || headers.len() < 4 {
        return Err(Error::MissingColumn("tau2_*".into()));
    }
    let g = group_names.len();
    let l = headers.iter().filter(|h| h.starts_with("alpha_")).count() / g;

    struct Acc {
        sigma2: Vec<f64>,
        lambda2: Vec<f64>,
        tau2: Vec<f64>,
        alpha: Vec<f64>,
    }
    let mut chains: BTreeMap<usize, Acc> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let chain_id: usize = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MissingColumn("chain".into()))?;
        let acc = chains.entry(chain_id).or_insert_with(|| Acc {
            sigma2: Vec::new(),
            lambda2: Vec::new(),
            tau2: Vec::new(),
            alpha: Vec::new(),
        });
        let val = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::MissingColumn(headers[i].clone()))
        };
        acc.sigma2.push(val(2)?);
        acc.lambda2.push(val(3)?);
        for i in 0..g {
            acc.tau2.push(val(4 + i)?);
        }
        for i in 0..g * l {
            acc.alpha.push(val(4 + g + i)?);
        }
    }
    let mut out = Vec::with_capacity(chains.len());
    for (chain_id, acc) in chains {
        out.push(ChainSamples::from_parts(
            chain_id, 0, g, l, acc.sigma2, acc.lambda2, acc.tau2, acc.alpha,
        )?);
    }
    if out.is_empty() {
        return Err(Error::NoUsableRows);
    }
    Ok((out, group_names))
}

/// Long-format surface export: predictor,u,v,mean,lo,hi,significant.
pub fn write_surfaces(summaries: &[SurfaceSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["predictor", "u", "v", "mean", "lo", "hi", "significant"])?;
    for s in summaries {
        for (g, &(u, v)) in s.grid.iter().enumerate() {
            w.write_record(&[
                s.name.clone(),
                fmt(u),
                fmt(v),
                fmt(s.mean[g]),
                fmt(s.lo[g]),
                fmt(s.hi[g]),
                s.significant[g].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Boolean significance map export: predictor,u,v,significant.
pub fn write_significance(summaries: &[SurfaceSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["predictor", "u", "v", "significant"])?;
    for s in summaries {
        for (g, &(u, v)) in s.grid.iter().enumerate() {
            w.write_record(&[s.name.clone(), fmt(u), fmt(v), s.significant[g].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScpEntry {
    pub scp: f64,
    /// Reporting label only (SCP > 0.5); never used to zero out estimates.
    pub spatially_informative: bool,
}

/// SCP summary keyed by predictor name.
pub fn write_scp(summaries: &[SurfaceSummary], path: &Path) -> Result<()> {
    let map: BTreeMap<String, ScpEntry> = summaries
        .iter()
        .map(|s| {
            (
                s.name.clone(),
                ScpEntry { scp: s.scp, spatially_informative: s.scp > 0.5 },
            )
        })
        .collect();
    fs::write(path, serde_json::to_string_pretty(&map)?)?;
    Ok(())
}

/// Per-fold CV table: L,a_lambda,b_lambda,fold,mspe,mean_mspe.
pub fn write_cv_table(table: &TuningTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["L", "a_lambda", "b_lambda", "fold", "mspe", "mean_mspe"])?;
    for combo in &table.combos {
        for (f, &s) in combo.fold_mspe.iter().enumerate() {
            w.write_record(&[
                combo.l.to_string(),
                fmt(combo.a_lambda),
                fmt(combo.b_lambda),
                f.to_string(),
                fmt(s),
                fmt(combo.mean_mspe),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Held-out predictions: u,v,y,pred,lo,hi.
pub fn write_predictions(test: &SpatialDataset, pred: &Predictions, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["u", "v", "y", "pred", "lo", "hi"])?;
    for i in 0..test.n() {
        w.write_record(&[
            fmt(test.locations[i].0),
            fmt(test.locations[i].1),
            fmt(test.y[i]),
            fmt(pred.point[i]),
            fmt(pred.lo[i]),
            fmt(pred.hi[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// FNV-1a 64-bit content digest, hex encoded.
pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    Ok(format!("{hash:016x}"))
}

/// Per-run provenance: configuration echo, input digests, timings, and the
/// produced files. Timestamps and timings are confined here so every other
/// artifact stays byte-reproducible.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: Option<FitConfig>,
    pub grid_spec: Option<InferenceGrid>,
    pub test_fraction: Option<f64>,
    pub data_path: Option<String>,
    pub group_names: Vec<String>,
    pub input_digests: BTreeMap<String, String>,
    pub timings_secs: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub unix_time: u64,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config: None,
            grid_spec: None,
            test_fraction: None,
            data_path: None,
            group_names: Vec::new(),
            input_digests: BTreeMap::new(),
            timings_secs: BTreeMap::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            unix_time: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Verify the output directory is writable before any long computation.
pub fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".write_probe");
    {
        let mut f = fs::File::create(&probe)?;
        f.write_all(b"ok")?;
    }
    fs::remove_file(&probe)?;
    Ok(())
}

/// Everything the fit pipeline needs beyond the dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Total basis count (perfect square).
    pub l: usize,
    pub degree: usize,
    pub hyper: Hyperparameters,
    pub n_iter: usize,
    pub warmup: usize,
    pub n_chains: usize,
    pub ci_level: f64,
    pub seed: u64,
    pub include_intercept: bool,
    /// Held-out fraction; 0 disables the holdout and prediction outputs.
    pub test_fraction: f64,
    pub grid: InferenceGrid,
    pub rhat_threshold: f64,
    pub bbox_margin: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            l: 25,
            degree: 3,
            hyper: Hyperparameters::default(),
            n_iter: 5000,
            warmup: 500,
            n_chains: 4,
            ci_level: 0.95,
            seed: 0,
            include_intercept: false,
            test_fraction: 0.2,
            grid: InferenceGrid::Observed,
            rhat_threshold: 1.1,
            bbox_margin: 0.0,
        }
    }
}

/// In-memory results of one full fit.
pub struct FitArtifacts {
    pub config: FitConfig,
    pub grid_spec: InferenceGrid,
    pub test_fraction: f64,
    pub group_names: Vec<String>,
    pub samples: Vec<ChainSamples>,
    pub summaries: Vec<SurfaceSummary>,
    pub report: Option<ConvergenceReport>,
    pub train: SpatialDataset,
    pub record: StandardizeRecord,
    pub test: Option<SpatialDataset>,
    pub predictions: Option<Predictions>,
    pub mspe: Option<f64>,
    pub coverage: Option<f64>,
    pub timings_secs: BTreeMap<String, f64>,
}

fn per_dim(l: usize) -> Result<usize> {
    let r = (l as f64).sqrt().round() as usize;
    if r * r == l {
        Ok(r)
    } else {
        Err(Error::InvalidConfig(format!("L={l} is not a perfect square")))
    }
}

/// Split, standardize, sample, diagnose, and summarize.
pub fn run_fit(dataset: &SpatialDataset, opts: &PipelineOptions) -> Result<FitArtifacts> {
    let mut timings = BTreeMap::new();

    let (train_raw, test_raw) = if opts.test_fraction > 0.0 {
        let (tr, te) = train_test_split(dataset, opts.test_fraction, opts.seed)?;
        (tr, Some(te))
    } else {
        (dataset.clone(), None)
    };
    let (train, record) = standardize_predictors(&train_raw);
    let test = test_raw.map(|t| record.apply(&t)).transpose()?;

    let basis_cfg = BasisConfig::new(
        per_dim(opts.l)?,
        opts.degree,
        Bbox::from_locations(&train.locations, opts.bbox_margin),
    );
    let config = FitConfig {
        basis: basis_cfg,
        hyper: opts.hyper,
        n_iter: opts.n_iter,
        warmup: opts.warmup,
        n_chains: opts.n_chains,
        ci_level: opts.ci_level,
        seed: opts.seed,
        include_intercept: opts.include_intercept,
    };
    config.validate()?;
    let basis = BasisSystem::new(basis_cfg)?;
    let blocks = DesignBlocks::new(&train, &basis, opts.include_intercept);
    let group_names = blocks.group_names().to_vec();

    let t0 = Instant::now();
    let samples = run_chains(&blocks, &config)?;
    timings.insert("sampling".into(), t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let report = if opts.n_chains >= 2 {
        Some(build_report(&samples, opts.rhat_threshold)?)
    } else {
        None
    };
    timings.insert("diagnostics".into(), t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let grid_points = opts.grid.points(&train.locations, &basis);
    let summaries: Vec<SurfaceSummary> = (0..blocks.n_groups())
        .map(|j| surface_summary(&samples, &basis, &grid_points, j, &group_names[j], opts.ci_level))
        .collect::<Result<_>>()?;
    timings.insert("surfaces".into(), t0.elapsed().as_secs_f64());

    let (predictions, test_mspe, test_coverage) = if let Some(test) = &test {
        let t0 = Instant::now();
        let pred = predict(&samples, &basis, test, opts.include_intercept, opts.ci_level, opts.seed)?;
        let m = mspe(&pred.point, test.y.as_slice())?;
        let c = coverage(&pred, &test.y);
        timings.insert("prediction".into(), t0.elapsed().as_secs_f64());
        (Some(pred), Some(m), Some(c))
    } else {
        (None, None, None)
    };

    Ok(FitArtifacts {
        config,
        grid_spec: opts.grid,
        test_fraction: opts.test_fraction,
        group_names,
        samples,
        summaries,
        report,
        train,
        record,
        test,
        predictions,
        mspe: test_mspe,
        coverage: test_coverage,
        timings_secs: timings,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mspe: Option<f64>,
    pub coverage: Option<f64>,
    pub ci_level: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Write every fit artifact into `out_dir` and return the manifest (also
/// written there). `save_samples` gates the (potentially large) samples CSV.
pub fn write_results(
    artifacts: &FitArtifacts,
    out_dir: &Path,
    data_path: Option<&Path>,
    save_samples: bool,
) -> Result<RunManifest> {
    prepare_out_dir(out_dir)?;
    let mut manifest = RunManifest::new("fit", artifacts.config.seed);
    manifest.config = Some(artifacts.config);
    manifest.grid_spec = Some(artifacts.grid_spec);
    manifest.test_fraction = Some(artifacts.test_fraction);
    manifest.group_names = artifacts.group_names.clone();
    manifest.timings_secs = artifacts.timings_secs.clone();
    if let Some(p) = data_path {
        manifest.data_path = Some(p.display().to_string());
        manifest
            .input_digests
            .insert(p.display().to_string(), digest_file(p)?);
    }

    let push_out = |manifest: &mut RunManifest, path: PathBuf| {
        manifest.outputs.push(path.file_name().unwrap().to_string_lossy().into_owned());
        path
    };

    let p = push_out(&mut manifest, out_dir.join("surfaces.csv"));
    write_surfaces(&artifacts.summaries, &p)?;
    let p = push_out(&mut manifest, out_dir.join("significance.csv"));
    write_significance(&artifacts.summaries, &p)?;
    let p = push_out(&mut manifest, out_dir.join("scp.json"));
    write_scp(&artifacts.summaries, &p)?;

    if let Some(report) = &artifacts.report {
        let p = push_out(&mut manifest, out_dir.join("convergence.json"));
        fs::write(&p, serde_json::to_string_pretty(report)?)?;
    }
    if save_samples {
        let p = push_out(&mut manifest, out_dir.join("samples.csv"));
        write_samples(&artifacts.samples, &artifacts.group_names, &p)?;
    }
    if let (Some(test), Some(pred)) = (&artifacts.test, &artifacts.predictions) {
        let p = push_out(&mut manifest, out_dir.join("predictions.csv"));
        write_predictions(test, pred, &p)?;
        let metrics = MetricsSummary {
            mspe: artifacts.mspe,
            coverage: artifacts.coverage,
            ci_level: artifacts.config.ci_level,
            n_train: artifacts.train.n(),
            n_test: test.n(),
        };
        let p = push_out(&mut manifest, out_dir.join("metrics.json"));
        fs::write(&p, serde_json::to_string_pretty(&metrics)?)?;
    }

    manifest.outputs.push("manifest.json".into());
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Recompute surface summaries from stored samples at a new credible level
/// without refitting.
pub fn reprocess_samples(
    samples: &[ChainSamples],
    group_names: &[String],
    basis_cfg: BasisConfig,
    grid_spec: InferenceGrid,
    locations: &[(f64, f64)],
    ci_level: f64,
) -> Result<Vec<SurfaceSummary>> {
    let basis = BasisSystem::new(basis_cfg)?;
    let grid_points = grid_spec.points(locations, &basis);
    (0..samples.first().map_or(0, |s| s.n_groups()))
        .map(|j| {
            let name = group_names.get(j).cloned().unwrap_or_else(|| format!("g{j}"));
            surface_summary(samples, &basis, &grid_points, j, &name, ci_level)
        })
        .collect()
}

/// Best-config JSON written by the cv command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BestConfigFile {
    pub l: usize,
    pub a_lambda: f64,
    pub b_lambda: f64,
    pub mean_mspe: f64,
}

impl From<BestConfig> for BestConfigFile {
    fn from(b: BestConfig) -> Self {
        Self { l: b.l, a_lambda: b.a_lambda, b_lambda: b.b_lambda, mean_mspe: b.mean_mspe }
    }
}

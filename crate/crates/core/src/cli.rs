//! Command-line front end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::covmap::{self, GridSpec};
use crate::data::{
    read_bs_file, read_measurement_file, split_by_bs, write_bs_table, write_measurements,
    SigmaTable, SplitSpec,
};
use crate::error::{Error, Result};
use crate::eval::{run_grid, score, ExperimentGrid, Method};
use crate::geo::SamplePoint;
use crate::model::{
    fit_variant, prepare_all, Architecture, DisentangledModel, FitConfig, PreparedSample,
    VariantTag,
};
use crate::nnet::TrainConfig;
use crate::synth::{generate_dataset, SyntheticScenario};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "covpred",
    version,
    about = "Low-altitude SS-RSRP coverage prediction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic BS table and measurement table.
    Synth(SynthArgs),
    /// Train one model variant on a BS-level split.
    Train(TrainArgs),
    /// Run a (method × rate × seed) evaluation sweep.
    EvalGrid(EvalGridArgs),
    /// Rasterize and fuse SS-RSRP predictions for every BS.
    PredictMap(PredictMapArgs),
    /// Look up map values at given points.
    SampleMap(SampleMapArgs),
    /// Summarize a saved model.
    InspectModel(InspectModelArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario TOML; the built-in scenario when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    pub n_bs: usize,
    #[arg(long, default_value_t = 500)]
    pub samples_per_bs: usize,
    /// Overrides the scenario's noise level, dB.
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; receives bs.csv, measurements.csv and scenario.toml.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub bs_file: PathBuf,
    #[arg(long)]
    pub measurements: PathBuf,
    /// Beams per BS in the measurement table.
    #[arg(long, default_value_t = 8)]
    pub m_beams: usize,
    /// Sigma lookup for BS rows with an empty sigma cell (TOML `[[entries]]`).
    #[arg(long)]
    pub sigma_table: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 256)]
    pub hidden_width: usize,
    #[arg(long, default_value_t = 5)]
    pub subnet_layers: usize,
    #[arg(long, default_value_t = 6)]
    pub single_layers: usize,
    #[arg(long, default_value_t = 100)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    /// Drop the AAU-type one-hot from the static inputs.
    #[arg(long)]
    pub exclude_aau: bool,
}

impl FitArgs {
    fn config(&self, seed: u64) -> FitConfig {
        FitConfig {
            arch: Architecture {
                hidden_width: self.hidden_width,
                subnet_layers: self.subnet_layers,
                single_layers: self.single_layers,
            },
            train: TrainConfig {
                learning_rate: self.learning_rate,
                max_epochs: self.max_epochs,
                batch_size: self.batch_size,
                seed,
                ..TrainConfig::default()
            },
            exclude_aau: self.exclude_aau,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_parser = parse_variant)]
    pub variant: VariantTag,
    /// Fraction of BSs used for training.
    #[arg(long)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub model_out: PathBuf,
    /// JSON report with the split, loss history and test scores.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalGridArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated variant tags, `knn` or `lasso`.
    #[arg(long, value_delimiter = ',', value_parser = parse_method, required = true)]
    pub methods: Vec<Method>,
    /// Comma-separated sampling rates.
    #[arg(long, value_delimiter = ',', required = true)]
    pub rates: Vec<f64>,
    /// Seeds as a list and/or inclusive ranges, e.g. `0-19` or `1,4,7-9`.
    #[arg(long, value_parser = parse_seeds, default_value = "0")]
    pub seeds: SeedList,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, default_value_t = 50)]
    pub knn_k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lasso_lambda: f64,
    /// Worker threads; 1 runs cells in order.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Per-cell results CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-(method, rate) means and deviations.
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
    /// Per-cell wall-clock runtimes.
    #[arg(long)]
    pub timings_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictMapArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub bs_file: PathBuf,
    #[arg(long)]
    pub sigma_table: Option<PathBuf>,
    /// Prediction radius around each BS, meters.
    #[arg(long, default_value_t = 2000.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 10.0)]
    pub resolution: f64,
    #[arg(long, default_value_t = 120.0)]
    pub altitude: f64,
    /// South-west corner and extent; the BS bounding box padded by the radius
    /// when omitted.
    #[arg(long, requires_all = ["origin_lat", "extent_x", "extent_y"])]
    pub origin_lon: Option<f64>,
    #[arg(long)]
    pub origin_lat: Option<f64>,
    #[arg(long)]
    pub extent_x: Option<f64>,
    #[arg(long)]
    pub extent_y: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out_csv: PathBuf,
    #[arg(long)]
    pub out_meta: PathBuf,
    #[arg(long)]
    pub out_ppm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleMapArgs {
    #[arg(long)]
    pub map_csv: PathBuf,
    #[arg(long)]
    pub map_meta: PathBuf,
    /// CSV with `lon`/`longitude` and `lat`/`latitude` columns.
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectModelArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Write the summary here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

fn parse_variant(s: &str) -> std::result::Result<VariantTag, String> {
    s.parse().map_err(|_| {
        let valid: Vec<_> = VariantTag::ALL.iter().map(|t| t.as_str()).collect();
        format!(
            "unknown variant {s:?}; expected one of {}",
            valid.join(", ")
        )
    })
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_seeds(s: &str) -> std::result::Result<SeedList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("bad seed list entry {part:?}");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) =
                    (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err("empty seed list".into());
    }
    Ok(SeedList(out))
}

/// Exit status for a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Convergence(_) | Error::Diverged(_) => EXIT_CONVERGENCE,
        _ => EXIT_DATA,
    }
}

/// Parse `args` (program name first), run, and return the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::EvalGrid(a) => eval_grid(a),
        Command::PredictMap(a) => predict_map(a),
        Command::SampleMap(a) => sample_map(a),
        Command::InspectModel(a) => inspect_model(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_sigma(path: Option<&Path>) -> Result<SigmaTable> {
    match path {
        None => Ok(SigmaTable::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Format(format!("sigma table: {e}")))
        }
    }
}

fn load_inputs(a: &InputArgs) -> Result<(Vec<crate::data::BsRecord>, Vec<PreparedSample>)> {
    let sigma = load_sigma(a.sigma_table.as_deref())?;
    let bss = read_bs_file(&a.bs_file, &sigma)?;
    let table = read_measurement_file(&a.measurements, a.m_beams)?;
    let (samples, skipped) = prepare_all(&bss, &table.samples);
    log::info!(
        "{} BSs, {} samples ({} skipped, {} with SS-RSRP below a beam)",
        bss.len(),
        samples.len(),
        skipped,
        table.inconsistent_rows.len()
    );
    Ok((bss, samples))
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut scenario = match &a.scenario {
        Some(p) => SyntheticScenario::load(p)?,
        None => SyntheticScenario::default(),
    };
    if let Some(n) = a.noise_std {
        scenario.noise_std = n;
    }
    let (bss, samples) = generate_dataset(&scenario, a.n_bs, a.samples_per_bs, a.seed)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let bs_path = a.out.join("bs.csv");
    let m_path = a.out.join("measurements.csv");
    let s_path = a.out.join("scenario.toml");
    write_bs_table(create(&bs_path)?, &bss)?;
    write_measurements(create(&m_path)?, &samples, scenario.m_beams())?;
    std::fs::write(&s_path, scenario.to_toml_string()).map_err(|e| Error::io(&s_path, e))?;
    log::info!(
        "wrote {} BSs and {} samples to {}",
        bss.len(),
        samples.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    variant: VariantTag,
    rate: f64,
    seed: u64,
    train_bs: Vec<String>,
    val_bs: Vec<String>,
    test_bs: Vec<String>,
    history: crate::nnet::LossHistory,
    test_mae_db: f64,
    test_mape_pct: f64,
    test_head_mae_db: Vec<f64>,
}

fn by_ids<'a>(samples: &'a [PreparedSample], ids: &[String]) -> Vec<&'a PreparedSample> {
    let set: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
    samples
        .iter()
        .filter(|s| set.contains(s.bs_id.as_str()))
        .collect()
}

fn train(a: TrainArgs) -> Result<()> {
    let (bss, samples) = load_inputs(&a.input)?;
    let split = split_by_bs(
        &bss,
        SplitSpec {
            sampling_rate: a.rate,
            seed: a.seed,
        },
    )?;
    let (tr, va, te) = (
        by_ids(&samples, &split.train),
        by_ids(&samples, &split.val),
        by_ids(&samples, &split.test),
    );
    if tr.is_empty() || va.is_empty() {
        return Err(Error::InvalidSplit(
            "training or validation BSs have no samples".into(),
        ));
    }
    let cfg = a.fit.config(a.seed);
    let (model, history) = fit_variant(a.variant, a.input.m_beams, &tr, &va, &cfg)?;
    model.save(&a.model_out)?;
    let (mae, mape, heads) = if te.is_empty() {
        (f64::NAN, f64::NAN, Vec::new())
    } else {
        score(&te, &model.predict_prepared(&te)?)?
    };
    log::info!(
        "{} trained {} epochs (best {}), test MAE {mae:.3} dB",
        a.variant,
        history.train.len(),
        history.best_epoch
    );
    if let Some(p) = &a.report_out {
        write_json(
            p,
            &TrainReport {
                variant: a.variant,
                rate: a.rate,
                seed: a.seed,
                train_bs: split.train,
                val_bs: split.val,
                test_bs: split.test,
                history,
                test_mae_db: mae,
                test_mape_pct: mape,
                test_head_mae_db: heads,
            },
        )?;
    }
    Ok(())
}

fn eval_grid(a: EvalGridArgs) -> Result<()> {
    let (bss, samples) = load_inputs(&a.input)?;
    let mut grid = ExperimentGrid::new(
        a.methods.clone(),
        a.rates.clone(),
        a.seeds.0.clone(),
        a.input.m_beams,
    );
    grid.fit = a.fit.config(0);
    grid.knn_k = a.knn_k;
    grid.lasso_lambda = a.lasso_lambda;
    grid.jobs = a.jobs;
    let table = run_grid(&grid, &bss, &samples)?;
    table.write_csv(create(&a.out)?)?;
    if let Some(p) = &a.summary_out {
        table.write_summary_csv(create(p)?)?;
    }
    if let Some(p) = &a.timings_out {
        table.write_timings(create(p)?)?;
    }
    for s in table.summary() {
        log::info!(
            "{} rate {}: MAE {:.3} ± {:.3} dB over {} cells",
            s.method,
            s.rate,
            s.mae_mean,
            s.mae_std,
            s.n
        );
    }
    Ok(())
}

fn map_spec(a: &PredictMapArgs, bss: &[crate::data::BsRecord]) -> Result<GridSpec> {
    let mut spec = match (a.origin_lon, a.origin_lat, a.extent_x, a.extent_y) {
        (Some(lon), Some(lat), Some(x), Some(y)) => GridSpec::new(lon, lat, x, y),
        _ => {
            let first = bss
                .first()
                .ok_or_else(|| Error::invalid("BS table is empty"))?;
            let lat0 = first.location.latitude;
            let probe = crate::geo::BsLocation {
                longitude: 0.0,
                latitude: lat0,
                antenna_height: 0.0,
            };
            let (mut min_lon, mut max_lon, mut min_lat, mut max_lat) = (
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
            );
            for b in bss {
                min_lon = min_lon.min(b.location.longitude);
                max_lon = max_lon.max(b.location.longitude);
                min_lat = min_lat.min(b.location.latitude);
                max_lat = max_lat.max(b.location.latitude);
            }
            let sw = GridSpec::centered(min_lon, min_lat, a.radius);
            let span = crate::geo::enu_offset(
                &crate::geo::BsLocation {
                    longitude: min_lon,
                    ..probe
                },
                &SamplePoint {
                    longitude: max_lon,
                    latitude: max_lat,
                    altitude: 0.0,
                },
            )?;
            let lat_span = (max_lat - min_lat) * crate::geo::METERS_PER_DEGREE;
            GridSpec::new(
                sw.origin_lon,
                sw.origin_lat,
                2.0 * a.radius + span.east.max(0.0),
                2.0 * a.radius + lat_span,
            )
        }
    };
    spec.resolution_m = a.resolution;
    spec.altitude_m = a.altitude;
    spec.validate()?;
    Ok(spec)
}

fn predict_map(a: PredictMapArgs) -> Result<()> {
    let model = DisentangledModel::load(&a.model)?;
    let sigma = load_sigma(a.sigma_table.as_deref())?;
    let bss = read_bs_file(&a.bs_file, &sigma)?;
    let spec = map_spec(&a, &bss)?;
    log::info!(
        "predicting {} BSs on a {}×{} grid",
        bss.len(),
        spec.rows(),
        spec.cols()
    );
    let grid = covmap::predict_area(&model, &bss, &spec, a.radius, a.jobs)?;
    covmap::save_csv(&a.out_csv, &grid)?;
    covmap::save_metadata(&a.out_meta, &grid)?;
    if let Some(p) = &a.out_ppm {
        covmap::save_ppm(p, &grid)?;
    }
    log::info!(
        "{} of {} cells covered",
        grid.populated(),
        grid.values.len()
    );
    Ok(())
}

fn read_points(path: &Path) -> Result<Vec<SamplePoint>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(f);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            msg: e.to_string(),
        })?
        .clone();
    let find = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.contains(&h.trim()))
            .ok_or_else(|| Error::Parse {
                row: 0,
                msg: format!("missing column {}", names[0]),
            })
    };
    let (lon_i, lat_i) = (find(&["lon", "longitude"])?, find(&["lat", "latitude"])?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        let num = |k: usize| -> Result<f64> {
            let raw = rec.get(k).unwrap_or("").trim();
            raw.parse().map_err(|_| Error::Parse {
                row,
                msg: format!("cannot parse {raw:?}"),
            })
        };
        out.push(SamplePoint {
            longitude: num(lon_i)?,
            latitude: num(lat_i)?,
            altitude: 0.0,
        });
    }
    Ok(out)
}

fn sample_map(a: SampleMapArgs) -> Result<()> {
    let grid = covmap::load_map(&a.map_csv, &a.map_meta)?;
    let points = read_points(&a.points)?;
    let values = covmap::sample_at(&grid, &points)?;
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["lon", "lat", "ss_rsrp_dbm"]).map_err(fmt)?;
    for (p, v) in points.iter().zip(values) {
        w.write_record([
            p.longitude.to_string(),
            p.latitude.to_string(),
            v.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::io(&a.out, e))
}

#[derive(Serialize)]
struct ModelSummary {
    variant: VariantTag,
    m_beams: usize,
    param_count: usize,
    subnets: Vec<SubnetSummary>,
    aau_types: Vec<String>,
    coverage_scenarios: Vec<String>,
    exclude_aau: bool,
}

#[derive(Serialize)]
struct SubnetSummary {
    input_dim: usize,
    hidden_layers: usize,
    hidden_width: usize,
    output_dim: usize,
}

fn inspect_model(a: InspectModelArgs) -> Result<()> {
    let model = DisentangledModel::load(&a.model)?;
    let summary = ModelSummary {
        variant: model.variant,
        m_beams: model.m_beams,
        param_count: model.param_count(),
        subnets: model
            .net
            .members
            .iter()
            .map(|m| {
                let s = m.spec();
                SubnetSummary {
                    input_dim: s.input_dim,
                    hidden_layers: s.hidden_layers,
                    hidden_width: s.hidden_width,
                    output_dim: s.output_dim,
                }
            })
            .collect(),
        aau_types: model.encoding.aau_vocab.clone(),
        coverage_scenarios: model.encoding.scenario_vocab.clone(),
        exclude_aau: model.encoding.exclude_aau,
    };
    match &a.out {
        Some(p) => write_json(p, &summary),
        None => {
            let text =
                serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}").map_err(|e| Error::io(Path::new("<stdout>"), e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("covpred").chain(args.iter().copied()))
    }

    #[test]
    fn train_command_fields() {
        let cli = parse(&[
            "train",
            "--bs-file",
            "b.csv",
            "--measurements",
            "m.csv",
            "--variant",
            "proposed",
            "--rate",
            "0.5",
            "--seed",
            "3",
            "--model-out",
            "model.json",
        ])
        .unwrap();
        let Command::Train(t) = cli.command else {
            panic!("not train")
        };
        assert_eq!(t.variant, VariantTag::Proposed);
        assert_eq!(t.rate, 0.5);
        assert_eq!(t.seed, 3);
        assert_eq!(t.input.bs_file, PathBuf::from("b.csv"));
        assert_eq!(t.fit.hidden_width, 256);
    }

    #[test]
    fn missing_bs_file_is_a_usage_error() {
        let e = parse(&[
            "train",
            "--measurements",
            "m.csv",
            "--variant",
            "proposed",
            "--rate",
            "0.5",
            "--model-out",
            "x",
        ])
        .unwrap_err();
        assert_eq!(e.kind(), clap::error::ErrorKind::MissingRequiredArgument);
    }

    #[test]
    fn unknown_variant_and_flags_are_rejected() {
        let e = parse(&[
            "train",
            "--bs-file",
            "b",
            "--measurements",
            "m",
            "--variant",
            "wrong4",
            "--rate",
            "0.5",
            "--model-out",
            "x",
        ])
        .unwrap_err();
        assert_eq!(e.kind(), clap::error::ErrorKind::ValueValidation);
        assert!(parse(&["inspect-model", "--model", "m", "--bogus"]).is_err());
        assert!(parse(&[]).is_err());
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0-19").unwrap().0, (0..20).collect::<Vec<_>>());
        assert_eq!(parse_seeds("1,4,7-9").unwrap().0, vec![1, 4, 7, 8, 9]);
        assert!(parse_seeds("5-2").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn eval_grid_parses_methods() {
        let cli = parse(&[
            "eval-grid",
            "--bs-file",
            "b",
            "--measurements",
            "m",
            "--methods",
            "proposed,knn,lasso",
            "--rates",
            "0.1,0.5",
            "--seeds",
            "0-2",
            "--out",
            "r.csv",
            "--jobs",
            "4",
        ])
        .unwrap();
        let Command::EvalGrid(g) = cli.command else {
            panic!("not eval-grid")
        };
        assert_eq!(
            g.methods,
            vec![
                Method::Net(VariantTag::Proposed),
                Method::Knn,
                Method::Lasso
            ]
        );
        assert_eq!(g.rates, vec![0.1, 0.5]);
        assert_eq!(g.seeds.0, vec![0, 1, 2]);
        assert_eq!(g.jobs, 4);
    }

    #[test]
    fn error_classes_map_to_distinct_codes() {
        let io = Error::io(Path::new("x"), std::io::Error::other("boom"));
        let codes = [
            exit_code(&Error::Parse {
                row: 1,
                msg: String::new(),
            }),
            exit_code(&Error::Convergence(3)),
            exit_code(&io),
        ];
        assert_eq!(codes, [EXIT_DATA, EXIT_CONVERGENCE, EXIT_IO]);
        assert_ne!(EXIT_USAGE, EXIT_DATA);
    }
}

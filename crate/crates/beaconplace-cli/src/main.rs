//! Command-line front end: experiment orchestration over the library's
//! fitting, placement, evaluation and ingestion entry points.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use beaconplace::evaluation::evaluate_error;
use beaconplace::geometry::sample_map;
use beaconplace::io::{
    self, compare_methods, fit_g_to_file, fit_node_to_file, ingest_geo, load_ap_positions,
    run_experiment, ExperimentConfig, GeoProjection, Method, RunManifest,
};
use beaconplace::localizers::LocalizerConfig;
use beaconplace::signal::{fit_signal_model, SignalModel, SurveyCollection};

#[derive(Parser)]
#[command(
    name = "beaconplace",
    version,
    about = "Place wireless beacons on a 2D map to minimize localization error"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a log-distance signal model from a survey CSV.
    FitNode {
        /// Survey CSV (x,y,beacon_x,beacon_y,rss_dbm,walls).
        #[arg(long)]
        survey: PathBuf,
        /// Output model JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the displacement-error relation g for an environment.
    FitG {
        #[command(flatten)]
        run: RunArgs,
        /// Number of random-displacement trials.
        #[arg(long, default_value_t = 40)]
        trials: usize,
        /// Output g JSON path.
        #[arg(long)]
        g_out: PathBuf,
    },
    /// Place beacons by the configured method and score the result.
    Place {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score an existing placement CSV on a map.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Placement CSV (beacon_id,x,y).
        #[arg(long)]
        placement: PathBuf,
    },
    /// Run several methods under one environment and emit the comparison table.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated methods (random,rkc,uniform,ceracc,bnp).
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<String>,
    },
    /// Project a lat,lon,ap_id,rss_dbm dataset to local planar meters.
    IngestGeo {
        /// Input geographic CSV.
        #[arg(long)]
        input: PathBuf,
        /// Output directory for candidates.csv, survey.csv, ap_positions.csv.
        #[arg(long)]
        out: PathBuf,
        /// Fixed projection origin latitude (default: dataset centroid).
        #[arg(long)]
        origin_lat: Option<f64>,
        /// Fixed projection origin longitude.
        #[arg(long)]
        origin_lon: Option<f64>,
        /// Optional ap_id,lat,lon ground-truth positions CSV.
        #[arg(long)]
        ap_positions: Option<PathBuf>,
    },
}

/// Shared run flags; every flag overrides the config file, which overrides
/// the built-in defaults.
#[derive(Args)]
struct RunArgs {
    /// JSON config file mirroring all flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rerun the pinned configuration of a previous run's manifest.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    /// Map JSON file.
    #[arg(long)]
    map: Option<PathBuf>,
    /// random|rkc|uniform|ceracc|bnp
    #[arg(long)]
    method: Option<String>,
    /// lateration|fingerprint
    #[arg(long)]
    algorithm: Option<String>,
    /// Number of beacons to place.
    #[arg(long)]
    beacons: Option<usize>,
    /// Acceptable wall-clock budget in seconds.
    #[arg(long)]
    t_acc: Option<f64>,
    /// Acceptable localization error in meters.
    #[arg(long)]
    delta_e_acc: Option<f64>,
    /// Initial sampling interval in meters.
    #[arg(long)]
    intl: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// ari|geo|med
    #[arg(long)]
    objective: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Full-map report grid interval in meters.
    #[arg(long)]
    eval_interval: Option<f64>,
    /// Survey CSV to fit the signal model from.
    #[arg(long)]
    survey: Option<PathBuf>,
    /// Pre-fitted signal model JSON.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Pre-fitted displacement-error relation JSON.
    #[arg(long)]
    g: Option<PathBuf>,
    /// Synthetic model reference power (dBm at d0).
    #[arg(long)]
    p0: Option<f64>,
    /// Synthetic model path-loss exponent.
    #[arg(long)]
    eta: Option<f64>,
    /// Synthetic model reference distance (m).
    #[arg(long)]
    d0: Option<f64>,
    /// Synthetic model shadowing sigma (dB).
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Restarts for the random and rkc methods.
    #[arg(long)]
    restarts: Option<usize>,
    /// Coverage multiplicity for rkc and ceracc.
    #[arg(long)]
    k_cover: Option<usize>,
    /// Coverage radius override in meters.
    #[arg(long)]
    coverage_radius: Option<f64>,
    /// Pruning ratio alpha in (0, 1).
    #[arg(long)]
    alpha: Option<f64>,
    /// Fingerprint neighbor count.
    #[arg(long)]
    k_neighbors: Option<usize>,
    /// Disable memoization.
    #[arg(long)]
    no_memo: bool,
    /// Disable skipping.
    #[arg(long)]
    no_skip: bool,
    /// Disable surrogate pruning.
    #[arg(long)]
    no_surrogate: bool,
    /// Force the selected area to this fraction of the map area.
    #[arg(long)]
    area_scale: Option<f64>,
    /// Bypass the g fit with a fixed sampling interval in meters.
    #[arg(long)]
    delta_p_acc: Option<f64>,
    /// Also dump per-point errors.
    #[arg(long)]
    per_point: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = if let Some(path) = &self.from_manifest {
            RunManifest::from_json_file(path)
                .with_context(|| format!("loading manifest {}", path.display()))?
                .pinned_config
        } else if let Some(path) = &self.config {
            ExperimentConfig::from_json_file(path)
                .with_context(|| format!("loading config {}", path.display()))?
        } else {
            let map = self.map.clone().context("--map is required (or --config)")?;
            let method: Method = self
                .method
                .as_deref()
                .unwrap_or("bnp")
                .parse()
                .map_err(|e: String| anyhow::anyhow!(e))?;
            let out = self.out.clone().context("--out is required (or --config)")?;
            ExperimentConfig::new(map, method, out)
        };

        if let Some(v) = &self.map {
            config.map_path = v.clone();
        }
        if let Some(v) = &self.method {
            config.method = v.parse().map_err(|e: String| anyhow::anyhow!(e))?;
        }
        if let Some(v) = &self.algorithm {
            config.algorithm = match v.as_str() {
                "lateration" => LocalizerConfig::lateration(),
                "fingerprint" => LocalizerConfig::fingerprint(),
                other => bail!("unknown algorithm '{other}' (want lateration|fingerprint)"),
            };
        }
        if let Some(v) = self.k_neighbors {
            config.algorithm.k_neighbors = v;
        }
        if let Some(v) = self.beacons {
            config.n_beacons = v;
        }
        if let Some(v) = self.t_acc {
            config.t_acc_s = v;
        }
        if let Some(v) = self.delta_e_acc {
            config.delta_e_acc_m = v;
        }
        if let Some(v) = self.alpha {
            config.alpha = v;
        }
        if let Some(v) = self.intl {
            config.intl0_m = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = &self.objective {
            config.objective = v.parse().map_err(|e: String| anyhow::anyhow!(e))?;
        }
        if let Some(v) = &self.out {
            config.output_dir = v.clone();
        }
        if let Some(v) = self.threads {
            config.threads = v;
        }
        if let Some(v) = self.eval_interval {
            config.eval_interval_m = Some(v);
        }
        if let Some(v) = &self.survey {
            config.survey_path = Some(v.clone());
        }
        if let Some(v) = &self.model {
            config.model_path = Some(v.clone());
        }
        if let Some(v) = &self.g {
            config.g_path = Some(v.clone());
        }
        if self.p0.is_some()
            || self.eta.is_some()
            || self.d0.is_some()
            || self.noise_sigma.is_some()
        {
            let mut params = config.model.unwrap_or_default();
            if let Some(v) = self.p0 {
                params.p0_dbm = v;
            }
            if let Some(v) = self.eta {
                params.eta = v;
            }
            if let Some(v) = self.d0 {
                params.d0_m = v;
            }
            if let Some(v) = self.noise_sigma {
                params.noise_sigma_db = v;
            }
            config.model = Some(params);
        }
        if let Some(v) = self.restarts {
            config.restarts = v;
        }
        if let Some(v) = self.k_cover {
            config.k_cover = v;
        }
        if let Some(v) = self.coverage_radius {
            config.coverage_radius_m = Some(v);
        }
        if self.no_memo {
            config.search.memoization = false;
        }
        if self.no_skip {
            config.search.skipping = false;
        }
        if self.no_surrogate {
            config.search.surrogate = false;
        }
        if let Some(v) = self.area_scale {
            config.search.area_scale = Some(v);
        }
        if let Some(v) = self.delta_p_acc {
            config.search.delta_p_acc_m = Some(v);
        }
        if self.per_point {
            config.per_point_dump = true;
        }
        Ok(config)
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::FitNode { survey, out } => {
            let model = fit_node_to_file(&survey, &out)?;
            for (walls, pl) in &model.partitions {
                println!("partition walls={walls}: p0={:.3} dBm, eta={:.4}", pl.p0_dbm, pl.eta);
            }
            println!("noise sigma: {:.4} dB", model.noise_sigma_db);
            println!("wrote {}", out.display());
        }
        Command::FitG { run, trials, g_out } => {
            let config = run.resolve()?;
            let g = fit_g_to_file(&config, trials, &g_out)?;
            println!(
                "fitted degree-{} relation over {} trials (r2 = {:.3}{})",
                g.degree,
                g.sample_pairs.len(),
                g.fit_r2,
                if g.degenerate { ", degenerate" } else { "" }
            );
            println!("wrote {}", g_out.display());
        }
        Command::Place { run } => {
            let config = run.resolve()?;
            let artifacts = run_experiment(&config)?;
            let r = &artifacts.report;
            println!(
                "{}: {} beacons, ari {:.3} m, geo {:.3} m, med {:.3} m, abn {:.2}%",
                config.method,
                artifacts.placement.len(),
                r.ari_m,
                r.geo_m,
                r.med_m,
                100.0 * r.abn_frac
            );
            if let Some(trace) = &artifacts.trace {
                println!(
                    "search: {:.2}s wall, area {:.1} m^2, {} levels{}",
                    trace.wall_time_s,
                    trace.area_m2,
                    trace.levels.len(),
                    if trace.deadline_hit { ", deadline hit" } else { "" }
                );
            }
            println!("outputs in {}", config.output_dir.display());
        }
        Command::Evaluate { run, placement } => {
            let config = run.resolve()?;
            let map = io::load_map(&config.map_path)?;
            let placement = io::read_placement(&placement)?;
            let (model, coll) = resolve_model_cli(&config)?;
            let interval =
                config.eval_interval_m.unwrap_or_else(|| (map.area().sqrt() / 15.0).max(0.5));
            let grid = sample_map(&map, interval)?;
            let report = evaluate_error(
                &map,
                &placement,
                &grid,
                &config.algorithm,
                &model,
                &coll,
                config.seed,
            )?;
            let report_path = config.output_dir.join("report.csv");
            io::write_report("evaluate", &report, &report_path)?;
            if config.per_point_dump {
                io::write_per_point(
                    &grid.points,
                    &report.per_point,
                    &config.output_dir.join("errors.csv"),
                )?;
            }
            println!(
                "ari {:.3} m, geo {:.3} m, med {:.3} m, abn {:.2}% over {} points",
                report.ari_m,
                report.geo_m,
                report.med_m,
                100.0 * report.abn_frac,
                report.per_point.len()
            );
            println!("wrote {}", report_path.display());
        }
        Command::Compare { run, methods } => {
            let config = run.resolve()?;
            let methods: Vec<Method> = methods
                .iter()
                .map(|s| s.parse().map_err(|e: String| anyhow::anyhow!(e)))
                .collect::<Result<_>>()?;
            let (rows, table_path) = compare_methods(&config, &methods)?;
            println!("method,ari_m,geo_m,med_m,abn_frac");
            for row in &rows {
                match &row.report {
                    Some(r) => println!(
                        "{},{:.3},{:.3},{:.3},{:.4}",
                        row.method, r.ari_m, r.geo_m, r.med_m, r.abn_frac
                    ),
                    None => println!("{},failed,,,", row.method),
                }
            }
            println!("wrote {}", table_path.display());
        }
        Command::IngestGeo { input, out, origin_lat, origin_lon, ap_positions } => {
            let projection = match (origin_lat, origin_lon) {
                (Some(lat), Some(lon)) => Some(GeoProjection::about(lat, lon)),
                (None, None) => None,
                _ => bail!("--origin-lat and --origin-lon must be given together"),
            };
            let truth = match &ap_positions {
                Some(path) => Some(load_ap_positions(path)?),
                None => None,
            };
            let ingest = ingest_geo(&input, projection, truth.as_deref())?;
            std::fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            let mut candidates = String::from("x,y\n");
            for p in &ingest.candidates {
                candidates.push_str(&format!("{},{}\n", p.x, p.y));
            }
            std::fs::write(out.join("candidates.csv"), candidates)?;
            io::write_survey(&ingest.observations, &out.join("survey.csv"))?;
            let mut aps = String::from("ap_id,x,y\n");
            for (id, p) in &ingest.ap_positions {
                aps.push_str(&format!("{id},{},{}\n", p.x, p.y));
            }
            std::fs::write(out.join("ap_positions.csv"), aps)?;
            println!(
                "{} observations, {} candidate points, {} access points -> {}",
                ingest.observations.len(),
                ingest.candidates.len(),
                ingest.ap_positions.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn resolve_model_cli(config: &ExperimentConfig) -> Result<(SignalModel, SurveyCollection)> {
    if let Some(path) = &config.model_path {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let model: SignalModel = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        let coll = match &config.survey_path {
            Some(sp) => SurveyCollection::from_samples(io::ingest_survey(sp)?),
            None => SurveyCollection::empty(),
        };
        return Ok((model, coll));
    }
    if let Some(path) = &config.survey_path {
        let samples = io::ingest_survey(path)?;
        let (coll, model) = fit_signal_model(&samples)?;
        return Ok((model, coll));
    }
    let p = config.model.unwrap_or_default();
    Ok((
        SignalModel::synthetic(p.p0_dbm, p.eta, p.d0_m, p.noise_sigma_db),
        SurveyCollection::empty(),
    ))
}

//! Command-line front end.
//!
//! Every subcommand reads its inputs, runs one stage and writes
//! machine-readable artifacts into `--out-dir`; diagnostics go to stderr.
//! Exit status is 0 on success, 1 on invalid input or usage, 2 on I/O failure.
//!
//! `--config FILE` supplies defaults as flat `key = value` lines whose keys
//! are long flag names (`beta-min = 0.2`); flags given on the command line win.

use std::collections::{BTreeSet, HashSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::Duration;
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::community::{self, Partition};
use crate::geo::{index_cities, City, CityId, DistanceMatrix};
use crate::gravity::{self, BetaGrid, BetaScore, GravityModel, ObservedPairs};
use crate::ingest::{self, FlowTable};
use crate::network::{self, InteractionNetwork, PowerLawFit, WeightBinning, WeightDistribution};
use crate::pso::PsoConfig;
use crate::spatialize::{self, city_points, Rect};
use crate::stats::KsResult;
use crate::synth::{self, DisplacementSample, ExponentialFit};
use crate::{io, Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "spatial-interaction",
    version,
    about = "Spatial interaction analysis of inter-city check-in flows"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check-ins to trips and an aggregated flow table.
    Ingest(IngestArgs),
    /// Descriptive statistics of the interaction network.
    NetStats(NetStatsArgs),
    /// Compare two flow tables over their common pairs.
    Compare(CompareArgs),
    /// Fit the gravity model over a beta grid.
    FitGravity(FitArgs),
    /// Sample synthetic trips from a fitted gravity model.
    Synth(SynthArgs),
    /// Repeated multilevel community detection with border split frequencies.
    Communities(CommunityArgs),
    /// Voronoi community map as GeoJSON.
    Spatialize(SpatializeArgs),
    /// Run every stage on one dataset.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Directory for output artifacts (created if missing).
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Flat key = value file of flag defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct IngestOpts {
    /// Device-to-venue distance above which a check-in is fake.
    #[arg(long, default_value_t = ingest::DEFAULT_FAKE_THRESHOLD_KM)]
    pub fake_threshold_km: f64,
    /// Consecutive check-ins further apart than this are not a trip.
    #[arg(long)]
    pub max_gap_hours: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct BinningOpts {
    /// Smallest weight included in the power-law fit.
    #[arg(long)]
    pub fit_min: Option<f64>,
    /// Largest weight included in the power-law fit.
    #[arg(long)]
    pub fit_max: Option<f64>,
    /// Bins with fewer edges are left out of the fit.
    #[arg(long, default_value_t = 5)]
    pub min_count: usize,
}

#[derive(Debug, Clone, Args)]
pub struct FitOpts {
    #[arg(long, default_value_t = 0.1)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 2.0)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 0.1)]
    pub beta_step: f64,
    #[arg(long, default_value_t = 50)]
    pub swarm_size: usize,
    #[arg(long, default_value_t = 500)]
    pub iterations: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SynthOpts {
    /// Number of synthetic trips; defaults to the observed total.
    #[arg(long)]
    pub trips: Option<usize>,
    #[arg(long, default_value_t = synth::DEFAULT_BIN_WIDTH_KM)]
    pub bin_width_km: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CommunityOpts {
    /// Independent detection runs.
    #[arg(long, default_value_t = community::DEFAULT_RUNS)]
    pub runs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ClipOpts {
    /// Padding of the city bounding box, as a fraction of its extent.
    #[arg(long, default_value_t = spatialize::DEFAULT_CLIP_PADDING)]
    pub clip_padding: f64,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub cities: PathBuf,
    #[arg(long)]
    pub checkins: PathBuf,
    #[command(flatten)]
    pub opts: IngestOpts,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct NetStatsArgs {
    #[arg(long)]
    pub cities: PathBuf,
    #[arg(long)]
    pub flows: PathBuf,
    #[command(flatten)]
    pub binning: BinningOpts,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub flows: PathBuf,
    #[arg(long)]
    pub flows_b: PathBuf,
    #[arg(long, default_value_t = network::DEFAULT_TOP_K)]
    pub top_k: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub cities: PathBuf,
    #[arg(long)]
    pub flows: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub fit: FitOpts,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub cities: PathBuf,
    /// Fit report written by `fit-gravity`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Observed flows (integral trip counts) for the comparison histogram.
    #[arg(long)]
    pub flows: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub synth: SynthOpts,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct CommunityArgs {
    #[arg(long)]
    pub cities: PathBuf,
    #[arg(long)]
    pub flows: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub community: CommunityOpts,
    #[command(flatten)]
    pub clip: ClipOpts,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct SpatializeArgs {
    #[arg(long)]
    pub cities: PathBuf,
    /// `city_id,community` table.
    #[arg(long)]
    pub labels: PathBuf,
    /// `city_a,city_b,split_frequency` table.
    #[arg(long)]
    pub split: PathBuf,
    #[command(flatten)]
    pub clip: ClipOpts,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub cities: PathBuf,
    /// Raw check-ins; either this or `--flows` is required.
    #[arg(long, required_unless_present = "flows", conflicts_with = "flows")]
    pub checkins: Option<PathBuf>,
    #[arg(long)]
    pub flows: Option<PathBuf>,
    /// Second flow table for the comparison stage.
    #[arg(long)]
    pub flows_b: Option<PathBuf>,
    #[arg(long, default_value_t = network::DEFAULT_TOP_K)]
    pub top_k: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub ingest: IngestOpts,
    #[command(flatten)]
    pub binning: BinningOpts,
    #[command(flatten)]
    pub fit: FitOpts,
    #[command(flatten)]
    pub synth: SynthOpts,
    #[command(flatten)]
    pub community: CommunityOpts,
    #[command(flatten)]
    pub clip: ClipOpts,
    #[command(flatten)]
    pub common: Common,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Ingest(a) => &a.common,
            Command::NetStats(a) => &a.common,
            Command::Compare(a) => &a.common,
            Command::FitGravity(a) => &a.common,
            Command::Synth(a) => &a.common,
            Command::Communities(a) => &a.common,
            Command::Spatialize(a) => &a.common,
            Command::Pipeline(a) => &a.common,
        }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match apply_config(args) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    if e.is_io() {
        2
    } else {
        1
    }
}

/// Runs a parsed command, honouring `--threads`.
pub fn run(cmd: &Command) -> Result<()> {
    match cmd.common().threads {
        None => dispatch(cmd),
        Some(0) => Err(Error::invalid("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start thread pool: {e}")))?
            .install(|| dispatch(cmd)),
    }
}

fn dispatch(cmd: &Command) -> Result<()> {
    let out = &cmd.common().out_dir;
    fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.clone(),
        source,
    })?;
    match cmd {
        Command::Ingest(a) => {
            let cities = io::read_cities(&a.cities)?;
            run_ingest(&cities, &a.checkins, &a.opts, out).map(drop)
        }
        Command::NetStats(a) => {
            let cities = io::read_cities(&a.cities)?;
            run_net_stats(&cities, &io::read_flows(&a.flows)?, &a.binning, out)
        }
        Command::Compare(a) => run_compare(
            &io::read_flows(&a.flows)?,
            &io::read_flows(&a.flows_b)?,
            a.top_k,
            out,
        ),
        Command::FitGravity(a) => {
            let cities = io::read_cities(&a.cities)?;
            run_fit(&cities, &io::read_flows(&a.flows)?, &a.fit, a.seed, out).map(drop)
        }
        Command::Synth(a) => {
            let cities = io::read_cities(&a.cities)?;
            let report: FitReport = io::read_json(&a.fit)?;
            let observed = a.flows.as_deref().map(io::read_flows).transpose()?;
            run_synth(&cities, &report, observed.as_ref(), &a.synth, a.seed, out)
        }
        Command::Communities(a) => {
            let cities = io::read_cities(&a.cities)?;
            run_communities(
                &cities,
                &io::read_flows(&a.flows)?,
                &a.community,
                &a.clip,
                a.seed,
                out,
            )
            .map(drop)
        }
        Command::Spatialize(a) => {
            let cities = io::read_cities(&a.cities)?;
            let labels = io::read_labels(&a.labels, &cities)?;
            let split = io::read_split_frequencies(&a.split, &cities)?;
            run_spatialize(&cities, &labels, &split, &a.clip, out)
        }
        Command::Pipeline(a) => run_pipeline(a, out),
    }
}

fn written(path: &Path) {
    eprintln!("wrote {}", path.display());
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: usize,
    pub fake_removed: usize,
    pub users: usize,
    pub trips: usize,
    pub flow_pairs: usize,
    pub fake_threshold_km: f64,
    pub max_gap_hours: Option<f64>,
}

fn run_ingest(
    cities: &[City],
    checkins: &Path,
    opts: &IngestOpts,
    out: &Path,
) -> Result<FlowTable> {
    let max_gap = match opts.max_gap_hours {
        None => None,
        Some(h) if h > 0.0 && h.is_finite() => {
            Some(Duration::milliseconds((h * 3_600_000.0).round() as i64))
        }
        Some(h) => {
            return Err(Error::invalid(format!(
                "--max-gap-hours must be positive, got {h}"
            )))
        }
    };
    let records = io::read_checkins(checkins)?;
    let kept = ingest::filter_fakes(&records, opts.fake_threshold_km)?;
    let known: HashSet<CityId> = cities.iter().map(|c| c.id.clone()).collect();
    let trajectories = ingest::build_trajectories(&kept, &known)?;
    let trips: Vec<_> = trajectories
        .iter()
        .flat_map(|t| ingest::extract_trips(t, max_gap))
        .collect();
    let flows = ingest::aggregate_flows(&trips)?;

    let path = out.join("flows.csv");
    io::write_flows(&path, &flows)?;
    written(&path);
    let path = out.join("ingest_report.json");
    io::write_json(
        &path,
        &IngestReport {
            records: records.len(),
            fake_removed: records.len() - kept.len(),
            users: trajectories.len(),
            trips: trips.len(),
            flow_pairs: flows.len(),
            fake_threshold_km: opts.fake_threshold_km,
            max_gap_hours: opts.max_gap_hours,
        },
    )?;
    written(&path);
    Ok(flows)
}

#[derive(Debug, Serialize)]
struct NetStatsReport {
    #[serde(flatten)]
    stats: network::NetworkStats,
    total_weight: f64,
    weight_fit: PowerLawFit,
}

fn run_net_stats(
    cities: &[City],
    flows: &FlowTable,
    binning: &BinningOpts,
    out: &Path,
) -> Result<()> {
    let g = InteractionNetwork::build(flows, cities)?;
    let stats = network::compute_stats(&g)?;
    let dist = if g.edge_count() < 10 {
        WeightDistribution {
            bins: Vec::new(),
            fit: PowerLawFit::Refused {
                reason: format!("only {} edges", g.edge_count()),
            },
        }
    } else {
        network::weight_distribution(
            &g,
            WeightBinning {
                min_count: binning.min_count,
                fit_min: binning.fit_min,
                fit_max: binning.fit_max,
                ..WeightBinning::default()
            },
        )?
    };
    let path = out.join("weight_distribution.csv");
    io::write_rows(&path, &dist.bins)?;
    written(&path);
    let path = out.join("net_stats.json");
    io::write_json(
        &path,
        &NetStatsReport {
            stats,
            total_weight: g.total_weight(),
            weight_fit: dist.fit,
        },
    )?;
    written(&path);
    Ok(())
}

#[derive(Debug, Serialize)]
struct RatioRow<'a> {
    city_i: &'a str,
    city_j: &'a str,
    a: f64,
    b: f64,
    ratio: f64,
}

fn run_compare(a: &FlowTable, b: &FlowTable, top_k: usize, out: &Path) -> Result<()> {
    let cmp = network::compare_flows(a, b, top_k)?;
    let path = out.join("top_ratios.csv");
    io::write_rows(
        &path,
        cmp.top_ratios.iter().map(|r| RatioRow {
            city_i: r.city_i.as_str(),
            city_j: r.city_j.as_str(),
            a: r.a,
            b: r.b,
            ratio: r.ratio,
        }),
    )?;
    written(&path);
    let path = out.join("comparison.json");
    io::write_json(&path, &cmp)?;
    written(&path);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub intra_mean: f64,
    pub inter_mean: f64,
    pub intra_count: usize,
    pub inter_count: usize,
}

/// Fit report as written by `fit-gravity` and read back by `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub beta: f64,
    pub k: f64,
    pub gof: f64,
    pub gof_by_beta: Vec<BetaScore>,
    /// Fitted cities in model order, with their sizes.
    pub cities: Vec<CityId>,
    pub sizes: Vec<f64>,
    /// Cities without any observed flow; their size cannot be identified.
    pub dropped_cities: Vec<CityId>,
    pub seed: u64,
    pub pso: PsoConfig,
    /// Residual means by same/different region; absent without region labels.
    pub residual_split: Option<SplitSummary>,
}

#[derive(Debug, Serialize)]
struct ResidualRow<'a> {
    city_i: &'a str,
    city_j: &'a str,
    observed: f64,
    predicted: f64,
    log_residual: f64,
    same_region: Option<bool>,
}

fn run_fit(
    cities: &[City],
    flows: &FlowTable,
    opts: &FitOpts,
    seed: u64,
    out: &Path,
) -> Result<FitReport> {
    let grid = BetaGrid {
        min: opts.beta_min,
        max: opts.beta_max,
        step: opts.beta_step,
    };
    let pso = PsoConfig {
        swarm_size: opts.swarm_size,
        iterations: opts.iterations,
        ..PsoConfig::default()
    };
    let index = index_cities(cities)?;
    let mut active = vec![false; cities.len()];
    for (a, b, _) in flows.iter() {
        for id in [a, b] {
            active[*index
                .get(id)
                .ok_or_else(|| Error::UnknownCity(id.0.clone()))?] = true;
        }
    }
    let mut kept: Vec<City> = Vec::new();
    let mut dropped: Vec<&City> = Vec::new();
    for (c, &on) in cities.iter().zip(&active) {
        if on {
            kept.push(c.clone());
        } else {
            eprintln!(
                "note: city `{}` has no flows and is left out of the fit",
                c.id
            );
            dropped.push(c);
        }
    }
    let d = DistanceMatrix::build(&kept)?;
    let fit = gravity::fit_pso(flows, &kept, &d, &grid.values()?, &pso, seed)?;
    let labelled = kept
        .iter()
        .all(|c| c.region.as_deref().is_some_and(|r| !r.is_empty()));
    let residual_split = if labelled {
        gravity::residual_split(&fit, &kept)
            .ok()
            .map(|s| SplitSummary {
                intra_mean: s.intra_mean,
                inter_mean: s.inter_mean,
                intra_count: s.intra_count,
                inter_count: s.inter_count,
            })
    } else {
        None
    };

    let path = out.join("residuals.csv");
    io::write_rows(
        &path,
        fit.residuals.iter().map(|r| ResidualRow {
            city_i: kept[r.i].id.as_str(),
            city_j: kept[r.j].id.as_str(),
            observed: r.observed,
            predicted: r.predicted,
            log_residual: (r.observed / r.predicted).ln(),
            same_region: r.same_region,
        }),
    )?;
    written(&path);
    let report = FitReport {
        beta: fit.model.beta,
        k: fit.model.k,
        gof: fit.gof,
        gof_by_beta: fit.gof_by_beta,
        cities: kept.iter().map(|c| c.id.clone()).collect(),
        sizes: fit.model.sizes,
        dropped_cities: dropped.iter().map(|c| c.id.clone()).collect(),
        seed,
        pso,
        residual_split,
    };
    let path = out.join("gravity_fit.json");
    io::write_json(&path, &report)?;
    written(&path);
    Ok(report)
}

#[derive(Debug, Serialize)]
struct HistogramRow {
    bin_lo_km: f64,
    bin_hi_km: f64,
    observed_count: usize,
    observed_density: f64,
    synthetic_count: usize,
    synthetic_density: f64,
}

#[derive(Debug, Serialize)]
struct SynthReport {
    trips: usize,
    seed: u64,
    beta: f64,
    bin_width_km: f64,
    synthetic_exponential: Option<ExponentialFit>,
    observed_exponential: Option<ExponentialFit>,
    /// Observed against synthetic displacements.
    ks: Option<KsResult>,
}

fn run_synth(
    cities: &[City],
    report: &FitReport,
    observed: Option<&FlowTable>,
    opts: &SynthOpts,
    seed: u64,
    out: &Path,
) -> Result<()> {
    if report.cities.len() != report.sizes.len() {
        return Err(Error::invalid(
            "fit report lists a different number of cities and sizes",
        ));
    }
    let index = index_cities(cities)?;
    let model_cities: Vec<City> = report
        .cities
        .iter()
        .map(|id| {
            index
                .get(id)
                .map(|&i| cities[i].clone())
                .ok_or_else(|| Error::UnknownCity(id.0.clone()))
        })
        .collect::<Result<_>>()?;
    let d = DistanceMatrix::build(&model_cities)?;
    let model = GravityModel {
        beta: report.beta,
        k: report.k,
        sizes: report.sizes.clone(),
    };

    let observed_values = match observed {
        None => None,
        Some(flows) => {
            if !flows.is_integral() {
                return Err(Error::invalid(
                    "observed flows must be integral trip counts",
                ));
            }
            let obs = ObservedPairs::from_flows(flows, &model_cities)?;
            let mut values = Vec::new();
            for (&(i, j), &w) in obs.pairs.iter().zip(&obs.values) {
                values.extend(std::iter::repeat_n(d.get(i, j), w as usize));
            }
            Some(values)
        }
    };
    let n_trips = match (opts.trips, &observed_values) {
        (Some(n), _) => n,
        (None, Some(v)) => v.len(),
        (None, None) => return Err(Error::invalid("--trips is required without observed flows")),
    };
    if n_trips == 0 {
        return Err(Error::invalid("trip count must be positive"));
    }
    let pmf = synth::build_trip_pmf(&model, &d)?;
    let trips = synth::sample_trips(&pmf, n_trips, seed)?;
    let synthetic = DisplacementSample::from_trips(&trips, &d)?;

    let mut table = FlowTable::new();
    for &(i, j) in &trips {
        table.add(model_cities[i].id.clone(), model_cities[j].id.clone(), 1.0)?;
    }
    let path = out.join("synthetic_flows.csv");
    io::write_flows(&path, &table)?;
    written(&path);

    let obs_slice = observed_values.as_deref().unwrap_or(&[]);
    let width = opts.bin_width_km;
    let bins = synth::histogram(obs_slice, width, None)?
        .len()
        .max(synth::histogram(synthetic.values(), width, None)?.len());
    let obs_hist = synth::histogram(obs_slice, width, Some(bins))?;
    let syn_hist = synth::histogram(synthetic.values(), width, Some(bins))?;
    let path = out.join("displacement_histogram.csv");
    io::write_rows(
        &path,
        obs_hist.iter().zip(&syn_hist).map(|(o, s)| HistogramRow {
            bin_lo_km: s.lo,
            bin_hi_km: s.hi,
            observed_count: o.count,
            observed_density: o.density,
            synthetic_count: s.count,
            synthetic_density: s.density,
        }),
    )?;
    written(&path);

    let observed_sample = observed_values.map(DisplacementSample::new).transpose()?;
    let ks = match &observed_sample {
        Some(o) if !o.is_empty() => Some(synth::compare_distributions(o, &synthetic)?),
        _ => None,
    };
    let path = out.join("synth_report.json");
    io::write_json(
        &path,
        &SynthReport {
            trips: n_trips,
            seed,
            beta: report.beta,
            bin_width_km: width,
            synthetic_exponential: synth::fit_exponential(&synthetic, None).ok(),
            observed_exponential: observed_sample
                .as_ref()
                .and_then(|o| synth::fit_exponential(o, None).ok()),
            ks,
        },
    )?;
    written(&path);
    Ok(())
}

#[derive(Debug, Serialize)]
struct CommunityReport {
    runs: usize,
    seed: u64,
    modularities: Vec<f64>,
    reference_run: usize,
    reference_modularity: f64,
    communities: usize,
    /// Spatially connected pieces of each community over Voronoi adjacency.
    spatial_components: Vec<usize>,
}

fn clip_for(cities: &[City], clip: &ClipOpts) -> Result<Rect> {
    if !(clip.clip_padding >= 0.0) || !clip.clip_padding.is_finite() {
        return Err(Error::invalid(
            "--clip-padding must be finite and non-negative",
        ));
    }
    Rect::around(&city_points(cities), clip.clip_padding)
}

fn run_communities(
    cities: &[City],
    flows: &FlowTable,
    opts: &CommunityOpts,
    clip: &ClipOpts,
    seed: u64,
    out: &Path,
) -> Result<Partition> {
    let g = InteractionNetwork::build(flows, cities)?;
    let diagram = spatialize::voronoi(cities, clip_for(cities, clip)?)?;
    // border pairs on the map plus every network edge
    let mut pairs: BTreeSet<(usize, usize)> = diagram.neighbors.iter().copied().collect();
    pairs.extend(g.edges().iter().map(|e| (e.a.min(e.b), e.a.max(e.b))));
    let pairs: Vec<_> = pairs.into_iter().collect();
    let result = community::consensus(&g, opts.runs, seed, &pairs)?;
    let reference = result.reference_partition().clone();

    let path = out.join("labels.csv");
    io::write_labels(&path, cities, &reference)?;
    written(&path);
    let path = out.join("split_frequency.csv");
    io::write_split_frequencies(&path, cities, &result.pair_split_frequency)?;
    written(&path);
    let path = out.join("communities_report.json");
    io::write_json(
        &path,
        &CommunityReport {
            runs: opts.runs,
            seed,
            reference_modularity: result.modularities[result.reference],
            modularities: result.modularities.clone(),
            reference_run: result.reference,
            communities: reference.count(),
            spatial_components: community::spatial_connectivity(&reference, &diagram.neighbors)?,
        },
    )?;
    written(&path);
    Ok(reference)
}

fn run_spatialize(
    cities: &[City],
    labels: &Partition,
    split: &std::collections::HashMap<(usize, usize), f64>,
    clip: &ClipOpts,
    out: &Path,
) -> Result<()> {
    let diagram = spatialize::voronoi(cities, clip_for(cities, clip)?)?;
    let map = spatialize::merge_regions(&diagram, labels, split)?;
    let path = out.join("regions.geojson");
    io::write_json(&path, &spatialize::to_geojson(&map, cities))?;
    written(&path);
    Ok(())
}

fn run_pipeline(a: &PipelineArgs, out: &Path) -> Result<()> {
    let cities = io::read_cities(&a.cities)?;
    let flows = match (&a.checkins, &a.flows) {
        (Some(checkins), _) => run_ingest(&cities, checkins, &a.ingest, out)?,
        (None, Some(flows)) => io::read_flows(flows)?,
        (None, None) => return Err(Error::invalid("pipeline needs --checkins or --flows")),
    };
    run_net_stats(&cities, &flows, &a.binning, out)?;
    if let Some(b) = &a.flows_b {
        run_compare(&flows, &io::read_flows(b)?, a.top_k, out)?;
    }
    let report = run_fit(&cities, &flows, &a.fit, a.seed, out)?;
    let observed = flows.is_integral().then_some(&flows);
    let synth_opts = SynthOpts {
        trips: a
            .synth
            .trips
            .or_else(|| observed.is_none().then_some(100_000)),
        bin_width_km: a.synth.bin_width_km,
    };
    // distinct stage seeds so stages never share a random stream
    run_synth(
        &cities,
        &report,
        observed,
        &synth_opts,
        crate::seed::derive(a.seed, &[1]),
        out,
    )?;
    let labels = run_communities(
        &cities,
        &flows,
        &a.community,
        &a.clip,
        crate::seed::derive(a.seed, &[2]),
        out,
    )?;
    let split = io::read_split_frequencies(&out.join("split_frequency.csv"), &cities)?;
    run_spatialize(&cities, &labels, &split, &a.clip, out)
}

/// Expands `--config FILE` into flags for the chosen subcommand, skipping any
/// flag already present on the command line.
fn apply_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let config_path = strs.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            strs.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    });
    let Some(config_path) = config_path else {
        return Ok(args);
    };
    let Some(sub_name) = strs.iter().skip(1).find(|a| !a.starts_with('-')) else {
        return Ok(args);
    };
    let cmd = Cli::command();
    let Some(sub) = cmd.find_subcommand(sub_name) else {
        return Ok(args);
    };
    let known: HashSet<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();
    let path = PathBuf::from(&config_path);
    let text = fs::read_to_string(&path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let present: HashSet<String> = strs
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut out = args;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::invalid(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                n + 1
            ))
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" {
            return Err(Error::invalid(format!(
                "{}:{}: config files cannot nest",
                path.display(),
                n + 1
            )));
        }
        if !known.contains(&key) {
            if Cli::command().get_subcommands().any(|s| {
                s.get_arguments()
                    .any(|a| a.get_long() == Some(key.as_str()))
            }) {
                continue;
            }
            return Err(Error::invalid(format!(
                "{}:{}: unknown key `{key}`",
                path.display(),
                n + 1
            )));
        }
        if !present.contains(&key) {
            out.push(OsString::from(format!("--{key}={value}")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn config_fills_missing_flags_only() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        fs::write(&cfg, "# defaults\nseed = 7\nbeta_min = 0.3\nruns = 5\n").unwrap();
        let args: Vec<OsString> = [
            "bin",
            "fit-gravity",
            "--seed",
            "9",
            "--config",
            cfg.to_str().unwrap(),
        ]
        .iter()
        .map(OsString::from)
        .collect();
        let out = apply_config(args).unwrap();
        let tail: Vec<_> = out[6..]
            .iter()
            .map(|s| s.to_string_lossy().into_owned())
            .collect();
        // seed given on the command line; runs belongs to another subcommand
        assert_eq!(tail, vec!["--beta-min=0.3"]);

        fs::write(&cfg, "bogus = 1\n").unwrap();
        let args: Vec<OsString> = ["bin", "fit-gravity", "--config", cfg.to_str().unwrap()]
            .iter()
            .map(OsString::from)
            .collect();
        assert!(apply_config(args).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main_with_args(["bin", "no-such-command"]), 1);
        assert_eq!(main_with_args(["bin", "--help"]), 0);
        assert_eq!(
            main_with_args([
                "bin",
                "net-stats",
                "--cities",
                "/nonexistent/c.csv",
                "--flows",
                "/nonexistent/f.csv"
            ]),
            2
        );
    }
}

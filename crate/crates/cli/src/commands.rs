use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use dpcer::cer::Hyperparams;
use dpcer::comb::EdgeCountTable;
use dpcer::consensus::{consensus_fit, empirical_hyperparams, n_sub_study, BlockingKind, ConsensusConfig, NSubRow};
use dpcer::gibbs::run_chain;
use dpcer::io::{read_coords, read_labels, read_population, write_labels, write_population, GraphFormat};
use dpcer::par::derive_seed;
use dpcer::partition::{clustering_metrics, minimize_evi, network_summaries, NetworkSummaries};
use dpcer::predictive::{posterior_alpha_mean, posterior_predictive_sample, PredictiveTable};
use dpcer::simstudy::{
    gen_centroids_with, long_csv, median, run_study, sample_truth, CentroidSpec, MixtureTruth, Scenario, StudyConfig,
};
use dpcer::trace::{read_trace, write_trace};
use dpcer::{Graph, GraphPopulation, Parallelism};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::RunConfig;
use crate::manifest::{HyperparamRecord, Manifest};
use crate::{write_file, CliError, ConfigArgs};

const PAR: Parallelism = Parallelism::Parallel;

fn parse_format(s: &str) -> Result<GraphFormat, CliError> {
    Ok(s.parse::<GraphFormat>()?)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    write_file(path, &(serde_json::to_string_pretty(value).expect("json serializes") + "\n"))
}

fn read_single_graph(path: &Path, format: GraphFormat, n_nodes: usize) -> Result<Graph, CliError> {
    let pop = read_population(path, format)?;
    if pop.len() != 1 || pop.n_nodes() != n_nodes {
        return Err(CliError::Data(format!(
            "{}: expected one graph on {n_nodes} nodes, found {} on {}",
            path.display(),
            pop.len(),
            pop.n_nodes()
        )));
    }
    Ok(pop.get(0).clone())
}

fn summaries_header() -> &'static str {
    "density,transitivity,avg_path_length,clustering_coefficient"
}

fn summaries_line(s: &NetworkSummaries) -> String {
    format!("{},{},{},{}", s.density, s.transitivity, s.avg_path_length, s.clustering_coefficient)
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Graph population file.
    #[arg(long)]
    data: PathBuf,
    /// adjacency or edge-list.
    #[arg(long, default_value = "adjacency")]
    format: String,
    /// Centre graph of the base measure; defaults to the sample Fréchet mean.
    #[arg(long)]
    g0: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn fit(args: &FitArgs, workers: Option<usize>) -> Result<(), CliError> {
    let cfg = args.config.load()?;
    let chain = cfg.chain(PAR)?;
    let format = parse_format(&args.format)?;
    let data = read_population(&args.data, format)?;
    let h = match &args.g0 {
        Some(p) => Hyperparams::new(cfg.a, cfg.b, cfg.c, read_single_graph(p, format, data.n_nodes())?)?,
        None => empirical_hyperparams(&data, cfg.shape())?,
    };
    ensure_dir(&args.out)?;
    let start = Instant::now();
    let trace = run_chain(&data, &h, &chain)?;
    let seconds = start.elapsed().as_secs_f64();
    write_trace(&trace, &args.out.join("trace.csv"), &args.out.join("atoms.csv"))?;

    let ks: Vec<f64> = trace.snapshots.iter().map(|s| s.state.n_clusters() as f64).collect();
    write_json(
        &args.out.join("summary.json"),
        &json!({
            "n_obs": data.len(),
            "n_nodes": data.n_nodes(),
            "retained": trace.len(),
            "mean_clusters": ks.iter().sum::<f64>() / ks.len() as f64,
            "seconds": seconds,
        }),
    )?;
    let mut m = Manifest::new("fit", &cfg, workers);
    m.inputs.push(args.data.clone());
    m.inputs.extend(args.g0.clone());
    m.outputs = vec!["trace.csv".into(), "atoms.csv".into(), "summary.json".into()];
    m.hyperparams = Some(HyperparamRecord::new(&h));
    m.seconds = seconds;
    m.write(&args.out)
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    /// Output directory of `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Reference labels (one 1-based label per line) for metrics.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Defaults to the fit directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

/// Command config falling back to the fit's seed when none is given.
fn config_with_fit_seed(args: &ConfigArgs, fit: &Manifest) -> Result<RunConfig, CliError> {
    let mut cfg = args.load()?;
    if cfg.seed.is_none() {
        cfg.seed = fit.config.seed;
    }
    Ok(cfg)
}

fn load_fit(dir: &Path) -> Result<(Manifest, dpcer::gibbs::PosteriorTrace), CliError> {
    let m = Manifest::read(dir)?;
    let h = m
        .hyperparams
        .as_ref()
        .ok_or_else(|| CliError::Data(format!("{}: manifest has no hyperparameters", dir.display())))?
        .hyperparams()?;
    let seed = m.config.seed.unwrap_or(0);
    let trace = read_trace(&dir.join("trace.csv"), &dir.join("atoms.csv"), h, seed)?;
    Ok((m, trace))
}

pub fn cluster(args: &ClusterArgs, workers: Option<usize>) -> Result<(), CliError> {
    let (fit_manifest, trace) = load_fit(&args.fit)?;
    let cfg = config_with_fit_seed(&args.config, &fit_manifest)?;
    let out = args.out.clone().unwrap_or_else(|| args.fit.clone());
    ensure_dir(&out)?;
    let start = Instant::now();
    let est = minimize_evi(&trace.partitions(), &cfg.evi(PAR)?)?;
    let seconds = start.elapsed().as_secs_f64();
    write_labels(&out.join("partition.csv"), est.partition.labels())?;

    let co = trace.coclustering();
    let mut text = String::new();
    for row in &co {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(text, "{}", cells.join(",")).unwrap();
    }
    write_file(&out.join("coclustering.csv"), &text)?;

    let mut report = json!({
        "n_clusters": est.partition.n_clusters(),
        "sizes": est.partition.sizes(),
        "expected_vi": est.expected_vi,
    });
    let mut m = Manifest::new("cluster", &cfg, workers);
    m.inputs.push(args.fit.clone());
    if let Some(t) = &args.truth {
        let truth = read_labels(t)?;
        report["metrics"] = serde_json::to_value(clustering_metrics(est.partition.labels(), &truth)?).unwrap();
        m.inputs.push(t.clone());
    }
    write_json(&out.join("cluster.json"), &report)?;
    m.outputs = vec!["partition.csv".into(), "coclustering.csv".into(), "cluster.json".into()];
    m.hyperparams = fit_manifest.hyperparams.clone();
    m.seconds = seconds;
    write_json(&out.join("cluster_manifest.json"), &serde_json::to_value(&m).unwrap())
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Output directory of `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// The population the fit was run on.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "adjacency")]
    format: String,
    /// Point-estimate partition; defaults to `partition.csv` in the fit directory.
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Horizon of the m-step-ahead edge count law.
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Posterior predictive graphs to draw.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Defaults to the fit directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn predict(args: &PredictArgs, workers: Option<usize>) -> Result<(), CliError> {
    let (fit_manifest, trace) = load_fit(&args.fit)?;
    let cfg = config_with_fit_seed(&args.config, &fit_manifest)?;
    let seed = cfg.seed()?;
    let h = &trace.hyperparams;
    let data = read_population(&args.data, parse_format(&args.format)?)?;
    h.check_population(&data)?;
    let part_path = args.partition.clone().unwrap_or_else(|| args.fit.join("partition.csv"));
    let labels = read_labels(&part_path)?;
    if labels.len() != data.len() {
        return Err(CliError::Data(format!("{} labels for {} graphs", labels.len(), data.len())));
    }
    if args.m == 0 {
        return Err(CliError::Usage("--m must be at least 1".into()));
    }
    let out = args.out.clone().unwrap_or_else(|| args.fit.clone());
    ensure_dir(&out)?;
    let start = Instant::now();

    let n = data.n_nodes();
    let k_max = labels.iter().max().map_or(0, |&k| k + 1);
    let mut edges = String::from("cluster,i,j,edge_prob,mode_prob\n");
    let mut steps = String::from("cluster,i,j,count,prob\n");
    let mut clusters = String::from("cluster,size,alpha_mean,mode\n");
    for k in 0..k_max {
        let members: Vec<&Graph> = labels.iter().enumerate().filter(|(_, &z)| z == k).map(|(l, _)| data.get(l)).collect();
        if members.is_empty() {
            continue;
        }
        let table = EdgeCountTable::build(members.iter().copied(), &h.g0)?;
        let alpha = posterior_alpha_mean(&table, h)?;
        let pt = PredictiveTable::new(table, h)?;
        let (ep, mp) = (pt.edge_prob_matrix()?, pt.mode_prob_matrix()?);
        for i in 0..n {
            for j in 0..i {
                writeln!(edges, "{},{},{},{},{}", k + 1, i + 1, j + 1, ep[i][j], mp[i][j]).unwrap();
                for (c, p) in pt.m_step(i, j, args.m)?.iter().enumerate() {
                    writeln!(steps, "{},{},{},{c},{p}", k + 1, i + 1, j + 1).unwrap();
                }
            }
        }
        writeln!(clusters, "{},{},{},{}", k + 1, members.len(), alpha, pt.mode_frechet_mean()?.to_hex()).unwrap();
    }
    write_file(&out.join("edge_probs.csv"), &edges)?;
    write_file(&out.join("m_step.csv"), &steps)?;
    write_file(&out.join("clusters.csv"), &clusters)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = (0..args.samples).map(|_| posterior_predictive_sample(&trace, &mut rng)).collect::<Result<Vec<_>, _>>()?;
    write_population(&out.join("predictive_samples.txt"), draws.iter(), GraphFormat::AdjacencyText)?;
    let mut ppc = format!("source,index,{}\n", summaries_header());
    for (source, graphs) in [("observed", data.graphs()), ("predictive", draws.as_slice())] {
        for (i, g) in graphs.iter().enumerate() {
            writeln!(ppc, "{source},{},{}", i + 1, summaries_line(&network_summaries(g))).unwrap();
        }
    }
    write_file(&out.join("ppc.csv"), &ppc)?;

    let mut m = Manifest::new("predict", &cfg, workers);
    m.inputs = vec![args.fit.clone(), args.data.clone(), part_path];
    m.outputs = ["edge_probs.csv", "m_step.csv", "clusters.csv", "predictive_samples.txt", "ppc.csv"]
        .map(String::from)
        .to_vec();
    m.hyperparams = fit_manifest.hyperparams.clone();
    m.seconds = start.elapsed().as_secs_f64();
    write_json(&out.join("predict_manifest.json"), &serde_json::to_value(&m).unwrap())
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// low, medium-low, medium, high or mixed.
    #[arg(long, default_value = "mixed")]
    scenario: String,
    #[arg(long, default_value_t = 20)]
    nodes: usize,
    #[arg(long, default_value_t = 40)]
    obs: usize,
    /// Ring-lattice degree of the small-world centroid.
    #[arg(long)]
    lattice_degree: Option<usize>,
    /// Run a replicated study (fit, cluster, divergences) instead of writing one dataset.
    #[arg(long)]
    replicates: Option<usize>,
    /// Importance-sampling draws per replicate; 0 skips divergences.
    #[arg(long, default_value_t = 2000)]
    divergence_draws: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn simulate(args: &SimulateArgs, workers: Option<usize>) -> Result<(), CliError> {
    let cfg = args.config.load()?;
    let seed = cfg.seed()?;
    let scenario: Scenario = args.scenario.parse()?;
    let mut spec = CentroidSpec::default();
    if let Some(d) = args.lattice_degree {
        spec.lattice_degree = d;
    }
    ensure_dir(&args.out)?;
    let start = Instant::now();
    let mut m = Manifest::new("simulate", &cfg, workers);
    match args.replicates {
        None => {
            let truth = MixtureTruth::scenario(gen_centroids_with(args.nodes, &spec, seed)?, scenario)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
            let sim = sample_truth(&truth, args.obs, &mut rng)?;
            write_population(&args.out.join("data.txt"), sim.data.iter(), GraphFormat::AdjacencyText)?;
            write_labels(&args.out.join("truth.csv"), &sim.components)?;
            write_population(&args.out.join("centroids.txt"), truth.centroids().iter(), GraphFormat::AdjacencyText)?;
            m.outputs = vec!["data.txt".into(), "truth.csv".into(), "centroids.txt".into()];
        }
        Some(replicates) => {
            let study = StudyConfig {
                scenario,
                n_nodes: args.nodes,
                n_obs: args.obs,
                replicates,
                centroids: spec,
                shape: cfg.shape(),
                chain: cfg.chain(PAR)?,
                evi: cfg.evi(PAR)?,
                divergence_draws: args.divergence_draws,
                seed,
                parallelism: PAR,
            };
            let (_, results) = run_study(&study)?;
            write_file(&args.out.join("study_long.csv"), &long_csv(scenario, args.obs, &results))?;
            let col = |f: &dyn Fn(&dpcer::simstudy::ReplicateResult) -> Option<f64>| {
                let xs: Vec<f64> = results.iter().filter_map(f).collect();
                if xs.is_empty() {
                    serde_json::Value::Null
                } else {
                    json!(median(&xs))
                }
            };
            write_json(
                &args.out.join("study_summary.json"),
                &json!({
                    "scenario": scenario.name(),
                    "n_obs": args.obs,
                    "replicates": replicates,
                    "median_entropy": col(&|r| Some(r.metrics.entropy)),
                    "median_purity": col(&|r| Some(r.metrics.purity)),
                    "median_rand": col(&|r| Some(r.metrics.rand)),
                    "median_kl": col(&|r| r.kl.map(|d| d.value)),
                    "median_l1": col(&|r| r.l1.map(|d| d.value)),
                }),
            )?;
            m.outputs = vec!["study_long.csv".into(), "study_summary.json".into()];
        }
    }
    m.seconds = start.elapsed().as_secs_f64();
    m.write(&args.out)
}

#[derive(Args, Debug)]
pub struct ConsensusArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "adjacency")]
    format: String,
    /// Node coordinates (`x y z` per line); required for spatial blocking.
    #[arg(long)]
    coords: Option<PathBuf>,
    /// Target block size.
    #[arg(long)]
    n_sub: Option<usize>,
    /// spatial or random.
    #[arg(long)]
    blocking: Option<String>,
    /// Comma-separated N_sub values for the diagnostic; needs --truth.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<usize>,
    /// Reference labels for metrics and the diagnostic.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

pub fn consensus(args: &ConsensusArgs, workers: Option<usize>) -> Result<(), CliError> {
    let mut cfg = args.config.load()?;
    if let Some(n) = args.n_sub {
        cfg.n_sub = n;
    }
    if let Some(b) = &args.blocking {
        cfg.blocking = b.parse::<BlockingKind>()?;
    }
    let data = read_population(&args.data, parse_format(&args.format)?)?;
    let coords = args.coords.as_deref().map(read_coords).transpose()?;
    let truth = args.truth.as_deref().map(read_labels).transpose()?;
    if !args.grid.is_empty() && truth.is_none() {
        return Err(CliError::Usage("--grid needs --truth".into()));
    }
    let config = ConsensusConfig {
        n_sub: cfg.n_sub,
        blocking: cfg.blocking,
        shape: cfg.shape(),
        chain: cfg.chain(PAR)?,
        evi: cfg.evi(PAR)?,
        parallelism: PAR,
    };
    ensure_dir(&args.out)?;
    let start = Instant::now();
    let fit = consensus_fit(&data, coords.as_deref(), &config)?;
    write_labels(&args.out.join("partition.csv"), fit.estimate.partition.labels())?;
    let mut blocks = String::from("node,block\n");
    for (v, b) in fit.blocking.block_of().iter().enumerate() {
        writeln!(blocks, "{},{}", v + 1, b + 1).unwrap();
    }
    write_file(&args.out.join("blocks.csv"), &blocks)?;
    let mut report = json!({
        "n_blocks": fit.blocking.n_blocks(),
        "block_sizes": fit.blocking.sizes(),
        "pooled_draws": fit.pooled_size(),
        "n_clusters": fit.estimate.partition.n_clusters(),
        "expected_vi": fit.estimate.expected_vi,
        "block_seconds": fit.block_seconds,
    });
    let mut outputs = vec!["partition.csv".to_string(), "blocks.csv".into(), "consensus.json".into()];
    if let Some(t) = &truth {
        report["metrics"] = serde_json::to_value(clustering_metrics(fit.estimate.partition.labels(), t)?).unwrap();
        if !args.grid.is_empty() {
            let rows = n_sub_study(&data, coords.as_deref(), t, &args.grid, &config)?;
            let mut text = format!("{}\n", NSubRow::CSV_HEADER);
            for r in &rows {
                writeln!(text, "{}", r.csv_line()).unwrap();
            }
            write_file(&args.out.join("nsub.csv"), &text)?;
            outputs.push("nsub.csv".into());
        }
    }
    write_json(&args.out.join("consensus.json"), &report)?;
    let mut m = Manifest::new("consensus", &cfg, workers);
    m.inputs.push(args.data.clone());
    m.inputs.extend(args.coords.clone());
    m.inputs.extend(args.truth.clone());
    m.outputs = outputs;
    m.seconds = start.elapsed().as_secs_f64();
    m.write(&args.out)
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Estimated labels.
    #[arg(long, requires = "truth")]
    estimate: Option<PathBuf>,
    /// Reference labels.
    #[arg(long, requires = "estimate")]
    truth: Option<PathBuf>,
    /// Graph population for per-graph network summaries.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "adjacency")]
    format: String,
    /// Write here instead of stdout: `<out>.json` for metrics, `<out>.csv` for summaries.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn metrics(args: &MetricsArgs) -> Result<(), CliError> {
    if args.estimate.is_none() && args.data.is_none() {
        return Err(CliError::Usage("give --estimate and --truth, or --data".into()));
    }
    if let (Some(e), Some(t)) = (&args.estimate, &args.truth) {
        let m = clustering_metrics(&read_labels(e)?, &read_labels(t)?)?;
        let text = serde_json::to_string_pretty(&m).unwrap() + "\n";
        match &args.out {
            Some(o) => write_file(&o.with_extension("json"), &text)?,
            None => print!("{text}"),
        }
    }
    if let Some(d) = &args.data {
        let data: GraphPopulation = read_population(d, parse_format(&args.format)?)?;
        let mut text = format!("graph,{}\n", summaries_header());
        for (i, g) in data.iter().enumerate() {
            writeln!(text, "{},{}", i + 1, summaries_line(&network_summaries(g))).unwrap();
        }
        match &args.out {
            Some(o) => write_file(&o.with_extension("csv"), &text)?,
            None => print!("{text}"),
        }
    }
    Ok(())
}

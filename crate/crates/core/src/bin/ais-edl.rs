//! Command-line front end: each subcommand runs one pipeline stage and reads
//! or writes only the paths it is given.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ais_edl::ais::{read_labeled_csv, write_csv, write_labeled_csv, TrackSegment, VesselTrack};
use ais_edl::config::PipelineConfig;
use ais_edl::detectors::{confusion_matrix, merge_ut_runs, sweep_point, DetectionThresholds};
use ais_edl::graph::{graph_from_geojson, graph_to_geojson, parse_edit_script, refine_graph, TrafficGraph};
use ais_edl::neural::{load_checkpoint, save_checkpoint, Classifier, Model, ModelSpec, Regressor, TrainOutcome, WeightStore};
use ais_edl::pipeline::{self, ClassTask};
use ais_edl::similarity::{enumerate_routes, score_track, MAX_ROUTE_NODES};
use ais_edl::synth::{generate_world, inject, scatter_injections, AnomalyInjection, ScatterKind, World, WorldSpec};
use ais_edl::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "ais-edl", version, about = "Traffic-lane graphs and uncertainty-based AIS anomaly detection")]
struct Cli {
    /// `key=value` config file; later sources override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set tau=30`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Override the seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Clone, Default)]
struct Io {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean a raw AIS CSV: parse, drop invalid rows, keep the region of interest.
    Ingest {
        #[command(flatten)]
        io: Io,
        /// Rejected rows as `line,reason`.
        #[arg(long)]
        rejects: Option<PathBuf>,
    },
    /// Generate a seeded two-lane corpus with injected anomalies.
    Synth {
        #[arg(long)]
        output: Option<PathBuf>,
        /// Per-point ground truth `mmsi,timestamp,lane,leg,anomaly`.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        tracks_per_lane: usize,
        /// Tracks that receive one lateral offset.
        #[arg(long, default_value_t = 0)]
        offset_tracks: usize,
        /// Tracks that receive unusual turns.
        #[arg(long, default_value_t = 0)]
        turn_tracks: usize,
        /// Tracks that receive reporting gaps.
        #[arg(long, default_value_t = 0)]
        gap_tracks: usize,
    },
    /// Extract a traffic graph (GeoJSON) from a corpus.
    BuildGraph {
        #[command(flatten)]
        io: Io,
    },
    /// Apply a manual edit script to a graph.
    RefineGraph {
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        edits: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Resample a corpus and label every point with its lane edge.
    Associate {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Train the trajectory regressor on an edge-labelled corpus.
    TrainRegressor {
        #[command(flatten)]
        io: Io,
        /// Graph the labels refer to; fixes the edge encoding width.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Train an unusual-turn or on-off-switching classifier on a corpus.
    TrainClassifier {
        task: Task,
        #[command(flatten)]
        io: Io,
    },
    /// Run a detector and write per-segment or per-sample verdicts.
    Detect {
        kind: DetectKind,
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        theta_at: Option<f64>,
        #[arg(long)]
        u_th: Option<f64>,
    },
    /// Score tracks against graph routes with the LCS similarity baseline.
    BaselineSimilarity {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        s_at: Option<f64>,
    },
    /// Evaluate a classifier on the held-out vessels of a corpus.
    Eval {
        task: Task,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Metrics CSV `u_th,accuracy_all,accuracy_anomalous`.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        u_th: Option<f64>,
    },
    /// Write graph, tracks and verdicts as one GeoJSON FeatureCollection.
    ExportPlot {
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Corpus whose tracks are drawn.
        #[arg(long)]
        input: Option<PathBuf>,
        /// AT verdict CSV; tracks with a flagged segment get `flag: true`.
        #[arg(long)]
        verdicts: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Task {
    Ut,
    Oos,
}

impl From<Task> for ClassTask {
    fn from(t: Task) -> Self {
        match t {
            Task::Ut => ClassTask::UnusualTurn,
            Task::Oos => ClassTask::OnOffSwitching,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum DetectKind {
    At,
    Ut,
    Oos,
}

/// Failure of a command: bad invocation (exit 2) or a domain error (exit 1).
enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Domain(e.into())
    }
}

type Res<T> = std::result::Result<T, Failure>;

fn effective_config(cli: &Cli) -> Res<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(existing(Some(path.clone()), "--config")?)?;
        cfg.apply_text(&text)?;
    }
    cfg.apply_seed_env()?;
    for s in &cli.sets {
        cfg.apply_assignment(s).map_err(|e| Failure::Usage(format!("--set {s}: {e}")))?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn required(path: Option<PathBuf>, fallback: &Option<PathBuf>, flag: &str) -> Res<PathBuf> {
    path.or_else(|| fallback.clone())
        .ok_or_else(|| Failure::Usage(format!("{flag} is required (or set it in the config)")))
}

fn existing(path: Option<PathBuf>, flag: &str) -> Res<PathBuf> {
    let p = path.ok_or_else(|| Failure::Usage(format!("{flag} is required")))?;
    if !p.exists() {
        return Err(Failure::Usage(format!("{flag}: {} does not exist", p.display())));
    }
    Ok(p)
}

fn input(path: Option<PathBuf>, fallback: &Option<PathBuf>, flag: &str) -> Res<PathBuf> {
    existing(Some(required(path, fallback, flag)?), flag)
}

fn create(path: &Path) -> Res<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn read_tracks(path: &Path, cfg: &PipelineConfig) -> Res<Vec<VesselTrack>> {
    let (tracks, report, _) = pipeline::ingest(BufReader::new(File::open(path)?), cfg)?;
    if !report.rejected.is_empty() {
        eprintln!("{}: skipped {} invalid rows", path.display(), report.rejected.len());
    }
    Ok(tracks)
}

fn read_graph(path: &Path) -> Res<(TrafficGraph, ais_edl::geometry::Projection)> {
    let doc: Value = serde_json::from_reader(BufReader::new(File::open(path)?)).map_err(Error::from)?;
    Ok(graph_from_geojson(&doc)?)
}

fn write_graph(path: &Path, graph: &TrafficGraph, proj: &ais_edl::geometry::Projection) -> Res<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &graph_to_geojson(graph, proj)).map_err(Error::from)?;
    w.flush()?;
    Ok(())
}

fn read_labeled(path: &Path, cfg: &PipelineConfig) -> Res<Vec<TrackSegment>> {
    let rows: Vec<_> = read_labeled_csv(BufReader::new(File::open(path)?))?
        .into_iter()
        .map(|(r, l)| (r, Some(l)))
        .collect();
    Ok(pipeline::regroup(&rows, cfg.tau))
}

fn read_model(path: &Path) -> Res<(Model, WeightStore)> {
    let (weights, spec) = load_checkpoint(&fs::read(path)?)?;
    let (model, _) = Model::init(&spec, weights.seed())?;
    Ok((model, weights))
}

fn regressor(path: &Path) -> Res<(Regressor, WeightStore)> {
    match read_model(path)? {
        (Model::Regressor(r), w) => Ok((r, w)),
        _ => Err(Failure::Usage(format!("{} is not a regressor checkpoint", path.display()))),
    }
}

fn classifier(path: &Path) -> Res<(Classifier, WeightStore)> {
    match read_model(path)? {
        (Model::Classifier(c), w) => Ok((c, w)),
        _ => Err(Failure::Usage(format!("{} is not a classifier checkpoint", path.display()))),
    }
}

fn report_training(out: &TrainOutcome) {
    for h in &out.history {
        match h.val_loss {
            Some(v) => eprintln!("epoch {:>3}  train {:.6}  val {:.6}", h.epoch, h.train_loss, v),
            None => eprintln!("epoch {:>3}  train {:.6}", h.epoch, h.train_loss),
        }
    }
    eprintln!("kept weights of epoch {}", out.best_epoch);
}

fn save_model(path: &Path, spec: &ModelSpec, out: &TrainOutcome) -> Res<()> {
    fs::write(path, save_checkpoint(&out.weights, spec))?;
    Ok(())
}

fn synth_world(
    cfg: &PipelineConfig,
    tracks_per_lane: usize,
    offset: usize,
    turn: usize,
    gap: usize,
) -> Res<World> {
    let mut spec = WorldSpec::two_lane(tracks_per_lane);
    spec.tau = cfg.tau;
    let world = generate_world(&spec, cfg.seed)?;
    let n = world.tracks.len();
    if offset + turn + gap > n {
        return Err(Failure::Usage(format!("{} anomalous tracks requested but the world has {n}", offset + turn + gap)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (offsets, rest) = order.split_at(offset);
    let (turns, rest) = rest.split_at(turn);
    let gaps = &rest[..gap];
    let mut injections: Vec<AnomalyInjection> = Vec::new();
    let minutes = (60 / cfg.tau.max(1)).max(1) as usize;
    for kind_tracks in [
        (ScatterKind::Offset { meters: (2000.0, 5000.0), ramp: 5 * minutes }, offsets, 1),
        (ScatterKind::Turn { degrees: (40.0, 90.0), duration: (120, 300) }, turns, 3),
        (ScatterKind::Gap { seconds: (300.0, 900.0) }, gaps, 2),
    ] {
        let (kind, tracks, per_track) = kind_tracks;
        injections.extend(scatter_injections(&world, kind, tracks, per_track, &mut rng)?);
    }
    Ok(inject(&world, &injections)?)
}

fn run(cli: Cli) -> Res<()> {
    let mut cfg = effective_config(&cli)?;
    if cli.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Failure::Usage("no command given; see --help".into()));
    };
    match command {
        Command::Ingest { io, rejects } => {
            let path = input(io.input, &cfg.input, "--input")?;
            let out = required(io.output, &cfg.output, "--output")?;
            let (tracks, report, duplicates) = pipeline::ingest(BufReader::new(File::open(&path)?), &cfg)?;
            let records: Vec<_> = tracks.iter().flat_map(|t| t.records.iter().copied()).collect();
            write_csv(create(&out)?, &records)?;
            if let Some(r) = rejects {
                report.write_csv(create(&r)?)?;
            }
            eprintln!(
                "{} rows, {} accepted, {} rejected, {duplicates} duplicate timestamps dropped, {} vessels and {} reports kept",
                report.total,
                report.accepted,
                report.rejected.len(),
                tracks.len(),
                records.len()
            );
        }
        Command::Synth {
            output,
            truth,
            tracks_per_lane,
            offset_tracks,
            turn_tracks,
            gap_tracks,
        } => {
            let out = required(output, &cfg.output, "--output")?;
            let world = synth_world(&cfg, tracks_per_lane, offset_tracks, turn_tracks, gap_tracks)?;
            let mut w = create(&out)?;
            world.write_csv(&mut w)?;
            w.flush()?;
            if let Some(t) = truth {
                let mut w = create(&t)?;
                world.write_truth_csv(&mut w)?;
                w.flush()?;
            }
            eprintln!("{} tracks, {} reports", world.tracks.len(), world.records().len());
        }
        Command::BuildGraph { io } => {
            let path = input(io.input, &cfg.input, "--input")?;
            let out = required(io.output, &cfg.graph, "--output")?;
            let segments = pipeline::resample(&read_tracks(&path, &cfg)?, &cfg)?;
            let graph = pipeline::build_graph_from(&segments, &cfg)?;
            write_graph(&out, &graph, &pipeline::projection(&cfg)?)?;
            eprintln!("{} nodes, {} edges", graph.node_count(), graph.edge_count());
        }
        Command::RefineGraph { graph, edits, output } => {
            let path = input(graph, &cfg.graph, "--graph")?;
            let edits = existing(Some(edits), "--edits")?;
            let out = required(output, &cfg.output, "--output")?;
            let (g, proj) = read_graph(&path)?;
            let script = parse_edit_script(&fs::read_to_string(edits)?, &proj)?;
            let refined = refine_graph(&g, &script)?;
            write_graph(&out, &refined, &proj)?;
            eprintln!("{} edits applied: {} nodes, {} edges", script.len(), refined.node_count(), refined.edge_count());
        }
        Command::Associate { io, graph } => {
            let path = input(io.input, &cfg.input, "--input")?;
            let gpath = input(graph, &cfg.graph, "--graph")?;
            let out = required(io.output, &cfg.output, "--output")?;
            let (g, proj) = read_graph(&gpath)?;
            let mut segments = pipeline::resample(&read_tracks(&path, &cfg)?, &cfg)?;
            pipeline::associate_segments(&mut segments, &g, &proj, &cfg)?;
            write_labeled_csv(create(&out)?, &segments)?;
            eprintln!("{} segments labelled", segments.len());
        }
        Command::TrainRegressor { io, graph } => {
            let path = input(io.input, &cfg.input, "--input")?;
            let gpath = input(graph, &cfg.graph, "--graph")?;
            let out = required(io.output, &cfg.model, "--output")?;
            let n_edges = read_graph(&gpath)?.0.edge_count();
            let segments = read_labeled(&path, &cfg)?;
            let (train, val, _) = pipeline::regression_split(&segments, n_edges, &cfg)?;
            eprintln!("{} training and {} validation samples", train.len(), val.len());
            let spec = ModelSpec::Regressor(pipeline::regressor_spec(n_edges, &cfg));
            let (_, trained) = pipeline::fit(&spec, &train, &val, &cfg)?;
            report_training(&trained);
            save_model(&out, &spec, &trained)?;
        }
        Command::TrainClassifier { task, io } => {
            let path = input(io.input, &cfg.input, "--input")?;
            let out = required(io.output, &cfg.model, "--output")?;
            let task = ClassTask::from(task);
            let set = pipeline::class_samples(task, &read_tracks(&path, &cfg)?, &cfg)?;
            let (train, val, _) = pipeline::class_split(&set, &cfg)?;
            eprintln!("{}: {} balanced training and {} validation samples", task.name(), train.len(), val.len());
            let spec = ModelSpec::Classifier(pipeline::classifier_spec(task, &train, &cfg));
            let (_, trained) = pipeline::fit(&spec, &train, &val, &cfg)?;
            report_training(&trained);
            save_model(&out, &spec, &trained)?;
        }
        Command::Detect {
            kind,
            io,
            model,
            theta_at,
            u_th,
        } => {
            if let Some(v) = theta_at {
                cfg.set("theta_at", &v.to_string()).map_err(|e| Failure::Usage(e.to_string()))?;
            }
            if let Some(v) = u_th {
                cfg.set("u_th", &v.to_string()).map_err(|e| Failure::Usage(e.to_string()))?;
            }
            let path = input(io.input, &cfg.input, "--input")?;
            let mpath = input(model, &cfg.model, "--model")?;
            let out = required(io.output, &cfg.output, "--output")?;
            match kind {
                DetectKind::At => detect_at(&path, &mpath, &out, &cfg)?,
                DetectKind::Ut => detect_ut(&path, &mpath, &out, &cfg)?,
                DetectKind::Oos => detect_oos(&path, &mpath, &out, &cfg)?,
            }
        }
        Command::BaselineSimilarity { io, graph, s_at } => {
            if let Some(v) = s_at {
                cfg.set("s_at", &v.to_string()).map_err(|e| Failure::Usage(e.to_string()))?;
            }
            let path = input(io.input, &cfg.input, "--input")?;
            let gpath = input(graph, &cfg.graph, "--graph")?;
            let out = required(io.output, &cfg.output, "--output")?;
            let (g, proj) = read_graph(&gpath)?;
            let routes = enumerate_routes(&g, MAX_ROUTE_NODES)?;
            let params = cfg.similarity_params();
            let mut w = csv::Writer::from_writer(create(&out)?);
            w.write_record(["mmsi", "score", "s_at", "flag"]).map_err(Error::from)?;
            let mut flagged = 0;
            for t in read_tracks(&path, &cfg)? {
                let v = score_track(&t.local_points(&proj), &routes, &g, &params)?;
                flagged += usize::from(v.anomalous);
                w.write_record([t.mmsi.to_string(), v.score.to_string(), v.s_at.to_string(), v.anomalous.to_string()])
                    .map_err(Error::from)?;
            }
            w.flush()?;
            eprintln!("{} routes; {flagged} tracks below S_AT={}", routes.routes.len(), params.s_at);
        }
        Command::Eval {
            task,
            input: inp,
            model,
            metrics,
            u_th,
        } => {
            if let Some(v) = u_th {
                cfg.set("u_th", &v.to_string()).map_err(|e| Failure::Usage(e.to_string()))?;
            }
            let path = input(inp, &cfg.input, "--input")?;
            let mpath = input(model, &cfg.model, "--model")?;
            eval(ClassTask::from(task), &path, &mpath, metrics.as_deref(), &cfg)?;
        }
        Command::ExportPlot {
            graph,
            input: inp,
            verdicts,
            output,
        } => {
            let out = required(output, &cfg.output, "--output")?;
            let graph = graph.or_else(|| cfg.graph.clone()).map(|g| existing(Some(g), "--graph")).transpose()?;
            let inp = inp.map(|p| existing(Some(p), "--input")).transpose()?;
            let verdicts = verdicts.map(|p| existing(Some(p), "--verdicts")).transpose()?;
            if graph.is_none() && inp.is_none() {
                return Err(Failure::Usage("export-plot needs --graph, --input or both".into()));
            }
            export_plot(graph.as_deref(), inp.as_deref(), verdicts.as_deref(), &out, &cfg)?;
        }
    }
    Ok(())
}

fn detect_at(path: &Path, mpath: &Path, out: &Path, cfg: &PipelineConfig) -> Res<()> {
    let (model, w) = regressor(mpath)?;
    let n_edges = pipeline::edges_of(model.spec())?;
    if model.spec().t_in != cfg.t {
        return Err(Failure::Usage(format!("model was trained with T={}, config has T={}", model.spec().t_in, cfg.t)));
    }
    let th: DetectionThresholds = cfg.thresholds();
    th.validate()?;
    let mut wr = csv::Writer::from_writer(create(out)?);
    wr.write_record(["mmsi", "segment_start_time", "min_norm_uncertainty", "threshold", "flag"])
        .map_err(Error::from)?;
    let (mut chunks, mut flagged) = (0, 0);
    for seg in read_labeled(path, cfg)? {
        let (_, verdicts) = pipeline::scan_segment_at(&model, &w, &seg, n_edges, cfg)?;
        for v in verdicts {
            chunks += 1;
            flagged += usize::from(v.anomalous);
            wr.write_record([
                seg.mmsi.to_string(),
                seg.records[v.start].time.to_string(),
                v.min_normalized.to_string(),
                v.theta_at.to_string(),
                v.anomalous.to_string(),
            ])
            .map_err(Error::from)?;
        }
    }
    wr.flush()?;
    eprintln!("{flagged} of {chunks} segments flagged at theta_at={}", th.theta_at);
    Ok(())
}

fn write_class_verdicts(
    out: &Path,
    model: &Classifier,
    w: &WeightStore,
    set: &ais_edl::features::SampleSet,
    times: &[i64],
    u_th: f64,
) -> Res<Vec<bool>> {
    let verdicts = pipeline::classify(model, w, set, u_th)?;
    let mut wr = csv::Writer::from_writer(create(out)?);
    wr.write_record(["mmsi", "start_time", "class", "u", "u_th", "accepted", "flag"])
        .map_err(Error::from)?;
    let mut flags = Vec::with_capacity(verdicts.len());
    for ((v, mmsi), t) in verdicts.iter().zip(&set.groups).zip(times) {
        let flag = v.accepted && v.class == 1;
        flags.push(flag);
        wr.write_record([
            mmsi.to_string(),
            t.to_string(),
            v.class.to_string(),
            v.u.to_string(),
            v.u_th.to_string(),
            v.accepted.to_string(),
            flag.to_string(),
        ])
        .map_err(Error::from)?;
    }
    wr.flush()?;
    Ok(flags)
}

fn detect_ut(path: &Path, mpath: &Path, out: &Path, cfg: &PipelineConfig) -> Res<()> {
    let (model, w) = classifier(mpath)?;
    let tracks = read_tracks(path, cfg)?;
    let set = pipeline::class_samples(ClassTask::UnusualTurn, &tracks, cfg)?;
    // window start times, in the order the samples are built
    let mut times = Vec::new();
    let mut spans = Vec::new();
    for seg in pipeline::resample(&tracks, cfg)? {
        if seg.records.len() >= cfg.ut_window {
            let n = seg.records.len() - cfg.ut_window + 1;
            spans.push(n);
            times.extend(seg.records[..n].iter().map(|r| r.time));
        }
    }
    let flags = write_class_verdicts(out, &model, &w, &set, &times, cfg.u_th)?;
    let mut events = 0;
    let mut at = 0;
    for n in spans {
        events += merge_ut_runs(&flags[at..at + n]).len();
        at += n;
    }
    eprintln!("{} windows, {} flagged, {events} merged turn events", flags.len(), flags.iter().filter(|&&f| f).count());
    Ok(())
}

fn detect_oos(path: &Path, mpath: &Path, out: &Path, cfg: &PipelineConfig) -> Res<()> {
    let (model, w) = classifier(mpath)?;
    let tracks = read_tracks(path, cfg)?;
    let set = pipeline::class_samples(ClassTask::OnOffSwitching, &tracks, cfg)?;
    let times: Vec<i64> = tracks
        .iter()
        .filter(|t| t.records.len() >= 2)
        .flat_map(|t| t.records[..t.records.len() - 1].iter().map(|r| r.time))
        .collect();
    let flags = write_class_verdicts(out, &model, &w, &set, &times, cfg.u_th)?;
    eprintln!("{} report pairs, {} flagged", flags.len(), flags.iter().filter(|&&f| f).count());
    Ok(())
}

fn eval(task: ClassTask, path: &Path, mpath: &Path, metrics: Option<&Path>, cfg: &PipelineConfig) -> Res<()> {
    let (model, w) = classifier(mpath)?;
    let set = pipeline::class_samples(task, &read_tracks(path, cfg)?, cfg)?;
    let (_, _, test) = pipeline::class_split(&set, cfg)?;
    let scores = pipeline::score(&model, &w, &test)?;
    let at = sweep_point(&scores, cfg.u_th);
    println!("task {} on {} held-out samples", task.name(), scores.len());
    println!(
        "u_th={}: accuracy {:.4} (all samples), {:.4} (accepted), {:.4} (anomalous); {:.1}% accepted",
        cfg.u_th,
        at.accuracy_all,
        at.accuracy_accepted,
        at.accuracy_anomalous,
        100.0 * at.accepted_fraction
    );
    println!("confusion matrix, accepted samples (rows truth, columns predicted):");
    for (k, row) in confusion_matrix(&scores, 2, cfg.u_th).iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>8}")).collect();
        println!("  {k}: {}", cells.join(""));
    }
    println!("{:>5} {:>12} {:>18}", "u_th", "accuracy_all", "accuracy_anomalous");
    let sweep: Vec<_> = (0..=10).map(|i| sweep_point(&scores, i as f64 / 10.0)).collect();
    for p in &sweep {
        println!("{:>5.1} {:>12.4} {:>18.4}", p.u_th, p.accuracy_all, p.accuracy_anomalous);
    }
    if let Some(m) = metrics {
        let mut wr = csv::Writer::from_writer(create(m)?);
        wr.write_record(["u_th", "accuracy_all", "accuracy_anomalous"]).map_err(Error::from)?;
        for p in &sweep {
            wr.write_record([format!("{:.1}", p.u_th), p.accuracy_all.to_string(), p.accuracy_anomalous.to_string()])
                .map_err(Error::from)?;
        }
        wr.flush()?;
    }
    Ok(())
}

fn flagged_vessels(path: &Path) -> Res<std::collections::BTreeSet<u64>> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut out = std::collections::BTreeSet::new();
    for row in rdr.records() {
        let row = row.map_err(Error::from)?;
        let bad = || Error::Ingest(format!("{}: malformed verdict row {:?}", path.display(), row));
        let mmsi: u64 = row.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if row.get(4) == Some("true") {
            out.insert(mmsi);
        }
    }
    Ok(out)
}

fn export_plot(graph: Option<&Path>, inp: Option<&Path>, verdicts: Option<&Path>, out: &Path, cfg: &PipelineConfig) -> Res<()> {
    let mut features: Vec<Value> = Vec::new();
    if let Some(g) = graph {
        let (g, proj) = read_graph(g)?;
        if let Value::Array(f) = graph_to_geojson(&g, &proj)["features"].take() {
            features.extend(f.into_iter().map(|mut feat| {
                let kind = if feat["geometry"]["type"] == "Point" { "node" } else { "edge" };
                feat["properties"]["layer"] = json!(kind);
                feat
            }));
        }
    }
    if let Some(p) = inp {
        let flagged = verdicts.map(flagged_vessels).transpose()?;
        for t in read_tracks(p, cfg)? {
            let coords: Vec<Value> = t.records.iter().map(|r| json!([r.lon, r.lat])).collect();
            let mut props = json!({"layer": "track", "mmsi": t.mmsi});
            if let Some(f) = &flagged {
                props["flag"] = json!(f.contains(&t.mmsi));
            }
            features.push(json!({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": coords},
                "properties": props,
            }));
        }
    }
    let mut w = create(out)?;
    serde_json::to_writer(&mut w, &json!({"type": "FeatureCollection", "features": features})).map_err(Error::from)?;
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

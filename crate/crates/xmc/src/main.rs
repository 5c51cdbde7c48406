use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use xmc::bundle::{self, Bundle, Stage};
use xmc::config::PipelineConfig;
use xmc::pipeline::{self, Splits};
use xmc::xc::{self, ScoredRows};
use xmc::{Result, XmcError};
use xmc_core::{data, shortlist, theorem, Dataset, LabelId};

#[derive(Parser)]
#[command(name = "xmc", version, about = "Extreme multi-label classification for short text")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single-threaded, for bit-identical reruns.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON config; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// default, desk or full.
    #[arg(long, default_value = "default")]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    recompute_tfidf: bool,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::preset(&self.preset)?,
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = &self.train {
            cfg.data.train = Some(t.clone());
            cfg.data.synth = None;
        }
        if let Some(t) = &self.test {
            cfg.data.test = Some(t.clone());
        }
        if self.recompute_tfidf {
            cfg.data.recompute_tfidf = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Dataset summary statistics.
    Stats { file: PathBuf },
    /// Write the configured train and test splits as sparse text files.
    Export {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the label cluster tree and print its summary.
    Cluster {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train stages into a bundle directory, resuming where possible.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        bundle: PathBuf,
        /// Comma-separated subset of surrogate,shortlist,extreme,rerank.
        #[arg(long, value_delimiter = ',')]
        stages: Vec<String>,
        /// Retrain requested stages even when up to date.
        #[arg(long)]
        force: bool,
        /// Compare negative sources instead of training a bundle.
        #[arg(long)]
        ablate_sampler: bool,
        /// Write epoch records as JSON lines here instead of stdout.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Top-k predictions for every document of a data file.
    Predict {
        #[arg(long)]
        bundle: PathBuf,
        /// Sparse-format input; defaults to the bundle's test split.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        no_rerank: bool,
        #[arg(long)]
        recompute_tfidf: bool,
    },
    /// Metrics of a prediction file against ground truth.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Training file for propensities and frequency bins.
        #[arg(long)]
        train: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Check the residual's feature and cosine bounds on a trained bundle.
    VerifyTheorem {
        #[arg(long)]
        bundle: PathBuf,
        /// Points used as queries.
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Labels whose positive sets are checked.
        #[arg(long, default_value_t = 50)]
        labels: usize,
        /// Extra random counterexample search instances.
        #[arg(long, default_value_t = 0)]
        falsify: usize,
    },
    /// Recall of the training and prediction shortlists.
    ShortlistRecall {
        #[arg(long)]
        bundle: PathBuf,
    },
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(XmcError::io("stdout", e)),
        _ => Ok(()),
    }
}

fn read_xc(path: &Path) -> Result<Dataset> {
    let f = File::open(path).map_err(|e| XmcError::io(path, e))?;
    Ok(xc::parse_xc(BufReader::new(f))?.0)
}

fn bundle_splits(b: &Bundle) -> Result<(PipelineConfig, Splits)> {
    let cfg = b.config()?;
    let splits = pipeline::load_data(&cfg)?;
    Ok((cfg, splits))
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Stats { file } => print_json(&data::compute_stats(&read_xc(&file)?)),
        Cmd::Export { cfg, out } => {
            let splits = pipeline::load_data(&cfg.resolve()?)?;
            std::fs::create_dir_all(&out).map_err(|e| XmcError::io(&out, e))?;
            for (name, d) in [("train.txt", &splits.train), ("test.txt", &splits.test)] {
                let path = out.join(name);
                let f = File::create(&path).map_err(|e| XmcError::io(&path, e))?;
                let mut w = BufWriter::new(f);
                xc::write_xc(d, &mut w).and_then(|_| w.flush()).map_err(|e| XmcError::io(&path, e))?;
            }
            Ok(())
        }
        Cmd::Cluster { cfg } => {
            let c = cfg.resolve()?;
            if cfg.print_config {
                println!("{}", c.to_json());
                return Ok(());
            }
            let splits = pipeline::load_data(&c)?;
            let st = pipeline::run_clustering(&splits.train, &c)?;
            for w in &st.warnings {
                eprintln!("warning: {w}");
            }
            let sizes: Vec<usize> = st.tree.as_ref().map(|t| t.leaves.iter().map(Vec::len).collect()).unwrap_or_default();
            print_json(&serde_json::json!({
                "num_clusters": st.meta.num_clusters,
                "depth": st.tree.as_ref().map(|t| t.depth),
                "min_leaf": sizes.iter().min(),
                "max_leaf": sizes.iter().max(),
                "empty_labels": st.tree.as_ref().map(|t| t.empty_labels.len()),
            }))
        }
        Cmd::Run {
            cfg,
            bundle: dir,
            stages,
            force,
            ablate_sampler,
            log,
        } => {
            let c = cfg.resolve()?;
            if cfg.print_config {
                println!("{}", c.to_json());
                return Ok(());
            }
            let splits = pipeline::load_data(&c)?;
            if ablate_sampler {
                return print_json(&pipeline::ablate_sampler(&splits, &c)?);
            }
            let requested: Vec<Stage> = if stages.is_empty() {
                Stage::ALL.to_vec()
            } else {
                stages.iter().map(|s| Stage::parse(s.trim())).collect::<Result<_>>()?
            };
            let mut sink: Box<dyn Write> = match &log {
                Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| XmcError::io(p, e))?)),
                None => Box::new(std::io::stdout()),
            };
            let rep = bundle::run_stages(&splits, &c, &requested, &dir, force, Some(&mut *sink))?;
            sink.flush().map_err(|e| XmcError::io("log", e))?;
            for (st, status) in &rep.stages {
                eprintln!("{:<10} {:?}", st.name(), status);
            }
            Ok(())
        }
        Cmd::Predict {
            bundle: dir,
            input,
            output,
            top_k,
            no_rerank,
            recompute_tfidf,
        } => {
            let b = Bundle::open(&dir)?;
            let mut cfg = b.config()?;
            if let Some(k) = top_k {
                cfg.predict.top_k = k;
            }
            cfg.predict.validate()?;
            let mut data = match &input {
                Some(p) => read_xc(p)?,
                None => pipeline::load_data(&cfg)?.test,
            };
            if recompute_tfidf {
                data.recompute_tfidf();
            }
            let model = b.inference_model(!no_rerank)?;
            let (preds, lat) = pipeline::predict_batch(data.features(), &model, &cfg.predict)?;
            let rows = ScoredRows {
                num_labels: model.num_labels(),
                rows: pipeline::prediction_rows(&preds),
            };
            let f = File::create(&output).map_err(|e| XmcError::io(&output, e))?;
            xc::write_scored(&rows, BufWriter::new(f)).map_err(|e| XmcError::io(&output, e))?;
            eprintln!("{}", serde_json::to_string(&lat)?);
            Ok(())
        }
        Cmd::Evaluate {
            predictions,
            truth,
            train,
            cfg,
        } => {
            let c = cfg.resolve()?;
            let f = File::open(&predictions).map_err(|e| XmcError::io(&predictions, e))?;
            let preds = xc::parse_scored(BufReader::new(f))?;
            let truth = read_xc(&truth)?;
            let train = read_xc(&train)?;
            if preds.rows.len() != truth.num_points() {
                return Err(XmcError::RowCount {
                    expected: truth.num_points(),
                    found: preds.rows.len(),
                });
            }
            print_json(&pipeline::evaluate(&preds.rows, &truth, &train, &c)?)
        }
        Cmd::VerifyTheorem {
            bundle: dir,
            points,
            labels,
            falsify,
        } => {
            let b = Bundle::open(&dir)?;
            let (_, splits) = bundle_splits(&b)?;
            let net = b.extreme()?;
            let sigma = theorem::certify(&net.residual)?;
            let train = &splits.train;
            let pts: Vec<usize> = (0..train.num_points().min(points)).collect();
            let freq = train.label_frequencies();
            let mut ls: Vec<LabelId> = (0..freq.len() as LabelId).filter(|&l| freq[l as usize] > 0).collect();
            ls.truncate(labels);
            let rep = theorem::check_model(train, &net.embeddings, &net.residual, &ls, &pts)?;
            let min = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::INFINITY, f64::min);
            let mut summary = serde_json::json!({
                "lambda": net.residual.lambda,
                "sigma_max": sigma,
                "feature_rows": rep.features.len(),
                "min_feature_margin": min(&mut rep.features.iter().map(|r| r.margin)),
                "intermediate_rows": rep.intermediate.len(),
                "cosine_rows": rep.cosines.len(),
                "min_lower_margin": min(&mut rep.cosines.iter().map(|r| r.lower_margin)),
                "min_upper_margin": min(&mut rep.cosines.iter().map(|r| r.upper_margin)),
            });
            if falsify > 0 {
                let f = theorem::falsify(falsify, &[0.05, 0.1, 0.25, 0.5, 1.0], 8, 8, 7);
                summary["falsification"] = serde_json::to_value(&f)?;
                if f.violations() > 0 {
                    print_json(&summary)?;
                    return Err(xmc_core::Error::BoundViolated(format!("{} random violations", f.violations())).into());
                }
            }
            print_json(&summary)
        }
        Cmd::ShortlistRecall { bundle: dir } => {
            let b = Bundle::open(&dir)?;
            let (_, splits) = bundle_splits(&b)?;
            let sl = b.shortlists()?;
            let negatives = sl.anns.rows.iter().map(Vec::len).sum::<usize>() as f64 / sl.anns.len().max(1) as f64;
            let test = if splits.test.num_points() > 0 {
                let e = b.embeddings()?;
                let rows = pipeline::query_shortlists(&sl.shortlister, &e, splits.test.features())?;
                let s = shortlist::Shortlist {
                    num_labels: sl.shortlister.num_labels,
                    rows,
                };
                Some(shortlist::shortlist_recall(&s, &splits.test)?)
            } else {
                None
            };
            print_json(&serde_json::json!({ "training_negatives_per_point": negatives, "test": test }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hamforge::blocks::{BlocksAction, ClusterKey};
use hamforge::ham::{to_dot, to_text};
use hamforge::harness::{cluster_stem, Artifacts, ExperimentConfig, Pipeline};
use hamforge::machine_gen::{count_by_multiset, enumerate_machines, GenParams};
use hamforge::{Error, Result};

#[derive(Parser)]
#[command(
    name = "hamforge",
    version,
    about = "Discover hierarchies of abstract machines for a blocks-world manipulator"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline.
    Run {
        #[command(flatten)]
        common: Common,
        /// Override the number of evaluation seeds.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Enumerate candidate machines.
    Generate {
        #[arg(long)]
        max_vertices: usize,
        /// Comma-separated action names.
        #[arg(long, value_delimiter = ',', default_value = "Left,Right,Up,Down,ToggleMagnet")]
        actions: Vec<BlocksAction>,
        #[arg(long, default_value_t = 1)]
        per_action: usize,
        #[arg(long, default_value_t = 1)]
        max_choice: usize,
        #[arg(long)]
        out: PathBuf,
        /// Only write per-multiset counts.
        #[arg(long)]
        count: bool,
        /// Also write Graphviz files.
        #[arg(long)]
        dot: bool,
    },
    /// Train the baseline and filter candidates per cluster.
    Prune {
        #[command(flatten)]
        common: Common,
    },
    /// Search machine structures with the internal environment.
    Discover {
        #[command(flatten)]
        common: Common,
        /// Restrict to one cluster, written `height,holding`.
        #[arg(long, value_parser = parse_cluster)]
        cluster: Option<ClusterKey>,
        /// Override the number of internal episodes.
        #[arg(long)]
        episodes: Option<usize>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Assemble per-cluster machines into one solution.
    Combine {
        #[command(flatten)]
        common: Common,
    },
    /// Compare the combined solution with flat Q-learning on the test environment.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Emit tidy CSV of all evaluation curves.
    Plotdata {
        #[arg(long)]
        out: PathBuf,
        /// Destination file; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_cluster(s: &str) -> std::result::Result<ClusterKey, String> {
    let (h, hold) = s.split_once(',').ok_or("expected `height,holding`")?;
    Ok(ClusterKey::new(
        h.trim().parse().map_err(|_| format!("bad height `{h}`"))?,
        hold.trim().parse().map_err(|_| format!("bad holding flag `{hold}`"))?,
    ))
}

fn pipeline(common: &Common) -> Result<Pipeline> {
    Pipeline::new(ExperimentConfig::load(&common.config)?)
}

fn generate(params: &GenParams, out: &Path, count: bool, dot: bool) -> Result<()> {
    params.validate()?;
    let art = Artifacts::create(out)?;
    if count {
        let mut text = String::new();
        let mut total = 0;
        for (m, n) in count_by_multiset(params) {
            text.push_str(&format!("{n} {m}\n"));
            total += n;
        }
        text.push_str(&format!("total {total}\n"));
        art.write("counts.txt", &text)?;
        eprintln!("{total} machines");
        return Ok(());
    }
    let mut n = 0;
    for (i, g) in enumerate_machines(params).enumerate() {
        art.write(&format!("m{i:05}.ham"), &to_text(&g))?;
        if dot {
            art.write(&format!("m{i:05}.dot"), &to_dot(&g))?;
        }
        n += 1;
    }
    eprintln!("{n} machines written to {}", out.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Experiment(e.to_string()))?;
    }
    match cli.command {
        Command::Run { common, seeds } => {
            let mut config = ExperimentConfig::load(&common.config)?;
            if let Some(s) = seeds {
                config.experiment.seeds = s;
            }
            let outcome = Pipeline::new(config)?.run(&common.out)?;
            let r = &outcome.report;
            eprintln!(
                "median AUC ham {:.4} flat {:.4} ratio {:.3}",
                r.median_ham(),
                r.median_flat(),
                r.ratio()
            );
        }
        Command::Generate {
            max_vertices,
            actions,
            per_action,
            max_choice,
            out,
            count,
            dot,
        } => generate(
            &GenParams::new(max_vertices, &actions, per_action, max_choice),
            &out,
            count,
            dot,
        )?,
        Command::Prune { common } => {
            let p = pipeline(&common)?;
            let art = Artifacts::create(&common.out)?;
            let candidates = p.candidates();
            art.write_generated(&candidates)?;
            let baseline = p.baseline()?;
            art.write_baseline(&p.config, &baseline)?;
            let pruned = p.prune(&baseline, candidates);
            art.write_pruned(&pruned)?;
            let kept: usize = pruned.map.values().map(Vec::len).sum();
            eprintln!("{kept} applicable machines across {} clusters", pruned.map.len());
        }
        Command::Discover {
            common,
            cluster,
            episodes,
            seed,
        } => {
            let mut config = ExperimentConfig::load(&common.config)?;
            if let Some(e) = episodes {
                config.internal.search_episodes = e;
            }
            if let Some(s) = seed {
                config.experiment.master_seed = s;
            }
            let p = Pipeline::new(config)?;
            let art = Artifacts::create(&common.out)?;
            let pruned = art.read_pruned()?;
            let baseline = p.baseline()?;
            let clusters = match cluster {
                Some(c) => vec![c],
                None => p.clusters(),
            };
            let searches = p.discover(&baseline, &pruned, &clusters)?;
            art.write_searches(&searches)?;
            for (c, r) in &searches {
                eprintln!(
                    "{} best r_int {} ({})",
                    cluster_stem(*c),
                    r.best_r_int,
                    if r.is_standard { "standard" } else { "searched" }
                );
            }
        }
        Command::Combine { common } => {
            let p = pipeline(&common)?;
            let art = Artifacts::open(&common.out);
            let best = art.read_search_summary()?;
            let solution = p.combine(&best, art.read_normalization()?)?;
            art.write_combined(&solution)?;
        }
        Command::Eval {
            common,
            seeds,
            episodes,
        } => {
            let mut config = ExperimentConfig::load(&common.config)?;
            if let Some(s) = seeds {
                config.experiment.seeds = s;
            }
            if let Some(e) = episodes {
                config.eval.episodes = e;
            }
            let p = Pipeline::new(config)?;
            let art = Artifacts::open(&common.out);
            let solution = art.read_combined()?;
            let (ham, flat, report) = p.evaluate(&solution)?;
            art.write_curves(&ham, &flat)?;
            let text = hamforge::harness::summary_text(&report, &p.config, &art.read_normalization()?);
            art.write("summary.txt", &text)?;
            print!("{text}");
        }
        Command::Plotdata { out, output } => {
            let data = Artifacts::open(&out).plot_data()?;
            match output {
                Some(path) => std::fs::write(&path, data).map_err(|e| Error::io(&path, e))?,
                None => print!("{data}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

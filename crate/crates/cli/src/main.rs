use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use riskpath::bench::{
    export_exploration_grid, export_report, load_map_dir, run_bench, ReportFormat, Workload,
};
use riskpath::expert::{expert_heuristic, DatasetRecord};
use riskpath::expert::write_dataset;
use riskpath::nnheur::{ModelConfig, ModelWeights, NnModel};
use riskpath::riskmap::{
    enumerate_cases, gen_random_map, gen_windflow_map, load_map, save_cases, save_map,
    WindDirection, WindParams,
};
use riskpath::search::{write_trace, AsdAstar, SearchOutcome};
use riskpath::{Case, Coord, Error, HeuristicRegistry, Result};

#[derive(Parser, Debug)]
#[command(name = "riskpath", version, about = "Risk-constrained grid path planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MapKind {
    Random,
    Wind,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a risk map.
    Gen {
        #[arg(long, value_enum)]
        kind: MapKind,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5.0)]
        wind_speed: f64,
        #[arg(long, default_value_t = 10.0)]
        height: f64,
        #[arg(long, default_value_t = 6)]
        buildings: usize,
        /// +x, -x, +y or -y.
        #[arg(long, default_value = "+x", allow_hyphen_values = true)]
        wind_direction: WindDirection,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enumerate feasible test cases on a map.
    Cases {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1000)]
        limit: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one query and print the path.
    Solve {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        start: Coord,
        #[arg(long)]
        dest: Coord,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value = "manhattan")]
        heuristic: String,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Per-pop log: flat index, g, safety, f.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Per-cell pop counts in the map layout.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Export expert-heuristic training records for every map in a directory.
    Expert {
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
        /// Cases per map.
        #[arg(long, default_value_t = 100)]
        limit: usize,
    },
    /// Benchmark heuristics over a case set.
    Bench {
        #[arg(long)]
        maps: PathBuf,
        /// A case file (single map) or a directory of `<map>.csv` files.
        #[arg(long)]
        cases: PathBuf,
        /// Overrides the epsilon stored with each case.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, value_delimiter = ',', default_value = "manhattan,expert")]
        heuristics: Vec<String>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to csv for `.csv` outputs and text otherwise.
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Write randomly initialised ASDW weights.
    InitWeights {
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 32)]
        d_model: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long, default_value_t = 64)]
        d_ff: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Correctness(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn registry(weights: Option<&Path>) -> Result<HeuristicRegistry> {
    let model = weights.map(NnModel::load).transpose()?.map(Arc::new);
    Ok(HeuristicRegistry::with_builtins(model))
}

fn map_id(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("map")
        .to_string()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen {
            kind,
            size,
            seed,
            wind_speed,
            height,
            buildings,
            wind_direction,
            out,
        } => {
            let map = match kind {
                MapKind::Random => gen_random_map(size, seed)?,
                MapKind::Wind => gen_windflow_map(
                    size,
                    &WindParams {
                        building_count: buildings,
                        wind_direction,
                        wind_speed,
                        assess_height: height,
                        seed,
                    },
                )?,
            };
            save_map(&map, &out)
        }
        Command::Cases {
            map,
            epsilon,
            limit,
            out,
        } => {
            let id = map_id(&map);
            let m = load_map(&map)?;
            let cases = enumerate_cases(&m, &id, epsilon, limit)?;
            save_cases(&cases, &out)?;
            println!("{} cases", cases.len());
            Ok(())
        }
        Command::Solve {
            map,
            start,
            dest,
            epsilon,
            heuristic,
            weights,
            trace,
            grid,
        } => {
            let m = load_map(&map)?;
            let case = Case::new(map_id(&map), start, dest, epsilon)?;
            case.check_on(&m)?;
            let strategy = registry(weights.as_deref())?.get(&heuristic)?;
            let h = strategy.prepare(&m, &case)?;
            let mut search = AsdAstar::new(&m, &case, h.as_ref())?;
            if trace.is_some() || grid.is_some() {
                search = search.with_trace();
            }
            let outcome = search.run();
            let log = search.take_trace().unwrap_or_default();
            if let Some(p) = &trace {
                write_trace(&log, p)?;
            }
            if let Some(p) = &grid {
                let path = outcome.path_result().map(|r| r.path.as_slice());
                export_exploration_grid(&log, &m, &case, path, p)?;
            }
            match outcome {
                SearchOutcome::Found(r) => {
                    println!("length {}", r.length);
                    println!("safety {}", r.safety);
                    println!("nodes {}", r.nodes_explored);
                    let cells: Vec<String> = r.path.iter().map(Coord::to_string).collect();
                    println!("path {}", cells.join(" "));
                }
                SearchOutcome::Infeasible { nodes_explored, .. } => {
                    println!("infeasible");
                    println!("nodes {nodes_explored}");
                }
            }
            Ok(())
        }
        Command::Expert {
            maps,
            epsilon,
            out,
            limit,
        } => {
            let maps = load_map_dir(&maps)?;
            let mut records = Vec::new();
            for (id, m) in &maps {
                for case in enumerate_cases(m, id, epsilon, limit)? {
                    let table = expert_heuristic(m, &case)?;
                    records.push(DatasetRecord::new(m, &case, &table)?);
                }
            }
            write_dataset(&records, &out)?;
            println!("{} records", records.len());
            Ok(())
        }
        Command::Bench {
            maps,
            cases,
            epsilon,
            heuristics,
            weights,
            jobs,
            out,
            format,
        } => {
            let mut workload = Workload::load(&maps, &cases)?;
            if let Some(eps) = epsilon {
                for c in &mut workload.cases {
                    *c = Case::new(c.map_id.clone(), c.start, c.dest, eps)?;
                }
            }
            let strategies = registry(weights.as_deref())?.select(&heuristics)?;
            let run = run_bench(&workload, &strategies, jobs)?;
            let format = match format {
                Some(FormatArg::Csv) => ReportFormat::Csv,
                Some(FormatArg::Text) => ReportFormat::Text,
                None if out.extension().is_some_and(|e| e == "csv") => ReportFormat::Csv,
                None => ReportFormat::Text,
            };
            export_report(&run.report, &out, format)?;
            print!("{}", run.report.to_text());
            Ok(())
        }
        Command::InitWeights {
            size,
            d_model,
            heads,
            d_ff,
            seed,
            out,
        } => {
            let config = ModelConfig::new(size * size, d_model, heads, d_ff)?;
            ModelWeights::random(&config, seed).save(&out)?;
            Ok(())
        }
    }
}

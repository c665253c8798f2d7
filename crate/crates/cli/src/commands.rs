//! Subcommand implementations.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use timely_core::baselines::{confident_flag, knn_edit, knn_flag, FlagResult, NeighborMode};
use timely_core::eval::{run_benchmark, write_rows_csv, BenchConfig, Method};
use timely_core::io::{self, CellSchema, OrderedFile};
use timely_core::markov::FitOptions;
use timely_core::params::{start_probabilities, uniform_emission};
use timely_core::pipeline::{infer, order_cells, run_pipeline, OrderConfig, PipelineConfig};
use timely_core::simulate::{generate, SimConfig};
use timely_core::{CellRecord, ConsistencyReport, LineageTopology};

use crate::args::{
    BaselineArgs, BenchArgs, Cli, Command, InferArgs, ModelArgs, OrderArgs, OrderingArgs, PipelineArgs, ServeArgs,
    SimulateArgs, TopologyArg,
};
use crate::service::{router, AppState, ReviewData};
use crate::session::SessionLog;

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Simulate(a) => simulate(a, seed),
        Command::Order(a) => order(a, seed),
        Command::Infer(a) => infer_cmd(a),
        Command::Baseline(a) => baseline(a, seed),
        Command::Bench(a) => bench(a, seed),
        Command::Pipeline(a) => pipeline(a, seed),
        Command::Serve(a) => serve(a),
    }
}

fn topology(arg: &TopologyArg) -> Result<LineageTopology> {
    match &arg.topology {
        Some(p) => io::load_topology(p).with_context(|| format!("loading topology {}", p.display())),
        None => Ok(LineageTopology::granulopoiesis()),
    }
}

fn load_cells(path: &Path, topo: &LineageTopology) -> Result<Vec<CellRecord>> {
    let cells = io::load_cells(path, &CellSchema::default(), topo)
        .with_context(|| format!("loading cells {}", path.display()))?;
    log::info!("loaded {} cells from {}", cells.len(), path.display());
    Ok(cells)
}

fn order_config(a: &OrderingArgs, seed: u64) -> OrderConfig {
    OrderConfig {
        method: a.method,
        embed: a.embed,
        dim: a.dim,
        n_clusters: a.clusters,
        bandwidth: a.bandwidth,
        seed,
    }
}

/// Emission matrix, start probabilities and fit options from the flags.
fn model(a: &ModelArgs, topo: &LineageTopology) -> Result<(Vec<Vec<f64>>, Vec<f64>, FitOptions)> {
    let emission = match &a.emission {
        Some(p) => io::load_emission(p).with_context(|| format!("loading emission matrix {}", p.display()))?,
        None => uniform_emission(topo.n_states(), a.accuracy),
    };
    let pi = match &a.pi {
        Some(p) => io::load_pi(p).with_context(|| format!("loading start probabilities {}", p.display()))?,
        None => start_probabilities(topo, a.pi_root_mass)?,
    };
    let fit = FitOptions {
        max_iter: a.max_iter,
        tol: a.tol,
        reestimate_emission: a.reestimate_emission,
    };
    Ok((emission, pi, fit))
}

fn summarize(report: &ConsistencyReport) {
    println!(
        "flagged {} of {} cells; {} borders; log-likelihood {:.4} after {} iterations",
        report.flagged_ids().len(),
        report.cells.len(),
        report.borders.len(),
        report.log_likelihood,
        report.iterations.len().saturating_sub(1)
    );
}

fn simulate(a: SimulateArgs, seed: u64) -> Result<()> {
    let data = generate(&SimConfig {
        n: a.n,
        k: a.k,
        d: a.d,
        noise_level: a.noise,
        seed,
        minor_sd: a.minor_sd,
    })?;
    io::save_cells(&a.out, &data.cells).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(p) = &a.truth {
        io::save_truth(p, &data.ids(), &data.ground_truth, &data.noisy_mask)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.topology_out {
        let names: Vec<String> = (1..=a.k).map(|i| format!("S{i}")).collect();
        let json = io::topology_to_json(&LineageTopology::chain(&names)?);
        std::fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    println!(
        "wrote {} cells ({} flipped labels) to {}",
        data.cells.len(),
        data.noisy_mask.iter().filter(|f| **f).count(),
        a.out.display()
    );
    Ok(())
}

fn order(a: OrderArgs, seed: u64) -> Result<()> {
    let topo = topology(&a.topology)?;
    let cells = load_cells(&a.cells, &topo)?;
    let ordering = order_cells(&cells, &topo, &order_config(&a.ordering, seed))?;
    io::write_json(&a.out, &OrderedFile::from(&ordering.ordered))
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "ordered {} cells on {} branch(es) into {}",
        ordering.ordered.len(),
        ordering.ordered.branches().len(),
        a.out.display()
    );
    Ok(())
}

fn infer_cmd(a: InferArgs) -> Result<()> {
    let topo = topology(&a.topology)?;
    let file: OrderedFile = io::read_json(&a.ordered).with_context(|| format!("loading {}", a.ordered.display()))?;
    let ordered = file.into_dataset(&topo)?;
    let (emission, pi, fit) = model(&a.model, &topo)?;
    let report = infer(&ordered, &topo, emission, pi, &fit)?;
    io::save_report(&a.out, &report).with_context(|| format!("writing {}", a.out.display()))?;
    summarize(&report);
    Ok(())
}

fn pipeline(a: PipelineArgs, seed: u64) -> Result<()> {
    let topo = topology(&a.topology)?;
    let cells = load_cells(&a.cells, &topo)?;
    let (emission, pi, fit) = model(&a.model, &topo)?;
    let config = PipelineConfig {
        order: order_config(&a.ordering, seed),
        fit,
    };
    let (report, ordering) = run_pipeline(&cells, &topo, emission, pi, &config)?;
    io::save_report(&a.out, &report).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(p) = &a.ordered_out {
        io::write_json(p, &OrderedFile::from(&ordering.ordered)).with_context(|| format!("writing {}", p.display()))?;
    }
    summarize(&report);
    Ok(())
}

#[derive(Serialize)]
struct BaselineCell<'a> {
    id: &'a str,
    observed_label: usize,
    flagged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    proposed_label: Option<usize>,
}

#[derive(Serialize)]
struct BaselineOutput<'a> {
    method: &'a str,
    hyperparams: &'a std::collections::BTreeMap<String, f64>,
    n_flagged: usize,
    cells: Vec<BaselineCell<'a>>,
}

fn baseline(a: BaselineArgs, seed: u64) -> Result<()> {
    let topo = topology(&a.topology)?;
    let cells = load_cells(&a.cells, &topo)?;
    let features: Vec<Vec<f64>> = cells.iter().map(|c| c.features.clone()).collect();
    let labels: Vec<usize> = cells.iter().map(|c| c.observed_label).collect();
    let result: FlagResult = match a.method {
        Method::Knn => knn_flag(&features, &labels, a.k, NeighborMode::Nn)?,
        Method::Kncn => knn_flag(&features, &labels, a.k, NeighborMode::Ncn)?,
        Method::KnnEdit => knn_edit(&features, &labels, a.k, a.k_prime, NeighborMode::Nn)?,
        Method::KncnEdit => knn_edit(&features, &labels, a.k, a.k_prime, NeighborMode::Ncn)?,
        Method::Confident => confident_flag(&features, &labels, topo.n_states(), a.folds, seed)?,
        Method::Timely => anyhow::bail!("timely is not a baseline; use the pipeline subcommand"),
    };
    let out = BaselineOutput {
        method: &result.method,
        hyperparams: &result.hyperparams,
        n_flagged: result.n_flagged(),
        cells: cells
            .iter()
            .enumerate()
            .map(|(i, c)| BaselineCell {
                id: &c.id,
                observed_label: c.observed_label + 1,
                flagged: result.flagged[i],
                proposed_label: result.proposed_label.as_ref().map(|p| p[i] + 1),
            })
            .collect(),
    };
    io::write_json(&a.out, &out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}: flagged {} of {} cells", result.method, out.n_flagged, cells.len());
    Ok(())
}

fn bench(a: BenchArgs, seed: u64) -> Result<()> {
    let config = BenchConfig {
        noise_levels: a.noise,
        seeds: (seed..seed + a.seeds).collect(),
        methods: if a.methods.is_empty() { Method::ALL.to_vec() } else { a.methods },
        sim: SimConfig {
            n: a.n,
            k: a.k,
            d: a.d,
            ..SimConfig::default()
        },
        ..BenchConfig::default()
    };
    let report = run_benchmark(&config)?;
    for row in report.rows.iter().filter(|r| r.failed > 0) {
        log::warn!("{} at noise {}: {} run(s) failed", row.method, row.noise_level, row.failed);
    }
    match &a.out {
        Some(p) => {
            let f = std::fs::File::create(p).with_context(|| format!("writing {}", p.display()))?;
            write_rows_csv(f, &report.rows)?;
        }
        None => {
            let stdout = std::io::stdout();
            write_rows_csv(stdout.lock(), &report.rows)?;
        }
    }
    if let Some(p) = &a.json {
        io::write_json(p, &report).with_context(|| format!("writing {}", p.display()))?;
    }
    eprintln!("benchmark finished in {:.1} s", report.elapsed_secs);
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let topo = topology(&a.topology)?;
    let report = io::load_report(&a.report).with_context(|| format!("loading report {}", a.report.display()))?;
    let cells = a.cells.as_deref().map(|p| load_cells(p, &topo)).transpose()?;
    let data = ReviewData::new(report, cells, topo)?;
    let name = match &a.session {
        Some(s) => s.clone(),
        None => a
            .report
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "session".into()),
    };
    let session = SessionLog::open(a.session_dir.join(format!("{name}.jsonl")))?;
    let state = AppState::new(data, session);
    let app = router(state, a.ui_dir.clone());
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .with_context(|| format!("binding {}:{}", a.host, a.port))?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        std::io::stdout().flush()?;
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
                log::info!("shutting down");
            })
            .await?;
        Ok(())
    })
}

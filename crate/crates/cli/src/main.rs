use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use iga_contact::mesh::gauss_rule;
use iga_contact::post::{
    converge_study, facet_compare, final_stress_field, penalty_sweep, summary, write_contact_pairs, write_converge,
    write_history, write_penalty, write_stress_field, SampleGrid,
};
use iga_contact::validate::run_all;
use iga_contact::{run_load_steps, SceneConfig};

#[derive(Parser)]
#[command(name = "iga-contact", version, about = "Isogeometric tube-sheath penalty contact solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scene file (TOML); the built-in reference scene when omitted.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Output directory; overrides the scene file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of load steps, keeping the increment.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the load steps of one scene.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Mesh refinement study.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Knots inserted per parametric direction, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [0usize, 2, 4, 6, 8, 10, 14, 18, 20])]
        insertions: Vec<usize>,
    },
    /// Penalty factor study.
    PenaltySweep {
        #[command(flatten)]
        common: Common,
        /// Penalty factors (N/m^2), comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [1e9, 1e10, 1e11, 1e12, 1e13, 1e14, 1e15])]
        epsilons: Vec<f64>,
    },
    /// Exact NURBS edge versus a faceted master boundary.
    FacetCompare {
        #[command(flatten)]
        common: Common,
        /// Facets on the master contact edge.
        #[arg(long, default_value_t = 16)]
        segments: usize,
    },
    /// Run the invariant suite.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<(SceneConfig, PathBuf)> {
    let mut cfg = match &common.scene {
        Some(p) => SceneConfig::from_path(p).with_context(|| format!("reading scene {}", p.display()))?,
        None => SceneConfig::default(),
    };
    if let Some(n) = common.steps {
        anyhow::ensure!(n > 0, "--steps must be at least 1");
        cfg = cfg.with_steps(n);
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output.clone());
    Ok((cfg, out))
}

fn prepare(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(common: &Common) -> Result<bool> {
    let (cfg, out) = load(common)?;
    prepare(&out)?;
    let start = Instant::now();
    let history = run_load_steps(cfg.scene()?)?;
    let elapsed = start.elapsed();
    let rule = gauss_rule(cfg.quadrature)?;
    write_history(&out.join("history.csv"), &history)?;
    write_contact_pairs(&out.join("contact_pairs.csv"), &history.last().pairs, cfg.contact.penalty)?;
    write_stress_field(&out.join("stress_field.csv"), &final_stress_field(&history, &rule, SampleGrid::Gauss)?)?;
    let text = summary(&history, cfg.contact.penalty);
    fs::write(out.join("summary.txt"), &text)?;
    print!("{text}");
    println!("wall_time_s          {:.3}", elapsed.as_secs_f64());
    Ok(true)
}

fn converge(common: &Common, insertions: &[usize]) -> Result<bool> {
    let (cfg, out) = load(common)?;
    prepare(&out)?;
    let rows = converge_study(&cfg, insertions)?;
    write_converge(&out.join("converge.csv"), &rows)?;
    println!("{:>8} {:>8} {:>6} {:>14}", "inserted", "elements", "dofs", "sigma_ymax_Pa");
    for r in &rows {
        println!("{:>8} {:>8} {:>6} {:>14.4e}", r.insertions, r.elements, r.dofs, r.sigma_ymax);
    }
    Ok(true)
}

fn sweep(common: &Common, epsilons: &[f64]) -> Result<bool> {
    let (cfg, out) = load(common)?;
    prepare(&out)?;
    let rows = penalty_sweep(&cfg, epsilons);
    write_penalty(&out.join("penalty.csv"), &rows)?;
    println!("{:>10} {:>14} {:>14} {:>14}", "penalty", "force_N_per_m", "penetration_m", "sigma_max_Pa");
    for r in &rows {
        match &r.error {
            None => println!(
                "{:>10.1e} {:>14.6e} {:>14.6e} {:>14.6e}",
                r.penalty, r.contact_force, r.max_penetration, r.sigma_max
            ),
            Some(e) => println!("{:>10.1e} failed: {e}", r.penalty),
        }
    }
    Ok(rows.iter().all(|r| r.error.is_none()))
}

fn facets(common: &Common, segments: usize) -> Result<bool> {
    let (cfg, out) = load(common)?;
    prepare(&out)?;
    let cmp = facet_compare(&cfg, segments)?;
    let m = &cmp.metrics;
    let (e, f) = (cmp.exact.last(), cmp.faceted.last());
    let mut text = String::new();
    text.push_str(&format!("segments                   {}\n", m.segments));
    text.push_str(&format!("facet_junction_jump_rad    {:e} .. {:e}\n", m.min_junction_jump, m.max_junction_jump));
    text.push_str(&format!("exact_knot_jump_rad        {:e}\n", m.exact_knot_jump));
    text.push_str(&format!("facet_gap_error_m          {:e}\n", m.max_gap_error));
    text.push_str(&format!("sagitta_bound_m            {:e}\n", m.sagitta_bound));
    text.push_str(&format!("exact_force_N_per_m        {:e}\n", e.contact_force));
    text.push_str(&format!("faceted_force_N_per_m      {:e}\n", f.contact_force));
    text.push_str(&format!("exact_sigma_ymax_Pa        {:e}\n", e.sigma_ymax));
    text.push_str(&format!("faceted_sigma_ymax_Pa      {:e}\n", f.sigma_ymax));
    text.push_str(&format!("exact_active_pairs         {}\n", e.active_pairs));
    text.push_str(&format!("faceted_active_pairs       {}\n", f.active_pairs));
    fs::write(out.join("facet_compare.txt"), &text)?;
    print!("{text}");
    Ok(true)
}

fn validate(common: &Common) -> Result<bool> {
    let (cfg, _) = load(common)?;
    let checks = run_all(&cfg);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common } => run(common),
        Command::Converge { common, insertions } => converge(common, insertions),
        Command::PenaltySweep { common, epsilons } => sweep(common, epsilons),
        Command::FacetCompare { common, segments } => facets(common, *segments),
        Command::Validate { common } => validate(common),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
